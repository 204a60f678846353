from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nsseries import compaction as cp
from nsseries.compaction import CoefficientSource, Node
from nsseries.datasets import random_dataset
from nsseries.recurrence import FlowConfig, march
from nsseries.series import FLOAT, Caps


@pytest.fixture(scope="module")
def solved():
    caps = Caps.cone(2, 15, 2)
    boundary, config = random_dataset(21, caps, density=0.5)
    return march(boundary, config, caps, with_pressure=False)


def test_primitives():
    assert cp.remainder(7, 3) == 1
    assert cp.remainder(-7, 3) == 2
    assert cp.parity_weight(4) == 2 and cp.parity_weight(5) == 1
    assert cp.floor_nonneg(Fraction(-3, 8)) == 0
    assert cp.floor_div(Fraction(-3, 8)) == -1
    assert cp.heaviside(0) == 1 and cp.heaviside(-1) == 0
    assert cp.kronecker(2, 2) == 1 and cp.kronecker(2, 3) == 0
    assert [cp.tree_depth(m) for m in range(7)] == [0, 1, 1, 2, 2, 2, 2]


def test_selectors():
    assert cp.xi(0, 3, 4, 1, 1) == -1
    assert cp.delta(0, 4) == -1
    assert cp.epsilon(0, 4, 3, 1, 1) == -1
    assert cp.delta(2, 6) == 8
    assert cp.kappa(3, 1) == 0 and cp.kappa(3, 2) == 0
    assert cp.kappa(4, 1) == 2 and cp.kappa(4, 2) == 1
    with pytest.raises(cp.DomainError):
        cp.xi(9, 3, 4, 1, 1)


@given(st.integers(2, 12), st.integers(1, 5), st.sampled_from((0, 1)))
def test_s2_row_for_a_equal_one(q, n, b):
    assert cp.s2(q, 1, n, b) == q - 1 - 2 * n + b


@given(st.integers(2, 12), st.integers(1, 5), st.integers(1, 5), st.sampled_from((0, 1)))
def test_sign_binomial_diagonal(q, n, m, b):
    if n != m:
        assert cp.sign_binomial(q, 0, n, m, b) == 0


def test_decoder_examples():
    assert cp.decode_chi(1) == (1, 1)
    assert cp.decode_chi(8) == (1, 8)
    assert cp.decode_chi(9) == (2, 1)
    assert [(cp.triangle_row(g), cp.triangle_col(g)) for g in (1, 2, 3)] == [(1, 1), (2, 1), (2, 2)]


def test_viscous_factor_vanishes_below_q4():
    assert cp.viscous_constant(4, 1, 3, 2, 3, 1, 1) == 0
    assert cp.viscous_constant(4, 1, 3, 4, 3, 1, 1) != 0
    with pytest.raises(cp.DomainError):
        cp.viscous_constant(1, 0, 3, 4, 3, 1, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(2, 8), st.sampled_from((1, 2)))
def test_sigma_polynomial_equals_sum(p, q, r, alpha):
    assert cp.sigma_polynomial(p, q, r, alpha) == cp.sigma_sum(p, q, r, alpha) == cp.sigma(p, q, r, alpha)


def test_unified_functions_on_special_nodes():
    # negative index: sentinel child and unit weight
    assert cp.t_child(1, -1, 3, 3, 1, 0) == Node(-1, -1, -1, -1, 1)
    assert cp.static_weight(1, -1, 3, 3, 1, 0) == 1
    # slab index: the node is its own first factor
    assert cp.t_child(2, 1, 4, 3, 2, 0) == Node(2, 1, 4, 3, 2)
    assert cp.z_child(2, 1, 4, 3, 2, 0) == Node(-1, -1, -1, -1, 2)


def test_zero_data_gives_zero():
    src = CoefficientSource(lambda *a: Fraction(0), None, Fraction(1, 3))
    assert cp.step3_coeff(src, 1, 2, 3, 2, 1) == 0
    assert cp.step1_coeff(src, 1, 2, 3, 2, 2) == 0
    assert cp.verify_compaction_identities(src, omegas=(1,)) == []


def test_compacted_forms_match_march(solved):
    src = CoefficientSource.from_solution(solved)
    for idx in solved.caps.indices():
        if idx.omega >= 1 and min(idx.p, idx.q, idx.r) >= 2 and idx.p + idx.q + idx.r <= 8:
            for a in (1, 2):
                assert cp.step1_coeff(src, *idx, a) == solved.u[a][idx]
                assert cp.step3_coeff(src, *idx, a) == solved.u[a][idx]
            assert cp.step3_coeff(src, *idx, 0) == solved.u[0][idx]


def test_y_velocity_at_q2_reproduces_continuity(solved):
    src = CoefficientSource.from_solution(solved)
    for w, p, r in [(1, 2, 2), (1, 3, 4), (2, 2, 3)]:
        want = (-Fraction(p + 1, 2) * solved.u[1][(w, p + 1, 1, r)]
                - Fraction(r + 1, 2) * solved.u[2][(w, p, 1, r + 1)])
        assert cp.step3_coeff(src, w, p, 2, r, 0) == want


def test_identities_hold_on_random_data(solved):
    src = CoefficientSource.from_solution(solved)
    assert cp.verify_compaction_identities(src, omegas=(1, 2), ps=range(2, 4), qs=range(4, 6), rs=range(2, 4)) == []


def _hashed_lookup(salt):
    # arbitrary rational data with no relation to any solution
    def lookup(a, w, p, q, r):
        h = hash((salt, a, w, p, q, r)) % 7
        return Fraction(h - 3, 1 + h % 3)
    return lookup


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10 ** 6), st.fractions(0, 2, max_denominator=5))
def test_identities_are_algebraic(salt, nu):
    """The recursions in q hold for any coefficient data, not only for solutions."""
    src = CoefficientSource(_hashed_lookup(salt), _hashed_lookup(salt + 1), nu)
    assert cp.verify_compaction_identities(src, omegas=(1,), ps=(2, 3), qs=(4, 5), rs=(2,)) == []


def test_float_mode_agrees(solved):
    exact = CoefficientSource.from_solution(solved)
    approx = CoefficientSource(lambda *a: float(exact.velocity(*a)), lambda *a: float(exact.forcing(*a)),
                               float(exact.nu), FLOAT)
    for a in (1, 2):
        assert abs(cp.step3_coeff(approx, 2, 2, 3, 2, a) - float(cp.step3_coeff(exact, 2, 2, 3, 2, a))) < 1e-9
