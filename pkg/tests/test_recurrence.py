import random
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from nsseries.datasets import random_dataset
from nsseries.recurrence import (BoundaryData, BoundarySliceRequired, DependencyOrderError, FlowConfig,
                                 IncompleteBoundaryError, SeriesSolution, continuity_coeff, divergence_check,
                                 march, momentum_coeff, momentum_value, momentum_value_direct, pressure_coeff,
                                 residual, x_alpha)
from nsseries.series import EXACT, FLOAT, Caps, CoefficientField, MultiIndex

T, X, Y, Z = sp.symbols("t x y z")
GENS = (T, X, Y, Z)
AXIS = {1: X, 0: Y, 2: Z}


def zero_boundary(caps, mode=EXACT):
    empty = tuple(CoefficientField({}, caps, mode) for _ in range(3))
    return BoundaryData(empty, empty, CoefficientField({}, caps, mode))


def to_poly(fld):
    data = {tuple(k): sp.Rational(v.numerator, v.denominator) for k, v in fld.items()}
    return sp.Poly.from_dict(data or {(0, 0, 0, 0): 0}, *GENS, domain=sp.QQ)


def momentum_residuals(sol, g=None):
    """Momentum residuals without the pressure gradient, as exact polynomials."""
    u = {a: to_poly(sol.u[a]) for a in (0, 1, 2)}
    nu = sp.Rational(sol.config.nu.numerator, sol.config.nu.denominator)
    out = {}
    for a in (0, 1, 2):
        adv = sum((u[b] * u[a].diff(AXIS[b]) for b in (0, 1, 2)), to_poly({}))
        lap = u[a].diff((X, 2)) + u[a].diff((Y, 2)) + u[a].diff((Z, 2))
        out[a] = u[a].diff(T) + adv - lap * nu
        if g is not None:
            out[a] -= to_poly(g[a])
    return out


def test_x_alpha():
    assert [x_alpha(a, (0, 3, 5, 7)) for a in (0, 1, 2)] == [5, 3, 7]


def test_continuity_example():
    caps = Caps.uniform(0, 2)
    u1 = CoefficientField({(0, 1, 0, 0): 2}, caps)
    u2 = CoefficientField({(0, 0, 0, 1): 3}, caps)
    assert continuity_coeff(u1, u2, (0, 0, 1, 0)) == -5
    assert continuity_coeff(CoefficientField({}, caps), CoefficientField({}, caps), (0, 0, 1, 0)) == 0
    with pytest.raises(BoundarySliceRequired):
        continuity_coeff(u1, u2, (0, 0, 0, 0))


def test_zero_data_gives_zero_solution():
    caps = Caps.cone(2, 8, 2)
    sol = march(zero_boundary(caps), FlowConfig(Fraction(1, 3)), caps)
    assert all(len(f) == 0 for f in sol.fields().values())
    assert divergence_check(sol) == []
    assert all(v == 0 for v in residual(sol, [(0.1, 0.2, 0.3, 0.4)]).values())


def test_single_forcing_term():
    caps = Caps.cone(2, 8, 2)
    c = Fraction(5, 7)
    g = (CoefficientField({}, caps), CoefficientField({}, caps), CoefficientField({(0, 0, 2, 0): c}, caps))
    sol = march(zero_boundary(caps), FlowConfig(Fraction(1, 2), Fraction(1), g), caps)
    assert momentum_value(lambda *a: 0, lambda a, *i: sol.config.g[a][i], Fraction(1, 2), 2, 1, 0, 2, 0) == c


def test_pressure_single_forcing_term():
    caps = Caps.cone(1, 8, 2)
    G = Fraction(3, 4)
    density = Fraction(2)
    g = (CoefficientField({}, caps), CoefficientField({(0, 0, 1, 1): G}, caps), CoefficientField({}, caps))
    sol = march(zero_boundary(caps), FlowConfig(Fraction(1, 2), density, g), caps)
    assert pressure_coeff(sol, (0, 1, 1, 1)) == density * G
    bare = march(zero_boundary(caps), FlowConfig(Fraction(1, 2), density), caps)
    assert pressure_coeff(bare, (0, 1, 1, 1)) == 0
    with pytest.raises(BoundarySliceRequired):
        pressure_coeff(sol, (0, 0, 1, 1))


def test_incomplete_boundary_lists_missing():
    caps = Caps.cone(1, 6, 2)
    small = Caps.cone(0, 2, 2)
    partial = tuple(CoefficientField({}, small) for _ in range(3))
    with pytest.raises(IncompleteBoundaryError) as info:
        march(BoundaryData(partial, partial, None), FlowConfig(Fraction(1)), caps)
    assert ("u1", MultiIndex(0, 3, 0, 0)) in info.value.missing


def test_dependency_order_error():
    caps = Caps.cone(1, 8, 2)
    boundary, config = random_dataset(1, caps)
    sol = march(boundary, config, caps)
    with pytest.raises(DependencyOrderError):
        momentum_coeff(1, (1, 2, 2, 2), sol, boundary, computed={1: set(), 2: set(), 0: set()})
    assert momentum_coeff(1, (1, 2, 2, 2), sol) == sol.u[1][(1, 2, 2, 2)]
    with pytest.raises(BoundarySliceRequired):
        momentum_coeff(1, (1, 2, 1, 2), sol)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_two_momentum_transcriptions_agree(seed):
    caps = Caps.cone(2, 12, 2)
    boundary, config = random_dataset(seed, caps, density=0.5)
    sol = march(boundary, config, caps, with_pressure=False)
    u = lambda a, w, p, q, r: sol.u[a][(w, p, q, r)] if min(w, p, q, r) >= 0 else 1
    g = lambda a, w, p, q, r: config.g[a][(w, p, q, r)] if min(w, p, q, r) >= 0 else 0
    for idx in caps.indices():
        if idx.omega >= 1 and min(idx.p, idx.q, idx.r) >= 2:
            for a in (1, 2):
                assert momentum_value(u, g, config.nu, a, *idx) == momentum_value_direct(u, g, config.nu, a, *idx)


@pytest.mark.parametrize("seed", [3, 11])
def test_march_satisfies_pressure_free_momentum(seed):
    """Independent oracle: substitute the series into the PDE with sympy.

    Cross-differentiating the momentum equations removes the pressure; the
    resulting coefficient that each marched entry was solved from must vanish.
    """
    caps = Caps.cone(2, 12, 2)
    boundary, config = random_dataset(seed, caps, density=0.5)
    sol = march(boundary, config, caps)
    m = momentum_residuals(sol, config.g)
    curls = {1: (m[1].diff(Y) - m[0].diff(X)).as_dict(), 2: (m[2].diff(Y) - m[0].diff(Z)).as_dict()}
    targets = [i for i in caps.indices() if i.omega >= 1 and min(i.p, i.q, i.r) >= 2]
    assert len(targets) > 40
    for idx in targets:
        for a in (1, 2):
            assert sol.is_clean(f"u{a}", idx)
            assert curls[a].get((idx.omega - 1, idx.p, idx.q - 1, idx.r), 0) == 0, (a, idx)


def test_inviscid_single_mode():
    caps = Caps.cone(1, 9, 2)
    init = (CoefficientField({}, caps), CoefficientField({(0, 1, 2, 2): 1}, caps), CoefficientField({}, caps))
    empty = tuple(CoefficientField({}, caps) for _ in range(3))
    sol = march(BoundaryData(init, empty, None), FlowConfig(Fraction(0)), caps, with_pressure=False)
    m = momentum_residuals(sol)
    curl = (m[1].diff(Y) - m[0].diff(X)).as_dict()
    hits = 0
    for idx in caps.indices(1):
        if min(idx.p, idx.q, idx.r) >= 2:
            assert curl.get((0, idx.p, idx.q - 1, idx.r), 0) == 0
            hits += 1
    assert hits > 0


def test_pressure_matches_x_momentum():
    caps = Caps.cone(2, 10, 2)
    boundary, config = random_dataset(5, caps, density=0.5)
    sol = march(boundary, config, caps)
    mx = momentum_residuals(sol, config.g)[1]
    grad = to_poly(sol.P).diff(X)
    rho = sp.Rational(config.density.numerator, config.density.denominator)
    full = (mx + grad * (1 / rho)).as_dict()
    checked = 0
    for idx in caps.indices():
        if min(idx.p, idx.q, idx.r) >= 1 and sol.is_clean("P", idx):
            assert full.get((idx.omega, idx.p - 1, idx.q, idx.r), 0) == 0, idx
            checked += 1
    assert checked > 10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_divergence_free_for_any_data(seed):
    caps = Caps.cone(2, 9, 2)
    boundary, config = random_dataset(seed, caps, density=0.4)
    assert divergence_check(march(boundary, config, caps, with_pressure=False)) == []


def test_divergence_check_finds_corruption():
    caps = Caps.cone(1, 10, 2)
    boundary, config = random_dataset(2, caps)
    sol = march(boundary, config, caps, with_pressure=False)
    target = MultiIndex(1, 2, 3, 2)
    entries = dict(sol.u[0].entries)
    entries[target] = entries.get(target, 0) + 1
    broken = SeriesSolution({**sol.u, 0: CoefficientField(entries, caps)}, sol.P, sol.config, caps,
                            sol.contamination)
    assert divergence_check(broken) == [MultiIndex(1, 2, 2, 2)]


def test_march_is_order_independent():
    caps = Caps.cone(2, 9, 2)
    boundary, config = random_dataset(8, caps)
    shuffled = []
    rng = random.Random(0)
    for group in (boundary.init, boundary.velocity):
        parts = []
        for fld in group:
            items = list(fld.items())
            rng.shuffle(items)
            parts.append(CoefficientField(dict(items), fld.caps))
        shuffled.append(tuple(parts))
    first = march(boundary, config, caps)
    second = march(BoundaryData(shuffled[0], shuffled[1], boundary.pressure), config, caps)
    assert first.fields() == second.fields()


def test_float_mode_tracks_exact():
    caps = Caps.cone(2, 9, 2)
    boundary, config = random_dataset(4, caps)
    exact = march(boundary, config, caps)
    fb, fc = random_dataset(4, caps, mode=FLOAT)
    approx = march(fb, fc, caps)
    for name, fld in exact.fields().items():
        assert fld.to_mode(FLOAT).equals(approx.fields()[name], tol=1e-9)
