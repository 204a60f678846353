from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nsseries import compaction as cp
from nsseries.closed_form import (BudgetExceeded, CacheIntegrityError, IndexRangeError, LeafPropertyError, MemoCache,
                                  NestedEvaluator, Tower, TowerBudget, cache_load, cache_persist, closed_form_coeff,
                                  slab_source, split_relation_violations)
from nsseries.compaction import Node
from nsseries.datasets import random_dataset
from nsseries.recurrence import march
from nsseries.series import Caps
from nsseries.verification import base_case_violations, theta_decode_violations


@pytest.fixture(scope="module")
def solved():
    caps = Caps.cone(2, 13, 2)
    boundary, config = random_dataset(7, caps, density=0.4)
    return march(boundary, config, caps, with_pressure=False)


def test_eta_cases():
    tower = Tower()
    assert tower.eta(1, 3, 3, 1, 2, 0) == 0                  # slab node
    assert tower.eta(-1, 3, 3, 1, 2, 0) == 0                 # negative index
    assert tower.eta(2, 2, 3, 0, 1, 0) == 1                  # y-velocity at q = 2
    assert tower.eta(2, 3, 2, 1, 2, 0) == cp.term_count(2, 3, 2, 1, 2)
    with pytest.raises(IndexRangeError):
        tower.eta(2, 3, 2, 1, 2, -1)


def test_eta_counts_the_flat_sum():
    tower = Tower()
    root = Node(2, 2, 3, 2, 1)
    expected = 0
    for k in range(tower.term_count(root) + 1):
        t = tower.first_child(root, k)
        z = tower.second_child(root, k)
        expected += (tower.term_count(t) + 1) * (tower.term_count(z) + 1)
    assert tower.flat_count(root, 2) == expected
    assert tower.s_eta_tilde(0, 2, 3, 2, 1, 2, 0) == 0


def test_theta_cases():
    tower = Tower()
    assert tower.theta(17, 2, 3, 2, 1, 1, 0, 0) == 17
    assert tower.theta(5, 1, 3, 2, 1, 1, 1, 1) == 0
    with pytest.raises(IndexRangeError):
        tower.theta(10 ** 9, 2, 3, 2, 1, 2, 0, 1)


def test_rho_at_root_level():
    tower = Tower()
    root = Node(2, 3, 4, 2, 2)
    assert tower.rho(0, 1, 1, 1, root, 2) == root


@pytest.mark.parametrize("root", [(2, 2, 3, 2, 1), (2, 2, 2, 2, 0), (2, 3, 2, 2, 2)])
def test_theta_decode_is_a_bijection(root):
    assert theta_decode_violations(Tower(), root, 2) == []


@pytest.mark.parametrize("root", [(2, 2, 2, 2, 1), (2, 2, 3, 2, 0), (3, 2, 2, 2, 2)])
def test_split_relations(root):
    tower = Tower()
    depth = root[0]
    count = tower.flat_count(root, depth)
    sample = sorted({0, 1, count // 3, count // 2, count - 1} | set(range(0, count, max(1, count // 40))))
    assert split_relation_violations(tower, root, depth, sample) == []


def test_depth_one_leaves_are_the_children():
    tower = Tower()
    root = Node(1, 2, 3, 2, 1)
    n = tower.term_count(root)
    for i in range(n + 1):
        assert tower.aleph(i, 1, 1, root, 1) == tower.first_child(root, i)
        assert tower.aleph(i, 1, 2, root, 1) == tower.second_child(root, i)
        assert tower.aleph(i, 1, 1, root, 1).omega == 0
    # viscous terms pair with a sentinel leaf that reads 1
    assert tower.aleph(n, 1, 2, root, 1).omega == -1


def test_base_cases(solved):
    assert base_case_violations(solved, Tower(), max_omega=1) == []


def test_omega_one_equals_second_compaction(solved, shared_tower):
    full = cp.CoefficientSource.from_solution(solved)
    src = slab_source(solved)
    for idx in [(1, 2, 2, 2), (1, 3, 4, 2), (1, 2, 5, 3)]:
        for a in (0, 1, 2):
            literal = closed_form_coeff(*idx, a, src, tower=shared_tower, method="literal")
            assert literal == cp.step3_coeff(full, *idx, a) == solved.u[a][idx]


def test_omega_two_equals_march(solved, shared_tower):
    src = slab_source(solved)
    evaluator = NestedEvaluator(shared_tower, src)
    for idx in [(2, 2, 2, 2), (2, 3, 3, 2), (2, 2, 4, 3)]:
        for a in (0, 1, 2):
            assert closed_form_coeff(*idx, a, src, tower=shared_tower, evaluator=evaluator) == solved.u[a][idx]
    assert closed_form_coeff(2, 2, 2, 2, 1, src, tower=shared_tower, method="literal") == solved.u[1][(2, 2, 2, 2)]


def test_leaf_property(solved):
    src = slab_source(solved)
    with pytest.raises(LeafPropertyError):
        src.u(1, 1, 2, 2, 2)
    assert src.u(1, 1, 1, 2, 2) == solved.u[1][(1, 1, 2, 2)]
    assert src.u(1, -1, 2, 2, 2) == 1


def test_memo_is_idempotent(solved):
    tower = Tower()
    src = slab_source(solved)
    first = closed_form_coeff(1, 3, 3, 2, 1, src, tower=tower, method="literal")
    expansions = tower.expansions
    assert closed_form_coeff(1, 3, 3, 2, 1, src, tower=tower, method="literal") == first
    assert tower.expansions == expansions
    assert tower.cache.total_hits > 0


def test_budget_limits(solved):
    src = slab_source(solved)
    with pytest.raises(BudgetExceeded):
        closed_form_coeff(2, 2, 3, 2, 1, src, tower=Tower(budget=TowerBudget(max_expansions=50)))
    with pytest.raises(BudgetExceeded):
        closed_form_coeff(4, 2, 3, 2, 1, src, tower=Tower(budget=TowerBudget(max_omega=3)))


def test_cache_round_trip(tmp_path, solved):
    tower = Tower()
    closed_form_coeff(1, 2, 3, 2, 1, slab_source(solved), tower=tower, method="literal")
    path = tmp_path / "memo.cache"
    cache_persist(tower.cache, path)
    assert cache_load(path) == tower.cache
    empty = tmp_path / "empty.cache"
    cache_persist(MemoCache(), empty)
    assert cache_load(empty).size() == 0


@pytest.mark.parametrize("damage", ["truncate", "flip", "header"])
def test_corrupt_cache_is_rejected(tmp_path, solved, damage):
    tower = Tower()
    closed_form_coeff(1, 2, 2, 2, 1, slab_source(solved), tower=tower, method="literal")
    path = tmp_path / "memo.cache"
    cache_persist(tower.cache, path)
    data = path.read_bytes()
    if damage == "truncate":
        data = data[: len(data) // 2]
    elif damage == "flip":
        cut = len(data) - 10
        data = data[:cut] + bytes([data[cut] ^ 1]) + data[cut + 1:]
    else:
        data = b"not a cache\n" + data
    path.write_bytes(data)
    with pytest.raises(CacheIntegrityError):
        cache_load(path)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([(1, 2, 2, 2), (1, 3, 2, 2), (1, 2, 3, 3)]), st.sampled_from((0, 1, 2)))
def test_literal_and_nested_agree(shared_tower, seed, idx, alpha):
    caps = Caps.cone(1, 11, 2)
    boundary, config = random_dataset(seed, caps, density=0.5)
    sol = march(boundary, config, caps, with_pressure=False)
    src = slab_source(sol)
    literal = closed_form_coeff(*idx, alpha, src, tower=shared_tower, method="literal")
    nested = closed_form_coeff(*idx, alpha, src, tower=shared_tower)
    assert literal == nested == sol.u[alpha][idx]
