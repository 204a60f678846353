from fractions import Fraction

from nsseries import compaction as cp
from nsseries.closed_form import Tower
from nsseries.series import Caps
from nsseries.verification import (TargetRanges, Violation, base_case_violations, bijection_violations,
                                   equivalence_chain, group_sources, run_equivalence, solve_dataset)


def test_target_ranges_cover_every_dependency():
    ranges = TargetRanges()
    assert len(ranges.targets()) == 2 * 3 * 4 * 3 * 3
    assert ranges.caps() == Caps.cone(2, 17, 2)


def test_group_sources_size_matches_group_count():
    for q in range(2, 10):
        assert len(group_sources(q)) == cp.group_count(q)


def test_bijections_small():
    assert bijection_violations(qmax=5, ps=(2, 3), rs=(2, 3)) == []


def test_bijection_checker_catches_a_broken_decoder(monkeypatch):
    original = cp.decode_chi
    monkeypatch.setattr(cp, "decode_chi", lambda chi: (1, 1) if chi == 2 else original(chi))
    found = bijection_violations(qmax=3, ps=(2,), rs=(2,), omegas=(1,))
    assert any(v.suite == "viscous" for v in found)


def test_equivalence_chain_on_one_dataset():
    ranges = TargetRanges(omegas=(1,), ps=(2, 3), qs=(2, 3), rs=(2,))
    assert run_equivalence([5], ranges, Tower()) == []


def test_equivalence_chain_reports_a_wrong_value():
    ranges = TargetRanges(omegas=(1,), ps=(2,), qs=(3,), rs=(2,), alphas=(1,))
    sol = solve_dataset(6, ranges.caps())
    idx = (1, 2, 3, 2)
    entries = dict(sol.u[1].entries)
    entries[idx] = entries.get(idx, 0) + Fraction(1, 3)
    sol.u[1] = type(sol.u[1])(entries, sol.u[1].caps)
    found = equivalence_chain(sol, ranges.targets(), Tower(), label="tampered")
    assert {v.suite for v in found} >= {"recurrence", "step1", "step3", "closed_nested", "closed_literal"}
    assert all(isinstance(v, Violation) and v.witness == ("tampered", (1, 2, 3, 2, 1)) for v in found)


def test_base_cases_on_a_small_dataset():
    sol = solve_dataset(2, Caps.cone(1, 9, 2))
    assert base_case_violations(sol, Tower()) == []
