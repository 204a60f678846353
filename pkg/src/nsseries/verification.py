"""Cross-checks between the march and the compacted and closed forms.

Each suite returns a list of :class:`Violation` records; an empty list means
the suite passed.  The CLI ``verify`` command and the acceptance tests both run
these functions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

from . import compaction as cp
from .closed_form import NestedEvaluator, Tower, closed_form_coeff, slab_source
from .compaction import CoefficientSource, Node
from .datasets import random_dataset
from .recurrence import SeriesSolution, march, momentum_coeff
from .series import Caps


@dataclass(frozen=True)
class Violation:
    suite: str
    witness: Tuple
    detail: str = ""

    def __str__(self):
        return f"[{self.suite}] {self.witness} {self.detail}".rstrip()


@dataclass(frozen=True)
class TargetRanges:
    omegas: Tuple[int, ...] = (1, 2)
    ps: Tuple[int, ...] = (2, 3, 4)
    qs: Tuple[int, ...] = (2, 3, 4, 5)
    rs: Tuple[int, ...] = (2, 3, 4)
    alphas: Tuple[int, ...] = (0, 1, 2)

    def targets(self) -> List[Tuple[int, int, int, int, int]]:
        return [(w, p, q, r, a) for w in self.omegas for p in self.ps for q in self.qs
                for r in self.rs for a in self.alphas]

    def caps(self, slope: int = 2) -> Caps:
        """Smallest cone whose velocity values cover every target without truncation."""
        top = max(self.omegas, default=0)
        degree = max(self.ps, default=0) + max(self.qs, default=0) + max(self.rs, default=0)
        return Caps.cone(max(top, 1), degree + slope * max(top, 1), slope)


def solve_dataset(seed: int, caps: Caps, density: float = 0.4) -> SeriesSolution:
    boundary, config = random_dataset(seed, caps, density=density)
    return march(boundary, config, caps, with_pressure=False)


def equivalence_chain(sol: SeriesSolution, targets: Iterable[Tuple[int, int, int, int, int]],
                      tower: Optional[Tower] = None, literal_omegas: Sequence[int] = (1,),
                      label: object = None) -> List[Violation]:
    """Recurrence = first compaction = second compaction = closed form, target by target.

    The closed form runs in its nested evaluation everywhere and, for time
    orders in ``literal_omegas``, also term by term over the flat index.
    """
    tower = tower or Tower()
    src = slab_source(sol)
    full = CoefficientSource.from_solution(sol)
    evaluator = NestedEvaluator(tower, src)
    bad: List[Violation] = []
    for target in targets:
        w, p, q, r, a = target
        idx = (w, p, q, r)
        if not sol.is_clean(f"u{a}", idx):
            bad.append(Violation("contaminated", (label, target), "march value touched by truncation"))
            continue
        want = sol.u[a][idx]
        values = {}
        if a in (1, 2):
            values["recurrence"] = momentum_coeff(a, idx, sol)
            values["step1"] = cp.step1_coeff(full, w, p, q, r, a)
        values["step3"] = cp.step3_coeff(full, w, p, q, r, a)
        values["closed_nested"] = closed_form_coeff(w, p, q, r, a, src, tower=tower, evaluator=evaluator)
        if w in literal_omegas:
            values["closed_literal"] = closed_form_coeff(w, p, q, r, a, src, tower=tower, method="literal")
        for name, got in values.items():
            if got != want:
                bad.append(Violation(name, (label, target), f"expected {want}, got {got}"))
    return bad


def run_equivalence(seeds: Iterable[int], ranges: TargetRanges = TargetRanges(),
                    tower: Optional[Tower] = None, literal_omegas: Sequence[int] = (1,),
                    density: float = 0.4) -> List[Violation]:
    tower = tower or Tower()
    caps = ranges.caps()
    bad: List[Violation] = []
    for seed in seeds:
        sol = solve_dataset(seed, caps, density)
        bad.extend(equivalence_chain(sol, ranges.targets(), tower, literal_omegas, label=seed))
    return bad


def dis_div(sol: SeriesSolution, omega: int, p: int, r: int):
    """y-velocity at ``q = 2`` from the x- and z-velocities at ``q = 1``."""
    return (-Fraction(p + 1, 2) * sol.u[1][(omega, p + 1, 1, r)]
            - Fraction(r + 1, 2) * sol.u[2][(omega, p, 1, r + 1)])


def base_case_violations(sol: SeriesSolution, tower: Optional[Tower] = None,
                         max_omega: Optional[int] = None, label: object = None) -> List[Violation]:
    """Closed form on every slab index (returns the datum) and at ``q = 2`` for ``u0``."""
    tower = tower or Tower()
    src = slab_source(sol)
    top = sol.caps.omega if max_omega is None else max_omega
    bad: List[Violation] = []
    for idx in sol.caps.indices():
        w, p, q, r = idx
        if w > top:
            continue
        for a in (0, 1, 2):
            if cp.on_slab(w, p, q, r):
                got = closed_form_coeff(w, p, q, r, a, src, tower=tower, method="literal")
                if got != sol.u[a][idx]:
                    bad.append(Violation("slab", (label, (w, p, q, r, a)), f"expected {sol.u[a][idx]}, got {got}"))
            elif a == 0 and q == 2 and sol.caps.contains((w, p + 1, 1, r)) and sol.caps.contains((w, p, 1, r + 1)):
                want = dis_div(sol, w, p, r)
                for method in ("literal", "nested"):
                    got = closed_form_coeff(w, p, q, r, a, src, tower=tower, method=method)
                    if got != want:
                        bad.append(Violation(f"q2_{method}", (label, (w, p, q, r, a)), f"expected {want}, got {got}"))
    return bad


# ---------------------------------------------------------------------------
# Bijections of the merged sums


def _exactly_once(name, witness, produced, expected) -> List[Violation]:
    bad = []
    if len(produced) != len(set(produced)):
        bad.append(Violation(name, witness, "a source tuple is produced more than once"))
    if set(produced) != set(expected):
        missing = sorted(set(expected) - set(produced))[:3]
        extra = sorted(set(produced) - set(expected))[:3]
        bad.append(Violation(name, witness, f"missing {missing} extra {extra}"))
    return bad


def group_sources(q: int):
    """Every ``(b, a, phi, n, m)`` of the three advective group sums."""
    e = cp.half(q)
    out = []
    for b, phi in itertools.product((0, 1), (0, 1, 2)):
        for a, top in ((0, e), (1, e - 1), (2, e - 2)):
            out.extend((b, a, phi, n, m) for n in range(1, top + 1) for m in range(1, n + 1))
    return out


def bijection_violations(qmax: int = 8, ps: Iterable[int] = range(2, 6), rs: Iterable[int] = range(2, 6),
                         omegas: Iterable[int] = (1, 2)) -> List[Violation]:
    """Every merged-index decoder hits its source set exactly once."""
    ps, rs, omegas = list(ps), list(rs), list(omegas)
    bad: List[Violation] = []
    for q in range(2, qmax + 1):
        decoded = [tuple(cp.decode_group(d, q)) for d in range(cp.group_count(q))]
        bad += _exactly_once("group", (q,), decoded, group_sources(q))
        e = cp.half(q)
        chis = [cp.decode_chi(chi) for chi in range(8 * e + 1)]
        bad += _exactly_once("viscous", (q,), chis, [(0, 0)] + [(n, z) for n in range(1, e + 1) for z in range(1, 9)])
        for p, r, alpha in itertools.product(ps, rs, (1, 2)):
            sg = cp.sigma(p, q, r, alpha)
            if cp.sigma_polynomial(p, q, r, alpha) != sg:
                bad.append(Violation("sigma", (p, q, r, alpha), f"sum {sg} polynomial {cp.sigma_polynomial(p, q, r, alpha)}"))
            pairs = [(cp.group_of_position(p, q, r, alpha, tau), cp.offset_in_group(p, q, r, alpha, tau))
                     for tau in range(1, sg + 1)]
            expected = [(d, pos) for d in range(cp.group_count(q))
                        for pos in range(1, cp.group_volume(p, q, r, alpha, d) + 1)]
            bad += _exactly_once("position", (p, q, r, alpha), pairs, expected)
            for d in range(cp.group_count(q)):
                g = cp.decode_group(d, q)
                w1 = cp.s1(p, q, alpha, g.a, g.n, g.m, g.b) + 1
                w2 = cp.s2(q, g.a, g.n, g.b) + 1
                w3 = cp.s3(q, r, alpha, g.a, g.n, g.m, g.b) + 1
                cells = [tuple(cp.decode_cell(q, r, alpha, d, pos)) for pos in range(1, w1 * w2 * w3 + 1)]
                bad += _exactly_once("cell", (p, q, r, alpha, d), cells, list(itertools.product(range(w1), range(w2), range(w3))))
            for omega in omegas:
                levels = [(i // sg, cp.position_in_cycle(p, q, r, alpha, i)) for i in range(sg * omega)]
                bad += _exactly_once("level", (omega, p, q, r, alpha), levels,
                                     list(itertools.product(range(omega), range(1, sg + 1))))
        for p, r, omega in itertools.product(ps, rs, omegas):
            first = cp.term_count(p + 1, q - 1, r, 1, omega)
            second = cp.term_count(p, q - 1, r + 1, 2, omega)
            if q == 2:
                continue
            split = []
            for i in range(cp.term_count(p, q, r, 0, omega) + 1):
                args, _ = cp._continuity_split(omega, p, q, r, i)
                split.append((args[4], args[5]))
            bad += _exactly_once("continuity_split", (omega, p, q, r), split,
                                 [(1, i) for i in range(first + 1)] + [(2, i) for i in range(second + 1)])
    return bad


def theta_decode_violations(tower: Tower, root, depth: int = 2) -> List[Violation]:
    """The flat index enumerates (own term, first subtree index, second subtree index) exactly once."""
    root = Node(*root)
    ind = depth - 1
    produced = [(tower._theta(i, root, 0, ind), tower._theta(i, root, 1, ind), tower._theta(i, root, 2, ind))
                for i in range(tower.flat_count(root, depth))]
    expected = []
    for k in range(tower.term_count(root) + 1):
        t = tower._eta_tilde(tower.first_child(root, k), ind - 1)
        z = tower._eta_tilde(tower.second_child(root, k), ind - 1)
        expected.extend((k, a, b) for a in range(t + 1) for b in range(z + 1))
    bad = _exactly_once("theta", tuple(root), produced, expected)
    if produced != expected:
        bad.append(Violation("theta_order", tuple(root), "decoding is not the lexicographic enumeration"))
    return bad
