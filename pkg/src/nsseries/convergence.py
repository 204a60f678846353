"""Coefficient bounds, sufficient convergence conditions and radius estimates.

The closed form writes each coefficient as ``eta + 1`` products of
``2^omega - 1`` node weights and ``2^omega`` leaf values, so

    |u| <= (eta + 1) * max_gamma^(2^omega - 1) * max_leaf^(2^omega).

The maxima run over every flat index of the sum.  Every combination of term
choices occurs in some flat index, so the set of (node, term) pairs and the set
of leaves met over all flat indices are exactly the nodes reachable level by
level in the tree; :func:`tree_reach` enumerates those directly and
:func:`enumerate_bounds` does the literal scan for cross-checking.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .closed_form import Tower, _leaf_value, _weight, is_terminal
from .compaction import CoefficientSource, Node, _as_scalar
from .series import AXES, EXACT, CoefficientField

Target = Tuple[int, int, int, int, int]  # (omega, p, q, r, alpha)


class InsufficientData(ValueError):
    """Too few nonzero coefficients for a radius fit."""


def tree_reach(tower: Tower, root, depth: int) -> Tuple[Set[Tuple[Node, int]], Set[Node]]:
    """Internal ``(node, term)`` pairs and leaves over all flat indices."""
    level = {Node(*root)}
    weighted: Set[Tuple[Node, int]] = set()
    for _ in range(depth):
        below = set()
        for node in level:
            terms = [0] if is_terminal(node) else range(tower.term_count(node) + 1)
            for k in terms:
                weighted.add((node, k))
                below.add(tower.first_child(node, k))
                below.add(tower.second_child(node, k))
        level = below
    return weighted, level


def _abs_max(values, mode):
    best = None
    for v in values:
        v = abs(v)
        if best is None or v > best:
            best = v
    if best is None:
        return 1 if mode == EXACT else 1.0
    return best


def scaled_source(src: CoefficientSource, factor) -> CoefficientSource:
    """``src`` with every velocity and forcing coefficient multiplied by ``factor``.

    The negative-index sentinel is applied by :meth:`CoefficientSource.u`
    after the lookup, so it keeps reading 1.
    """
    factor = _as_scalar(factor, src.mode)
    forcing = None
    if src.forcing is not None:
        forcing = lambda a, w, p, q, r: factor * src.forcing(a, w, p, q, r)
    return CoefficientSource(lambda a, w, p, q, r: factor * src.velocity(a, w, p, q, r), forcing, src.nu, src.mode)


def target_bounds(tower: Tower, src: CoefficientSource, target: Target):
    """``(max_gamma, max_leaf, eta)`` for one target ``(omega, p, q, r, alpha)``."""
    root = Node(*target)
    depth = root.omega
    weighted, leaves = tree_reach(tower, root, depth)
    gamma = _abs_max((_weight(tower, src, node, k) for node, k in weighted), src.mode)
    leaf = _abs_max((_leaf_value(src, node) for node in leaves), src.mode)
    eta = tower.flat_count(root, depth) - 1 if depth > 0 else 0
    return gamma, leaf, eta


def enumerate_bounds(tower: Tower, src: CoefficientSource, target: Target):
    """Literal scan over every flat index; same result as :func:`target_bounds`."""
    root = Node(*target)
    depth = root.omega
    if depth <= 0:
        return _abs_max((), src.mode), abs(_leaf_value(src, root)), 0
    gammas, leaves = [], []
    for i in range(tower.flat_count(root, depth)):
        gammas.extend(_weight(tower, src, node, k) for node, k in tower.weight_nodes(i, root, depth))
        leaves.extend(_leaf_value(src, node) for node in tower.leaves(i, root, depth))
    return _abs_max(gammas, src.mode), _abs_max(leaves, src.mode), tower.flat_count(root, depth) - 1


def max_gamma(targets: Iterable[Target], src: CoefficientSource, tower: Optional[Tower] = None):
    tower = tower or Tower()
    return _abs_max((target_bounds(tower, src, t)[0] for t in targets), src.mode)


def max_u_aleph(targets: Iterable[Target], src: CoefficientSource, tower: Optional[Tower] = None):
    tower = tower or Tower()
    return _abs_max((target_bounds(tower, src, t)[1] for t in targets), src.mode)


@dataclass
class IndexCondition:
    target: Target
    max_gamma: object
    max_u_aleph: object
    eta: int
    bound_unit_box: float
    bound_global: float
    unit_box: bool
    global_: bool


@dataclass
class ConvergenceReport:
    """Per-index table plus aggregates.

    The conditions quantify over every index; a report only covers the
    finite ``rows`` it was computed on.
    """

    rows: List[IndexCondition]
    max_gamma: object
    max_u_aleph: object
    cond_unit_box: bool
    cond_global: bool
    radii: Dict[str, "RadiusEstimate"] = field(default_factory=dict)

    def failures(self, which: str = "unit_box") -> List[Target]:
        attr = "unit_box" if which == "unit_box" else "global_"
        return [row.target for row in self.rows if not getattr(row, attr)]


def _float_bound(gamma, eta, omega, scale=1):
    denom = float(gamma) * float(scale) * (eta + 1) ** (1.0 / 2 ** omega)
    return math.inf if denom == 0 else 1.0 / denom


def _holds(leaf, gamma, eta, omega, scale):
    # leaf <= 1 / (scale * gamma * (eta+1)^(1/2^omega)), compared without roots
    power = 2 ** omega
    return (leaf * gamma * scale) ** power * (eta + 1) <= 1


def index_condition(tower: Tower, src: CoefficientSource, target: Target) -> IndexCondition:
    gamma, leaf, eta = target_bounds(tower, src, target)
    omega, p, q, r, _ = target
    weight = math.factorial(max(omega, 0)) * math.factorial(p) * math.factorial(q) * math.factorial(r)
    return IndexCondition(tuple(target), gamma, leaf, eta,
                          _float_bound(gamma, eta, omega), _float_bound(gamma, eta, omega, weight),
                          _holds(leaf, gamma, eta, omega, 1), _holds(leaf, gamma, eta, omega, weight))


def check_sufficient_conditions(src: CoefficientSource, targets: Iterable[Target],
                                tower: Optional[Tower] = None) -> ConvergenceReport:
    """Evaluate both sufficient conditions index by index."""
    tower = tower or Tower()
    rows = [index_condition(tower, src, t) for t in targets]
    return ConvergenceReport(
        rows,
        _abs_max((row.max_gamma for row in rows), src.mode),
        _abs_max((row.max_u_aleph for row in rows), src.mode),
        all(row.unit_box for row in rows),
        all(row.global_ for row in rows),
    )


def default_targets(omegas: Iterable[int], ps: Iterable[int], qs: Iterable[int], rs: Iterable[int],
                    alphas: Iterable[int] = (0, 1, 2)) -> List[Target]:
    return [(w, p, q, r, a) for w in omegas for p in ps for q in qs for r in rs for a in alphas]


# ---------------------------------------------------------------------------
# Radius estimation


@dataclass
class RadiusEstimate:
    """Root-test radius from a least-squares fit of ``log|a_k|`` against ``k``.

    ``unbounded`` is set when the fitted decay rate keeps steepening across
    the window, the signature of an entire series: the radius is then only a
    lower bound that grows with the truncation order.
    """

    radius: float
    slope: float
    intercept: float
    residual: float
    orders: Tuple[int, ...]
    unbounded: bool


def _fit(orders, logs):
    slope, intercept = statistics.linear_regression(orders, logs)
    resid = math.sqrt(sum((y - (slope * x + intercept)) ** 2 for x, y in zip(orders, logs)) / len(orders))
    return slope, intercept, resid


def radius_estimate(coefficients: Union[Sequence, Mapping[int, object]], min_points: int = 8) -> RadiusEstimate:
    """Estimate ``1 / limsup |a_k|^(1/k)`` from the last half of the nonzero orders."""
    items = coefficients.items() if isinstance(coefficients, Mapping) else enumerate(coefficients)
    points = sorted((k, math.log(abs(float(v)))) for k, v in items if v)
    if len(points) < min_points:
        raise InsufficientData(f"{len(points)} nonzero coefficients, need at least {min_points}")
    window = points[len(points) // 2:]
    orders = [k for k, _ in window]
    logs = [y for _, y in window]
    slope, intercept, resid = _fit(orders, logs)
    half = len(window) // 2
    early, _, _ = _fit(orders[:half + 1], logs[:half + 1])
    late, _, _ = _fit(orders[half:], logs[half:])
    unbounded = late < early - 0.1 * max(abs(early), 1e-12)
    return RadiusEstimate(math.exp(-slope), slope, intercept, resid, tuple(orders), unbounded)


def axis_coefficients(series: CoefficientField, axis: str) -> Dict[int, object]:
    """Coefficients along one axis with the other three exponents at zero."""
    ax = AXES[axis]
    out = {}
    for idx, value in series.items():
        if all(idx[j] == 0 for j in range(4) if j != ax):
            out[idx[ax]] = value
    return out
