"""Power-series solution of the model transport equation df/dx - df/dy = 0.

With ``f = sum a[n, m] x**n y**m`` the equation gives
``a[n+1, m] = (m+1)/(n+1) * a[n, m+1]``, so every coefficient is fixed by
the boundary row ``a[0, k]``.  The closed form is
``a[n, m] = C(n+m, n) * a[0, n+m]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

from .series import EXACT, Scalar, convert, zero

BoundaryRow = Callable[[int], Scalar]


class IncompleteBoundaryError(ValueError):
    """A boundary coefficient needed by the recurrence is missing."""


def exp_boundary(k: int) -> Fraction:
    """Row of ``exp(y)``: 1/k!."""
    return Fraction(1, math.factorial(k))


def geometric_boundary(k: int) -> Fraction:
    """Row of ``1/(1+y)``: (-1)**k."""
    return Fraction((-1) ** k)


def constant_boundary(k: int) -> Fraction:
    return Fraction(1 if k == 0 else 0)


BUILTIN_BOUNDARIES = {
    "exp": exp_boundary,
    "geometric": geometric_boundary,
    "constant": constant_boundary,
}


@dataclass
class ToySeries:
    """Coefficients ``a[(n, m)]`` for ``n + m <= cap``."""

    cap: int
    a: Dict[Tuple[int, int], Scalar] = field(default_factory=dict)
    mode: str = EXACT

    @classmethod
    def from_boundary(cls, row: BoundaryRow, cap: int, mode: str = EXACT) -> "ToySeries":
        return cls(cap, {(0, m): convert(row(m), mode) for m in range(cap + 1)}, mode)

    def __getitem__(self, nm: Tuple[int, int]) -> Scalar:
        return self.a.get(nm, zero(self.mode))

    def diagonal(self, axis: str = "x") -> list:
        """Coefficients along one axis: ``a[k, 0]`` for x, ``a[0, k]`` for y."""
        if axis == "x":
            return [self[(k, 0)] for k in range(self.cap + 1)]
        return [self[(0, k)] for k in range(self.cap + 1)]


def toy_recurrence_step(series: ToySeries) -> ToySeries:
    """Fill every ``a[n, m]`` with ``n + m <= cap`` from the boundary row."""
    missing = [m for m in range(series.cap + 1) if (0, m) not in series.a]
    if missing:
        raise IncompleteBoundaryError(f"boundary row missing a[0, m] for m in {missing}")
    a = {(0, m): series.a[(0, m)] for m in range(series.cap + 1)}
    for n in range(series.cap):
        for m in range(series.cap - n):
            factor = Fraction(m + 1, n + 1)
            if series.mode != EXACT:
                factor = float(factor)
            a[(n + 1, m)] = factor * a[(n, m + 1)]
    return ToySeries(series.cap, a, series.mode)


def toy_closed_form(row: BoundaryRow, n: int, m: int, mode: str = EXACT) -> Scalar:
    """``C(n+m, n) * a[0, n+m]``."""
    return convert(math.comb(n + m, n), mode) * convert(row(n + m), mode)


def solve_toy(row: BoundaryRow, cap: int, mode: str = EXACT) -> ToySeries:
    return toy_recurrence_step(ToySeries.from_boundary(row, cap, mode))


def toy_evaluate(series: ToySeries, x, y) -> Scalar:
    x, y = convert(x, series.mode), convert(y, series.mode)
    return sum((v * x ** n * y ** m for (n, m), v in series.a.items()), zero(series.mode))


def toy_collapse_check(series: ToySeries, samples: Iterable[Tuple]) -> Scalar:
    """Largest gap between the 2D series and ``sum a[0,k] (x+y)**k`` over ``samples``.

    Both sides are the same polynomial, so in exact mode the result is 0
    wherever the samples lie, inside the convergence domain or not.
    """
    worst = zero(series.mode)
    for x, y in samples:
        x, y = convert(x, series.mode), convert(y, series.mode)
        collapsed = sum((series[(0, k)] * (x + y) ** k for k in range(series.cap + 1)), zero(series.mode))
        worst = max(worst, abs(toy_evaluate(series, x, y) - collapsed))
    return worst


def recurrence_violations(series: ToySeries) -> list:
    """Indices where the filled table breaks ``a[n+1,m] = (m+1)/(n+1) a[n,m+1]``."""
    bad = []
    for n in range(series.cap):
        for m in range(series.cap - n):
            if series[(n + 1, m)] * (n + 1) != series[(n, m + 1)] * (m + 1):
                bad.append((n + 1, m))
    return bad
