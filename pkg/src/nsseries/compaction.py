"""Compacted forms of the momentum recurrence.

Two reformulations of the unified momentum recurrence live here:

* the *first compaction*, where every same-level term has been unrolled down
  to the boundary slab ``q - 2E(q/2)`` so only time order ``omega - 1`` and
  lower appear, with the nonlinear sums reorganised by ``(a, b, phi, n, m)``;
* the *second compaction*, one flat sum over ``i`` of
  ``weight(i) * u[t-child(i)] * u[z-child(i)]``.

Indices use the package numbering: component 1 is x, 0 is y and 2 is z.
Coefficient reads go through a :class:`CoefficientSource`, whose lookup
returns 1 whenever any index is negative.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

from .series import EXACT, Scalar, convert

Lookup = Callable[[int, int, int, int, int], Scalar]


class DomainError(ValueError):
    """Arguments outside the domain of a tabulated function."""


# ---------------------------------------------------------------------------
# Index primitives


def floor_div(x) -> int:
    """Floor of a rational."""
    return math.floor(Fraction(x))


def floor_nonneg(x) -> int:
    """Floor, clamped to 0 for negative arguments."""
    x = Fraction(x)
    return 0 if x < 0 else math.floor(x)


def heaviside(x) -> int:
    """Unit step with value 1 at 0."""
    return 1 if x >= 0 else 0


def kronecker(a: int, b: int) -> int:
    return 1 if a == b else 0


def remainder(x: int, y: int) -> int:
    """``x - y * floor(x / y)``."""
    return x - y * floor_div(Fraction(x, y))


def parity_weight(x: int) -> int:
    """2 for even arguments, 1 for odd ones."""
    return 2 if x % 2 == 0 else 1


def branch_parity(level: int, node: int) -> int:
    """0 at the root level, otherwise the parity weight of ``E((node+1-2^(level-1)) / 2^(level-1))``."""
    if level == 0:
        return 0
    step = 2 ** (level - 1)
    return parity_weight(floor_div(Fraction(node + 1 - step, step)))


def half(q: int) -> int:
    return q // 2


def tree_depth(m: int) -> int:
    """``E(ln(m+1)/ln 2)`` computed without floating point."""
    return (m + 1).bit_length() - 1


def axis_exponent(alpha: int, p: int, q: int, r: int) -> int:
    return (q, p, r)[alpha]


def _sgn(k: int) -> int:
    return -1 if k % 2 else 1


# ---------------------------------------------------------------------------
# Selectors for the viscous terms, indexed by z in [0, 8]


def _check_z(z: int):
    if not 0 <= z <= 8:
        raise DomainError(f"selector index z={z} outside [0, 8]")


def xi(z: int, p: int, q: int, alpha: int, n: int) -> int:
    """x exponent of the viscous term ``z``."""
    _check_z(z)
    e = half(q)
    if z == 0:
        return -1
    return {
        1: p + 2 * (alpha - 1),
        2: p,
        3: p + 2 - alpha,
        4: p + 1,
        5: p + (2 - alpha) * (2 * e + 1),
        6: p + _sgn(alpha + 1) * 2 * n + 3 * alpha - 4 + 2 * (alpha - 1) * e,
        7: p + _sgn(alpha + 1) * 2 * n + 2 * (alpha - 1) * e,
        8: p + _sgn(alpha + 1) * (2 * n - 1) + 2 * (alpha - 1) * e,
    }[z]


def delta(z: int, q: int) -> int:
    """y exponent of the viscous term ``z``."""
    _check_z(z)
    e = half(q)
    return (-1, q, q + 2, q + 1, q, q - 2 * e + 1, q - 2 * e + 1, q - 2 * e + 2, q - 2 * e + 2)[z]


def epsilon(z: int, q: int, r: int, alpha: int, n: int) -> int:
    """z exponent of the viscous term ``z``."""
    _check_z(z)
    e = half(q)
    if z == 0:
        return -1
    return {
        1: r + 2 * (2 - alpha),
        2: r,
        3: r + alpha - 1,
        4: r + 1,
        5: r + (alpha - 1) * (2 * e + 1),
        6: r + _sgn(alpha) * 2 * n - 3 * alpha + 5 + 2 * (2 - alpha) * e,
        7: r + _sgn(alpha) * 2 * n + 2 * (2 - alpha) * e,
        8: r + _sgn(alpha) * (2 * n - 1) + 2 * (2 - alpha) * e,
    }[z]


def kappa(z: int, alpha: int) -> int:
    """Velocity component read by the viscous term ``z``."""
    _check_z(z)
    return (-1, alpha, alpha, 0, 3 - alpha, 0, 0, alpha, 3 - alpha)[z]


# ---------------------------------------------------------------------------
# Nonlinear-sum counters; a in {0,1,2}, b in {0,1}


def _check_ab(a: int, b: int):
    if a not in (0, 1, 2) or b not in (0, 1):
        raise DomainError(f"a={a}, b={b} outside a in {{0,1,2}}, b in {{0,1}}")


def s1(p: int, q: int, alpha: int, a: int, n: int, m: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return p + (2 - alpha) * (2 * e + 1 - b - 2 * n)
    if a == 1:
        return p + _sgn(alpha) * (2 * m - b) + (2 - alpha) * (2 * n + 1 - b)
    return p + 2 * _sgn(alpha) * m + (2 - alpha) * (2 * n + 3 - b)


def s2(q: int, a: int, n: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return q - (2 * e + 1 - b - 2 * n)
    if a == 1:
        return q - 1 - 2 * n + b
    return q - 2 * n - 3 + b


def s3(q: int, r: int, alpha: int, a: int, n: int, m: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return r + (alpha - 1) * (2 * e + 1 - b - 2 * n)
    if a == 1:
        return r + _sgn(alpha + 1) * (2 * m - b) + (alpha - 1) * (2 * n + 1 - b)
    return r + 2 * _sgn(alpha + 1) * m + (alpha - 1) * (2 * n + 3 - b)


def y0(q: int, a: int, n: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return b - 1 + q - 2 * e + 2 * n
    if a == 1:
        return b - 1 + q - 2 * n
    return b + q - 2 * n - 3


def y1(p: int, q: int, alpha: int, a: int, n: int, m: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return p + (2 - alpha) * (1 - b) + (2 - alpha) * (2 * e - 2 * n)
    if a == 1:
        return p + (alpha - 1) * (1 - b) + _sgn(alpha) * (2 * m - 1) + 2 * n * (2 - alpha)
    return p + (2 - alpha) * (1 - b) + _sgn(alpha) * 2 * m + (2 * n + 2) * (2 - alpha)


def y2(q: int, r: int, alpha: int, a: int, n: int, m: int, b: int) -> int:
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return r + (alpha - 1) * (1 - b) + (alpha - 1) * (2 * e - 2 * n)
    if a == 1:
        return r + (2 - alpha) * (1 - b) + _sgn(alpha + 1) * (2 * m - 1) + 2 * n * (alpha - 1)
    return r + (alpha - 1) * (1 - b) + _sgn(alpha + 1) * 2 * m + (2 * n + 2) * (alpha - 1)


def sign_binomial(q: int, a: int, n: int, m: int, b: int) -> Fraction:
    """Signed binomial weight of the ``(a, n, m, b)`` group."""
    _check_ab(a, b)
    e = half(q)
    if a == 0:
        return Fraction(kronecker(n, m) * _sgn(n + b + e))
    exponent = n + b + a * (a - 1) // 2 + (a - 1) * (a - 2) * e // 2
    return Fraction(_sgn(exponent) * math.factorial(n - 2 + a),
                    math.factorial(m - 2 + a) * math.factorial(n - m))


def advective_weight(phi: int, i: int, j: int, l: int) -> int:
    """``[(phi-1)(phi-2)/2 j + phi(2-phi) i + phi(phi-1)/2 l + 1]``."""
    return (phi - 1) * (phi - 2) // 2 * j + phi * (2 - phi) * i + phi * (phi - 1) // 2 * l + 1


def derivative_offset(phi: int) -> Tuple[int, int, int]:
    """Shift ``(dp, dq, dr)`` applied to the differentiated factor."""
    return (phi * (2 - phi), (phi - 1) * (phi - 2) // 2, phi * (phi - 1) // 2)


def group_component(alpha: int, a: int, b: int) -> int:
    """Component of the differentiated factor: ``b (alpha + (a-2)(2 alpha-3) a)``."""
    return b * (alpha + (a - 2) * (2 * alpha - 3) * a)


def group_weight(p: int, q: int, r: int, alpha: int, a: int, n: int, m: int, b: int, phi: int,
                 i: int, j: int, l: int) -> Fraction:
    """Weight of one term of the reorganised nonlinear sum."""
    f = math.factorial
    return (sign_binomial(q, a, n, m, b) * advective_weight(phi, i, j, l)
            * Fraction(f(y0(q, a, n, b)) * f(y1(p, q, alpha, a, n, m, b)) * f(y2(q, r, alpha, a, n, m, b)),
                       f(p) * f(q) * f(r)))


# ---------------------------------------------------------------------------
# Merged-sum decoders


def block_size(q: int) -> int:
    """``(3E^2 - 3E + 2)/2`` with ``E = E(q/2)``: number of (a, n, m) per (b, phi)."""
    e = half(q)
    return (3 * e * e - 3 * e + 2) // 2


def group_count(q: int) -> int:
    """Length of the merged ``d`` range, ``9E^2 - 9E + 6``."""
    return 6 * block_size(q)


def _check_d(d: int, q: int):
    if q < 2:
        raise DomainError("group decoding needs q >= 2")
    if not 0 <= d < group_count(q):
        raise DomainError(f"d={d} outside [0, {group_count(q) - 1}]")


def group_b(d: int, q: int) -> int:
    _check_d(d, q)
    return (1 + d // block_size(q)) // 4


def group_a(d: int, q: int) -> int:
    _check_d(d, q)
    e = half(q)
    off = d % block_size(q)
    if off < e * (e + 1) // 2:
        return 0
    if off < e * e:
        return 1
    return 2


def group_phi(d: int, q: int) -> int:
    _check_d(d, q)
    blk = d // block_size(q)
    return blk - 3 * ((1 + blk) // 4)


def group_gamma(d: int, q: int) -> int:
    """Position of ``(n, m)`` inside its ``a`` block, starting at 1."""
    _check_d(d, q)
    e = half(q)
    a = group_a(d, q)
    return d + 1 - block_size(q) * (d // block_size(q)) - (a * e * e + a * (2 - a) * e) // 2


def triangle_row(gamma: int) -> int:
    """``E((1 + sqrt(8 gamma - 7)) / 2)``."""
    if gamma < 1:
        raise DomainError("triangle index starts at 1")
    return (1 + math.isqrt(8 * gamma - 7)) // 2


def triangle_col(gamma: int) -> int:
    nrow = triangle_row(gamma)
    return gamma - ((nrow - 1) ** 2 + nrow - 1) // 2


def group_n(d: int, q: int) -> int:
    return triangle_row(group_gamma(d, q))


def group_m(d: int, q: int) -> int:
    return triangle_col(group_gamma(d, q))


class Group(NamedTuple):
    b: int
    a: int
    phi: int
    n: int
    m: int


@lru_cache(maxsize=None)
def decode_group(d: int, q: int) -> Group:
    g = group_gamma(d, q)
    return Group(group_b(d, q), group_a(d, q), group_phi(d, q), triangle_row(g), triangle_col(g))


def decode_chi(chi: int) -> Tuple[int, int]:
    """``chi -> (n, z)`` for the merged viscous sum; chi=0 gives (0, 0)."""
    n = floor_div(Fraction(chi - 1, 8)) + 1
    z = chi - 8 * floor_nonneg(Fraction(chi - 1, 8))
    return n, z


def group_volume(p: int, q: int, r: int, alpha: int, d: int) -> int:
    """``(s1+1)(s2+1)(s3+1)`` for group ``d``."""
    g = decode_group(d, q)
    return ((s1(p, q, alpha, g.a, g.n, g.m, g.b) + 1) * (s2(q, g.a, g.n, g.b) + 1)
            * (s3(q, r, alpha, g.a, g.n, g.m, g.b) + 1))


@lru_cache(maxsize=None)
def _volume_prefix(p: int, q: int, r: int, alpha: int) -> Tuple[int, ...]:
    out = [0]
    for d in range(group_count(q)):
        out.append(out[-1] + group_volume(p, q, r, alpha, d))
    return tuple(out)


def sigma_sum(p: int, q: int, r: int, alpha: int) -> int:
    """Number of terms of the reorganised nonlinear sum, by direct summation."""
    return _volume_prefix(p, q, r, alpha)[-1]


def sigma_polynomial(p: int, q: int, r: int, alpha: int) -> Fraction:
    """Closed-form polynomial for the same count."""
    e = Fraction(half(q))
    xa = axis_exponent(alpha, p, q, r)
    xo = axis_exponent(3 - alpha, p, q, r)
    fr = Fraction
    lead = (2 * e ** 4 + (4 * xa + 6 * xo + 8) * e ** 3
            + (9 * xa * xo + fr(3, 2) * xa + 3 * xo - 8) * e ** 2
            - (9 * xo * xa + fr(11, 2) * xa + 9 * xo + 2) * e
            + 6 * xa * xo + 6 * xa + 9 * xo + 9)
    return (lead * q - fr(16, 5) * e ** 5 - (6 * xa + 8 * xo + 8) * e ** 4
            + (6 * xo + 6 * xa - 10 * xo * xa + 24) * e ** 3
            + (14 * xo + 9 * xa + fr(45, 2) * xa * xo - 7) * e ** 2
            - (9 * xa + 12 * xo + fr(25, 2) * xa * xo - fr(11, 5)) * e
            + 3 * (xo + 1) * (xa + 1) - 8 * e)


def sigma(p: int, q: int, r: int, alpha: int) -> int:
    """Term count used by the decoders (the direct sum; see :func:`sigma_polynomial`)."""
    return sigma_sum(p, q, r, alpha)


def group_of_position(p: int, q: int, r: int, alpha: int, tau: int) -> int:
    """``D``: group ``d`` holding the ``tau``-th merged term (``tau`` from 1)."""
    prefix = _volume_prefix(p, q, r, alpha)
    if not 1 <= tau <= prefix[-1]:
        raise DomainError(f"tau={tau} outside [1, {prefix[-1]}]")
    return bisect.bisect_right(prefix, tau - 1) - 1


def offset_in_group(p: int, q: int, r: int, alpha: int, tau: int) -> int:
    """``I``: 1-based position of term ``tau`` inside its group."""
    d = group_of_position(p, q, r, alpha, tau)
    return tau - _volume_prefix(p, q, r, alpha)[d]


class Cell(NamedTuple):
    i: int
    j: int
    l: int


def decode_cell(q: int, r: int, alpha: int, d: int, pos: int) -> Cell:
    """``(L1, L0 - (s2+1)L1, Mod(pos-1, s3+1))``: the ``(i, j, l)`` triple."""
    g = decode_group(d, q)
    w3 = s3(q, r, alpha, g.a, g.n, g.m, g.b) + 1
    w2 = s2(q, g.a, g.n, g.b) + 1
    lo0 = (pos - 1) // w3
    lo1 = (pos - 1) // (w3 * w2)
    return Cell(lo1, lo0 - w2 * lo1, (pos - 1) % w3)


def position_in_cycle(p: int, q: int, r: int, alpha: int, j: int) -> int:
    """``T``: ``j + 1 - sigma E(j / sigma)``."""
    sg = sigma(p, q, r, alpha)
    return j + 1 - sg * (j // sg)


def viscous_position(omega: int, p: int, q: int, r: int, alpha: int, i: int) -> int:
    """``chi = i - sigma * omega``."""
    return i - sigma(p, q, r, alpha) * omega


def viscous_group(omega: int, p: int, q: int, r: int, alpha: int, i: int) -> int:
    """``N = E((chi - 1)/8) + 1``."""
    return floor_div(Fraction(viscous_position(omega, p, q, r, alpha, i) - 1, 8)) + 1


def differentiated_index(p: int, q: int, r: int, alpha: int, d: int, pos: int) -> Tuple[int, int, int]:
    """``(W1, W0, W2)``: exponents of the differentiated factor."""
    g = decode_group(d, q)
    c = decode_cell(q, r, alpha, d, pos)
    dp, dq, dr = derivative_offset(g.phi)
    return (dp + c.i, dq + c.j, dr + c.l)


def lagged_index(p: int, q: int, r: int, alpha: int, d: int, pos: int) -> Tuple[int, int, int]:
    """``(V1, V0, V2)``: exponents of the lagged factor."""
    g = decode_group(d, q)
    c = decode_cell(q, r, alpha, d, pos)
    return (y1(p, q, alpha, g.a, g.n, g.m, g.b) - c.i, y0(q, g.a, g.n, g.b) - c.j,
            y2(q, r, alpha, g.a, g.n, g.m, g.b) - c.l)


def merged_weight(p: int, q: int, r: int, alpha: int, d: int, pos: int) -> Fraction:
    """``G``: weight of the merged nonlinear term ``(d, pos)``."""
    g = decode_group(d, q)
    c = decode_cell(q, r, alpha, d, pos)
    return group_weight(p, q, r, alpha, g.a, g.n, g.m, g.b, g.phi, c.i, c.j, c.l)


# ---------------------------------------------------------------------------
# Coefficient access


def _as_scalar(x, mode: str):
    return x if mode == EXACT else float(x)


@dataclass
class CoefficientSource:
    """Velocity and forcing lookups plus viscosity, in one arithmetic mode.

    ``velocity(a, w, p, q, r)`` and ``forcing(a, w, p, q, r)`` return
    coefficients; the wrappers :meth:`u` and :meth:`g` apply the conventions
    (a negative index reads 1 for velocity and 0 for forcing).
    """

    velocity: Lookup
    forcing: Optional[Lookup]
    nu: Scalar
    mode: str = EXACT

    def u(self, a: int, w: int, p: int, q: int, r: int):
        if w < 0 or p < 0 or q < 0 or r < 0:
            return _as_scalar(1, self.mode)
        return self.velocity(a, w, p, q, r)

    def g(self, a: int, w: int, p: int, q: int, r: int):
        if self.forcing is None or w < 0 or p < 0 or q < 0 or r < 0:
            return _as_scalar(0, self.mode)
        return self.forcing(a, w, p, q, r)

    @classmethod
    def from_solution(cls, sol) -> "CoefficientSource":
        """Read from a :class:`~nsseries.recurrence.SeriesSolution`."""
        fields = sol.u
        mode = sol.mode

        def velocity(a, w, p, q, r):
            return fields[a][(w, p, q, r)]

        def forcing(a, w, p, q, r):
            f = sol.config.forcing(a)
            return f[(w, p, q, r)] if f is not None else _as_scalar(0, mode)

        return cls(velocity, forcing, convert(sol.config.nu, mode), mode)


# ---------------------------------------------------------------------------
# First compaction


def boundary_unrolled(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int):
    """``F0``: same-level terms unrolled onto the slab ``q - 2E(q/2)``."""
    e = half(q)
    xa = axis_exponent(alpha, p, q, r)
    xo = axis_exponent(3 - alpha, p, q, r)
    f = math.factorial
    den = f(p) * f(q) * f(r)
    total = 0
    for n in range(1, e + 1):
        c = _sgn(e) * math.comb(e - 1, n - 1)
        first = Fraction(f(xa + 2 * n) * f(xo + 2 * e - 2 * n), den)
        second = Fraction(f(xa + 2 * n - 1) * f(xo + 2 * e - 2 * n + 1), den)
        ua = src.u(alpha, omega, p + _sgn(alpha + 1) * 2 * n + (alpha - 1) * 2 * e, q - 2 * e,
                   r + _sgn(alpha) * 2 * n + 2 * (2 - alpha) * e)
        uo = src.u(3 - alpha, omega, p + _sgn(alpha + 1) * (2 * n - 1) + (alpha - 1) * 2 * e, q - 2 * e,
                   r + _sgn(alpha) * (2 * n - 1) + 2 * (2 - alpha) * e)
        total += _as_scalar(c * first, src.mode) * ua + _as_scalar(c * second, src.mode) * uo
    return total


def forcing_unrolled(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int):
    """``F0~``: forcing contributions collected by the unrolling."""
    if omega < 1:
        raise DomainError("forcing terms need omega >= 1")
    e = half(q)
    xa = axis_exponent(alpha, p, q, r)
    xo = axis_exponent(3 - alpha, p, q, r)
    f = math.factorial
    den = f(p) * f(q) * f(r)
    w = omega - 1
    mode = src.mode
    total = 0
    for n in range(1, e + 1):
        c1 = Fraction(_sgn(n + 1) * f(q - 2 * n + 2) * f(xa + 2 * n - 2), f(xa) * f(q))
        c2 = Fraction(_sgn(n + 1) * f(q - 2 * n + 1) * f(xa + 2 * n - 1), f(xa) * f(q))
        total += _as_scalar(c1, mode) * src.g(alpha, w, p + (2 - alpha) * (2 * n - 2), q - 2 * n + 2,
                                              r + (alpha - 1) * (2 * n - 2))
        total -= _as_scalar(c2, mode) * src.g(0, w, p + (2 - alpha) * (2 * n - 1), q - 2 * n + 1,
                                              r + (alpha - 1) * (2 * n - 1))
    for n in range(1, e):
        for m in range(1, n + 1):
            c1 = Fraction(_sgn(n) * math.comb(n - 1, m - 1) * f(xo + 2 * m - 1) * f(q - 2 * n)
                          * f(xa - 2 * m + 2 * n + 1), den)
            c2 = Fraction(_sgn(n) * math.comb(n, m) * f(xo + 2 * m) * f(q - 1 - 2 * n)
                          * f(xa - 2 * m + 2 * n + 1), den)
            total += _as_scalar(c1, mode) * src.g(3 - alpha, w, p + _sgn(alpha) * (2 * m - 1) + 2 * n * (2 - alpha),
                                                  q - 2 * n, r + _sgn(alpha + 1) * (2 * m - 1) + 2 * (alpha - 1) * n)
            total -= _as_scalar(c2, mode) * src.g(0, w, p + 2 * m * _sgn(alpha) + (2 - alpha) * (2 * n + 1),
                                                  q - 1 - 2 * n, r + 2 * m * _sgn(alpha + 1) + (alpha - 1) * (2 * n + 1))
    for n in range(1, e - 1):
        for m in range(1, n + 1):
            c = Fraction(_sgn(n + 1) * math.comb(n, m) * f(xo + 2 * m) * f(q - 2 - 2 * n)
                         * f(xa - 2 * m + 2 * n + 2), den)
            total += _as_scalar(c, mode) * src.g(alpha, w, p + 2 * m * _sgn(alpha) + (2 - alpha) * (2 * n + 2),
                                                 q - 2 - 2 * n, r + 2 * m * _sgn(alpha + 1) + (alpha - 1) * (2 * n + 2))
    return _as_scalar(Fraction(1, omega), mode) * total


def interior(omega: int, p: int, q: int, r: int) -> bool:
    """``omega > 0`` and ``p, q, r > 1``."""
    return omega > 0 and p > 1 and q > 1 and r > 1


def has_negative(omega: int, p: int, q: int, r: int) -> bool:
    return omega < 0 or p < 0 or q < 0 or r < 0


def on_slab(omega: int, p: int, q: int, r: int) -> bool:
    """``omega = 0`` or some spatial exponent in {0, 1}."""
    return omega == 0 or 0 <= p <= 1 or 0 <= q <= 1 or 0 <= r <= 1


def viscous_factor(z: int, omega: int, p: int, q: int, r: int, alpha: int, n: int,
                   src: Optional[CoefficientSource] = None):
    """``F``: factor multiplying the viscous term ``(z, n)``.

    ``z = 0`` is the data-dependent term and needs ``src``; every other
    value is a pure number times ``nu / omega``, returned as a Fraction
    multiple of ``nu`` when ``src`` is omitted.
    """
    _check_z(z)
    if z == 0:
        if src is None:
            raise DomainError("the z = 0 factor reads coefficients; pass a source")
        if interior(omega, p, q, r):
            return boundary_unrolled(src, omega, p, q, r, alpha) + forcing_unrolled(src, omega, p, q, r, alpha)
        return src.u(alpha, omega, p, q, r)
    c = viscous_constant(z, omega, p, q, r, alpha, n)
    if src is None:
        return c
    return _as_scalar(c, src.mode) * src.nu


def viscous_constant(z: int, omega: int, p: int, q: int, r: int, alpha: int, n: int) -> Fraction:
    """``F / nu`` for ``z`` in [1, 8]."""
    _check_z(z)
    if z == 0:
        raise DomainError("z = 0 has no constant form")
    if omega == 0:
        raise DomainError("viscous factors divide by omega")
    e = half(q)
    xa = axis_exponent(alpha, p, q, r)
    xo = axis_exponent(3 - alpha, p, q, r)
    f = math.factorial
    inv = Fraction(1, omega)
    den = f(p) * f(q) * f(r)
    if z <= 5 and n != 1:
        return Fraction(0)
    if z == 1:
        return inv * (xo + 1) * (xo + 2)
    if z == 2:
        return inv * (q + 1) * (q + 2)
    if z == 3:
        return -inv * (q + 1) * (xa + 1)
    if z == 4:
        return -inv * (p + 1) * (r + 1) * heaviside(q - 4)
    if z == 5:
        return inv * _sgn(e) * Fraction(f(xa + 2 * e + 1) * (q - 2 * e + 1), f(xa) * f(q))
    if z == 6:
        if not 0 <= n - 1 <= e:
            return Fraction(0)
        return inv * _sgn(e) * math.comb(e, n - 1) * Fraction(
            f(xa + 2 * n - 1) * f(xo + 2 * e - 2 * n + 2) * (1 + q - 2 * e), den)
    if not 0 <= n - 1 <= e - 1:
        return Fraction(0)
    if z == 7:
        return 2 * inv * _sgn(e + 1) * math.comb(e - 1, n - 1) * Fraction(
            f(xa + 2 * n) * f(xo + 2 * e - 2 * n) * (1 + 2 * q - 4 * e), den)
    return 2 * heaviside(q - 4) * inv * _sgn(e + 1) * math.comb(e - 1, n - 1) * Fraction(
        f(xa + 2 * n - 1) * f(xo + 2 * e - 2 * n + 1) * (1 + 2 * q - 4 * e), den)


def _check_interior(omega, p, q, r, alpha, alphas=(1, 2)):
    if alpha not in alphas:
        raise DomainError(f"component {alpha} not allowed here")
    if not interior(omega, p, q, r):
        raise DomainError(f"({omega},{p},{q},{r}) is not an interior index")


def step1_coeff(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int):
    """First compacted form at an interior index, ``alpha`` in {1, 2}."""
    _check_interior(omega, p, q, r, alpha)
    mode = src.mode
    total = viscous_factor(0, omega, p, q, r, alpha, 0, src)
    for z in range(1, 9):
        for n in range(1, half(q) + 1):
            c = viscous_factor(z, omega, p, q, r, alpha, n, src)
            if c:
                total += c * src.u(kappa(z, alpha), omega - 1, xi(z, p, q, alpha, n), delta(z, q),
                                   epsilon(z, q, r, alpha, n))
    conv = 0
    for k in range(omega):
        for a in range(3):
            for b in range(2):
                comp = group_component(alpha, a, b)
                for phi in range(3):
                    dp, dq, dr = derivative_offset(phi)
                    for n in range(1, half(q) - a + 1):
                        for m in range(1, n + 1):
                            t1 = s1(p, q, alpha, a, n, m, b)
                            t2 = s2(q, a, n, b)
                            t3 = s3(q, r, alpha, a, n, m, b)
                            v0 = y0(q, a, n, b)
                            v1 = y1(p, q, alpha, a, n, m, b)
                            v2 = y2(q, r, alpha, a, n, m, b)
                            for i in range(t1 + 1):
                                for j in range(t2 + 1):
                                    for l in range(t3 + 1):
                                        lag = src.u(phi, omega - 1 - k, v1 - i, v0 - j, v2 - l)
                                        if not lag:
                                            continue
                                        dif = src.u(comp, k, i + dp, j + dq, l + dr)
                                        if not dif:
                                            continue
                                        wgt = group_weight(p, q, r, alpha, a, n, m, b, phi, i, j, l)
                                        conv += _as_scalar(wgt, mode) * dif * lag
    return total + _as_scalar(Fraction(1, omega), mode) * conv


def nonlinear_grouped(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int):
    """The grouped nonlinear sum without the ``1/omega`` factor."""
    mode = src.mode
    total = 0
    for k in range(omega):
        for a in range(3):
            for b in range(2):
                comp = group_component(alpha, a, b)
                for phi in range(3):
                    dp, dq, dr = derivative_offset(phi)
                    for n in range(1, half(q) - a + 1):
                        for m in range(1, n + 1):
                            v0 = y0(q, a, n, b)
                            v1 = y1(p, q, alpha, a, n, m, b)
                            v2 = y2(q, r, alpha, a, n, m, b)
                            for i in range(s1(p, q, alpha, a, n, m, b) + 1):
                                for j in range(s2(q, a, n, b) + 1):
                                    for l in range(s3(q, r, alpha, a, n, m, b) + 1):
                                        lag = src.u(phi, omega - 1 - k, v1 - i, v0 - j, v2 - l)
                                        dif = src.u(comp, k, i + dp, j + dq, l + dr)
                                        wgt = group_weight(p, q, r, alpha, a, n, m, b, phi, i, j, l)
                                        total += _as_scalar(wgt, mode) * dif * lag
    return total


# ---------------------------------------------------------------------------
# Second compaction: one flat sum over i


class Node(NamedTuple):
    """Arguments ``(omega, p, q, r, component)`` of a coefficient in the tower."""

    omega: int
    p: int
    q: int
    r: int
    alpha: int

    def leaf_index(self) -> Tuple[int, int, int, int, int]:
        return (self.alpha, self.omega, self.p, self.q, self.r)


def _neg(node_args) -> bool:
    return has_negative(*node_args[:4])


@lru_cache(maxsize=None)
def term_count(p: int, q: int, r: int, alpha: int, omega: int) -> int:
    """``F``-count: the flat sum runs over ``i`` in [0, term_count]."""
    if p < 2 or q < 2 or r < 2 or omega <= 0:
        return 0
    if alpha == 0 and q == 2:
        return 1
    if alpha != 0:
        return sigma(p, q, r, alpha) * omega + 8 * half(q)
    return (sigma(p + 1, q - 1, r, 1) * omega + sigma(p, q - 1, r + 1, 2) * omega
            + 16 * half(q - 1) + 1)


def _continuity_split(omega, p, q, r, i) -> Tuple[Tuple[int, int, int, int, int, int], Fraction]:
    """Child arguments and factor for the y-velocity folding."""
    first = term_count(p + 1, q - 1, r, 1, omega)
    if i <= first:
        return (omega, p + 1, q - 1, r, 1, i), Fraction(-(p + 1), q)
    return (omega, p, q - 1, r + 1, 2, i - first - 1), Fraction(-(r + 1), q)


def _in_nonlinear_part(omega, p, q, r, alpha, i) -> bool:
    return i < sigma(p, q, r, alpha) * omega


@lru_cache(maxsize=None)
def t_child(omega: int, p: int, q: int, r: int, alpha: int, i: int) -> Node:
    """``(E, T1, T0, T2, beta)``: the first factor of term ``i``."""
    if has_negative(omega, p, q, r):
        return Node(-1, -1, -1, -1, alpha)
    if on_slab(omega, p, q, r):
        return Node(omega, p, q, r, alpha)
    if alpha in (1, 2):
        sg = sigma(p, q, r, alpha)
        level = i // sg
        if level >= omega:
            level = omega - 1
        if _in_nonlinear_part(omega, p, q, r, alpha, i):
            tau = position_in_cycle(p, q, r, alpha, i)
            d = group_of_position(p, q, r, alpha, tau)
            pos = offset_in_group(p, q, r, alpha, tau)
            g = decode_group(d, q)
            ip, iq, ir = differentiated_index(p, q, r, alpha, d, pos)
            return Node(level, ip, iq, ir, g.b * (alpha + g.a * (g.a - 2) * (2 * alpha - 3)))
        chi = viscous_position(omega, p, q, r, alpha, i)
        n, z = decode_chi(chi)
        return Node(level, xi(z, p, q, alpha, n), delta(z, q), epsilon(z, q, r, alpha, n), kappa(z, alpha))
    if alpha == 0:
        args, _ = _continuity_split(omega, p, q, r, i)
        return t_child(*args)
    raise DomainError(f"component {alpha} outside 0..2")


@lru_cache(maxsize=None)
def z_child(omega: int, p: int, q: int, r: int, alpha: int, i: int) -> Node:
    """``(Upsilon, Z1, Z0, Z2, Phi)``: the second factor of term ``i``."""
    if has_negative(omega, p, q, r) or on_slab(omega, p, q, r):
        return Node(-1, -1, -1, -1, alpha)
    if alpha in (1, 2):
        sg = sigma(p, q, r, alpha)
        tau = position_in_cycle(p, q, r, alpha, i)
        d = group_of_position(p, q, r, alpha, tau)
        pos = offset_in_group(p, q, r, alpha, tau)
        lp, lq, lr = lagged_index(p, q, r, alpha, d, pos)
        return Node(omega - 1 - i // sg, lp, lq, lr, decode_group(d, q).phi)
    if alpha == 0:
        args, _ = _continuity_split(omega, p, q, r, i)
        return z_child(*args)
    raise DomainError(f"component {alpha} outside 0..2")


@lru_cache(maxsize=None)
def static_weight(omega: int, p: int, q: int, r: int, alpha: int, i: int) -> Optional[Fraction]:
    """Data-independent part of the term weight.

    Returns the rational weight for nonlinear terms, ``None`` for viscous
    terms (whose weight carries ``nu`` or reads data; see :func:`term_weight`),
    and folds the continuity factor in for the y-velocity.
    """
    if has_negative(omega, p, q, r) or on_slab(omega, p, q, r):
        return Fraction(1)
    if alpha in (1, 2):
        if _in_nonlinear_part(omega, p, q, r, alpha, i):
            tau = position_in_cycle(p, q, r, alpha, i)
            d = group_of_position(p, q, r, alpha, tau)
            pos = offset_in_group(p, q, r, alpha, tau)
            return merged_weight(p, q, r, alpha, d, pos) / omega
        return None
    args, factor = _continuity_split(omega, p, q, r, i)
    inner = static_weight(*args)
    return None if inner is None else factor * inner


def term_weight(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int, i: int):
    """``Gamma``: full weight of term ``i`` (viscous terms read ``nu`` and data)."""
    w = static_weight(omega, p, q, r, alpha, i)
    if w is not None:
        return _as_scalar(w, src.mode)
    if alpha == 0:
        args, factor = _continuity_split(omega, p, q, r, i)
        return _as_scalar(factor, src.mode) * term_weight(src, *args)
    chi = viscous_position(omega, p, q, r, alpha, i)
    n, z = decode_chi(chi)
    return viscous_factor(z, omega, p, q, r, alpha, n, src)


def step3_terms(omega: int, p: int, q: int, r: int, alpha: int):
    """Yield ``(i, t_child, z_child)`` for every term of the flat sum."""
    for i in range(term_count(p, q, r, alpha, omega) + 1):
        yield i, t_child(omega, p, q, r, alpha, i), z_child(omega, p, q, r, alpha, i)


def step3_coeff(src: CoefficientSource, omega: int, p: int, q: int, r: int, alpha: int):
    """Second compacted form; ``alpha = 0`` folds continuity into the sum."""
    total = 0
    for i, t, z in step3_terms(omega, p, q, r, alpha):
        w = term_weight(src, omega, p, q, r, alpha, i)
        if not w:
            continue
        ut = src.u(t.alpha, t.omega, t.p, t.q, t.r)
        if not ut:
            continue
        total += w * ut * src.u(z.alpha, z.omega, z.p, z.q, z.r)
    return total


# ---------------------------------------------------------------------------
# Identities used in the induction over q


def _lower_pair(p, q, r, alpha):
    """Index shifts of the two same-level terms at ``q - 2``."""
    s_plus, s_minus = _sgn(alpha + 1), _sgn(alpha)
    same = (p + 2 * s_plus + 2 * (alpha - 1), q - 2, r + 2 * s_minus + 2 * (2 - alpha), alpha)
    other = (p + s_plus + 2 * (alpha - 1), q - 2, r + s_minus + 2 * (2 - alpha), 3 - alpha)
    return same, other


def _recursion_rhs(fn, omega, p, q, r, alpha, mode):
    xa = axis_exponent(alpha, p, q, r)
    xo = axis_exponent(3 - alpha, p, q, r)
    (p1, q1, r1, a1), (p2, q2, r2, a2) = _lower_pair(p, q, r, alpha)
    c = _as_scalar(Fraction(-(xa + 1), q * (q - 1)), mode)
    return c * ((xa + 2) * fn(omega, p1, q1, r1, a1) + (xo + 1) * fn(omega, p2, q2, r2, a2))


def _viscous_sum(src, omega, p, q, r, alpha, nmax):
    total = 0
    for z in range(1, 9):
        for n in range(1, nmax + 1):
            c = viscous_factor(z, omega, p, q, r, alpha, n, src)
            if c:
                total += c * src.u(kappa(z, alpha), omega - 1, xi(z, p, q, alpha, n), delta(z, q),
                                   epsilon(z, q, r, alpha, n))
    return total


def _viscous_bracket(src, omega, p, q, r, alpha):
    """The ``nu/omega [...]`` term of the unified recurrence."""
    a = alpha
    xa = axis_exponent(a, p, q, r)
    xo = axis_exponent(3 - a, p, q, r)
    f = math.factorial
    u = src.u
    w = omega - 1
    s_plus, s_minus = _sgn(a + 1), _sgn(a)
    mode = src.mode
    fr = lambda x: _as_scalar(x, mode)
    br = (f(xa + 2) // f(xa) * u(a, w, p + 2 * s_plus + 2 * (a - 1), q, r + 2 * s_minus + 2 * (2 - a))
          + f(q + 2) // f(q) * u(a, w, p, q + 2, r)
          + f(xo + 2) // f(xo) * u(a, w, p + 2 * (a - 1), q, r + 2 * (2 - a))
          - fr(Fraction(f(xa + 3), q * f(xa))) * u(0, w, p + 3 * (2 - a), q - 1, r + 3 * (a - 1))
          - (xa + 1) * (q + 1) * u(0, w, p + 2 - a, q + 1, r + a - 1)
          - fr(Fraction((xa + 1) * f(xo + 2), q * f(xo)))
          * u(0, w, p + 2 * s_plus + 3 * a - 4 + 2 * (a - 1), q - 1, r + 2 * s_minus - 3 * a + 5 + 2 * (2 - a)))
    return src.nu * fr(Fraction(1, omega)) * br


def _convection_unified(src, omega, p, q, r, alpha):
    from .recurrence import _convection_sum

    return _convection_sum(src.u, alpha, omega, p, q, r, src.mode)


class IdentityViolation(NamedTuple):
    name: str
    index: Tuple[int, int, int, int, int]
    lhs: Scalar
    rhs: Scalar


def verify_compaction_identities(src: CoefficientSource, omegas=(1, 2), ps=range(2, 5), qs=range(4, 7),
                                 rs=range(2, 5), alphas=(1, 2)) -> List[IdentityViolation]:
    """Check the four recursions in ``q`` behind the first compaction.

    They express the boundary term, the forcing term, the viscous sum and
    the grouped nonlinear sum at ``q`` through their values at ``q - 2``.
    Only ``q >= 4`` is meaningful (the lower pair must be interior).
    Returns the violations found; an empty list means all hold.
    """
    mode = src.mode
    out: List[IdentityViolation] = []

    def eq(a, b):
        return a == b if mode == EXACT else abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))

    for omega in omegas:
        for p in ps:
            for q in qs:
                for r in rs:
                    for alpha in alphas:
                        idx = (omega, p, q, r, alpha)
                        (p1, q1, r1, a1), (p2, q2, r2, a2) = _lower_pair(p, q, r, alpha)
                        if not (interior(omega, p1, q1, r1) and interior(omega, p2, q2, r2)):
                            continue
                        lhs = boundary_unrolled(src, omega, p, q, r, alpha)
                        rhs = _recursion_rhs(lambda *a: boundary_unrolled(src, *a), omega, p, q, r, alpha, mode)
                        if not eq(lhs, rhs):
                            out.append(IdentityViolation("boundary", idx, lhs, rhs))
                        lhs = forcing_unrolled(src, omega, p, q, r, alpha)
                        rhs = _recursion_rhs(lambda *a: forcing_unrolled(src, *a), omega, p, q, r, alpha, mode)
                        rhs += _as_scalar(Fraction(1, omega), mode) * (
                            src.g(alpha, omega - 1, p, q, r)
                            - _as_scalar(Fraction(axis_exponent(alpha, p, q, r) + 1, q), mode)
                            * src.g(0, omega - 1, p + 2 - alpha, q - 1, r + alpha - 1))
                        if not eq(lhs, rhs):
                            out.append(IdentityViolation("forcing", idx, lhs, rhs))
                        lhs = _viscous_sum(src, omega, p, q, r, alpha, half(q))
                        rhs = _recursion_rhs(lambda w, pp, qq, rr, aa: _viscous_sum(src, w, pp, qq, rr, aa, half(q) - 1),
                                             omega, p, q, r, alpha, mode) + _viscous_bracket(src, omega, p, q, r, alpha)
                        if not eq(lhs, rhs):
                            out.append(IdentityViolation("viscous", idx, lhs, rhs))
                        lhs = nonlinear_grouped(src, omega, p, q, r, alpha)
                        rhs = _recursion_rhs(lambda *a: nonlinear_grouped(src, *a), omega, p, q, r, alpha, mode)
                        rhs += _convection_unified(src, omega, p, q, r, alpha)
                        if not eq(lhs, rhs):
                            out.append(IdentityViolation("nonlinear", idx, lhs, rhs))
    return out
