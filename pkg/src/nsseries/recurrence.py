"""Coefficient march for the incompressible Navier-Stokes equations.

Components follow the numbering used throughout the package: ``u[1]`` is the
x-velocity, ``u[0]`` the y-velocity and ``u[2]`` the z-velocity.  The
y-velocity is never marched directly; for ``q >= 1`` it comes from the
continuity equation, which keeps the series divergence free by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .series import (
    EXACT,
    Caps,
    CoefficientField,
    MultiIndex,
    Scalar,
    convert,
    derivative_shift,
    evaluate,
    zero,
)

Lookup = Callable[[int, int, int, int, int], Scalar]

COMPONENT_NAMES = {1: "u1", 0: "u0", 2: "u2"}
FORCING_NAMES = {1: "g1", 0: "g0", 2: "g2"}


class BoundarySliceRequired(ValueError):
    """The requested index belongs to the boundary slab, not the recurrence."""


class DependencyOrderError(RuntimeError):
    """A coefficient was read before it was computed."""


class IncompleteBoundaryError(ValueError):
    """Boundary or initial data do not cover the slab the march needs."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"{n}{tuple(i)}" for n, i in self.missing[:12])
        more = f" and {len(self.missing) - 12} more" if len(self.missing) > 12 else ""
        super().__init__(f"missing boundary coefficients: {shown}{more}")


def x_alpha(alpha: int, idx) -> int:
    """Spatial exponent along the direction of component ``alpha``: q, p or r."""
    if alpha == 0:
        return idx[2]
    if alpha == 1:
        return idx[1]
    if alpha == 2:
        return idx[3]
    raise ValueError(f"component must be 0, 1 or 2, got {alpha}")


def on_velocity_slab(idx) -> bool:
    """Initial slice or any spatial exponent in {0, 1}."""
    w, p, q, r = idx
    return w == 0 or p <= 1 or q <= 1 or r <= 1


def on_pressure_slab(idx) -> bool:
    return idx[1] == 0 or idx[2] == 0 or idx[3] == 0


def _ratio(num: int, den: int, mode: str):
    f = Fraction(num, den)
    return f if mode == EXACT else float(f)


@dataclass(frozen=True)
class FlowConfig:
    """Kinematic viscosity, density and body-force series ``g[alpha]``."""

    nu: Scalar
    density: Scalar = Fraction(1)
    g: Optional[Tuple[Optional[CoefficientField], Optional[CoefficientField], Optional[CoefficientField]]] = None

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("density must be positive")

    def forcing(self, alpha: int) -> Optional[CoefficientField]:
        if self.g is None:
            return None
        return self.g[alpha]


@dataclass(frozen=True)
class BoundaryData:
    """Initial slice, velocity boundary slab and pressure boundary slab.

    Each entry of ``init`` and ``velocity`` is indexed by component number.
    A coefficient counts as supplied when it lies inside the caps of the
    field that carries it; absent entries inside those caps are zero.
    """

    init: Tuple[CoefficientField, CoefficientField, CoefficientField]
    velocity: Tuple[CoefficientField, CoefficientField, CoefficientField]
    pressure: Optional[CoefficientField] = None

    def supplied(self, alpha: int, idx) -> bool:
        src = self.init[alpha] if idx[0] == 0 else self.velocity[alpha]
        return src.caps.contains(idx)

    def value(self, alpha: int, idx) -> Scalar:
        src = self.init[alpha] if idx[0] == 0 else self.velocity[alpha]
        return src[idx]

    def pressure_value(self, idx) -> Tuple[Scalar, bool]:
        if self.pressure is None:
            return 0, True
        return self.pressure.lookup(idx)

    @property
    def mode(self) -> str:
        return self.init[1].mode


@dataclass
class SeriesSolution:
    """Velocity and pressure coefficients produced by :func:`march`."""

    u: Dict[int, CoefficientField]
    P: CoefficientField
    config: FlowConfig
    caps: Caps
    contamination: Dict[str, Set[MultiIndex]]
    boundary_disagreements: List[Tuple[str, MultiIndex]] = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.P.mode

    def is_clean(self, name: str, idx) -> bool:
        return tuple(idx) not in self.contamination.get(name, ())

    def lookup(self, alpha: int, idx) -> Scalar:
        return self.u[alpha][idx]

    def fields(self) -> Dict[str, CoefficientField]:
        out = {COMPONENT_NAMES[a]: f for a, f in self.u.items()}
        out["P"] = self.P
        return out

    def contaminated_count(self) -> int:
        return sum(len(v) for v in self.contamination.values())


# ---------------------------------------------------------------------------
# Single-coefficient formulas.  ``u(a, w, p, q, r)`` and ``g(a, w, p, q, r)``
# read velocity and forcing coefficients.


def continuity_value(u: Lookup, omega: int, p: int, q: int, r: int, mode: str = EXACT) -> Scalar:
    if q < 1:
        raise BoundarySliceRequired("the y-velocity at q = 0 comes from the boundary data")
    return (-_ratio(p + 1, q, mode) * u(1, omega, p + 1, q - 1, r)
            - _ratio(r + 1, q, mode) * u(2, omega, p, q - 1, r + 1))


def continuity_coeff(u1: CoefficientField, u2: CoefficientField, idx) -> Scalar:
    """y-velocity coefficient forced by a zero divergence."""
    idx = MultiIndex(*idx)
    fields = {1: u1, 2: u2}
    return convert(continuity_value(lambda a, w, p, q, r: fields[a][(w, p, q, r)], *idx, mode=u1.mode), u1.mode)


def _convection_sum(u: Lookup, alpha: int, omega: int, p: int, q: int, r: int, mode: str) -> Scalar:
    """Nonlinear part of the unified momentum recurrence, before the 1/omega."""
    xa = x_alpha(alpha, (omega, p, q, r))
    total = 0
    for b in (0, 1):
        sign = 1 if b == 0 else -1
        coef = sign * _ratio(math.factorial(b - 1 + q) * math.factorial(xa + 1 - b),
                             math.factorial(q) * math.factorial(xa), mode)
        top_i = p + (1 - b) * (2 - alpha)
        top_j = q + b - 1
        top_l = r + (1 - b) * (alpha - 1)
        second = b * alpha
        for phi in (0, 1, 2):
            di = 1 if phi == 1 else 0
            dj = 1 if phi == 0 else 0
            dl = 1 if phi == 2 else 0
            part = 0
            for k in range(omega):
                lag = omega - 1 - k
                for i in range(top_i + 1):
                    for j in range(top_j + 1):
                        for l in range(top_l + 1):
                            first = u(phi, lag, top_i - i, top_j - j, top_l - l)
                            if not first:
                                continue
                            other = u(second, k, i + di, j + dj, l + dl)
                            if not other:
                                continue
                            weight = dj * j + di * i + dl * l + 1
                            part += weight * first * other
            total += coef * part
    return total


def momentum_value(u: Lookup, g: Lookup, nu, alpha: int, omega: int, p: int, q: int, r: int,
                   mode: str = EXACT) -> Scalar:
    """Unified momentum recurrence for ``u[alpha]`` at ``(omega, p, q, r)``."""
    if alpha not in (1, 2):
        raise ValueError("the momentum recurrence covers components 1 and 2")
    if q < 2:
        raise BoundarySliceRequired(f"q = {q} lies on the boundary slab")
    if omega < 1:
        raise BoundarySliceRequired("omega = 0 is the initial slice")
    a = alpha
    s_plus = (-1) ** (a + 1)
    s_minus = (-1) ** a
    xa = p if a == 1 else r
    xo = r if a == 1 else p
    fact = math.factorial
    same = (-_ratio(xa + 1, q * (q - 1), mode)) * (
        (xa + 2) * u(a, omega, p + 2 * s_plus + 2 * (a - 1), q - 2, r + 2 * s_minus + 2 * (2 - a))
        + (xo + 1) * u(3 - a, omega, p + s_plus + 2 * (a - 1), q - 2, r + s_minus + 2 * (2 - a)))
    w = omega - 1
    visc = (
        fact(xa + 2) // fact(xa) * u(a, w, p + 2 * s_plus + 2 * (a - 1), q, r + 2 * s_minus + 2 * (2 - a))
        + fact(q + 2) // fact(q) * u(a, w, p, q + 2, r)
        + fact(xo + 2) // fact(xo) * u(a, w, p + 2 * (a - 1), q, r + 2 * (2 - a))
        - _ratio(fact(xa + 3), q * fact(xa), mode) * u(0, w, p + 3 * (2 - a), q - 1, r + 3 * (a - 1))
        - (xa + 1) * (q + 1) * u(0, w, p + 2 - a, q + 1, r + a - 1)
        - _ratio((xa + 1) * fact(xo + 2), q * fact(xo), mode)
        * u(0, w, p + 2 * s_plus + 3 * a - 4 + 2 * (a - 1), q - 1, r + 2 * s_minus - 3 * a + 5 + 2 * (2 - a)))
    inv_omega = _ratio(1, omega, mode)
    force = g(a, w, p, q, r) - _ratio(xa + 1, q, mode) * g(0, w, p + 2 - a, q - 1, r + a - 1)
    conv = _convection_sum(u, a, omega, p, q, r, mode)
    return same + nu * inv_omega * visc + inv_omega * conv + inv_omega * force


def momentum_value_direct(u: Lookup, g: Lookup, nu, alpha: int, omega: int, p: int, q: int, r: int,
                          mode: str = EXACT) -> Scalar:
    """Separate transcriptions of the x- and z-momentum recurrences.

    Written term by term from the pressure-eliminated x- and z-momentum
    equations, with the left side at time order ``omega``, so it shares no
    index arithmetic with :func:`momentum_value`.
    """
    if q < 2 or omega < 1:
        raise BoundarySliceRequired("target lies on the boundary slab")
    w = omega - 1
    fact = math.factorial
    inv = _ratio(1, omega, mode)

    def triple(outer: int, first_shift: Tuple[int, int, int], ranges: Tuple[int, int, int]) -> Scalar:
        # sum over k, i, j, l of the three advective products feeding component ``outer``
        total = 0
        di, dj, dl = first_shift
        ti, tj, tl = ranges
        for k in range(omega):
            for i in range(ti + 1):
                for j in range(tj + 1):
                    for l in range(tl + 1):
                        lag = (w - k, ti - i, tj - j, tl - l)
                        total += (i + 1) * u(1, *lag) * u(outer, k, i + 1, j, l)
                        total += (j + 1) * u(0, *lag) * u(outer, k, i, j + 1, l)
                        total += (l + 1) * u(2, *lag) * u(outer, k, i, j, l + 1)
        return total

    if alpha == 1:
        same = -_ratio(p + 1, q * (q - 1), mode) * (
            (p + 2) * u(1, omega, p + 2, q - 2, r) + (r + 1) * u(2, omega, p + 1, q - 2, r + 1))
        visc = (fact(p + 2) // fact(p) * u(1, w, p + 2, q, r)
                + fact(q + 2) // fact(q) * u(1, w, p, q + 2, r)
                + fact(r + 2) // fact(r) * u(1, w, p, q, r + 2)
                - _ratio(fact(p + 3), q * fact(p), mode) * u(0, w, p + 3, q - 1, r)
                - (p + 1) * (q + 1) * u(0, w, p + 1, q + 1, r)
                - _ratio((p + 1) * fact(r + 2), q * fact(r), mode) * u(0, w, p + 1, q - 1, r + 2))
        conv = triple(1, (0, 0, 0), (p, q, r)) - _ratio(p + 1, q, mode) * triple(0, (0, 0, 0), (p + 1, q - 1, r))
        force = g(1, w, p, q, r) - _ratio(p + 1, q, mode) * g(0, w, p + 1, q - 1, r)
    elif alpha == 2:
        same = -_ratio(r + 1, q * (q - 1), mode) * (
            (r + 2) * u(2, omega, p, q - 2, r + 2) + (p + 1) * u(1, omega, p + 1, q - 2, r + 1))
        visc = (fact(r + 2) // fact(r) * u(2, w, p, q, r + 2)
                + fact(q + 2) // fact(q) * u(2, w, p, q + 2, r)
                + fact(p + 2) // fact(p) * u(2, w, p + 2, q, r)
                - _ratio(fact(r + 3), q * fact(r), mode) * u(0, w, p, q - 1, r + 3)
                - (r + 1) * (q + 1) * u(0, w, p, q + 1, r + 1)
                - _ratio((r + 1) * fact(p + 2), q * fact(p), mode) * u(0, w, p + 2, q - 1, r + 1))
        conv = triple(2, (0, 0, 0), (p, q, r)) - _ratio(r + 1, q, mode) * triple(0, (0, 0, 0), (p, q - 1, r + 1))
        force = g(2, w, p, q, r) - _ratio(r + 1, q, mode) * g(0, w, p, q - 1, r + 1)
    else:
        raise ValueError("the momentum recurrence covers components 1 and 2")
    return same + nu * inv * visc - inv * conv + inv * force


def pressure_value(u: Lookup, g: Lookup, nu, density, omega: int, P: int, Q: int, R: int,
                   mode: str = EXACT) -> Scalar:
    """Pressure coefficient at ``(omega, P, Q, R)`` from the x-momentum balance."""
    if P < 1 or Q < 1 or R < 1:
        raise BoundarySliceRequired("pressure with a zero spatial exponent comes from the boundary data")
    p, q, r = P - 1, Q - 1, R - 1
    conv = 0
    for k in range(omega + 1):
        for i in range(p + 1):
            for j in range(q + 2):
                for l in range(r + 2):
                    lag = (omega - k, p - i, q + 1 - j, r + 1 - l)
                    conv += (i + 1) * u(1, *lag) * u(1, k, i + 1, j, l)
                    conv += (j + 1) * u(0, *lag) * u(1, k, i, j + 1, l)
                    conv += (l + 1) * u(2, *lag) * u(1, k, i, j, l + 1)
    visc = ((p + 1) * (p + 2) * u(1, omega, p + 2, q + 1, r + 1)
            + (q + 2) * (q + 3) * u(1, omega, p, q + 3, r + 1)
            + (r + 2) * (r + 3) * u(1, omega, p, q + 1, r + 3))
    bracket = (omega + 1) * u(1, omega + 1, p, q + 1, r + 1) + conv - nu * visc - g(1, omega, p, q + 1, r + 1)
    return -density * _ratio(1, p + 1, mode) * bracket


# ---------------------------------------------------------------------------
# March state


class _MarchState:
    """Mutable coefficient store with dependency and truncation bookkeeping."""

    def __init__(self, caps: Caps, mode: str, config: FlowConfig):
        self.caps = caps
        self.mode = mode
        self.config = config
        self.vals: Tuple[dict, dict, dict] = ({}, {}, {})
        self.computed: Tuple[set, set, set] = (set(), set(), set())
        self.dirty: Tuple[set, set, set] = (set(), set(), set())
        self.touched = False
        self.strict = True

    def ready(self, a: int, key) -> bool:
        if a == 0:
            return key[2] == 0 or key in self.computed[0]
        return on_velocity_slab(key) or key in self.computed[a]

    def u(self, a: int, w: int, p: int, q: int, r: int):
        key = (w, p, q, r)
        if not self.caps.contains(key):
            self.touched = True
            return 0
        if key in self.dirty[a]:
            self.touched = True
        elif self.strict and not self.ready(a, key):
            raise DependencyOrderError(f"{COMPONENT_NAMES[a]}{key} read before it was computed")
        return self.vals[a].get(key, 0)

    def g(self, a: int, w: int, p: int, q: int, r: int):
        fld = self.config.forcing(a)
        if fld is None:
            return 0
        value, truncated = fld.lookup((w, p, q, r))
        if truncated:
            self.touched = True
        return value

    def store(self, a: int, key, value, computed: bool = True):
        if value:
            self.vals[a][key] = value
        if computed:
            self.computed[a].add(key)
        if self.touched:
            self.dirty[a].add(key)

    def field(self, a: int) -> CoefficientField:
        return CoefficientField(self.vals[a], self.caps, self.mode)


class _FieldReader:
    """Lookup adapter over finished fields; out-of-cap reads flag ``touched``."""

    def __init__(self, fields: Mapping[int, CoefficientField], dirty: Mapping[int, Set] = None,
                 forcing: FlowConfig = None):
        self.fields = fields
        self.dirty = dirty or {}
        self.config = forcing
        self.touched = False

    def u(self, a, w, p, q, r):
        key = (w, p, q, r)
        fld = self.fields[a]
        if key in self.dirty.get(a, ()):
            self.touched = True
        value, truncated = fld.lookup(key)
        if truncated:
            self.touched = True
        return value

    def g(self, a, w, p, q, r):
        if self.config is None:
            return 0
        fld = self.config.forcing(a)
        if fld is None:
            return 0
        value, truncated = fld.lookup((w, p, q, r))
        if truncated:
            self.touched = True
        return value


def missing_boundary(boundary: BoundaryData, caps: Caps) -> List[Tuple[str, MultiIndex]]:
    """Slab coefficients inside ``caps`` that the boundary data do not cover."""
    missing = []
    for idx in caps.indices():
        if not on_velocity_slab(idx):
            continue
        for a in (1, 2):
            if not boundary.supplied(a, idx):
                missing.append((COMPONENT_NAMES[a], idx))
        if idx.q == 0 and not boundary.supplied(0, idx):
            missing.append(("u0", idx))
    return missing


def march(boundary: BoundaryData, config: FlowConfig, caps: Caps, check_boundary: bool = True,
          with_pressure: bool = True) -> SeriesSolution:
    """Fill every velocity coefficient inside ``caps`` and then the pressure.

    x- and z-velocities at ``p, q, r >= 2`` come from the momentum recurrence
    in ascending ``(omega, q)``; the y-velocity at ``q >= 1`` from continuity.
    Entries whose dependency chain left the caps are recorded as contaminated.
    """
    mode = boundary.mode
    if check_boundary:
        missing = missing_boundary(boundary, caps)
        if missing:
            raise IncompleteBoundaryError(missing)
    st = _MarchState(caps, mode, config)
    nu = convert(config.nu, mode)
    for idx in caps.indices():
        if on_velocity_slab(idx):
            for a in (1, 2):
                st.store(a, idx, boundary.value(a, idx), computed=False)
            if idx.q == 0:
                st.store(0, idx, boundary.value(0, idx), computed=False)
    disagreements: List[Tuple[str, MultiIndex]] = []

    def fill_continuity(level: int):
        for idx in caps.indices(level):
            if idx.q == 0:
                continue
            st.touched = False
            value = continuity_value(st.u, *idx, mode=mode)
            st.store(0, idx, value)
            if boundary.supplied(0, idx) and on_velocity_slab(idx) and not st.touched:
                if boundary.value(0, idx) != 0 and boundary.value(0, idx) != value:
                    disagreements.append(("u0", idx))

    fill_continuity(0)
    for w in range(1, caps.omega + 1):
        for idx in caps.indices(w):
            if idx.p < 2 or idx.q < 2 or idx.r < 2:
                continue
            for a in (1, 2):
                st.touched = False
                st.store(a, idx, momentum_value(st.u, st.g, nu, a, *idx, mode=mode))
        fill_continuity(w)

    u = {a: st.field(a) for a in (0, 1, 2)}
    dirty = {COMPONENT_NAMES[a]: {MultiIndex(*k) for k in st.dirty[a]} for a in (0, 1, 2)}
    sol = SeriesSolution(u, CoefficientField({}, caps, mode), config, caps, dirty, disagreements)
    if with_pressure:
        fill_pressure(sol, boundary)
    return sol


def fill_pressure(sol: SeriesSolution, boundary: BoundaryData) -> None:
    """Pressure: boundary slab from the data, interior from the x-momentum balance."""
    mode = sol.mode
    caps = sol.caps
    reader = _FieldReader(sol.u, {a: sol.contamination[COMPONENT_NAMES[a]] for a in (0, 1, 2)}, sol.config)
    nu = convert(sol.config.nu, mode)
    rho = convert(sol.config.density, mode)
    values = {}
    dirty = set()
    for idx in caps.indices():
        if on_pressure_slab(idx):
            value, truncated = boundary.pressure_value(idx)
            if truncated:
                dirty.add(idx)
            values[idx] = value
            continue
        reader.touched = False
        values[idx] = pressure_value(reader.u, reader.g, nu, rho, *idx, mode=mode)
        if reader.touched:
            dirty.add(idx)
    sol.P = CoefficientField(values, caps, mode)
    sol.contamination["P"] = dirty


def pressure_coeff(sol: SeriesSolution, target) -> Scalar:
    """Pressure coefficient at ``target`` (all spatial exponents at least 1)."""
    target = MultiIndex(*target)
    reader = _FieldReader(sol.u, None, sol.config)
    nu = convert(sol.config.nu, sol.mode)
    rho = convert(sol.config.density, sol.mode)
    return convert(pressure_value(reader.u, reader.g, nu, rho, *target, mode=sol.mode), sol.mode)


def momentum_coeff(alpha: int, target, sol: SeriesSolution, boundary: Optional[BoundaryData] = None,
                   config: Optional[FlowConfig] = None, computed: Optional[Mapping[int, Set]] = None) -> Scalar:
    """Momentum recurrence at ``target`` reading coefficients from ``sol``.

    Slab coefficients come from ``boundary`` when given, otherwise from
    ``sol``.  ``computed`` lists, per component, the interior indices already
    available; reading any other interior index inside the caps raises
    :class:`DependencyOrderError`.  Without ``computed`` every interior entry
    of ``sol`` counts as available.
    """
    target = MultiIndex(*target)
    config = config or sol.config
    reader = _FieldReader(sol.u, None, config)
    mode = sol.mode

    def u(a, w, p, q, r):
        key = (w, p, q, r)
        slab = on_velocity_slab(key) if a else q == 0
        if slab and boundary is not None and boundary.supplied(a, key):
            return boundary.value(a, key)
        if computed is not None and not slab and sol.u[a].caps.contains(key):
            if key not in computed.get(a, ()):
                raise DependencyOrderError(f"{COMPONENT_NAMES[a]}{key} is not available yet")
        return reader.u(a, w, p, q, r)

    return convert(momentum_value(u, reader.g, convert(config.nu, mode), alpha, *target, mode=mode), mode)


def divergence_check(sol: SeriesSolution) -> List[MultiIndex]:
    """Indices where the continuity coefficient does not vanish."""
    u = sol.u
    bad = []
    mode = sol.mode
    for idx in sol.caps.indices():
        w, p, q, r = idx
        needed = [(1, (w, p + 1, q, r)), (0, (w, p, q + 1, r)), (2, (w, p, q, r + 1))]
        if any(not sol.caps.contains(k) or not sol.is_clean(COMPONENT_NAMES[a], k) for a, k in needed):
            continue
        total = (p + 1) * u[1][(w, p + 1, q, r)] + (q + 1) * u[0][(w, p, q + 1, r)] + (r + 1) * u[2][(w, p, q, r + 1)]
        if mode == EXACT:
            if total != 0:
                bad.append(idx)
        elif abs(total) > 1e-12:
            bad.append(idx)
    return bad


# ---------------------------------------------------------------------------
# Residual of the truncated series in the PDE


def truncated_fields(sol: SeriesSolution, max_degree: Optional[int] = None) -> Dict[str, CoefficientField]:
    """Clean entries, optionally limited to ``omega + p + q + r <= max_degree``."""
    out = {}
    for name, fld in sol.fields().items():
        dirty = sol.contamination.get(name, set())
        keep = {k: v for k, v in fld.entries.items()
                if k not in dirty and (max_degree is None or sum(k) <= max_degree)}
        out[name] = CoefficientField(keep, fld.caps, fld.mode)
    return out


def residual_table(sol: SeriesSolution, points: Sequence[Tuple], max_degree: Optional[int] = None) -> List[Dict[str, Scalar]]:
    """PDE residuals of the truncated series at each point.

    Keys: ``continuity``, ``momentum_x``, ``momentum_y``, ``momentum_z``.
    Momentum residuals are ``dU/dt + (U.grad)U + grad(P)/rho - nu lap(U) - g``.
    """
    fields = truncated_fields(sol, max_degree)
    mode = sol.mode
    nu = convert(sol.config.nu, mode)
    rho = convert(sol.config.density, mode)
    comps = {1: fields["u1"], 0: fields["u0"], 2: fields["u2"]}
    axis_of = {1: "x", 0: "y", 2: "z"}
    deriv = {}
    for a, f in comps.items():
        deriv[(a, "t")] = derivative_shift(f, "t")
        for ax in "xyz":
            deriv[(a, ax)] = derivative_shift(f, ax)
            deriv[(a, ax + ax)] = derivative_shift(f, ax, 2)
    grad_p = {a: derivative_shift(fields["P"], axis_of[a]) for a in (0, 1, 2)}
    rows = []
    for pt in points:
        vel = {a: evaluate(f, pt) for a, f in comps.items()}
        vals = {k: evaluate(f, pt) for k, f in deriv.items()}
        row = {"continuity": vals[(1, "x")] + vals[(0, "y")] + vals[(2, "z")]}
        for a, name in ((1, "momentum_x"), (0, "momentum_y"), (2, "momentum_z")):
            adv = vel[1] * vals[(a, "x")] + vel[0] * vals[(a, "y")] + vel[2] * vals[(a, "z")]
            lap = vals[(a, "xx")] + vals[(a, "yy")] + vals[(a, "zz")]
            force = zero(mode)
            g = sol.config.forcing(a)
            if g is not None:
                force = evaluate(g, pt)
            row[name] = vals[(a, "t")] + adv + evaluate(grad_p[a], pt) / rho - nu * lap - force
        rows.append(row)
    return rows


def residual(sol: SeriesSolution, points: Sequence[Tuple], max_degree: Optional[int] = None) -> Dict[str, Scalar]:
    """Largest absolute residual of each equation over ``points``."""
    rows = residual_table(sol, points, max_degree)
    keys = ("continuity", "momentum_x", "momentum_y", "momentum_z")
    return {k: max((abs(row[k]) for row in rows), default=zero(sol.mode)) for k in keys}
