"""Sparse four-variable power series with exact or float coefficients.

A series in (t, x, y, z) is stored as a map from exponent tuples
``(omega, p, q, r)`` to coefficients.  Two arithmetic modes exist:
``"exact"`` uses :class:`fractions.Fraction` and compares literally,
``"float"`` uses Python floats and compares with an absolute tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, Mapping, NamedTuple, Optional, Tuple, Union

Scalar = Union[Fraction, float]

EXACT = "exact"
FLOAT = "float"
MODES = (EXACT, FLOAT)
DEFAULT_TOLERANCE = 1e-12

AXES = {"t": 0, "x": 1, "y": 2, "z": 3}


class ModeMismatchError(ValueError):
    """Raised when series of different arithmetic modes are combined."""


class MultiIndex(NamedTuple):
    omega: int
    p: int
    q: int
    r: int

    @property
    def spatial_degree(self) -> int:
        return self.p + self.q + self.r

    def is_negative(self) -> bool:
        return self.omega < 0 or self.p < 0 or self.q < 0 or self.r < 0

    def shifted(self, axis: int, amount: int) -> "MultiIndex":
        parts = list(self)
        parts[axis] += amount
        return MultiIndex(*parts)


def as_index(idx: Iterable[int]) -> MultiIndex:
    if isinstance(idx, MultiIndex):
        return idx
    return MultiIndex(*(int(v) for v in idx))


def convert(value, mode: str) -> Scalar:
    """Coerce ``value`` into the scalar type of ``mode``."""
    if mode == EXACT:
        if isinstance(value, float):
            return Fraction(value)
        return Fraction(value)
    if mode == FLOAT:
        return float(value)
    raise ValueError(f"unknown arithmetic mode {mode!r}")


def zero(mode: str) -> Scalar:
    return Fraction(0) if mode == EXACT else 0.0


def scalars_equal(a: Scalar, b: Scalar, mode: str = EXACT, tol: float = DEFAULT_TOLERANCE) -> bool:
    if mode == EXACT:
        return a == b
    return abs(float(a) - float(b)) <= tol


@dataclass(frozen=True)
class Caps:
    """Truncation bounds of a coefficient field.

    ``omega`` and ``nx``/``ny``/``nz`` bound each exponent separately.  The
    optional ``total`` bounds the spatial degree ``p + q + r`` at ``omega = 0``
    and shrinks by ``slope`` per time order, which describes the dependency
    cone of the momentum recurrence without wasting work on the corners.
    """

    omega: int
    nx: int
    ny: int
    nz: int
    total: Optional[int] = None
    slope: int = 0

    def __post_init__(self):
        if min(self.omega, self.nx, self.ny, self.nz) < 0:
            raise ValueError("caps must be non-negative")
        if self.total is not None and self.total < 0:
            raise ValueError("total-degree cap must be non-negative")

    @classmethod
    def uniform(cls, omega: int, spatial: int, total: Optional[int] = None, slope: int = 0) -> "Caps":
        return cls(omega, spatial, spatial, spatial, total, slope)

    @classmethod
    def cone(cls, omega: int, total: int, slope: int = 2) -> "Caps":
        """Caps holding every index with ``p+q+r <= total - slope*omega``."""
        return cls(omega, total, total, total, total, slope)

    def degree_limit(self, omega: int) -> Optional[int]:
        if self.total is None:
            return None
        return self.total - self.slope * omega

    def contains(self, idx: Tuple[int, int, int, int]) -> bool:
        w, p, q, r = idx
        if w < 0 or p < 0 or q < 0 or r < 0:
            return False
        if w > self.omega or p > self.nx or q > self.ny or r > self.nz:
            return False
        limit = self.degree_limit(w)
        return limit is None or p + q + r <= limit

    def indices(self, omega: Optional[int] = None) -> Iterator[MultiIndex]:
        """All indices inside the caps, ascending in (omega, q, p, r)."""
        levels = range(self.omega + 1) if omega is None else [omega]
        for w in levels:
            for q in range(self.ny + 1):
                for p in range(self.nx + 1):
                    for r in range(self.nz + 1):
                        idx = MultiIndex(w, p, q, r)
                        if self.contains(idx):
                            yield idx

    def union(self, other: "Caps") -> "Caps":
        if (self.total, self.slope) != (other.total, other.slope):
            total = None if self.total is None or other.total is None else max(self.total, other.total)
            slope = min(self.slope, other.slope)
        else:
            total, slope = self.total, self.slope
        return Caps(max(self.omega, other.omega), max(self.nx, other.nx), max(self.ny, other.ny),
                    max(self.nz, other.nz), total, slope)


@dataclass(frozen=True)
class CoefficientField:
    """An immutable sparse coefficient map restricted to ``caps``."""

    entries: Mapping[MultiIndex, Scalar]
    caps: Caps
    mode: str = EXACT

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown arithmetic mode {self.mode!r}")
        clean: Dict[MultiIndex, Scalar] = {}
        for idx, value in self.entries.items():
            idx = as_index(idx)
            if idx.is_negative():
                raise ValueError(f"stored index {tuple(idx)} has a negative component")
            if not self.caps.contains(idx):
                raise ValueError(f"index {tuple(idx)} lies outside the caps")
            value = convert(value, self.mode)
            if value != 0:
                clean[idx] = value
        object.__setattr__(self, "entries", clean)

    @classmethod
    def zeros(cls, caps: Caps, mode: str = EXACT) -> "CoefficientField":
        return cls({}, caps, mode)

    @classmethod
    def from_function(cls, fn: Callable[[MultiIndex], Scalar], caps: Caps, mode: str = EXACT) -> "CoefficientField":
        return cls({idx: fn(idx) for idx in caps.indices()}, caps, mode)

    def __getitem__(self, idx) -> Scalar:
        return self.entries.get(as_index(idx), zero(self.mode))

    def lookup(self, idx) -> Tuple[Scalar, bool]:
        """Return ``(value, truncated)``; reads outside the caps give 0 and ``True``."""
        idx = as_index(idx)
        if not self.caps.contains(idx):
            return zero(self.mode), True
        return self.entries.get(idx, zero(self.mode)), False

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def restrict(self, caps: Caps) -> "CoefficientField":
        return CoefficientField({k: v for k, v in self.entries.items() if caps.contains(k)}, caps, self.mode)

    def map_values(self, fn: Callable[[Scalar], Scalar]) -> "CoefficientField":
        return CoefficientField({k: fn(v) for k, v in self.entries.items()}, self.caps, self.mode)

    def scaled(self, factor) -> "CoefficientField":
        factor = convert(factor, self.mode)
        return self.map_values(lambda v: v * factor)

    def to_mode(self, mode: str) -> "CoefficientField":
        return CoefficientField({k: convert(v, mode) for k, v in self.entries.items()}, self.caps, mode)

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        _check_modes(self, other)
        caps = self.caps.union(other.caps)
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out.get(k, zero(self.mode)) + v
        return CoefficientField(out, caps, self.mode)

    def __neg__(self) -> "CoefficientField":
        return self.map_values(lambda v: -v)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        return self + (-other)

    def equals(self, other: "CoefficientField", tol: float = DEFAULT_TOLERANCE) -> bool:
        keys = set(self.entries) | set(other.entries)
        return all(scalars_equal(self[k], other[k], self.mode, tol) for k in keys)


def _check_modes(*fields: CoefficientField) -> str:
    modes = {f.mode for f in fields}
    if len(modes) != 1:
        raise ModeMismatchError(f"cannot combine series in modes {sorted(modes)}")
    return modes.pop()


def cauchy_product(a: CoefficientField, b: CoefficientField, caps: Optional[Caps] = None) -> CoefficientField:
    """Coefficients of the product series, kept only inside ``caps``."""
    mode = _check_modes(a, b)
    if caps is None:
        caps = a.caps.union(b.caps)
    out: Dict[MultiIndex, Scalar] = {}
    if len(a) > len(b):
        a, b = b, a
    for ka, va in a.entries.items():
        for kb, vb in b.entries.items():
            k = MultiIndex(ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2], ka[3] + kb[3])
            if caps.contains(k):
                out[k] = out.get(k, zero(mode)) + va * vb
    return CoefficientField(out, caps, mode)


def derivative_shift(a: CoefficientField, axis: Union[str, int], order: int = 1) -> CoefficientField:
    """Coefficients of the ``order``-th partial derivative along ``axis``."""
    if order < 1:
        raise ValueError("derivative order must be at least 1")
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    if ax not in (0, 1, 2, 3):
        raise ValueError(f"unknown axis {axis!r}")
    out: Dict[MultiIndex, Scalar] = {}
    for k, v in a.entries.items():
        if k[ax] < order:
            continue
        target = k.shifted(ax, -order)
        factor = math.perm(k[ax], order)
        out[target] = v * factor if a.mode == EXACT else v * float(factor)
    return CoefficientField(out, a.caps, a.mode)


def evaluate(a: CoefficientField, point: Tuple) -> Scalar:
    """Value of the truncated series at ``(t, x, y, z)``."""
    t, x, y, z = (convert(c, a.mode) for c in point)
    total = zero(a.mode)
    for (w, p, q, r), v in a.entries.items():
        total += v * t ** w * x ** p * y ** q * z ** r
    return total


# Text record format shared by every file the package reads or writes:
#   <name> <omega> <p> <q> <r> <value>
FIELD_NAMES = ("u1", "u0", "u2", "P", "g0", "g1", "g2")


def format_scalar(value: Scalar) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    return repr(float(value))


def parse_scalar(text: str, mode: str = EXACT) -> Scalar:
    if mode == EXACT:
        return Fraction(text)
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def write_records(fields: Mapping[str, CoefficientField], stream) -> None:
    for name in FIELD_NAMES:
        if name not in fields:
            continue
        for idx in sorted(fields[name].entries):
            value = fields[name].entries[idx]
            stream.write(f"{name} {idx[0]} {idx[1]} {idx[2]} {idx[3]} {format_scalar(value)}\n")


def read_records(stream, mode: str = EXACT) -> Dict[str, Dict[MultiIndex, Scalar]]:
    """Parse records into ``{name: {index: value}}``; blank lines and ``#`` comments are skipped."""
    out: Dict[str, Dict[MultiIndex, Scalar]] = {}
    for lineno, line in enumerate(stream, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        name = parts[0]
        if name not in FIELD_NAMES:
            raise ValueError(f"line {lineno}: unknown field name {name!r}")
        idx = MultiIndex(*(int(v) for v in parts[1:5]))
        if idx.is_negative():
            raise ValueError(f"line {lineno}: negative index {tuple(idx)}")
        out.setdefault(name, {})[idx] = parse_scalar(parts[5], mode)
    return out
