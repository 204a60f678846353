"""Exact rational power series of a rotated Taylor-Green vortex.

In its own frame ``(a, b, c)`` the decaying vortex

    v_a =  sin a cos b e^{-2 nu t},   v_b = -cos a sin b e^{-2 nu t},   v_c = 0,
    P   = (rho / 4) (cos 2a + cos 2b) e^{-4 nu t}

solves the unforced incompressible equations.  Rotating by the rational
orthogonal matrix :data:`ROTATION` makes all three velocity components and all
three coordinates participate.  Products of sines and cosines are split into
sines and cosines of single linear forms ``L . X``, whose Taylor coefficients
are ``(+-1) L_x^i L_y^j L_z^l / (i! j! l!)``, so every coefficient is exact.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Dict, Tuple

from .recurrence import BoundaryData, FlowConfig, on_pressure_slab, on_velocity_slab
from .series import EXACT, Caps, CoefficientField, MultiIndex

ROTATION = tuple(tuple(Fraction(v, 3) for v in row) for row in ((2, -1, 2), (2, 2, -1), (-1, 2, 2)))

# physical axis carrying each velocity component: u[1] -> x, u[0] -> y, u[2] -> z
_AXIS_OF_COMPONENT = {1: 0, 0: 1, 2: 2}

LinearForm = Tuple[Fraction, Fraction, Fraction]


def _frame_axis(column: int, scale: int = 1) -> LinearForm:
    # frame coordinate number ``column`` as a linear form in (x, y, z)
    return tuple(scale * ROTATION[m][column] for m in range(3))


def _combine(f: LinearForm, g: LinearForm, sign: int) -> LinearForm:
    return tuple(a + sign * b for a, b in zip(f, g))


def trig_coefficient(kind: str, form: LinearForm, p: int, q: int, r: int) -> Fraction:
    """Coefficient of ``x^p y^q z^r`` in ``sin(form . X)`` or ``cos(form . X)``."""
    n = p + q + r
    if kind == "sin":
        if n % 2 == 0:
            return Fraction(0)
        sign = -1 if (n - 1) // 2 % 2 else 1
    else:
        if n % 2:
            return Fraction(0)
        sign = -1 if n // 2 % 2 else 1
    return sign * form[0] ** p * form[1] ** q * form[2] ** r / (
        math.factorial(p) * math.factorial(q) * math.factorial(r))


def decay_coefficient(rate, omega: int) -> Fraction:
    """Coefficient of ``t^omega`` in ``exp(-rate t)``."""
    return Fraction(-rate) ** omega / math.factorial(omega)


class TaylorGreen:
    """Coefficient oracle for the rotated vortex with viscosity ``nu`` and density ``rho``."""

    def __init__(self, nu=Fraction(1, 2), density=Fraction(1)):
        self.nu = Fraction(nu)
        self.density = Fraction(density)
        a = _frame_axis(0)
        b = _frame_axis(1)
        self._sum = _combine(a, b, 1)
        self._diff = _combine(a, b, -1)
        self._twice_a = _frame_axis(0, 2)
        self._twice_b = _frame_axis(1, 2)

    def velocity(self, alpha: int, omega: int, p: int, q: int, r: int) -> Fraction:
        # v_a = (sin(a+b) + sin(a-b)) / 2,  v_b = (sin(a-b) - sin(a+b)) / 2
        s_plus = trig_coefficient("sin", self._sum, p, q, r)
        s_minus = trig_coefficient("sin", self._diff, p, q, r)
        va = (s_plus + s_minus) / 2
        vb = (s_minus - s_plus) / 2
        axis = _AXIS_OF_COMPONENT[alpha]
        spatial = ROTATION[axis][0] * va + ROTATION[axis][1] * vb
        return spatial * decay_coefficient(2 * self.nu, omega)

    def pressure(self, omega: int, p: int, q: int, r: int) -> Fraction:
        spatial = (trig_coefficient("cos", self._twice_a, p, q, r)
                   + trig_coefficient("cos", self._twice_b, p, q, r))
        return self.density / 4 * spatial * decay_coefficient(4 * self.nu, omega)

    def velocity_field(self, alpha: int, caps: Caps, mode: str = EXACT) -> CoefficientField:
        return CoefficientField.from_function(lambda idx: self.velocity(alpha, *idx), caps).to_mode(mode)

    def pressure_field(self, caps: Caps, mode: str = EXACT) -> CoefficientField:
        return CoefficientField.from_function(lambda idx: self.pressure(*idx), caps).to_mode(mode)

    def boundary(self, caps: Caps, mode: str = EXACT) -> Tuple[BoundaryData, FlowConfig]:
        """Initial slice, velocity slab and pressure slab within ``caps``."""
        init: Tuple[Dict, Dict, Dict] = ({}, {}, {})
        vel: Tuple[Dict, Dict, Dict] = ({}, {}, {})
        pressure: Dict[MultiIndex, Fraction] = {}
        for idx in caps.indices():
            if on_velocity_slab(idx):
                target = init if idx.omega == 0 else vel
                for a in (0, 1, 2):
                    value = self.velocity(a, *idx)
                    if value:
                        target[a][idx] = value
            if on_pressure_slab(idx):
                value = self.pressure(*idx)
                if value:
                    pressure[idx] = value

        def fields(parts):
            return tuple(CoefficientField(d, caps, EXACT).to_mode(mode) for d in parts)

        boundary = BoundaryData(fields(init), fields(vel), CoefficientField(pressure, caps, EXACT).to_mode(mode))
        return boundary, FlowConfig(self.nu, self.density, None)
