"""Seeded random boundary data for cross-checking the solvers."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Optional, Tuple

from .recurrence import BoundaryData, FlowConfig, on_pressure_slab, on_velocity_slab
from .series import EXACT, Caps, CoefficientField

NUMERATORS = range(-3, 4)
DENOMINATORS = (1, 2, 3)


def _draw(rng: random.Random) -> Fraction:
    return Fraction(rng.choice(NUMERATORS), rng.choice(DENOMINATORS))


def random_dataset(seed: int, caps: Caps, density: float = 0.3, forcing: bool = True,
                   mode: str = EXACT) -> Tuple[BoundaryData, FlowConfig]:
    """Sparse rational initial, boundary and forcing coefficients inside ``caps``.

    Values are ``n/d`` with ``n`` in [-3, 3] and ``d`` in {1, 2, 3}; each slab
    entry is nonzero with probability ``density``.  The y-velocity is drawn only
    at ``q = 0`` since continuity fixes it elsewhere.
    """
    rng = random.Random(seed)
    init = ({}, {}, {})
    vel = ({}, {}, {})
    pressure = {}
    force = ({}, {}, {})
    for idx in caps.indices():
        if on_velocity_slab(idx):
            target = init if idx.omega == 0 else vel
            for a in (1, 2):
                if rng.random() < density:
                    target[a][idx] = _draw(rng)
            if idx.q == 0 and rng.random() < density:
                target[0][idx] = _draw(rng)
        if on_pressure_slab(idx) and rng.random() < density:
            pressure[idx] = _draw(rng)
        if forcing:
            for a in (0, 1, 2):
                if rng.random() < density / 3:
                    force[a][idx] = _draw(rng)
    nu = Fraction(rng.randint(1, 4), rng.choice((3, 5, 7)))

    def fields(parts):
        return tuple(CoefficientField(d, caps, EXACT).to_mode(mode) for d in parts)

    g: Optional[tuple] = fields(force) if forcing else None
    boundary = BoundaryData(fields(init), fields(vel), CoefficientField(pressure, caps, EXACT).to_mode(mode))
    return boundary, FlowConfig(nu, Fraction(rng.randint(1, 3)), g)
