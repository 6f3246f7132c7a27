"""Droop gains, secondary-control metrics and the gain adaptation rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_BOUNDS = (0.1, 10.0)


@dataclass(frozen=True)
class DroopGainVector:
    """Per-node virtual resistances (ohm) and their admissible range."""

    gains: np.ndarray
    r_min: float = DEFAULT_BOUNDS[0]
    r_max: float = DEFAULT_BOUNDS[1]

    def __post_init__(self):
        g = np.array(self.gains, dtype=float).ravel()
        if not 0 < self.r_min <= self.r_max:
            raise ValueError(f"invalid gain bounds [{self.r_min}, {self.r_max}]")
        if np.any(g < self.r_min) or np.any(g > self.r_max):
            raise ValueError(f"gains {g.tolist()} outside [{self.r_min}, {self.r_max}]")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @classmethod
    def uniform(cls, n: int, value: float, bounds=DEFAULT_BOUNDS) -> "DroopGainVector":
        return cls(np.full(n, float(value)), *bounds)

    @property
    def bounds(self) -> tuple:
        return (self.r_min, self.r_max)

    def updated(self, delta_w, a: float) -> "DroopGainVector":
        return DroopGainVector(update_droop_gain(self.gains, delta_w, a, self.bounds),
                               self.r_min, self.r_max)


@dataclass(frozen=True)
class ControlObjectives:
    v_ref: float
    sharing_ratings: tuple
    adaptation_rate: float = 2.0

    def __post_init__(self):
        if not self.v_ref > 0:
            raise ValueError("v_ref must be > 0")
        if not self.adaptation_rate >= 0:
            raise ValueError("adaptation_rate must be >= 0")
        object.__setattr__(self, "sharing_ratings", tuple(float(r) for r in self.sharing_ratings))


@dataclass(frozen=True)
class SecondaryMetrics:
    avg_voltage_error: float
    sharing_error: float


def average_voltage_error(state, obj: ControlObjectives) -> float:
    """Mean active-node voltage minus the reference (V)."""
    active = np.asarray(state.active, dtype=bool)
    if not active.any():
        raise ValueError("no active nodes")
    return float(np.mean(np.asarray(state.voltages)[active]) - obj.v_ref)


def sharing_error(currents, ratings, active=None) -> float:
    """Spread max - min of per-unit current ``i_k / rating_k`` over active nodes."""
    i = np.asarray(currents, dtype=float)
    r = np.asarray(ratings, dtype=float)
    if i.shape != r.shape:
        raise ValueError("currents and ratings differ in length")
    if np.any(r <= 0):
        raise ValueError("ratings must be > 0")
    pu = i / r
    if active is not None:
        pu = pu[np.asarray(active, dtype=bool)]
    if pu.size == 0:
        return 0.0
    return float(pu.max() - pu.min())


def secondary_metrics(state, obj: ControlObjectives) -> SecondaryMetrics:
    return SecondaryMetrics(average_voltage_error(state, obj),
                            sharing_error(state.source_currents, obj.sharing_ratings, state.active))


def update_droop_gain(gain, delta_w, a: float, bounds: Sequence[float] = DEFAULT_BOUNDS):
    """``clamp(gain - a * delta_w, *bounds)``; works on scalars and arrays."""
    lo, hi = bounds
    out = np.clip(np.asarray(gain, dtype=float) - a * np.asarray(delta_w, dtype=float), lo, hi)
    return float(out) if out.ndim == 0 else out
