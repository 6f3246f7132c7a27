"""Signal <-> spike conversion, transient event flags and train alignment."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .snn import SpikeTrain, _check_windows

CE_EPSILON = 1e-6


@dataclass(frozen=True)
class CodingConfig:
    window: float = 10e-3
    bins: int = 100
    max_spikes: int = 20
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.value_range)
        object.__setattr__(self, "value_range", (lo, hi))
        if not self.window > 0:
            raise ValueError("window must be > 0")
        if not self.max_spikes >= 1:
            raise ValueError("max_spikes must be >= 1")
        if not self.bins >= self.max_spikes:
            raise ValueError("bins must be >= max_spikes")
        if not hi > lo:
            raise ValueError(f"degenerate value_range {self.value_range}")

    def normalize(self, x: float) -> float:
        lo, hi = self.value_range
        return min(max((float(x) - lo) / (hi - lo), 0.0), 1.0)


def rate_encode(x: float, cfg: CodingConfig, start: float = 0.0) -> SpikeTrain:
    """``round(x_norm * max_spikes)`` spikes evenly spaced from the window start."""
    n = int(round(cfg.normalize(x) * cfg.max_spikes))
    times = tuple(start + j * cfg.window / n for j in range(n)) if n else ()
    return SpikeTrain(start, start + cfg.window, times)


def latency_encode(x: float, cfg: CodingConfig, start: float = 0.0) -> SpikeTrain:
    """One spike, earlier for larger ``x``: at ``window * (1 - x_norm)``."""
    t = start + cfg.window * (1.0 - cfg.normalize(x))
    return SpikeTrain(start, start + cfg.window, (min(t, start + cfg.window),))


def rate_decode(train: SpikeTrain, cfg: CodingConfig) -> float:
    n = len(train)
    if n > cfg.max_spikes:
        raise ValueError(f"{n} spikes exceed max_spikes={cfg.max_spikes}")
    lo, hi = cfg.value_range
    return lo + (hi - lo) * n / cfg.max_spikes


def latency_decode(train: SpikeTrain, cfg: CodingConfig) -> float:
    if len(train) == 0:
        raise ValueError("latency code needs one spike")
    lo, hi = cfg.value_range
    frac = 1.0 - (train.spike_times[0] - train.window_start) / cfg.window
    return lo + (hi - lo) * frac


@dataclass(frozen=True)
class EventFlag:
    omega_v: int
    omega_i: int
    omega: int

    def __post_init__(self):
        if self.omega != (self.omega_v | self.omega_i):
            raise ValueError("omega must equal omega_v OR omega_i")


def combine_events(omega_v: int, omega_i: int) -> EventFlag:
    if omega_v not in (0, 1) or omega_i not in (0, 1):
        raise ValueError("event inputs must be 0 or 1")
    return EventFlag(int(omega_v), int(omega_i), int(omega_v) | int(omega_i))


@dataclass(frozen=True)
class EventDetectorConfig:
    """Transient detector settings.

    ``sample_period`` is the spacing of the samples the detector sees; the
    derivative is the first difference over one sample period.
    """

    derivative_threshold: float = 500.0
    settle_window: float = 50e-3
    settle_band: float = 0.5
    sample_period: float = 1e-3

    def __post_init__(self):
        for name in ("derivative_threshold", "settle_window", "settle_band", "sample_period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


class EventDetector:
    """Streaming latch for one signal.

    Rises when the sampled derivative magnitude exceeds the threshold and
    falls once the signal has stayed inside ``mean +- settle_band`` over a
    whole settle window with no further derivative excursion.
    """

    def __init__(self, cfg: EventDetectorConfig):
        self.cfg = cfg
        self.flag = 0
        self._prev = None
        self._last_exceed = -math.inf
        self._recent = deque()

    def update(self, t: float, x: float) -> int:
        cfg = self.cfg
        if self._prev is not None:
            t0, x0 = self._prev
            if abs(x - x0) / (t - t0) > cfg.derivative_threshold:
                self.flag = 1
                self._last_exceed = t
        self._prev = (t, x)
        self._recent.append((t, x))
        horizon = t - cfg.settle_window
        while self._recent and self._recent[0][0] < horizon - 1e-12:
            self._recent.popleft()
        if self.flag and t - self._last_exceed >= cfg.settle_window - 1e-12:
            vals = np.fromiter((v for _, v in self._recent), float)
            mean = vals.mean()
            if np.all(np.abs(vals - mean) <= cfg.settle_band):
                self.flag = 0
        return self.flag


def event_detect(times, values, cfg: EventDetectorConfig) -> int:
    """Event flag at the last sample of a signal history."""
    det = EventDetector(cfg)
    flag = 0
    for t, x in zip(times, values):
        flag = det.update(float(t), float(x))
    return flag


def binned(train: SpikeTrain, bins: int) -> np.ndarray:
    counts, _ = np.histogram(train.spike_times, bins=bins,
                             range=(train.window_start, train.window_end))
    return counts.astype(float)


def smoothed_distribution(counts, eps: float = CE_EPSILON) -> np.ndarray:
    p = np.asarray(counts, dtype=float) + eps
    return p / p.sum()


def cross_entropy(p_train: SpikeTrain, q_train: SpikeTrain, bins: int,
                  eps: float = CE_EPSILON) -> float:
    """``-sum p log q`` between the epsilon-smoothed spike histograms."""
    _check_windows([p_train, q_train])
    p = smoothed_distribution(binned(p_train, bins), eps)
    q = smoothed_distribution(binned(q_train, bins), eps)
    return float(-np.sum(p * np.log(q)))
