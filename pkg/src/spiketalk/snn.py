"""Spiking substrate: LIF/SRM neurons, surrogate gradients and STDP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class NeuronParams:
    r_mem: float = 1.0
    c_mem: float = 1.0
    v_rest: float = 0.0
    v_threshold: float = 1.0
    # "subtract" lowers v_mem by the threshold on a spike, "rest" resets to v_rest
    reset: str = "subtract"

    def __post_init__(self):
        if not (self.r_mem > 0 and self.c_mem > 0):
            raise ValueError("r_mem and c_mem must be > 0")
        if not self.v_threshold > self.v_rest:
            raise ValueError("v_threshold must exceed v_rest")
        if self.reset not in ("subtract", "rest"):
            raise ValueError(f"unknown reset mode {self.reset!r}")

    @property
    def tau(self) -> float:
        return self.r_mem * self.c_mem


@dataclass(frozen=True)
class NeuronState:
    v_mem: float = 0.0
    last_spike_time: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.v_mem):
            raise ValueError("v_mem must be finite")


@dataclass(frozen=True)
class SpikeTrain:
    """Spike times inside the closed window ``[window_start, window_end]``."""

    window_start: float
    window_end: float
    spike_times: tuple = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.spike_times)
        if not self.window_end > self.window_start:
            raise ValueError("window_end must exceed window_start")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ValueError("spike times must be strictly increasing")
        if times and (times[0] < self.window_start or times[-1] > self.window_end):
            raise ValueError("spike times fall outside the window")
        object.__setattr__(self, "spike_times", times)

    @property
    def window(self) -> tuple:
        return (self.window_start, self.window_end)

    @property
    def duration(self) -> float:
        return self.window_end - self.window_start

    def __len__(self) -> int:
        return len(self.spike_times)

    @classmethod
    def empty(cls, start: float, end: float) -> "SpikeTrain":
        return cls(start, end, ())


@dataclass(frozen=True)
class KernelParams:
    tau_syn: float = 2e-3
    tau_refr: float = 1e-3

    def __post_init__(self):
        if not (self.tau_syn > 0 and self.tau_refr > 0):
            raise ValueError("kernel time constants must be > 0")


@dataclass(frozen=True)
class STDPParams:
    a_plus: float = 0.05
    a_minus: float = 0.05
    tau_plus: float = 5e-3
    tau_minus: float = 5e-3

    def __post_init__(self):
        for name in ("a_plus", "a_minus", "tau_plus", "tau_minus"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class SynapseMatrix:
    """Weights indexed ``[pre, post]``.

    Only entries flagged in ``mask`` are synapses; the rest stay at zero and
    are ignored by the bound checks and by plasticity.
    """

    weights: np.ndarray
    w_min: float = 0.0
    w_max: float = 1.0
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float)
        if self.mask is None:
            self.mask = np.ones(self.weights.shape, dtype=bool)
        self.mask = np.array(self.mask, dtype=bool)
        if not self.w_min <= self.w_max:
            raise ValueError("w_min must not exceed w_max")
        w = self.weights[self.mask]
        if np.any(w < self.w_min) or np.any(w > self.w_max):
            raise ValueError(f"weights outside [{self.w_min}, {self.w_max}]")
        self.weights[~self.mask] = 0.0

    def copy(self) -> "SynapseMatrix":
        return SynapseMatrix(self.weights.copy(), self.w_min, self.w_max, self.mask.copy())

    def incoming(self, post: int) -> np.ndarray:
        return self.weights[self.mask[:, post], post]

    def apply_delta(self, delta, post: Optional[int] = None) -> None:
        """Add ``delta`` to every synapse (or only those onto ``post``), clamped."""
        sel = self.mask.copy()
        if post is not None:
            sel[:, [k for k in range(sel.shape[1]) if k != post]] = False
        self.weights[sel] = np.clip(self.weights[sel] + delta, self.w_min, self.w_max)


@dataclass(frozen=True)
class BackpropContext:
    loss_grad_wrt_spikes: float
    presyn_trace: float
    membrane_sample: float

    def __post_init__(self):
        vals = (self.loss_grad_wrt_spikes, self.presyn_trace, self.membrane_sample)
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise ValueError("backprop context must be finite")


def heaviside(x):
    """1 where ``x > 0``, else 0 (so H(0) = 0)."""
    out = (np.asarray(x) > 0).astype(int)
    return int(out) if out.ndim == 0 else out


def lif_step(state: NeuronState, params: NeuronParams, input_current: float, dt: float,
             t: float = 0.0):
    """Advance one LIF neuron by ``dt`` under constant input current.

    The RC membrane equation is integrated exactly, so the step is stable
    for any ``dt``.  Returns ``(new_state, spiked)``; ``t`` is the time at
    the start of the step and only feeds ``last_spike_time``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    v_inf = params.v_rest + input_current * params.r_mem
    v = v_inf + (state.v_mem - v_inf) * math.exp(-dt / params.tau)
    spiked = bool(heaviside(v - params.v_threshold))
    last = state.last_spike_time
    if spiked:
        v = v - params.v_threshold if params.reset == "subtract" else params.v_rest
        last = t + dt
    return NeuronState(v, last), spiked


def lif_first_spike_time(params: NeuronParams, input_current: float, v0: float = None) -> float:
    """Closed-form first threshold crossing under constant current (inf if never)."""
    v0 = params.v_rest if v0 is None else v0
    v_inf = params.v_rest + input_current * params.r_mem
    if v_inf <= params.v_threshold:
        return math.inf
    return -params.tau * math.log((v_inf - params.v_threshold) / (v_inf - v0))


def _check_windows(trains: Sequence[SpikeTrain]) -> tuple:
    windows = {tr.window for tr in trains}
    if len(windows) != 1:
        raise ValueError(f"spike trains do not share a window: {sorted(windows)}")
    return windows.pop()


def srm_forward(input_trains: Sequence[SpikeTrain], weights, kernels: KernelParams,
                params: NeuronParams, window: Optional[tuple] = None, bins: int = 100):
    """Spike-response-model layer over one coding window.

    The membrane of each output neuron is the weighted sum of exponentially
    filtered input spikes plus a refractory kernel ``-V_th * exp(-t/tau_refr)``
    for each of its own earlier spikes.  It is sampled on ``bins + 1``
    equally spaced instants spanning the window; an output spike is emitted
    at every sample where the membrane exceeds ``V_th``.

    Parameters
    ----------
    input_trains : sequence of SpikeTrain
        One train per presynaptic neuron, all over the same window.
    weights : array_like or SynapseMatrix
        Shape ``(n_pre,)`` for a single neuron or ``(n_pre, n_post)``.
    window : tuple, optional
        Expected ``(start, end)``; checked against the trains.

    Returns
    -------
    trace : ndarray
        Membrane samples, shape ``(bins + 1,)`` or ``(n_post, bins + 1)``.
    output : SpikeTrain or list of SpikeTrain
    """
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    single = w.ndim == 1
    if single:
        w = w[:, None]
    if len(input_trains) != w.shape[0]:
        raise ValueError(f"{len(input_trains)} input trains for {w.shape[0]} presynaptic weights")
    start, end = _check_windows(input_trains) if input_trains else window
    if window is not None and tuple(window) != (start, end):
        raise ValueError(f"trains cover {(start, end)}, expected {tuple(window)}")

    grid = np.linspace(start, end, bins + 1)
    psp = np.zeros((len(input_trains), grid.size))
    for j, tr in enumerate(input_trains):
        for s in tr.spike_times:
            lag = grid - s
            on = lag >= 0
            psp[j, on] += np.exp(-lag[on] / kernels.tau_syn)
    drive = w.T @ psp

    decay = math.exp(-(grid[1] - grid[0]) / kernels.tau_refr)
    trace = np.empty_like(drive)
    outputs = []
    for i in range(drive.shape[0]):
        refr = 0.0
        fired = []
        for b in range(grid.size):
            if b:
                refr *= decay
            v = drive[i, b] + refr
            trace[i, b] = v
            if heaviside(v - params.v_threshold):
                fired.append(grid[b])
                refr -= params.v_threshold
        outputs.append(SpikeTrain(start, end, tuple(fired)))
    if single:
        return trace[0], outputs[0]
    return trace, outputs


def surrogate_gradient(u):
    """Arctan surrogate for dS/dU: ``(1/pi) / (1 + (pi u)^2)``."""
    u = np.asarray(u, dtype=float)
    g = 1.0 / math.pi / (1.0 + (math.pi * u) ** 2)
    return float(g) if g.ndim == 0 else g


def surrogate_antiderivative(u):
    """Smoothed spike function whose derivative is ``surrogate_gradient``."""
    return np.arctan(math.pi * np.asarray(u, dtype=float)) / math.pi ** 2


def backprop_step(ctx: BackpropContext, v_threshold: float = 1.0):
    """dL/dW = dL/dS * dS/dU * dU/dW with the surrogate as the middle factor."""
    return (ctx.loss_grad_wrt_spikes
            * surrogate_gradient(np.asarray(ctx.membrane_sample) - v_threshold)
            * ctx.presyn_trace)


def _nearest(times: np.ndarray, t: float) -> int:
    # ties go to the earlier spike
    return int(np.argmin(np.abs(times - t)))


def stdp_pairs(pre: SpikeTrain, post: SpikeTrain) -> list:
    """Symmetric nearest-neighbour pairing as sorted ``(pre_idx, post_idx)`` tuples.

    A pair is kept when the post spike's nearest pre spike is that pre
    spike, or vice versa.  The pair set is invariant under swapping the two
    trains, which keeps the rule antisymmetric.
    """
    a = np.asarray(pre.spike_times)
    b = np.asarray(post.spike_times)
    if a.size == 0 or b.size == 0:
        return []
    pairs = {(_nearest(a, t), j) for j, t in enumerate(b)}
    pairs |= {(i, _nearest(b, t)) for i, t in enumerate(a)}
    return sorted(pairs)


def stdp_update(pre: SpikeTrain, post: SpikeTrain, params: STDPParams) -> float:
    """Weight change for one window: potentiation when post follows pre."""
    _check_windows([pre, post])
    dw = 0.0
    for i, j in stdp_pairs(pre, post):
        lag = post.spike_times[j] - pre.spike_times[i]
        if lag >= 0:
            dw += params.a_plus * math.exp(-lag / params.tau_plus)
        else:
            dw -= params.a_minus * math.exp(lag / params.tau_minus)
    return dw


def init_weights_from_admittance(Y, w_max: float = 1.0, w_min: float = 0.0) -> SynapseMatrix:
    """Synapse j -> i gets ``|Y_ij|`` scaled so the strongest line maps to ``w_max``."""
    Y = np.asarray(Y, dtype=float)
    off = np.abs(Y) * (1.0 - np.eye(Y.shape[0]))
    peak = off.max() if off.size else 0.0
    if peak == 0:
        raise ValueError("admittance matrix has no off-diagonal coupling")
    mask = off > 0
    w = off / peak * w_max
    w[mask] = np.clip(w[mask], w_min, w_max)
    return SynapseMatrix(w.T.copy(), w_min, w_max, mask.T.copy())
