import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from spiketalk.snn import (BackpropContext, KernelParams, NeuronParams, NeuronState, SpikeTrain,
                           STDPParams, SynapseMatrix, backprop_step, heaviside,
                           init_weights_from_admittance, lif_first_spike_time, lif_step,
                           srm_forward, stdp_update, surrogate_antiderivative,
                           surrogate_gradient)
from spiketalk.grid import build_admittance, ring_topology

WIN = (0.0, 10e-3)


def train(*times, window=WIN):
    return SpikeTrain(window[0], window[1], times)


@pytest.mark.parametrize("x, expected", [(0.5, 1), (0.0, 0), (-3.0, 0), (1e-300, 1)])
def test_heaviside(x, expected):
    assert heaviside(x) == expected


def test_spike_train_invariants():
    with pytest.raises(ValueError):
        train(2e-3, 1e-3)
    with pytest.raises(ValueError):
        train(1e-3, 1e-3)
    with pytest.raises(ValueError):
        train(11e-3)
    assert len(train(0.0, 10e-3)) == 2


def test_lif_rest_is_equilibrium():
    p = NeuronParams(v_rest=-0.2)
    s, spiked = lif_step(NeuronState(-0.2), p, 0.0, 1e-3)
    assert s.v_mem == -0.2 and not spiked


def test_lif_exact_exponential_update():
    s, spiked = lif_step(NeuronState(0.0), NeuronParams(), 2.0, 0.1)
    assert s.v_mem == pytest.approx(2.0 * (1.0 - math.exp(-0.1)), rel=1e-14)
    assert s.v_mem == pytest.approx(0.1903, abs=1e-4)
    assert not spiked


def first_spike(params, current, dt):
    s, t = NeuronState(params.v_rest), 0.0
    for _ in range(10_000_000):
        s, spiked = lif_step(s, params, current, dt, t)
        t += dt
        if spiked:
            return t, s
    raise AssertionError("no spike")


def test_lif_first_spike_at_ln2():
    dt = 1e-4
    t, s = first_spike(NeuronParams(), 2.0, dt)
    assert abs(t - math.log(2.0)) <= dt
    # reset by subtraction leaves the overshoot above zero
    assert 0.0 <= s.v_mem < 2.0 * dt and s.last_spike_time == pytest.approx(t)


def test_lif_reset_to_rest_option():
    _, s = first_spike(NeuronParams(reset="rest"), 2.0, 1e-3)
    assert s.v_mem == 0.0


def test_lif_closed_form_helper():
    assert lif_first_spike_time(NeuronParams(), 2.0) == pytest.approx(math.log(2.0))
    assert lif_first_spike_time(NeuronParams(), 0.5) == math.inf


def test_srm_zero_weights():
    trace, out = srm_forward([train(1e-3, 5e-3), train(2e-3)], np.zeros(2), KernelParams(),
                             NeuronParams())
    assert np.all(trace == 0.0) and len(out) == 0


def test_srm_single_impulse_matches_hand_convolution():
    t0, w, tau = 2.05e-3, 0.3, 2e-3
    trace, out = srm_forward([train(t0)], np.array([w]), KernelParams(tau_syn=tau),
                             NeuronParams(), bins=100)
    grid = np.linspace(0.0, 10e-3, 101)
    expected = np.where(grid >= t0, w * np.exp(-(grid - t0) / tau), 0.0)
    np.testing.assert_allclose(trace, expected, rtol=1e-12, atol=0)
    assert len(out) == 0


def test_srm_subthreshold_linearity():
    ins = [train(1e-3, 4e-3), train(2.5e-3), train()]
    w = np.array([[0.1, 0.2], [0.15, 0.05], [0.3, 0.3]])
    tr1, out1 = srm_forward(ins, w, KernelParams(), NeuronParams())
    tr2, out2 = srm_forward(ins, 2 * w, KernelParams(), NeuronParams())
    assert all(len(o) == 0 for o in out1 + out2)
    np.testing.assert_array_equal(tr2, 2 * tr1)


def test_srm_suprathreshold_fires_and_refracts():
    trace, out = srm_forward([train(3e-3)], np.array([1.5]), KernelParams(), NeuronParams())
    assert out.spike_times == (pytest.approx(3e-3),)
    # refractory kernel subtracts the threshold right after the spike
    k = int(round(3e-3 / 1e-4))
    assert trace[k + 1] == pytest.approx(1.5 * math.exp(-0.05) - math.exp(-0.1))


def test_srm_output_trains_are_valid():
    ins = [train(*np.arange(0, 10e-3, 0.5e-3))]
    _, out = srm_forward(ins, np.array([0.7]), KernelParams(), NeuronParams())
    times = out.spike_times
    assert len(times) > 1
    assert all(b > a for a, b in zip(times, times[1:]))
    assert times[0] >= 0.0 and times[-1] <= 10e-3


def test_srm_mismatched_windows():
    with pytest.raises(ValueError):
        srm_forward([train(1e-3), train(1e-3, window=(0.0, 20e-3))], np.ones(2),
                    KernelParams(), NeuronParams())


def test_surrogate_values():
    assert surrogate_gradient(0.0) == pytest.approx(1 / math.pi)
    assert surrogate_gradient(1 / math.pi) == pytest.approx(1 / (2 * math.pi))
    assert surrogate_gradient(1 / math.pi) == pytest.approx(0.15915, abs=1e-5)


@given(st.floats(-1e3, 1e3))
def test_surrogate_even_positive_peaked(u):
    g = surrogate_gradient(u)
    assert g == surrogate_gradient(-u)
    assert 0 < g <= surrogate_gradient(0.0)


def test_surrogate_quadrature():
    val, _ = integrate.quad(surrogate_gradient, -100, 100, points=[0.0], limit=500,
                            epsabs=1e-12)
    assert abs(val - 2 * math.atan(100 * math.pi) / math.pi ** 2) <= 1e-6


def test_surrogate_is_derivative_of_smoothed_step():
    u = np.linspace(-3, 3, 61)
    h = 1e-6
    fd = (surrogate_antiderivative(u + h) - surrogate_antiderivative(u - h)) / (2 * h)
    np.testing.assert_allclose(fd, surrogate_gradient(u), atol=1e-9)


def test_backprop_zero_factors():
    assert backprop_step(BackpropContext(0.0, 1.0, 1.0)) == 0.0
    assert backprop_step(BackpropContext(1.0, 0.0, 1.0)) == 0.0


def test_backprop_peak():
    assert backprop_step(BackpropContext(1.0, 1.0, 1.0), v_threshold=1.0) == \
        pytest.approx(1 / math.pi)


def _smoothed_loss(W, x, y, v_th):
    # arctan-smoothed spike output with the quadratic loss
    u = x @ W
    s = np.arctan(math.pi * (u - v_th)) / math.pi ** 2
    return 0.5 * np.sum((s - y) ** 2)


@pytest.mark.parametrize("seed", range(20))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, 3)
    W = rng.uniform(-1, 1, (3, 3))
    y = rng.uniform(-0.2, 0.2, 3)
    v_th = 1.0
    u = x @ W
    s = np.arctan(math.pi * (u - v_th)) / math.pi ** 2
    grad = np.empty_like(W)
    for j in range(3):
        for i in range(3):
            grad[j, i] = backprop_step(BackpropContext(s[i] - y[i], x[j], u[i]), v_th)
    h = 1e-6
    fd = np.empty_like(W)
    for j in range(3):
        for i in range(3):
            Wp, Wm = W.copy(), W.copy()
            Wp[j, i] += h
            Wm[j, i] -= h
            fd[j, i] = (_smoothed_loss(Wp, x, y, v_th) - _smoothed_loss(Wm, x, y, v_th)) / (2 * h)
    np.testing.assert_allclose(grad, fd, atol=1e-5)


def test_stdp_empty_trains():
    p = STDPParams()
    assert stdp_update(train(), train(1e-3), p) == 0.0
    assert stdp_update(train(1e-3), train(), p) == 0.0


def test_stdp_single_pair():
    p = STDPParams(a_plus=0.1, tau_plus=1.0)
    long_win = (0.0, 2.0)
    dw = stdp_update(train(1.0, window=long_win), train(1.5, window=long_win), p)
    assert dw == pytest.approx(0.1 * math.exp(-0.5))
    assert dw == pytest.approx(0.06065, abs=1e-5)


def test_stdp_post_before_pre_depresses():
    assert stdp_update(train(5e-3), train(2e-3), STDPParams()) < 0


def test_stdp_rejects_mismatched_windows():
    with pytest.raises(ValueError):
        stdp_update(train(1e-3), train(1e-3, window=(0.0, 1.0)), STDPParams())


times = st.lists(st.floats(0.0, 10e-3), max_size=12, unique=True).map(sorted)


@settings(max_examples=300)
@given(times, times, st.floats(0.001, 1.0), st.floats(1e-4, 1e-1))
def test_stdp_antisymmetric(pre, post, a, tau):
    assume(all(abs(p - q) > 1e-12 for p in pre for q in post))
    p = STDPParams(a, a, tau, tau)
    fwd = stdp_update(train(*pre), train(*post), p)
    bwd = stdp_update(train(*post), train(*pre), p)
    assert fwd == pytest.approx(-bwd, abs=1e-12)


def test_init_weights_two_node():
    W = init_weights_from_admittance([[2.0, -2.0], [-2.0, 2.0]], w_max=0.8)
    np.testing.assert_array_equal(W.weights, [[0.0, 0.8], [0.8, 0.0]])


def test_init_weights_ring_ratios():
    Y = build_admittance(ring_topology([1e-3] * 4, [0.5, 0.25, 0.6, 0.8]))
    W = init_weights_from_admittance(Y).weights
    got = np.array([W[0, 1], W[1, 2], W[2, 3], W[3, 0]])
    g = np.array([1 / 0.5, 1 / 0.25, 1 / 0.6, 1 / 0.8])
    np.testing.assert_allclose(got / got[0], g / g[0], rtol=1e-14)
    assert got.max() == 1.0 and W[0, 2] == 0.0 and np.all(np.diag(W) == 0.0)


def test_init_weights_zero_matrix():
    with pytest.raises(ValueError):
        init_weights_from_admittance(np.zeros((3, 3)))


@given(st.lists(st.floats(-5, 5), max_size=100))
def test_synapse_clamping(deltas):
    Y = build_admittance(ring_topology([1e-3] * 4, [0.5, 0.25, 0.6, 0.8]))
    syn = init_weights_from_admittance(Y, w_max=1.0, w_min=0.05)
    for k, d in enumerate(deltas):
        syn.apply_delta(d, post=k % 4)
        w = syn.weights[syn.mask]
        assert np.all(w >= 0.05) and np.all(w <= 1.0)
        assert np.all(syn.weights[~syn.mask] == 0.0)


def test_synapse_matrix_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        SynapseMatrix(np.array([[0.0, 2.0], [0.5, 0.0]]), 0.0, 1.0)
