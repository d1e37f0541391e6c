import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimolab.channel import (
    FD_TAPS,
    LANE_GROUP_DELAY,
    PROBE_NAMES,
    ChannelConfig,
    LaneResponse,
    PolarizationParams,
    apply_cd,
    apply_lane_responses,
    check_fo_pol_commutativity,
    lane_kernel,
    make_fo_stream,
    make_phase_noise,
    make_unitary,
    simulate,
)
from mimolab.signals import apply_block_rotation

unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3
).map(lambda v: np.array(v) / np.linalg.norm(v))


def _random_unit(rng):
    v = rng.standard_normal(4)
    return v / np.linalg.norm(v)


# -- polarization ------------------------------------------------------------

def test_unitary_identity():
    np.testing.assert_array_equal(make_unitary(PolarizationParams()), np.eye(4))


def test_unitary_b_only_pattern():
    expected = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    np.testing.assert_array_equal(make_unitary((0, 1, 0, 0)), expected)


def test_unitary_sign_pattern():
    a, b, c, d = 0.1, 0.2, 0.3, np.sqrt(1 - 0.14)
    u = make_unitary((a, b, c, d))
    np.testing.assert_array_equal(u[0], [a, b, -c, d])
    np.testing.assert_array_equal(u[1], [-b, a, -d, -c])
    np.testing.assert_array_equal(u[2], [c, d, a, -b])
    np.testing.assert_array_equal(u[3], [-d, c, b, a])


def test_unitary_orthogonal_random_draws():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        u = make_unitary(_random_unit(rng))
        worst = max(worst, np.max(np.abs(u.T @ u - np.eye(4))))
    assert worst <= 1e-12


@given(unit_quats)
def test_unitary_real_and_orthogonal(p):
    u = make_unitary(p)
    assert u.dtype == np.float64
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-12)


def test_unitary_rejects_non_unit():
    with pytest.raises(ValueError):
        make_unitary((1, 1, 0, 0))


def test_unitary_acts_as_jones_matrix():
    # U on the lanes equals [[A*, -B], [B*, A]] on the fields, A = a + jb, B = c + jd
    rng = np.random.default_rng(1)
    a, b, c, d = _random_unit(rng)
    A, B = a + 1j * b, c + 1j * d
    J = np.array([[np.conj(A), -B], [np.conj(B), A]])
    x = rng.standard_normal((10, 4))
    y = x @ make_unitary((a, b, c, d)).T
    zx = x[:, [0, 2]] + 1j * x[:, [1, 3]]
    zy = y[:, [0, 2]] + 1j * y[:, [1, 3]]
    np.testing.assert_allclose(zy, zx @ J.T, atol=1e-12)


def test_fo_pol_commutativity_draws():
    rng = np.random.default_rng(2)
    worst = max(check_fo_pol_commutativity(_random_unit(rng), rng.uniform(-10, 10)) for _ in range(1000))
    assert worst <= 1e-12


def test_fo_pol_commutativity_trivial_cases():
    assert check_fo_pol_commutativity((1, 0, 0, 0), 1.234) == 0.0
    assert check_fo_pol_commutativity(_random_unit(np.random.default_rng(3)), 0.0) == 0.0


# -- lanes -------------------------------------------------------------------

def _blackman_sinc(tau, n=FD_TAPS):
    # written out independently of lane_kernel
    out = np.zeros(n)
    for k in range(n):
        x = k - tau
        if 0 <= x <= n - 1:
            w = 0.42 - 0.5 * np.cos(2 * np.pi * x / (n - 1)) + 0.08 * np.cos(4 * np.pi * x / (n - 1))
            arg = x - (n - 1) / 2
            out[k] = w * (1.0 if arg == 0 else np.sin(np.pi * arg) / (np.pi * arg))
    return out


def test_ideal_lanes_are_pure_delay():
    x = np.random.default_rng(4).standard_normal((300, 4))
    y = apply_lane_responses(x, (LaneResponse(),) * 4)
    np.testing.assert_array_equal(y[LANE_GROUP_DELAY:], x[:-LANE_GROUP_DELAY])
    np.testing.assert_array_equal(y[:LANE_GROUP_DELAY], 0)


def test_half_sample_skew_impulse_response():
    x = np.zeros((64, 4))
    x[0, 0] = 1.0
    lanes = (LaneResponse(skew=0.5),) + (LaneResponse(),) * 3
    y = apply_lane_responses(x, lanes)
    np.testing.assert_allclose(y[:FD_TAPS, 0], _blackman_sinc(0.5), atol=1e-15)
    np.testing.assert_array_equal(y[:, 1:], 0)


@pytest.mark.parametrize("tau", [-3.7, -0.3, 0.0, 0.25, 1.5, 4.0])
def test_kernel_matches_formula(tau):
    np.testing.assert_allclose(lane_kernel(LaneResponse(skew=tau)), _blackman_sinc(tau), atol=1e-15)


def test_gain_scales_output_exactly():
    x = np.random.default_rng(5).standard_normal((100, 4))
    base = apply_lane_responses(x, (LaneResponse(skew=0.3),) * 4)
    scaled = apply_lane_responses(x, (LaneResponse(gain=2.5, skew=0.3),) * 4)
    np.testing.assert_allclose(scaled, 2.5 * base, rtol=0, atol=1e-14)


@pytest.mark.parametrize("lane", [LaneResponse(skew=0.37), LaneResponse(skew=-1.2, bandwidth=0.6)])
def test_kernel_hermitian_response(lane):
    h = lane_kernel(lane)
    assert h.dtype == np.float64
    H = np.fft.fft(h, 256)
    np.testing.assert_allclose(H[1:][::-1], np.conj(H[1:]), atol=1e-10)


def test_skew_out_of_range():
    with pytest.raises(ValueError):
        apply_lane_responses(np.zeros((10, 4)), (LaneResponse(skew=4.5),) + (LaneResponse(),) * 3)


def test_skewed_lane_delays_a_tone():
    n = 2048
    t = np.arange(n)
    w0 = 0.3 * np.pi
    x = np.zeros((n, 4))
    x[:, 1] = np.cos(w0 * t)
    y = apply_lane_responses(x, (LaneResponse(), LaneResponse(skew=0.4), LaneResponse(), LaneResponse()))
    expected = np.cos(w0 * (t - LANE_GROUP_DELAY - 0.4))
    np.testing.assert_allclose(y[100:-100, 1], expected[100:-100], atol=1e-4)


# -- dispersion ---------------------------------------------------------------

def test_cd_zero_is_identity():
    x = np.random.default_rng(6).standard_normal((128, 4))
    np.testing.assert_array_equal(apply_cd(x, 0.0), x)


def test_cd_inverse_restores_input():
    x = np.random.default_rng(7).standard_normal((4096, 4))
    np.testing.assert_allclose(apply_cd(apply_cd(x, 37.5), -37.5), x, atol=1e-9)


def test_cd_preserves_energy_and_periodogram():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4096, 4))
    y = apply_cd(x, 25.0)
    assert abs(np.sum(y**2) - np.sum(x**2)) / np.sum(x**2) <= 1e-10
    zx = np.fft.fft(x[:, 0] + 1j * x[:, 1])
    zy = np.fft.fft(y[:, 0] + 1j * y[:, 1])
    px, py = np.abs(zx) ** 2 / 4096, np.abs(zy) ** 2 / 4096
    assert np.max(np.abs(px - py)) / np.max(px) <= 1e-10


def test_cd_matches_quadratic_phase_on_a_tone():
    n = 1024
    k = 37
    w = 2 * np.pi * k / n
    z = np.exp(1j * w * np.arange(n))
    x = np.stack((z.real, z.imag, np.zeros(n), np.zeros(n)), axis=1)
    y = apply_cd(x, 10.0)
    np.testing.assert_allclose(y[:, 0] + 1j * y[:, 1], z * np.exp(-0.5j * 10.0 * w**2), atol=1e-12)


def test_cd_commutes_with_polarization():
    rng = np.random.default_rng(9)
    u = make_unitary(_random_unit(rng))
    x = rng.standard_normal((2048, 4))
    np.testing.assert_allclose(apply_cd(x @ u.T, 12.0), apply_cd(x, 12.0) @ u.T, atol=1e-10)


# -- rotation streams -----------------------------------------------------------

def test_phase_noise_zero_linewidth():
    np.testing.assert_array_equal(make_phase_noise(0.0, 100, 1), 0)


def test_phase_noise_deterministic():
    np.testing.assert_array_equal(make_phase_noise(1e-4, 500, 42), make_phase_noise(1e-4, 500, 42))
    assert make_phase_noise(1e-4, 500, 42)[0] == 0.0


def test_phase_noise_negative_variance():
    with pytest.raises(ValueError):
        make_phase_noise(-1e-5, 10, 0)


def test_phase_noise_wiener_variance_growth():
    var, n = 1e-4, 10_000
    final = np.array([make_phase_noise(var, n, seed)[-1] for seed in range(1000)])
    # theta[n-1] sums n-1 increments
    assert np.var(final) == pytest.approx((n - 1) * var, rel=0.10)


def test_fo_stream():
    np.testing.assert_array_equal(make_fo_stream(0, 0, 50), 0)
    assert make_fo_stream(np.pi / 100, 0, 101)[100] == pytest.approx(np.pi, abs=1e-12)


def test_fo_ramp_finite_difference_is_linear():
    theta = make_fo_stream(0.01, 2e-5, 200)
    step = np.diff(theta)
    np.testing.assert_allclose(np.diff(step), 2e-5, atol=1e-15)
    assert np.all(np.diff(step) > 0)


# -- full chain ----------------------------------------------------------------

def _tx(n=2000, seed=0):
    return np.random.default_rng(seed).choice([-1.0, 1.0], size=(n, 4)) / np.sqrt(2)


def test_identity_chain_is_pure_delay():
    x = _tx()
    received, probes = simulate(ChannelConfig(), x)
    d = probes.group_delay["received"]
    assert d == 2 * LANE_GROUP_DELAY
    np.testing.assert_array_equal(received[d:], x[:-d])
    assert set(probes.signals) == set(PROBE_NAMES)
    assert all(s.shape == x.shape for s in probes.signals.values())


def test_polarization_only_chain():
    rng = np.random.default_rng(10)
    p = PolarizationParams.random(rng)
    x = _tx()
    received, probes = simulate(ChannelConfig(pol=p), x)
    d = probes.group_delay["received"]
    np.testing.assert_allclose(received[d:], x[:-d] @ make_unitary(p).T, atol=1e-15)


@pytest.mark.parametrize("model", ["back_to_back", "ordered"])
def test_simulate_matches_manual_composition(model):
    rng = np.random.default_rng(11)
    lanes = lambda: tuple(LaneResponse(gain=rng.uniform(0.8, 1.2), skew=rng.uniform(-0.5, 0.5)) for _ in range(4))
    cfg = ChannelConfig(
        tx_lanes=lanes(), rx_lanes=lanes(), pol=PolarizationParams.random(rng),
        cd_total=0.0 if model == "back_to_back" else 8.0,
        fo=0.02, fo_ramp=1e-6, tx_linewidth=1e-5, rx_linewidth=2e-5, snr_db=25.0, seed=7, model=model,
    )
    x = _tx(3000, 1)
    received, probes = simulate(cfg, x)

    n = x.shape[0]
    tx_seq, rx_seq, noise_seq = np.random.SeedSequence(7).spawn(3)
    tx_pn = make_phase_noise(1e-5, n, tx_seq)
    rx_pn = make_phase_noise(2e-5, n, rx_seq)
    fo = make_fo_stream(0.02, 1e-6, n)
    u = make_unitary(cfg.pol)
    s = apply_lane_responses(x, cfg.tx_lanes)
    s = apply_block_rotation(s, tx_pn)
    if model == "back_to_back":
        s = apply_block_rotation(s, fo + rx_pn) @ u.T
    else:
        s = apply_block_rotation(apply_cd(s, 8.0) @ u.T, fo + rx_pn)
    s = apply_lane_responses(s, cfg.rx_lanes)
    clean = s.copy()
    sigma = np.sqrt(np.mean(clean**2) / 10 ** 2.5)
    s = s + np.random.default_rng(noise_seq).normal(0, sigma, s.shape)
    np.testing.assert_allclose(received, s, atol=1e-12)
    np.testing.assert_allclose(probes["received"], received)


def test_noiseless_all_pass_chain_preserves_energy():
    x = _tx(4000, 2)
    x[-200:] = 0  # room for the FIR delays
    cfg = ChannelConfig(pol=PolarizationParams.random(np.random.default_rng(3)), fo=0.1,
                        tx_linewidth=1e-3, rx_linewidth=1e-3, cd_total=5.0, model="ordered", seed=4)
    received, probes = simulate(cfg, x)
    # dispersion is circular over the record, so check before the final lane delay truncates
    before = probes["before_rx_lanes"]
    assert abs(np.sum(before**2) - np.sum(x**2)) / np.sum(x**2) <= 1e-9
    d = LANE_GROUP_DELAY
    np.testing.assert_array_equal(received[d:], before[:-d])


def test_simulate_deterministic():
    cfg = ChannelConfig(tx_linewidth=1e-4, rx_linewidth=1e-4, snr_db=15, seed=9)
    a, _ = simulate(cfg, _tx())
    b, _ = simulate(cfg, _tx())
    assert a.tobytes() == b.tobytes()


def test_simulate_rejects_empty_input():
    with pytest.raises(ValueError):
        simulate(ChannelConfig(), np.zeros((0, 4)))


def test_back_to_back_has_no_dispersion():
    with pytest.raises(ValueError):
        ChannelConfig(cd_total=1.0)


def test_noise_level_matches_snr():
    x = _tx(20000, 5)
    cfg = ChannelConfig(snr_db=10.0, seed=1)
    received, probes = simulate(cfg, x)
    d = probes.group_delay["received"]
    noise = received[d:] - x[:-d]
    assert 10 * np.log10(np.mean(x**2) / np.mean(noise**2)) == pytest.approx(10.0, abs=0.1)
