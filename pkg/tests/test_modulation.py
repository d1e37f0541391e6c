import numpy as np
import pytest

from mimolab.modulation import count_symbol_errors, qpsk_decide, qpsk_symbols, qpsk_waveform, shape


def test_qpsk_unit_power_constellation():
    s = qpsk_symbols(4000, np.random.default_rng(0))
    assert s.shape == (4000, 2)
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-15)
    assert set(np.round(s.ravel() * np.sqrt(2)).tolist()) == {1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j}


def test_decide_and_count():
    s = qpsk_symbols(100, np.random.default_rng(1))
    np.testing.assert_array_equal(qpsk_decide(s * 0.3), s)
    noisy = s.copy()
    noisy[5, 0] = -noisy[5, 0]
    assert count_symbol_errors(noisy, s) == 1


@pytest.mark.parametrize("rolloff", [0.1, 0.5, 1.0])
def test_shaping_hits_symbols(rolloff):
    s = qpsk_symbols(512, np.random.default_rng(2))
    w = shape(s, 2, rolloff)
    np.testing.assert_allclose(w[::2], s, atol=1e-12)


def test_shaping_band_limit():
    s = qpsk_symbols(1024, np.random.default_rng(3))
    spectrum = np.abs(np.fft.fft(shape(s, 2, 0.1)[:, 0]))
    f = np.abs(np.fft.fftfreq(2048)) * 2
    assert spectrum[f > 0.55].max() <= 1e-9 * spectrum.max()


def test_waveform_is_real_quad():
    x, s = qpsk_waveform(100, 1, 0.1, np.random.default_rng(4))
    assert x.shape == (100, 4) and x.dtype == np.float64
    np.testing.assert_array_equal(x[:, 0] + 1j * x[:, 1], s[:, 0])
