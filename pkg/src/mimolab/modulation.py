"""Gray-mapped QPSK on both polarizations, optionally raised-cosine shaped."""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from .signals import complex2_to_real4


def qpsk_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, 2)`` unit-power Gray QPSK symbols; bit pairs map to the signs of I and Q."""
    bits = rng.integers(0, 2, size=(n, 2, 2))
    levels = (1 - 2 * bits) / np.sqrt(2)
    return levels[..., 0] + 1j * levels[..., 1]


def qpsk_decide(z) -> np.ndarray:
    z = np.asarray(z)
    return (np.where(z.real >= 0, 1.0, -1.0) + 1j * np.where(z.imag >= 0, 1.0, -1.0)) / np.sqrt(2)


def raised_cosine_spectrum(n: int, sps: int, rolloff: float) -> np.ndarray:
    """Raised-cosine response on an ``n``-point DFT grid, scaled to unit Nyquist sum."""
    f = np.abs(sfft.fftfreq(n) * sps)  # cycles per symbol
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    H = np.zeros(n)
    H[f <= lo] = 1.0
    mid = (f > lo) & (f <= hi)
    H[mid] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[mid] - lo)))
    return H * sps


def shape(symbols, sps: int = 1, rolloff: float = 0.1) -> np.ndarray:
    """Upsample and raised-cosine filter symbols (circularly over the record).

    The result passes exactly through the symbols at indices ``k * sps``.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if sps == 1:
        return symbols.copy()
    if not 0 < rolloff <= 1:
        raise ValueError(f"rolloff must be in (0, 1], got {rolloff}")
    n = symbols.shape[0] * sps
    up = np.zeros((n,) + symbols.shape[1:], dtype=complex)
    up[::sps] = symbols
    H = raised_cosine_spectrum(n, sps, rolloff)
    return sfft.ifft(sfft.fft(up, axis=0) * H[:, None], axis=0)


def qpsk_waveform(n_symbols: int, sps: int, rolloff: float, rng: np.random.Generator):
    """Transmit waveform as a real quad signal, plus the symbols it carries."""
    symbols = qpsk_symbols(n_symbols, rng)
    return complex2_to_real4(shape(symbols, sps, rolloff)), symbols


def count_symbol_errors(z, symbols) -> int:
    return int(np.count_nonzero(qpsk_decide(z) != qpsk_decide(symbols)))
