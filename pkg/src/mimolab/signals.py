"""Four-lane real and dual-polarization complex signal representations.

A real quad signal is an ``(n, 4)`` float array holding the lanes
``(XI, XQ, YI, YQ)``. A complex dual signal is an ``(n, 2)`` complex array
holding the ``(X, Y)`` fields. Time is always counted in samples.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

LANES = ("XI", "XQ", "YI", "YQ")
FIELDS = ("X", "Y")

#: Real-to-complex projection taking (XI, XQ, YI, YQ) to (X, Y).
G_4R_TO_2C = np.array([[1, 1j, 0, 0], [0, 0, 1, 1j]], dtype=complex)


def as_quad(x, name: str = "signal") -> np.ndarray:
    """Validate and return ``x`` as an ``(n, 4)`` real array."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise TypeError(f"{name} must be real-valued")
    x = x.astype(float, copy=False)
    if x.ndim != 2 or x.shape[1] != 4:
        raise ValueError(f"{name} must have shape (n, 4), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite samples")
    return x


def as_dual(z, name: str = "signal") -> np.ndarray:
    """Validate and return ``z`` as an ``(n, 2)`` complex array."""
    z = np.asarray(z).astype(complex, copy=False)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite samples")
    return z


def real4_to_complex2(x) -> np.ndarray:
    """Project real lanes onto the two complex fields.

    Works on a single 4-vector or on any array whose last axis has length 4.
    ``(x1, x2, x3, x4) -> (x1 + j x2, x3 + j x4)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise ValueError(f"last axis must have length 4, got {x.shape}")
    return np.stack((x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]), axis=-1)


def complex2_to_real4(z) -> np.ndarray:
    """Right inverse of :func:`real4_to_complex2`."""
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != 2:
        raise ValueError(f"last axis must have length 2, got {z.shape}")
    return np.stack((z[..., 0].real, z[..., 0].imag, z[..., 1].real, z[..., 1].imag), axis=-1)


def rotation_2x2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def block_rotation(theta: float) -> np.ndarray:
    """The 4x4 matrix ``diag(R(theta), R(theta))``."""
    r = rotation_2x2(theta)
    out = np.zeros((4, 4))
    out[:2, :2] = r
    out[2:, 2:] = r
    return out


def apply_block_rotation(x, theta) -> np.ndarray:
    """Rotate the IQ plane of both polarizations by ``theta[t]`` at each sample.

    Parameters
    ----------
    x : array_like, shape (n, 4)
        Real quad signal.
    theta : array_like, shape (n,)
        Rotation angle per sample in radians.

    Returns
    -------
    np.ndarray, shape (n, 4)
    """
    x = as_quad(x)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (x.shape[0],):
        raise ValueError(
            f"rotation stream length {theta.shape} does not match signal length {x.shape[0]}"
        )
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(x)
    out[:, 0] = c * x[:, 0] - s * x[:, 1]
    out[:, 1] = s * x[:, 0] + c * x[:, 1]
    out[:, 2] = c * x[:, 2] - s * x[:, 3]
    out[:, 3] = s * x[:, 2] + c * x[:, 3]
    return out


def fir_filter(x, h, block_size: int | None = None) -> np.ndarray:
    """Causal FIR filtering ``y[t] = sum_k h[k] x[t - k]``, truncated to ``len(x)``.

    With ``block_size`` set, the convolution runs as overlap-save over FFT
    blocks of that length; otherwise it is evaluated directly. Both paths
    agree to rounding error.
    """
    x = np.asarray(x)
    h = np.asarray(h)
    n, m = x.shape[0], h.shape[0]
    real = not (np.iscomplexobj(x) or np.iscomplexobj(h))
    if n == 0:
        return x.copy()

    if block_size is None:
        return np.convolve(x, h)[:n]
    if block_size < m:
        raise ValueError(f"block_size {block_size} shorter than filter length {m}")
    step = block_size - m + 1
    H = sfft.fft(h, block_size)
    xp = np.concatenate((np.zeros(m - 1, dtype=x.dtype), x, np.zeros(block_size, dtype=x.dtype)))
    y = np.empty(n, dtype=complex)
    for start in range(0, n, step):
        seg = xp[start:start + block_size]
        yb = sfft.ifft(sfft.fft(seg) * H)[m - 1:]
        stop = min(start + step, n)
        y[start:stop] = yb[:stop - start]
    return y.real if real else y
