"""Analytic channel inverses and parameter extraction from equalizer taps.

The back-to-back receiver sees ``r = D_rx(w) U s`` with
``D_rx(w) = diag(exp(-j w tau_i))``. Its inverse on the real lanes is
``U^T diag(exp(+j w tau_i))``; projected to the two fields it becomes::

    X row: ( A,   jA,   B,  jB ) * exp(j w tau_i)
    Y row: (-B*, -jB*,  A*, jA*) * exp(j w tau_i)

with ``A = a + jb`` and ``B = c + jd``. The ``j`` on the Q-lane columns
comes from the lane convention ``z = I + jQ``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PolarizationParams, make_unitary
from .equalizer import EqualizerTaps
from .signals import G_4R_TO_2C

IN_BAND = 0.8 * np.pi


@dataclass
class FrequencyResponse:
    grid: np.ndarray
    matrices: np.ndarray  # (n_grid, rows, cols)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=complex)
        if self.grid.ndim != 1 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("frequency grid must be one-dimensional and strictly increasing")
        if self.matrices.ndim != 3 or self.matrices.shape[0] != self.grid.size:
            raise ValueError("need one matrix per grid point")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices.shape[1:]

    def band(self, limit: float = IN_BAND) -> np.ndarray:
        return np.abs(self.grid) <= limit


@dataclass
class CalibrationReport:
    rx_skews: np.ndarray
    pol_estimate: PolarizationParams | None
    residual: float
    # estimates are reported as trained; p and -p describe the same channel
    sign_convention: str = "unresolved"


def frequency_grid(n: int) -> np.ndarray:
    """``n`` uniform angular frequencies over ``(-pi, pi]``."""
    return -np.pi + 2 * np.pi * np.arange(1, n + 1) / n


def _unit(p) -> np.ndarray:
    v = p.as_array() if isinstance(p, PolarizationParams) else np.asarray(p, dtype=float)
    if abs(np.linalg.norm(v) - 1) > 1e-9:
        raise ValueError(f"polarization parameters must have unit norm, got {np.linalg.norm(v)!r}")
    return v


def _skew_phase(grid, rx_skews, sign=1) -> np.ndarray:
    tau = np.asarray(rx_skews, dtype=float)
    if tau.shape != (4,):
        raise ValueError("need four lane skews")
    return np.exp(sign * 1j * np.outer(grid, tau))  # (n_grid, 4)


def analytic_class2_4x4(p, rx_skews, grid) -> FrequencyResponse:
    """Real-lane inverse ``U^T diag(exp(j w tau_i))``: column ``i`` carries lane ``i``'s skew phase."""
    _unit(p)
    grid = np.asarray(grid, dtype=float)
    ut = make_unitary(p).T
    return FrequencyResponse(grid, ut[None, :, :] * _skew_phase(grid, rx_skews)[:, None, :])


def analytic_class2_2x4(p, rx_skews, grid) -> FrequencyResponse:
    """Field-output inverse written with ``A = a + jb``, ``B = c + jd``."""
    a, b, c, d = _unit(p)
    A, B = a + 1j * b, c + 1j * d
    coeff = np.array([
        [A, 1j * A, B, 1j * B],
        [-B.conjugate(), -1j * B.conjugate(), A.conjugate(), 1j * A.conjugate()],
    ])
    grid = np.asarray(grid, dtype=float)
    return FrequencyResponse(grid, coeff[None, :, :] * _skew_phase(grid, rx_skews)[:, None, :])


def class2_forward(p, rx_skews, grid) -> FrequencyResponse:
    """Channel seen by a class II equalizer: ``diag(exp(-j w tau_i)) U``."""
    grid = np.asarray(grid, dtype=float)
    u = make_unitary(p)
    return FrequencyResponse(grid, _skew_phase(grid, rx_skews, -1)[:, :, None] * u[None, :, :])


def taps_to_frequency_response(taps: EqualizerTaps, grid) -> FrequencyResponse:
    """DTFT of every branch with the center-tap delay removed."""
    grid = np.asarray(grid, dtype=float)
    c = taps.topology.center_index
    k = np.arange(taps.topology.taps_per_branch) - c
    E = np.exp(-1j * np.outer(grid, k))
    return FrequencyResponse(grid, np.einsum("obk,gk->gob", taps.weights, E))


def verify_inverse(forward: FrequencyResponse, inverse: FrequencyResponse) -> float:
    """Worst-case ``||inverse @ forward - P||_inf`` over the grid.

    ``P`` is the identity for square products and the real-to-complex
    projection for 2x4 products. The norm is the maximum absolute row sum.
    """
    if forward.grid.shape != inverse.grid.shape or not np.array_equal(forward.grid, inverse.grid):
        raise ValueError("forward and inverse responses are on different grids")
    prod = inverse.matrices @ forward.matrices
    rows, cols = prod.shape[1:]
    if rows == cols:
        target = np.eye(rows)
    elif (rows, cols) == (2, 4):
        target = G_4R_TO_2C
    else:
        raise ValueError(f"no reference projection for a {rows}x{cols} product")
    return float(np.max(np.sum(np.abs(prod - target), axis=2)))


def relative_deviation(fr: FrequencyResponse, target: FrequencyResponse, band: float = IN_BAND) -> float:
    """Largest in-band ``||fr - target||_F / ||target||_F``."""
    if not np.array_equal(fr.grid, target.grid):
        raise ValueError("responses are on different grids")
    m = fr.band(band)
    num = np.linalg.norm(fr.matrices[m] - target.matrices[m], axis=(1, 2))
    den = np.linalg.norm(target.matrices[m], axis=(1, 2))
    return float(np.max(num / den))


def _unwrap_from_zero(grid: np.ndarray, phase: np.ndarray) -> np.ndarray:
    i0 = int(np.argmin(np.abs(grid)))
    out = np.empty_like(phase)
    out[i0:] = np.unwrap(phase[i0:])
    out[:i0 + 1] = np.unwrap(phase[i0::-1])[::-1]
    return out


def _lane_slopes(fr: FrequencyResponse, band: float) -> np.ndarray:
    m = fr.band(band)
    w = fr.grid[m]
    H = fr.matrices[m]
    slopes = np.empty(H.shape[2])
    for i in range(H.shape[2]):
        mags = np.abs(H[:, :, i]).mean(axis=0)
        o = int(np.argmax(mags))
        if mags[o] < 0.1:
            raise ValueError(f"lane {i + 1} is unidentifiable: dominant branch magnitude {mags[o]:.3g} < 0.1")
        h = H[:, o, i]
        phase = _unwrap_from_zero(w, np.angle(h))
        wt = np.abs(h) ** 2
        design = np.stack((np.ones_like(w), w), axis=1) * np.sqrt(wt)[:, None]
        coef, *_ = np.linalg.lstsq(design, phase * np.sqrt(wt), rcond=None)
        slopes[i] = coef[1]
    return slopes


def estimate_rx_skews(fr: FrequencyResponse, band: float = IN_BAND) -> np.ndarray:
    """Per-lane skews (samples) from the phase slope of each lane's dominant branch.

    Skews are relative to lane 1; a delay common to all lanes is not observable.
    """
    slopes = _lane_slopes(fr, band)
    return slopes - slopes[0]


def _pattern_basis() -> np.ndarray:
    return np.stack([make_unitary(e).T for e in np.eye(4)])


def estimate_polarization(fr: FrequencyResponse, band: float = IN_BAND):
    """Least-squares fit of the ``U^T`` sign pattern to the de-skewed, band-averaged taps.

    Returns
    -------
    PolarizationParams
        Normalized estimate, as trained (no sign flip applied).
    float
        Relative Frobenius residual of the pattern fit.
    """
    if fr.shape != (4, 4):
        raise ValueError(f"polarization estimation needs a 4x4 response, got {fr.shape}")
    slopes = _lane_slopes(fr, band)
    m = fr.band(band)
    w = fr.grid[m]
    M = (fr.matrices[m] * np.exp(-1j * np.outer(w, slopes))[:, None, :]).mean(axis=0).real
    basis = _pattern_basis()
    coef = np.einsum("kij,ij->k", basis, M) / 4
    fit = np.einsum("k,kij->ij", coef, basis)
    residual = float(np.linalg.norm(M - fit) / np.linalg.norm(M))
    if residual > 0.2:
        raise ValueError(f"taps do not follow the polarization pattern (residual {residual:.3f} > 0.2)")
    return PolarizationParams.normalized(*coef), residual


def calibrate(fr: FrequencyResponse, band: float = IN_BAND) -> CalibrationReport:
    skews = estimate_rx_skews(fr, band)
    if fr.shape == (4, 4):
        pol, residual = estimate_polarization(fr, band)
    else:
        pol, residual = None, float("nan")
    return CalibrationReport(rx_skews=skews, pol_estimate=pol, residual=residual)
