"""Adaptive FIR MIMO equalizers trained by data-aided LMS.

Every topology is stored the same way: ``weights[o, b, k]`` is tap ``k`` of
the branch feeding output ``o`` from branch input ``b``. Branch inputs are
the topology's inputs, followed by their complex conjugates for the widely
linear kinds. Filtering is centered::

    y[t, o] = sum_b sum_k weights[o, b, k] * u[t + c - k, b],   c = (L - 1) // 2

so a single spike at ``k = c`` is a zero-delay pass-through.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import fft as sfft

from .signals import G_4R_TO_2C

# kind -> (outputs, inputs, widely linear, real-valued)
KINDS = {
    "real_4x4": (4, 4, False, True),
    "complex_2x4": (2, 4, False, False),
    "complex_2x2": (2, 2, False, False),
    "widely_linear_2x4": (2, 2, True, False),
    "widely_linear_2x8": (2, 4, True, False),
}


class TrainingDivergedError(RuntimeError):
    def __init__(self, mu: float, iteration: int):
        self.mu = mu
        self.iteration = iteration
        super().__init__(
            f"LMS diverged at iteration {iteration} with step size mu={mu:g}; "
            "reduce the step size"
        )


@dataclass(frozen=True)
class EqualizerTopology:
    kind: str
    taps_per_branch: int = 31

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown topology {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.taps_per_branch < 1 or self.taps_per_branch % 2 == 0:
            raise ValueError(f"taps_per_branch must be a positive odd integer, got {self.taps_per_branch}")

    @property
    def center_index(self) -> int:
        return (self.taps_per_branch - 1) // 2

    @property
    def n_outputs(self) -> int:
        return KINDS[self.kind][0]

    @property
    def n_inputs(self) -> int:
        return KINDS[self.kind][1]

    @property
    def widely_linear(self) -> bool:
        return KINDS[self.kind][2]

    @property
    def real(self) -> bool:
        return KINDS[self.kind][3]

    @property
    def n_branches(self) -> int:
        return self.n_inputs * (2 if self.widely_linear else 1)

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        return (self.n_outputs, self.n_branches, self.taps_per_branch)


@dataclass
class EqualizerTaps:
    topology: EqualizerTopology
    weights: np.ndarray
    label: str | None = None

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.shape != self.topology.weight_shape:
            raise ValueError(
                f"{self.topology.kind} needs weights of shape {self.topology.weight_shape}, got {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("tap weights must be finite")
        if self.topology.real:
            if np.iscomplexobj(w) and np.any(w.imag != 0):
                raise ValueError("real_4x4 taps must be real")
            w = w.real.astype(float)
        else:
            w = w.astype(complex)
        self.weights = w

    def scaled(self, factor) -> "EqualizerTaps":
        return EqualizerTaps(self.topology, self.weights * factor, self.label)


@dataclass
class TrainingReport:
    mse_curve: np.ndarray
    final_mse: float
    iterations: int
    converged: bool
    mu: float = 0.0
    extra: dict = field(default_factory=dict)


def center_spike(topology: EqualizerTopology) -> EqualizerTaps:
    """Deterministic starting point: unit center taps on the matched branches."""
    w = np.zeros(topology.weight_shape, dtype=float if topology.real else complex)
    c = topology.center_index
    if topology.kind in ("real_4x4", "complex_2x2"):
        for o in range(topology.n_outputs):
            w[o, o, c] = 1
    elif topology.kind == "widely_linear_2x4":
        w[0, 0, c] = w[1, 1, c] = 1
    else:  # lanes in, fields out: start from the real-to-complex projection
        w[:, :4, c] = G_4R_TO_2C
    return EqualizerTaps(topology, w)


def branch_inputs(topology: EqualizerTopology, x) -> np.ndarray:
    """Stack the per-branch input signals, appending conjugates for widely linear kinds."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != topology.n_inputs:
        raise ValueError(
            f"{topology.kind} expects {topology.n_inputs} input lanes, got array of shape {x.shape}"
        )
    if topology.real:
        if np.iscomplexobj(x):
            raise ValueError("real_4x4 equalizer needs real-valued inputs")
        return x.astype(float, copy=False)
    x = x.astype(complex, copy=False)
    if topology.widely_linear:
        return np.concatenate((x, x.conj()), axis=1)
    return x


def apply_taps(taps: EqualizerTaps, x) -> np.ndarray:
    """Centered FIR MIMO filtering; the first and last ``c`` outputs see zero padding."""
    u = branch_inputs(taps.topology, x)
    n = u.shape[0]
    top = taps.topology
    c = top.center_index
    out = np.zeros((n, top.n_outputs), dtype=float if top.real else complex)
    if n == 0:
        return out
    nfft = sfft.next_fast_len(n + top.taps_per_branch - 1)
    U = sfft.fft(u, nfft, axis=0)
    W = sfft.fft(taps.weights, nfft, axis=2)
    Y = np.einsum("obf,fb->fo", W, U)
    y = sfft.ifft(Y, axis=0)[c:c + n]
    return y.real if top.real else y


@numba.njit(cache=True)
def _lms_kernel(u, d, w, mu, c, passes, limit):
    n, nb = u.shape
    no, _, ntaps = w.shape
    span = n - 2 * c
    curve = np.zeros(passes * span)
    i = 0
    for _ in range(passes):
        for t in range(c, n - c):
            err2 = 0.0
            for o in range(no):
                y = w[o, 0, 0] * 0
                for b in range(nb):
                    for k in range(ntaps):
                        y += w[o, b, k] * u[t + c - k, b]
                e = d[t, o] - y
                err2 += (e * np.conj(e)).real
                g = mu * e
                for b in range(nb):
                    for k in range(ntaps):
                        w[o, b, k] += g * np.conj(u[t + c - k, b])
            curve[i] = err2
            i += 1
            if not np.isfinite(err2) or err2 > limit:
                return curve[:i], True
    return curve, False


def _plateaued(curve: np.ndarray) -> bool:
    tenth = max(len(curve) // 10, 1)
    if len(curve) < 2 * tenth:
        return False
    last = curve[-tenth:].mean()
    prev = curve[-2 * tenth:-tenth].mean()
    return bool(np.isfinite(last) and last >= 0.8 * prev - 1e-15)


def lms_train(
    inputs,
    reference,
    topology: EqualizerTopology,
    mu: float = 1e-3,
    passes: int = 2,
    init: EqualizerTaps | None = None,
) -> tuple[EqualizerTaps, TrainingReport]:
    """Data-aided LMS, ``w <- w + (mu / P) e conj(u)`` for every output branch.

    ``P`` is the mean branch-input power, which makes ``mu`` dimensionless.
    ``inputs`` and ``reference`` must already be aligned so that the
    reference sample ``t`` corresponds to the input window centered on ``t``.

    Raises
    ------
    TrainingDivergedError
        When the squared error exceeds ``1e6`` times its initial value.
    """
    if mu <= 0:
        raise ValueError(f"step size must be positive, got {mu}")
    if passes < 1:
        raise ValueError("need at least one pass")
    u = branch_inputs(topology, inputs)
    d = np.asarray(reference)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape != (u.shape[0], topology.n_outputs):
        raise ValueError(
            f"reference shape {d.shape} does not match {u.shape[0]} samples x {topology.n_outputs} outputs"
        )
    c = topology.center_index
    if u.shape[0] <= 2 * c:
        raise ValueError("training record shorter than the equalizer span")

    taps = init if init is not None else center_spike(topology)
    if taps.topology != topology:
        raise ValueError("initial taps do not match the topology")
    dtype = float if topology.real else complex
    if topology.real and np.iscomplexobj(d):
        raise ValueError("real_4x4 equalizer needs a real reference")
    w = taps.weights.astype(dtype, copy=True)
    u = np.ascontiguousarray(u, dtype=dtype)
    d = np.ascontiguousarray(d, dtype=dtype)

    power = float(np.mean(np.abs(u) ** 2))
    if power == 0:
        raise ValueError("training input has zero power")
    head = slice(c, min(c + 1000, u.shape[0] - c))
    y0 = apply_taps(taps, inputs)
    initial = float(np.mean(np.sum(np.abs(d[head] - y0[head]) ** 2, axis=1)))
    limit = 1e6 * max(initial, float(np.mean(np.abs(d) ** 2)), 1e-30)

    curve, diverged = _lms_kernel(u, d, w, mu / power, c, passes, limit)
    if diverged:
        raise TrainingDivergedError(mu, len(curve))
    tail = curve[-max(len(curve) // 10, 1):]
    report = TrainingReport(
        mse_curve=curve,
        final_mse=float(tail.mean()),
        iterations=len(curve),
        converged=_plateaued(curve),
        mu=mu,
    )
    return EqualizerTaps(topology, w, taps.label), report


def residual_db(output, reference, valid: slice | None = None) -> float:
    """Error energy relative to reference energy, in dB."""
    y = np.asarray(output)
    d = np.asarray(reference)
    if valid is not None:
        y, d = y[valid], d[valid]
    err = np.sum(np.abs(d - y) ** 2)
    ref = np.sum(np.abs(d) ** 2)
    if err == 0:
        return -np.inf
    return float(10 * np.log10(err / ref))


def real4x4_to_widely_linear(taps: EqualizerTaps) -> EqualizerTaps:
    """Re-encode a real 4x4 bank as a map on ``(z_X, z_Y, z_X*, z_Y*)``.

    With ``z_X = x1 + j x2`` and ``z_Y = x3 + j x4``, each complex output
    ``y_P = y_{2P} + j y_{2P+1}`` is a combination of the fields and their
    conjugates; the result reproduces the real bank's output (projected to
    fields) sample for sample.
    """
    if taps.topology.kind != "real_4x4":
        raise ValueError(f"expected real_4x4 taps, got {taps.topology.kind}")
    w = taps.weights
    top = EqualizerTopology("widely_linear_2x4", taps.topology.taps_per_branch)
    out = np.zeros(top.weight_shape, dtype=complex)
    for po in range(2):
        # complex row for output field po: real row 2po + j * real row 2po+1
        row = w[2 * po] + 1j * w[2 * po + 1]  # (4, L)
        for pi in range(2):
            wi, wq = row[2 * pi], row[2 * pi + 1]
            # x_I = (z + z*)/2,  x_Q = (z - z*)/(2j)
            out[po, pi] = 0.5 * (wi - 1j * wq)
            out[po, 2 + pi] = 0.5 * (wi + 1j * wq)
    return EqualizerTaps(top, out, taps.label)


def field_matching_reference(ref, theta) -> np.ndarray:
    """Rotate reference fields by ``exp(-j theta[t])``, removing FO dynamics."""
    ref = np.asarray(ref, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    if ref.ndim != 2 or theta.shape != (ref.shape[0],):
        raise ValueError(f"rotation stream length {theta.shape} does not match reference {ref.shape}")
    return ref * np.exp(-1j * theta)[:, None]


def derotate_lanes(r, theta) -> np.ndarray:
    """Turn each real lane into a complex one, ``r_i[t] exp(-j theta[t])``, with no lane mixing."""
    r = np.asarray(r)
    theta = np.asarray(theta, dtype=float)
    if r.ndim != 2 or theta.shape != (r.shape[0],):
        raise ValueError(f"rotation stream length {theta.shape} does not match signal {r.shape}")
    return r * np.exp(-1j * theta)[:, None]


def estimate_lag(inputs, reference, max_lag: int) -> int:
    """Integer delay of ``inputs`` behind ``reference`` from the summed cross-correlation peak."""
    x = np.asarray(inputs)
    d = np.asarray(reference)
    if d.ndim == 1:
        d = d[:, None]
    n = min(x.shape[0], d.shape[0])
    nfft = sfft.next_fast_len(2 * n)
    X = sfft.fft(x[:n], nfft, axis=0)
    D = sfft.fft(d[:n], nfft, axis=0)
    score = np.zeros(nfft)
    for j in range(d.shape[1]):
        corr = sfft.ifft(X * D[:, j:j + 1].conj(), axis=0)
        score += np.sum(np.abs(corr) ** 2, axis=1)
    lags = np.arange(-max_lag, max_lag + 1)
    return int(lags[np.argmax(score[lags % nfft])])
