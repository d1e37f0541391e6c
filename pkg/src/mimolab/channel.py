"""Impairment blocks and the end-to-end channel as seen by receiver DSP.

Two chain layouts are available:

``back_to_back``
    tx lanes -> Tx PN -> FO (+ Rx PN) -> polarization -> rx lanes -> noise.
    Both laser phase noises are rotations of the same form as the FO and
    are lumped into one stream.
``ordered``
    tx lanes -> Tx PN -> CD -> polarization -> FO + Rx PN -> rx lanes -> noise.

Every stage boundary is recorded in a :class:`ProbeRecord` so equalizers
can be trained against any intermediate signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import fft as sfft

from .signals import (
    apply_block_rotation,
    as_quad,
    block_rotation,
    complex2_to_real4,
    fir_filter,
    real4_to_complex2,
)

FD_TAPS = 33
MAX_SKEW = 4.0
LANE_GROUP_DELAY = (FD_TAPS - 1) // 2

PROBE_NAMES = (
    "after_tx_lanes",
    "after_tx_pn",
    "after_fo",
    "after_cd",
    "after_pol",
    "before_rx_lanes",
    "received",
)


@dataclass(frozen=True)
class PolarizationParams:
    """Quaternion-like ``(a, b, c, d)`` parameterizing the polarization rotation."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    @classmethod
    def normalized(cls, a, b=0.0, c=0.0, d=0.0) -> "PolarizationParams":
        v = np.array([a, b, c, d], dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalize a zero polarization vector")
        return cls(*(v / n))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "PolarizationParams":
        return cls.normalized(*rng.standard_normal(4))


@dataclass(frozen=True)
class LaneResponse:
    """Gain, fractional delay and optional low-pass of one electrical lane.

    ``skew`` is in samples (positive = later). ``bandwidth`` is the cutoff of
    the windowed-sinc low-pass as a fraction of Nyquist; ``None`` is all-pass.
    """

    gain: float = 1.0
    skew: float = 0.0
    bandwidth: float | None = None


IDEAL_LANES = (LaneResponse(),) * 4


@dataclass(frozen=True)
class ChannelConfig:
    tx_lanes: tuple[LaneResponse, ...] = IDEAL_LANES
    rx_lanes: tuple[LaneResponse, ...] = IDEAL_LANES
    pol: PolarizationParams = PolarizationParams()
    cd_total: float = 0.0
    fo: float = 0.0
    fo_ramp: float = 0.0
    tx_linewidth: float = 0.0
    rx_linewidth: float = 0.0
    snr_db: float = float("inf")
    seed: int = 0
    model: Literal["back_to_back", "ordered"] = "back_to_back"

    def __post_init__(self):
        object.__setattr__(self, "tx_lanes", tuple(self.tx_lanes))
        object.__setattr__(self, "rx_lanes", tuple(self.rx_lanes))
        if len(self.tx_lanes) != 4 or len(self.rx_lanes) != 4:
            raise ValueError("tx_lanes and rx_lanes need exactly 4 entries each")
        for name in ("cd_total", "fo", "fo_ramp", "tx_linewidth", "rx_linewidth"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise ValueError("snr_db must be a number or +inf")
        if self.model not in ("back_to_back", "ordered"):
            raise ValueError(f"unknown channel model {self.model!r}")
        if self.model == "back_to_back" and self.cd_total != 0:
            raise ValueError("the back_to_back model has no dispersion; set cd_total=0")


@dataclass
class ProbeRecord:
    """Intermediate signals of one :func:`simulate` call.

    ``group_delay`` gives, per probe, the integer FIR delay (samples) of that
    probe relative to the channel input. ``streams`` holds the rotation
    angles that were applied: ``tx_pn``, ``rx_pn``, ``fo`` and ``rx_rotation``
    (the rotation active just before the rx lanes) and ``derotation`` (what a
    genie-aided receiver removes: every rotation for ``back_to_back``, the
    receiver-side ones for ``ordered``). Streams are indexed in the time base
    of the tx-lane output. ``valid`` marks samples away from FIR and CD edges.
    """

    signals: dict[str, np.ndarray]
    group_delay: dict[str, int]
    streams: dict[str, np.ndarray]
    valid: slice
    rx_lane_delay: int = LANE_GROUP_DELAY

    def __getitem__(self, name: str) -> np.ndarray:
        return self.signals[name]

    def __getattr__(self, name: str):
        signals = self.__dict__.get("signals", {})
        if name in signals:
            return signals[name]
        raise AttributeError(name)


def make_unitary(p) -> np.ndarray:
    """Real 4x4 polarization matrix for ``p = (a, b, c, d)``.

    Rows are ``(a, b, -c, d)``, ``(-b, a, -d, -c)``, ``(c, d, a, -b)`` and
    ``(-d, c, b, a)``.
    """
    v = p.as_array() if isinstance(p, PolarizationParams) else np.asarray(p, dtype=float)
    if v.shape != (4,):
        raise ValueError("polarization parameters need four entries")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"polarization parameters must have unit norm, got {np.linalg.norm(v)!r}")
    a, b, c, d = v
    return np.array([
        [a, b, -c, d],
        [-b, a, -d, -c],
        [c, d, a, -b],
        [-d, c, b, a],
    ])


def check_fo_pol_commutativity(p, theta: float) -> float:
    """Largest entry of ``|U R(theta) - R(theta) U|``."""
    u = make_unitary(p)
    r = block_rotation(theta)
    return float(np.max(np.abs(u @ r - r @ u)))


def lane_kernel(lane: LaneResponse, ntaps: int = FD_TAPS) -> np.ndarray:
    """Blackman-windowed sinc realizing gain, fractional delay and low-pass.

    The window is shifted with the delay so the kernel stays centered on the
    interpolated point; the integer part of the group delay is
    ``(ntaps - 1) / 2`` samples.
    """
    if abs(lane.skew) > MAX_SKEW:
        raise ValueError(f"lane skew {lane.skew} outside the supported range +/-{MAX_SKEW} samples")
    fc = 1.0 if lane.bandwidth is None else float(lane.bandwidth)
    if not 0 < fc <= 1:
        raise ValueError(f"lane bandwidth must be in (0, 1], got {fc}")
    n = np.arange(ntaps)
    pos = n - lane.skew
    arg = 2 * np.pi * pos / (ntaps - 1)
    win = (0.42 + 0.08 * np.cos(2 * arg)) - 0.5 * np.cos(arg)  # peak is exactly 1
    win[(pos < 0) | (pos > ntaps - 1)] = 0.0
    u = fc * (pos - (ntaps - 1) / 2)
    s = np.sinc(u)
    s[(u != 0) & (u == np.round(u))] = 0.0  # exact zeros keep integer delays exact
    return lane.gain * fc * s * win


def apply_lane_responses(x, lanes, block_size: int | None = None) -> np.ndarray:
    """Filter each lane with its own kernel; no mixing between lanes.

    The output is delayed by :data:`LANE_GROUP_DELAY` samples plus the lane skew.
    """
    x = as_quad(x)
    if len(lanes) != 4:
        raise ValueError("need exactly 4 lane responses")
    out = np.empty_like(x)
    for i, lane in enumerate(lanes):
        out[:, i] = fir_filter(x[:, i], lane_kernel(lane), block_size=block_size)
    return out


def cd_transfer(n: int, cd_total: float) -> np.ndarray:
    w = 2 * np.pi * sfft.fftfreq(n)
    return np.exp(-0.5j * cd_total * w**2)


def cd_edge_margin(cd_total: float) -> int:
    """Samples at each record edge spoiled by the circular dispersion filter."""
    # group delay spread of exp(-j cd w^2 / 2) over |w| <= pi
    return int(np.ceil(np.pi * abs(cd_total)))


def apply_cd(x, cd_total: float) -> np.ndarray:
    """All-pass dispersion applied identically to both polarization fields.

    The filter is evaluated on the DFT grid of the whole record, so it is
    exactly energy preserving and exactly inverted by ``-cd_total``. Samples
    within :func:`cd_edge_margin` of either end see circular wrap-around.
    """
    x = as_quad(x)
    if cd_total == 0:
        return x.copy()
    z = real4_to_complex2(x)
    H = cd_transfer(z.shape[0], cd_total)
    z = sfft.ifft(sfft.fft(z, axis=0) * H[:, None], axis=0)
    return complex2_to_real4(z)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def make_phase_noise(linewidth_var: float, n: int, seed) -> np.ndarray:
    """Wiener phase ``theta[0] = 0``, ``theta[t] = theta[t-1] + N(0, linewidth_var)``."""
    if linewidth_var < 0:
        raise ValueError(f"phase-noise variance must be non-negative, got {linewidth_var}")
    if n == 0:
        return np.zeros(0)
    if linewidth_var == 0:
        return np.zeros(n)
    steps = _rng(seed).normal(0.0, np.sqrt(linewidth_var), n - 1)
    return np.concatenate(([0.0], np.cumsum(steps)))


def make_fo_stream(fo: float, ramp: float, n: int) -> np.ndarray:
    """Accumulated FO phase ``fo * t + ramp * t**2 / 2``."""
    t = np.arange(n, dtype=float)
    return fo * t + 0.5 * ramp * t**2


def add_noise(x, snr_db: float, rng) -> np.ndarray:
    """White Gaussian noise, same variance on all lanes, relative to mean lane power."""
    x = as_quad(x)
    if np.isinf(snr_db):
        return x.copy()
    power = np.mean(x**2)
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return x + _rng(rng).normal(0.0, sigma, x.shape)


def simulate(cfg: ChannelConfig, x, block_size: int | None = None):
    """Run ``x`` through the configured channel.

    Returns
    -------
    received : np.ndarray, shape (n, 4)
    probes : ProbeRecord
    """
    x = as_quad(x, "channel input")
    n = x.shape[0]
    if n == 0:
        raise ValueError("channel input is empty")

    tx_seed, rx_seed, noise_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    tx_pn = make_phase_noise(cfg.tx_linewidth, n, tx_seed)
    rx_pn = make_phase_noise(cfg.rx_linewidth, n, rx_seed)
    fo = make_fo_stream(cfg.fo, cfg.fo_ramp, n)
    u = make_unitary(cfg.pol)

    s = {}
    s["after_tx_lanes"] = apply_lane_responses(x, cfg.tx_lanes, block_size)
    s["after_tx_pn"] = apply_block_rotation(s["after_tx_lanes"], tx_pn)
    if cfg.model == "back_to_back":
        rx_rotation = fo + rx_pn
        s["after_fo"] = apply_block_rotation(s["after_tx_pn"], rx_rotation)
        s["after_cd"] = s["after_fo"]
        s["after_pol"] = s["after_cd"] @ u.T
        s["before_rx_lanes"] = s["after_pol"]
        derotation = tx_pn + rx_rotation
    else:
        s["after_cd"] = apply_cd(s["after_tx_pn"], cfg.cd_total)
        s["after_pol"] = s["after_cd"] @ u.T
        rx_rotation = fo + rx_pn
        s["after_fo"] = apply_block_rotation(s["after_pol"], rx_rotation)
        s["before_rx_lanes"] = s["after_fo"]
        derotation = rx_rotation
    rx_out = apply_lane_responses(s["before_rx_lanes"], cfg.rx_lanes, block_size)
    s["received"] = add_noise(rx_out, cfg.snr_db, np.random.default_rng(noise_seed))

    delays = {name: LANE_GROUP_DELAY for name in PROBE_NAMES}
    delays["received"] = 2 * LANE_GROUP_DELAY
    margin = cd_edge_margin(cfg.cd_total)
    valid = slice(min(n, 2 * LANE_GROUP_DELAY + margin), max(0, n - margin))
    streams = {
        "tx_pn": tx_pn,
        "rx_pn": rx_pn,
        "fo": fo,
        "rx_rotation": rx_rotation,
        "derotation": derotation,
    }
    probes = ProbeRecord(signals=s, group_delay=delays, streams=streams, valid=valid)
    return s["received"], probes
