"""The four equalizer classes, distinguished by where their reference is taken.

========  ===================  ==================  ================================
class     input                reference           converges to
========  ===================  ==================  ================================
I         received lanes       before_rx_lanes     rx lane responses inverted
II        received lanes       after_fo            rx lanes and polarization
III       derotated lanes      after_fo, FO-free   class II form without FO
IV        derotated lanes      transmitted fields  static inverse from Rx to Tx
========  ===================  ==================  ================================

Classes III and IV use the rotation stream recorded by the simulator
(genie-aided FO).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, ProbeRecord
from .equalizer import (
    EqualizerTaps,
    EqualizerTopology,
    TrainingReport,
    apply_taps,
    derotate_lanes,
    estimate_lag,
    field_matching_reference,
    lms_train,
    residual_db,
)
from .signals import apply_block_rotation, real4_to_complex2


@dataclass(frozen=True)
class EqualizerClass:
    label: str
    reference_probe: str
    input_transform: str  # "none" | "derotate_lanes"
    reference_transform: str  # "none" | "field_matching"
    default_topology: str


CLASSES = {
    "I": EqualizerClass("I", "before_rx_lanes", "none", "none", "real_4x4"),
    "II": EqualizerClass("II", "after_fo", "none", "none", "real_4x4"),
    "III": EqualizerClass("III", "after_fo", "derotate_lanes", "field_matching", "complex_2x4"),
    "IV": EqualizerClass("IV", "input", "derotate_lanes", "none", "widely_linear_2x8"),
}


@dataclass
class ClassRun:
    taps: EqualizerTaps
    report: TrainingReport
    output: np.ndarray
    reference: np.ndarray
    lag: int
    valid: slice
    residual_db: float


def get_class(label) -> EqualizerClass:
    if isinstance(label, EqualizerClass):
        return label
    try:
        return CLASSES[str(label)]
    except KeyError:
        raise ValueError(f"unknown equalizer class {label!r}; expected one of {list(CLASSES)}") from None


def delayed(stream: np.ndarray, delay: int) -> np.ndarray:
    """``stream[t - delay]``, holding the first value before the record starts."""
    if delay == 0:
        return stream.copy()
    return np.concatenate((np.full(delay, stream[0]), stream[:-delay]))


def class_reference(cls: EqualizerClass, cfg: ChannelConfig, x, probes: ProbeRecord) -> np.ndarray:
    """Training target for ``cls``, as real lanes (classes I and II) or fields."""
    if cls.reference_probe == "input":
        ref = np.asarray(x, dtype=float)
    elif cls.reference_probe == "after_fo" and cfg.model == "ordered":
        # the polarization-free signal carrying the receiver-side rotation
        ref = apply_block_rotation(probes["after_cd"], probes.streams["rx_rotation"])
    else:
        ref = probes[cls.reference_probe]
    if cls.reference_transform == "field_matching":
        ref = field_matching_reference(real4_to_complex2(ref), probes.streams["derotation"])
    return ref


def class_input(cls: EqualizerClass, received, probes: ProbeRecord) -> np.ndarray:
    if cls.input_transform == "derotate_lanes":
        # the rotation reaches the rx lanes before their FIR delay
        theta = delayed(probes.streams["derotation"], probes.rx_lane_delay)
        return derotate_lanes(received, theta)
    return np.asarray(received)


def _fit_to_topology(sig, n_channels: int, real: bool, what: str) -> np.ndarray:
    sig = np.asarray(sig)
    if sig.shape[1] == n_channels and not (real and np.iscomplexobj(sig)):
        return sig
    if sig.shape[1] == 4 and n_channels == 2 and not np.iscomplexobj(sig):
        return real4_to_complex2(sig)
    raise ValueError(f"{what} with {sig.shape[1]} channels does not fit this topology")


def run_class(
    cls,
    cfg: ChannelConfig,
    x,
    received,
    probes: ProbeRecord,
    topology: EqualizerTopology | str | None = None,
    mu: float = 1e-3,
    passes: int = 2,
    taps_per_branch: int = 31,
    max_lag: int = 64,
) -> ClassRun:
    """Build input and reference for ``cls``, align them and train.

    The returned ``output`` and ``reference`` are aligned to each other;
    ``valid`` selects the samples used for training and for ``residual_db``.
    """
    cls = get_class(cls)
    if topology is None:
        topology = cls.default_topology
    if isinstance(topology, str):
        topology = EqualizerTopology(topology, taps_per_branch)

    u = _fit_to_topology(class_input(cls, received, probes), topology.n_inputs, topology.real, "input")
    d = _fit_to_topology(class_reference(cls, cfg, x, probes), topology.n_outputs, topology.real, "reference")

    lag = estimate_lag(u, d, max_lag)
    if lag >= 0:
        u_al, d_al = u[lag:], d[:d.shape[0] - lag]
    else:
        u_al, d_al = u[:u.shape[0] + lag], d[-lag:]

    n = u_al.shape[0]
    edge = 2 * topology.taps_per_branch + 2 * probes.group_delay["received"]
    lo = max(edge, probes.valid.start)
    hi = min(n - edge, probes.valid.stop - max(lag, 0))
    if hi - lo <= 2 * topology.center_index:
        raise ValueError("record too short for training after edge trimming")
    valid = slice(lo, hi)

    taps, report = lms_train(u_al[valid], d_al[valid], topology, mu=mu, passes=passes)
    taps.label = cls.label
    y = apply_taps(taps, u_al)
    return ClassRun(
        taps=taps,
        report=report,
        output=y,
        reference=d_al,
        lag=lag,
        valid=valid,
        residual_db=residual_db(y, d_al, valid),
    )
