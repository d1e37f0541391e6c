"""JSON scenario files: validation and conversion to runtime objects.

Keys carry their units (``skew_samples``, ``fo_rad_per_sample``...). Unknown
keys are rejected. ``snr_db: null`` means noiseless.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .channel import ChannelConfig, LaneResponse, PolarizationParams, make_unitary
from .classes import CLASSES

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """A scenario file that cannot be parsed or validated."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LaneSpec(_Strict):
    gain_linear: float = 1.0
    skew_samples: float = Field(0.0, ge=-4.0, le=4.0)
    bandwidth_nyquist_fraction: float | None = Field(None, gt=0.0, le=1.0)


class PolSpec(_Strict):
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    normalize: bool = False


class EqualizerSpec(_Strict):
    class_label: Literal["I", "II", "III", "IV"] = Field("II", alias="class")
    topology: Literal["real_4x4", "complex_2x4", "complex_2x2", "widely_linear_2x4", "widely_linear_2x8"] | None = None
    mu: float = Field(1e-3, gt=0)
    taps_per_branch: int = Field(31, ge=1)
    passes: int = Field(2, ge=1)

    @field_validator("taps_per_branch")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("taps_per_branch must be odd")
        return v

    def resolved_topology(self) -> str:
        return self.topology or CLASSES[self.class_label].default_topology


def _ideal_lanes():
    return [LaneSpec() for _ in range(4)]


class Scenario(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 0
    model: Literal["back_to_back", "ordered"] = "back_to_back"
    sample_rate_hz: float | None = None
    tx_lanes: list[LaneSpec] = Field(default_factory=_ideal_lanes, min_length=4, max_length=4)
    rx_lanes: list[LaneSpec] = Field(default_factory=_ideal_lanes, min_length=4, max_length=4)
    pol: PolSpec = Field(default_factory=PolSpec)
    cd_total_rad_samples2: float = 0.0
    fo_rad_per_sample: float = 0.0
    fo_ramp_rad_per_sample2: float = 0.0
    tx_linewidth_rad2_per_sample: float = Field(0.0, ge=0)
    rx_linewidth_rad2_per_sample: float = Field(0.0, ge=0)
    snr_db: float | None = None
    modulation: Literal["qpsk"] = "qpsk"
    symbol_count: int = Field(100_000, ge=64)
    samples_per_symbol: Literal[1, 2] = 1
    rolloff: float = Field(0.1, gt=0, le=1)
    equalizer: EqualizerSpec = Field(default_factory=EqualizerSpec)
    output_dir: str | None = None

    def polarization(self) -> PolarizationParams:
        p = self.pol
        if p.normalize:
            return PolarizationParams.normalized(p.a, p.b, p.c, p.d)
        return PolarizationParams(p.a, p.b, p.c, p.d)

    def channel_config(self) -> ChannelConfig:
        def lanes(specs):
            return tuple(
                LaneResponse(s.gain_linear, s.skew_samples, s.bandwidth_nyquist_fraction) for s in specs
            )

        return ChannelConfig(
            tx_lanes=lanes(self.tx_lanes),
            rx_lanes=lanes(self.rx_lanes),
            pol=self.polarization(),
            cd_total=self.cd_total_rad_samples2,
            fo=self.fo_rad_per_sample,
            fo_ramp=self.fo_ramp_rad_per_sample2,
            tx_linewidth=self.tx_linewidth_rad2_per_sample,
            rx_linewidth=self.rx_linewidth_rad2_per_sample,
            snr_db=float("inf") if self.snr_db is None else self.snr_db,
            seed=self.seed,
            model=self.model,
        )

    def resolved(self) -> dict:
        """Every setting, defaults included, as written back to reports."""
        data = self.model_dump(mode="json", by_alias=True)
        data["equalizer"]["topology"] = self.equalizer.resolved_topology()
        return data


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(part) for part in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{source}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be a JSON object")
    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(f"{source}: invalid scenario\n{_describe(e)}") from None
    try:
        scenario.channel_config()
        make_unitary(scenario.polarization())
    except ValueError as e:
        raise ScenarioError(f"{source}: {e}") from None
    return scenario


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e.strerror}") from None
    scenario = parse_scenario(text, str(path))
    if seed is not None:
        scenario = scenario.model_copy(update={"seed": seed})
    return scenario
