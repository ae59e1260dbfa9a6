"""Run configuration: JSON sections validated into typed, immutable objects.

Every key has a default, so ``RunConfig.from_dict({})`` is the reference
setup. Unknown keys are rejected before any computation starts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .core import Geometry, as_vector, default_geometry
from .ident import PoleGrid, PrbsSpec
from .truthplant import TruthPlantConfig


class ConfigError(ValueError):
    pass


def _build(cls, data: Any, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def _num(value, name: str, positive: bool = True, allow_zero: bool = False) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be a number")
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}")


@dataclass(frozen=True)
class GeometrySection:
    stripe_centers_m: list = field(
        default_factory=lambda: [float(v) for v in default_geometry().stripe_centers]
    )
    stripe_width_m: float = 0.030
    channel_height_m: float = 0.004
    sensor_station_m: float = 0.030
    sensor_radius_m: float = 0.001
    coating_width_m: float = 0.150
    web_speed_mps: float = 0.333

    def build(self) -> Geometry:
        return Geometry(
            stripe_centers=np.asarray(self.stripe_centers_m, dtype=float),
            stripe_width=self.stripe_width_m,
            channel_height=self.channel_height_m,
            sensor_station=self.sensor_station_m,
            sensor_radius=self.sensor_radius_m,
            coating_width=self.coating_width_m,
            web_speed=self.web_speed_mps,
        )


@dataclass(frozen=True)
class OperatingPointSection:
    q0_m3ps: Any = 1.0e-6  # scalar or one value per inlet


@dataclass(frozen=True)
class TruthPlantSection:
    lateral_diffusivity_m2ps: float | None = None
    supply_c0: float = 1.87e4
    supply_c1: float = 1.97e2
    grid_ny: int = 100
    sim_dt_s: float = 1e-3
    domain_margin: float = 0.10
    noise_std_m: float = 5e-7
    bypass_supply: bool = False

    def __post_init__(self):
        _num(self.noise_std_m, "noise_std_m", allow_zero=True)
        _num(self.sim_dt_s, "sim_dt_s")


@dataclass(frozen=True)
class PrbsSection:
    amplitude_fraction: float = 0.10
    bit_duration_s: float = 0.01
    total_duration_s: float = 2.0

    def build(self, seed: int) -> PrbsSpec:
        return PrbsSpec(self.amplitude_fraction, self.bit_duration_s, self.total_duration_s, seed)


@dataclass(frozen=True)
class IdentSection:
    channel: int | None = None
    d_max: int = 30
    all_inputs: bool = True
    c0_range: list = field(default_factory=lambda: [1e2, 1e6])
    c1_range: list = field(default_factory=lambda: [1e0, 1e4])
    grid_points: int = 17
    rtol: float = 1e-10

    def __post_init__(self):
        if isinstance(self.d_max, bool) or not isinstance(self.d_max, int) or self.d_max < 0:
            raise ValueError("d_max must be a non-negative integer")
        _num(self.rtol, "rtol")
        self.grid()

    def grid(self) -> PoleGrid:
        return PoleGrid(tuple(self.c0_range), tuple(self.c1_range), self.grid_points)


@dataclass(frozen=True)
class ControlSection:
    type: str = "p"
    beta: float = 0.1
    lambda_s: float = 0.01
    floor_fraction: float = 0.05
    realization: str = "zoh"
    h_target_m: float | None = 100e-6
    horizon_s: float = 5.0
    plant: str = "surrogate"
    clamp: bool = False

    def __post_init__(self):
        if self.type not in ("p", "imc"):
            raise ValueError("type must be 'p' or 'imc'")
        if self.plant not in ("surrogate", "truth"):
            raise ValueError("plant must be 'surrogate' or 'truth'")
        _num(self.beta, "beta")
        _num(self.lambda_s, "lambda_s")
        _num(self.horizon_s, "horizon_s")
        if not 0 < self.floor_fraction <= 1:
            raise ValueError("floor_fraction must lie in (0, 1]")
        if self.h_target_m is not None:
            _num(self.h_target_m, "h_target_m")


@dataclass(frozen=True)
class IoSection:
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


_SECTIONS = {
    "geometry": GeometrySection,
    "operating_point": OperatingPointSection,
    "truth_plant": TruthPlantSection,
    "prbs": PrbsSection,
    "ident": IdentSection,
    "control": ControlSection,
    "io": IoSection,
}


@dataclass(frozen=True)
class RunConfig:
    sample_time_s: float = 0.01
    geometry: GeometrySection = field(default_factory=GeometrySection)
    operating_point: OperatingPointSection = field(default_factory=OperatingPointSection)
    truth_plant: TruthPlantSection = field(default_factory=TruthPlantSection)
    prbs: PrbsSection = field(default_factory=PrbsSection)
    ident: IdentSection = field(default_factory=IdentSection)
    control: ControlSection = field(default_factory=ControlSection)
    io: IoSection = field(default_factory=IoSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS) - {"sample_time_s"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        ts = data.get("sample_time_s", 0.01)
        try:
            _num(ts, "sample_time_s")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        sections = {k: _build(c, data.get(k), k) for k, c in _SECTIONS.items()}
        cfg = cls(sample_time_s=float(ts), **sections)
        cfg.truth_plant_config()  # surfaces geometry and stability errors up front
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        data = self.to_dict()
        data["io"]["seed"] = seed
        return RunConfig.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def seed(self) -> int:
        return self.io.seed

    def build_geometry(self) -> Geometry:
        try:
            return self.geometry.build()
        except ValueError as exc:
            raise ConfigError(f"invalid geometry: {exc}") from None

    def q0(self) -> np.ndarray:
        g = self.build_geometry()
        try:
            return as_vector(self.operating_point.q0_m3ps, g.n_inlets, "q0_m3ps")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def truth_plant_config(self) -> TruthPlantConfig:
        t = self.truth_plant
        try:
            return TruthPlantConfig(
                geometry=self.build_geometry(),
                lateral_diffusivity=t.lateral_diffusivity_m2ps,
                supply_c0=t.supply_c0,
                supply_c1=t.supply_c1,
                grid_ny=t.grid_ny,
                sim_dt=t.sim_dt_s,
                domain_margin=t.domain_margin,
                noise_std=t.noise_std_m,
                rng_seed=self.seed,
                q0=self.q0(),
                bypass_supply=t.bypass_supply,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid truth_plant section: {exc}") from None

    def prbs_spec(self) -> PrbsSpec:
        try:
            return self.prbs.build(self.seed)
        except ValueError as exc:
            raise ConfigError(f"invalid prbs section: {exc}") from None
