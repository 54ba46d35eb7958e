"""
Run configuration: one JSON document, validated into dataclasses.

Unknown keys are rejected with a ``ConfigError`` naming the dotted key
path.  Only the provider endpoint (``NVCALIB_PROVIDER``) and the seed
(``NVCALIB_SEED``) may be overridden from the environment.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .physics import BiasField, Constants, NoiseModel, NVAxes, SpectrumModel
from .presets import OVERLAPPED_FIELD, lab_axes
from .pso import PsoConfig

__all__ = [
    "ModelConfig",
    "NoiseConfig",
    "SweepConfig",
    "CalibrationConfig",
    "SensitivityConfig",
    "RemoteConfig",
    "RunConfig",
    "load_config",
]


@dataclass
class ModelConfig:
    f0: float = 1.0
    contrast: float = 0.0222 / 4
    linewidth: float = 516e3
    # "lab" (misaligned crystal), "ideal", or a 3-vector the lab x axis maps to
    axes: Any = "lab"

    def build(self, constants: Constants) -> SpectrumModel:
        return SpectrumModel(self.f0, self.contrast, self.linewidth, constants)

    def build_axes(self) -> NVAxes:
        if self.axes == "lab":
            return lab_axes()
        if self.axes == "ideal":
            return NVAxes.ideal()
        if isinstance(self.axes, (list, tuple)) and len(self.axes) == 3:
            return NVAxes.aligned_to(self.axes)
        raise ConfigError(f"model.axes must be 'lab', 'ideal' or a 3-vector, got {self.axes!r}",
                          "model.axes")


@dataclass
class NoiseConfig:
    white_density: float = 6.58e-6
    mains_lines: list = field(default_factory=lambda: [[50.0, 0.0], [100.0, 0.0], [150.0, 0.0]])
    electronic_floor: float = 0.0

    def build(self) -> NoiseModel:
        return NoiseModel(self.white_density, tuple(tuple(m) for m in self.mains_lines),
                          self.electronic_floor)


@dataclass
class SweepConfig:
    f_start: float = 2.790e9
    f_stop: float = 2.950e9
    n_points: int = 1334
    mode: str = "cw"
    mod_depth: float | None = None
    three_tone: bool = False
    # field used when the command line gives none, in tesla
    field: list = field(default_factory=lambda: list(OVERLAPPED_FIELD.b))


@dataclass
class CalibrationConfig:
    pso: dict = field(default_factory=dict)
    window_half_width: float = 7.5e6
    window_points: int = 301
    residual_tolerance: float = 0.05

    def build_pso(self, seed: int) -> PsoConfig:
        data = dict(self.pso)
        data.setdefault("seed", seed)
        try:
            return PsoConfig.from_dict(data)
        except KeyError as exc:
            raise ConfigError(f"unknown key 'calibration.pso.{exc.args[0]}'",
                              f"calibration.pso.{exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"calibration.pso: {exc}", "calibration.pso") from None


@dataclass
class SensitivityConfig:
    mode: str = "both"
    fs: float = 53.57e3
    duration: float = 1.0
    band: list = field(default_factory=lambda: [1.0, 77.92])
    n_records: int = 20
    band_method: str = "rms"
    sweep_points: int = 401
    sweep_half_span: float = 1e6
    off_resonance_offset: float = 8e6


@dataclass
class RemoteConfig:
    timeout: float = 10.0
    settle_time: float = 0.05


@dataclass
class RunConfig:
    seed: int = 0
    provider: str = "simulator"
    output_dir: str = "out"
    constants: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    remote: RemoteConfig = field(default_factory=RemoteConfig)

    def build_constants(self) -> Constants:
        unknown = sorted(set(self.constants) - set(Constants.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown key 'constants.{unknown[0]}'", f"constants.{unknown[0]}")
        return Constants.from_dict(self.constants)

    def validate(self) -> "RunConfig":
        """Build every sub-object once so invalid values fail early."""
        try:
            c = self.build_constants()
            self.model.build(c)
            self.model.build_axes()
            self.noise.build()
            BiasField(tuple(self.sweep.field))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        self.calibration.build_pso(self.seed)
        if self.sweep.mode not in ("cw", "lockin"):
            raise ConfigError(f"sweep.mode must be cw or lockin, got {self.sweep.mode!r}",
                              "sweep.mode")
        if self.sensitivity.mode not in ("separated", "overlapped", "both"):
            raise ConfigError("sensitivity.mode must be separated, overlapped or both",
                              "sensitivity.mode")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{path or 'config'}' must be a JSON object", path or None)
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key '{dotted}'", dotted)
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            value = _build(type(default), value, dotted)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: str | Path | None = None, env: dict | None = None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the defaults."""
    env = os.environ if env is None else env
    if path is None:
        cfg = RunConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        cfg = _build(RunConfig, data, "")
    if env.get("NVCALIB_PROVIDER"):
        cfg.provider = env["NVCALIB_PROVIDER"]
    if env.get("NVCALIB_SEED"):
        try:
            cfg.seed = int(env["NVCALIB_SEED"])
        except ValueError:
            raise ConfigError("NVCALIB_SEED must be an integer", "seed") from None
    return cfg.validate()
