"""Run configuration: JSON file sections, defaults and output-directory resolution."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from .exceptions import ConfigError

TWO_PI = 2.0 * math.pi
OUT_ENV = "SPHEREGATE_OUT"


def mhz(value: float) -> float:
    """Linear MHz to angular rad/us."""
    return TWO_PI * value


def khz(value: float) -> float:
    """Linear kHz to angular rad/us."""
    return TWO_PI * value * 1e-3


@dataclass
class GeometrySection:
    radius_um: float = 5.0
    height_um: float = 1.85
    twist_rad: float = math.pi / 3
    ring_size: int = 3
    c3_MHz_um3: float = 4730.0
    c6_MHz_um6: float = 14900.0

    @property
    def c3(self) -> float:
        return mhz(self.c3_MHz_um3)

    @property
    def c6(self) -> float:
        return mhz(self.c6_MHz_um6)

    def validate(self) -> None:
        if self.radius_um <= 0:
            raise ConfigError("geometry.radius_um must be positive")
        if not 0 <= self.height_um < self.radius_um:
            raise ConfigError("geometry.height_um must satisfy 0 <= h < radius_um")
        if self.ring_size < 1:
            raise ConfigError("geometry.ring_size must be >= 1")


@dataclass
class DriveSection:
    omega_t_MHz: float = 3.784
    chi: float = 1.0

    @property
    def omega_t(self) -> float:
        return mhz(self.omega_t_MHz)

    @property
    def omega_c(self) -> float:
        return self.chi * self.omega_t

    def validate(self) -> None:
        if self.omega_t_MHz <= 0:
            raise ConfigError("drive.omega_t_MHz must be positive")
        if self.chi <= 0:
            raise ConfigError("drive.chi must be positive")


@dataclass
class DecaySection:
    gamma_c_kHz: float = 2.0
    gamma_t_kHz: float = 4.0
    jump_model: str = "split"

    @property
    def gamma_c(self) -> float:
        return khz(self.gamma_c_kHz)

    @property
    def gamma_t(self) -> float:
        return khz(self.gamma_t_kHz)

    def validate(self) -> None:
        if self.gamma_c_kHz < 0 or self.gamma_t_kHz < 0:
            raise ConfigError("decay rates must be nonnegative")
        if self.jump_model not in ("split", "paper-literal"):
            raise ConfigError(f"decay.jump_model must be 'split' or 'paper-literal', got {self.jump_model!r}")


@dataclass
class SolverSection:
    trajectories: int = 500
    rk4_substeps_per_period: int = 50
    mode: str = "mcwf"
    fidelity_measure: str = "uhlmann"

    def validate(self) -> None:
        if self.trajectories < 1:
            raise ConfigError("solver.trajectories must be >= 1")
        if self.rk4_substeps_per_period < 1:
            raise ConfigError("solver.rk4_substeps_per_period must be >= 1")
        _check_mode(self.mode, "solver.mode")
        _check_measure(self.fidelity_measure, "solver.fidelity_measure")


DEFAULT_CHI_HEIGHTS = (0.37, 0.68)


@dataclass
class SweepSection:
    parameter: str = "h"
    start: float = 0.02
    stop: float = 0.98
    points: int = 60
    # h/R_ct values scanned at each chi; only the chi sweep reads it
    heights: Optional[List[float]] = None

    def values(self) -> List[float]:
        step = (self.stop - self.start) / (self.points - 1)
        return [self.start + i * step for i in range(self.points)]

    def height_ratios(self) -> List[float]:
        return list(self.heights) if self.heights else list(DEFAULT_CHI_HEIGHTS)

    def validate(self) -> None:
        if self.parameter not in DEFAULT_SWEEPS:
            raise ConfigError(f"sweep.parameter must be one of {sorted(DEFAULT_SWEEPS)}, got {self.parameter!r}")
        if self.points < 2:
            raise ConfigError("sweep.points must be >= 2")
        if self.parameter == "h" and not (0 < self.start < 1 and 0 < self.stop < 1):
            raise ConfigError("h sweep runs over h/R_ct in (0, 1)")
        if self.parameter in ("chi", "omega_t") and min(self.start, self.stop) <= 0:
            raise ConfigError(f"{self.parameter} sweep values must be positive")
        if self.heights is not None:
            if self.parameter != "chi":
                raise ConfigError("sweep.heights only applies to the chi sweep")
            if not self.heights or any(not 0 <= h < 1 for h in self.heights):
                raise ConfigError("sweep.heights must be a non-empty list in [0, 1)")


DEFAULT_SWEEPS = {
    "h": SweepSection("h", 0.02, 0.98, 60),
    "chi": SweepSection("chi", 1.0, 20.0, 20),
    "omega_t": SweepSection("omega_t", 0.5, 20.0, 20),
}


@dataclass
class GateSection:
    controls: int = 6
    height_ratio: float = 0.37
    chi: float = 10.0
    mode: str = "nojump"
    # gate, truth-table and seventh report etalon populations
    fidelity_measure: str = "population"

    def validate(self) -> None:
        if self.controls < 1:
            raise ConfigError("gate.controls must be >= 1")
        if not 0 <= self.height_ratio < 1:
            raise ConfigError("gate.height_ratio must lie in [0, 1)")
        if self.chi <= 0:
            raise ConfigError("gate.chi must be positive")
        _check_mode(self.mode, "gate.mode")
        _check_measure(self.fidelity_measure, "gate.fidelity_measure")


@dataclass
class SeventhSection:
    samples: int = 10
    max_ucc_MHz: float = 1.0
    max_attempts: int = 1_000_000

    @property
    def max_ucc(self) -> float:
        return mhz(self.max_ucc_MHz)

    def validate(self) -> None:
        if self.samples < 1:
            raise ConfigError("seventh.samples must be >= 1")
        if self.max_ucc_MHz <= 0:
            raise ConfigError("seventh.max_ucc_MHz must be positive")
        if self.max_attempts < 1:
            raise ConfigError("seventh.max_attempts must be >= 1")


@dataclass
class OverrideSection:
    zero_decay: bool = False
    zero_ucc: bool = False
    uct_scale: float = 1.0


@dataclass
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    drive: DriveSection = field(default_factory=DriveSection)
    decay: DecaySection = field(default_factory=DecaySection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: List[SweepSection] = field(default_factory=list)
    gate: GateSection = field(default_factory=GateSection)
    seventh: SeventhSection = field(default_factory=SeventhSection)
    overrides: OverrideSection = field(default_factory=OverrideSection)
    output_dir: str = "runs"
    master_seed: int = 1234
    workers: int = 1

    def sweep_for(self, parameter: str) -> SweepSection:
        for s in self.sweep:
            if s.parameter == parameter:
                return s
        return DEFAULT_SWEEPS[parameter]

    def validate(self) -> "RunConfig":
        for section in (self.geometry, self.drive, self.decay, self.solver, self.gate, self.seventh, *self.sweep):
            section.validate()
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_mode(mode: str, key: str) -> None:
    if mode not in ("mcwf", "nojump", "master"):
        raise ConfigError(f"{key} must be one of mcwf, nojump, master; got {mode!r}")


def _check_measure(measure: str, key: str) -> None:
    if measure not in ("uhlmann", "population"):
        raise ConfigError(f"{key} must be uhlmann or population, got {measure!r}")


def _section(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from exc


_SECTIONS = {
    "geometry": GeometrySection,
    "drive": DriveSection,
    "decay": DecaySection,
    "solver": SolverSection,
    "gate": GateSection,
    "seventh": SeventhSection,
    "overrides": OverrideSection,
}


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    scalars = {"output_dir", "master_seed", "workers"}
    unknown = sorted(set(data) - set(_SECTIONS) - scalars - {"sweep"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs: Dict[str, Any] = {name: _section(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    sweeps = data.get("sweep", [])
    if isinstance(sweeps, dict):
        sweeps = [sweeps]
    kwargs["sweep"] = [_section(SweepSection, s, "sweep") for s in sweeps]
    kwargs.update({k: data[k] for k in scalars if k in data})
    return RunConfig(**kwargs).validate()


def load_config(path: Optional[str] = None) -> RunConfig:
    """Read a JSON run config; no path gives the defaults."""
    if not path:
        return RunConfig().validate()
    p = Path(path).expanduser()
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def get_out_dir(override: Optional[str] = None, config: Optional[RunConfig] = None) -> Path:
    """Resolve the output directory.

    Precedence: $SPHEREGATE_OUT > override arg > config.output_dir.
    """
    env = os.getenv(OUT_ENV)
    if env:
        return Path(env).expanduser()
    if override:
        return Path(override).expanduser()
    return Path(config.output_dir if config else "runs").expanduser()
