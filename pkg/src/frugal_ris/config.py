"""Run configuration: physical scenario, search grids, and experiment settings.

Configs load from TOML files whose sections mirror the dataclasses here::

    [scenario]          # Scenario fields
    [grid]              # GridSpec fields
    [run]               # RunConfig fields
    [detector]          # DetectorConfig fields
    [sweep]             # SweepConfig fields

Unknown keys are rejected so that typos fail loudly.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import tomli

from .geometry import RisArrayLayout, compute_aod, rot_z, check_rotation


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Geometry, waveform and noise of one deployment (defaults: the reference deployment)."""

    wavelength: float = 0.01
    ts: float = 10e-6
    n_tx: int = 256
    rows: int = 64
    cols: int = 64
    spacing: float = 0.005
    plane: str = "xz"
    n0_dbm_hz: float = -174.0
    noise_figure_db: float = 8.0
    power_dbm: float = 30.0
    bs: tuple = (0.0, 0.0, 0.0)
    ue: tuple = (5.0, 2.0, 0.5)
    ris_positions: tuple = ((10.0, -10.0, 0.0), (0.0, 10.0, 0.0))
    ris_rot_z_deg: tuple = (0.0, 180.0)
    ris_rotations: tuple | None = None
    code_length: int | None = None

    def __post_init__(self):
        # normalise list inputs from TOML into hashable tuples
        for name in ("bs", "ue"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "ris_positions",
                           tuple(tuple(float(v) for v in p) for p in self.ris_positions))
        object.__setattr__(self, "ris_rot_z_deg", tuple(float(v) for v in self.ris_rot_z_deg))
        if self.ris_rotations is not None:
            object.__setattr__(self, "ris_rotations", tuple(
                tuple(tuple(float(v) for v in row) for row in m) for m in self.ris_rotations))
        self.validate()

    def validate(self):
        if self.wavelength <= 0 or self.ts <= 0 or self.spacing <= 0:
            raise ConfigError("wavelength, ts and spacing must be positive")
        if self.n_tx < 1:
            raise ConfigError("n_tx must be positive")
        if len(self.bs) != 3 or len(self.ue) != 3:
            raise ConfigError("positions must have three components")
        if any(len(p) != 3 for p in self.ris_positions):
            raise ConfigError("RIS positions must have three components")
        if self.n_ris < 1:
            raise ConfigError("at least one RIS is required")
        if self.ris_rotations is None:
            if len(self.ris_rot_z_deg) != self.n_ris:
                raise ConfigError("need one z rotation per RIS")
        else:
            if len(self.ris_rotations) != self.n_ris:
                raise ConfigError("need one rotation matrix per RIS")
            for m in self.ris_rotations:
                try:
                    check_rotation(m, atol=1e-9)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        try:
            RisArrayLayout(self.rows, self.cols, self.spacing, self.plane)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for p in self.ris_positions:
            if np.allclose(p, self.ue) or np.allclose(p, self.bs):
                raise ConfigError("RIS coincides with BS or UE")
        if np.allclose(self.bs, self.ue):
            raise ConfigError("BS coincides with UE")

    @property
    def n_ris(self) -> int:
        return len(self.ris_positions)

    @cached_property
    def layout(self) -> RisArrayLayout:
        return RisArrayLayout(self.rows, self.cols, self.spacing, self.plane)

    @cached_property
    def rotations(self) -> list[np.ndarray]:
        if self.ris_rotations is not None:
            return [np.array(m) for m in self.ris_rotations]
        return [rot_z(np.deg2rad(t)) for t in self.ris_rot_z_deg]

    @property
    def ris_array(self) -> np.ndarray:
        return np.array(self.ris_positions)

    @property
    def power(self) -> float:
        """Transmit power in watts."""
        return float(dbm_to_watt(self.power_dbm))

    @property
    def noise_power(self) -> float:
        """sigma^2 = N0 / Ts * n_f, in watts."""
        return float(dbm_to_watt(self.n0_dbm_hz) / self.ts * db_to_linear(self.noise_figure_db))

    @cached_property
    def aoas(self) -> np.ndarray:
        """Known angle of arrival from the BS at each RIS, shape (R, 2)."""
        return np.array([compute_aod(self.bs, p, rot)
                         for p, rot in zip(self.ris_positions, self.rotations)])

    def aods(self, ue=None) -> np.ndarray:
        """Angles of departure towards ``ue`` (default: true UE), shape (R, 2)."""
        ue = self.ue if ue is None else ue
        return np.array([compute_aod(ue, p, rot)
                         for p, rot in zip(self.ris_positions, self.rotations)])

    def with_power(self, power_dbm: float) -> "Scenario":
        return dataclasses.replace(self, power_dbm=float(power_dbm))


@dataclass(frozen=True)
class GridSpec:
    """Coarse search grids.

    The CFO grid is uniform over ``cfo_center +- cfo_span / 2`` (default span
    ``1 / ts``, the full unambiguous range). AoD grids are uniform in the two
    in-plane direction cosines of the panel, ``aod_points`` per axis.
    """

    cfo_points: int = 512
    cfo_points_ml: int = 512
    cfo_span: float | None = None
    cfo_center: float = 0.0
    aod_points: int = 128
    refine: bool = True
    tol: float = 1e-10
    max_iters: int = 200

    def __post_init__(self):
        if min(self.cfo_points, self.cfo_points_ml, self.aod_points) < 1:
            raise ConfigError("grid point counts must be positive")
        if self.cfo_span is not None and self.cfo_span <= 0:
            raise ConfigError("cfo_span must be positive")

    def cfo_grid(self, ts: float, ml: bool = False) -> np.ndarray:
        span = 1.0 / ts if self.cfo_span is None else self.cfo_span
        if abs(self.cfo_center) + span / 2 > 1.0 / (2 * ts) + 1e-9:
            raise ConfigError("CFO grid exceeds +-1/(2 ts)")
        n = self.cfo_points_ml if ml else self.cfo_points
        return self.cfo_center + np.linspace(-span / 2, span / 2, n, endpoint=False)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    trials: int = 100
    powers_dbm: tuple = (0.0, 10.0, 20.0, 30.0, 40.0)
    cfo_hz: float = -40e3
    estimator: str = "los"
    base_kind: str = "random"
    fixed_profiles: bool = False
    refine_position: bool = False
    lc_joint_refine: bool = True

    def __post_init__(self):
        object.__setattr__(self, "powers_dbm", tuple(float(p) for p in self.powers_dbm))
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.estimator not in ("los", "ml", "lc"):
            raise ConfigError("estimator must be one of los, ml, lc")
        if self.base_kind not in ("random", "directional"):
            raise ConfigError("base_kind must be random or directional")


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float | None = None
    calibration_trials: int = 500
    calibration_power_dbm: float = 30.0
    target_pd: float = 0.99
    max_log_psi: float = float(np.log(10.0))
    variant: str = "ml"
    measure_pd: bool = True

    def __post_init__(self):
        if self.max_log_psi <= 0:
            raise ConfigError("max_log_psi must be positive")
        if self.calibration_trials < 1:
            raise ConfigError("calibration_trials must be >= 1")
        if not 0.0 < self.target_pd <= 1.0:
            raise ConfigError("target_pd must lie in (0, 1]")
        if self.variant not in ("ml", "lc"):
            raise ConfigError("detector variant must be ml or lc")


@dataclass(frozen=True)
class SweepConfig:
    kappas: tuple = (0.1, 1.0, 10.0, 100.0)
    cfos_hz: tuple = (0.0, 50.0, 100.0, 200.0, -40e3)
    kappa_power_dbm: float = 35.0
    cfo_power_dbm: float = 35.0

    def __post_init__(self):
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        object.__setattr__(self, "cfos_hz", tuple(float(c) for c in self.cfos_hz))
        if any(k < 0 for k in self.kappas):
            raise ConfigError("Rician factors must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a run."""

    scenario: Scenario = field(default_factory=Scenario)
    grid: GridSpec = field(default_factory=GridSpec)
    run: RunConfig = field(default_factory=RunConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def replace(self, **sections) -> "ScenarioConfig":
        """Copy with per-section field overrides, e.g. ``replace(run={"trials": 5})``."""
        updated = {}
        for name, overrides in sections.items():
            current = getattr(self, name)
            updated[name] = dataclasses.replace(current, **overrides)
        return dataclasses.replace(self, **updated)

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in dataclasses.fields(self)}


_SECTIONS = {
    "scenario": Scenario,
    "grid": GridSpec,
    "run": RunConfig,
    "detector": DetectorConfig,
    "sweep": SweepConfig,
}


def config_from_dict(data: dict) -> ScenarioConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        values = data.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError(f"section [{name}] must be a table")
        allowed = {f.name for f in dataclasses.fields(cls)}
        bad = set(values) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        try:
            sections[name] = cls(**values)
        except TypeError as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    return ScenarioConfig(**sections)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
