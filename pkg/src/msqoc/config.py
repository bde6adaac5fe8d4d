"""Run configuration, builtin test-case presets and problem assembly."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controls import ControlParameterization
from .model import SystemSpec, qft_target
from .objective import Regularization
from .optimizer import OptimizerConfig
from .propagation import Propagator, WindowGrid
from .shooting import ShootingProblem

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# Linear frequencies exactly as tabulated: GHz transitions, MHz couplings and carriers.
PRESETS = {
    "qft4": dict(
        freq_ghz=[5.18, 5.12],
        coupling_mhz=[5.0],
        carrier_mhz=[[-30.41, 30.41], [-30.41, 30.41]],
        duration_ns=190.0,
        total_steps=2252,
    ),
    "qft8": dict(
        freq_ghz=[5.18, 5.12, 5.06],
        coupling_mhz=[5.0, 5.0],
        carrier_mhz=[[0.0, -60.4], [60.4, 0.0, -60.4], [60.4, 0.0]],
        duration_ns=500.0,
        total_steps=19806,
    ),
    "qft16": dict(
        freq_ghz=[5.18, 5.12, 5.06, 5.0],
        coupling_mhz=[5.0, 5.0, 5.0],
        carrier_mhz=[[-30.0, -90.41], [30.0, -30.0, -90.41],
                     [90.41, 30.0, -30.0], [90.41, -30.0]],
        duration_ns=900.0,
        total_steps=106072,
    ),
}

REQUIRED = ("freq_ghz", "coupling_mhz", "carrier_mhz", "duration_ns", "total_steps")


@dataclass
class RunConfig:
    freq_ghz: list[float]
    coupling_mhz: list[float]
    carrier_mhz: list[list[float]]
    duration_ns: float
    total_steps: int
    name: str = "custom"
    rot_freq_ghz: float | None = None
    target: str = "qft"
    windows: int = 1
    knot_spacing_ns: float = 3.0
    mu: float | None = None
    sigma: float | list[float] = 0.1
    gamma_tikhonov: float | None = None
    gamma_energy: float = 1e-3
    box_bound_mhz: float = 25.0
    init_amplitude_mhz: float = 10.0
    seed: int = 0
    tol_estimate: float = 1e-3
    tol_gradnorm: float = 1e-8
    max_iters: int = 1000
    history_size: int = 10
    workers: int = 1
    block_size: int | None = None
    zero_boundary: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        if self.windows < 1:
            raise ConfigError("windows: must be >= 1")
        if self.total_steps < 1 or self.duration_ns <= 0:
            raise ConfigError("total_steps/duration_ns: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        try:
            self.system_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def num_qubits(self) -> int:
        return len(self.freq_ghz)

    @property
    def n(self) -> int:
        return 2 ** self.num_qubits

    @property
    def sigmas(self) -> list[float]:
        return list(self.sigma) if isinstance(self.sigma, (list, tuple)) else [self.sigma]

    def resolved_steps(self) -> int:
        """Total step count rounded up to a multiple of the window count."""
        M = self.windows
        steps = math.ceil(self.total_steps / M) * M
        if steps != self.total_steps:
            log.info("total_steps %d -> %d to divide %d windows", self.total_steps, steps, M)
        return steps

    def system_spec(self) -> SystemSpec:
        return SystemSpec(len(self.freq_ghz), tuple(self.freq_ghz), tuple(self.coupling_mhz),
                          tuple(tuple(c) for c in self.carrier_mhz), self.rot_freq_ghz)

    def parameterization(self) -> ControlParameterization:
        spec = self.system_spec()
        return ControlParameterization(self.duration_ns,
                                       tuple(tuple(c) for c in spec.carriers),
                                       self.knot_spacing_ns)

    def target_gate(self) -> np.ndarray:
        if self.target == "qft":
            return qft_target(self.n)
        return load_matrix(self.target, self.n)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            history_size=self.history_size, max_iters=self.max_iters,
            tol_estimate=self.tol_estimate, tol_gradnorm=self.tol_gradnorm,
            box_bound_mhz=self.box_bound_mhz, seed=self.seed,
            init_amplitude_mhz=self.init_amplitude_mhz)

    def problem(self, sigma: float | None = None, windows: int | None = None,
                total_steps: int | None = None) -> ShootingProblem:
        cfg = self if windows is None else dataclasses.replace(self, windows=windows)
        steps = cfg.resolved_steps() if total_steps is None else total_steps
        param = cfg.parameterization()
        grid = WindowGrid(cfg.duration_ns, steps, cfg.windows)
        prop = Propagator(cfg.system_spec(), param, grid)
        d = param.total_params
        mu = 2.0 / cfg.n if cfg.mu is None else cfg.mu
        tik = 1e-3 / d if cfg.gamma_tikhonov is None else cfg.gamma_tikhonov
        s = cfg.sigmas[0] if sigma is None else sigma
        return ShootingProblem(prop, cfg.target_gate(), mu, Regularization(tik, cfg.gamma_energy), s)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_matrix(path: str, n: int) -> np.ndarray:
    """Complex matrix from a JSON file with "re" and "im" arrays."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        V = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data.get("im", 0.0), dtype=float)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"target: cannot read matrix from {path}: {exc}") from exc
    if V.shape != (n, n):
        raise ConfigError(f"target: expected {n}x{n} matrix, got {V.shape}")
    if np.linalg.norm(V.conj().T @ V - np.eye(n)) > 1e-10:
        raise ConfigError("target: matrix is not unitary")
    return V


def make_config(preset: str | None = None, data: dict | None = None, **overrides) -> RunConfig:
    """Merge preset, JSON document and explicit overrides (later wins)."""
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
        merged["name"] = preset
    if data:
        merged.update(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration field")
    for key in REQUIRED:
        if key not in merged:
            raise ConfigError(f"{key}: missing required field")
    return RunConfig(**merged)


def load_config(path: str | None = None, preset: str | None = None, **overrides) -> RunConfig:
    data = None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        if preset is None:
            preset = data.pop("preset", None)
        else:
            data.pop("preset", None)
    return make_config(preset, data, **overrides)
