#!/usr/bin/env python3
"""
Experiment configuration
Reads KEY=VALUE experiment files with python-dotenv and validates them into ExperimentConfig
"""

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Dict, Any, List, Tuple

import numpy as np
from dotenv import dotenv_values

from errors import ConfigError
from geometry import HPolytope

CONFIG_DIR = Path(__file__).resolve().parent / "configs"
BUNDLED = ("example1", "example2")
CONTROLLER_NAMES = ("standard", "mpc1", "mpc1a", "mpc1b", "mpc2", "mpc2a", "tilde")
TABLE_CONTROLLERS = ("mpc1", "mpc1a", "mpc1b", "mpc2", "mpc2a")

REQUIRED_KEYS = ("SYSTEM_A", "SYSTEM_B", "COST_Q", "COST_R", "HORIZON", "EPS")
OPTIONAL_KEYS = (
    "NAME", "STATE_BOX", "STATE_H", "STATE_OFFSETS", "INPUT_BOX", "INPUT_H", "INPUT_OFFSETS",
    "GAIN_BOUND", "RICCATI_INPUT_COLUMNS", "CONTROLLERS", "RUNS", "STEPS", "SEED", "LEVELS",
    "TERMINAL_POINTS", "GRID", "MAX_ITER", "SRES_DELTAS", "SRES_RUNS", "SRES_SCALE", "SRES_STEPS",
    "OUTPUT_DIR",
)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    name: str
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope
    Q: np.ndarray
    R: np.ndarray
    horizon: int
    eps: float
    gain_bound: Optional[float] = 1.0
    riccati_input_columns: Optional[Tuple[int, ...]] = None
    controllers: Tuple[str, ...] = ("standard", "mpc1", "mpc1a", "mpc1b", "mpc2")
    runs: int = 20
    steps: int = 100
    seed: int = 0
    levels: int = 20
    terminal_points: int = 1000
    grid: int = 200
    max_iter: int = 1000
    sres_deltas: Tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    sres_runs: int = 50
    sres_scale: float = 0.8
    sres_steps: Optional[int] = None
    output_dir: Optional[str] = None
    path: Optional[str] = field(default=None, compare=False)

    @property
    def table_controllers(self) -> List[str]:
        return [c for c in self.controllers if c in TABLE_CONTROLLERS]

    def set_fields(self) -> Dict[str, Any]:
        """Fields that determine the built sets and certificates (the cache key)"""
        return {
            "A": self.A.tolist(), "B": self.B.tolist(),
            "X": self.X.to_dict(), "U": self.U.to_dict(),
            "Q": self.Q.tolist(), "R": self.R.tolist(),
            "horizon": self.horizon, "eps": self.eps, "gain_bound": self.gain_bound,
            "riccati_input_columns": list(self.riccati_input_columns) if self.riccati_input_columns else None,
            "levels": self.levels, "terminal_points": self.terminal_points, "max_iter": self.max_iter,
        }


@dataclass(frozen=True)
class RuntimeSettings:
    """Process-level settings from the environment (.env loaded at start-up)"""
    output_dir: str = "results"
    jobs: int = 1
    cache_url: Optional[str] = None
    log_level: str = "WARNING"

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        try:
            jobs = int(os.getenv("PCLF_JOBS", "1"))
        except ValueError:
            raise ConfigError("PCLF_JOBS must be an integer", field="PCLF_JOBS")
        return cls(
            output_dir=os.getenv("PCLF_OUTPUT_DIR", "results"),
            jobs=max(1, jobs),
            cache_url=os.getenv("PCLF_CACHE_URL") or None,
            log_level=os.getenv("PCLF_LOG_LEVEL", "WARNING").upper(),
        )


class _Reader:
    """Typed access to raw values with file/line diagnostics"""

    def __init__(self, values: Dict[str, Optional[str]], path: str, lines: Dict[str, int]):
        self.values = values
        self.path = path
        self.lines = lines

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, path=self.path, line=self.lines.get(key), field=key)

    def has(self, key: str) -> bool:
        return self.values.get(key) not in (None, "")

    def raw(self, key: str) -> str:
        if not self.has(key):
            raise self.error(key, "missing value")
        return self.values[key].strip()

    def matrix(self, key: str) -> np.ndarray:
        rows = [r for r in self.raw(key).split(";") if r.strip()]
        try:
            parsed = [[float(v) for v in re.split(r"[\s,]+", r.strip())] for r in rows]
        except ValueError:
            raise self.error(key, f"cannot parse matrix '{self.raw(key)}'")
        if len({len(r) for r in parsed}) != 1:
            raise self.error(key, "matrix rows have different lengths")
        return np.array(parsed, dtype=float)

    def vector(self, key: str) -> np.ndarray:
        try:
            return np.array([float(v) for v in re.split(r"[\s,;]+", self.raw(key)) if v], dtype=float)
        except ValueError:
            raise self.error(key, f"cannot parse numbers '{self.raw(key)}'")

    def integer(self, key: str, default: Optional[int] = None, minimum: int = 0) -> Optional[int]:
        if not self.has(key):
            return default
        try:
            value = int(self.raw(key))
        except ValueError:
            raise self.error(key, f"expected an integer, got '{self.raw(key)}'")
        if value < minimum:
            raise self.error(key, f"must be at least {minimum}")
        return value

    def number(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if not self.has(key):
            return default
        try:
            return float(self.raw(key))
        except ValueError:
            raise self.error(key, f"expected a number, got '{self.raw(key)}'")

    def polytope(self, prefix: str, dim: int) -> HPolytope:
        box_key, h_key, off_key = f"{prefix}_BOX", f"{prefix}_H", f"{prefix}_OFFSETS"
        if self.has(box_key):
            box = self.matrix(box_key)
            if box.shape != (dim, 2):
                raise self.error(box_key, f"expected {dim} rows of 'lower upper'")
            if np.any(box[:, 0] >= box[:, 1]):
                raise self.error(box_key, "lower bounds must be below upper bounds")
            return HPolytope.box(box[:, 0], box[:, 1])
        if self.has(h_key):
            H = self.matrix(h_key)
            h = self.vector(off_key)
            if H.shape[1] != dim or H.shape[0] != h.size:
                raise self.error(h_key, f"needs {dim} columns and one offset per row")
            try:
                return HPolytope(H, h)
            except ValueError as exc:
                raise self.error(h_key, str(exc))
        raise self.error(box_key, f"give {box_key} or {h_key}/{off_key}")


def _line_numbers(text: str) -> Dict[str, int]:
    lines = {}
    for number, line in enumerate(text.splitlines(), start=1):
        match = re.match(r"\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=", line)
        if match and match.group(1) not in lines:
            lines[match.group(1)] = number
    return lines


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment file"""
    path = str(path)
    if not os.path.isfile(path):
        raise ConfigError("config file not found", path=path)
    text = Path(path).read_text(encoding="utf-8")
    values = dotenv_values(path)
    r = _Reader(values, path, _line_numbers(text))

    unknown = [k for k in values if k not in REQUIRED_KEYS + OPTIONAL_KEYS]
    if unknown:
        raise r.error(unknown[0], "unknown key")
    for key in REQUIRED_KEYS:
        r.raw(key)

    A = r.matrix("SYSTEM_A")
    B = r.matrix("SYSTEM_B")
    n = A.shape[0]
    if A.shape != (n, n):
        raise r.error("SYSTEM_A", f"must be square, got {A.shape[0]}x{A.shape[1]}")
    if B.shape[0] != n:
        raise r.error("SYSTEM_B", f"needs {n} rows")
    m = B.shape[1]

    Q = r.matrix("COST_Q")
    R = r.matrix("COST_R")
    if Q.shape != (n, n):
        raise r.error("COST_Q", f"must be {n}x{n}")
    if R.shape != (m, m):
        raise r.error("COST_R", f"must be {m}x{m}")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q)[0] < -1e-10:
        raise r.error("COST_Q", "must be symmetric positive semidefinite")
    if not np.allclose(R, R.T) or np.linalg.eigvalsh(R)[0] <= 0:
        raise r.error("COST_R", "must be symmetric positive definite")

    eps = r.number("EPS")
    if not 0.0 < eps < 1.0:
        raise r.error("EPS", "must lie in (0, 1)")

    gain_bound: Optional[float] = 1.0
    if r.has("GAIN_BOUND"):
        if r.raw("GAIN_BOUND").lower() == "audit":
            gain_bound = None
        else:
            gain_bound = r.number("GAIN_BOUND")
            if gain_bound <= 0:
                raise r.error("GAIN_BOUND", "must be positive or 'audit'")

    columns = None
    if r.has("RICCATI_INPUT_COLUMNS"):
        columns = tuple(int(c) for c in r.vector("RICCATI_INPUT_COLUMNS"))
        if any(c < 0 or c >= m for c in columns):
            raise r.error("RICCATI_INPUT_COLUMNS", f"columns must lie in 0..{m - 1}")

    controllers = ExperimentConfig.controllers
    if r.has("CONTROLLERS"):
        controllers = tuple(c for c in re.split(r"[\s,]+", r.raw("CONTROLLERS").lower()) if c)
        bad = [c for c in controllers if c not in CONTROLLER_NAMES]
        if bad:
            raise r.error("CONTROLLERS", f"unknown controller '{bad[0]}', expected {CONTROLLER_NAMES}")

    deltas = ExperimentConfig.sres_deltas
    if r.has("SRES_DELTAS"):
        deltas = tuple(float(d) for d in r.vector("SRES_DELTAS"))
        if any(d < 0 for d in deltas):
            raise r.error("SRES_DELTAS", "bounds must be nonnegative")
    sres_scale = r.number("SRES_SCALE", 0.8)
    if not 0.0 < sres_scale <= 1.0:
        raise r.error("SRES_SCALE", "must lie in (0, 1]")

    return ExperimentConfig(
        name=r.raw("NAME") if r.has("NAME") else Path(path).stem,
        A=A, B=B,
        X=r.polytope("STATE", n),
        U=r.polytope("INPUT", m),
        Q=Q, R=R,
        horizon=r.integer("HORIZON", minimum=1),
        eps=eps,
        gain_bound=gain_bound,
        riccati_input_columns=columns,
        controllers=controllers,
        runs=r.integer("RUNS", 20, minimum=1),
        steps=r.integer("STEPS", 100, minimum=1),
        seed=r.integer("SEED", 0),
        levels=r.integer("LEVELS", 20, minimum=1),
        terminal_points=r.integer("TERMINAL_POINTS", 1000, minimum=3),
        grid=r.integer("GRID", 200, minimum=2),
        max_iter=r.integer("MAX_ITER", 1000, minimum=1),
        sres_deltas=deltas,
        sres_runs=r.integer("SRES_RUNS", 50, minimum=1),
        sres_scale=sres_scale,
        sres_steps=r.integer("SRES_STEPS", None, minimum=1),
        output_dir=r.raw("OUTPUT_DIR") if r.has("OUTPUT_DIR") else None,
        path=path,
    )


def bundled_examples() -> Dict[str, ExperimentConfig]:
    """The two configurations shipped in configs/"""
    return {name: load_config(CONFIG_DIR / f"{name}.env") for name in BUNDLED}


def resolve_config(name_or_path: str) -> ExperimentConfig:
    """A bundled example name or a path to a config file"""
    if name_or_path in BUNDLED:
        return load_config(CONFIG_DIR / f"{name_or_path}.env")
    return load_config(name_or_path)
