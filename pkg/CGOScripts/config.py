"""
Run configuration and environment defaults.

Environment variables (read from .env via python-dotenv):
    CGO_OUTPUT_DIR  output directory (default: <repo>/output, created on import)
    CGO_THREADS     worker threads for remainder solves (default: available cores)
    CGO_LOG_LEVEL   logging level for the CLI and workflow scripts (default: INFO)

A RunConfig JSON looks like:

    {
      "grid": {"d": 3, "n": 16},
      "subspace": {"family": "piecewise", "d": 3, "M": 8, "R": 5.0},
      "ordering": "hyperbolic",
      "schedule": {"s": 3, "tau": 1.0},
      "solver": {"method": "krylov", "tol": 1e-10},
      "recon": {"max_iter": 60, "stop_tol": 1e-10},
      "balance": {"threshold": 0.25, "source": "grid"},
      "calibrate": {"probes": 10, "margin": 0.05},
      "verify": {"criteria": null},
      "seed": 0
    }

Precedence: command-line flags over the config file over the environment.
Unknown keys at any level raise ConfigError.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from .cgo import SolverConfig
from .errors import ConfigError
from .spectral import ORDERING_KINDS, FreqOrdering, TorusGrid, make_grid_ordering, make_ordering
from .subspaces import BoxConstraint, SubspaceBasis, SubspaceSpec, build_basis
from .transform import BALANCING_SOURCES, TSchedule

# Load environment variables
load_dotenv()

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Define output directory
OUTPUT_DIR = os.getenv("CGO_OUTPUT_DIR") or os.path.join(REPO_ROOT, "output")

# Ensure output directory exists
os.makedirs(OUTPUT_DIR, exist_ok=True)

LOG_LEVEL = os.getenv("CGO_LOG_LEVEL", "INFO")

DEFAULT_R = 5.0


def default_threads() -> int:
    value = os.getenv("CGO_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"CGO_THREADS must be an integer, got '{value}'")
    return os.cpu_count() or 1


def configure_logging(level: Optional[str] = None):
    """Configure the root logger once for scripts."""
    logging.basicConfig(level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@dataclass(frozen=True)
class GridSection:
    d: int = 3
    n: int = 16


@dataclass(frozen=True)
class ScheduleSection:
    tau: float = 1.0
    s: Optional[float] = None
    p: Optional[float] = None


@dataclass(frozen=True)
class SolverSection:
    method: str = "krylov"
    tol: float = 1e-10
    max_iter: int = 500
    restart: int = 30
    refinements: int = 3
    resonance_delta: Optional[float] = None
    resonance_delta_factor: float = 1e-6
    nudge_factor: float = 1.0 + 1e-4
    max_nudges: int = 20
    grounding: str = "t_independent"


@dataclass(frozen=True)
class ReconSection:
    N: Optional[int] = None
    max_iter: int = 60
    stop_tol: float = 1e-10
    projection_tol: float = 1e-10


@dataclass(frozen=True)
class BalanceSection:
    threshold: float = 0.25
    N_max: Optional[int] = None
    source: str = "grid"
    sweep_M: List[int] = field(default_factory=lambda: [2, 4, 8])
    curve_points: int = 40


@dataclass(frozen=True)
class CalibrateSection:
    probes: int = 10
    margin: float = 0.05
    max_doublings: int = 20


@dataclass(frozen=True)
class VerifySection:
    criteria: Optional[List[str]] = None
    pairs: int = 20
    noise_levels: List[float] = field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    t_list: List[float] = field(default_factory=lambda: [20.0, 40.0, 80.0, 160.0])
    initializations: int = 5
    oracle_potentials: int = 10
    calibrate: bool = False


def _section(cls, data: Optional[Dict[str, Any]], name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"Config section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid '{name}' section: {e}") from e


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    subspace: SubspaceSpec = field(default_factory=lambda: SubspaceSpec.from_dict(
        {"family": "piecewise", "d": 3, "M": 8, "R": DEFAULT_R}))
    ordering: str = "hyperbolic"
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    solver: SolverSection = field(default_factory=SolverSection)
    recon: ReconSection = field(default_factory=ReconSection)
    balance: BalanceSection = field(default_factory=BalanceSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    verify: VerifySection = field(default_factory=VerifySection)
    seed: int = 0
    threads: Optional[int] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.ordering not in ORDERING_KINDS:
            raise ConfigError(f"ordering must be one of {ORDERING_KINDS}, got '{self.ordering}'")
        if self.balance.source not in BALANCING_SOURCES:
            raise ConfigError(f"balance.source must be one of {BALANCING_SOURCES}")
        if self.subspace.d != self.grid.d:
            raise ConfigError(f"subspace.d={self.subspace.d} differs from grid.d={self.grid.d}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("Run configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown top-level config keys: {sorted(unknown)}")
        grid = _section(GridSection, data.get("grid"), "grid")
        subspace_data = dict(data.get("subspace") or {"family": "piecewise", "M": 8})
        subspace_data.setdefault("d", grid.d)
        subspace_data.setdefault("R", DEFAULT_R)
        try:
            subspace = SubspaceSpec.from_dict(subspace_data)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid 'subspace' section: {e}") from e
        try:
            return cls(
                grid=grid,
                subspace=subspace,
                ordering=data.get("ordering", "hyperbolic"),
                schedule=_section(ScheduleSection, data.get("schedule"), "schedule"),
                solver=_section(SolverSection, data.get("solver"), "solver"),
                recon=_section(ReconSection, data.get("recon"), "recon"),
                balance=_section(BalanceSection, data.get("balance"), "balance"),
                calibrate=_section(CalibrateSection, data.get("calibrate"), "calibrate"),
                verify=_section(VerifySection, data.get("verify"), "verify"),
                seed=int(data.get("seed", 0)),
                threads=data.get("threads"),
                output_dir=data.get("output_dir"),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid run configuration: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": asdict(self.grid),
            "subspace": self.subspace.to_dict(),
            "ordering": self.ordering,
            "schedule": asdict(self.schedule),
            "solver": asdict(self.solver),
            "recon": asdict(self.recon),
            "balance": asdict(self.balance),
            "calibrate": asdict(self.calibrate),
            "verify": asdict(self.verify),
            "seed": self.seed,
            "threads": self.threads,
            "output_dir": self.output_dir,
        }

    def make_grid(self) -> TorusGrid:
        try:
            return TorusGrid(self.grid.d, self.grid.n)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def make_basis(self) -> SubspaceBasis:
        return build_basis(self.subspace, self.make_grid())

    def make_box(self) -> BoxConstraint:
        return BoxConstraint(self.subspace.R if self.subspace.R is not None else DEFAULT_R)

    def make_ordering(self, count: Optional[int] = None) -> FreqOrdering:
        """Grid-restricted ordering (all grid frequencies), or the first `count` lattice points."""
        if count is None:
            return make_grid_ordering(self.ordering, self.make_grid())
        return make_ordering(self.ordering, count, self.grid.d)

    def make_schedule(self) -> TSchedule:
        try:
            return TSchedule(tau=self.schedule.tau, s=self.schedule.s, d=self.grid.d, p=self.schedule.p)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def make_solver(self) -> SolverConfig:
        try:
            return SolverConfig(self.make_grid(), **asdict(self.solver))
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def resolved_threads(self) -> int:
        return self.threads or default_threads()

    def resolved_output_dir(self) -> str:
        return self.output_dir or OUTPUT_DIR

    def with_overrides(self, **overrides) -> "RunConfig":
        data = self.to_dict()
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return RunConfig.from_dict(data)


def load_run_config(path: Optional[str]) -> RunConfig:
    """Read a RunConfig JSON file; None gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    return RunConfig.from_dict(data)
