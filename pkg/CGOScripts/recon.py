"""
Fixed-point reconstruction of a potential from finite CGO measurements.

Given y = P_N U(q*), the operator

    A(q) = P_{W_R}( F^-1 y + F^-1 P_N^perp F q - F^-1 P_N B(q) )

has q* as a fixed point, and it is a 3/4-contraction on W_R once N satisfies the
balancing bound and the t-schedule makes B a 1/2-contraction. reconstruct iterates A
from any starting point in W_R and logs the geometric convergence.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .cgo import SolverConfig
from .errors import PositivityError, ProvenanceError
from .spectral import Field, FreqOrdering, forward_transform, inverse_transform, spectral_laplacian
from .subspaces import BoxConstraint, SubspaceBasis, project_box
from .transform import MeasurementOperator, MeasurementVector, TSchedule

logger = logging.getLogger(__name__)

CONTRACTION_RATE = 0.75
ENVELOPE_CONSTANT = 4.0
ENVELOPE_SLACK = 1e-9
LOG_COLUMNS = ["n", "step_norm", "true_error", "data_residual"]


@dataclass(eq=False)
class ReconConfig:
    N: int
    schedule: TSchedule
    box: BoxConstraint
    basis: SubspaceBasis
    solver: SolverConfig
    ordering: FreqOrdering
    max_iter: int = 60
    stop_tol: float = 1e-10
    projection_tol: float = 1e-10
    threads: Optional[int] = None
    _operator: Optional[MeasurementOperator] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")

    @property
    def operator(self) -> MeasurementOperator:
        if self._operator is None:
            self._operator = MeasurementOperator(self.basis.grid, self.ordering, self.schedule, self.solver,
                                                 self.N, self.threads)
        return self._operator

    def project(self, q: Field) -> Field:
        return project_box(q, self.basis, self.box, self.projection_tol)


@dataclass(eq=False)
class IterationLog:
    """Per-iteration records n, step_norm, true_error, data_residual."""

    frame: pd.DataFrame

    def envelope_holds(self, slack: float = ENVELOPE_SLACK) -> bool:
        """||q* - q_n|| <= 4 (3/4)^n ||q_1 - q_0|| for every logged n >= 1."""
        rows = self.frame[self.frame["n"] >= 1]
        if rows.empty or rows["true_error"].isna().all():
            return True
        first_step = float(rows.iloc[0]["step_norm"])
        bound = ENVELOPE_CONSTANT * CONTRACTION_RATE ** rows["n"].to_numpy(dtype=float) * first_step
        return bool(np.all(rows["true_error"].to_numpy(dtype=float) <= bound + slack))

    def to_csv(self, path: str):
        self.frame.to_csv(path, index=False)


@dataclass(eq=False)
class ReconResult:
    q: Field
    log: IterationLog
    converged: bool
    iterations: int


def _check_provenance(y: MeasurementVector, cfg: ReconConfig):
    op = cfg.operator
    if y.N != cfg.N:
        raise ProvenanceError(f"Measurement holds N={y.N} values, reconstruction expects N={cfg.N}")
    if y.ordering != cfg.ordering.kind:
        raise ProvenanceError(f"Measurement ordering '{y.ordering}' differs from '{cfg.ordering.kind}'")
    if y.grid != cfg.basis.grid:
        raise ProvenanceError("Measurement grid differs from the reconstruction grid")
    if not np.array_equal(y.frequencies, op.frequencies):
        raise ProvenanceError("Measurement frequencies differ from the configured ordering")
    if not (math.isclose(y.schedule.tau, cfg.schedule.tau) and math.isclose(y.schedule.s, cfg.schedule.s)):
        raise ProvenanceError(
            f"Measurement schedule (tau={y.schedule.tau}, s={y.schedule.s}) differs from "
            f"(tau={cfg.schedule.tau}, s={cfg.schedule.s})")


def _apply_A(q: Field, y: MeasurementVector, cfg: ReconConfig, B_q: np.ndarray) -> Field:
    op = cfg.operator
    spectrum = forward_transform(q).scatter(op.frequencies, y.values - B_q)
    return cfg.project(inverse_transform(spectrum))


def apply_A(q: Field, y: MeasurementVector, cfg: ReconConfig) -> Field:
    """
    One application of the reconstruction operator A.

    The input is first projected onto W_R. The first N ordered frequency slots of F q are
    replaced by y_l - B(q)_l, the rest keep the tail of F q, and the inverse transform is
    projected onto W_R.

    Raises:
        ProvenanceError: y was not measured with cfg's ordering, schedule and grid
    """
    _check_provenance(y, cfg)
    q = cfg.project(q)
    return _apply_A(q, y, cfg, cfg.operator.B(q))


def reconstruct(y: MeasurementVector, q0: Field, cfg: ReconConfig, truth: Optional[Field] = None) -> ReconResult:
    """
    Iterate q_n = A(q_{n-1}) from q0 until ||q_n - q_{n-1}|| <= stop_tol or max_iter.

    Args:
        y: measurement vector P_N U(q*)
        q0: starting point (projected onto W_R first)
        cfg: ReconConfig
        truth: optional q*, used only to log true_error

    Returns:
        ReconResult; `iterations` counts the applications of A before the one that met
        stop_tol, so q0 = q* gives 0. On hitting max_iter a RuntimeWarning is issued and the
        last iterate is returned with converged=False.
    """
    _check_provenance(y, cfg)
    op = cfg.operator
    q = cfg.project(q0)
    records: List[dict] = []

    def record(n: int, step: float, current: Field, B_q: np.ndarray):
        residual = float(np.linalg.norm(op.F(current) + B_q - y.values))
        error = current.distance(truth) if truth is not None else np.nan
        records.append({"n": n, "step_norm": step, "true_error": error, "data_residual": residual})
        logger.info("iteration %d: step %.3e, data residual %.3e, true error %s", n, step, residual,
                    f"{error:.3e}" if truth is not None else "n/a")

    B_q = op.B(q)
    record(0, np.nan, q, B_q)
    converged = False
    iterations = cfg.max_iter
    for n in range(1, cfg.max_iter + 1):
        q_next = _apply_A(q, y, cfg, B_q)
        step = q_next.distance(q)
        q = q_next
        B_q = op.B(q)
        record(n, step, q, B_q)
        if step <= cfg.stop_tol:
            converged = True
            iterations = n - 1
            break
    if not converged:
        warnings.warn(f"Reconstruction did not reach stop_tol={cfg.stop_tol:g} in {cfg.max_iter} iterations",
                      RuntimeWarning)
    return ReconResult(q, IterationLog(pd.DataFrame(records, columns=LOG_COLUMNS)), converged, iterations)


@dataclass(frozen=True)
class PerturbationReport:
    noise_level: float
    error: float
    bound: float
    iterations: int

    @property
    def within_bound(self) -> bool:
        return self.error <= self.bound


def perturbation_experiment(q_star: Field, noise_level: float, cfg: ReconConfig, seed: int = 0,
                            q0: Optional[Field] = None, slack: float = 1e-8) -> PerturbationReport:
    """
    Reconstruct from y + delta with ||delta||_l2 = noise_level in a seeded random direction.

    The contraction gives ||q~ - q*|| <= 4 ||delta||; the report's bound adds `slack` for the
    iteration tolerance.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    y = cfg.operator.U(q_star)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(y.N) + 1j * rng.standard_normal(y.N)
    delta = noise_level * direction / np.linalg.norm(direction)
    start = q0 if q0 is not None else Field.zeros(q_star.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = reconstruct(y.with_values(y.values + delta), start, cfg)
    error = result.q.distance(q_star)
    return PerturbationReport(noise_level, error, ENVELOPE_CONSTANT * noise_level + slack, result.iterations)


def perturbation_sweep(q_star: Field, noise_levels: Sequence[float], cfg: ReconConfig, seed: int = 0) -> pd.DataFrame:
    """Table noise_level, error, bound, within_bound over several noise levels."""
    rows = []
    for level in noise_levels:
        report = perturbation_experiment(q_star, level, cfg, seed)
        rows.append({"noise_level": report.noise_level, "error": report.error, "bound": report.bound,
                     "within_bound": report.within_bound})
    return pd.DataFrame(rows, columns=["noise_level", "error", "bound", "within_bound"])


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    slope, _ = np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)
    return float(slope)


def liouville_potential(sigma: Field, boundary_tol: float = 1e-8) -> Field:
    """
    Potential q = Laplacian(sqrt(sigma)) / sqrt(sigma) of a smooth positive conductivity.

    With a support mask, sigma is taken as 1 outside the mask, and mask nodes adjacent to
    the outside must already equal 1 to within boundary_tol.

    Raises:
        PositivityError: sigma has a non-positive node value or a non-negligible imaginary part
        ValueError: sigma differs from 1 on the boundary layer of its mask
    """
    values = sigma.values
    mask = sigma.support_mask
    if np.max(np.abs(values.imag)) > 1e-12:
        raise PositivityError("Conductivity must be real-valued")
    conductivity = values.real.copy()
    if mask is not None:
        conductivity[~mask] = 1.0
        outside = ~mask
        layer = np.zeros_like(mask)
        for axis in range(sigma.grid.d):
            for shift in (-1, 1):
                layer |= np.roll(outside, shift, axis=axis)
        layer &= mask
        if np.any(np.abs(conductivity[layer] - 1.0) > boundary_tol):
            raise ValueError("Conductivity must equal 1 in a neighbourhood of the support boundary")
    smallest = float(np.min(conductivity))
    if smallest <= 0:
        raise PositivityError(f"Conductivity must be positive, minimum node value is {smallest:.6g}")
    root = Field(sigma.grid, np.sqrt(conductivity))
    q = spectral_laplacian(root).values.real / root.values.real
    return Field(sigma.grid, q, mask)


def conductivity_from_profile(grid, a: float, axis: int = 0) -> Field:
    """sigma = (1 + a cos 2 pi x_axis)^2 for |a| < 1."""
    if abs(a) >= 1:
        raise PositivityError(f"Profile amplitude must satisfy |a| < 1, got {a}")
    x = grid.nodes()[axis]
    return Field(grid, np.broadcast_to((1.0 + a * np.cos(2 * np.pi * x)) ** 2, grid.shape))
