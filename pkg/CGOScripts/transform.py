"""
Measurement operators of the finite-measurement problem.

For an ordering k_1, k_2, ... and a t-schedule t_k = tau (|k|^s + 1):

    F(q)_l = q^(k_l)
    B(q)_l = integral of q(x) exp(-2 pi i k_l.x) r_l(x) dx      (bilinear, no conjugation)
    U(q)_l = F(q)_l + B(q)_l = integral of q exp(zeta2.x) psi_l dx

P_N keeps the first N entries. The balancing norm ||P_N^perp F P_W|| decides how many
measurements a prior subspace W needs, and calibrate_tau picks the schedule scale so
that B is a contraction on W_R.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import eigvalsh

from .cgo import (ComplexFrequency, RemainderSolution, SolverConfig, direct_integrand, guarded_zeta,
                  solve_remainder)
from .errors import CalibrationError, GridError, NotFoundError
from .spectral import Field, FreqOrdering, TorusGrid, forward_transform
from .subspaces import BoxConstraint, SubspaceBasis, random_element

logger = logging.getLogger(__name__)

BALANCING_SOURCES = ("closed_form", "grid")
BALANCING_THRESHOLD = 0.25
CONTRACTION_TARGET = 0.5


@dataclass(frozen=True)
class TSchedule:
    """t_k = tau (|k|^s + 1); p is kept only as metadata for gamma_s diagnostics."""

    tau: float
    s: Optional[float] = None
    d: int = 3
    p: Optional[float] = None

    def __post_init__(self):
        if self.s is None:
            object.__setattr__(self, "s", float(self.d))
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.s > self.d / 2.0:
            raise ValueError(f"s must exceed d/2 = {self.d / 2.0}, got s={self.s}")

    def t_for(self, k: Sequence[int]) -> float:
        return self.tau * (float(np.linalg.norm(np.asarray(k, dtype=float))) ** self.s + 1.0)

    def scaled(self, factor: float) -> "TSchedule":
        return TSchedule(self.tau * factor, self.s, self.d, self.p)

    def to_dict(self) -> Dict[str, Any]:
        return {"s": self.s, "tau": self.tau, "p": self.p}


@dataclass(eq=False)
class MeasurementVector:
    """y = P_N U(q) together with the provenance needed to recompute it."""

    values: np.ndarray
    ordering: str
    schedule: TSchedule
    solver: Dict[str, Any]
    grid: TorusGrid
    frequencies: np.ndarray
    t_used: List[float]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        self.frequencies = np.asarray(self.frequencies, dtype=int).reshape(len(self.values), -1)
        if len(self.values) < 1:
            raise ValueError("A measurement vector holds at least one value")

    @property
    def N(self) -> int:
        return len(self.values)

    def with_values(self, values: np.ndarray) -> "MeasurementVector":
        return MeasurementVector(values, self.ordering, self.schedule, self.solver, self.grid,
                                 self.frequencies, list(self.t_used))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "ordering": self.ordering,
            "s": self.schedule.s,
            "tau": self.schedule.tau,
            "p": self.schedule.p,
            "values": [[float(v.real), float(v.imag)] for v in self.values],
            "solver": self.solver,
            "grid": self.grid.to_dict(),
            "frequencies": self.frequencies.tolist(),
            "t_used": [float(t) for t in self.t_used],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MeasurementVector":
        grid = TorusGrid(**data["grid"])
        values = np.array([complex(re, im) for re, im in data["values"]])
        if len(values) != data["N"]:
            raise ValueError(f"Measurement file declares N={data['N']} but holds {len(values)} values")
        schedule = TSchedule(tau=data["tau"], s=data["s"], d=grid.d, p=data.get("p"))
        return cls(values, data["ordering"], schedule, data["solver"], grid,
                   np.asarray(data["frequencies"], dtype=int), data["t_used"])


class MeasurementOperator:
    """
    Evaluates F, B and U = F + B on the first N grid-representable frequencies of an ordering.

    The resonance guard runs once per channel at construction; remainder solves for the
    N channels run in a joblib thread pool and are collected in channel order.
    """

    def __init__(self, grid: TorusGrid, ordering: FreqOrdering, schedule: TSchedule, config: SolverConfig,
                 N: int, threads: Optional[int] = None):
        if config.grid != grid:
            raise GridError("Solver config and measurement operator use different grids")
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        restricted = ordering.within(grid)
        if len(restricted) < N:
            raise GridError(f"Only {len(restricted)} ordered frequencies fit the {grid.n}^{grid.d} grid, N={N}")
        self.grid = grid
        self.ordering = ordering
        self.schedule = schedule
        self.config = config
        self.N = N
        self.threads = threads or 1
        self.frequencies = restricted.head(N)
        self.zetas: List[ComplexFrequency] = self._map(
            lambda k: guarded_zeta(k, schedule.t_for(k), config), list(self.frequencies))
        nudged = sum(1 for z in self.zetas if z.t != z.t_requested)
        logger.debug("Measurement operator: N=%d, %d channels nudged by the resonance guard", N, nudged)

    def _map(self, func, items):
        if self.threads <= 1:
            return [func(item) for item in items]
        return Parallel(n_jobs=self.threads, prefer="threads")(delayed(func)(item) for item in items)

    @property
    def t_used(self) -> List[float]:
        return [z.t for z in self.zetas]

    def F(self, q: Field) -> np.ndarray:
        return forward_transform(q).gather(self.frequencies)

    def remainders(self, q: Field) -> List[RemainderSolution]:
        return self._map(lambda zeta: solve_remainder(q, zeta, self.config), self.zetas)

    def B(self, q: Field, solutions: Optional[List[RemainderSolution]] = None) -> np.ndarray:
        """B(q)_l = mean over nodes of q exp(-2 pi i k_l.x) r_l."""
        solutions = self.remainders(q) if solutions is None else solutions
        values = np.empty(self.N, dtype=complex)
        for l, (k, solution) in enumerate(zip(self.frequencies, solutions)):
            values[l] = forward_transform(q * solution.r).at(k)
        return values

    def U(self, q: Field) -> MeasurementVector:
        return self.measurement(self.F(q) + self.B(q))

    def U_direct(self, q: Field) -> np.ndarray:
        """U(q)_l from the integrand q exp(zeta2.x) psi_l directly."""
        solutions = self.remainders(q)
        return np.array([np.mean(direct_integrand(q, zeta, solution).values)
                         for zeta, solution in zip(self.zetas, solutions)])

    def measurement(self, values: np.ndarray) -> MeasurementVector:
        return MeasurementVector(values, self.ordering.kind, self.schedule, self.config.to_dict(), self.grid,
                                 self.frequencies, self.t_used)

    @classmethod
    def from_measurement(cls, y: MeasurementVector, threads: Optional[int] = None) -> "MeasurementOperator":
        """Operator rebuilt from the provenance stored with a measurement vector."""
        config = SolverConfig.from_dict(y.solver)
        if config.grid != y.grid:
            raise GridError("Measurement provenance names different solver and measurement grids")
        return cls(y.grid, FreqOrdering(y.ordering, y.frequencies), y.schedule, config, y.N, threads)


def scattering_B(q: Field, ordering: FreqOrdering, schedule: TSchedule, config: SolverConfig, N: int,
                 threads: Optional[int] = None) -> np.ndarray:
    """B(q)_l for l = 1..N."""
    return MeasurementOperator(q.grid, ordering, schedule, config, N, threads).B(q)


def scattering_U(q: Field, ordering: FreqOrdering, schedule: TSchedule, config: SolverConfig, N: int,
                 threads: Optional[int] = None) -> MeasurementVector:
    """y = P_N U(q) with full provenance."""
    return MeasurementOperator(q.grid, ordering, schedule, config, N, threads).U(q)


def _coefficient_matrix(basis: SubspaceBasis, ordering: FreqOrdering, N: int, source: str) -> np.ndarray:
    if source not in BALANCING_SOURCES:
        raise ValueError(f"Unknown balancing source '{source}', expected one of {BALANCING_SOURCES}")
    if N == 0:
        return np.zeros((basis.M, 0), dtype=complex)
    if source == "grid":
        return basis.grid_coefficients(ordering.within(basis.grid).head(N))
    return basis.fourier_coefficients(ordering.head(N))


def _norm_from_coefficients(W: np.ndarray) -> float:
    gram = W.conj() @ W.T
    tail = np.eye(W.shape[0]) - gram
    largest = float(eigvalsh(0.5 * (tail + tail.conj().T))[-1])
    return math.sqrt(min(1.0, max(0.0, largest)))


def balancing_norm(basis: SubspaceBasis, ordering: FreqOrdering, N: int, source: str = "closed_form") -> float:
    """
    Operator norm ||P_N^perp F P_W|| as sqrt(lambda_max(I_M - G_N)).

    (G_N)_ij = sum_{l <= N} conj(w_i^(k_l)) w_j^(k_l). With source="closed_form" the exact
    continuous coefficients are used; with source="grid" the DFT of the grid samples over the
    grid-representable part of the ordering.
    """
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    return _norm_from_coefficients(_coefficient_matrix(basis, ordering, N, source))


def balancing_curve(basis: SubspaceBasis, ordering: FreqOrdering, Ns: Sequence[int],
                    source: str = "closed_form") -> pd.DataFrame:
    """Table with columns N, balancing_norm."""
    Ns = [int(N) for N in Ns]
    W = _coefficient_matrix(basis, ordering, max(Ns) if Ns else 0, source)
    rows = [{"N": N, "balancing_norm": _norm_from_coefficients(W[:, :N])} for N in Ns]
    return pd.DataFrame(rows, columns=["N", "balancing_norm"])


def choose_N(basis: SubspaceBasis, ordering: FreqOrdering, threshold: float = BALANCING_THRESHOLD,
             N_max: Optional[int] = None, source: str = "closed_form") -> int:
    """
    Smallest N in [1, N_max] with balancing_norm(N) <= threshold.

    The norm is non-increasing in N, so a binary search is valid.

    Raises:
        NotFoundError: the norm at N_max still exceeds the threshold
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    available = len(ordering.within(basis.grid)) if source == "grid" else len(ordering)
    N_max = available if N_max is None else min(N_max, available)
    W = _coefficient_matrix(basis, ordering, N_max, source)
    norm_at_max = _norm_from_coefficients(W)
    if norm_at_max > threshold:
        raise NotFoundError(
            f"Balancing norm at N_max={N_max} is {norm_at_max:.6g} > threshold {threshold}", norm_at_max)
    low, high = 1, N_max
    while low < high:
        mid = (low + high) // 2
        if _norm_from_coefficients(W[:, :mid]) <= threshold:
            high = mid
        else:
            low = mid + 1
    logger.info("choose_N: N*=%d for threshold %g (%s coefficients)", low, threshold, source)
    return low


def sufficient_N(C: float, M: int, d: int) -> int:
    """
    Smallest N on the increasing branch of N / log(N)^(2d-2) with N / log(N)^(2d-2) >= 16 C^2 M^4.

    The branch starts at N = e^(2d-2), where the function has its minimum.
    """
    target = 16.0 * C ** 2 * M ** 4
    power = 2 * d - 2

    def ratio(N: float) -> float:
        return N / math.log(N) ** power

    low = max(3, math.ceil(math.exp(power)))
    if ratio(low) >= target:
        return low
    high = 2 * low
    while ratio(high) < target:
        low, high = high, 2 * high
    while high - low > 1:
        mid = (low + high) // 2
        if ratio(mid) >= target:
            high = mid
        else:
            low = mid
    return high


def fit_balancing_constant(curve: pd.DataFrame, M: int, d: int) -> float:
    """Smallest C with balancing_norm(N) <= C log(N)^(d-1) / sqrt(N) * M^2 over the curve rows with N >= 2."""
    rows = curve[curve["N"] >= 2]
    if rows.empty:
        raise ValueError("Fitting the balancing constant needs rows with N >= 2")
    N = rows["N"].to_numpy(dtype=float)
    shape = np.log(N) ** (d - 1) / np.sqrt(N) * M ** 2
    return float(np.max(rows["balancing_norm"].to_numpy() / shape))


def held_out_bound_ratio(curve: pd.DataFrame, M: int, d: int, fit_fraction: float = 0.5) -> Tuple[float, float]:
    """
    Fit C on the smaller-N part of the curve and test the bound on the rest.

    Returns:
        (C, ratio): C from fit_balancing_constant on the first fit_fraction of the rows with
        N >= 2, and the largest balancing_norm / (C log(N)^(d-1) / sqrt(N) * M^2) over the
        held-out larger N. The bound shape holds on the held-out rows when ratio <= 1.
    """
    rows = curve[curve["N"] >= 2].sort_values("N")
    if len(rows) < 2:
        raise ValueError("A held-out bound check needs at least two rows with N >= 2")
    split = min(len(rows) - 1, max(1, int(math.ceil(fit_fraction * len(rows)))))
    C = fit_balancing_constant(rows.iloc[:split], M, d)
    held_out = rows.iloc[split:]
    N = held_out["N"].to_numpy(dtype=float)
    shape = np.log(N) ** (d - 1) / np.sqrt(N) * M ** 2
    return C, float(np.max(held_out["balancing_norm"].to_numpy() / (C * shape)))


def phase_family_tail(xi: float, ordering: FreqOrdering, N: int) -> float:
    """
    ||P_N^perp F e^{2 pi i xi x_1}|| for a real xi, from the closed-form coefficients.

    For non-integer xi the tail stays positive for every N: no finite N balances the
    family {e^{2 pi i xi x_1} : xi in R}.
    """
    points = ordering.head(N)
    on_axis = np.all(points[:, 1:] == 0, axis=1)
    offset = xi - points[on_axis, 0]
    captured = float(np.sum(np.sinc(offset) ** 2))
    return math.sqrt(max(0.0, 1.0 - captured))


def contraction_ratio(op: MeasurementOperator, pairs: Sequence[Tuple[Field, Field]]) -> float:
    """max over pairs of ||B(q2) - B(q1)||_l2 / ||q2 - q1||_L2."""
    ratios = []
    for q1, q2 in pairs:
        gap = q2.distance(q1)
        if gap == 0:
            continue
        ratios.append(float(np.linalg.norm(op.B(q2) - op.B(q1))) / gap)
    return max(ratios) if ratios else 0.0


def stability_ratio(q1: Field, q2: Field, op: MeasurementOperator) -> float:
    """||q1 - q2||_L2 / ||P_N U(q1) - P_N U(q2)||_l2; <= 4 when the balancing and contraction bounds hold."""
    data_gap = float(np.linalg.norm(op.U(q1).values - op.U(q2).values))
    if data_gap == 0:
        return math.inf if q1.distance(q2) > 0 else 0.0
    return q1.distance(q2) / data_gap


def probe_pairs(basis: SubspaceBasis, box: BoxConstraint, count: int, seed: int) -> List[Tuple[Field, Field]]:
    """Deterministic random pairs in W_R."""
    seeds = np.random.default_rng(seed).integers(0, 2 ** 32, size=2 * count)
    return [(random_element(basis, box, int(seeds[2 * i])), random_element(basis, box, int(seeds[2 * i + 1])))
            for i in range(count)]


@dataclass(eq=False)
class Calibration:
    schedule: TSchedule
    ratio: float
    history: pd.DataFrame


def calibrate_tau(basis: SubspaceBasis, box: BoxConstraint, ordering: FreqOrdering, schedule0: TSchedule,
                  config: SolverConfig, N: int, probes: int = 10, seed: int = 0, margin: float = 0.05,
                  max_doublings: int = 20, threads: Optional[int] = None) -> Calibration:
    """
    Smallest tau in {tau0 * 2^j : j <= max_doublings} whose empirical contraction ratio of B is
    at most 1/2 - margin over `probes` random pairs in W_R.

    Returns:
        Calibration with the accepted schedule, its ratio and a history table (tau, ratio, accepted)

    Raises:
        CalibrationError: no tau accepted within max_doublings
    """
    if probes < 10:
        raise ValueError(f"Calibration needs at least 10 probes, got {probes}")
    target = CONTRACTION_TARGET - margin
    pairs = probe_pairs(basis, box, probes, seed)
    rows = []
    schedule = schedule0
    for doubling in range(max_doublings + 1):
        op = MeasurementOperator(basis.grid, ordering, schedule, config, N, threads)
        ratio = contraction_ratio(op, pairs)
        accepted = ratio <= target
        rows.append({"tau": schedule.tau, "ratio": ratio, "accepted": accepted})
        logger.info("calibrate_tau: tau=%.6g ratio=%.4f target=%.2f", schedule.tau, ratio, target)
        if accepted:
            return Calibration(schedule, ratio, pd.DataFrame(rows, columns=["tau", "ratio", "accepted"]))
        schedule = schedule.scaled(2.0)
    raise CalibrationError(
        f"Contraction ratio {ratio:.4f} still above {target:.2f} after {max_doublings} doublings of tau")
