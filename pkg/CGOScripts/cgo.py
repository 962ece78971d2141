"""
Complex geometrical optics (CGO) solutions on the torus.

For a lattice point k and a parameter t >= 0 this module builds the complex frequencies

    zeta1 = -i(pi k + t xi) + sqrt(t^2 + pi^2 |k|^2) eta
    zeta2 = -i(pi k - t xi) - sqrt(t^2 + pi^2 |k|^2) eta

and solves for the remainder r in psi = exp(zeta1.x)(1 + r), i.e.

    Delta r + 2 zeta1.grad r - q r = q      on T^d

spectrally. The operator Delta + 2 zeta.grad acts on e_m by the Faddeev symbol
sigma(m) = -4 pi^2 |m|^2 + 4 pi i zeta.m.

Grounding: sigma vanishes at m = 0 and at m = k for every t, and on the lattice
D = {m : xi.m = 0, eta.m = 0} it equals -4 pi^2 m.(m - k) whatever t is. Two rules
say which equations are dropped (inverse symbol set to zero):

    t_independent   all of D (default). Remainders then decay like 1/t; the
                    residual of the dropped equations on D minus {0, k} is
                    reported as RemainderSolution.dropped_residual.
    kernel          only the modes where sigma vanishes for every t (m = 0, m = k).
                    Every other equation is solved, so r carries a t-independent
                    part along D.

Constant potentials give r = 0 under either rule.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import FrameError, GuardError, SolverDivergenceError, SolverIterationError
from .spectral import Field, TorusGrid, gradient_norm

logger = logging.getLogger(__name__)

GROUNDING_RULES = ("t_independent", "kernel")
GROUNDED_TOL = 1e-9
METHODS = ("krylov", "neumann")


@dataclass(frozen=True)
class ComplexFrequency:
    """One CGO measurement channel (k, t, xi, eta, zeta1, zeta2)."""

    k: Tuple[int, ...]
    t: float
    xi: np.ndarray
    eta: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    t_requested: Optional[float] = None

    def invariant_errors(self) -> Dict[str, float]:
        """Absolute deviations of the frame and zeta identities."""
        k = np.asarray(self.k, dtype=float)
        return {
            "xi_norm": abs(np.linalg.norm(self.xi) - 1.0),
            "eta_norm": abs(np.linalg.norm(self.eta) - 1.0),
            "xi_eta": abs(float(self.xi @ self.eta)),
            "xi_k": abs(float(self.xi @ k)),
            "eta_k": abs(float(self.eta @ k)),
            "zeta1_isotropic": abs(complex(self.zeta1 @ self.zeta1)),
            "zeta2_isotropic": abs(complex(self.zeta2 @ self.zeta2)),
            "zeta_sum": float(np.max(np.abs(self.zeta1 + self.zeta2 + 2j * np.pi * k))),
        }


@dataclass(frozen=True)
class SolverConfig:
    """Remainder solver settings; resonance_delta defaults to resonance_delta_factor * t."""

    grid: TorusGrid
    method: str = "krylov"
    tol: float = 1e-10
    max_iter: int = 500
    restart: int = 30
    refinements: int = 3
    resonance_delta: Optional[float] = None
    resonance_delta_factor: float = 1e-6
    nudge_factor: float = 1.0 + 1e-4
    max_nudges: int = 20
    divergence_window: int = 5
    grounding: str = "t_independent"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown solver method '{self.method}', expected one of {METHODS}")
        if self.grounding not in GROUNDING_RULES:
            raise ValueError(f"Unknown grounding rule '{self.grounding}', expected one of {GROUNDING_RULES}")
        if not self.tol > 0:
            raise ValueError(f"Solver tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"Solver max_iter must be >= 1, got {self.max_iter}")
        if self.nudge_factor <= 1.0:
            raise ValueError("nudge_factor must exceed 1")

    def delta_for(self, t: float) -> float:
        if self.resonance_delta is not None:
            return self.resonance_delta
        return self.resonance_delta_factor * t

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["grid"] = self.grid.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverConfig":
        data = dict(data)
        return cls(grid=TorusGrid(**data.pop("grid")), **data)


@dataclass(eq=False)
class RemainderSolution:
    r: Field
    residual: float
    iterations: int
    t_used: float
    method: str = "krylov"
    k: Tuple[int, ...] = ()
    t_requested: Optional[float] = None
    dropped_residual: float = 0.0

    def to_sidecar(self) -> Dict[str, Any]:
        return {
            "k": [int(v) for v in self.k],
            "t_requested": self.t_requested,
            "t_used": self.t_used,
            "residual": self.residual,
            "dropped_residual": self.dropped_residual,
            "iterations": self.iterations,
            "method": self.method,
        }


def make_frame(k: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit vectors xi, eta orthogonal to k and to each other.

    Rule: k = 0 gives (e_1, e_2). Otherwise the first canonical pair (e_i, e_j), i < j in
    lexicographic order, whose span with k is 3-dimensional is Gram-Schmidt orthonormalized
    against k.

    Raises:
        FrameError: if d < 3
    """
    k = np.asarray(k, dtype=float)
    d = len(k)
    if d < 3:
        raise FrameError(f"CGO frames need d >= 3, got d={d}")
    eye = np.eye(d)
    if not np.any(k):
        return eye[0].copy(), eye[1].copy()

    k_hat = k / np.linalg.norm(k)
    for i in range(d):
        for j in range(i + 1, d):
            if np.linalg.matrix_rank(np.stack([k, eye[i], eye[j]])) < 3:
                continue
            xi = eye[i] - (eye[i] @ k_hat) * k_hat
            xi /= np.linalg.norm(xi)
            eta = eye[j] - (eye[j] @ k_hat) * k_hat - (eye[j] @ xi) * xi
            eta /= np.linalg.norm(eta)
            return xi, eta
    raise FrameError(f"No canonical pair completes a frame for k={tuple(k)}")


def make_zeta(k: Sequence[int], t: float, t_requested: Optional[float] = None) -> ComplexFrequency:
    """Complex frequencies zeta1, zeta2 for lattice point k and parameter t >= 0."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    k_arr = np.asarray(k, dtype=float)
    xi, eta = make_frame(k)
    amplitude = math.sqrt(t ** 2 + math.pi ** 2 * float(k_arr @ k_arr))
    zeta1 = -1j * (math.pi * k_arr + t * xi) + amplitude * eta
    zeta2 = -1j * (math.pi * k_arr - t * xi) - amplitude * eta
    return ComplexFrequency(tuple(int(v) for v in k), float(t), xi, eta, zeta1, zeta2,
                            t if t_requested is None else t_requested)


def faddeev_symbol(m: Sequence[int], zeta: np.ndarray) -> complex:
    """sigma(m) = -4 pi^2 |m|^2 + 4 pi i zeta.m, the symbol of Delta + 2 zeta.grad on e_m."""
    m = np.asarray(m, dtype=float)
    return complex(-4.0 * np.pi ** 2 * (m @ m) + 4j * np.pi * (np.asarray(zeta) @ m))


def symbol_on_grid(zeta: ComplexFrequency, grid: TorusGrid) -> np.ndarray:
    """sigma(m) for zeta1 over the grid frequency box, FFT-ordered."""
    wavenumbers = grid.wavenumbers()
    dot = sum(z * m for z, m in zip(zeta.zeta1, wavenumbers))
    return -4.0 * np.pi ** 2 * grid.squared_wavenumber() + 4j * np.pi * dot


def t_independent_mask(zeta: ComplexFrequency, grid: TorusGrid) -> np.ndarray:
    """Boolean mask of D = {m : xi.m = 0, eta.m = 0} over the frequency box."""
    wavenumbers = grid.wavenumbers()
    xi_dot = sum(c * m for c, m in zip(zeta.xi, wavenumbers))
    eta_dot = sum(c * m for c, m in zip(zeta.eta, wavenumbers))
    return np.broadcast_to((np.abs(xi_dot) <= GROUNDED_TOL) & (np.abs(eta_dot) <= GROUNDED_TOL), grid.shape)


def kernel_mask(zeta: ComplexFrequency, grid: TorusGrid) -> np.ndarray:
    """Modes where sigma vanishes for every t: m in D with |m|^2 = k.m, i.e. m = 0 and m = k."""
    wavenumbers = grid.wavenumbers()
    k_dot = sum(int(kj) * m for kj, m in zip(zeta.k, wavenumbers))
    on_sphere = np.broadcast_to(sum(m * m for m in wavenumbers) == k_dot, grid.shape)
    return t_independent_mask(zeta, grid) & on_sphere


def grounded_mask(zeta: ComplexFrequency, grid: TorusGrid, rule: str = "t_independent") -> np.ndarray:
    """Boolean mask of the modes whose equations the given grounding rule drops."""
    if rule == "kernel":
        return kernel_mask(zeta, grid)
    if rule == "t_independent":
        return t_independent_mask(zeta, grid)
    raise ValueError(f"Unknown grounding rule '{rule}', expected one of {GROUNDING_RULES}")


def grounded_inverse(zeta: ComplexFrequency, grid: TorusGrid,
                     rule: str = "t_independent") -> Tuple[np.ndarray, np.ndarray]:
    """(1/sigma with zeros on the grounded modes, boolean mask of the kept modes)."""
    symbol = symbol_on_grid(zeta, grid)
    active = ~grounded_mask(zeta, grid, rule)
    inverse = np.zeros(grid.shape, dtype=complex)
    inverse[active] = 1.0 / symbol[active]
    return inverse, active


def _smallest_active_symbol(zeta: ComplexFrequency, grid: TorusGrid, rule: str) -> Tuple[float, Tuple[int, ...]]:
    symbol = np.abs(symbol_on_grid(zeta, grid))
    symbol[grounded_mask(zeta, grid, rule)] = np.inf
    flat = int(np.argmin(symbol))
    index = np.unravel_index(flat, grid.shape)
    axis = grid.axis_frequencies()
    return float(symbol[index]), tuple(int(axis[i]) for i in index)


def resonance_guard(zeta_in: ComplexFrequency, grid: TorusGrid, config: SolverConfig) -> ComplexFrequency:
    """
    Nudge t multiplicatively until |sigma(m)| >= resonance_delta for every kept mode (see grounding rules).

    Returns zeta_in unchanged when no nudge is needed; otherwise a new ComplexFrequency
    with t = t_in * nudge_factor^j, j <= max_nudges, keeping t_requested.

    Raises:
        GuardError: if max_nudges nudges do not clear the resonance
    """
    zeta = zeta_in
    for nudge in range(config.max_nudges + 1):
        smallest, offending = _smallest_active_symbol(zeta, grid, config.grounding)
        if smallest >= config.delta_for(zeta.t):
            if nudge:
                logger.debug("Guard moved t from %.12g to %.12g for k=%s", zeta_in.t, zeta.t, zeta.k)
            return zeta
        if nudge == config.max_nudges:
            break
        logger.debug("Resonance |sigma(%s)| = %.3g at t=%.12g, nudging", offending, smallest, zeta.t)
        zeta = make_zeta(zeta.k, zeta.t * config.nudge_factor, t_requested=zeta_in.t_requested)
    raise GuardError(
        f"Resonance at m={offending} persists after {config.max_nudges} nudges (t={zeta.t:.12g})",
        offending, zeta.t)


class _FaddeevSystem:
    """The grounded system y - P F(q F^-1(G y)) = P q^ in the unknown y = sigma r^."""

    def __init__(self, q: Field, zeta: ComplexFrequency, rule: str = "t_independent"):
        self.grid = q.grid
        self.q = q.values
        self.inverse, self.active = grounded_inverse(zeta, q.grid, rule)
        self.q_hat = np.fft.fftn(self.q) / self.grid.size
        self.rhs = np.where(self.active, self.q_hat, 0.0)
        self.dropped = ~self.active & ~kernel_mask(zeta, q.grid)

    def coupling(self, y: np.ndarray) -> np.ndarray:
        """P F(q r) for r = F^-1(G y)."""
        r = np.fft.ifftn(self.inverse * y)
        return np.where(self.active, np.fft.fftn(self.q * r), 0.0)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return y - self.coupling(y)

    def residual(self, y: np.ndarray) -> float:
        return float(np.linalg.norm(self.apply(y) - self.rhs))

    def dropped_residual(self, y: np.ndarray) -> float:
        """l^2 norm of sigma r^ - (q r)^ - q^ on grounded modes where sigma is not zero."""
        if not np.any(self.dropped):
            return 0.0
        r = np.fft.ifftn(self.inverse * y)
        equation = -np.fft.fftn(self.q * r) - self.q_hat
        return float(np.linalg.norm(equation[self.dropped]))

    def remainder(self, y: np.ndarray) -> Field:
        return Field(self.grid, np.fft.ifftn(self.inverse * y) * self.grid.size)


def _solve_neumann(system: _FaddeevSystem, config: SolverConfig) -> Tuple[np.ndarray, float, int]:
    y = system.rhs.copy()
    previous = np.inf
    increases = 0
    for iteration in range(config.max_iter + 1):
        y_next = system.rhs + system.coupling(y)
        residual = float(np.linalg.norm(y_next - y))
        logger.debug("neumann iteration %d residual %.3e", iteration, residual)
        if residual <= config.tol:
            return y, residual, iteration
        increases = increases + 1 if residual > previous else 0
        if increases >= config.divergence_window:
            raise SolverDivergenceError(
                f"Neumann residual grew for {increases} consecutive iterations (last {residual:.3e}); t is too small")
        previous = residual
        y = y_next
    raise SolverIterationError(f"Neumann iteration hit max_iter={config.max_iter} at residual {residual:.3e}",
                               residual)


def _solve_krylov(system: _FaddeevSystem, config: SolverConfig) -> Tuple[np.ndarray, float, int]:
    size = system.grid.size
    shape = system.grid.shape
    operator = LinearOperator((size, size), matvec=lambda v: system.apply(v.reshape(shape)).ravel(),
                              dtype=np.complex128)
    restart = min(config.restart, size)
    counter = {"iterations": 0}

    def count(_):
        counter["iterations"] += 1

    y = np.zeros(shape, dtype=complex)
    residual = system.residual(y)
    for attempt in range(config.refinements + 1):
        remaining = config.max_iter - counter["iterations"]
        if remaining <= 0:
            break
        correction_rhs = (system.rhs - system.apply(y)).ravel()
        correction, _ = gmres(operator, correction_rhs, rtol=0.0, atol=0.5 * config.tol, restart=restart,
                              maxiter=max(1, math.ceil(remaining / restart)), callback=count,
                              callback_type="pr_norm")
        y = y + correction.reshape(shape)
        residual = system.residual(y)
        logger.debug("krylov pass %d: %d iterations, true residual %.3e", attempt, counter["iterations"], residual)
        if residual <= config.tol:
            return y, residual, counter["iterations"]
    raise SolverIterationError(
        f"Krylov solve stopped at residual {residual:.3e} after {counter['iterations']} iterations", residual)


def solve_remainder(q: Field, zeta: ComplexFrequency, config: SolverConfig) -> RemainderSolution:
    """
    Remainder r of the CGO solution exp(zeta1.x)(1 + r) for the potential q.

    Solves Delta r + 2 zeta1.grad r - q r = q in the grounded Fourier sense: for every
    mode m kept by config.grounding the equation sigma(m) r^(m) - (q r)^(m) - q^(m) = 0
    holds with l^2 residual <= config.tol, and r^(m) = 0 on the grounded modes. The
    residual of the grounded equations whose symbol is nonzero is returned as
    dropped_residual (always 0 under the kernel rule).

    Args:
        q: potential on config.grid
        zeta: ComplexFrequency, already passed through resonance_guard
        config: SolverConfig

    Returns:
        RemainderSolution

    Raises:
        SolverDivergenceError: neumann residual grew divergence_window times in a row
        SolverIterationError: iteration cap reached
    """
    system = _FaddeevSystem(q, zeta, config.grounding)
    if np.linalg.norm(system.rhs) <= config.tol:
        y = np.zeros(q.grid.shape, dtype=complex)
        return RemainderSolution(Field.zeros(q.grid), float(np.linalg.norm(system.rhs)), 0, zeta.t,
                                 config.method, zeta.k, zeta.t_requested, system.dropped_residual(y))
    if config.method == "neumann":
        y, residual, iterations = _solve_neumann(system, config)
    else:
        y, residual, iterations = _solve_krylov(system, config)
    dropped = system.dropped_residual(y)
    logger.debug("k=%s t=%.6g: residual %.3e, grounded equations left at %.3e", zeta.k, zeta.t, residual, dropped)
    return RemainderSolution(system.remainder(y), residual, iterations, zeta.t, config.method, zeta.k,
                             zeta.t_requested, dropped)


def guarded_zeta(k: Sequence[int], t: float, config: SolverConfig) -> ComplexFrequency:
    return resonance_guard(make_zeta(k, t), config.grid, config)


def remainder_decay(q: Field, k: Sequence[int], t_list: Iterable[float], config: SolverConfig) -> pd.DataFrame:
    """Table of remainder norms ||r^{k,t}||_{L^2} with columns t, t_used, r_norm, grad_norm."""
    rows: List[Dict[str, float]] = []
    for t in t_list:
        zeta = guarded_zeta(k, t, config)
        solution = solve_remainder(q, zeta, config)
        rows.append({
            "t": float(t),
            "t_used": solution.t_used,
            "r_norm": solution.r.norm(),
            "grad_norm": remainder_gradient_norm(solution),
        })
    return pd.DataFrame(rows, columns=["t", "t_used", "r_norm", "grad_norm"])


def remainder_gradient_norm(solution: RemainderSolution) -> float:
    """||grad r||_{L^2} of a remainder, computed spectrally."""
    return gradient_norm(solution.r)


def _phase(vector: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.broadcast_to(sum(c * x for c, x in zip(vector, grid.nodes())), grid.shape)


def cgo_solution(zeta: ComplexFrequency, solution: RemainderSolution) -> Field:
    """psi = exp(zeta1.x)(1 + r); |psi| grows like exp(sqrt(d) t), so keep t moderate."""
    grid = solution.r.grid
    return Field(grid, np.exp(_phase(zeta.zeta1, grid)) * (1.0 + solution.r.values))


def direct_integrand(q: Field, zeta: ComplexFrequency, solution: RemainderSolution) -> Field:
    """q exp(zeta2.x) psi, with the exponents summed before exponentiation."""
    grid = q.grid
    exponent = _phase(zeta.zeta1 + zeta.zeta2, grid)
    return Field(grid, q.values * np.exp(exponent) * (1.0 + solution.r.values))
