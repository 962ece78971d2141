"""
Finite-dimensional prior spaces W for the reconstruction.

Three families are supported:
- bandlimited(B): span of e_k with ||k||_inf <= B, dimension (2B+1)^d
- piecewise(partition): normalized indicators chi_R / sqrt(|R|) of disjoint d-dimensional intervals
- haar(level): orthonormal Haar change of basis of the uniform dyadic partition with 2^(level*d) cells

Every basis carries grid samples and closed-form Fourier coefficients. The convex set
W_R = {w in W : ||w||_inf <= R} is handled by project_box.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BandwidthError, PartitionError, ProjectionError
from .spectral import Field, TorusGrid, forward_transform

logger = logging.getLogger(__name__)

FAMILIES = ("bandlimited", "piecewise", "haar")

# Tolerance used when snapping cell faces to grid planes and checking containment
GEOMETRY_TOL = 1e-9

DYKSTRA_MAX_ITER = 10_000
DYKSTRA_OVERSAMPLING = 2
REFINE_EVERY = 20

# Active-set refinement of the bandlimited box projection
ACTIVE_BAND = 0.05
ACTIVE_SET_MAX_CHANGES = 200
NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-11
MULTIPLIER_TOL = 1e-10
FEASIBILITY_RTOL = 1e-11


@dataclass(frozen=True)
class Cell:
    """A d-dimensional interval [corner, corner + sides)."""

    corner: Tuple[float, ...]
    sides: Tuple[float, ...]

    def __post_init__(self):
        corner = tuple(float(c) for c in self.corner)
        sides = tuple(float(s) for s in self.sides)
        if len(corner) != len(sides):
            raise PartitionError("Cell corner and sides must have the same length")
        if any(s <= 0 for s in sides):
            raise PartitionError(f"Cell sides must be positive, got {sides}")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "sides", sides)

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def in_unit_cube(self) -> bool:
        return all(c >= -GEOMETRY_TOL and c + s <= 1 + GEOMETRY_TOL for c, s in zip(self.corner, self.sides))

    def overlaps(self, other: "Cell") -> bool:
        """True when the interiors intersect."""
        for c1, s1, c2, s2 in zip(self.corner, self.sides, other.corner, other.sides):
            if min(c1 + s1, c2 + s2) - max(c1, c2) <= GEOMETRY_TOL:
                return False
        return True

    def node_ranges(self, grid: TorusGrid) -> List[Tuple[int, int]]:
        """Per-axis half-open node index ranges; raises PartitionError if a face misses the grid planes."""
        ranges = []
        for c, s in zip(self.corner, self.sides):
            lo, hi = c * grid.n, (c + s) * grid.n
            if abs(lo - round(lo)) > GEOMETRY_TOL or abs(hi - round(hi)) > GEOMETRY_TOL:
                raise PartitionError(
                    f"Cell with corner {self.corner} and sides {self.sides} is not aligned with the {grid.n}-point grid")
            ranges.append((int(round(lo)), int(round(hi))))
        return ranges

    def indicator(self, grid: TorusGrid) -> np.ndarray:
        mask = np.zeros(grid.shape, dtype=bool)
        mask[tuple(slice(lo, hi) for lo, hi in self.node_ranges(grid))] = True
        return mask

    def to_dict(self) -> Dict[str, List[float]]:
        return {"corner": list(self.corner), "sides": list(self.sides)}


def cell_fourier(cell: Cell, points: np.ndarray) -> np.ndarray:
    """Exact Fourier coefficients of chi_cell at the rows of an (L, d) array of lattice points."""
    points = np.atleast_2d(points)
    values = np.ones(len(points), dtype=complex)
    for j, (c, s) in enumerate(zip(cell.corner, cell.sides)):
        k = points[:, j]
        # integral over [c, c+s] of exp(-2 pi i k x) dx; np.sinc(x) = sin(pi x)/(pi x)
        values *= s * np.sinc(k * s) * np.exp(-2j * np.pi * k * (c + s / 2.0))
    return values


def char_fourier(cell: Cell, k: Sequence[int]) -> complex:
    """
    Exact Fourier coefficient of the indicator of a cell.

    Args:
        cell: Cell contained in [0,1]^d
        k: lattice point

    Returns:
        The integral of exp(-2 pi i k.x) over the cell, a product of d one-dimensional integrals
        with modulus prod_j s_j |sinc(pi s_j k_j)|
    """
    return complex(cell_fourier(cell, np.asarray([k]))[0])


@dataclass(frozen=True)
class Partition:
    """Disjoint d-dimensional intervals inside the unit cube."""

    cells: Tuple[Cell, ...]

    def __post_init__(self):
        cells = tuple(self.cells)
        if not cells:
            raise PartitionError("A partition needs at least one cell")
        d = cells[0].d
        for i, cell in enumerate(cells):
            if cell.d != d:
                raise PartitionError("All cells must share the same dimension")
            if not cell.in_unit_cube():
                raise PartitionError(f"Cell {i} is not contained in [0,1]^{d}")
            for j in range(i):
                if cell.overlaps(cells[j]):
                    raise PartitionError(f"Cells {j} and {i} have intersecting interiors")
        object.__setattr__(self, "cells", cells)

    @property
    def M(self) -> int:
        return len(self.cells)

    @property
    def d(self) -> int:
        return self.cells[0].d

    @property
    def A(self) -> float:
        """Largest A with A <= a_j^i, where side_j^i = a_j^i * M^(-1/d)."""
        scale = self.M ** (1.0 / self.d)
        return min(s * scale for cell in self.cells for s in cell.sides)

    @classmethod
    def uniform(cls, d: int, per_axis: int) -> "Partition":
        """per_axis^d equal cubes, enumerated in row-major order of their index tuples."""
        side = 1.0 / per_axis
        cells = [Cell(tuple(i * side for i in index), (side,) * d)
                 for index in np.ndindex(*((per_axis,) * d))]
        return cls(tuple(cells))

    @classmethod
    def dyadic(cls, d: int, M: int) -> "Partition":
        """
        M = 2^b cells obtained by halving axes 1, 2, ..., d, 1, 2, ... in turn.

        M=2 splits the unit cube in half along axis 1; M = 2^d is the uniform partition
        with two cells per axis.
        """
        bits = int(round(math.log2(M))) if M >= 1 else -1
        if bits < 0 or 2 ** bits != M:
            raise PartitionError(f"Dyadic partitions need M to be a power of two, got {M}")
        levels = [bits // d + (1 if j < bits % d else 0) for j in range(d)]
        counts = [2 ** lv for lv in levels]
        cells = [Cell(tuple(i / c for i, c in zip(index, counts)), tuple(1.0 / c for c in counts))
                 for index in np.ndindex(*counts)]
        return cls(tuple(cells))

    def to_list(self) -> List[Dict[str, List[float]]]:
        return [cell.to_dict() for cell in self.cells]


@dataclass(frozen=True)
class BoxConstraint:
    """Sup-norm radius R of W_R."""

    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"Box radius must be positive, got R={self.R}")


@dataclass(frozen=True)
class SubspaceSpec:
    family: str
    d: int = 3
    B: Optional[int] = None
    level: Optional[int] = None
    partition: Optional[Partition] = None
    R: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown subspace family '{self.family}', expected one of {FAMILIES}")
        if self.family == "bandlimited" and (self.B is None or self.B < 0):
            raise ValueError("bandlimited family requires an integer B >= 0")
        if self.family == "haar" and (self.level is None or self.level < 0):
            raise ValueError("haar family requires an integer level >= 0")
        if self.family == "piecewise":
            if self.partition is None:
                raise ValueError("piecewise family requires a partition")
            if self.partition.d != self.d:
                raise PartitionError(f"Partition is {self.partition.d}-dimensional, SubspaceSpec has d={self.d}")

    @property
    def dimension(self) -> int:
        if self.family == "bandlimited":
            return (2 * self.B + 1) ** self.d
        if self.family == "haar":
            return 2 ** (self.level * self.d)
        return self.partition.M

    def cell_partition(self) -> Optional[Partition]:
        """The piecewise partition spanning W (the uniform dyadic one for haar)."""
        if self.family == "haar":
            return Partition.uniform(self.d, 2 ** self.level)
        return self.partition

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SubspaceSpec":
        """
        Parse the JSON form {"family", "d", "B", "level", "cells", "R"}.

        For piecewise families "M" may replace "cells" and selects Partition.dyadic(d, M).
        """
        allowed = {"family", "d", "B", "level", "cells", "M", "R"}
        unknown = set(data) - allowed
        if unknown:
            raise KeyError(f"Unknown subspace keys: {sorted(unknown)}")
        d = int(data.get("d", 3))
        partition = None
        if data.get("family") == "piecewise":
            if "cells" in data:
                partition = Partition(tuple(Cell(tuple(c["corner"]), tuple(c["sides"])) for c in data["cells"]))
            elif "M" in data:
                partition = Partition.dyadic(d, int(data["M"]))
        return cls(
            family=data.get("family"),
            d=d,
            B=data.get("B"),
            level=data.get("level"),
            partition=partition,
            R=data.get("R"),
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"family": self.family, "d": self.d}
        if self.B is not None:
            out["B"] = self.B
        if self.level is not None:
            out["level"] = self.level
        if self.family == "piecewise":
            out["cells"] = self.partition.to_list()
        if self.R is not None:
            out["R"] = self.R
        return out


def haar_matrix(size: int) -> np.ndarray:
    """Orthonormal 1D Haar transform of a power-of-two length (rows are the Haar functions)."""
    H = np.ones((1, 1))
    while H.shape[0] < size:
        m = H.shape[0]
        coarse = np.kron(H, [1.0, 1.0]) / math.sqrt(2.0)
        detail = np.kron(np.eye(m), [1.0, -1.0]) / math.sqrt(2.0)
        H = np.vstack([coarse, detail])
    return H


def _band_points(d: int, B: int) -> np.ndarray:
    axis = np.arange(-B, B + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(eq=False)
class SubspaceBasis:
    """
    Orthonormal basis {w_1, ..., w_M} of W sampled on a grid.

    samples has shape (M, *grid.shape). For bandlimited bases `band` lists the
    frequencies of the elements; for piecewise/haar bases `mixing` maps the
    normalized cell indicators of `partition` to the elements (identity for piecewise).
    """

    spec: SubspaceSpec
    grid: TorusGrid
    samples: np.ndarray
    band: Optional[np.ndarray] = None
    partition: Optional[Partition] = None
    mixing: Optional[np.ndarray] = None
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._flat = self.samples.reshape(len(self.samples), -1)

    @property
    def M(self) -> int:
        return len(self.samples)

    def element(self, i: int) -> Field:
        return Field(self.grid, self.samples[i])

    def gram(self) -> np.ndarray:
        """<w_i, w_j> on the grid."""
        return (self._flat @ self._flat.conj().T) / self.grid.size

    def coefficients(self, f: Field) -> np.ndarray:
        """(<f, w_1>, ..., <f, w_M>)."""
        return (self._flat.conj() @ f.values.ravel()) / self.grid.size

    def synthesize(self, coefficients: np.ndarray) -> Field:
        values = (np.asarray(coefficients) @ self._flat).reshape(self.grid.shape)
        return Field(self.grid, values)

    def fourier_coefficients(self, points: np.ndarray) -> np.ndarray:
        """Closed-form w_i^(k) at the rows of an (L, d) array, shape (M, L)."""
        points = np.atleast_2d(np.asarray(points, dtype=int))
        if self.spec.family == "bandlimited":
            # w_i = e_{band_i}: coefficient is 1 exactly at k = band_i
            return np.all(self.band[:, None, :] == points[None, :, :], axis=2).astype(complex)
        cells = self.partition.cells
        indicator = np.stack([cell_fourier(c, points) / math.sqrt(c.volume) for c in cells]) if len(points) \
            else np.zeros((len(cells), 0), dtype=complex)
        return self.mixing @ indicator

    def grid_coefficients(self, points: np.ndarray) -> np.ndarray:
        """DFT coefficients of the grid samples at in-box lattice points, shape (M, L)."""
        points = np.atleast_2d(np.asarray(points, dtype=int))
        index = self.grid.fft_index(points) if len(points) else None
        spectra = np.fft.fftn(self.samples, axes=tuple(range(1, self.grid.d + 1))) / self.grid.size
        if index is None:
            return np.zeros((self.M, 0), dtype=complex)
        return spectra[(slice(None),) + index]

    def cell_values(self, coefficients: np.ndarray) -> np.ndarray:
        """Values on each partition cell for piecewise/haar coefficients."""
        volumes = np.array([c.volume for c in self.partition.cells])
        return (self.mixing.T @ coefficients) / np.sqrt(volumes)


def build_basis(spec: SubspaceSpec, grid: TorusGrid) -> SubspaceBasis:
    """
    Orthonormal basis of W sampled on `grid`.

    Args:
        spec: SubspaceSpec naming the family
        grid: TorusGrid of the same dimension

    Returns:
        SubspaceBasis with grid samples and closed-form Fourier coefficients

    Raises:
        BandwidthError: bandlimited B >= n/2
        PartitionError: a cell face does not lie on a grid plane
    """
    if spec.d != grid.d:
        raise PartitionError(f"Subspace is {spec.d}-dimensional, grid is {grid.d}-dimensional")

    if spec.family == "bandlimited":
        if 2 * spec.B >= grid.n:
            raise BandwidthError(f"Bandwidth B={spec.B} needs n > {2 * spec.B}, grid has n={grid.n}")
        band = _band_points(grid.d, spec.B)
        nodes = grid.nodes()
        samples = np.stack([
            np.broadcast_to(np.exp(2j * np.pi * sum(kj * xj for kj, xj in zip(k, nodes))), grid.shape)
            for k in band
        ])
        logger.debug("Built bandlimited basis B=%d with %d elements", spec.B, len(band))
        return SubspaceBasis(spec, grid, samples, band=band)

    partition = spec.cell_partition()
    indicators = np.stack([cell.indicator(grid) / math.sqrt(cell.volume) for cell in partition.cells])
    if spec.family == "haar":
        H1 = haar_matrix(2 ** spec.level)
        mixing = H1
        for _ in range(grid.d - 1):
            mixing = np.kron(mixing, H1)
    else:
        mixing = np.eye(partition.M)
    samples = np.tensordot(mixing, indicators.astype(float), axes=1).astype(complex)
    logger.debug("Built %s basis with %d elements", spec.family, partition.M)
    return SubspaceBasis(spec, grid, samples, partition=partition, mixing=mixing)


def project_subspace(f: Field, basis: SubspaceBasis) -> Field:
    """Orthogonal projection P_W f = sum_i <f, w_i> w_i."""
    return basis.synthesize(basis.coefficients(f))


def _radial_clip(values: np.ndarray, R: float) -> np.ndarray:
    magnitude = np.abs(values)
    scale = np.where(magnitude > R, R / np.maximum(magnitude, np.finfo(float).tiny), 1.0)
    return values * scale


def _bandlimited_fine_samples(basis: SubspaceBasis, coefficients: np.ndarray, fine: TorusGrid) -> np.ndarray:
    spectrum = np.zeros(fine.shape, dtype=complex)
    spectrum[fine.fft_index(basis.band)] = coefficients
    return np.fft.ifftn(spectrum) * fine.size


def _bandlimited_coefficients(basis: SubspaceBasis, values: np.ndarray, fine: TorusGrid) -> np.ndarray:
    spectrum = np.fft.fftn(values) / fine.size
    return spectrum[fine.fft_index(basis.band)]


def _candidate_peaks(magnitude: np.ndarray, R: float, limit: int) -> List[int]:
    """Flat indices of axis-wise local maxima of |w| that come within ACTIVE_BAND of R, largest first."""
    peaks = magnitude >= R * (1.0 - ACTIVE_BAND)
    for axis in range(magnitude.ndim):
        for shift in (1, -1):
            peaks &= magnitude >= np.roll(magnitude, shift, axis=axis)
    flat = np.flatnonzero(peaks)
    order = np.argsort(magnitude.ravel()[flat])[::-1]
    return [int(j) for j in flat[order][:limit]]


def _newton_on_working_set(band: np.ndarray, fine: TorusGrid, v0: np.ndarray, v: np.ndarray, working: List[int],
                           R: float, scale: float) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Newton's method on the optimality system with |w(x_j)| = R held on the working set.

    Coefficients are real vectors v = (Re c, Im c). With a_j the synthesis row of x_j the system is
        v - v0 + sum_j mu_j grad phi_j(v) = 0,   phi_j(v) = (|a_j c|^2 - R^2) / 2 = 0.
    Returns (v, mu) one step after the residual drops below NEWTON_RTOL * scale, None otherwise.
    """
    if not working:
        return v0.copy(), np.zeros(0)
    size = v0.size
    nodes = np.stack(np.unravel_index(np.asarray(working), fine.shape), axis=1)
    rows = np.exp(2j * np.pi * (nodes @ band.T) / fine.n)
    P = np.hstack([rows.real, -rows.imag])
    Q = np.hstack([rows.imag, rows.real])
    J = (P @ v)[:, None] * P + (Q @ v)[:, None] * Q
    mu = np.linalg.lstsq(J.T, v0 - v, rcond=None)[0]
    for _ in range(NEWTON_MAX_ITER):
        re, im = P @ v, Q @ v
        J = re[:, None] * P + im[:, None] * Q
        residual = np.concatenate([v - v0 + J.T @ mu, 0.5 * (re ** 2 + im ** 2 - R ** 2)])
        if not np.all(np.isfinite(residual)):
            return None
        converged = np.linalg.norm(residual) <= NEWTON_RTOL * scale
        hessian = np.eye(size) + P.T @ (mu[:, None] * P) + Q.T @ (mu[:, None] * Q)
        kkt = np.block([[hessian, J.T], [J, np.zeros((len(working), len(working)))]])
        step = np.linalg.lstsq(kkt, -residual, rcond=None)[0]
        v = v + step[:size]
        mu = mu + step[size:]
        if converged:
            # one step past the tolerance leaves the residual at rounding level
            return v, mu
    return None


def _active_set_refinement(basis: SubspaceBasis, target: np.ndarray, start: np.ndarray, fine: TorusGrid,
                           R: float) -> Optional[np.ndarray]:
    """
    Exact nearest point of the fine-grid box, started from an approximate one.

    The working set begins at the near-peaks of the start and changes one point at a time:
    a negative multiplier drops its point, a grid value above R adds its point. A result
    satisfies the full optimality conditions, so it is the unique projection. Returns None
    when Newton fails or the working set does not settle.
    """
    M = basis.M
    scale = max(1.0, float(np.linalg.norm(target)), R * R)
    v0 = np.concatenate([target.real, target.imag])
    v = np.concatenate([start.real, start.imag])
    working = _candidate_peaks(np.abs(_bandlimited_fine_samples(basis, start, fine)), R, 2 * M)
    for _ in range(ACTIVE_SET_MAX_CHANGES):
        solved = _newton_on_working_set(basis.band, fine, v0, v, working, R, scale)
        if solved is None:
            return None
        v, mu = solved
        if mu.size and mu.min() < -MULTIPLIER_TOL * max(1.0, float(mu.max())):
            working.pop(int(np.argmin(mu)))
            continue
        coefficients = v[:M] + 1j * v[M:]
        magnitude = np.abs(_bandlimited_fine_samples(basis, coefficients, fine)).ravel()
        worst = int(np.argmax(magnitude))
        if magnitude[worst] <= R * (1.0 + FEASIBILITY_RTOL):
            return coefficients
        if worst in working:
            return None
        working.append(worst)
    return None


def project_box(f: Field, basis: SubspaceBasis, box: BoxConstraint, tol: float = 1e-10) -> Field:
    """
    L^2-nearest point of W_R = {w in W : ||w||_inf <= R}.

    Piecewise and haar families are projected exactly by clipping cell values to |v| <= R,
    since the sup constraints decouple across disjoint cells. Bandlimited families use
    Dykstra's alternating projections between span(W) and the sup-norm ball, evaluated
    on a 2x oversampled grid. Every REFINE_EVERY sweeps the current iterate seeds an
    active-set Newton solve of the optimality conditions; the first one that succeeds is
    the exact projection. Otherwise Dykstra runs until successive iterates differ by <= tol
    (relative to ||P_W f||).

    Args:
        f: Field on basis.grid
        basis: SubspaceBasis
        box: BoxConstraint
        tol: Dykstra stopping tolerance

    Returns:
        Field in W_R

    Raises:
        ProjectionError: if Dykstra does not converge within the iteration cap, or its
            final iterate leaves the ball by more than tol
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    projected = project_subspace(f, basis)
    if basis.spec.family != "bandlimited":
        # constant on cells, zero off the partition
        return Field(basis.grid, _radial_clip(projected.values, box.R))

    fine = TorusGrid(basis.grid.d, DYKSTRA_OVERSAMPLING * basis.grid.n)
    coefficients = basis.coefficients(f)
    x = _bandlimited_fine_samples(basis, coefficients, fine)
    if np.max(np.abs(x)) <= box.R:
        return projected

    scale = max(1.0, float(np.linalg.norm(coefficients)))
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    y_coeffs = coefficients
    for iteration in range(1, DYKSTRA_MAX_ITER + 1):
        y_coeffs = _bandlimited_coefficients(basis, x + p, fine)
        y = _bandlimited_fine_samples(basis, y_coeffs, fine)
        p = x + p - y
        x_next = _radial_clip(y + q, box.R)
        q = y + q - x_next
        step = float(np.sqrt(np.mean(np.abs(x_next - x) ** 2)))
        x = x_next
        converged = step <= tol * scale
        if converged or iteration % REFINE_EVERY == 0:
            exact = _active_set_refinement(basis, coefficients, y_coeffs, fine, box.R)
            if exact is not None:
                logger.debug("Box projection refined to the exact point after %d Dykstra sweeps", iteration)
                return basis.synthesize(exact)
        if converged:
            logger.debug("Dykstra converged after %d iterations", iteration)
            break
    else:
        raise ProjectionError(f"Dykstra projection did not converge within {DYKSTRA_MAX_ITER} iterations")

    peak = float(np.max(np.abs(_bandlimited_fine_samples(basis, y_coeffs, fine))))
    if peak - box.R > tol * scale:
        raise ProjectionError(f"Dykstra iterate exceeds the box by {peak - box.R:.3e}")
    if peak > box.R:
        # excess is O(tol)
        y_coeffs = y_coeffs * (box.R / peak)
    return basis.synthesize(y_coeffs)


def random_element(basis: SubspaceBasis, box: BoxConstraint, rng_seed: int) -> Field:
    """
    Deterministic real-valued random element of W_R.

    Piecewise/haar: cell values drawn uniformly from [-R, R]. Bandlimited: Hermitian-symmetric
    Gaussian coefficients scaled so the 2x oversampled sup-norm is a uniform fraction of R.
    """
    rng = np.random.default_rng(rng_seed)
    if basis.spec.family != "bandlimited":
        values = rng.uniform(-box.R, box.R, size=basis.partition.M)
        volumes = np.array([c.volume for c in basis.partition.cells])
        coefficients = basis.mixing @ (values * np.sqrt(volumes))
        return basis.synthesize(coefficients)

    raw = rng.standard_normal(basis.M) + 1j * rng.standard_normal(basis.M)
    # band points are in row-major order, so -k sits at the mirrored index
    coefficients = 0.5 * (raw + np.conj(raw[::-1]))
    fine = TorusGrid(basis.grid.d, DYKSTRA_OVERSAMPLING * basis.grid.n)
    peak = float(np.max(np.abs(_bandlimited_fine_samples(basis, coefficients, fine))))
    target = box.R * rng.uniform(0.2, 1.0)
    coefficients = coefficients * (target / peak) if peak > 0 else coefficients
    return basis.synthesize(coefficients).real_part()


def is_in_box(f: Field, box: BoxConstraint, slack: float = 1e-12) -> bool:
    return f.sup_norm() <= box.R * (1.0 + slack)
