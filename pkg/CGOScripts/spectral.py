#!/usr/bin/env python3
"""
Spectral toolkit on the d-torus T^d = [0,1]^d.

This module provides the discretization every other CGOScripts module builds on:

- TorusGrid: uniform n^d sampling of the unit torus
- Field: complex samples on a grid, optionally extended by zero outside a mask
- Spectrum: unitary Fourier coefficients indexed over the grid frequency box
- forward_transform / inverse_transform: the trapezoidal-rule Fourier pair
- FreqOrdering / make_ordering: enumerations rho of the lattice Z^d (box or
  hyperbolic cross) used to order measurement frequencies
- gamma_s: the lattice sum used as a contraction diagnostic

Conventions:
    nodes           x_j = j/n, j in {0,...,n-1}^d
    frequency box   {-n/2+1, ..., n/2}^d (FFT index k mod n)
    coefficients    q^(k) = (1/n^d) sum_j q(x_j) exp(-2 pi i k.x_j)

Typical usage:
    from CGOScripts.spectral import TorusGrid, Field, forward_transform
    grid = TorusGrid(d=3, n=16)
    spectrum = forward_transform(Field.from_function(grid, lambda x, y, z: x * 0 + 1))
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, signal, special

from .errors import DivergentSumError, GridError, TailToleranceError

logger = logging.getLogger(__name__)

# Growth constant of the orderings: ||k_l||_2 <= C_RHO * l^(1/d).
# Checked over the first 10^4 elements of both ordering kinds for d = 3
# (box stays below sqrt(3), hyperbolic below 3).
C_RHO = 6.0

ORDERING_KINDS = ("box", "hyperbolic")
TIE_BREAK = "primary key, then |k|^2, then lexicographic order of (k_1, ..., k_d)"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n^d grid on the unit torus."""

    d: int
    n: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise GridError(f"Dimension must be an integer >= 3, got d={self.d}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise GridError(f"Points per axis must be an even integer >= 8, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    def axis_frequencies(self) -> np.ndarray:
        """Integer frequencies along one axis in FFT order, Nyquist mapped to +n/2."""
        freqs = np.rint(np.fft.fftfreq(self.n, d=1.0 / self.n)).astype(int)
        freqs[freqs == -self.n // 2] = self.n // 2
        return freqs

    def wavenumbers(self) -> List[np.ndarray]:
        """Sparse open mesh of lattice frequencies, one broadcastable array per axis."""
        axis = self.axis_frequencies()
        return np.meshgrid(*([axis] * self.d), indexing="ij", sparse=True)

    def nodes(self) -> List[np.ndarray]:
        """Sparse open mesh of node coordinates x_j = j/n."""
        axis = np.arange(self.n) / self.n
        return np.meshgrid(*([axis] * self.d), indexing="ij", sparse=True)

    def squared_wavenumber(self) -> np.ndarray:
        """|m|^2 over the frequency box in FFT order."""
        return sum(m.astype(float) ** 2 for m in self.wavenumbers())

    def in_box(self, k: Sequence[int]) -> bool:
        half = self.n // 2
        return len(k) == self.d and all(-half < int(kj) <= half for kj in k)

    def box_mask(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask over rows of an (L, d) integer array: which rows lie in the box."""
        points = np.atleast_2d(points)
        half = self.n // 2
        return np.all((points > -half) & (points <= half), axis=1)

    def fft_index(self, points: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Advanced-index tuple locating lattice points (L, d) in FFT-ordered arrays."""
        points = np.atleast_2d(np.asarray(points, dtype=int))
        if not np.all(self.box_mask(points)):
            raise GridError(f"Frequencies outside the box {{-{self.n // 2 - 1},...,{self.n // 2}}}^{self.d}")
        wrapped = np.mod(points, self.n)
        return tuple(wrapped[:, j] for j in range(self.d))

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n}


@dataclass(eq=False)
class Field:
    """Complex samples on a TorusGrid; values outside support_mask are forced to zero."""

    grid: TorusGrid
    values: np.ndarray
    support_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise GridError(f"Field values have shape {values.shape}, grid expects {self.grid.shape}")
        if self.support_mask is not None:
            mask = np.asarray(self.support_mask, dtype=bool)
            if mask.shape != self.grid.shape:
                raise GridError("support_mask shape does not match the grid")
            values = np.where(mask, values, 0.0)
            self.support_mask = mask
        self.values = values

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid: TorusGrid, value: complex) -> "Field":
        return cls(grid, np.full(grid.shape, value, dtype=complex))

    @classmethod
    def from_function(cls, grid: TorusGrid, func: Callable[..., np.ndarray],
                      support_mask: Optional[np.ndarray] = None) -> "Field":
        """Sample func(x_1, ..., x_d) on the grid nodes."""
        values = np.broadcast_to(func(*grid.nodes()), grid.shape)
        return cls(grid, np.array(values, dtype=complex), support_mask)

    @classmethod
    def plane_wave(cls, grid: TorusGrid, k: Sequence[int]) -> "Field":
        """e_k(x) = exp(2 pi i k.x) sampled on the grid."""
        phase = sum(kj * xj for kj, xj in zip(k, grid.nodes()))
        return cls(grid, np.broadcast_to(np.exp(2j * np.pi * phase), grid.shape))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridError("Fields live on different grids")
            return other.values
        return other

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._coerce(other))

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._coerce(other))

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._coerce(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def inner(self, other: "Field") -> complex:
        """<f, g> = integral of f * conj(g), by the trapezoidal rule."""
        return complex(np.mean(self.values * np.conj(self._coerce(other))))

    def norm(self) -> float:
        """Grid L^2 norm."""
        return float(np.sqrt(np.mean(np.abs(self.values) ** 2)))

    def distance(self, other: "Field") -> float:
        return float(np.sqrt(np.mean(np.abs(self.values - self._coerce(other)) ** 2)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def real_part(self) -> "Field":
        return Field(self.grid, self.values.real, self.support_mask)


@dataclass(eq=False)
class Spectrum:
    """Fourier coefficients of a Field, FFT-ordered over the grid frequency box."""

    grid: TorusGrid
    values: np.ndarray

    def at(self, k: Sequence[int]) -> complex:
        return complex(self.values[self.grid.fft_index(np.asarray([k]))][0])

    def gather(self, points: np.ndarray) -> np.ndarray:
        """Coefficients at the rows of an (L, d) array of lattice points."""
        if len(points) == 0:
            return np.zeros(0, dtype=complex)
        return self.values[self.grid.fft_index(points)]

    def scatter(self, points: np.ndarray, coefficients: np.ndarray) -> "Spectrum":
        """Copy of the spectrum with the given lattice slots overwritten."""
        values = self.values.copy()
        if len(points):
            values[self.grid.fft_index(points)] = coefficients
        return Spectrum(self.grid, values)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))


def forward_transform(f: Field) -> Spectrum:
    """
    Unitary Fourier coefficients of a field.

    Computes q^(k) = (1/n^d) sum_j f(x_j) exp(-2 pi i k.x_j), the trapezoidal rule for
    the integral of q(x) exp(-2 pi i k.x) over T^d. Exact for trigonometric polynomials
    of per-axis degree < n/2, and Parseval holds exactly at grid level.

    Args:
        f: Field on a TorusGrid

    Returns:
        Spectrum over the grid frequency box
    """
    return Spectrum(f.grid, np.fft.fftn(f.values) / f.grid.size)


def inverse_transform(coeffs: Spectrum) -> Field:
    """Field with the given Fourier coefficients (inverse of forward_transform)."""
    return Field(coeffs.grid, np.fft.ifftn(coeffs.values) * coeffs.grid.size)


def spectral_laplacian(f: Field) -> Field:
    """Laplacian applied as the multiplier -4 pi^2 |m|^2."""
    symbol = -4.0 * np.pi ** 2 * f.grid.squared_wavenumber()
    return Field(f.grid, np.fft.ifftn(symbol * np.fft.fftn(f.values)))


def gradient_norm(f: Field) -> float:
    """||grad f||_{L^2} computed spectrally."""
    coeffs = forward_transform(f).values
    weights = 4.0 * np.pi ** 2 * f.grid.squared_wavenumber()
    return float(np.sqrt(np.sum(weights * np.abs(coeffs) ** 2)))


@dataclass(frozen=True)
class FreqOrdering:
    """
    The first len(seq) values of an ordering rho: N -> Z^d, l -> k_l.

    seq[l - 1] is k_l (1-based frequency index l).
    """

    kind: str
    seq: np.ndarray
    tie_break: str = TIE_BREAK

    def __post_init__(self):
        if self.kind not in ORDERING_KINDS:
            raise ValueError(f"Unknown ordering kind '{self.kind}', expected one of {ORDERING_KINDS}")
        seq = np.asarray(self.seq, dtype=int)
        if seq.ndim != 2:
            raise ValueError("Ordering sequence must be an (L, d) integer array")
        object.__setattr__(self, "seq", seq)

    def __len__(self) -> int:
        return len(self.seq)

    @property
    def d(self) -> int:
        return self.seq.shape[1]

    def head(self, count: int) -> np.ndarray:
        if count > len(self.seq):
            raise ValueError(f"Ordering holds {len(self.seq)} frequencies, {count} requested")
        return self.seq[:count]

    def keys(self) -> np.ndarray:
        return ordering_key(self.kind, self.seq)

    def within(self, grid: TorusGrid) -> "FreqOrdering":
        """Same order, restricted to lattice points inside the grid frequency box."""
        if grid.d != self.d:
            raise GridError(f"Ordering is {self.d}-dimensional, grid is {grid.d}-dimensional")
        return FreqOrdering(self.kind, self.seq[grid.box_mask(self.seq)], self.tie_break)

    def to_frame(self) -> pd.DataFrame:
        """Ordering as a table with columns l, k_1, ..., k_d."""
        frame = pd.DataFrame(self.seq, columns=[f"k_{j + 1}" for j in range(self.d)])
        frame.insert(0, "l", np.arange(1, len(self.seq) + 1))
        return frame


def ordering_key(kind: str, points: np.ndarray) -> np.ndarray:
    """Primary ordering key: max-norm (box) or prod_j max(|k_j|, 1) (hyperbolic)."""
    points = np.atleast_2d(points)
    if kind == "box":
        return np.max(np.abs(points), axis=1)
    if kind == "hyperbolic":
        return np.prod(np.maximum(np.abs(points), 1), axis=1)
    raise ValueError(f"Unknown ordering kind '{kind}'")


def _box_points(d: int, radius: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _hyperbolic_points(d: int, bound: int) -> np.ndarray:
    """All k in Z^d with prod_j max(|k_j|, 1) <= bound."""
    magnitudes: List[Tuple[int, ...]] = []

    def extend(prefix: Tuple[int, ...], budget: int):
        if len(prefix) == d:
            magnitudes.append(prefix)
            return
        for a in range(budget + 1):
            weight = max(a, 1)
            if weight > budget:
                break
            extend(prefix + (a,), budget // weight)

    extend((), bound)
    points = []
    for mags in magnitudes:
        choices = [(0,) if a == 0 else (a, -a) for a in mags]
        points.extend(itertools.product(*choices))
    return np.asarray(points, dtype=int).reshape(-1, d)


def _sort_points(kind: str, points: np.ndarray) -> np.ndarray:
    primary = ordering_key(kind, points)
    norm2 = np.sum(points ** 2, axis=1)
    # lexsort: last key is the most significant
    lex_keys = tuple(points[:, j] for j in reversed(range(points.shape[1])))
    order = np.lexsort(lex_keys + (norm2, primary))
    return points[order]


def make_ordering(kind: str, count: int, d: int = 3) -> FreqOrdering:
    """
    First `count` elements of a deterministic ordering of Z^d.

    Args:
        kind: "box" (primary key max-norm) or "hyperbolic" (primary key prod_j max(|k_j|, 1))
        count: number of frequencies to enumerate (>= 1)
        d: lattice dimension

    Returns:
        FreqOrdering whose ties are broken by |k|^2, then lexicographically

    Raises:
        ValueError: for an unknown kind or count < 1
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if kind == "box":
        radius = 0
        while (2 * radius + 1) ** d < count:
            radius += 1
        points = _box_points(d, radius)
    elif kind == "hyperbolic":
        bound = 1
        points = _hyperbolic_points(d, bound)
        while len(points) < count:
            bound *= 2
            points = _hyperbolic_points(d, bound)
    else:
        raise ValueError(f"Unknown ordering kind '{kind}', expected one of {ORDERING_KINDS}")
    # every point with key <= radius/bound is enumerated, so the first `count` are exact
    ordered = _sort_points(kind, points)[:count]
    logger.debug("Enumerated %d %s frequencies in dimension %d", count, kind, d)
    return FreqOrdering(kind, ordered)


def make_grid_ordering(kind: str, grid: TorusGrid, count: Optional[int] = None) -> FreqOrdering:
    """Ordering restricted to the grid frequency box (all n^d points unless count is given)."""
    total = grid.size if count is None else count
    if total > grid.size:
        raise GridError(f"Grid {grid.n}^{grid.d} holds only {grid.size} frequencies, {total} requested")
    radius = grid.n // 2
    points = _box_points(grid.d, radius)
    points = points[grid.box_mask(points)]
    return FreqOrdering(kind, _sort_points(kind, points)[:total])


@dataclass(frozen=True)
class GammaEstimate:
    """Truncated lattice sum gamma_s^2 with its rigorous tail bound."""

    lattice_sum: float
    tail_bound: float
    radius: float

    @property
    def gamma(self) -> float:
        return math.sqrt(self.lattice_sum)


def _representation_counts(d: int, max_square: int) -> np.ndarray:
    """r_d(m): number of k in Z^d with |k|^2 = m, for m = 0..max_square."""
    r1 = np.zeros(max_square + 1)
    roots = np.arange(0, math.isqrt(max_square) + 1)
    r1[roots ** 2] = 2.0
    r1[0] = 1.0
    counts = r1.copy()
    for _ in range(d - 1):
        counts = np.rint(signal.fftconvolve(counts, r1)[: max_square + 1])
    return counts


def gamma_s(s: float, p: float, d: int, tol: float, max_radius: float = 2048.0) -> GammaEstimate:
    """
    Lattice sum gamma_s^2 = sum_{k in Z^d} 1 / (|k|^s + 1)^(2 - 2d/p), truncated at a radius
    rho* whose integral tail bound is <= tol.

    The sum over |k| <= rho* is evaluated exactly through the representation counts
    r_d(m), m <= rho*^2. The tail is bounded by comparing each lattice point with its
    unit cube: sum_{|k|>rho} f(|k|) <= omega_d int_{rho-a}^inf r^(d-1) f(r-a) dr, a = sqrt(d)/2.

    Args:
        s: schedule exponent
        p: integrability exponent, p > d
        d: dimension
        tol: requested tail bound
        max_radius: largest truncation radius attempted

    Returns:
        GammaEstimate(lattice_sum, tail_bound, radius)

    Raises:
        DivergentSumError: if 2s(1 - d/p) <= d
        TailToleranceError: if the bound at max_radius still exceeds tol
    """
    exponent = 2.0 - 2.0 * d / p
    if p <= d or s * exponent <= d:
        raise DivergentSumError(
            f"Series diverges: 2s(1 - d/p) = {2 * s * (1 - d / p):.6g} must exceed d = {d}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    half_diag = math.sqrt(d) / 2.0
    sphere_area = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)

    def summand(r):
        return (r ** s + 1.0) ** (-exponent)

    def tail(radius: float) -> float:
        lower = radius - 2.0 * half_diag
        value, _ = integrate.quad(lambda u: (u + half_diag) ** (d - 1) * summand(u), lower, np.inf, limit=200)
        return sphere_area * value

    radius = 2.0 * half_diag
    if tail(max_radius) > tol:
        growth = (tail(max_radius) / tol) ** (1.0 / (s * exponent - d))
        raise TailToleranceError(
            f"Tail bound {tail(max_radius):.3g} at radius {max_radius:g} exceeds tol={tol:g}; "
            f"radius ~{max_radius * growth:.3g} would be needed", max_radius * growth)
    low, high = radius, radius
    while tail(high) > tol:
        low, high = high, min(2.0 * high, max_radius)
    while high - low > 0.5:
        mid = 0.5 * (low + high)
        if tail(mid) > tol:
            low = mid
        else:
            high = mid
    radius = high
    bound = tail(radius)

    max_square = int(math.floor(radius ** 2))
    counts = _representation_counts(d, max_square)
    lattice_sum = float(np.sum(counts * summand(np.sqrt(np.arange(max_square + 1)))))
    logger.debug("gamma_s(s=%g, p=%g, d=%d): radius %.2f, tail bound %.3g", s, p, d, radius, bound)
    return GammaEstimate(lattice_sum, bound, radius)


def condition_rho_ratio(ordering: FreqOrdering) -> float:
    """max_l ||k_l||_2 / l^(1/d): the smallest C_rho valid for this prefix."""
    l = np.arange(1, len(ordering) + 1)
    norms = np.linalg.norm(ordering.seq, axis=1)
    return float(np.max(norms / l ** (1.0 / ordering.d)))
