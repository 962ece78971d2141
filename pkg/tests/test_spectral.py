import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from CGOScripts.errors import DivergentSumError, GridError, TailToleranceError
from CGOScripts.spectral import (C_RHO, Field, Spectrum, TorusGrid, condition_rho_ratio, forward_transform,
                                 gamma_s, gradient_norm, inverse_transform, make_grid_ordering, make_ordering,
                                 ordering_key)
from conftest import random_field


def test_grid_validation():
    with pytest.raises(GridError):
        TorusGrid(d=2, n=8)
    with pytest.raises(GridError):
        TorusGrid(d=3, n=7)
    with pytest.raises(GridError):
        TorusGrid(d=3, n=6)
    grid = TorusGrid(d=3, n=8)
    assert grid.size == 512
    assert grid.h == pytest.approx(0.125)
    assert sorted(grid.axis_frequencies()) == list(range(-3, 5))


def test_constant_field_has_only_zero_mode(grid8):
    spectrum = forward_transform(Field.constant(grid8, 1.0))
    assert spectrum.at((0, 0, 0)) == pytest.approx(1.0)
    spectrum.values[0, 0, 0] = 0.0
    assert np.max(np.abs(spectrum.values)) < 1e-14


def test_plane_wave_is_a_unit_coefficient(grid8):
    k0 = (1, -2, 3)
    spectrum = forward_transform(Field.plane_wave(grid8, k0))
    assert spectrum.at(k0) == pytest.approx(1.0)
    assert spectrum.norm() == pytest.approx(1.0)


def test_forward_matches_direct_quadrature(grid8, rng):
    f = random_field(grid8, rng)
    nodes = np.array(list(itertools.product(range(8), repeat=3))) / 8.0
    axis = grid8.axis_frequencies()
    freqs = np.array(list(itertools.product(axis, repeat=3)))
    kernel = np.exp(-2j * np.pi * freqs @ nodes.T)
    direct = kernel @ f.values.ravel() / grid8.size
    assert np.max(np.abs(direct - forward_transform(f).values.ravel())) < 1e-10


def test_inverse_transform_cases(grid8, rng):
    zero = inverse_transform(Spectrum(grid8, np.zeros(grid8.shape, dtype=complex)))
    assert zero.sup_norm() == 0.0

    f = random_field(grid8, rng)
    back = inverse_transform(forward_transform(f))
    assert back.distance(f) <= 1e-12 * f.norm()

    single = Spectrum(grid8, np.zeros(grid8.shape, dtype=complex)).scatter(np.array([[2, 0, -1]]), np.array([1.0]))
    assert inverse_transform(single).distance(Field.plane_wave(grid8, (2, 0, -1))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_parseval(seed):
    grid = TorusGrid(3, 8)
    f = random_field(grid, np.random.default_rng(seed))
    assert forward_transform(f).norm() == pytest.approx(f.norm(), rel=1e-12)


def test_support_mask_zeroes_outside(grid8):
    mask = np.zeros(grid8.shape, dtype=bool)
    mask[:4] = True
    f = Field(grid8, np.ones(grid8.shape), support_mask=mask)
    assert np.all(f.values[4:] == 0)
    assert np.all(f.values[:4] == 1)


def test_gradient_norm_of_plane_wave(grid8):
    assert gradient_norm(Field.plane_wave(grid8, (1, 2, 0))) == pytest.approx(2 * np.pi * np.sqrt(5))


def test_hyperbolic_first_27_is_unit_cube():
    ordering = make_ordering("hyperbolic", 27, 3)
    assert {tuple(k) for k in ordering.seq} == set(itertools.product((-1, 0, 1), repeat=3))
    assert tuple(ordering.seq[0]) == (0, 0, 0)
    expected_shell = [(-1, 0, 0), (0, -1, 0), (0, 0, -1), (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert [tuple(k) for k in ordering.seq[1:7]] == expected_shell
    norms = np.sum(ordering.seq ** 2, axis=1)
    assert np.all(np.diff(norms) >= 0)


def test_box_ordering_starts_at_origin():
    assert make_ordering("box", 1, 3).seq.tolist() == [[0, 0, 0]]


@pytest.mark.parametrize("kind", ["box", "hyperbolic"])
def test_growth_constant_first_200(kind):
    ordering = make_ordering(kind, 200, 3)
    l = np.arange(1, 201)
    assert np.all(np.linalg.norm(ordering.seq, axis=1) <= 6.0 * l ** (1 / 3))


@pytest.mark.parametrize("kind", ["box", "hyperbolic"])
def test_ordering_properties_first_10000(kind):
    ordering = make_ordering(kind, 10_000, 3)
    assert len({tuple(k) for k in ordering.seq}) == 10_000
    assert np.all(np.diff(ordering.keys()) >= 0)
    assert condition_rho_ratio(ordering) <= C_RHO


def test_ordering_key_values():
    points = np.array([[0, 0, 0], [2, -3, 0], [1, 1, 4]])
    assert ordering_key("hyperbolic", points).tolist() == [1, 6, 4]
    assert ordering_key("box", points).tolist() == [0, 3, 4]


def test_within_grid_keeps_order(grid8):
    ordering = make_ordering("hyperbolic", 2000, 3)
    restricted = ordering.within(grid8)
    assert np.all(grid8.box_mask(restricted.seq))
    assert np.array_equal(restricted.seq, make_grid_ordering("hyperbolic", grid8, len(restricted)).seq)


def test_ordering_frame_columns():
    frame = make_ordering("box", 5, 3).to_frame()
    assert list(frame.columns) == ["l", "k_1", "k_2", "k_3"]
    assert frame["l"].tolist() == [1, 2, 3, 4, 5]


def _brute_lattice_sum(s, p, d, radius):
    r = int(np.ceil(radius))
    axis = np.arange(-r, r + 1)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    squared = (mesh ** 2).sum(axis=1)
    norms = np.sqrt(squared[squared <= np.floor(radius ** 2)])
    return float(np.sum((norms ** s + 1.0) ** (-(2.0 - 2.0 * d / p))))


def test_gamma_s_matches_brute_force():
    estimate = gamma_s(6, 12, 3, tol=1e-6)
    assert estimate.tail_bound <= 1e-6
    assert estimate.lattice_sum == pytest.approx(_brute_lattice_sum(6, 12, 3, estimate.radius), rel=1e-12)
    # the tail bound is rigorous: a much larger truncation stays below sum + bound
    assert _brute_lattice_sum(6, 12, 3, 40.0) <= estimate.lattice_sum + estimate.tail_bound


def test_gamma_s_halving_tolerance():
    coarse = gamma_s(6, 12, 3, tol=1e-6)
    fine = gamma_s(6, 12, 3, tol=5e-7)
    assert fine.tail_bound <= 5e-7
    assert fine.radius >= coarse.radius
    assert fine.lattice_sum >= coarse.lattice_sum


def test_gamma_s_slow_decay():
    estimate = gamma_s(3, 7, 3, tol=2.0)
    assert np.isfinite(estimate.lattice_sum)
    assert estimate.tail_bound <= 2.0
    with pytest.raises(TailToleranceError) as excinfo:
        gamma_s(3, 7, 3, tol=1e-6)
    assert excinfo.value.radius_needed > 2048


def test_gamma_s_divergent():
    with pytest.raises(DivergentSumError):
        gamma_s(2, 4, 3, tol=1e-6)
