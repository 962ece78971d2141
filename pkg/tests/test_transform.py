import math

import numpy as np
import pandas as pd
import pytest

from CGOScripts.acceptance import piecewise_split_tail_oracle
from CGOScripts.cgo import solve_remainder
from CGOScripts.errors import GridError, NotFoundError
from CGOScripts.spectral import Field, make_grid_ordering, make_ordering
from CGOScripts.subspaces import BoxConstraint, Partition, SubspaceSpec, build_basis, random_element
from CGOScripts.transform import (MeasurementOperator, MeasurementVector, TSchedule, balancing_curve, balancing_norm,
                                  calibrate_tau, choose_N, contraction_ratio, fit_balancing_constant,
                                  held_out_bound_ratio, phase_family_tail, probe_pairs, scattering_B, scattering_U,
                                  sufficient_N)

SPLIT_N27 = math.sqrt(1.0 - 8.0 / math.pi ** 2)
SPLIT_N125 = math.sqrt(1.0 - 80.0 / (9.0 * math.pi ** 2))


@pytest.fixture(scope="module")
def grid_ordering(grid8):
    return make_grid_ordering("hyperbolic", grid8)


@pytest.fixture(scope="module")
def hyperbolic_ordering():
    return make_ordering("hyperbolic", 2000, 3)


def test_schedule_defaults_and_validation():
    schedule = TSchedule(tau=2.0)
    assert schedule.s == 3.0
    assert schedule.t_for((0, 0, 0)) == pytest.approx(2.0)
    assert schedule.t_for((1, 1, 0)) == pytest.approx(2.0 * (2.0 ** 1.5 + 1.0))
    assert schedule.scaled(2.0).tau == 4.0
    with pytest.raises(ValueError):
        TSchedule(tau=0.0)
    with pytest.raises(ValueError):
        TSchedule(tau=1.0, s=1.5)


def test_B_vanishes_for_zero_and_constant(grid8, grid_ordering, solver8):
    for q in (Field.zeros(grid8), Field.constant(grid8, 3.0)):
        assert np.all(scattering_B(q, grid_ordering, TSchedule(5.0), solver8, 7) == 0)


def test_U_of_constant_is_its_fourier_data(grid8, grid_ordering, solver8):
    y = scattering_U(Field.constant(grid8, 3.0), grid_ordering, TSchedule(5.0), solver8, 7)
    assert y.N == 7 and y.ordering == "hyperbolic" and len(y.t_used) == 7
    assert np.array_equal(y.frequencies[0], [0, 0, 0])
    assert y.values[0] == pytest.approx(3.0)
    assert np.allclose(y.values[1:], 0.0, atol=1e-14)


def test_U_is_F_plus_B(grid8, grid_ordering, piecewise8, box5, solver8):
    q = random_element(piecewise8, box5, 2)
    op = MeasurementOperator(grid8, grid_ordering, TSchedule(10.0), solver8, 5)
    y = scattering_U(q, grid_ordering, TSchedule(10.0), solver8, 5)
    assert np.allclose(y.values, op.F(q) + op.B(q), rtol=0, atol=1e-13)


def test_B_entries_match_remainder_integrals(grid8, grid_ordering, piecewise8, box5, solver8):
    q = random_element(piecewise8, box5, 1)
    op = MeasurementOperator(grid8, grid_ordering, TSchedule(10.0), solver8, 7)
    values = op.B(q)
    for l, (k, zeta) in enumerate(zip(op.frequencies, op.zetas)):
        r = solve_remainder(q, zeta, solver8).r
        expected = np.mean(q.values * np.conj(Field.plane_wave(grid8, k).values) * r.values)
        assert abs(values[l] - expected) <= 1e-12 * max(1.0, abs(expected))


def test_U_matches_direct_integrand(grid8, grid_ordering, piecewise8, box5, solver8):
    q = random_element(piecewise8, box5, 2)
    op = MeasurementOperator(grid8, grid_ordering, TSchedule(10.0), solver8, 7)
    y = op.U(q)
    assert np.max(np.abs(y.values - op.U_direct(q))) <= 1e-10
    assert np.max(np.abs(y.values - op.F(q) - op.B(q))) <= 1e-12


def test_measurement_carries_provenance(grid8, grid_ordering, piecewise8, box5, solver8):
    q = random_element(piecewise8, box5, 3)
    y = MeasurementOperator(grid8, grid_ordering, TSchedule(10.0), solver8, 7).U(q)
    assert y.N == 7
    assert y.ordering == "hyperbolic"
    assert np.array_equal(y.frequencies, grid_ordering.head(7))
    assert len(y.t_used) == 7
    restored = MeasurementVector.from_dict(y.to_dict())
    assert np.array_equal(restored.values, y.values)
    assert restored.schedule.tau == 10.0 and restored.grid == grid8


def test_B_shrinks_when_tau_doubles(grid8, grid_ordering, piecewise8, box5, solver8):
    q = random_element(piecewise8, box5, 4)
    slow = scattering_B(q, grid_ordering, TSchedule(200.0), solver8, 7)
    fast = scattering_B(q, grid_ordering, TSchedule(400.0), solver8, 7)
    assert np.all(np.abs(fast) <= np.abs(slow) + 1e-14)


def test_operator_rejects_too_many_channels(grid8, grid_ordering, solver8):
    with pytest.raises(GridError):
        MeasurementOperator(grid8, grid_ordering, TSchedule(1.0), solver8, grid8.size + 1)


def test_bandlimited_balancing(bandlimited1):
    ordering = make_ordering("box", 125, 3)
    assert balancing_norm(bandlimited1, ordering, 0) == pytest.approx(1.0)
    assert balancing_norm(bandlimited1, ordering, 27) <= 1e-12
    assert balancing_norm(bandlimited1, ordering, 26) == pytest.approx(1.0)
    assert choose_N(bandlimited1, ordering, 0.25) == 27
    assert choose_N(bandlimited1, make_grid_ordering("box", bandlimited1.grid), 0.25, source="grid") == 27


def test_threshold_one_needs_a_single_measurement(piecewise8, hyperbolic_ordering, grid_ordering):
    assert choose_N(piecewise8, hyperbolic_ordering, threshold=1.0) == 1
    assert choose_N(piecewise8, grid_ordering, threshold=1.0, source="grid") == 1


@pytest.mark.parametrize("source", ["closed_form", "grid"])
def test_balancing_norm_never_leaves_unit_interval(piecewise8, grid_ordering, source):
    norms = [balancing_norm(piecewise8, grid_ordering, N, source) for N in range(0, 5)]
    assert all(0.0 <= norm <= 1.0 for norm in norms)
    assert norms[0] == 1.0


def test_split_partition_closed_form_values(split2):
    ordering = make_ordering("hyperbolic", 125, 3)
    assert balancing_norm(split2, ordering, 1) == pytest.approx(1.0, abs=1e-12)
    assert balancing_norm(split2, ordering, 27) == pytest.approx(SPLIT_N27, abs=1e-10)
    assert balancing_norm(split2, ordering, 125) == pytest.approx(SPLIT_N125, abs=1e-10)
    assert piecewise_split_tail_oracle(split2, ordering.head(27), cutoff=10 ** 5) == pytest.approx(SPLIT_N27, abs=1e-5)


def test_choose_N_reports_failure(split2):
    with pytest.raises(NotFoundError) as excinfo:
        choose_N(split2, make_ordering("hyperbolic", 1, 3), 0.25)
    assert excinfo.value.norm_at_max == pytest.approx(1.0)


def test_balancing_curve_is_monotone(piecewise8, hyperbolic_ordering):
    curve = balancing_curve(piecewise8, hyperbolic_ordering, range(1, 2000, 50))
    norms = curve["balancing_norm"].to_numpy()
    assert list(curve.columns) == ["N", "balancing_norm"]
    assert np.all((norms >= 0) & (norms <= 1 + 1e-12))
    assert np.all(np.diff(norms) <= 1e-12)


def test_choose_N_grows_with_partition_size(grid8):
    ordering = make_ordering("hyperbolic", 100_000, 3)
    found = []
    for M in (2, 4, 8):
        basis = build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, M)), grid8)
        N = choose_N(basis, ordering, 0.25)
        assert balancing_norm(basis, ordering, N) <= 0.25
        assert balancing_norm(basis, ordering, N - 1) > 0.25
        found.append(N)
    assert found == sorted(found)


def test_phase_family_has_no_finite_N(hyperbolic_ordering):
    assert phase_family_tail(0.5, hyperbolic_ordering, 27) > 0.1
    assert phase_family_tail(0.5, hyperbolic_ordering, 2000) > 0
    assert phase_family_tail(1.0, hyperbolic_ordering, 27) == pytest.approx(0.0, abs=1e-7)


def test_sufficient_N_is_the_first_admissible_value():
    N = sufficient_N(0.1, 2, 3)
    target = 16 * 0.01 * 2 ** 4
    assert N / math.log(N) ** 4 >= target
    assert (N - 1) / math.log(N - 1) ** 4 < target


def test_fitted_constant_bounds_the_curve(piecewise8, hyperbolic_ordering):
    curve = balancing_curve(piecewise8, hyperbolic_ordering, [2, 10, 100, 1000])
    C = fit_balancing_constant(curve, 8, 3)
    shape = np.log(curve["N"]) ** 2 / np.sqrt(curve["N"]) * 64
    assert np.all(curve["balancing_norm"] <= C * shape + 1e-12)
    with pytest.raises(ValueError):
        fit_balancing_constant(curve[curve["N"] < 2], 8, 3)


def test_held_out_bound_on_a_real_curve(piecewise8, hyperbolic_ordering):
    curve = balancing_curve(piecewise8, hyperbolic_ordering, [2, 10, 100, 1000])
    C, ratio = held_out_bound_ratio(curve, 8, 3)
    assert C == pytest.approx(fit_balancing_constant(curve[curve["N"] <= 10], 8, 3))
    assert ratio <= 1.0


def test_held_out_bound_catches_a_curve_that_decays_too_slowly():
    curve = pd.DataFrame({"N": [2, 4, 8, 16, 10 ** 5, 10 ** 6], "balancing_norm": [0.5] * 6})
    C, ratio = held_out_bound_ratio(curve, 8, 3)
    assert C == pytest.approx(0.5 / (math.log(2) ** 2 / math.sqrt(2) * 64))
    assert ratio > 1.0
    with pytest.raises(ValueError):
        held_out_bound_ratio(curve.head(1), 8, 3)


def test_calibration_accepts_small_potentials_immediately(piecewise8, grid_ordering, solver8):
    calibration = calibrate_tau(piecewise8, BoxConstraint(1e-6), grid_ordering, TSchedule(1.0), solver8, N=8)
    assert calibration.schedule.tau == 1.0
    assert calibration.ratio <= 0.45
    assert len(calibration.history) == 1
    assert bool(calibration.history["accepted"].iloc[0])


def test_calibration_needs_ten_probes(piecewise8, grid_ordering, solver8, box5):
    with pytest.raises(ValueError):
        calibrate_tau(piecewise8, box5, grid_ordering, TSchedule(1.0), solver8, N=8, probes=5)


@pytest.fixture(scope="module")
def desk_calibration(piecewise8, box5, grid_ordering, solver8):
    return calibrate_tau(piecewise8, box5, grid_ordering, TSchedule(1.0), solver8, N=8)


def test_desk_prior_calibrates_below_target(desk_calibration):
    history = desk_calibration.history
    assert desk_calibration.ratio <= 0.45
    assert history["ratio"].iloc[-1] == desk_calibration.ratio
    assert history["tau"].iloc[-1] == desk_calibration.schedule.tau
    assert bool(history["accepted"].iloc[-1]) and not history["accepted"].iloc[:-1].any()
    assert np.allclose(np.diff(np.log2(history["tau"].to_numpy())), 1.0)


def test_doubling_tau_past_calibration_does_not_raise_the_ratio(desk_calibration, piecewise8, box5, grid8,
                                                                 grid_ordering, solver8):
    pairs = probe_pairs(piecewise8, box5, 10, seed=0)
    doubled = MeasurementOperator(grid8, grid_ordering, desk_calibration.schedule.scaled(2.0), solver8, 8)
    assert contraction_ratio(doubled, pairs) <= desk_calibration.ratio + 1e-12
