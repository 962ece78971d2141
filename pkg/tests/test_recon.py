import numpy as np
import pytest

from CGOScripts.errors import PositivityError, ProvenanceError
from CGOScripts.recon import (ReconConfig, apply_A, conductivity_from_profile, liouville_potential, loglog_slope,
                              perturbation_experiment, reconstruct)
from CGOScripts.spectral import Field, make_grid_ordering
from CGOScripts.subspaces import random_element
from CGOScripts.transform import (MeasurementVector, TSchedule, calibrate_tau, choose_N, contraction_ratio,
                                  probe_pairs, stability_ratio)


@pytest.fixture(scope="module")
def pipeline(grid8, piecewise8, box5, solver8):
    """Calibrated reconstruction setup on the 8^3 grid with q* measured once."""
    ordering = make_grid_ordering("hyperbolic", grid8)
    N = choose_N(piecewise8, ordering, 0.25, source="grid")
    calibration = calibrate_tau(piecewise8, box5, ordering, TSchedule(8.0), solver8, N)
    cfg = ReconConfig(N, calibration.schedule, box5, piecewise8, solver8, ordering, max_iter=200)
    q_star = random_element(piecewise8, box5, 2024)
    y = cfg.operator.U(q_star)
    return cfg, q_star, y


def test_calibrated_schedule_contracts_on_held_out_pairs(pipeline, piecewise8, box5):
    cfg, _, _ = pipeline
    assert contraction_ratio(cfg.operator, probe_pairs(piecewise8, box5, 5, seed=1000)) <= 0.5


def test_truth_is_a_fixed_point(pipeline):
    cfg, q_star, y = pipeline
    assert apply_A(q_star, y, cfg).distance(q_star) <= 1e-9


def test_zero_data_maps_zero_to_zero(pipeline, grid8):
    cfg, _, y = pipeline
    zero = apply_A(Field.zeros(grid8), y.with_values(np.zeros(y.N)), cfg)
    assert zero.sup_norm() == 0.0


def test_A_contracts(pipeline, piecewise8, box5):
    cfg, _, y = pipeline
    for q1, q2 in probe_pairs(piecewise8, box5, 5, seed=77):
        assert apply_A(q2, y, cfg).distance(apply_A(q1, y, cfg)) <= 0.75 * q2.distance(q1)


def test_reconstruction_converges_from_zero(pipeline, grid8):
    cfg, q_star, y = pipeline
    result = reconstruct(y, Field.zeros(grid8), cfg, truth=q_star)
    assert result.converged
    assert result.q.distance(q_star) <= 1e-6
    assert result.iterations < cfg.max_iter
    assert result.log.envelope_holds()
    frame = result.log.frame
    assert list(frame.columns) == ["n", "step_norm", "true_error", "data_residual"]
    assert frame["data_residual"].iloc[-1] <= 1e-6


def test_reconstruction_from_truth_takes_no_iterations(pipeline):
    cfg, q_star, y = pipeline
    result = reconstruct(y, q_star, cfg)
    assert result.converged
    assert result.iterations == 0


def test_limit_does_not_depend_on_start(pipeline, piecewise8, box5):
    cfg, _, y = pipeline
    first = reconstruct(y, random_element(piecewise8, box5, 1), cfg)
    second = reconstruct(y, random_element(piecewise8, box5, 2), cfg)
    assert first.q.distance(second.q) <= 1e-8


def test_iteration_cap_warns(pipeline, grid8):
    cfg, _, y = pipeline
    capped = ReconConfig(cfg.N, cfg.schedule, cfg.box, cfg.basis, cfg.solver, cfg.ordering, max_iter=1)
    with pytest.warns(RuntimeWarning):
        result = reconstruct(y, Field.zeros(grid8), capped)
    assert not result.converged
    assert len(result.log.frame) == 2


def test_provenance_is_checked(pipeline, grid8):
    cfg, _, y = pipeline
    wrong_ordering = MeasurementVector(y.values, "box", y.schedule, y.solver, y.grid, y.frequencies, y.t_used)
    with pytest.raises(ProvenanceError):
        reconstruct(wrong_ordering, Field.zeros(grid8), cfg)
    truncated = MeasurementVector(y.values[:-1], y.ordering, y.schedule, y.solver, y.grid, y.frequencies[:-1],
                                  y.t_used[:-1])
    with pytest.raises(ProvenanceError):
        reconstruct(truncated, Field.zeros(grid8), cfg)
    rescheduled = MeasurementVector(y.values, y.ordering, y.schedule.scaled(2.0), y.solver, y.grid, y.frequencies,
                                    y.t_used)
    with pytest.raises(ProvenanceError):
        apply_A(Field.zeros(grid8), rescheduled, cfg)


def test_stability_ratio(pipeline, piecewise8, box5):
    cfg, _, _ = pipeline
    for q1, q2 in probe_pairs(piecewise8, box5, 3, seed=5):
        assert stability_ratio(q1, q2, cfg.operator) <= 4.0


def test_perturbation_bound_and_linear_response(pipeline):
    cfg, q_star, _ = pipeline
    exact = perturbation_experiment(q_star, 0.0, cfg)
    assert exact.error <= 1e-8
    levels = [1e-4, 1e-3, 1e-2]
    reports = [perturbation_experiment(q_star, level, cfg, seed=3) for level in levels]
    assert all(report.within_bound for report in reports)
    assert 0.8 <= loglog_slope(levels, [r.error for r in reports]) <= 1.2


def test_liouville_constant_conductivity(grid8):
    assert liouville_potential(Field.constant(grid8, 1.0)).sup_norm() < 1e-12


def test_liouville_cosine_profile(grid8):
    a = 0.3
    q = liouville_potential(conductivity_from_profile(grid8, a))
    x = grid8.nodes()[0]
    expected = -4 * np.pi ** 2 * a * np.cos(2 * np.pi * x) / (1 + a * np.cos(2 * np.pi * x))
    assert np.max(np.abs(q.values - expected)) <= 1e-8


def test_liouville_rejects_non_positive_conductivity(grid8):
    with pytest.raises(PositivityError):
        liouville_potential(Field.from_function(grid8, lambda x, y, z: np.cos(2 * np.pi * x)))
    with pytest.raises(PositivityError):
        conductivity_from_profile(grid8, 1.0)


def test_liouville_requires_unit_boundary_layer(grid8):
    mask = np.zeros(grid8.shape, dtype=bool)
    mask[2:6, 2:6, 2:6] = True
    with pytest.raises(ValueError) as excinfo:
        liouville_potential(Field(grid8, np.full(grid8.shape, 2.0), mask))
    assert not isinstance(excinfo.value, PositivityError)
