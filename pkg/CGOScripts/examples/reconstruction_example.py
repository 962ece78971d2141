#!/usr/bin/env python3
"""
Example script demonstrating a calibrated reconstruction, noisy data and the conductivity entry point.
"""

import sys
import os

# Add parent directory to path so we can import CGOScripts
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from CGOScripts import (BoxConstraint, Field, Partition, ReconConfig, SolverConfig, SubspaceSpec, TSchedule,
                        TorusGrid, build_basis, calibrate_tau, choose_N, conductivity_from_profile,
                        liouville_potential, make_grid_ordering, random_element, reconstruct)
from CGOScripts.config import OUTPUT_DIR
from CGOScripts.recon import loglog_slope, perturbation_sweep


def build_config():
    """Calibrated reconstruction setup on an 8^3 grid"""
    grid = TorusGrid(3, 8)
    basis = build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, 8)), grid)
    box = BoxConstraint(5.0)
    ordering = make_grid_ordering("hyperbolic", grid)
    solver = SolverConfig(grid)

    N = choose_N(basis, ordering, 0.25, source="grid")
    calibration = calibrate_tau(basis, box, ordering, TSchedule(8.0), solver, N)
    print(f"N = {N}, tau = {calibration.schedule.tau:g} (contraction ratio {calibration.ratio:.4f})")
    return ReconConfig(N, calibration.schedule, box, basis, solver, ordering, max_iter=200)


def example_reconstruct(cfg):
    """Example of reconstructing a random element of W_R from exact data"""
    q_star = random_element(cfg.basis, cfg.box, 2024)
    y = cfg.operator.U(q_star)
    result = reconstruct(y, Field.zeros(cfg.basis.grid), cfg, truth=q_star)

    print(f"Converged: {result.converged} after {result.iterations} iterations")
    print(f"Final error: {result.q.distance(q_star):.3e}, envelope holds: {result.log.envelope_holds()}")

    log_file = os.path.join(OUTPUT_DIR, "example_iteration_log.csv")
    result.log.to_csv(log_file)
    print(f"Iteration log saved to {log_file}")
    return q_star


def example_noise(cfg, q_star):
    """Example of the reconstruction error under noisy measurements"""
    sweep = perturbation_sweep(q_star, [1e-4, 1e-3, 1e-2], cfg, seed=3)
    print(sweep.to_string(index=False))
    print(f"Log-log slope of error against noise: {loglog_slope(sweep['noise_level'], sweep['error']):.3f}")


def example_conductivity():
    """Example of the potential q = Laplacian(sqrt(sigma)) / sqrt(sigma) of a smooth conductivity"""
    sigma = conductivity_from_profile(TorusGrid(3, 16), 0.3)
    q = liouville_potential(sigma)
    print(f"sigma in [{sigma.values.real.min():.3f}, {sigma.values.real.max():.3f}], "
          f"sup |q| = {q.sup_norm():.3f}")


if __name__ == "__main__":
    print("Running build_config()...")
    cfg = build_config()

    print("\nRunning example_reconstruct()...")
    q_star = example_reconstruct(cfg)

    print("\nRunning example_noise()...")
    example_noise(cfg, q_star)

    print("\nRunning example_conductivity()...")
    example_conductivity()
