#!/usr/bin/env python3
"""
Example script demonstrating how to use the balancing functions programmatically.
"""

import sys
import os

# Add parent directory to path so we can import CGOScripts
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from CGOScripts import (Partition, SubspaceSpec, TorusGrid, balancing_norm, build_basis, choose_N,
                        fit_balancing_constant, make_grid_ordering, make_ordering, phase_family_tail,
                        sufficient_N)
from CGOScripts.config import OUTPUT_DIR
from CGOScripts.errors import NotFoundError
from CGOScripts.transform import balancing_curve


def example_families():
    """Example of N* for the three subspace families on a 16^3 grid"""
    grid = TorusGrid(3, 16)
    ordering = make_ordering("hyperbolic", 4096, 3)
    specs = {
        "bandlimited B=1": SubspaceSpec("bandlimited", 3, B=1),
        "piecewise M=8": SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, 8)),
        "haar level 1": SubspaceSpec("haar", 3, level=1),
    }
    for name, spec in specs.items():
        basis = build_basis(spec, grid)
        try:
            N_star = choose_N(basis, ordering, 0.25)
            print(f"{name:<16} dim W = {basis.M:>3}  N* = {N_star}")
        except NotFoundError as e:
            print(f"{name:<16} dim W = {basis.M:>3}  no admissible N (norm {e.norm_at_max:.4f})")


def example_curve():
    """Example of a balancing curve, the fitted bound and the implied N"""
    grid = TorusGrid(3, 16)
    M = 8
    basis = build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, M)), grid)
    ordering = make_ordering("hyperbolic", 2048, 3)

    curve = balancing_curve(basis, ordering, [1, 8, 27, 64, 128, 256, 512, 1024, 2048])
    output_file = os.path.join(OUTPUT_DIR, "example_balancing_curve.csv")
    curve.to_csv(output_file, index=False)
    print(f"\nBalancing curve saved to {output_file}")
    print(curve.to_string(index=False))

    C = fit_balancing_constant(curve, M, 3)
    print(f"\nFitted C = {C:.4f}, sufficient N from the bound = {sufficient_N(C, M, 3)}")

    # the grid-level norm uses the DFT of the sampled cells instead of the exact coefficients
    grid_ordering = make_grid_ordering("hyperbolic", grid)
    print(f"Balancing norm at N=512: closed form {balancing_norm(basis, ordering, 512):.4f}, "
          f"grid {balancing_norm(basis, grid_ordering, 512, source='grid'):.4f}")


def example_phase_family():
    """Example of a non-linear family that no finite N balances"""
    ordering = make_ordering("hyperbolic", 4096, 3)
    print("\nTail of e^{2 pi i xi x_1} beyond N frequencies:")
    for xi in (0.5, 1.5, 2.5):
        tails = [phase_family_tail(xi, ordering, N) for N in (64, 512, 4096)]
        print(f"xi={xi}: " + ", ".join(f"{t:.4f}" for t in tails))


if __name__ == "__main__":
    print("Running example_families()...")
    example_families()

    print("\nRunning example_curve()...")
    example_curve()

    print("\nRunning example_phase_family()...")
    example_phase_family()
