#!/usr/bin/env python3
"""
Example script demonstrating how to use the CGOScripts package.
"""

import sys
import os

import numpy as np

# Add parent directory to path so we can import CGOScripts
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

# Import functions from the package
from CGOScripts import (BoxConstraint, Partition, SolverConfig, SubspaceSpec, TorusGrid, build_basis,
                        forward_transform, make_ordering, make_zeta, project_box, random_element,
                        remainder_decay, resonance_guard, solve_remainder)
from CGOScripts.config import OUTPUT_DIR
from CGOScripts.fileio import save_remainder


def example_orderings():
    """Example of the two frequency orderings"""
    for kind in ("box", "hyperbolic"):
        ordering = make_ordering(kind, 10, 3)
        print(f"\nFirst 10 {kind} frequencies:")
        for l, k in enumerate(ordering.seq, start=1):
            print(f"{l:>3}. {tuple(int(c) for c in k)}")


def example_subspace():
    """Example of a piecewise-constant subspace and the box projection"""
    grid = TorusGrid(3, 8)
    basis = build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, 8)), grid)
    box = BoxConstraint(5.0)

    q = random_element(basis, box, 7)
    print(f"\nRandom element of W_R: sup norm {q.sup_norm():.3f}, cell values {np.round(basis.coefficients(q).real, 3)}")

    spectrum = forward_transform(q)
    print(f"Fourier coefficient at k=0: {spectrum.at((0, 0, 0)):.4f}")

    clipped = project_box(q * 3.0, basis, box)
    print(f"Projection of 3q back into W_R: sup norm {clipped.sup_norm():.3f}")
    return basis, q


def example_remainder(basis, q):
    """Example of one CGO remainder solve and its decay in t"""
    solver = SolverConfig(basis.grid)
    zeta = resonance_guard(make_zeta((1, 0, 0), 40.0), basis.grid, solver)
    solution = solve_remainder(q, zeta, solver)
    print(f"\nRemainder for k=(1,0,0), t={solution.t_used:g}: ||r|| = {solution.r.norm():.3e}, "
          f"residual {solution.residual:.1e} after {solution.iterations} iterations")

    files = save_remainder(solution, os.path.join(OUTPUT_DIR, "example_remainder_1_0_0"))
    print(f"Remainder saved to {files['field']}")

    decay = remainder_decay(q, (1, 0, 0), [40.0, 80.0, 160.0, 320.0], solver)
    print("\nRemainder decay:")
    print(decay.to_string(index=False))


if __name__ == "__main__":
    print("Running example_orderings()...")
    example_orderings()

    print("\nRunning example_subspace()...")
    basis, q = example_subspace()

    print("\nRunning example_remainder()...")
    example_remainder(basis, q)
