#!/usr/bin/env python3
"""
Balancing Sweep Report for piecewise-constant subspaces

This script sweeps the dyadic piecewise-constant families over a list of cell
counts M and frequency orderings, and reports for each combination the number
of measurements N* at which the balancing norm ||P_N^perp F|_W|| first drops to
the threshold.

Features:
- Configurable list of cell counts (default: 2,4,8,16)
- Configurable orderings (default: hyperbolic,box)
- Fits the constant C of the log^(d-1)(N)/sqrt(N) * M^2 bound per combination
- Reports the sufficient N implied by the fitted constant next to the measured N*
- Flags orderings whose N*(M) is not monotone in M

Usage:
    python3 balancing_sweep.py [options]

Options:
    --M-values LIST         Comma-separated cell counts, each a power of two (default: 2,4,8,16)
    --orderings LIST        Comma-separated ordering kinds (default: hyperbolic,box)
    --threshold VALUE       Balancing threshold (default: 0.25)
    --N-max N               Largest N searched (default: 4096)
    --curve-points N        Points on each balancing curve (default: 25)
    --output-file FILE      Path to the summary report (default: balancing_sweep_YYYY-MM-DD.csv)
"""

import argparse
import os
import sys
from datetime import datetime

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from CGOScripts.errors import NotFoundError, PartitionError
from CGOScripts.spectral import ORDERING_KINDS, TorusGrid, make_ordering
from CGOScripts.subspaces import Partition, SubspaceSpec, build_basis
from CGOScripts.transform import balancing_curve, choose_N, fit_balancing_constant, sufficient_N

# Define output directory
OUTPUT_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'output')

# Ensure output directory exists
os.makedirs(OUTPUT_DIR, exist_ok=True)

# Closed-form coefficients do not depend on the grid; it only has to hold the dyadic cells
GRID_N = 16
DIMENSION = 3


def parse_arguments():
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(description='Sweep N*(M) for dyadic piecewise-constant subspaces')

    parser.add_argument('--M-values', type=str, default='2,4,8,16',
                        help='Comma-separated cell counts (default: 2,4,8,16)')
    parser.add_argument('--orderings', type=str, default='hyperbolic,box',
                        help='Comma-separated ordering kinds (default: hyperbolic,box)')
    parser.add_argument('--threshold', type=float, default=0.25,
                        help='Balancing threshold (default: 0.25)')
    parser.add_argument('--N-max', type=int, default=4096,
                        help='Largest N searched (default: 4096)')
    parser.add_argument('--curve-points', type=int, default=25,
                        help='Points on each balancing curve (default: 25)')
    parser.add_argument('--output-file', type=str,
                        help='Path to the summary report (default: balancing_sweep_YYYY-MM-DD.csv)')

    args = parser.parse_args()

    try:
        args.M_list = sorted(int(m.strip()) for m in args.M_values.split(','))
    except ValueError:
        print("Error: Invalid M format. Please use comma-separated integers (e.g., 2,4,8)")
        sys.exit(1)
    args.ordering_list = [o.strip() for o in args.orderings.split(',') if o.strip()]
    unknown = [o for o in args.ordering_list if o not in ORDERING_KINDS]
    if unknown:
        print(f"Error: Unknown ordering(s) {', '.join(unknown)}; expected one of {', '.join(ORDERING_KINDS)}")
        sys.exit(1)

    return args


def sweep_combination(M, ordering, grid, threshold, Ns):
    """
    Balancing curve and N* for one dyadic family under one ordering.

    Args:
        M: number of dyadic cells
        ordering: FreqOrdering of at least max(Ns) frequencies
        grid: TorusGrid holding the cells
        threshold: balancing threshold in (0, 1]
        Ns: curve sample points

    Returns:
        Tuple of (summary row dict, curve DataFrame with ordering and M columns)
    """
    basis = build_basis(SubspaceSpec("piecewise", grid.d, partition=Partition.dyadic(grid.d, M)), grid)
    curve = balancing_curve(basis, ordering, Ns)
    C = fit_balancing_constant(curve, M, grid.d)

    row = {"ordering": ordering.kind, "M": M, "N_star": None,
           "norm_at_N_max": float(curve["balancing_norm"].iloc[-1]),
           "fitted_C": C, "sufficient_N": sufficient_N(C, M, grid.d)}
    try:
        row["N_star"] = choose_N(basis, ordering, threshold, len(ordering))
    except NotFoundError as e:
        row["norm_at_N_max"] = e.norm_at_max
        print(f"  {ordering.kind}, M={M}: no admissible N <= {len(ordering)} (norm {e.norm_at_max:.4f})")

    curve.insert(0, "M", M)
    curve.insert(0, "ordering", ordering.kind)
    return row, curve


def check_monotone(summary):
    """Return the orderings whose finite N*(M) values decrease somewhere as M grows."""
    flagged = []
    for kind, rows in summary.groupby("ordering"):
        values = rows.sort_values("M")["N_star"].dropna().to_numpy()
        if np.any(np.diff(values) < 0):
            flagged.append(kind)
    return flagged


def generate_summary(summary, threshold):
    """Print summary statistics of the sweep."""
    print("\n=== Balancing Sweep Summary ===")
    print(f"Threshold: {threshold}")
    for kind, rows in summary.groupby("ordering"):
        print(f"\n{kind} ordering:")
        for _, row in rows.sort_values("M").iterrows():
            N_star = "not reached" if pd.isna(row["N_star"]) else int(row["N_star"])
            print(f"  M={int(row['M']):>3}  N*={N_star!s:>12}  fitted C={row['fitted_C']:.4f}  "
                  f"sufficient N={int(row['sufficient_N'])}")

    reached = summary.dropna(subset=["N_star"])
    if len(reached["ordering"].unique()) > 1:
        best = reached.loc[reached.groupby("M")["N_star"].idxmin()]
        print("\nSmallest N* per M:")
        for _, row in best.sort_values("M").iterrows():
            print(f"  M={int(row['M'])}: {row['ordering']} ({int(row['N_star'])})")


def main():
    args = parse_arguments()

    grid = TorusGrid(DIMENSION, GRID_N)
    Ns = np.unique(np.concatenate([[1], np.geomspace(1, args.N_max, args.curve_points).astype(int)]))

    rows = []
    curves = []
    for kind in args.ordering_list:
        ordering = make_ordering(kind, args.N_max, DIMENSION)
        print(f"Sweeping {kind} ordering over M = {', '.join(map(str, args.M_list))}")
        for M in args.M_list:
            try:
                row, curve = sweep_combination(M, ordering, grid, args.threshold, Ns)
            except PartitionError as e:
                print(f"Error: {e}")
                return 1
            rows.append(row)
            curves.append(curve)

    summary = pd.DataFrame(rows, columns=["ordering", "M", "N_star", "norm_at_N_max", "fitted_C", "sufficient_N"])
    summary["N_star"] = summary["N_star"].astype("Int64")

    timestamp = datetime.now().strftime("%Y-%m-%d")
    output_file = args.output_file or os.path.join(OUTPUT_DIR, f"balancing_sweep_{timestamp}.csv")
    summary.to_csv(output_file, index=False)
    print(f"\nSweep summary saved to {output_file}")

    curve_file = os.path.splitext(output_file)[0] + "_curves.csv"
    pd.concat(curves, ignore_index=True).to_csv(curve_file, index=False)
    print(f"Balancing curves saved to {curve_file}")

    generate_summary(summary, args.threshold)

    flagged = check_monotone(summary)
    if flagged:
        print(f"\nWarning: N*(M) is not monotone for {', '.join(flagged)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
