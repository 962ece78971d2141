#!/usr/bin/env python3
"""
Command-line entry points for CGO finite-measurement reconstruction.

Subcommands:
    balance      balancing-norm curve and the smallest admissible N
    simulate     measurement vector y = P_N U(q) for a potential from a file or a seed
    reconstruct  fixed-point reconstruction from a measurement file
    calibrate    doubling search for the schedule scale tau
    verify       desk-scale acceptance checks

Usage:
    python -m CGOScripts.cli balance --config run.json --out output/run1
    python -m CGOScripts.cli simulate --config run.json --seed 7
    python -m CGOScripts.cli reconstruct --config run.json --measurement output/measurement.json \
        --truth output/potential.cgo1

Common options:
    --config PATH   RunConfig JSON (defaults apply when omitted)
    --seed N        seed for random potentials and probes
    --threads N     worker threads for remainder solves (default: CGO_THREADS or all cores)
    --out DIR       output directory (default: CGO_OUTPUT_DIR)

Exit codes: 0 success, 1 other failure, 2 configuration/schema error, 3 no admissible N,
4 solver failure, 5 provenance mismatch, 6 verify criteria failed.
"""

import argparse
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .acceptance import run_acceptance
from .config import RunConfig, configure_logging, load_run_config
from .errors import (CGOError, ConfigError, FormatError, GuardError, NotFoundError, ProvenanceError,
                     SolverDivergenceError, SolverIterationError)
from .fileio import read_field, read_measurement, save_field, save_json, save_measurement, save_ordering_csv
from .recon import ReconConfig, reconstruct
from .spectral import Field, FreqOrdering
from .subspaces import Partition, SubspaceSpec, build_basis, is_in_box, project_subspace, random_element
from .transform import (MeasurementOperator, balancing_curve, calibrate_tau, choose_N, fit_balancing_constant,
                        sufficient_N)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SEARCH = 3
EXIT_SOLVER = 4
EXIT_PROVENANCE = 5
EXIT_VERIFY = 6

FINAL_ERROR_TARGET = 1e-6


def _threshold(cfg: RunConfig, threshold: Optional[float]) -> float:
    return cfg.balance.threshold if threshold is None else threshold


def resolve_N(cfg: RunConfig, basis, ordering: FreqOrdering, threshold: Optional[float] = None) -> int:
    """Configured N, or the smallest grid-level N meeting the balancing threshold."""
    if cfg.recon.N is not None:
        return cfg.recon.N
    return choose_N(basis, ordering, _threshold(cfg, threshold), cfg.balance.N_max, "grid")


def cmd_balance(cfg: RunConfig, out_dir: str, threshold: Optional[float] = None) -> Dict[str, Any]:
    """
    Balancing curves (closed-form and grid coefficients) and the chosen N*.

    Writes balancing_curve.csv and balancing_summary.json; piecewise and haar families also
    get the fitted log^(d-1)(N)/sqrt(N) M^2 bound column and piecewise_sweep.csv.

    Raises:
        NotFoundError: the configured source has no admissible N <= N_max
    """
    threshold = _threshold(cfg, threshold)
    grid = cfg.make_grid()
    basis = cfg.make_basis()
    grid_ordering = cfg.make_ordering()
    N_max = cfg.balance.N_max or grid.size
    lattice_ordering = cfg.make_ordering(N_max)

    Ns = np.unique(np.concatenate([[1], np.geomspace(1, N_max, cfg.balance.curve_points).astype(int)]))
    closed = balancing_curve(basis, lattice_ordering, Ns, "closed_form")
    on_grid = balancing_curve(basis, grid_ordering, Ns[Ns <= len(grid_ordering)], "grid")
    curve = closed.rename(columns={"balancing_norm": "balancing_norm_closed_form"}).merge(
        on_grid.rename(columns={"balancing_norm": "balancing_norm_grid"}), on="N", how="left")

    stars: Dict[str, Optional[int]] = {}
    for source, ordering in (("closed_form", lattice_ordering), ("grid", grid_ordering)):
        try:
            stars[source] = choose_N(basis, ordering, threshold, N_max, source)
        except NotFoundError:
            if source == cfg.balance.source:
                raise
            stars[source] = None
    summary: Dict[str, Any] = {"threshold": threshold, "N_max": int(N_max), "N_star": stars,
                               "family": basis.spec.family, "dimension": basis.M}

    if basis.spec.family != "bandlimited":
        M = basis.M
        C = fit_balancing_constant(closed, M, grid.d)
        curve["fitted_bound"] = C * np.log(np.maximum(curve["N"], 2)) ** (grid.d - 1) / np.sqrt(curve["N"]) * M ** 2
        summary.update({"fitted_C": C, "sufficient_N": sufficient_N(C, M, grid.d)})
        sweep_rows = []
        for sweep_M in cfg.balance.sweep_M:
            sweep_basis = build_basis(SubspaceSpec("piecewise", grid.d, partition=Partition.dyadic(grid.d, sweep_M)),
                                      grid)
            try:
                N_star = choose_N(sweep_basis, lattice_ordering, threshold, N_max)
            except NotFoundError as e:
                N_star = None
                print(f"M={sweep_M}: no admissible N <= {N_max} (norm {e.norm_at_max:.4f})")
            sweep_rows.append({"M": sweep_M, "N_star": N_star})
        sweep_file = os.path.join(out_dir, "piecewise_sweep.csv")
        pd.DataFrame(sweep_rows, columns=["M", "N_star"]).to_csv(sweep_file, index=False)
        print(f"Piecewise sweep saved to {sweep_file}")
        summary["sweep"] = sweep_rows

    curve_file = os.path.join(out_dir, "balancing_curve.csv")
    curve.to_csv(curve_file, index=False)
    print(f"Balancing curve saved to {curve_file}")
    summary_file = save_json(summary, os.path.join(out_dir, "balancing_summary.json"))
    print(f"Balancing summary saved to {summary_file}")
    print(f"N* = {stars[cfg.balance.source]} ({cfg.balance.source} coefficients, threshold {threshold})")
    return summary


def _load_potential(cfg: RunConfig, basis, q_file: Optional[str], seed: int) -> Field:
    box = cfg.make_box()
    if q_file is None:
        return random_element(basis, box, seed)
    q = read_field(q_file)
    if q.grid != basis.grid:
        raise ConfigError(f"{q_file}: potential grid {q.grid.n}^{q.grid.d} differs from the configured grid")
    if not is_in_box(q, box) or project_subspace(q, basis).distance(q) > 1e-9 * max(1.0, q.norm()):
        raise ConfigError(f"{q_file}: potential is not in W_R (R={box.R})")
    return q


def cmd_simulate(cfg: RunConfig, out_dir: str, q_file: Optional[str] = None,
                 threads: Optional[int] = None) -> Dict[str, Any]:
    """Simulate y = P_N U(q); writes measurement.json, potential.cgo1 and ordering.csv."""
    basis = cfg.make_basis()
    ordering = cfg.make_ordering()
    q = _load_potential(cfg, basis, q_file, cfg.seed)
    N = resolve_N(cfg, basis, ordering)
    op = MeasurementOperator(basis.grid, ordering, cfg.make_schedule(), cfg.make_solver(), N,
                             threads or cfg.resolved_threads())
    y = op.U(q)

    measurement_file = save_measurement(y, os.path.join(out_dir, "measurement.json"))
    print(f"Measurement vector (N={N}) saved to {measurement_file}")
    potential_file = save_field(q, os.path.join(out_dir, "potential.cgo1"))
    print(f"Potential saved to {potential_file}")
    ordering_file = save_ordering_csv(FreqOrdering(ordering.kind, op.frequencies),
                                      os.path.join(out_dir, "ordering.csv"))
    print(f"Ordering saved to {ordering_file}")
    return {"N": N, "measurement": measurement_file, "potential": potential_file, "ordering": ordering_file}


def cmd_reconstruct(cfg: RunConfig, out_dir: str, y_file: str, q0_file: Optional[str] = None,
                    truth_file: Optional[str] = None, threads: Optional[int] = None) -> Dict[str, Any]:
    """
    Reconstruct from a measurement file; writes reconstruction.cgo1, iteration_log.csv and
    reconstruction_summary.json, and prints a verdict line when a truth file is given.
    """
    y = read_measurement(y_file)
    basis = cfg.make_basis()
    ordering = cfg.make_ordering()
    N = cfg.recon.N if cfg.recon.N is not None else y.N
    recon_cfg = ReconConfig(N, cfg.make_schedule(), cfg.make_box(), basis, cfg.make_solver(), ordering,
                            max_iter=cfg.recon.max_iter, stop_tol=cfg.recon.stop_tol,
                            projection_tol=cfg.recon.projection_tol, threads=threads or cfg.resolved_threads())
    q0 = read_field(q0_file) if q0_file else Field.zeros(basis.grid)
    truth = read_field(truth_file) if truth_file else None
    result = reconstruct(y, q0, recon_cfg, truth=truth)

    field_file = save_field(result.q, os.path.join(out_dir, "reconstruction.cgo1"))
    print(f"Reconstruction saved to {field_file}")
    log_file = os.path.join(out_dir, "iteration_log.csv")
    result.log.to_csv(log_file)
    print(f"Iteration log saved to {log_file}")

    summary: Dict[str, Any] = {"converged": result.converged, "iterations": result.iterations, "N": N}
    if truth is not None:
        error = result.q.distance(truth)
        envelope = result.log.envelope_holds()
        verdict = "PASS" if envelope and error <= FINAL_ERROR_TARGET else "FAIL"
        summary.update({"final_error": error, "envelope_holds": envelope, "verdict": verdict})
        print(f"VERDICT: {verdict} (final error {error:.3e}, envelope {'holds' if envelope else 'violated'})")
    summary_file = save_json(summary, os.path.join(out_dir, "reconstruction_summary.json"))
    print(f"Reconstruction summary saved to {summary_file}")
    return summary


def cmd_calibrate(cfg: RunConfig, out_dir: str, threads: Optional[int] = None) -> Dict[str, Any]:
    """Calibrate tau; writes calibration_history.csv and calibrated_config.json."""
    basis = cfg.make_basis()
    ordering = cfg.make_ordering()
    N = resolve_N(cfg, basis, ordering)
    calibration = calibrate_tau(basis, cfg.make_box(), ordering, cfg.make_schedule(), cfg.make_solver(), N,
                                probes=cfg.calibrate.probes, seed=cfg.seed, margin=cfg.calibrate.margin,
                                max_doublings=cfg.calibrate.max_doublings,
                                threads=threads or cfg.resolved_threads())
    history_file = os.path.join(out_dir, "calibration_history.csv")
    calibration.history.to_csv(history_file, index=False)
    print(f"Calibration history saved to {history_file}")

    calibrated = replace(cfg, schedule=replace(cfg.schedule, tau=calibration.schedule.tau),
                         recon=replace(cfg.recon, N=N))
    config_file = save_json(calibrated.to_dict(), os.path.join(out_dir, "calibrated_config.json"))
    print(f"Calibrated config saved to {config_file}")
    print(f"tau = {calibration.schedule.tau:g} (contraction ratio {calibration.ratio:.4f}, N={N})")
    return {"tau": calibration.schedule.tau, "ratio": calibration.ratio, "N": N, "config": config_file}


def cmd_verify(cfg: RunConfig, out_dir: str, criteria: Optional[List[str]] = None,
               threads: Optional[int] = None) -> pd.DataFrame:
    """Run the acceptance checks; writes verify_report.csv and verify_report.json."""
    report = run_acceptance(cfg, criteria or cfg.verify.criteria, threads)
    report_file = os.path.join(out_dir, "verify_report.csv")
    report.to_csv(report_file, index=False)
    print(f"Verify report saved to {report_file}")
    json_file = save_json({"criteria": report.to_dict(orient="records"), "all_passed": bool(report["passed"].all())},
                          os.path.join(out_dir, "verify_report.json"))
    print(f"Verify report saved to {json_file}")
    return report


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='Path to a RunConfig JSON file')
    common.add_argument('--seed', type=int, help='Seed for random potentials and probes (overrides config)')
    common.add_argument('--threads', type=int, help='Worker threads for remainder solves')
    common.add_argument('--out', type=str, help='Output directory (default: CGO_OUTPUT_DIR)')

    parser = argparse.ArgumentParser(description='CGO finite-measurement simulation and reconstruction')
    subparsers = parser.add_subparsers(dest='command', required=True)

    balance = subparsers.add_parser('balance', parents=[common], help='Balancing curve and chosen N')
    balance.add_argument('--threshold', type=float, help='Balancing threshold (default: config, 0.25)')

    simulate = subparsers.add_parser('simulate', parents=[common], help='Simulate y = P_N U(q)')
    simulate.add_argument('--q-file', type=str, help='CGO1 potential file (default: random element from --seed)')

    recon = subparsers.add_parser('reconstruct', parents=[common], help='Fixed-point reconstruction')
    recon.add_argument('--measurement', type=str, required=True, help='Measurement JSON from simulate')
    recon.add_argument('--q0-file', type=str, help='CGO1 starting potential (default: zero)')
    recon.add_argument('--truth', type=str, help='CGO1 true potential for the verdict line')

    subparsers.add_parser('calibrate', parents=[common], help='Calibrate the schedule scale tau')

    verify = subparsers.add_parser('verify', parents=[common], help='Run the acceptance checks')
    verify.add_argument('--criteria', type=str, help='Comma-separated subset of checks to run')

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution flow; returns the process exit code."""
    args = parse_arguments(argv)
    configure_logging()
    try:
        cfg = load_run_config(args.config).with_overrides(seed=args.seed, threads=args.threads, output_dir=args.out)
        out_dir = cfg.resolved_output_dir()
        os.makedirs(out_dir, exist_ok=True)
        resolved_file = save_json(cfg.to_dict(), os.path.join(out_dir, "resolved_config.json"))
        print(f"Resolved config saved to {resolved_file}")

        if args.command == 'balance':
            cmd_balance(cfg, out_dir, args.threshold)
        elif args.command == 'simulate':
            cmd_simulate(cfg, out_dir, args.q_file, args.threads)
        elif args.command == 'reconstruct':
            cmd_reconstruct(cfg, out_dir, args.measurement, args.q0_file, args.truth, args.threads)
        elif args.command == 'calibrate':
            cmd_calibrate(cfg, out_dir, args.threads)
        elif args.command == 'verify':
            criteria = [c.strip() for c in args.criteria.split(',')] if args.criteria else None
            report = cmd_verify(cfg, out_dir, criteria, args.threads)
            if not report["passed"].all():
                failed = report.loc[~report["passed"], "criterion"].tolist()
                print(f"Failed checks: {', '.join(failed)}")
                return EXIT_VERIFY
    except (ConfigError, FormatError, KeyError) as e:
        print(f"Error: {e}")
        return EXIT_CONFIG
    except NotFoundError as e:
        print(f"Error: {e}")
        return EXIT_SEARCH
    except (SolverDivergenceError, SolverIterationError, GuardError) as e:
        print(f"Error: solver failure: {e}")
        return EXIT_SOLVER
    except ProvenanceError as e:
        print(f"Error: provenance mismatch: {e}")
        return EXIT_PROVENANCE
    except (CGOError, OSError, ValueError) as e:
        print(f"Error: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
