#!/usr/bin/env python3
"""
CGO Reconstruction Workflow Orchestrator

This script runs the complete finite-measurement experiment by calling the
CGOScripts command line in sequence:
1. CGOScripts.cli balance - To pick the number of measurements N
2. CGOScripts.cli calibrate - To pick the schedule scale tau
3. CGOScripts.cli simulate - To measure a random potential in W_R
4. CGOScripts.cli reconstruct - To recover the potential and print the verdict
"""

import os
import sys
import argparse
import subprocess
import re
from datetime import datetime

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Define output directory
OUTPUT_DIR = os.path.join(REPO_ROOT, 'output')

# Ensure output directory exists
os.makedirs(OUTPUT_DIR, exist_ok=True)


def parse_arguments():
    parser = argparse.ArgumentParser(description='Orchestrate the complete CGO reconstruction workflow')
    parser.add_argument('--config', type=str, help='RunConfig JSON file (defaults apply when omitted)')
    parser.add_argument('--seed', type=int, default=0, help='Seed for the simulated potential (default: 0)')
    parser.add_argument('--threads', type=int, help='Worker threads for remainder solves')
    parser.add_argument('--output-dir', type=str, help='Directory for output files (default: output/run_<date>)')
    parser.add_argument('--skip-calibration', action='store_true',
                        help='Skip balance and calibrate (use --config as an already calibrated config)')
    parser.add_argument('--measurement-file', type=str,
                        help='Existing measurement JSON (skips simulate; needs --truth-file for a verdict)')
    parser.add_argument('--truth-file', type=str, help='CGO1 potential matching --measurement-file')
    return parser.parse_args()


def run_command(command, description):
    """Run a command and print its output in real-time"""
    print(f"\n{'=' * 80}")
    print(f"STEP: {description}")
    print(f"{'=' * 80}")
    print(f"Running: {' '.join(command)}")

    # Run the command and capture output
    process = subprocess.Popen(
        command,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        bufsize=1,
        cwd=REPO_ROOT
    )

    # Store the complete output for later analysis
    full_output = []

    # Print output in real-time
    for line in iter(process.stdout.readline, ''):
        print(line, end='')
        full_output.append(line)

    process.stdout.close()
    return_code = process.wait()

    if return_code != 0:
        print(f"Error running {description} (exit code {return_code})")
        sys.exit(return_code)

    return ''.join(full_output)


def find_file_in_output(output, pattern):
    """Find a filename in command output using regex pattern"""
    match = re.search(pattern, output)
    if match:
        return match.group(1).strip()
    return None


def cli_command(subcommand, args, config, out_dir):
    command = [sys.executable, "-m", "CGOScripts.cli", subcommand, "--out", out_dir]
    if config:
        command.extend(["--config", config])
    if args.threads:
        command.extend(["--threads", str(args.threads)])
    return command


def main():
    args = parse_arguments()

    timestamp = datetime.now().strftime("%Y-%m-%d_%H%M%S")
    out_dir = os.path.abspath(args.output_dir or os.path.join(OUTPUT_DIR, f"run_{timestamp}"))
    os.makedirs(out_dir, exist_ok=True)
    config = os.path.abspath(args.config) if args.config else None

    # Step 1 and 2: balancing and calibration (unless skipped)
    if not args.skip_calibration:
        run_command(cli_command("balance", args, config, out_dir), "Choosing N from the balancing norm")

        calibrate_cmd = cli_command("calibrate", args, config, out_dir) + ["--seed", str(args.seed)]
        calibrate_output = run_command(calibrate_cmd, "Calibrating the schedule scale tau")

        config = find_file_in_output(calibrate_output, r"Calibrated config saved to (.+\.json)")
        if not config:
            print("Error: Could not find the calibrated config in calibrate output")
            sys.exit(1)
    else:
        print(f"\n{'=' * 80}")
        print(f"STEP: Skipping balance and calibrate (using {config or 'default config'})")
        print(f"{'=' * 80}")

    # Step 3: simulate measurements (unless a measurement file is given)
    measurement_file = args.measurement_file
    truth_file = args.truth_file
    if not measurement_file:
        simulate_cmd = cli_command("simulate", args, config, out_dir) + ["--seed", str(args.seed)]
        simulate_output = run_command(simulate_cmd, "Simulating the measurement vector")
        measurement_file = find_file_in_output(simulate_output, r"Measurement vector \(N=\d+\) saved to (.+\.json)")
        truth_file = find_file_in_output(simulate_output, r"Potential saved to (.+\.cgo1)")
        if not measurement_file:
            print("Error: Could not find the measurement file in simulate output")
            sys.exit(1)
    else:
        print(f"\n{'=' * 80}")
        print(f"STEP: Skipping simulation (using {measurement_file})")
        print(f"{'=' * 80}")
        if not os.path.exists(measurement_file):
            print(f"Error: Specified measurement file {measurement_file} does not exist")
            sys.exit(1)

    # Step 4: reconstruct
    reconstruct_cmd = cli_command("reconstruct", args, config, out_dir) + ["--measurement", measurement_file]
    if truth_file:
        reconstruct_cmd.extend(["--truth", truth_file])
    reconstruct_output = run_command(reconstruct_cmd, "Reconstructing the potential")

    verdict = find_file_in_output(reconstruct_output, r"VERDICT: (PASS|FAIL)")
    reconstruction_file = find_file_in_output(reconstruct_output, r"Reconstruction saved to (.+\.cgo1)")

    print("\n" + "=" * 80)
    print("WORKFLOW COMPLETED" + (f": {verdict}" if verdict else ""))
    print("=" * 80)

    # Print summary of generated files
    print("\nGenerated files:")
    print(f"1. Run configuration: {config or 'defaults'}")
    print(f"2. Measurement vector: {measurement_file}")
    if reconstruction_file:
        print(f"3. Reconstruction: {reconstruction_file}")
    print(f"4. Iteration log: {os.path.join(out_dir, 'iteration_log.csv')}")

    print("\nNext steps:")
    print("1. Review iteration_log.csv for the geometric decay of step_norm")
    print("2. Run `python -m CGOScripts.cli verify` with the same config for the full acceptance report")

    return 0 if verdict != "FAIL" else 1


if __name__ == "__main__":
    sys.exit(main())
