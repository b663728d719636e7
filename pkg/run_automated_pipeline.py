#!/usr/bin/env python
"""
Automated demo pipeline - runs the documented command sequence without user input
"""
import argparse
import os
import subprocess
import sys

DEMO_MANIFEST = os.path.join("data", "manifests", "demo_levelk.json")


def run_command(command, description):
    """Run a command and print its output"""
    print(f"\n{'='*80}\n{description}\n{'='*80}")
    try:
        result = subprocess.run(command, check=True, text=True, capture_output=True)
        print(result.stdout)
        return True
    except subprocess.CalledProcessError as e:
        print(f"Error running command: {e}")
        print(f"Output: {e.stdout}")
        print(f"Error: {e.stderr}")
        return False


def steps(full_family=False, manifest=DEMO_MANIFEST):
    cli = [sys.executable, "manage_games.py"]
    sequence = [
        (cli + ["run", "--check"], "Step 1: Checking the bundled published tables"),
        (cli + ["eq", "select", "--variant", "basic"], "Step 2: Selecting the equilibrium of the basic game"),
        (cli + ["eq", "select", "--variant", "costless"], "Step 3: Selecting the equilibrium of the costless game"),
        (cli + ["run", "--manifest", manifest, "--offline"], "Step 4: Evaluation run on the bundled human data"),
    ]
    if full_family:
        sequence.append((cli + ["family", "dedup", "--offsets", "4-19", "--out", os.path.join("data", "population.ldjson")],
                         "Step 5: Deduplicating the full game family"))
    return sequence


def main(argv=None):
    parser = argparse.ArgumentParser(description="Run the demo command sequence")
    parser.add_argument("--full-family", action="store_true", help="Also deduplicate the full family (minutes)")
    parser.add_argument("--manifest", default=DEMO_MANIFEST)
    args = parser.parse_args(argv)

    for command, description in steps(args.full_family, args.manifest):
        if not run_command(command, description):
            print(f"Failed: {description}. Exiting.")
            return 1

    print("\nAutomated pipeline completed successfully!")
    reports = "reports"
    if os.path.isdir(reports):
        print("Reports available in the './reports' directory:")
        for root, _, files in sorted(os.walk(reports)):
            for file in sorted(files):
                size = os.path.getsize(os.path.join(root, file)) / 1024  # KB
                print(f"- {os.path.join(root, file)} ({size:.2f} KB)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
