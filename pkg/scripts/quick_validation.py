#!/usr/bin/env python3
"""
Quick Validation

Smoke tests plus the fast unit tests, for feedback while editing the
kernel, trainer or sampler.

Usage:
    python scripts/quick_validation.py
    python scripts/quick_validation.py --only-smoke

Exit codes:
    0 - All selected tests passed
    1 - Some tests failed
"""

import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).parent.parent

STAGES = [
    ("Smoke tests (CLI on tiny configs)", ["-m", "smoke"]),
    ("Fast unit tests", ["-m", "unit and not slow"]),
]


def run_quick_tests(only_smoke: bool = False) -> int:
    print("=" * 70)
    print("QUICK VALIDATION")
    print("=" * 70)

    failed = []
    for name, marker_args in STAGES[:1] if only_smoke else STAGES:
        print(f"\n{'─' * 70}\n{name}\n{'─' * 70}\n")
        result = subprocess.run(["pytest", *marker_args, "-q"], cwd=ROOT)
        print(f"\n{'✅' if result.returncode == 0 else '❌'} {name}")
        if result.returncode != 0:
            failed.append(name)

    print("\n" + "=" * 70)
    print("❌ QUICK VALIDATION FAILED: " + ", ".join(failed) if failed else "✅ QUICK VALIDATION PASSED")
    print("=" * 70)
    return 1 if failed else 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run smoke and fast unit tests")
    parser.add_argument("--only-smoke", action="store_true", help="Run the smoke stage only")
    sys.exit(run_quick_tests(parser.parse_args().only_smoke))
