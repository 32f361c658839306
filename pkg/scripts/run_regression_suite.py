#!/usr/bin/env python3
"""
Regression Suite

Determinism checks and end-to-end generation tests. The slow learned-score
and rate-study runs are skipped unless --include-slow is given.

Usage:
    python scripts/run_regression_suite.py
    python scripts/run_regression_suite.py --include-slow --coverage

Exit codes:
    0 - All tests passed
    1 - Tests failed
"""

import argparse
import subprocess
import sys
from pathlib import Path


def run_regression_suite(include_slow: bool = False, with_coverage: bool = False) -> int:
    print("=" * 70)
    print("REGRESSION AND END-TO-END SUITE")
    print("=" * 70)

    marker = "regression or e2e" if include_slow else "(regression or e2e) and not slow"
    cmd = ["pytest", "-v", "-m", marker]
    if with_coverage:
        cmd.extend(["--cov=src", "--cov-report=html", "--cov-report=term"])
        print("📊 Coverage reporting enabled\n")

    result = subprocess.run(cmd, cwd=Path(__file__).parent.parent)

    print("\n" + "=" * 70)
    if result.returncode == 0:
        print("✅ ALL REGRESSION TESTS PASSED")
        if with_coverage:
            print("📊 Coverage report in htmlcov/index.html")
    else:
        print("❌ REGRESSION TESTS FAILED")
    print("=" * 70)
    return result.returncode


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the regression and end-to-end suite")
    parser.add_argument("--include-slow", action="store_true", help="Also run tests marked slow")
    parser.add_argument("--coverage", action="store_true", help="Generate a coverage report")
    args = parser.parse_args()
    sys.exit(run_regression_suite(args.include_slow, args.coverage))
