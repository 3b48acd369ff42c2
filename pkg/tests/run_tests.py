#!/usr/bin/env python3
# run_tests.py - Test runner for the Navier-Stokes bang-bang control benchmarks
"""
Test runner for the Navier-Stokes bang-bang control benchmarks
Runs every test module, or a selection, and prints an overall summary
"""

import os
import sys
import argparse
import importlib
import subprocess
import time

TEST_MODULES = (
    "test_config",
    "test_mesh",
    "test_quadrature",
    "test_spaces",
    "test_sparse",
    "test_assembly",
    "test_solvers",
    "test_ocp",
    "test_estimators",
    "test_problems",
    "test_convergence",
    "test_export",
    "test_main",
)


def setup_environment():
    """Setup test environment"""
    print("Setting up test environment...")
    # Ensure we're in the project directory
    project_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    os.chdir(project_dir)
    sys.path.insert(0, project_dir)

    # Create logs directory if it doesn't exist
    if not os.path.exists('logs'):
        os.makedirs('logs')


def run_module(name):
    """Run the suite of one test module"""
    print("\n" + "=" * 70)
    print(f"Running {name}...")
    print("=" * 70)
    module = importlib.import_module(f"tests.{name}")
    return module.run_all_tests()


def run_logger_tests():
    """Run logger-specific tests"""
    print("\n" + "=" * 70)
    print("Running logger tests...")
    print("=" * 70)
    try:
        # Need to run logger tests in a separate process to avoid mock logger interference
        result = subprocess.run([sys.executable, "tests/test_logger.py"], capture_output=False)
        return result.returncode == 0
    except Exception as e:
        print(f"Error running logger tests: {str(e)}")
        import traceback
        traceback.print_exc()
        return False


def run_all_tests(modules=TEST_MODULES):
    """Run all test suites"""
    results = {}
    for name in modules:
        results[name] = run_module(name)
        time.sleep(0.2)  # Small delay between test suites
    results["test_logger"] = run_logger_tests()

    # Print overall summary
    print("\n" + "=" * 70)
    print("OVERALL TEST RESULTS")
    print("=" * 70)
    for name, passed in results.items():
        print(f"{name}: {'PASSED' if passed else 'FAILED'}")

    overall_result = all(results.values())
    print(f"\nOverall test status: {'PASSED' if overall_result else 'FAILED'}")
    return overall_result


def parse_args():
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(description="Navier-Stokes bang-bang control test runner")
    parser.add_argument("--all", action="store_true", help="Run all tests")
    parser.add_argument("--fast", action="store_true", help="Skip the long convergence ladders (default)")
    parser.add_argument("--slow", action="store_true", help="Include the long convergence ladders")
    parser.add_argument("--module", action="append", choices=TEST_MODULES + ("test_logger",),
                        help="Run only the named test module (repeatable)")
    return parser.parse_args()


if __name__ == "__main__":
    setup_environment()

    args = parse_args()

    # SLOW is read from the environment when tests.test_utils is first imported
    os.environ["NSBB_SLOW"] = "1" if args.slow and not args.fast else "0"

    if args.module and not args.all:
        success = True
        for name in args.module:
            if name == "test_logger":
                success = run_logger_tests() and success
            else:
                success = run_module(name) and success
    else:
        success = run_all_tests()

    # Exit with appropriate code
    sys.exit(0 if success else 1)
