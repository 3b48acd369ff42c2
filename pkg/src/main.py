# main.py - Command-line entry point
"""
Bang-bang control of stationary Navier-Stokes: convergence studies,
adaptive runs and invariant checks on manufactured problems.

Exit codes: 0 success, 1 unexpected error, 2 solver failure or failed
checks, 3 configuration error.
"""

import argparse
import os
import sys
import traceback

# Add project root to Python path for proper imports
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from rich.console import Console
from rich.table import Table

from src.core.config import load_config
from src.core.errors import ConfigError, ParameterError, SolverError
from src.core.logger import get_logger

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3

COMMANDS = ("ns-converge", "ocp-converge", "adapt", "check-invariants", "report-assumptions")


# Global exception handler to log uncaught exceptions
def exception_handler(exctype, value, tb):
    """Handle uncaught exceptions"""
    logger = get_logger()
    error_msg = ''.join(traceback.format_exception(exctype, value, tb))
    logger.error(f"Uncaught exception: {error_msg}")

    # Call the default exception handler
    sys.__excepthook__(exctype, value, tb)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="run_bench.py",
        description="Taylor-Hood Navier-Stokes bang-bang control benchmarks",
    )
    parser.add_argument("--log-dir", default="logs", help="directory for rotating log files")
    parser.add_argument("--verbose", "-v", action="store_true", help="show INFO messages on the console")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="JSON run configuration")
    return parser


def _bounds(config):
    from src.control.ocp import ControlBounds
    return ControlBounds(a=config.bounds.a, b=config.bounds.b)


def _history_path(csv_path):
    stem, ext = os.path.splitext(csv_path)
    return f"{stem}_history{ext or '.csv'}"


def _write_outputs(records, config):
    from src.bench.export import export_csv, export_history_csv, export_vtk

    export_csv(records, config.output.csv)
    if not records:
        return
    finest = records[-1]
    history = finest.extras.get("history")
    if history:
        export_history_csv(history, _history_path(config.output.csv))
    if config.output.vtk and finest.extras.get("fields"):
        export_vtk(finest.extras["fields"], config.output.vtk)


def _print_records(records, console):
    table = Table(title="Convergence")
    for col in ("level", "h", "ndof_v", "err_u_L1", "err_y_L2", "err_z_Linf", "eoc_u", "eoc_y", "total_bound"):
        table.add_column(col, justify="right")
    for r in records:
        table.add_row(str(r.level), f"{r.h:.4e}", str(r.ndof_v), f"{r.err_u_L1:.4e}", f"{r.err_y_L2:.4e}",
                      f"{r.err_z_Linf:.4e}", f"{r.eoc_u:.3f}", f"{r.eoc_y:.3f}", f"{r.total_bound:.4e}")
    console.print(table)


def cmd_ns_converge(config, console):
    from src.bench.convergence import run_convergence
    from src.bench.problems import make_ns_benchmark

    records = run_convergence(make_ns_benchmark(config.nu), config.ladder.levels, config.ladder.mode, config)
    _write_outputs(records, config)
    _print_records(records, console)
    return EXIT_OK


def cmd_ocp_converge(config, console, mode=None):
    from src.bench.convergence import run_convergence
    from src.bench.problems import make_ocp_benchmark

    problem = make_ocp_benchmark(config.nu, _bounds(config))
    records = run_convergence(problem, config.ladder.levels, mode or config.ladder.mode, config)
    _write_outputs(records, config)
    _print_records(records, console)
    return EXIT_OK


def cmd_check_invariants(config, console):
    from src.bench.invariants import run_invariant_checks
    from src.fem.mesh import unit_square

    results = run_invariant_checks(unit_square(config.mesh.n), nu=config.nu)
    table = Table(title="Invariant checks")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for r in results:
        table.add_row(r.name, "PASS" if r.passed else "FAIL", r.detail)
    console.print(table)
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def cmd_report_assumptions(config, console):
    from src.bench.problems import make_ocp_benchmark
    from src.control.estimators import check_assumptions
    from src.control.ocp import solve_ocp
    from src.fem.mesh import unit_square
    from src.fem.spaces import build_space

    problem = make_ocp_benchmark(config.nu, _bounds(config))
    data = problem.data(config.solver.newton_tol, config.solver.newton_max, config.ocp.line_search_evals)
    space = build_space(unit_square(config.mesh.n))
    _, final = solve_ocp(space, data, gap_tol=config.ocp.gap_tol, max_outer=config.ocp.max_outer)
    est = config.estimator
    report = check_assumptions(final.state, config.nu, est.c_b, est.c_l125)

    table = Table(title="Smallness assumptions (C_b is a heuristic constant)")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("||grad y||_L2", f"{report.grad_l2:.6e}")
    table.add_row("||grad y||_L12/5", f"{report.grad_l125:.6e}")
    table.add_row("nu / C_b", f"{report.nu / report.c_b:.6e}")
    table.add_row("||grad y||_L2 < nu / C_b", str(report.state_condition))
    table.add_row("2 ||grad y||_L2 < nu / C_b", str(report.adjoint_condition))
    table.add_row("||grad y||_L12/5 <= C", str(report.l125_condition))
    console.print(table)
    return EXIT_OK


def run_command(command, config, console):
    if command == "ns-converge":
        return cmd_ns_converge(config, console)
    if command == "ocp-converge":
        return cmd_ocp_converge(config, console)
    if command == "adapt":
        return cmd_ocp_converge(config, console, mode="adaptive")
    if command == "check-invariants":
        return cmd_check_invariants(config, console)
    if command == "report-assumptions":
        return cmd_report_assumptions(config, console)
    raise ValueError(f"unknown command {command}")


def main(argv=None):
    """Main entry point; returns the process exit code"""
    # Set up global exception handler
    sys.excepthook = exception_handler

    args = build_parser().parse_args(argv)

    # Initialize logger
    logger = get_logger()
    logger.setup_file_logging(args.log_dir)
    if args.verbose:
        logger.set_console_level("INFO")
    logger.system(f"Command '{args.command}' starting")

    console = Console()
    try:
        try:
            config = load_config(args.config)
        except ParameterError as e:
            raise ConfigError(str(e)) from e
        code = run_command(args.command, config, console)

    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    except SolverError as e:
        logger.exception(f"Solver failure: {str(e)}")
        return EXIT_SOLVER
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return EXIT_UNEXPECTED

    logger.system(f"Command '{args.command}' finished with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
