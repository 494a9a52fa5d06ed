"""
Command-line entry point for shadow calibration experiments
Subcommands: run (config -> artifacts) and compare (two runs -> bias table)
"""
import argparse
import logging
import sys
from typing import List, Optional

from file_handlers import ReportExporter
from orchestrator import compare, load_summary, run_experiment
from shadowcal import config
from shadowcal.errors import CalibrationError, CapExceededError, ConfigError, OracleUnavailableError, ValidationError

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CAP = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowcal", description="Noise-robust shadow estimation experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run an experiment config")
    run_parser.add_argument("config", help="Path to the JSON experiment config")
    run_parser.add_argument("-o", "--output", default="results", help="Output directory")
    run_parser.add_argument("--exact", action="store_true", default=None,
                            help="Use exact expectations instead of sampling")
    run_parser.add_argument("--workers", type=int, default=None, help="Shot worker processes")

    compare_parser = subparsers.add_parser("compare", help="Compare two run directories")
    compare_parser.add_argument("run_a", help="First run directory or summary.json")
    compare_parser.add_argument("run_b", help="Second run directory or summary.json")
    compare_parser.add_argument("--tolerance", type=float, default=1e-9)
    compare_parser.add_argument("-o", "--output", default=None, help="Write the bias table as CSV")
    compare_parser.add_argument("--excel", default=None, help="Also write the bias table to an Excel file")
    return parser


def _run(args: argparse.Namespace) -> int:
    orchestrator = run_experiment(args.config, args.output, exact=args.exact, workers=args.workers)
    if orchestrator.processing_stats["fits_flagged"]:
        logger.warning("%d fit(s) did not converge; see summary.json", orchestrator.processing_stats["fits_flagged"])
    return EXIT_OK


def _compare(args: argparse.Namespace) -> int:
    summary_a = load_summary(args.run_a)
    table = compare(summary_a, load_summary(args.run_b), args.tolerance)
    content = ReportExporter.to_csv(table, args.output)
    if args.output is None:
        print(content, end="")
    if args.excel:
        with open(args.excel, "wb") as f:
            f.write(ReportExporter.to_excel(summary_a, table))
    failed = int((~table["passed"]).sum()) if not table.empty else 0
    logger.info("%d row(s) compared, %d outside tolerance", len(table), failed)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=config.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        return _compare(args)
    except (ConfigError, ValidationError, OracleUnavailableError, CalibrationError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_INVALID
    except CapExceededError as e:
        logger.error("CapExceededError: %s", e)
        return EXIT_CAP
    except FileNotFoundError as e:
        logger.error("File not found: %s", e)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
