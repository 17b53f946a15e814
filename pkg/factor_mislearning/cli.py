#!/usr/bin/env python3

"""
Factor Mislearning - command-line pipeline
Simulate the learning model, fit stable and break models, run predictive
regressions and cross-sectional diagnostics, and render a report.
"""

import argparse
import logging
import sys
from collections.abc import Callable
from pathlib import Path

import pandas as pd

from . import __version__
from .config import PipelineConfig, load_pipeline_config, validate_config
from .console import console, print_check_rows, print_colored, print_frame, print_phase_header, setup_logging
from .data_io import load_exogenous, read_table, write_table
from .errors import ConfigError, EmptySampleError, MislearningError
from .mislearning import delta_distribution, fit_quality_summary, model_comparison_table
from .pipeline import (
    break_fit_table,
    decomposition_table,
    delta_table,
    filter_states_table,
    inference_sweep_table,
    load_ivol_factors,
    load_panel,
    mislearning_for,
    passive_tables,
    regression_frame,
    run_fit_stage,
    run_regression_suite,
    stable_fit_table,
    xsec_tables,
)
from .propositions import run_proposition_suite, simulated_paths

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USER_ERROR = 2

# Report sections in order: (file stem, heading)
REPORT_SECTIONS = [
    ("proposition_reports", "Simulation checks"),
    ("comparison", "Model comparison"),
    ("fit_quality", "Fit quality"),
    ("regression_results", "Predictive regressions"),
    ("inference_sweep", "Inference sweep"),
    ("passive_results", "Passive ownership interactions"),
    ("loyo", "Leave-one-year-out"),
    ("decomposition_summary", "Decomposition summary"),
    ("tertile_descriptives", "IVOL tertiles"),
    ("tertile_regressions", "Within-tertile slopes"),
    ("xsec_regressions", "Cross-sectional regressions"),
    ("corollary41", "Monotonicity screen"),
]


def _write(frame: pd.DataFrame, out: Path, name: str) -> None:
    path = write_table(frame, out / f"{name}.csv")
    logger.debug("wrote %s (%d rows)", path, len(frame))


def cmd_simulate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Simulated paths plus every model check; exits nonzero when a check fails."""
    print_phase_header("Simulation checks", f"seed {cfg.run.seed}, {cfg.run.threads} thread(s)")
    out = cfg.run.out
    _write(simulated_paths(cfg.simulate, cfg.run.seed), out, "paths")
    report = run_proposition_suite(cfg.simulate, cfg.run.seed, cfg.run.threads)
    _write(report, out, "proposition_reports")
    print_check_rows(report)

    failed = int((report["status"] == "FAIL").sum())
    if failed:
        print_colored("FAIL", f"{failed} of {len(report)} checks failed")
        return EXIT_FAILURE
    print_colored("SUCCESS", f"all {len(report)} checks passed")
    return EXIT_OK


def cmd_fit(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Fit both models per series and write deltas, comparisons and plot data."""
    print_phase_header("Model fitting", cfg.data.sample_name)
    out = cfg.run.out
    panel = load_panel(cfg.data)
    stage = run_fit_stage(panel, cfg)
    fits = stage.fits

    comparison = model_comparison_table(fits.stable, fits.brk)
    _write(stable_fit_table(fits), out, "stable_fit")
    _write(break_fit_table(fits), out, "break_fit")
    _write(comparison, out, "comparison")
    _write(delta_table(stage.mislearning), out, "delta")
    _write(filter_states_table(stage), out, "filter_states")
    _write(pd.DataFrame(fits.warnings, columns=["series", "status", "message"]), out, "fit_warnings")
    _write(fit_quality_summary(fits, stage.mislearning), out, "fit_quality")
    _write(delta_distribution(stage.mislearning), out, "delta_distribution")

    for warning in fits.warnings:
        print_colored("WARNING", f"{warning['series']} {warning['status']}: {warning['message']}")
    print_frame(comparison[["series", "obs", "ll_stable", "ll_break", "delta_ll", "delta_bic"]], "Model comparison")
    print_colored("SUCCESS", f"fitted {len(fits.series_ids)} series; spike threshold {stage.mislearning.threshold:.4f}")
    return EXIT_OK


def cmd_regress(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Predictive regressions, the inference sweep and the passive-ownership suite."""
    print_phase_header("Predictive regressions", f"estimator {cfg.regress.estimator}")
    out = cfg.run.out
    suite = getattr(args, "suite", "auto")
    wants_passive = suite in ("passive", "all") or (suite == "auto" and cfg.data.passive is not None)
    if wants_passive and cfg.data.passive is None:
        raise ConfigError("data.passive", "the passive suite needs a passive ownership file")

    panel = load_panel(cfg.data)
    mislearning = mislearning_for(panel, cfg, out / "delta.csv")
    frame = regression_frame(mislearning, panel, cfg)

    if suite != "passive":
        results = run_regression_suite(frame, cfg)
        _write(results, out, "regression_results")
        print_frame(results.loc[results["factor"] == "pooled"], "Pooled predictive regressions")
        if cfg.regress.inference_sweep:
            _write(inference_sweep_table(frame, cfg), out, "inference_sweep")

    if wants_passive:
        passive = load_exogenous(cfg.data.passive, cfg.data.passive_unit)
        results, loyo = passive_tables(mislearning, frame, passive, cfg)
        _write(results, out, "passive_results")
        if cfg.regress.leave_one_year_out:
            _write(loyo, out, "loyo")
        print_frame(results, "Passive ownership interactions")

    print_colored("SUCCESS", f"regressions written to {out}")
    return EXIT_OK


def cmd_xsec(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Decomposition of mean delta, IVOL tertiles and cross-sectional regressions."""
    source = "anomalies" if cfg.data.anomalies is not None else "returns"
    print_phase_header("Cross-sectional diagnostics", f"{source} panel")
    out = cfg.run.out
    panel = load_panel(cfg.data, source)
    cached = out / ("delta.csv" if source == "returns" else "xsec_delta.csv")
    mislearning = mislearning_for(panel, cfg, cached)
    if source == "anomalies":
        _write(delta_table(mislearning), out, "xsec_delta")

    rows = decomposition_table(mislearning, panel, load_ivol_factors(cfg.data), cfg)
    _write(rows, out, "decomposition")
    tables = xsec_tables(rows, mislearning.threshold, cfg)
    for name, table in tables.items():
        _write(table, out, name)

    print_frame(tables["decomposition_summary"], "Decomposition summary")
    if "corollary41" in tables:
        print_frame(tables["corollary41"], "Monotonicity screen")
    print_colored("SUCCESS", f"{len(rows)} series decomposed")
    return EXIT_OK


def cmd_report(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Collect the CSV tables in the output directory into report.md."""
    out = cfg.run.out
    print_phase_header("Report", str(out))
    lines = [f"# {cfg.data.sample_name}: mislearning report", ""]
    found = 0
    for stem, heading in REPORT_SECTIONS:
        path = out / f"{stem}.csv"
        if not path.exists():
            continue
        try:
            frame = read_table(path)
        except pd.errors.EmptyDataError:
            logger.warning("%s is empty", path)
            continue
        found += 1
        lines += [f"## {heading}", "", frame.to_markdown(index=False, floatfmt=".4f"), ""]
        if stem in ("proposition_reports", "comparison", "decomposition_summary"):
            print_frame(frame, heading)
    if not found:
        raise EmptySampleError(f"no result tables in {out}; run simulate, fit, regress or xsec first")
    report = out / "report.md"
    report.write_text("\n".join(lines), encoding="utf-8")
    print_colored("SUCCESS", f"{found} tables rendered to {report}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[PipelineConfig, argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "regress": cmd_regress,
    "xsec": cmd_xsec,
    "report": cmd_report,
}


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="pipeline config file (INI)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--seed", type=int, default=default, help="random seed")
    parser.add_argument("--threads", type=int, default=default, help="worker threads")
    parser.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False, help="debug logging"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mislearn", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_flags(parser, suppress=False)
    shared = argparse.ArgumentParser(add_help=False)
    _add_global_flags(shared, suppress=True)
    commands = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub = commands.add_parser(name, parents=[shared], help=func.__doc__)
        if name == "regress":
            sub.add_argument(
                "--suite",
                choices=("auto", "baseline", "passive", "all"),
                default="auto",
                help="which regression suites to run (auto adds passive when a passive file is configured)",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point for the console script; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USER_ERROR

    setup_logging(args.verbose)
    try:
        overrides = {"out": args.out, "seed": args.seed, "threads": args.threads}
        cfg = load_pipeline_config(args.config, overrides)
        if not validate_config(cfg):
            return EXIT_USER_ERROR
        cfg.run.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except KeyboardInterrupt:
        console.print()
        print_colored("ERROR", "Interrupted")
        return EXIT_FAILURE
    except (MislearningError, FileNotFoundError) as e:
        print_colored("ERROR", str(e))
        if isinstance(e, (ValueError, FileNotFoundError)):
            return EXIT_USER_ERROR
        return EXIT_FAILURE
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        print_colored("ERROR", f"Unexpected error: {str(e)}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
