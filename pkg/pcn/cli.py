#!/usr/bin/env python3
"""
Command-line front end for PCN experiments.

    pcn run --config topo.ini --seed 1 --out runs/r1
    pcn eval --run runs/r1 --tp 0.2,0.4,0.8 --out report.csv
    pcn acf --series e.txt --diff 1 --max-lag 20
    pcn gen-trace --model poisson --params rate=500 --duration 60 --seed 7 --out bg.trace

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import dotenv
import numpy as np
import pandas as pd

from . import __version__
from .artifacts import read_run_artifacts, write_run_artifacts
from .config import load_config
from .error_handling import VALIDATION_ERRORS, ArtifactError
from .evaluation import DEFAULT_TP_LIST, summarize, sweep
from .forecast import acf, difference, pacf
from .protocol import bottleneck_router
from .simcore import run
from .task_manager import shutdown
from .traces import MODELS, gen_synthetic_trace, parse_model_params, write_trace

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def setup_logging() -> None:
    """Configure the root logger from PCN_LOG_LEVEL."""
    dotenv.load_dotenv()
    name = os.getenv("PCN_LOG_LEVEL", "info").strip().lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger().setLevel(LOG_LEVELS.get(name, logging.INFO))
    if name not in LOG_LEVELS:
        logger.warning(f"Unknown PCN_LOG_LEVEL '{name}', using info")


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got '{text}'")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {value} outside [0, 2^64)")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def _tp_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"t_P list must be comma-separated seconds, got '{text}'")
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"t_P values must be positive, got '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcn", description="PCN load estimation experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Simulate a config and write run artifacts")
    run_parser.add_argument("--config", required=True, help="Simulation config file")
    run_parser.add_argument("--seed", required=True, type=_seed, help="Master seed (u64)")
    run_parser.add_argument("--out", required=True, help="Run directory to write")
    run_parser.set_defaults(handler=cmd_run)

    eval_parser = subparsers.add_parser("eval", help="Sweep t_P over a run and score estimators")
    eval_parser.add_argument("--run", required=True, help="Run directory written by 'pcn run'")
    eval_parser.add_argument("--tp", type=_tp_list, default=list(DEFAULT_TP_LIST),
                             help="Comma-separated t_P values in seconds (default: 0.2,0.4,0.8,1.6,3.2)")
    eval_parser.add_argument("--out", required=True, help="Report CSV to write")
    eval_parser.set_defaults(handler=cmd_eval)

    acf_parser = subparsers.add_parser("acf", help="ACF and PACF of a series file")
    acf_parser.add_argument("--series", required=True, help="File with one value per line")
    acf_parser.add_argument("--diff", type=_nonnegative_int, default=1, help="Differencing order (default: 1)")
    acf_parser.add_argument("--max-lag", type=_nonnegative_int, default=20, help="Largest lag (default: 20)")
    acf_parser.set_defaults(handler=cmd_acf)

    trace_parser = subparsers.add_parser("gen-trace", help="Generate a synthetic background trace")
    trace_parser.add_argument("--model", required=True, choices=MODELS, help="Traffic model")
    trace_parser.add_argument("--params", required=True, help="Model parameters as key=value,...")
    trace_parser.add_argument("--duration", required=True, type=float, help="Trace length in seconds")
    trace_parser.add_argument("--seed", required=True, type=_seed, help="Generator seed (u64)")
    trace_parser.add_argument("--out", required=True, help="Trace file to write")
    trace_parser.set_defaults(handler=cmd_gen_trace, parser=trace_parser)

    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    artifacts = run(config, args.seed)
    write_run_artifacts(artifacts, args.out, args.config)

    estimates = artifacts.estimates
    for source_id in sorted(artifacts.flows):
        rows = estimates[estimates["source_id"] == source_id]
        if rows.empty:
            continue
        last = rows[rows["period_end_time"] == rows["period_end_time"].max()].sort_values("router_index")
        values = [None if pd.isna(v) else float(v) for v in last["e_raw"]]
        router = bottleneck_router(values)
        if router is not None:
            logger.info(f"{source_id}: bottleneck router {router} (estimate {values[router - 1]:.1f})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    artifacts = read_run_artifacts(args.run)
    try:
        report = sweep(artifacts, args.tp, ray_address=os.getenv("PCN_RAY_ADDRESS") or None)
    finally:
        shutdown()
    report.write_csv(args.out)
    for _, row in summarize(report).iterrows():
        logger.info(
            f"{row['estimator']}: {row['cells']} cells, mean RMSE {row['mean_rmse']:.2f}, "
            f"max |bias| {row['max_abs_bias']:.2f}"
        )
    return EXIT_OK


def read_series(path: str) -> np.ndarray:
    """One value per line; blank lines and '#' comments are skipped."""
    if not os.path.isfile(path):
        raise ArtifactError("series file not found", source=path)
    try:
        frame = pd.read_csv(path, header=None, comment="#", skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise ArtifactError("series file is empty", source=path, cause=e)
    except pd.errors.ParserError as e:
        raise ArtifactError("series file must hold one value per line", source=path, cause=e)
    if frame.shape[1] != 1:
        raise ArtifactError("series file must hold one value per line", source=path)
    values = pd.to_numeric(frame.iloc[:, 0], errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ArtifactError(f"value {frame.iloc[bad, 0]!r} is not a finite number", source=path)
    return values


def cmd_acf(args: argparse.Namespace) -> int:
    series = difference(read_series(args.series), args.diff)
    correlations = acf(series, args.max_lag)
    partials = pacf(series, args.max_lag)
    frame = correlations.to_frame("acf")
    frame["pacf"] = partials.values
    frame[["lag", "acf", "pacf", "band"]].to_csv(sys.stdout, index=False, float_format="%.6f")
    return EXIT_OK


def cmd_gen_trace(args: argparse.Namespace) -> int:
    try:
        params = parse_model_params(args.params)
        trace = gen_synthetic_trace(args.model, params, args.duration, args.seed)
    except ValueError as e:
        args.parser.print_usage(sys.stderr)
        logger.error(f"gen-trace: {e}")
        return EXIT_VALIDATION
    write_trace(trace, args.out,
                header=f"model={args.model} params={args.params} duration={args.duration} seed={args.seed}")
    logger.info(f"Wrote {len(trace)} packets to {args.out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION

    try:
        return args.handler(args)
    except VALIDATION_ERRORS as e:
        logger.error(e.format_error())
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
