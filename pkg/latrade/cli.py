"""
Command-line entry point: ``latrade {estimate,simulate,bounds,frontier,backtest}``.

Exit codes: 0 on success, 1 when the market model is infeasible or no certificate
establishes a positive expected gain-loss, 2 on invalid input.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from typing import Callable, Optional, Sequence

import numpy as np
from dacite import DaciteError
from rich import box
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from latrade.analytics import BoundReport, CertificateStatus, bound_report
from latrade.backtest import (
    BacktestConfig,
    RateConvention,
    compute_returns,
    load_price_csv,
    run_backtest,
    split_panel,
    training_gain_loss,
)
from latrade.config import (
    AllocationScheme,
    RunConfig,
    SimulationConfig,
    TripleConfig,
    configure_logging,
)
from latrade.estimation import ReturnSample, estimate_spec
from latrade.exceptions import (
    ArrayShapeError,
    EnumerationSizeError,
    EstimationError,
    ModelInfeasibleError,
    ParameterRangeError,
    PriceDataError,
)
from latrade.lattice import LatticeMarketSpec
from latrade.montecarlo import (
    alpha_sweep,
    frontier_frame,
    mc_gain_loss,
    mc_price_fan,
    per_asset_optimal_weights,
    sweep_frontiers,
    trace_optimal_weight,
)
from latrade.utils.dict_utils import dump_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SEMANTIC = 1
EXIT_INPUT = 2

INPUT_ERRORS = (
    PriceDataError,
    ArrayShapeError,
    ParameterRangeError,
    EnumerationSizeError,
    DaciteError,
    json.JSONDecodeError,
    OSError,
)
SEMANTIC_ERRORS = (ModelInfeasibleError, EstimationError)


def parse_floats(text: str) -> list[float]:
    """
    >>> parse_floats("0.1, 0.3")
    [0.1, 0.3]
    """
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers: {text}"
        ) from exc


def parse_grid(text: str) -> list[float]:
    """Expand ``start:stop:step`` (stop included) or a comma-separated list.

    >>> parse_grid("0:1:0.25")
    [0.0, 0.25, 0.5, 0.75, 1.0]
    """
    if ":" not in text:
        return parse_floats(text)
    try:
        start, stop, step = (float(item) for item in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:step: {text}") from exc
    if not step > 0.0 or stop < start:
        raise argparse.ArgumentTypeError(f"empty grid: {text}")
    grid = np.round(np.arange(start, stop + 0.5 * step, step), 12)
    return [float(omega) for omega in grid[grid <= stop + 1e-12]]


def _global_flags() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--paths", type=int, default=10_000, help="Monte Carlo paths")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")
    parser.add_argument("--k", type=int, default=252, help="Horizon in periods")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    return parser


def _triple_flags() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--alpha", type=float, default=0.5, help="Long fraction")
    parser.add_argument(
        "--weights",
        type=parse_floats,
        default=[0.5],
        help="One weight for every asset, or one per asset",
    )
    parser.add_argument(
        "--alloc",
        choices=[scheme.get_value() for scheme in AllocationScheme],
        default="ew",
        help="Capital allocation scheme",
    )
    parser.add_argument("--v0", type=float, default=1.0, help="Initial capital")
    parser.add_argument(
        "--rf-annual", type=float, default=0.0, help="Annual risk-free rate (fraction)"
    )
    parser.add_argument(
        "--rate-convention",
        choices=[convention.get_value() for convention in RateConvention],
        default="simple",
    )
    parser.add_argument("--periods-per-year", type=int, default=252)
    parser.add_argument("--cost-bps", type=float, default=0.0, help="Cost in bps")
    parser.add_argument("--cap-weights", help="JSON ticker -> weight file (cw)")
    parser.add_argument("--train-prices", help="Training price CSV (gl)")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    triple = _triple_flags()
    parser = argparse.ArgumentParser(
        prog="latrade",
        description="Robust long-short trading on generalized lattice markets",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    estimate = commands.add_parser(
        "estimate", parents=[common], help="Fit a market spec to prices"
    )
    estimate.add_argument("input_path", metavar="PRICES.csv")
    estimate.add_argument("--m", type=int, required=True, help="Memory length")
    estimate.add_argument("--out", dest="output_path", required=True)
    estimate.add_argument("--report", dest="report_path")
    estimate.add_argument("--train-end", help="Fit on dates up to this one")

    simulate = commands.add_parser(
        "simulate", parents=[common, triple], help="Monte Carlo gain-loss summary"
    )
    simulate.add_argument("input_path", metavar="SPEC.json")
    simulate.add_argument("--out", dest="output_path", required=True)
    simulate.add_argument("--json", dest="json_path")
    simulate.add_argument("--prices-out")
    simulate.add_argument("--initial-prices", type=parse_floats)

    bounds = commands.add_parser(
        "bounds", parents=[common, triple], help="Worst-case bound and certificates"
    )
    bounds.add_argument("input_path", metavar="SPEC.json")
    bounds.add_argument("--json", dest="json_path")

    frontier = commands.add_parser(
        "frontier", parents=[common, triple], help="Mean-std frontiers over weights"
    )
    frontier.add_argument("input_path", metavar="SPEC.json")
    frontier.add_argument("--grid", type=parse_grid, default=parse_grid("0:1:0.05"))
    frontier.add_argument("--out", dest="output_path", required=True)
    frontier.add_argument("--json", dest="json_path")
    frontier.add_argument("--alphas", type=parse_floats)
    frontier.add_argument("--rf-list", type=parse_floats, help="Annual rates")
    frontier.add_argument("--target-std", type=float)
    frontier.add_argument("--per-asset", action="store_true")
    frontier.add_argument("--top-n", type=int)

    backtest = commands.add_parser(
        "backtest", parents=[common, triple], help="Out-of-sample backtest"
    )
    backtest.add_argument("input_path", metavar="PRICES.csv")
    backtest.add_argument("--out", dest="output_path", required=True)
    backtest.add_argument("--csv", dest="csv_path")
    backtest.add_argument(
        "--train-end", help="Backtest only the dates after this one"
    )
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Resolve parsed arguments into a :class:`RunConfig`."""
    triple = rates = None
    if args.command != "estimate":
        triple = TripleConfig(
            alpha=args.alpha,
            weights=list(args.weights),
            allocation=AllocationScheme(args.alloc),
            v0=args.v0,
            cap_weights=args.cap_weights,
            train_prices=args.train_prices,
        )
        rates = BacktestConfig(
            rf_annual=args.rf_annual,
            convention=RateConvention(args.rate_convention),
            periods_per_year=args.periods_per_year,
            cost_bps=args.cost_bps,
        )
    simulation = SimulationConfig(
        k=args.k,
        n_paths=args.paths,
        seed=args.seed,
        workers=args.workers,
        grid=getattr(args, "grid", None),
        alphas=getattr(args, "alphas", None),
        rf_list=getattr(args, "rf_list", None),
        target_std=getattr(args, "target_std", None),
        per_asset=getattr(args, "per_asset", False),
        top_n=getattr(args, "top_n", None),
    )
    return RunConfig(
        command=args.command,
        input_path=args.input_path,
        output_path=getattr(args, "output_path", None),
        report_path=getattr(args, "report_path", None),
        json_path=getattr(args, "json_path", None),
        csv_path=getattr(args, "csv_path", None),
        prices_out=getattr(args, "prices_out", None),
        initial_prices=getattr(args, "initial_prices", None),
        m=getattr(args, "m", None),
        train_end=getattr(args, "train_end", None),
        triple=triple,
        rates=rates,
        simulation=simulation,
    )


def cmd_estimate(config: RunConfig) -> int:
    panel = load_price_csv(config.input_path)
    if config.train_end is not None:
        panel, _ = split_panel(panel, config.train_end)
    sample = ReturnSample(compute_returns(panel), labels=list(panel.labels))
    spec, report = estimate_spec(sample, config.m)

    spec.to_json(config.output_path)
    if config.report_path is not None:
        dump_json({**report.to_dict(), "config": config.to_dict()}, config.report_path)

    if not report.feasibility.feasible:
        logger.error(
            "Fitted market is infeasible (min slack %.3e)",
            float(np.min(report.feasibility.slack)),
        )
        return EXIT_SEMANTIC
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    spec = LatticeMarketSpec.from_json(config.input_path)
    sim = config.simulation
    triple = config.triple.build(spec.n, config.rates)

    summary = mc_gain_loss(
        triple, spec, sim.k, sim.n_paths, sim.seed, workers=sim.workers
    )
    summary.to_csv(config.output_path)
    if config.json_path is not None:
        dump_json(
            {"config": config.to_dict(), "summary": summary.to_dict()},
            config.json_path,
        )
    if config.prices_out is not None:
        fan = mc_price_fan(
            spec,
            config.initial_prices,
            sim.k,
            sim.n_paths,
            sim.seed,
            workers=sim.workers,
        )
        fan.to_frame().to_csv(config.prices_out, index=False, float_format="%.17g")
    return EXIT_OK


def _status_markup(status: CertificateStatus) -> str:
    style = {
        CertificateStatus.HOLDS: "green",
        CertificateStatus.FAILS: "red",
        CertificateStatus.NOT_APPLICABLE: "dim",
    }[status]
    return f"[{style}]{status.get_value()}[/{style}]"


def render_bound_report(report: BoundReport, console: Optional[Console] = None) -> None:
    """Print the bound and certificate verdicts as a table."""
    console = console or Console()
    table = Table(
        title=f"Expected gain-loss certificates, k = {report.horizon}",
        show_header=True,
        header_style="bold",
        box=box.ROUNDED,
    )
    table.add_column("Check")
    table.add_column("Status")
    table.add_column("Value", justify="right")
    table.add_column("Note")

    bound_status = (
        CertificateStatus.HOLDS if report.bound > 0.0 else CertificateStatus.FAILS
    )
    table.add_row(
        "worst-case bound", _status_markup(bound_status), f"{report.bound:.6g}", ""
    )
    if report.symmetric_bound is not None:
        table.add_row(
            "symmetric bound",
            _status_markup(
                CertificateStatus.HOLDS
                if report.symmetric_bound > 0.0
                else CertificateStatus.FAILS
            ),
            f"{report.symmetric_bound:.6g}",
            "",
        )
    for verdict in report.certificates:
        margin = (
            f"{np.min(verdict.margins):.6g}" if np.size(verdict.margins) else ""
        )
        table.add_row(
            verdict.name, _status_markup(verdict.status), margin, verdict.note or ""
        )
    console.print(table)


def certifies_positive(report: BoundReport) -> bool:
    """True when the bound or any certificate shows ``E[G(k)] > 0``."""
    return (
        report.bound > 0.0
        or (report.symmetric_bound is not None and report.symmetric_bound > 0.0)
        or any(verdict.holds for verdict in report.certificates)
    )


def cmd_bounds(config: RunConfig, console: Optional[Console] = None) -> int:
    spec = LatticeMarketSpec.from_json(config.input_path)
    triple = config.triple.build(spec.n, config.rates)
    report = bound_report(spec, triple, config.simulation.k)

    render_bound_report(report, console)
    if config.json_path is not None:
        dump_json(
            {"config": config.to_dict(), "report": report.to_dict()}, config.json_path
        )
    return EXIT_OK if certifies_positive(report) else EXIT_SEMANTIC


def cmd_frontier(config: RunConfig) -> int:
    spec = LatticeMarketSpec.from_json(config.input_path)
    sim = config.simulation
    base = config.triple.build(spec.n, config.rates)

    triples = {"base": base}
    if sim.alphas:
        triples.update(alpha_sweep(base, sim.alphas))
    for rate in sim.rf_list or []:
        rates = dataclasses.replace(config.rates, rf_annual=rate)
        triples[f"rf_annual={rate:g}"] = rates.apply(base)

    frontiers = sweep_frontiers(
        spec, triples, sim.grid, sim.k, sim.n_paths, sim.seed, workers=sim.workers
    )
    frontier_frame(frontiers).to_csv(
        config.output_path, index=False, float_format="%.17g"
    )

    document: dict = {"config": config.to_dict()}
    if sim.target_std is not None:
        traces = {
            label: trace_optimal_weight(points, sim.target_std)
            for label, points in frontiers.items()
        }
        document["traces"] = {label: t.to_dict() for label, t in traces.items()}
        if sim.per_asset:
            scores = None
            if sim.top_n and config.triple.train_prices is not None:
                scores = training_gain_loss(load_price_csv(config.triple.train_prices))
            per_asset = per_asset_optimal_weights(
                spec,
                base,
                sim.k,
                sim.n_paths,
                sim.target_std,
                sim.seed,
                sim.top_n,
                weight_grid=sim.grid,
                constant_weight=traces["base"].weight if sim.top_n else None,
                training_gain_loss=scores,
                workers=sim.workers,
            )
            document["per_asset"] = per_asset.to_dict()
    if config.json_path is not None:
        dump_json(document, config.json_path)
    return EXIT_OK


def cmd_backtest(config: RunConfig) -> int:
    panel = load_price_csv(config.input_path)
    train_panel = None
    if config.train_end is not None:
        train_panel, panel = split_panel(panel, config.train_end)
    if config.triple.train_prices is not None:
        train_panel = None

    triple = config.triple.build(
        panel.n_assets, config.rates, labels=panel.labels, train_panel=train_panel
    )
    report = run_backtest(triple, compute_returns(panel), labels=panel.labels)

    report.to_json(config.output_path, config=config.to_dict(), dates=panel.dates)
    if config.csv_path is not None:
        report.to_csv(config.csv_path)
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "frontier": cmd_frontier,
    "backtest": cmd_backtest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    errors = Console(stderr=True)

    try:
        config = config_from_args(args)
        config.validate()
        logger.info("Running %s", config.command)
        return COMMANDS[config.command](config)
    except INPUT_ERRORS as exc:
        errors.print(f"[red]error:[/red] {escape(str(exc))}", highlight=False)
        return EXIT_INPUT
    except SEMANTIC_ERRORS as exc:
        errors.print(f"[red]error:[/red] {escape(str(exc))}", highlight=False)
        return EXIT_SEMANTIC


if __name__ == "__main__":
    sys.exit(main())
