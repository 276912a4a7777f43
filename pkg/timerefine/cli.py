"""
Command-line front end for timerefine.

Subcommands:

    analyze   run the statistical pipeline on every label and print a summary
    refine    choose refinements with a search strategy and write the refined log
    synth     generate a synthetic log from a TOML spec
    density   write the histogram and fitted density of one label as CSV
    apply     replay the plan stored in a run report on a log

Example usage:

    python -m timerefine analyze kasteren.csv --label-column sensor --partition-key address
    python -m timerefine refine kasteren.csv --strategy greedy --k 2 --out refined.csv --report run.json

Exit codes: 0 on success, 2 for unreadable input or invalid arguments, 3
when exhaustive search is asked to enumerate more labels than its cap.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .circstats import to_radians
from .config import WATSON_RULES, RefinementConfig
from .controlflow import EvaluationMode
from .density import density_table, write_density_csv
from .errors import InputError, RefinementError, SearchCapError
from .eventlog import (
    DAY,
    NO_CALENDAR,
    ColumnConfig,
    EventLog,
    PartitionSpec,
    parse_csv,
    parse_time_string,
    parse_xes,
    partition,
    write_csv,
    write_xes,
)
from .mixture import select_components
from .report import build_report, format_candidates, format_plan, to_json
from .search import Strategy, apply_plan, generate_candidates, plan_from_dict, refine
from .sources import detect_format, read_input
from .synth import generate, load_spec, with_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s - %(message)s"
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3


def configure_logging(verbose: int, quiet: bool) -> None:
    root = logging.getLogger("timerefine")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False
    if quiet:
        root.setLevel(logging.WARNING)
    elif verbose:
        root.setLevel(logging.DEBUG)
    else:
        root.setLevel(logging.INFO)


# -- argument parsing -------------------------------------------------------------------

def _input_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="event log path or http(s) URL (CSV or XES)")
    p.add_argument("--format", choices=("csv", "xes"), help="input format (default: from the extension)")
    p.add_argument("--timestamp-column", default="timestamp")
    p.add_argument("--label-column", default="label")
    p.add_argument("--id-column", default=None)
    p.add_argument("--timestamp-format", default=None, help="strptime format (default: ISO-8601)")
    p.add_argument("--partition-key", action="append", default=[], help="attribute that identifies a case")
    p.add_argument("--no-day-partition", action="store_true", help="do not split cases by calendar day")
    p.add_argument("--day-boundary", default="00:00", help="HH:MM at which a new day starts")


def _pipeline_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="TOML file with a [refinement] table")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-components", type=int, default=None)
    p.add_argument("--delta-bic", type=float, default=None)
    p.add_argument("--mc-samples", type=int, default=None)
    p.add_argument("--bootstrap-samples", type=int, default=None)
    p.add_argument("--min-events", type=int, default=None)
    p.add_argument("--mode", choices=[m.value for m in EvaluationMode], default=None)
    p.add_argument("--watson-rule", choices=WATSON_RULES, default=None)
    p.add_argument("--watson-bootstrap", type=int, default=None)
    p.add_argument("--no-end-token", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timerefine", description="Time-based label refinement of event logs")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the statistical pipeline per label")
    _input_arguments(p)
    _pipeline_arguments(p)
    p.add_argument("--label", action="append", default=None, help="analyse only this label (repeatable)")
    p.add_argument("--report", default=None, help="write a JSON run report here")

    p = sub.add_parser("refine", help="select refinements and write the refined log")
    _input_arguments(p)
    _pipeline_arguments(p)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.GREEDY.value)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--beam-size", type=int, default=3)
    p.add_argument("--stop-on-ig", action="store_true")
    p.add_argument("--exhaustive-cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("csv", "xes"), default=None)
    p.add_argument("--report", default=None)

    p = sub.add_parser("synth", help="generate a synthetic log")
    p.add_argument("spec", help="TOML spec file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.add_argument("--out-format", choices=("csv", "xes"), default=None)

    p = sub.add_parser("density", help="histogram and fitted density of one label")
    _input_arguments(p)
    _pipeline_arguments(p)
    p.add_argument("--label", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("apply", help="replay a saved plan")
    _input_arguments(p)
    p.add_argument("--plan", required=True, help="run report (or plan) JSON written by refine")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("csv", "xes"), default=None)
    return parser


# -- helpers -----------------------------------------------------------------------------

def load_log(args: argparse.Namespace) -> EventLog:
    data = read_input(args.input)
    fmt = args.format or detect_format(args.input)
    if fmt == "xes":
        log = parse_xes(data)
    else:
        columns = ColumnConfig(args.timestamp_column, args.label_column, args.id_column)
        try:
            boundary = parse_time_string(args.day_boundary)
        except ValueError as exc:
            raise InputError(f"--day-boundary: {exc}") from exc
        spec = PartitionSpec(
            tuple(args.partition_key),
            NO_CALENDAR if args.no_day_partition else DAY,
            boundary,
        )
        log = partition(parse_csv(data, columns, args.timestamp_format), spec)
    logger.info("read %d events in %d traces, %d labels from %s",
                len(log), len(log.traces), len(log.label_alphabet), args.input)
    return log


def load_config(args: argparse.Namespace) -> RefinementConfig:
    return RefinementConfig.from_toml(
        args.config,
        alpha=args.alpha,
        seed=args.seed,
        max_components=args.max_components,
        delta_bic=args.delta_bic,
        mc_samples=args.mc_samples,
        bootstrap_samples=args.bootstrap_samples,
        min_events=args.min_events,
        mode=args.mode,
        watson_rule=args.watson_rule,
        watson_bootstrap=args.watson_bootstrap,
        end_token=False if args.no_end_token else None,
        exhaustive_cap=getattr(args, "exhaustive_cap", None),
    )


def write_log(log: EventLog, path: str, fmt: Optional[str]) -> None:
    fmt = fmt or detect_format(path)
    Path(path).write_bytes(write_xes(log) if fmt == "xes" else write_csv(log))
    logger.info("wrote %d events to %s", len(log), path)


def _inputs(args: argparse.Namespace) -> dict:
    return {"input": args.input, "format": args.format or detect_format(args.input)}


# -- commands ---------------------------------------------------------------------------

def cmd_analyze(args: argparse.Namespace) -> int:
    log = load_log(args)
    config = load_config(args)
    if args.label:
        missing = sorted(set(args.label) - log.label_alphabet)
        if missing:
            raise InputError(f"label(s) {missing} do not occur in the log")
    candidates = generate_candidates(log, config, args.label)
    print(format_candidates(candidates))
    if args.report:
        report = build_report("analyze", config, _inputs(args), candidates)
        Path(args.report).write_text(to_json(report), encoding="utf-8")
    return EXIT_OK


def cmd_refine(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise InputError("--k must be at least 1")
    log = load_log(args)
    config = load_config(args)
    # Analyse every label once; the strategies reuse the fitted clusterings
    candidates = generate_candidates(log, config)
    plan = refine(log, candidates, args.strategy, args.k, args.beam_size, args.stop_on_ig, config)
    # Replay the chosen steps on the original log
    refined = apply_plan(log, plan)
    out_format = args.out_format or args.format or detect_format(args.input)
    write_log(refined, args.out, out_format)
    print(format_plan(plan))
    outputs = {"log": args.out}
    if args.report:
        outputs["report"] = args.report
        report = build_report("refine", config, _inputs(args), candidates, plan, outputs)
        Path(args.report).write_text(to_json(report), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = with_seed(spec, args.seed)
    log = generate(spec)
    write_log(log, args.out, args.out_format)
    print(f"seed: {spec.seed}")
    return EXIT_OK


def cmd_density(args: argparse.Namespace) -> int:
    log = load_log(args)
    config = load_config(args)
    events = log.label_events(args.label)
    if not events:
        raise InputError(f"label {args.label!r} does not occur in the log")
    angles = np.array([to_radians(e.hour) for e in events])
    selection = select_components(angles, config.max_components, config.delta_bic, config.seed, **config.em_options)
    Path(args.out).write_bytes(write_density_csv(density_table(angles, selection.model)))
    logger.info("density of %r (m=%d) written to %s", args.label, selection.chosen, args.out)
    return EXIT_OK


def cmd_apply(args: argparse.Namespace) -> int:
    log = load_log(args)
    try:
        document = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read plan {args.plan}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.plan}: {exc}") from exc
    # Accept a full run report or a bare plan
    plan = plan_from_dict(document.get("plan", document))
    refined = apply_plan(log, plan)
    write_log(refined, args.out, args.out_format or args.format or detect_format(args.input))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "refine": cmd_refine,
    "synth": cmd_synth,
    "density": cmd_density,
    "apply": cmd_apply,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    configure_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except SearchCapError as exc:
        logger.error("%s", exc)
        return EXIT_CAP
    except RefinementError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
