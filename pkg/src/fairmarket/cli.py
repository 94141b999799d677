"""Command-line entry point: ``fairmarket {compare,pareto,crossval,solve,export-sdp}``.

Flags override values from ``--config``; the config file overrides the
built-in defaults.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .config import SOLVERS, ExperimentConfig, load_config
from .errors import ConfigError, MarketError
from .io import load_trips, sample_batch, sample_suitability
from .market import Batch, MarketState
from .metrics import InterKind, IntraKind
from .objective import ObjectiveConfig, PenaltyConfig
from .sdp import export_shor_sdp
from .solvers import ROUNDING_RULES

PRESETS = {f.name: f for f in ex.COMPARISON_FORMULATIONS}


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple[str, ...]:
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [n for n in names if n not in PRESETS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown formulation(s) {bad}; choose from {sorted(PRESETS)}")
    return names


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    g = p.add_argument_group("data and output")
    g.add_argument("--config", type=Path, help="TOML experiment file (default: none, built-in defaults)")
    g.add_argument("--dataset", type=Path, help="trip CSV (default: from config; required one way or the other)")
    g.add_argument("--column", help="trip-distance column name or 0-based index (default: trip_distance)")
    g.add_argument("--seed", type=int, help="master seed for all randomness (default: 0)")
    g.add_argument("--out", type=Path, help=f"output {out_default} (default: from config, else 'out')")
    s = p.add_argument_group("solver")
    s.add_argument("--solver", choices=SOLVERS, help="exact enumeration or augmented Lagrangian (default: exact)")
    s.add_argument("--phi", type=float, help="penalty multiplier phi1..phi4 for auglag (default: 10)")
    s.add_argument("--restarts", type=int, help="auglag restarts (default: 16)")
    s.add_argument(
        "--rounding",
        choices=ROUNDING_RULES,
        help="auglag rounding: inner product on the best restart, or the best of all restarts' "
        "roundings by exact objective (default: candidates)",
    )


def _objective_flags(p: argparse.ArgumentParser) -> None:
    o = p.add_argument_group("objective")
    o.add_argument("--gamma2", type=float, help="weight on Inter-fairness (default: from the preset or config)")
    o.add_argument("--gamma3", type=float, help="weight on Customer-Care (default: 0)")
    o.add_argument("--intra", choices=[k.value for k in IntraKind], help="Intra measure (default: linearised)")
    o.add_argument("--inter", type=int, choices=[int(k) for k in InterKind], help="Inter measure (default: 3)")
    o.add_argument("--alpha", type=float, help="alpha for --intra ge-alpha (default: none)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairmarket",
        description="Fair two-sided market clearing: experiments, single-batch solves and SDP export.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parser.subcommands = sub.choices

    p = sub.add_parser("compare", help="compare the four formulations over repeated runs")
    _common(p, "directory")
    p.add_argument("--runs", type=int, help="runs per formulation (default: 30)")
    p.add_argument(
        "--formulation",
        type=_names,
        help=f"comma-separated subset of {sorted(PRESETS)} (default: all four)",
    )

    p = sub.add_parser("pareto", help="Intra/Inter trade-off sweep with Pareto fronts")
    _common(p, "directory")
    p.add_argument("--gamma1", type=_floats, help="comma-separated Intra weights (default: 0.5,0.6,0.7,0.8,0.9)")
    p.add_argument("--runs", type=int, help="runs per Intra weight (default: 50)")
    p.add_argument("--baseline-runs", type=int, help="runs of the Intra-only baseline (default: 250)")
    p.add_argument("--inter", type=int, choices=[int(k) for k in InterKind], help="Inter measure optimised (default: 3)")

    p = sub.add_parser("crossval", help="one run on each of many freshly sampled batches")
    _common(p, "directory")
    p.add_argument("--trials", type=int, help="number of trials (default: 100)")
    p.add_argument("--formulation", choices=sorted(PRESETS), help="preset objective (default: intra5+inter3)")
    p.add_argument("--gamma1", type=float, help="weight on Intra-fairness (default: from the preset or config)")
    _objective_flags(p)

    p = sub.add_parser("solve", help="clear one sampled batch and print the assignment")
    _common(p, "(unused; results go to stdout)")
    p.add_argument("--formulation", choices=sorted(PRESETS), help="preset objective (default: config objective)")
    p.add_argument("--gamma1", type=float, help="weight on Intra-fairness (default: from the preset or config)")
    _objective_flags(p)

    p = sub.add_parser("export-sdp", help="write the Shor SDP relaxation of one sampled batch")
    _common(p, "directory")
    p.add_argument("--formulation", choices=sorted(PRESETS), help="preset objective (default: intra5-only)")
    p.add_argument("--gamma1", type=float, help="weight on Intra-fairness (default: from the preset or config)")
    p.add_argument("--name", default="shor.dat-s", help="file name inside --out (default: %(default)s)")
    _objective_flags(p)
    return parser


def _config(args, parser) -> ExperimentConfig:
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        over = {
            "dataset": args.dataset,
            "column": args.column,
            "seed": args.seed,
            "output": args.out,
            "solver": args.solver,
        }
        if args.column is not None and args.column.isdigit():
            over["column"] = int(args.column)
        if args.phi is not None:
            over["penalty"] = PenaltyConfig.uniform(args.phi)
        aug = {k: getattr(args, k) for k in ("restarts", "rounding") if getattr(args, k) is not None}
        if aug:
            over["auglag"] = replace(cfg.auglag, **aug)
        cfg = cfg.with_overrides(**over)
    except ConfigError as exc:
        parser.error(str(exc))
    if cfg.dataset is None:
        parser.error("no dataset given (use --dataset or set 'dataset' in the config file)")
    return cfg


def _objective(args, base: ObjectiveConfig) -> ObjectiveConfig:
    if getattr(args, "formulation", None):
        base = PRESETS[args.formulation].objective
    over = {
        k: getattr(args, k, None)
        for k in ("gamma1", "gamma2", "gamma3", "intra", "inter", "alpha")
        if getattr(args, k, None) is not None
    }
    return replace(base, **over)


def _report_lines(report: ex.FairnessReport) -> list[str]:
    return [f"  {k:<7} {v:.12g}" for k, v in report.as_dict().items()]


def _cmd_compare(args, cfg, trips, spec):
    names = args.formulation or tuple(PRESETS)
    runs = args.runs if args.runs is not None else cfg.runs
    res = ex.run_comparison(spec, trips, runs=runs, seed=cfg.seed, formulations=[PRESETS[n] for n in names])
    out = Path(cfg.output)
    ex.write_runs_csv(out / "compare_runs.csv", res.records)
    ex.write_timings_csv(out / "compare_timings.csv", res.records)
    ex.write_json(out / "compare_summary.json", res.to_json())
    print(f"{len(res.records)} runs -> {out}")
    for name, ms in res.summary.items():
        print(f"  {name:<14} inter3 {ms['inter3']['mean']:.6g} +- {ms['inter3']['std']:.3g}")
    if res.anova is not None:
        print(f"  ANOVA inter3: F = {res.anova.statistic:.4g}, p = {res.anova.pvalue:.3g}")
    if res.welch is not None:
        print(f"  Welch inter3 (intra5+inter3 vs intra5-only): t = {res.welch.statistic:.4g}, p = {res.welch.pvalue:.3g}")


def _cmd_pareto(args, cfg, trips, spec):
    res = ex.trade_off_sweep(
        spec,
        trips,
        gamma1_values=args.gamma1 or cfg.gamma1_values,
        runs_per_gamma=args.runs if args.runs is not None else cfg.runs_per_gamma,
        baseline_runs=args.baseline_runs if args.baseline_runs is not None else cfg.baseline_runs,
        seed=cfg.seed,
        inter=InterKind(args.inter or cfg.objective.inter),
    )
    out = Path(cfg.output)
    records = res.combined + res.baseline
    ex.write_runs_csv(out / "pareto_runs.csv", records)
    ex.write_timings_csv(out / "pareto_timings.csv", records)
    ex.write_json(out / "pareto_summary.json", res.to_json())
    print(f"{len(records)} points ({len(res.combined)} combined, {len(res.baseline)} baseline) -> {out}")
    for (a, b), frac in res.dominated_fraction.items():
        print(f"  {a} vs {b}: baseline dominated {frac:.1%}, front size {len(res.fronts[(a, b)])}")


def _cmd_crossval(args, cfg, trips, spec):
    default = ex.combined(0.5, InterKind.INTER3, "intra5+inter3").objective
    obj = _objective(args, default)
    name = args.formulation or ("intra5+inter3" if obj == default else obj.label)
    res = ex.cross_validate(
        spec,
        trips,
        trials=args.trials if args.trials is not None else cfg.trials,
        seed=cfg.seed,
        formulation=ex.Formulation(name, obj),
    )
    out = Path(cfg.output)
    ex.write_runs_csv(out / "crossval_runs.csv", res.records)
    ex.write_timings_csv(out / "crossval_timings.csv", res.records)
    ex.write_json(out / "crossval_summary.json", res.to_json())
    print(f"{len(res.records)} trials -> {out}")


def _sample_instance(cfg, trips, spec):
    payments = sample_batch(spec.usable_trips(trips), spec.batch_size, ex.run_rng(cfg.seed, "payments", 0))
    d = sample_suitability(spec.batch_size, spec.workers, ex.run_rng(cfg.seed, "suitability", 0), *spec.d_range)
    return payments, d


def _cmd_solve(args, cfg, trips, spec):
    obj = _objective(args, cfg.objective)
    payments, d = _sample_instance(cfg, trips, spec)
    res, report = ex.clear_batch(spec, ex.Formulation(obj.label, obj), payments, d, ex.derive_seed(cfg.seed, "solver", 0))
    print(f"objective   {obj.label}")
    print(f"solver      {spec.solver}")
    print(f"seed        {cfg.seed}")
    print("payments    " + " ".join(f"{p:.6g}" for p in payments))
    print("assignment  (job -> worker [subgroup], utility)")
    labels = spec.labels
    for i, j in enumerate(res.assignment.chosen_workers()):
        print(f"  job {i} -> worker {j} [{labels[j]}]  {res.assignment.utilities[j]:.12g}")
    print(f"value       {res.objective:.12g}")
    print("fairness (post hoc)")
    print("\n".join(_report_lines(report)))


def _cmd_export(args, cfg, trips, spec):
    obj = _objective(args, cfg.objective if args.config else ex.BASELINE.objective)
    payments, d = _sample_instance(cfg, trips, spec)
    state = MarketState.new(spec.labels)
    path, side = export_shor_sdp(state, Batch(payments, d), obj, spec.penalty, Path(cfg.output) / args.name)
    print(f"wrote {path} and {side}")


COMMANDS = {
    "compare": _cmd_compare,
    "pareto": _cmd_pareto,
    "crossval": _cmd_crossval,
    "solve": _cmd_solve,
    "export-sdp": _cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _config(args, parser.subcommands[args.command])
    try:
        trips = load_trips(cfg.dataset, cfg.column)
        spec = ex.TrialSpec.from_config(cfg)
        COMMANDS[args.command](args, cfg, trips, spec)
    except (MarketError, OSError) as exc:
        print(f"fairmarket {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
