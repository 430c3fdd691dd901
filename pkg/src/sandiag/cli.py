"""Command-line entry point.

stdout carries data (reports, tables); diagnostics go to stderr.  Exit
codes: 0 success, 1 error, and for `diagnose` specifically 2 when a slowdown
with at least one ranked cause was found, so scripts can branch on it.
Threshold flags override the optional ``diagnose.toml`` defaults file in the
data directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from . import engine, ingest, sim, symptoms
from .engine import EngineConfig
from .errors import SanDiagError

_CONFIG_KEYS = ("theta", "tau", "delta", "k", "floor_s", "interval_s", "history_limit")


def _load_config(data_dir: Path, args: argparse.Namespace) -> EngineConfig:
    config = EngineConfig()
    defaults_path = data_dir / "diagnose.toml"
    if defaults_path.exists():
        try:
            with defaults_path.open("rb") as fh:
                payload = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SanDiagError(f"{defaults_path}: {exc}") from exc
        overrides = {}
        for key in _CONFIG_KEYS:
            if key in payload:
                value = payload[key]
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise SanDiagError(f"{defaults_path}: {key} must be a number, got {value!r}")
                overrides[key] = value
        config = replace(config, **overrides)
    flags = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    if flags:
        config = replace(config, **flags)
    return config


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--theta", type=float, help="relative slowdown threshold (default 0.2)")
    parser.add_argument("--tau", type=float, help="anomaly z-score threshold (default 3.0)")
    parser.add_argument("--delta", type=float, help="operator degradation threshold (default 0.2)")
    parser.add_argument("--k", type=int, help="minimum history length (default 5)")
    parser.add_argument("--floor-s", dest="floor_s", type=float,
                        help="absolute operator degradation floor in seconds (default 1.0)")
    parser.add_argument("--interval-s", dest="interval_s", type=int,
                        help="monitoring interval in seconds (default 300)")
    parser.add_argument("--history-limit", dest="history_limit", type=int,
                        help="most recent runs considered (default 50)")


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario_arg = args.scenario
    path = Path(scenario_arg)
    if path.exists():
        scenario = sim.load_scenario(path)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
    else:
        scenario = sim.load_builtin_scenario(scenario_arg, seed=args.seed)
    truth = sim.generate(scenario, args.out)
    faulted = sum(1 for r in truth.runs if r.causes)
    print(
        f"generated scenario {scenario.name!r} (seed {scenario.seed}): "
        f"{len(truth.runs)} runs, {faulted} with injected faults -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    config = _load_config(data_dir, args)
    store = ingest.RunStore(data_dir)
    topology = ingest.load_topology(data_dir / "topology.json")
    if args.symptoms:
        db = symptoms.load_symptoms_db(args.symptoms)
    else:
        db = symptoms.load_default_symptoms_db()
    report = engine.diagnose(store, args.query, args.run, topology, db, config)
    sys.stdout.write(engine.render_report(report, format=args.format))
    return 2 if report.causes else 0


def _cmd_baseline(args: argparse.Namespace) -> int:
    store = ingest.RunStore(Path(args.data))
    stats = engine.baseline_statistics(store, args.query)
    print(f"query {stats['query_id']}  plan {stats['plan_fingerprint']}  runs {stats['runs']}")
    header = f"{'operator':<20} {'kind':<14} {'n':>4} {'median_s':>10} {'mean_s':>10} {'min_s':>10} {'max_s':>10}"
    print(header)
    print("-" * len(header))
    for row in stats["operators"]:
        print(
            f"{row['op_id']:<20} {row['op_kind']:<14} {row['n']:>4} "
            f"{row['median_s']:>10.3f} {row['mean_s']:>10.3f} {row['min_s']:>10.3f} {row['max_s']:>10.3f}"
        )
    total = stats["total"]
    print(
        f"{'TOTAL':<20} {'':<14} {total['n']:>4} "
        f"{total['median_s']:>10.3f} {total['mean_s']:>10.3f} {total['min_s']:>10.3f} {total['max_s']:>10.3f}"
    )
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    violations = engine.validate_dataset(Path(args.data))
    for violation in violations:
        print(violation)
    if violations:
        print(f"{len(violations)} violation(s) found", file=sys.stderr)
        return 1
    print("dataset is valid", file=sys.stderr)
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    try:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SanDiagError(f"cannot read report {args.report}: {exc}") from exc
    if payload.get("schema") != "diagnosis/1":
        raise SanDiagError(f"{args.report} is not a diagnosis/1 report")
    cause = next((c for c in payload.get("causes", []) if c["cause_id"] == args.cause), None)
    if cause is None:
        known = ", ".join(c["cause_id"] for c in payload.get("causes", [])) or "none"
        raise SanDiagError(f"cause {args.cause!r} not in report (ranked causes: {known})")

    print(f"cause {cause['cause_id']} [{cause['layer']}] from run {payload['run_id']} of {payload['query_id']}")
    print(f"  rank {cause['rank_score']:.3f} = impact {cause['impact']:.3f} x confidence {cause['confidence']:.3f}")
    if cause.get("description"):
        print(f"  {cause['description']}")
    print(f"  locus: {', '.join(cause.get('locus', [])) or '(none)'}")
    if cause.get("satisfied"):
        print("  satisfied predicates:")
        for match in cause["satisfied"]:
            pred = match["predicate"]
            detail = pred.get("metric") or pred.get("event_code") or pred.get("config_key")
            print(
                f"    {pred['kind']} {detail!r} on {pred['target_kind']} "
                f"(weight {pred['weight']:g}{', required' if pred['required'] else ''})"
            )
            for item in match.get("evidence", []):
                print(f"      matched by: {item}")
    if cause.get("missing"):
        print("  missing predicates:")
        for pred in cause["missing"]:
            detail = pred.get("metric") or pred.get("event_code") or pred.get("config_key")
            print(
                f"    {pred['kind']} {detail!r} on {pred['target_kind']} "
                f"(weight {pred['weight']:g}{', required' if pred['required'] else ''})"
            )
    if cause.get("fix"):
        print(f"  suggested fix: {cause['fix']}")
    degraded = payload.get("degraded_operators", [])
    if degraded:
        print("  degraded operators this cause is measured against:")
        for op in degraded:
            print(
                f"    {op['op_id']} ({op['op_kind']}): {op['baseline_median_s']:.2f} -> "
                f"{op['current_s']:.2f} s ({op['delta_s']:+.2f} s)"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sandiag",
        description="Diagnose database query slowdowns across the database and SAN layers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset with injected faults")
    p_sim.add_argument("--scenario", required=True,
                       help="scenario file, or one of: " + ", ".join(sim.builtin_scenario_names()))
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--out", required=True, help="output dataset directory (must be empty)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_diag = sub.add_parser("diagnose", help="diagnose one run of one query")
    p_diag.add_argument("--data", required=True, help="dataset directory")
    p_diag.add_argument("--query", required=True, help="query id")
    p_diag.add_argument("--run", required=True, help="run id")
    p_diag.add_argument("--symptoms", help="symptoms database file (default: bundled database)")
    p_diag.add_argument("--format", choices=("json", "text"), default="text")
    _add_config_flags(p_diag)
    p_diag.set_defaults(func=_cmd_diagnose)

    p_base = sub.add_parser("baseline", help="show baseline statistics for a query")
    p_base.add_argument("--data", required=True)
    p_base.add_argument("--query", required=True)
    p_base.set_defaults(func=_cmd_baseline)

    p_val = sub.add_parser("validate", help="check a dataset for format and graph violations")
    p_val.add_argument("--data", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_exp = sub.add_parser("explain", help="show the full evidence trace for one cause")
    p_exp.add_argument("--report", required=True, help="diagnosis report JSON file")
    p_exp.add_argument("--cause", required=True, help="cause id to explain")
    p_exp.set_defaults(func=_cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SanDiagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
