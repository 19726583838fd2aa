"""Command line entry point.

Exit codes: 0 success, 2 invalid scenario or arguments, 3 unusable input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .runner import cdf_csv, compare_systems, comparison_csv, comparison_labels, epochs_csv, run_scenario, write_outputs
from .scenario import SYSTEMS, DataError, ScenarioError, builtin_scenarios, load_scenario

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_DATA = 3

log = logging.getLogger("hapsgnss")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def _systems(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SYSTEMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown system(s) {bad}; choose from {', '.join(SYSTEMS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hapsgnss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=_seed, help="override the scenario's master seed")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads (default 1)")

    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("scenario", help="scenario TOML file or shipped scenario name")
    run.add_argument("--system", choices=SYSTEMS, help="override the scenario's system configuration")

    cmp_ = sub.add_parser("compare", parents=[common], help="run several system configurations side by side")
    cmp_.add_argument("scenarios", nargs="+", help="scenario files or shipped names")
    cmp_.add_argument(
        "--systems",
        type=_systems,
        help="comma separated systems to run for every scenario "
        "(default: each scenario's own system, or all four for a single scenario)",
    )

    sub.add_parser("list", help="list shipped scenarios")
    return parser


def _load(name: str, seed: int | None):
    sc = load_scenario(name)
    return replace(sc, seed=seed) if seed is not None else sc


def _cmd_run(args) -> int:
    sc = _load(args.scenario, args.seed)
    if args.system:
        sc = sc.for_system(args.system)
    result = run_scenario(sc, threads=args.threads)
    write_outputs(result, args.out)
    s = result.summary
    print(
        f"{sc.name} [{sc.system}] epochs={s['n_epochs']} converged={s['n_converged']} "
        f"median={s['median_err3d_m']} p95={s['p95_err3d_m']} -> {args.out}"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    loaded = [_load(name, args.seed) for name in args.scenarios]
    systems = args.systems or (list(SYSTEMS) if len(loaded) == 1 else None)
    scenarios = [sc.for_system(s) for sc in loaded for s in systems] if systems else loaded
    results, table = compare_systems(scenarios, threads=args.threads)
    labels = comparison_labels(results)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    for res, label in zip(results, labels):
        sub = out / label.replace(":", "__")
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "epochs.csv").write_bytes(epochs_csv(res).encode("utf-8"))
        (sub / "summary.json").write_bytes((json.dumps(res.summary, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    (out / "cdf.csv").write_bytes(cdf_csv(results, labels).encode("utf-8"))
    (out / "comparison.csv").write_bytes(comparison_csv(table).encode("utf-8"))
    for row in table:
        print(f"{row['system']:<40} median={row['p50_m']} p95={row['p95_m']} conv={row['convergence_rate']:.3f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.command == "list":
            print("\n".join(builtin_scenarios()))
            return EXIT_OK
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
