"""Command line front end: init, run, report, demo.

Exit codes: 0 success, 1 usage or configuration error, 2 completed with
failed cells (partial results are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .configfile import ConfigError, read_config, write_default_config
from .harness import (ExperimentConfig, Report, aggregate_cells,
                      read_records_csv, run_experiment, write_records_csv,
                      write_report_json)
from .scm import four_node_demo_scm

SEED_ENV_VAR = "WORKBENCH_SEED"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scmbench",
        description="Simulated benchmark of parent identification under interventions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="write a commented default config file")
    p_init.add_argument("--out", default="scmbench.ini", help="config path to create")
    p_init.add_argument("--force", action="store_true", help="overwrite an existing file")

    p_run = sub.add_parser("run", help="run the configured sweep")
    p_run.add_argument("--config", required=True, help="config file from 'init'")
    p_run.add_argument("--out", default="scmbench-out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="master seed override (wins over config and environment)")
    p_run.add_argument("--threads", type=_positive_int, default=1,
                       help="worker processes; results are identical for any value")
    p_run.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_rep = sub.add_parser("report", help="render the results table from a records CSV")
    p_rep.add_argument("csv", help="records.csv produced by 'run'")
    p_rep.add_argument("--out", default=None, help="table file (default: table.txt beside the CSV)")

    p_demo = sub.add_parser("demo", help="run both methods once on the fixed 4-node model")
    p_demo.add_argument("--out", default="scmbench-demo", help="output directory")
    p_demo.add_argument("--seed", type=int, default=None, help="master seed override")
    p_demo.add_argument("--threads", type=_positive_int, default=1)
    p_demo.add_argument("--force", action="store_true", help="overwrite existing outputs")
    return parser


def _resolve_seed(flag_seed: int | None, config_seed: int | None) -> int:
    """Priority: --seed flag, then config file, then WORKBENCH_SEED, then 0."""
    if flag_seed is not None:
        return flag_seed
    if config_seed is not None:
        return config_seed
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"{SEED_ENV_VAR} must be >= 0")
    return value


def render_table(cells: dict, methods: list[str] | None = None,
                 levels: list[int] | None = None) -> str:
    """Fixed-width table of 'mean_js (fwer)' cells, high confounder counts first."""
    if methods is None:
        methods = list(cells)
    if levels is None:
        seen = {lvl for by_level in cells.values() for lvl in by_level}
        levels = sorted(seen, reverse=True)

    def fmt(stats: dict | None) -> str:
        if not stats or stats["n"] == 0:
            return "-"
        return f"{stats['mean_js']:.3f} ({stats['fwer']:.2f})"

    def label(level: int) -> str:
        return f"{level} confounder" + ("" if level == 1 else "s")

    header = ["method"] + [label(lvl) for lvl in levels]
    rows = [[m] + [fmt(cells.get(m, {}).get(lvl)) for lvl in levels] for m in methods]
    widths = [max(len(line[i]) for line in [header] + rows) for i in range(len(header))]
    out = ["  ".join(cell.ljust(w) for cell, w in zip(header, widths)).rstrip()]
    for row in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(out)


def _prepare_outputs(out_dir: Path, force: bool) -> dict[str, Path]:
    files = {name: out_dir / name
             for name in ("records.csv", "report.json", "table.txt")}
    clashes = [str(p) for p in files.values() if p.exists()]
    if clashes and not force:
        raise ConfigError(
            "outputs exist (use --force): " + ", ".join(clashes))
    out_dir.mkdir(parents=True, exist_ok=True)
    return files


def _emit(report: Report, files: dict[str, Path]) -> str:
    write_records_csv(report.records, files["records.csv"])
    write_report_json(report, files["report.json"])
    table = render_table(report.cells,
                         methods=list(report.config["methods"]),
                         levels=sorted(report.config["confounder_levels"], reverse=True))
    files["table.txt"].write_text(table + "\n")
    return table


def _cmd_init(args: argparse.Namespace) -> int:
    path = Path(args.out)
    if path.exists() and not args.force:
        print(f"error: {path} exists (use --force)", file=sys.stderr)
        return 1
    write_default_config(path)
    print(f"wrote {path}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg, seed_present = read_config(args.config)
    seed = _resolve_seed(args.seed, cfg.master_seed if seed_present else None)
    cfg = dataclasses.replace(cfg, master_seed=seed)
    files = _prepare_outputs(Path(args.out), args.force)
    report = run_experiment(cfg, threads=args.threads)
    table = _emit(report, files)
    print(table)
    if report.errors:
        print(f"warning: {len(report.errors)} cell(s) failed; see report.json",
              file=sys.stderr)
        return 2
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        records = read_records_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not records:
        print("error: no records in CSV", file=sys.stderr)
        return 1
    methods = list(dict.fromkeys(r.method for r in records))
    levels = sorted({r.confounders for r in records}, reverse=True)
    cells = aggregate_cells(records, tuple(methods), tuple(levels))
    table = render_table(cells, methods, levels)
    out_path = Path(args.out) if args.out else Path(args.csv).parent / "table.txt"
    out_path.write_text(table + "\n")
    print(table)
    return 0


def _cmd_demo(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed, None)
    cfg = ExperimentConfig(
        num_dags=1,
        samples_per_env=2000,
        confounder_levels=(0,),
        methods=("iid", "icp"),
        master_seed=seed,
        fixed_scm=four_node_demo_scm(),
    )
    files = _prepare_outputs(Path(args.out), args.force)
    report = run_experiment(cfg, threads=args.threads)
    table = _emit(report, files)

    def show(nodes: frozenset[int]) -> str:
        return "{" + ", ".join(str(v) for v in sorted(nodes)) + "}"

    truth = next((r.pa0 for r in report.records), frozenset())
    print(f"truth: {show(truth)}")
    for record in report.records:
        print(f"{record.method}:   {show(record.z)}")
    print()
    print(table)
    if report.errors:
        print(f"warning: {len(report.errors)} cell(s) failed", file=sys.stderr)
        return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; --help exits with 0
        return 0 if exc.code == 0 else 1
    try:
        if args.command == "init":
            return _cmd_init(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_demo(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
