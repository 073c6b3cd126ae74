"""Command-line entry point.

    arckdrone run --scenario find_phone --pipeline flexifly --trials 70 --seed 7
    arckdrone bench-clustering --k 1..10
    arckdrone bench-landing --samples 10000
    arckdrone report --scenarios all --trials 70
    arckdrone validate-scenario my_room.toml
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .evaluation import (BENCHMARK_SCENARIOS, PIPELINES, RunConfig, UnsupportedPipeline, bench_clustering,
                         bench_landing, compute_metrics, output_dir, report, rows_to_csv, rows_to_json, run_trials,
                         swap_trials, system_metrics, module_for)
from .scenario import ScenarioParseError, builtin_names, load_scenario, resolve


def parse_k_range(text: str) -> list[int]:
    """``"1..10"``, ``"3"`` or ``"1,2,5"`` -> sorted list of positive ints."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k range {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"bad k range {text!r}")
    return sorted(set(ks))


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="arckdrone", description="Simulated drone-assisted sensing benchmarks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run trials of one scenario through one pipeline")
    r.add_argument("--scenario", required=True, help="shipped scenario name or path to a TOML/JSON file")
    r.add_argument("--pipeline", required=True, choices=PIPELINES)
    r.add_argument("--trials", type=_positive, default=70)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=None, help="output directory (default $ARCKDRONE_OUTPUT_DIR or ./arckdrone-out)")

    b = sub.add_parser("bench-clustering", help="recall of the crop pipeline versus k")
    b.add_argument("--k", type=parse_k_range, default=parse_k_range("1..10"))
    b.add_argument("--scenes", type=_positive, default=100)
    b.add_argument("--draws", type=_positive, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)

    ld = sub.add_parser("bench-landing", help="aligned-landing rate per platform and connector swap trials")
    ld.add_argument("--samples", type=_positive, default=10_000)
    ld.add_argument("--seed", type=int, default=0)
    ld.add_argument("--offset-sigma", type=float, default=0.02)
    ld.add_argument("--yaw-sd", type=float, default=10.0)
    ld.add_argument("--out", default=None)

    rp = sub.add_parser("report", help="Table-3/Table-4 reports over several scenarios")
    rp.add_argument("--scenarios", default="all", help="comma-separated names/paths, or 'all' for the nine tasks")
    rp.add_argument("--pipelines", default=",".join(PIPELINES))
    rp.add_argument("--trials", type=_positive, default=70)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", default=None)

    v = sub.add_parser("validate-scenario", help="parse and check scenario files")
    v.add_argument("paths", nargs="+")
    sub.add_parser("list-scenarios", help="names of the shipped scenarios")
    return ap


def _write(out: Path, name: str, rows, columns) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{name}.csv", out / f"{name}.json"]
    paths[0].write_text(rows_to_csv(rows, columns))
    paths[1].write_text(rows_to_json(rows))
    return paths


def cmd_run(a) -> int:
    sc = resolve(a.scenario)
    out = output_dir(a.out)
    cfg = RunConfig(a.scenario, a.pipeline, a.trials, a.seed, str(out))
    outs = run_trials(cfg, sc)
    m = compute_metrics(outs)
    print(f"{sc.name} {a.pipeline}: P={m.precision:.4f} R={m.recall:.4f} F1={m.f1:.4f} "
          f"accuracy={m.accuracy:.4f} trials={m.trials}")
    print(f"reports in {out / sc.name / a.pipeline}")
    return 0


def cmd_bench_clustering(a) -> int:
    pts = bench_clustering(a.k, a.scenes, a.draws, a.seed)
    for p in pts:
        print(f"k={p.k:2d} recall={p.recall:.4f} crops={p.mean_crops:.2f} trials={p.trials}")
    if a.out is not None:
        _write(Path(a.out), "recall_vs_k", pts, ["k", "recall", "trials", "mean_crops"])
    return 0


def cmd_bench_landing(a) -> int:
    from .ground_station import TouchdownDistribution
    rows = bench_landing(a.samples, a.seed, TouchdownDistribution(a.offset_sigma, a.yaw_sd))
    for r in rows:
        print(f"{r.platform:15s} aligned={r.success_rate:.4f} samples={r.samples}")
    for conn in ("magnetic", "mechanical"):
        print(f"{conn:15s} swaps={swap_trials(conn, 10)}/10")
    if a.out is not None:
        _write(Path(a.out), "landing", rows, ["platform", "success_rate", "samples"])
    return 0


def cmd_report(a) -> int:
    names = list(BENCHMARK_SCENARIOS) if a.scenarios == "all" else [s for s in a.scenarios.split(",") if s]
    pipes = [p for p in a.pipelines.split(",") if p]
    for p in pipes:
        if p not in PIPELINES:
            print(f"arckdrone report: unknown pipeline {p!r}", file=sys.stderr)
            return 2
    rows, sys_rows = [], []
    for n in names:
        sc = resolve(n)
        for p in pipes:
            try:
                outs = run_trials(RunConfig(n, p, a.trials, a.seed), sc)
            except UnsupportedPipeline as e:
                print(f"skip {sc.name}/{p}: {e}", file=sys.stderr)
                continue
            rows.append(compute_metrics(outs))
            if p == "flexifly":
                sys_rows.append(system_metrics(outs, module_for(sc)))
    out = output_dir(a.out)
    for f in report(rows, out, sys_rows):
        print(f)
    return 0


def cmd_validate(a) -> int:
    bad = 0
    for p in a.paths:
        try:
            sc = load_scenario(p) if Path(p).exists() or Path(p).suffix else resolve(p)
        except ScenarioParseError as e:
            print(f"error: {e}", file=sys.stderr)
            bad += 1
            continue
        print(f"ok: {p} ({sc.name}, template {sc.template})")
    return 1 if bad else 0


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        if a.cmd == "run":
            return cmd_run(a)
        if a.cmd == "bench-clustering":
            return cmd_bench_clustering(a)
        if a.cmd == "bench-landing":
            return cmd_bench_landing(a)
        if a.cmd == "report":
            return cmd_report(a)
        if a.cmd == "validate-scenario":
            return cmd_validate(a)
        if a.cmd == "list-scenarios":
            print(json.dumps(builtin_names()))
            return 0
    except ScenarioParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except UnsupportedPipeline as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
