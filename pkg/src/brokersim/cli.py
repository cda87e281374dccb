"""Command-line entry point.

Subcommands: simulate (one run, full artifacts), sweep (grid of runs, one
CSV), analyze (speedup table), plan (mitigation options), tco (design
comparison).  Exit codes: 0 success, 1 configuration error, 2 unstable run
under --require-stable.  All artifact files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import replace

from . import analytic, tco
from .runner import DEFAULT_SIM_TIME, DEFAULT_WARMUP, run_scenario
from .scenario import (
    BUILTIN_NAMES,
    ScenarioError,
    ScenarioSpec,
    ValidationError,
    builtin_scenario,
    load_scenario,
    scaled,
)
from .stages import frameset_delays
from .telemetry import utilization_rows, write_frames_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2

SWEEP_COLUMNS = (
    "scenario", "accel", "drives", "brokers", "scale_factor", "seed",
    "frames", "throughput_fps", "mean_latency_s", "p99_latency_s",
    "wait_fraction", "stable", "binding_resource", "rho_storage_analytic",
)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit_(message)


class SystemExit_(Exception):
    def __init__(self, message):
        self.message = message
        super().__init__(message)


def _atomic_write(path: str, content: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_scenario(ref: str, scale: int = 1) -> ScenarioSpec:
    if ref in BUILTIN_NAMES:
        spec = builtin_scenario(ref)
    else:
        if not os.path.exists(ref):
            raise ConfigError(
                f"scenario {ref!r} is neither a builtin "
                f"({', '.join(BUILTIN_NAMES)}) nor a file"
            )
        with open(ref) as fh:
            spec = load_scenario(fh.read())
    if scale > 1:
        spec = scaled(spec, scale)
    return spec


def resource_class(name: str | None) -> str | None:
    """Collapse an instance name like broker-2-storage to its class."""
    if name is None:
        return None
    parts = name.split("-")
    if parts[0] in ("broker", "producer", "consumer") and len(parts) > 2:
        return parts[0] + "-" + "-".join(parts[2:])
    return name


def _summary_dict(res) -> dict:
    report = res.report
    summary = {
        "scenario": res.spec.name,
        "acceleration": res.accel,
        "seed": res.seed,
        "sim_time_s": res.horizon_ns / 1e9,
        "warmup_s": res.warmup_ns / 1e9,
        "throughput_fps": report.throughput,
        "samples": report.samples,
        "zero_fanout_frames": report.zero_fanout_frames,
        "end_to_end": {"mean_s": report.end_to_end.mean,
                       "p99_s": report.end_to_end.p99},
        "stages": {
            label: {"mean_s": st.mean, "p99_s": st.p99}
            for label, st in report.stages.items()
        },
        "wait_fraction": report.wait_fraction,
        "verdict": {
            "stable": res.verdict.stable,
            "growth_ratio": (None if math.isinf(res.verdict.growth_ratio)
                             else res.verdict.growth_ratio),
            "epoch_means_s": [None if math.isinf(m) else m
                              for m in res.verdict.epoch_means],
            "binding_resource": resource_class(res.verdict.binding_resource),
        },
        "analytic": {
            "stable": res.analytic_verdict.stable,
            "utilizations": res.analytic_verdict.utilizations,
            "binding_resource": res.analytic_verdict.binding_resource,
        },
        "measured": {
            "storage_busy_fraction": res.storage_busy_fraction(),
            "network_busy_fraction": res.network_busy_fraction(),
            "storage_read_bytes": res.cluster.storage_read_bytes,
        },
        "conservation": res.conservation(),
    }
    if res.spec.pacing == "scheduled" and res.collector.rows is not None:
        delays = frameset_delays(res.collector.rows, res.spec.frame_interval)
        if delays:
            summary["frameset_delay"] = {
                "mean_s": sum(delays) / len(delays),
                "max_s": max(delays),
            }
    return summary


def cmd_simulate(args) -> int:
    spec = resolve_scenario(args.scenario, args.scale)
    res = run_scenario(spec, accel=args.accel, seed=args.seed,
                       sim_time=args.sim_time, warmup=args.warmup,
                       full_log=not args.aggregate_only)
    os.makedirs(args.out, exist_ok=True)
    if res.collector.rows is not None:
        write_frames_csv(os.path.join(args.out, "frames.csv"), res.collector.rows)
    _atomic_write(os.path.join(args.out, "summary.json"),
                  json.dumps(_summary_dict(res), indent=2, sort_keys=True) + "\n")
    util = ["window_start_s,resource,busy_fraction,units_served"]
    for row in utilization_rows(res.cluster.all_resources(), res.horizon_ns):
        util.append(f"{row[0]:.1f},{row[1]},{row[2]:.6f},{row[3]:.1f}")
    # fetches are cache-served: expose the zero-read invariant explicitly
    for b in res.cluster.brokers:
        util.append(f"0.0,broker-{b.idx}-storage-read,0.000000,0.0")
    _atomic_write(os.path.join(args.out, "utilization.csv"), "\n".join(util) + "\n")

    verdict = "stable" if res.verdict.stable else (
        f"UNSTABLE (binding: {resource_class(res.verdict.binding_resource)})"
    )
    print(f"{spec.name} accel={res.accel:g} seed={res.seed}: {verdict}; "
          f"mean latency {res.report.end_to_end.mean * 1000:.1f} ms, "
          f"throughput {res.report.throughput:.1f} fps, "
          f"wait fraction {res.report.wait_fraction:.3f}")
    if args.require_stable and not res.verdict.stable:
        return EXIT_UNSTABLE
    return EXIT_OK


def _sweep_point(spec: ScenarioSpec, accel: float, seed: int,
                 sim_time: float, warmup: float) -> dict:
    res = run_scenario(spec, accel=accel, seed=seed, sim_time=sim_time,
                       warmup=warmup, full_log=False)
    rep = res.report
    return {
        "scenario": spec.name,
        "accel": accel,
        "drives": spec.drives_per_broker,
        "brokers": spec.brokers,
        "scale_factor": spec.message_size.scale_factor,
        "seed": seed,
        "frames": rep.samples,
        "throughput_fps": rep.throughput,
        "mean_latency_s": rep.end_to_end.mean,
        "p99_latency_s": rep.end_to_end.p99,
        "wait_fraction": rep.wait_fraction,
        "stable": res.verdict.stable,
        "binding_resource": resource_class(res.verdict.binding_resource) or "",
        "rho_storage_analytic": res.analytic_verdict.utilizations[analytic.STORAGE],
    }


def _sweep_worker(packed):
    ref, scale, drives, brokers, size, accel, seed, sim_time, warmup = packed
    spec = resolve_scenario(ref, scale)
    spec = replace(spec, drives_per_broker=drives, brokers=brokers,
                   message_size=replace(spec.message_size, scale_factor=size))
    return _sweep_point(spec, accel, seed, sim_time, warmup)


def cmd_sweep(args) -> int:
    accels = [float(a) for a in args.accel_list.split(",") if a]
    drives = [int(d) for d in args.drives_list.split(",") if d]
    brokers = [int(b) for b in args.brokers_list.split(",") if b]
    sizes = [float(s) for s in args.size_list.split(",") if s]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    if not accels or not seeds:
        raise ConfigError("sweep grid is empty: need --accel-list and --seeds")
    base = resolve_scenario(args.scenario, args.scale)
    grid = sorted(
        (d, b, s, a, seed)
        for d in (drives or [base.drives_per_broker])
        for b in (brokers or [base.brokers])
        for s in (sizes or [base.message_size.scale_factor])
        for a in accels
        for seed in seeds
    )
    packed = [(args.scenario, args.scale, d, b, s, a, seed,
               args.sim_time, args.warmup) for d, b, s, a, seed in grid]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, packed))
    else:
        rows = [_sweep_worker(p) for p in packed]
    out_lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        out_lines.append(",".join(_csv_cell(r[c]) for c in SWEEP_COLUMNS))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".", exist_ok=True)
    _atomic_write(args.out, "\n".join(out_lines) + "\n")
    n_unstable = sum(1 for r in rows if not r["stable"])
    print(f"sweep: {len(rows)} points -> {args.out} ({n_unstable} unstable)")
    return EXIT_OK


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "S" if v else "U"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def cmd_analyze(args) -> int:
    accels = [float(a) for a in args.accel_list.split(",") if a]
    rows = [(a, analytic.amdahl_speedup(args.fraction, a)) for a in accels]
    asymptote = analytic.amdahl_speedup(args.fraction, math.inf)
    print(f"accelerated fraction: {args.fraction}")
    print("accel  overall-speedup")
    for a, s in rows:
        print(f"{a:>5g}  {s:.3f}")
    print(f"  inf  {asymptote:.3f}" if math.isfinite(asymptote) else "  inf  inf")
    if args.out:
        lines = ["accel,overall_speedup"]
        lines += [f"{a:g},{s:.6f}" for a, s in rows]
        lines.append(f"inf,{asymptote:.6f}" if math.isfinite(asymptote) else "inf,inf")
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_plan(args) -> int:
    spec = resolve_scenario(args.scenario, args.scale)

    sim_verdict = None
    if args.confirm:
        def sim_verdict(candidate: ScenarioSpec) -> bool:
            res = run_scenario(candidate, accel=args.target_accel,
                               seed=args.seed, sim_time=args.sim_time,
                               warmup=args.warmup, full_log=False)
            return res.verdict.stable

    plan = analytic.min_mitigation(spec, args.target_accel, sim_verdict=sim_verdict)
    print(f"mitigations for {spec.name} at {args.target_accel:g}x "
          f"(baseline drives={spec.drives_per_broker}, brokers={spec.brokers}, "
          f"scale={spec.message_size.scale_factor:g}):")
    for opt, fmt in ((plan.drives, "{:.0f}"), (plan.brokers, "{:.0f}"),
                     (plan.scale_factor, "{:g}")):
        if opt.analytic is None:
            print(f"  {opt.axis}: infeasible on this axis "
                  f"(binding resource: {opt.binding_when_infeasible})")
            continue
        line = f"  {opt.axis}: analytic {fmt.format(opt.analytic)}"
        if opt.simulated is not None:
            line += f", simulator-confirmed {fmt.format(opt.simulated)}"
            if opt.simulated != opt.analytic:
                line += "  [pure-storage model is conservative here]"
        print(line)
    return EXIT_OK


def cmd_tco(args) -> int:
    if args.design in ("homogeneous", "both"):
        hc = tco.load_catalog(args.catalog or "homogeneous")
        if not hc.items:
            raise ConfigError("catalog has no items")
    if args.design == "homogeneous":
        rep = tco.yearly_tco(
            tco.homogeneous_bom(hc), args.amortization_years,
            tco.facility_kw(float(hc.defaults.get("it_power_kw", 921.0))),
            float(hc.defaults.get("power_rate", tco.DEFAULT_POWER_RATE)),
        )
        print(tco.format_report(rep))
        _maybe_json(args, [rep])
        return EXIT_OK
    if args.design == "purpose-built":
        pc = tco.load_catalog(args.catalog or "purpose-built")
        brokers, producers, consumers = tco.node_split(args.nodes)
        rep = tco.yearly_tco(
            tco.purpose_built_bom(producers + consumers, brokers, pc),
            args.amortization_years,
            tco.facility_kw(float(pc.defaults.get("it_power_kw", 799.087))),
            float(pc.defaults.get("power_rate", tco.DEFAULT_POWER_RATE)),
        )
        print(tco.format_report(rep))
        _maybe_json(args, [rep])
        return EXIT_OK
    hc = tco.load_catalog("homogeneous")
    pc = tco.load_catalog("purpose-built")
    hrep, prep = tco.compare_designs(hc, pc, args.amortization_years)
    print(tco.format_report(hrep))
    print()
    print(tco.format_report(prep))
    _maybe_json(args, [hrep, prep])
    return EXIT_OK


def _maybe_json(args, reports) -> None:
    if getattr(args, "out", None):
        payload = [r.__dict__ for r in reports]
        _atomic_write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="brokersim",
                     description="Simulator and capacity planner for "
                                 "brokered streaming pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p, sim_time=DEFAULT_SIM_TIME):
        p.add_argument("--scenario", required=True,
                       help="builtin name or scenario file path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sim-time", type=float, default=sim_time,
                       help="virtual horizon in seconds")
        p.add_argument("--warmup", type=float, default=DEFAULT_WARMUP)
        p.add_argument("--scale", type=int, default=1,
                       help="divide populations and shared capacities by N "
                            "(desk-scale runs, ratios preserved)")

    p = sub.add_parser("simulate", help="run one scenario and write artifacts")
    add_run_flags(p)
    p.add_argument("--accel", type=float, default=None,
                   help="acceleration factor (defaults to the scenario's)")
    p.add_argument("--out", default=os.environ.get("BROKERSIM_OUT", "out"),
                   help="output directory (env: BROKERSIM_OUT)")
    p.add_argument("--require-stable", action="store_true",
                   help="exit 2 if the run is unstable")
    p.add_argument("--aggregate-only", action="store_true",
                   help="skip frames.csv (streaming statistics only)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of runs -> one CSV")
    add_run_flags(p, sim_time=300.0)
    p.add_argument("--accel-list", required=True, help="comma-separated factors")
    p.add_argument("--drives-list", default="", help="comma-separated drive counts")
    p.add_argument("--brokers-list", default="", help="comma-separated broker counts")
    p.add_argument("--size-list", default="", help="comma-separated scale factors")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", default=os.environ.get("BROKERSIM_OUT", "sweep.csv"),
                   help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="fixed-workload speedup table")
    p.add_argument("--fraction", type=float, required=True,
                   help="accelerated fraction of the work, in [0, 1]")
    p.add_argument("--accel-list", required=True)
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plan", help="minimal mitigations for a target factor")
    add_run_flags(p, sim_time=240.0)
    p.add_argument("--target-accel", type=float, required=True)
    p.add_argument("--no-confirm", dest="confirm", action="store_false",
                   help="skip simulator confirmation runs")
    p.set_defaults(func=cmd_plan, confirm=True)

    p = sub.add_parser("tco", help="data-center cost comparison")
    p.add_argument("--catalog", default=None,
                   help="catalog name or YAML path (defaults to the shipped ones)")
    p.add_argument("--design", choices=("homogeneous", "purpose-built", "both"),
                   default="both")
    p.add_argument("--amortization-years", type=float,
                   default=tco.DEFAULT_AMORTIZATION_YEARS)
    p.add_argument("--nodes", type=int, default=1024)
    p.add_argument("--out", default=None, help="optional JSON path")
    p.set_defaults(func=cmd_tco)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit_ as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ScenarioError, ValidationError, tco.CatalogError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
