"""Command-line driver: scenario generation, simulation, tuning,
validation reports, and scaling benchmarks.

Every command takes one `--seed` that feeds named sub-streams, writes
its primary outputs as CSV/JSON under `--out` (default from the
OLSRTUNE_OUT environment variable, falling back to the current
directory), and records a run manifest for reproducibility. Exit codes:
0 success, 2 usage or input error, 3 domain or validation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, analysis, evo, olsr, sim
from .errors import DomainError, InputError
from .scenario import (
    FlowTemplate,
    GridSpec,
    LossModel,
    generate_grid_scenario,
    load_scenario,
    save_scenario,
)

__all__ = ["main"]


def _parse_pair(text: str, sep: str, what: str, cast=float) -> tuple:
    parts = text.split(sep)
    if len(parts) != 2:
        raise InputError(f"expected {what} as A{sep}B, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError:
        raise InputError(f"non-numeric {what}: {text!r}") from None


def _parse_loss(text: str) -> LossModel:
    if text == "ideal":
        return LossModel("ideal")
    if text.startswith("bernoulli:"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad loss model {text!r}") from None
        return LossModel("bernoulli", p)
    raise InputError(f"unknown loss model {text!r} (use ideal or bernoulli:P)")


def _parse_float_list(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise InputError(f"bad {what} list: {text!r}") from None


def _parse_int_list(text: str, what: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise InputError(f"bad {what} list: {text!r}") from None


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("OLSRTUNE_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class _Manifest:
    """Records the command, its resolved settings, input digests, and the
    produced files; written last so it lists everything."""

    def __init__(self, command: str, args, out_dir: Path):
        self.doc = {
            "command": command,
            "argv": list(sys.argv[1:]),
            "version": __version__,
            "master_seed": getattr(args, "seed", None),
            "settings": {},
            "inputs": {},
            "outputs": [],
            "started_utc": _utcnow(),
        }
        self.out_dir = out_dir

    def setting(self, **kv):
        self.doc["settings"].update(kv)

    def input_file(self, path: Path):
        self.doc["inputs"][str(path)] = _digest(path)

    def output_file(self, path: Path):
        self.doc["outputs"].append(path.name)

    def write(self, extra: dict | None = None):
        if extra:
            self.doc.update(extra)
        self.doc["finished_utc"] = _utcnow()
        path = self.out_dir / f"{self.doc['command']}_manifest.json"
        path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_scenario_arg(path_str: str, manifest: _Manifest):
    path = Path(path_str)
    if not path.is_file():
        raise InputError(f"scenario file not found: {path}")
    manifest.input_file(path)
    scenario = load_scenario(path)
    trace_ref = json.loads(path.read_text(encoding="utf-8"))["trace_file"]
    trace_path = Path(trace_ref)
    if not trace_path.is_absolute():
        trace_path = path.parent / trace_path
    manifest.input_file(trace_path)
    return scenario, path.stem


def _load_config_arg(path_str: str, manifest: _Manifest):
    path = Path(path_str)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    manifest.input_file(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from None
    return olsr.config_from_dict(doc), path.stem


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_gen(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("gen", args, out)
    try:
        spec = GridSpec(
            area=_parse_pair(args.area, "x", "area"),
            streets=_parse_pair(args.streets, "x", "streets", cast=int),
            vehicle_count=args.vehicles,
            speed=_parse_pair(args.speed, ":", "speed"),
            pause_time=args.pause,
            sample_step=args.sample_step,
            duration=args.duration,
        )
        flow_duration = args.flow_duration
        if flow_duration > spec.duration:
            raise InputError("flow duration exceeds the scenario duration")
        start = args.flow_start
        if start is None:
            start = max(0.0, (spec.duration - flow_duration) / 2.0)
        template = FlowTemplate(
            packet_size=args.packet_size,
            rate=args.rate,
            start=start,
            duration=flow_duration,
        )
        scenario = generate_grid_scenario(
            spec,
            args.flows,
            template,
            args.seed,
            radio_range=args.range,
            bandwidth=args.bandwidth,
            loss_model=_parse_loss(args.loss),
        )
    except DomainError as exc:
        # bad flag values are usage errors, not simulation-domain failures
        raise InputError(str(exc)) from None
    written = save_scenario(scenario, out / f"{args.name}.json")
    for p in written:
        manifest.output_file(p)
    manifest.setting(
        area=list(spec.area),
        streets=list(spec.streets),
        vehicles=spec.vehicle_count,
        flows=args.flows,
        speed=list(spec.speed),
        pause=spec.pause_time,
        sample_step=spec.sample_step,
        duration=spec.duration,
        packet_size=template.packet_size,
        rate=template.rate,
        flow_start=template.start,
        flow_duration=template.duration,
        radio_range=args.range,
        bandwidth=args.bandwidth,
        loss=args.loss,
    )
    manifest.write()
    print(f"wrote {written[0]} and {written[1]}")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("simulate", args, out)
    scenario, scenario_id = _load_scenario_arg(args.scenario, manifest)
    if args.rfc:
        config, config_id = olsr.rfc_default(), "rfc_default"
    else:
        config, config_id = _load_config_arg(args.config, manifest)
    nic = sim.default_nic()
    manifest.setting(scenario=scenario_id, config=config_id, compare_rfc=args.compare_rfc)

    rows = []
    doc: dict = {}
    if args.compare_rfc:
        m_cfg, m_rfc, gaps = sim.compare_against_reference(scenario, config, nic, args.seed)
        rows.append(sim.metrics_row(m_cfg, scenario_id, config_id, args.seed))
        rows.append(sim.metrics_row(m_rfc, scenario_id, "rfc_default", args.seed))
        doc = {
            "config": sim.metrics_to_json(m_cfg),
            "reference": sim.metrics_to_json(m_rfc),
            "gap_energy": gaps[0],
            "gap_pdr": gaps[1],
        }
    else:
        metrics = sim.run_simulation(scenario, config, nic, args.seed)
        rows.append(sim.metrics_row(metrics, scenario_id, config_id, args.seed))
        doc = sim.metrics_to_json(metrics)

    csv_path = out / "metrics.csv"
    _write_csv(csv_path, sim.METRICS_COLUMNS, rows)
    json_path = out / "metrics.json"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.output_file(csv_path)
    manifest.output_file(json_path)
    manifest.write()
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_tune(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("tune", args, out)
    scenario, scenario_id = _load_scenario_arg(args.scenario, manifest)
    nic = sim.default_nic()
    space = olsr.default_param_space()
    settings = evo.GaSettings(
        pop_size=args.pop,
        p_c=args.pc,
        p_m=args.pm,
        generations=args.gens,
        workers=args.workers,
        master_seed=args.seed,
        elitism=args.elitism,
    )
    ctx = evo.calibrate_context(scenario, nic, settings.master_seed)
    manifest.setting(
        scenario=scenario_id,
        pop_size=settings.pop_size,
        p_c=settings.p_c,
        p_m=settings.p_m,
        generations=settings.generations,
        workers=settings.workers,
        elitism=settings.elitism,
        e_rfc=ctx.e_rfc,
        pdr_rfc=ctx.pdr_rfc,
    )

    if args.grid:
        rows = evo.parameter_setting_grid(
            _parse_float_list(args.grid_pc, "p_c"),
            _parse_float_list(args.grid_pm, "p_m"),
            args.reps,
            settings,
            space,
            scenario,
            nic,
            ctx,
        )
        header = (
            "p_c,p_m,avg_f,stdev_f,best_f,avg_energy,avg_pdr,gap_energy,gap_pdr".split(",")
        )
        grid_path = out / "grid.csv"
        _write_csv(grid_path, header, [[repr(r[c]) for c in header] for r in rows])
        manifest.output_file(grid_path)
        manifest.write()
        print(f"wrote {grid_path}")
        return 0

    best, history = evo.evolve(settings, space, scenario, nic, ctx)
    config = olsr.decode_genome(best.genes, space)

    best_path = out / "best_config.json"
    best_path.write_text(
        json.dumps(olsr.config_to_dict(config), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    hist_path = out / "history.csv"
    _write_csv(
        hist_path,
        evo.HISTORY_COLUMNS,
        [
            [
                str(h.generation),
                repr(h.best_f),
                repr(h.avg_f),
                repr(h.best_energy),
                repr(h.best_pdr),
                str(h.penalized_count),
            ]
            for h in history
        ],
    )
    manifest.output_file(best_path)
    manifest.output_file(hist_path)
    manifest.write(
        extra={
            "best": {
                "f": best.fitness.f,
                "energy_mj": best.fitness.energy,
                "pdr": best.fitness.pdr,
                "penalized": best.fitness.penalized,
                "id": list(best.id),
            }
        }
    )
    print(
        f"best f={best.fitness.f:.6f} energy={best.fitness.energy:.2f} mJ "
        f"pdr={best.fitness.pdr:.2f}%"
    )
    print(f"wrote {best_path} and {hist_path}")
    return 0


def cmd_validate(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("validate", args, out)
    scen_dir = Path(args.scenarios)
    if not scen_dir.is_dir():
        raise InputError(f"scenario directory not found: {scen_dir}")
    # gen drops its manifest next to the scenario files; don't load it
    paths = sorted(p for p in scen_dir.glob("*.json") if not p.name.endswith("_manifest.json"))
    if not paths:
        raise InputError(f"no scenario JSON files in {scen_dir}")
    scenarios = []
    for p in paths:
        scenario, _sid = _load_scenario_arg(str(p), manifest)
        w, h = scenario.area
        scenarios.append((f"{w:g}x{h:g}m", scenario))

    configs = []
    if args.rfc:
        configs.append(("rfc_default", olsr.rfc_default()))
    for c in args.config or []:
        config, name = _load_config_arg(c, manifest)
        configs.append((name, config))
    if not configs:
        raise InputError("no configurations given (use --rfc and/or --config)")

    seeds = _parse_int_list(args.seeds, "seeds")
    if not seeds:
        raise InputError("no seeds given")
    manifest.setting(
        scenario_count=len(scenarios), configs=[n for n, _c in configs], seeds=seeds
    )

    report = analysis.validation_report(configs, scenarios, sim.default_nic(), seeds)
    csv_path = out / "report.csv"
    csv_path.write_text(analysis.report_csv(report), encoding="utf-8")
    txt_path = out / "report.txt"
    txt_path.write_text(analysis.report_text(report), encoding="utf-8")
    manifest.output_file(csv_path)
    manifest.output_file(txt_path)
    manifest.write(extra={"runs": report.runs, "failures": report.failures})
    print(f"wrote {csv_path} and {txt_path} ({report.runs} runs, {report.failures} failures)")
    return 0


def cmd_bench(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("bench", args, out)
    scenario, scenario_id = _load_scenario_arg(args.scenario, manifest)
    nic = sim.default_nic()
    space = olsr.default_param_space()
    worker_counts = _parse_int_list(args.workers, "workers")
    if not worker_counts:
        raise InputError("no worker counts given")
    ctx = evo.calibrate_context(scenario, nic, args.seed)
    manifest.setting(
        scenario=scenario_id,
        workers=worker_counts,
        reps=args.reps,
        pop_size=args.pop,
        generations=args.gens,
        pad_ms=args.pad_ms,
    )

    times: dict = {}
    for m in worker_counts:
        samples = []
        for rep in range(args.reps):
            settings = evo.GaSettings(
                pop_size=args.pop,
                generations=args.gens,
                workers=m,
                master_seed=args.seed,
            )
            t0 = time.perf_counter()
            evo.evolve(settings, space, scenario, nic, ctx, eval_pad_s=args.pad_ms / 1000.0)
            samples.append(time.perf_counter() - t0)
        times[m] = samples

    result = analysis.bench_result(times, args.reps)
    csv_path = out / "bench.csv"
    csv_path.write_text(analysis.bench_csv(result), encoding="utf-8")
    manifest.output_file(csv_path)
    # wall-clock measurements: this output is honest data, not replayable
    manifest.write(extra={"deterministic_outputs": False})
    for m, t, s, e in zip(
        result.worker_counts, result.mean_times, result.speedups, result.efficiencies
    ):
        print(f"workers={m} mean={t:.3f}s speedup={s:.2f} efficiency={e:.2f}")
    print(f"wrote {csv_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="olsrtune",
        description="Energy-aware OLSR parameter tuning: simulate, evolve, analyze.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1, help="master seed (default 1)")
    common.add_argument(
        "--out", default=None, help="output directory (default $OLSRTUNE_OUT or .)"
    )

    p = sub.add_parser("gen", parents=[common], help="generate a grid-mobility scenario")
    p.add_argument("--area", required=True, help="area in meters, WxH (e.g. 400x300)")
    p.add_argument("--vehicles", required=True, type=int, help="number of vehicles")
    p.add_argument("--flows", required=True, type=int, help="number of CBR flows")
    p.add_argument("--streets", default="4x4", help="street grid RxC (default 4x4)")
    p.add_argument("--speed", default="8:14", help="speed range m/s MIN:MAX (default 8:14)")
    p.add_argument("--pause", type=float, default=4.0, help="intersection pause s")
    p.add_argument("--sample-step", type=float, default=1.0, help="trace sampling step s")
    p.add_argument("--duration", type=float, default=180.0, help="scenario duration s")
    p.add_argument("--packet-size", type=int, default=512, help="CBR packet bytes")
    p.add_argument("--rate", type=float, default=4.0, help="CBR packets per second")
    p.add_argument("--flow-start", type=float, default=None, help="flow start s (default centered)")
    p.add_argument("--flow-duration", type=float, default=60.0, help="flow duration s")
    p.add_argument("--range", type=float, default=500.0, help="radio range m")
    p.add_argument("--bandwidth", type=float, default=6e6, help="bandwidth bit/s")
    p.add_argument("--loss", default="ideal", help="loss model: ideal | bernoulli:P")
    p.add_argument("--name", default="scenario", help="output base name")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", parents=[common], help="run one simulation")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="OLSR config JSON path")
    group.add_argument("--rfc", action="store_true", help="use standard defaults")
    p.add_argument(
        "--compare-rfc", action="store_true", help="also run the defaults and report gaps"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", parents=[common], help="evolve an energy-aware config")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--pop", type=int, default=24, help="population size (default 24)")
    p.add_argument("--gens", type=int, default=100, help="generations (default 100)")
    p.add_argument("--pc", type=float, default=0.7, help="crossover probability")
    p.add_argument("--pm", type=float, default=0.25, help="mutation probability")
    p.add_argument("--workers", type=int, default=1, help="evaluation workers")
    p.add_argument("--elitism", type=int, default=1, help="elites kept per generation")
    p.add_argument("--grid", action="store_true", help="run the p_c x p_m setting grid")
    p.add_argument("--grid-pc", default="0.5,0.7,0.9", help="grid p_c candidates")
    p.add_argument("--grid-pm", default="0.06125,0.125,0.25", help="grid p_m candidates")
    p.add_argument("--reps", type=int, default=1, help="repetitions per grid cell")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("validate", parents=[common], help="multi-scenario comparison report")
    p.add_argument("--scenarios", required=True, help="directory of scenario JSON files")
    p.add_argument("--config", action="append", help="config JSON (repeatable)")
    p.add_argument("--rfc", action="store_true", help="include the standard defaults")
    p.add_argument("--seeds", default="1", help="comma-separated seeds")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", parents=[common], help="worker-scaling benchmark")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--workers", default="1", help="comma-separated worker counts")
    p.add_argument("--reps", type=int, default=3, help="repetitions per count")
    p.add_argument("--pop", type=int, default=8, help="population size")
    p.add_argument("--gens", type=int, default=2, help="generations")
    p.add_argument("--pad-ms", type=float, default=0.0, help="padding per evaluation, ms")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
