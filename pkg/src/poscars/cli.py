"""Command-line front end: ``run``, ``sweep``, ``golden`` and ``topology``."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import SCHEMA_VERSION, ConfigError, load_config, tomllib
from .metrics import aggregate
from .sim import SimulationConfig, _json_default, clean_json, replicate, run

SWEEP_AXES = {
    "V": "scheduler.V",
    "D": "prediction.d_avg",
    "probe_ratio": "scheduler.probe_ratio",
    "false_positive_rate": "prediction.forecaster",
    "scheduler": "scheduler.name",
}

SWEEP_COLUMNS = ("axis", "value", "replications", "time_avg_cost_mean", "time_avg_cost_std",
                 "time_avg_m_mean", "time_avg_g_mean", "time_avg_h_mean", "time_avg_h_std",
                 "response_mean_ms_mean", "response_mean_ms_std", "response_p95_ms_mean", "status")


def _stamp() -> str:
    return f"# created={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(clean_json(obj), indent=2, sort_keys=True, default=_json_default) + "\n")


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"simulation.seed={args.seed}")
    if args.trace:
        overrides += ["workload.kind=\"trace\"", f"workload.trace={json.dumps(str(Path(args.trace).resolve()))}",
                      f"workload.trace_mode=\"{args.trace_mode}\""]
    cfg = load_config(args.config, overrides)
    config = SimulationConfig.from_dict(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.replications == 1:
        result = run(config, snapshot_path=out / "snapshot.csv" if args.snapshot else None)
        result.write(out)
        s = result.summary
        print(f"cost={s.time_avg_cost:.4f} h={s.time_avg_h:.2f} "
              f"response={s.response_time_ms.mean:.2f}ms -> {out}")
        return 0
    results, agg = replicate(config, workers=args.workers)
    for r in results:
        r.write(out / f"seed_{r.config['simulation']['seed']}")
    results[0].write(out)
    doc = results[0].summary_dict()
    doc["aggregate"] = agg
    doc["replications"] = [r.summary.to_dict() for r in results]
    _write_json(out / "summary.json", doc)
    print(f"cost={agg['time_avg_cost_mean']:.4f}±{agg['time_avg_cost_std']:.4f} "
          f"h={agg['time_avg_h_mean']:.2f} over {len(results)} runs -> {out}")
    return 0


# ---------------------------------------------------------------- sweep

def load_sweep(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"sweep spec not found: {path}")
    with open(p, "rb") as fh:
        spec = tomllib.load(fh)
    axis = spec.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    if not spec.get("values"):
        raise ConfigError("sweep needs a non-empty 'values' list")
    base = spec.get("base")
    if base is not None and not Path(base).is_absolute():
        base = str(p.parent / base)
    spec["base"] = base
    spec.setdefault("overrides", [])
    return spec


def point_overrides(axis: str, value) -> list[str]:
    key = SWEEP_AXES[axis]
    if axis == "false_positive_rate":
        return [f'{key}="false-positive({value})"']
    if axis == "scheduler":
        return [f'{key}="{value}"']
    return [f"{key}={value}"]


def _sweep_point(job):
    """One (point, seed) run; errors are returned, not raised."""
    cfg, seed = job
    try:
        return run(SimulationConfig.from_dict(cfg).with_seed(seed)).summary
    except Exception as exc:  # recorded per point, the sweep goes on
        return f"{type(exc).__name__}: {exc}"


def run_sweep(spec: dict, workers: int = 1) -> list[dict]:
    """All points of a sweep; rows come back in axis order whatever ``workers`` is."""
    points = []
    jobs = []
    for v in spec["values"]:
        try:
            cfg = load_config(spec["base"], list(spec["overrides"]) + point_overrides(spec["axis"], v))
        except Exception as exc:
            points.append((v, None, f"{type(exc).__name__}: {exc}"))
            continue
        seeds = [int(cfg["simulation"]["seed"]) + r for r in range(int(cfg["simulation"]["replications"]))]
        points.append((v, cfg, (len(jobs), len(seeds))))
        jobs.extend((cfg, s) for s in seeds)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_sweep_point, jobs))
    else:
        outs = [_sweep_point(j) for j in jobs]
    rows = []
    for v, cfg, ref in points:
        row = {"axis": spec["axis"], "value": v, "config": cfg}
        if cfg is None:
            row.update(status=ref, replications=0)
        else:
            got = outs[ref[0]:ref[0] + ref[1]]
            errors = [g for g in got if isinstance(g, str)]
            if errors:
                row.update(status=errors[0], replications=0)
            else:
                row.update(aggregate(got), status="ok", summaries=[s.to_dict() for s in got])
        rows.append(row)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        cells = []
        for c in SWEEP_COLUMNS:
            v = row.get(c, "")
            if isinstance(v, float):
                v = repr(v)
            v = str(v)
            if "," in v or '"' in v:
                v = '"' + v.replace('"', '""') + '"'
            cells.append(v)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    rows = run_sweep(spec, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(_stamp() + sweep_csv(rows))
    for i, row in enumerate(rows):
        _write_json(out / f"point_{i:03d}.json", {"schema_version": SCHEMA_VERSION, **row})
    bad = [r for r in rows if r["status"] != "ok"]
    for r in bad:
        print(f"point {r['axis']}={r['value']} failed: {r['status']}", file=sys.stderr)
    print(f"{len(rows) - len(bad)}/{len(rows)} points ok -> {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------- golden

def cmd_golden(args) -> int:
    from .golden import run_golden

    checks = run_golden()
    for c in checks:
        mark = "ok  " if c.ok else "FAIL"
        line = f"{mark} {c.name}: {c.actual}"
        if not c.ok:
            line += f" (expected {c.expected})"
        print(line)
    return 0 if all(c.ok for c in checks) else 1


# ---------------------------------------------------------------- topology export

def cmd_topology(args) -> int:
    from .topology import build_fat_tree, build_jellyfish, comm_cost_matrix, hop_matrix, write_edge_list, write_matrix_csv

    if args.kind == "fat-tree":
        g = build_fat_tree(args.k, args.nfv_per_pod, args.seed)
    else:
        g = build_jellyfish(args.switches, args.degree, args.servers_per_switch, args.nfv, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out / "edges.txt")
    hops = hop_matrix(g)
    write_matrix_csv(hops, out / "hops.csv")
    write_matrix_csv(comm_cost_matrix(hops, 1.0, args.variation, args.seed).cost, out / "comm_cost.csv")
    print(f"{g.graph.number_of_nodes()} nodes, {g.graph.number_of_edges()} links -> {out}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poscars", description="Predictive NFV chaining and scheduling simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--config", help="TOML configuration file (defaults apply when omitted)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int, default=1, help="processes for replications")
    r.add_argument("--trace", help="arrival trace CSV (replaces the Poisson workload)")
    r.add_argument("--trace-mode", choices=("counts", "timestamps"), default="counts")
    r.add_argument("--snapshot", action="store_true", help="also write per-slot queue snapshots")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--spec", required=True, help="sweep TOML (axis, values, base, overrides)")
    s.add_argument("--out", default="sweep_out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("golden", help="replay the two-VNF motivating scenario")
    g.set_defaults(func=cmd_golden)

    t = sub.add_parser("topology", help="export a generated topology")
    t.add_argument("--kind", choices=("fat-tree", "jellyfish"), default="fat-tree")
    t.add_argument("--k", type=int, default=4)
    t.add_argument("--nfv-per-pod", type=int, default=1)
    t.add_argument("--switches", type=int, default=20)
    t.add_argument("--degree", type=int, default=4)
    t.add_argument("--servers-per-switch", type=int, default=4)
    t.add_argument("--nfv", type=int, default=8)
    t.add_argument("--variation", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="topology_out")
    t.set_defaults(func=cmd_topology)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
