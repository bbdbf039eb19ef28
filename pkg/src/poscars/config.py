"""Configuration files, defaults and model construction.

The configuration is TOML with one table per concern::

    [simulation]  horizon, seed, replications, warmup, slot_length_ms,
                  cost_mode ("actual" | "rate"), debug, backend
    [scheduler]   name, probe_ratio, batch, V, alpha, gamma
    [prediction]  forecaster, d_avg, windows
    [workload]    kind ("poisson" | "trace"), load or rate, trace, trace_mode, a_max
    [topology]    kind ("fat-tree" | "jellyfish" | "matrix"), k, nfv_per_pod, ...
    [model]       generator knobs, or explicit servers / vnfs / services tables

See README.md for every key.  Defaults give the reference fat-tree setting at
desk scale.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import (ModelError, Placement, Server, ServiceCatalog, ServiceChainSpec, SystemModel,
                    VnfSpec, make_options)
from .topology import build_fat_tree, build_jellyfish, comm_cost_matrix, hop_matrix

SCHEMA_VERSION = 1

DEFAULTS = {
    "simulation": {
        "horizon": 2000,
        "seed": 1,
        "replications": 1,
        "warmup": 0,
        "slot_length_ms": 10.0,
        "cost_mode": "actual",
        "debug": False,
        "backend": "auto",
    },
    "scheduler": {
        "name": "poscars",
        "probe_ratio": 2,
        "batch": 5,
        "V": 10.0,
        "alpha": 10.0,
        "gamma": 1.0,
    },
    "prediction": {
        "forecaster": "perfect",
        "d_avg": 0,
        "windows": [],
    },
    "workload": {
        "kind": "poisson",
        "load": 0.7,
        "rate": None,
        "trace": None,
        "trace_mode": "counts",
        "a_max": 10000,
    },
    "topology": {
        "kind": "fat-tree",
        "k": 4,
        "nfv_per_pod": 2,
        "n_switches": 20,
        "switch_degree": 4,
        "servers_per_switch": 4,
        "n_nfv": 8,
        "base_cost": 1.0,
        "variation": 0.1,
        "jitter": False,
    },
    "model": {
        "services": 5,
        "chain_min": 3,
        "chain_max": 5,
        "instances_min": 2,
        "instances_max": 4,
        "cores_min": 4,
        "cores_max": 8,
        "cost_min": 1.0,
        "cost_max": 3.0,
        "theta": 2.0,
        "y_max": 4,
        "phi_max": None,
        "seed": None,  # fixes the random model across replications when set
    },
}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text: str):
    """Interpret an override value as TOML/JSON where possible, else a bare string."""
    for loader in (lambda s: tomllib.loads(f"x = {s}")["x"], json.loads):
        try:
            return loader(text)
        except Exception:
            pass
    return text


_SHORT_KEYS = {"V": "scheduler", "alpha": "scheduler", "gamma": "scheduler", "seed": "simulation",
               "horizon": "simulation", "d_avg": "prediction", "forecaster": "prediction",
               "replications": "simulation", "load": "workload"}


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` (or a few bare keys such as ``V=100``)."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        key = key.strip()
        parts = key.split(".") if "." in key else [_SHORT_KEYS.get(key, ""), key]
        if not parts[0]:
            raise ConfigError(f"unknown override key {key!r}")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = parse_value(val.strip())
    return cfg


def load_config(path=None, overrides=None) -> dict:
    """Resolved configuration: defaults < file < overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        with open(p, "rb") as fh:
            try:
                cfg = deep_merge(cfg, tomllib.load(fh))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        trace = cfg["workload"].get("trace")
        if trace and not Path(trace).is_absolute():
            cfg["workload"]["trace"] = str((p.parent / trace).resolve())
    cfg = apply_overrides(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    sim, sch, pred = cfg["simulation"], cfg["scheduler"], cfg["prediction"]
    if int(sim["horizon"]) < 1:
        raise ConfigError("simulation.horizon must be >= 1")
    if int(sim["replications"]) < 1:
        raise ConfigError("simulation.replications must be >= 1")
    if not 0 <= int(sim["warmup"]) < int(sim["horizon"]):
        raise ConfigError("simulation.warmup must lie in [0, horizon)")
    if sim["cost_mode"] not in ("actual", "rate"):
        raise ConfigError("simulation.cost_mode must be 'actual' or 'rate'")
    for k in ("V", "alpha", "gamma"):
        if float(sch[k]) < 0:
            raise ConfigError(f"scheduler.{k} must be >= 0")
    from .variants import ChainingStrategy
    from .workload import ForecasterSpec

    try:
        strat = ChainingStrategy.parse(str(sch["name"]), probe_ratio=int(sch["probe_ratio"]),
                                       batch=int(sch["batch"]))
        ForecasterSpec.parse(str(pred["forecaster"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if strat.batched and sim["cost_mode"] == "rate":
        raise ConfigError("rate-based cost accounting needs a single-target scheduler")
    if int(pred["d_avg"]) < 0:
        raise ConfigError("prediction.d_avg must be >= 0")


# ---------------------------------------------------------------- model building

def seed_streams(seed: int, n: int = 6) -> list[np.random.Generator]:
    """Independent generators: topology, model, comm, workload, prediction, scheduler."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def build_topology_costs(topo: dict, rng_topo, rng_comm, n_servers_hint=None) -> np.ndarray:
    kind = topo["kind"]
    seed_t = int(rng_topo.integers(2**63))
    seed_c = int(rng_comm.integers(2**63))
    if kind == "fat-tree":
        g = build_fat_tree(int(topo["k"]), int(topo["nfv_per_pod"]), seed_t)
    elif kind == "jellyfish":
        g = build_jellyfish(int(topo["n_switches"]), int(topo["switch_degree"]),
                            int(topo["servers_per_switch"]), int(topo["n_nfv"]), seed_t)
    elif kind == "matrix":
        w = np.asarray(topo["matrix"], dtype=float)
        return w
    else:
        raise ConfigError(f"unknown topology kind {kind!r}")
    hops = hop_matrix(g)
    return comm_cost_matrix(hops, float(topo["base_cost"]), float(topo["variation"]), seed_c).cost


def generate_model(mcfg: dict, comm: np.ndarray, rng) -> SystemModel:
    """Random desk-scale model on ``len(comm)`` servers (single CPU resource)."""
    S = comm.shape[0]
    cores = rng.integers(int(mcfg["cores_min"]), int(mcfg["cores_max"]) + 1, size=S)
    lam = rng.uniform(float(mcfg["cost_min"]), float(mcfg["cost_max"]), size=S)
    servers = tuple(Server(s, (int(cores[s]),), (round(float(lam[s]), 3),)) for s in range(S))
    theta = float(mcfg["theta"])
    y_max = int(mcfg["y_max"])
    phi_max = int(mcfg["phi_max"] or round(theta * y_max))
    vnfs, services, pairs = [], [], []
    lo_i, hi_i = int(mcfg["instances_min"]), min(int(mcfg["instances_max"]), S)
    opts = make_options(y_max, (int(cores.max()),))
    for k in range(int(mcfg["services"])):
        L = int(rng.integers(int(mcfg["chain_min"]), int(mcfg["chain_max"]) + 1))
        ids = []
        for j in range(L):
            f = len(vnfs)
            vnfs.append(VnfSpec(f, k, j + 1, (theta,), phi_max, opts, name=f"s{k}f{j}"))
            n_inst = int(rng.integers(min(lo_i, hi_i), hi_i + 1))
            for s in sorted(rng.choice(S, size=n_inst, replace=False)):
                pairs.append((f, int(s)))
            ids.append(f)
        services.append(ServiceChainSpec(k, tuple(ids)))
    return SystemModel(servers, ServiceCatalog(tuple(services), tuple(vnfs)),
                       Placement.from_pairs(pairs), comm)


def explicit_model(mcfg: dict, comm: np.ndarray | None) -> SystemModel:
    """Model spelled out in ``[[model.servers]]``, ``[[model.vnfs]]``, ``[[model.services]]``."""
    servers = tuple(Server(i, tuple(s["capacity"]), tuple(s["unit_cost"]))
                    for i, s in enumerate(mcfg["servers"]))
    names = {}
    vnfs, pairs, services = [], [], []
    vdefs = {v["name"]: v for v in mcfg["vnfs"]}
    for k, sdef in enumerate(mcfg["services"]):
        ids = []
        for j, name in enumerate(sdef["chain"]):
            v = vdefs[name]
            f = len(vnfs)
            names[name] = f
            theta = tuple(v.get("theta", [1.0]))
            if "options" in v:
                opts = tuple(tuple(o) for o in v["options"])
            else:
                opts = make_options(v.get("y_max", [1] * len(theta)))
            vnfs.append(VnfSpec(f, k, j + 1, theta, int(v["phi_max"]), opts, name=name))
            pairs.extend((f, int(s)) for s in v["hosts"])
            ids.append(f)
        services.append(ServiceChainSpec(k, tuple(ids), int(sdef.get("window", 0)), sdef.get("name", "")))
    if comm is None:
        comm = np.asarray(mcfg["comm"], dtype=float)
    comm = np.where(comm < 0, np.inf, comm)
    return SystemModel(servers, ServiceCatalog(tuple(services), tuple(vnfs)),
                       Placement.from_pairs(pairs), comm)


def build_model(cfg: dict, rng_topo, rng_model, rng_comm) -> SystemModel:
    mcfg = cfg["model"]
    if "servers" in mcfg:
        comm = None if "comm" in mcfg else build_topology_costs(cfg["topology"], rng_topo, rng_comm)
        model = explicit_model(mcfg, comm)
    else:
        comm = build_topology_costs(cfg["topology"], rng_topo, rng_comm)
        model = generate_model(mcfg, comm, rng_model)
    problems = model.validate()
    if problems:
        raise ModelError("; ".join(problems))
    return model


def arrival_rates(cfg: dict, model: SystemModel) -> np.ndarray:
    """Per-service Poisson means: explicit ``rate`` or derived from the target ``load``.

    ``load`` is offered work over total capacity, with every request needing
    one unit of service at each VNF of its chain.
    """
    w = cfg["workload"]
    K = len(model.catalog.services)
    if w.get("rate") is not None:
        r = np.atleast_1d(np.asarray(w["rate"], dtype=float))
        return np.broadcast_to(r, (K,)).copy() if r.size == 1 else r
    cat, pl = model.catalog, model.placement
    capacity = 0.0
    for s in model.servers:
        # capacity in requests/slot: best achievable rate per core on this server
        thetas = [cat.vnfs[f].theta[0] for f in pl.vnfs_on(s.id)]
        capacity += s.capacity[0] * (sum(thetas) / len(thetas) if thetas else 0.0)
    work = sum(len(k.vnfs) for k in cat.services)
    return np.full(K, float(w["load"]) * capacity / work)
