"""Slot-synchronous simulation: wiring, per-slot step, runs and replications.

Each slot runs in a fixed order:

1. snapshot queue lengths, carries and prediction queues;
2. decide admission, chaining and allocation from that snapshot;
3. admit requests from the prediction windows to ingress instances;
4. forward last slot's carries (communication cost ``m``);
5. process backlogs (energy cost ``g``), producing carries and completions;
6. advance the prediction windows by one slot.

``h`` is taken after step 4, i.e. on the queues the processing step acts on.
"""
from __future__ import annotations

import copy
import datetime as _dt
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .config import (SCHEMA_VERSION, arrival_rates, build_model, load_config, seed_streams,
                     validate_config)
from .metrics import RunSummary, SlotMetrics, aggregate, model_bound_B, summarize
from .model import SystemModel
from .queues import (ConstraintViolation, DecisionSet, QueueState, apply_admission,
                     apply_forwarding, apply_processing, check_capacity)
from .scheduler import ControlParams, decide
from .variants import ChainingStrategy
from .workload import (ArrivalTrace, ForecasterSpec, Predictor, advance_window,
                       assign_window_sizes, generate_poisson, init_window, load_trace)


@dataclass
class SimulationConfig:
    horizon: int = 2000
    seed: int = 1
    replications: int = 1
    warmup: int = 0
    slot_length_ms: float = 10.0
    cost_mode: str = "actual"
    debug: bool = False
    backend: str = "auto"
    params: ControlParams = field(default_factory=ControlParams)
    strategy: ChainingStrategy = field(default_factory=ChainingStrategy)
    forecaster: ForecasterSpec = field(default_factory=ForecasterSpec)
    d_avg: int = 0
    raw: dict = field(default_factory=dict)  # resolved configuration dictionary

    @classmethod
    def from_dict(cls, cfg: dict) -> "SimulationConfig":
        validate_config(cfg)
        s, c, p = cfg["simulation"], cfg["scheduler"], cfg["prediction"]
        return cls(
            horizon=int(s["horizon"]), seed=int(s["seed"]), replications=int(s["replications"]),
            warmup=int(s["warmup"]), slot_length_ms=float(s["slot_length_ms"]),
            cost_mode=s["cost_mode"], debug=bool(s["debug"]), backend=s["backend"],
            params=ControlParams(float(c["V"]), float(c["alpha"]), float(c["gamma"])),
            strategy=ChainingStrategy.parse(str(c["name"]), probe_ratio=int(c["probe_ratio"]),
                                            batch=int(c["batch"])),
            forecaster=ForecasterSpec.parse(str(p["forecaster"])),
            d_avg=int(p["d_avg"]), raw=copy.deepcopy(cfg))

    @classmethod
    def load(cls, path=None, overrides=None) -> "SimulationConfig":
        return cls.from_dict(load_config(path, overrides))

    def with_seed(self, seed: int) -> "SimulationConfig":
        raw = copy.deepcopy(self.raw)
        raw["simulation"]["seed"] = int(seed)
        out = copy.copy(self)
        out.seed, out.raw = int(seed), raw
        return out


class Simulation:
    """One run's mutable state.  Call :meth:`step` once per slot, in order."""

    def __init__(self, model: SystemModel, trace: ArrivalTrace, params: ControlParams,
                 strategy: ChainingStrategy | None = None, forecaster: ForecasterSpec | None = None,
                 window_sizes=None, rng_predict=None, rng_sched=None, cost_mode: str = "actual",
                 debug: bool = False, backend: str = "auto", comm_jitter: float = 0.0):
        self.model = model
        self.flat = model.flatten()
        self.trace = trace
        self.params = params
        self.strategy = strategy or ChainingStrategy()
        self.cost_mode = cost_mode
        if cost_mode == "rate" and self.strategy.batched:
            raise ValueError("rate-based cost accounting needs a single-target scheduler")
        self.debug = debug
        self.backend = backend
        self.comm_jitter = float(comm_jitter)
        self.rng = rng_sched if rng_sched is not None else np.random.default_rng(0)
        self.comm = np.asarray(model.comm_cost, dtype=float)
        K = trace.n_services
        if K != len(model.catalog.services):
            raise ValueError(f"trace has {K} services, model has {len(model.catalog.services)}")
        if window_sizes is None:
            window_sizes = [k.window_size for k in model.catalog.services]
        self.window_sizes = [int(d) for d in window_sizes]
        self.predictor = Predictor(forecaster or ForecasterSpec(), K,
                                   rng_predict if rng_predict is not None else np.random.default_rng(1))
        windows = [init_window(k, d, trace, self.predictor) for k, d in enumerate(self.window_sizes)]
        self.state = QueueState.empty(self.flat, windows, backend)
        self.t = 0
        self._comm_now = self.comm
        self._cost_rows = self.flat.iopt_cost

    # ------------------------------------------------------------------ slot
    def decide(self) -> DecisionSet:
        return decide(self.state, self._comm_now, self.params, self.strategy, self.rng, self.backend)

    def step(self, decision: DecisionSet | None = None) -> SlotMetrics:
        """Advance one slot; ``decision`` overrides the scheduler (used by the golden scenario)."""
        st, flat, t = self.state, self.flat, self.t
        self._comm_now = self._jittered() if self.comm_jitter else self.comm
        if self.debug:
            before = self._debug_snapshot()
        dec = decision if decision is not None else self.decide()
        nominal = st.nominal_rate
        apply_admission(st, dec)
        apply_forwarding(st, dec, check=self.debug or decision is not None)
        m = self._comm_cost(dec, nominal)
        qp = st.qp()
        pre = st.lengths()
        h = float(qp.sum()) + self.params.alpha * float(pre.sum())
        q = st.queues
        done0, pre0 = q.completed_real, q.pre_served
        apply_processing(st, dec.alloc, t, check=self.debug or decision is not None)
        g = float(self._cost_rows[flat.iopt_ptr[:-1] + dec.alloc].sum())
        completions, served = q.completed_real - done0, q.pre_served - pre0
        for k, win in enumerate(st.windows):
            advance_window(win, self.trace.at(k, t + 1 + self.window_sizes[k]), self.predictor)
        if self.debug:
            self._debug_check(before, dec, pre, nominal)
        self.t += 1
        return SlotMetrics(t, m, g, h, int(completions), int(served))

    def _jittered(self) -> np.ndarray:
        w = self.comm
        e = self.rng.uniform(-self.comm_jitter, self.comm_jitter, size=w.shape)
        e = np.triu(e, 1)
        return np.where(np.isfinite(w), w * (1.0 + e + e.T), w)

    def _comm_cost(self, dec: DecisionSet, nominal) -> float:
        flat = self.flat
        w = self._comm_now
        if self.cost_mode == "rate":
            nt = np.nonzero(flat.inst_terminal == 0)[0]
            rate = nominal[nt]
            on = rate > 0
            if not on.any():
                return 0.0
            src = flat.inst_server[nt[on]]
            dst = flat.inst_server[dec.x_target[nt[on]]]
            return float(np.sum(rate[on] * w[src, dst]))
        if len(dec.fwd_cnt) == 0:
            return 0.0
        src = flat.inst_server[dec.fwd_src]
        dst = flat.inst_server[dec.fwd_dst]
        return float(np.dot(dec.fwd_cnt, w[src, dst]))

    # ------------------------------------------------------------------ debug
    def _debug_snapshot(self) -> dict:
        st = self.state
        return {
            "lengths": st.lengths(),
            "carries": st.carries(),
            "windows": [[(s.arrival, s.count, s.real, s.phantom) for s in w.slots] for w in st.windows],
            "qp": st.qp(),
            "late": [w.late_real for w in st.windows],
            "dropped": [w.dropped_phantoms for w in st.windows],
        }

    def _debug_check(self, before: dict, dec: DecisionSet, pre: np.ndarray, nominal) -> None:
        """Assert the queue recurrences and constraints for the slot just simulated."""
        st, flat, q = self.state, self.flat, self.state.queues
        t = self.t

        def fail(msg):
            raise ConstraintViolation(f"slot {t}: {msg}")

        rates = st.nominal_rate
        # window slots hold between zero and the predicted number of requests
        for k, w in enumerate(st.windows):
            for s in w.slots:
                if not 0 <= s.count <= s.predicted or s.real < 0 or s.phantom < 0:
                    fail(f"service {k} window slot {s.arrival} holds {s.count} of {s.predicted}")
        # admitted total covers the current slot and fits in the window
        for k, old in enumerate(before["windows"]):
            lo, hi = flat.ingress_ptr[k], flat.ingress_ptr[k + 1]
            adm = int(dec.mu[lo:hi].sum())
            counts = [c for _, c, _, _ in old]
            if not (counts[0] if counts else 0) <= adm <= sum(counts):
                fail(f"service {k} admitted {adm} outside its window bounds")
        # window shift and prediction-queue recurrence
        for k, w in enumerate(st.windows):
            old = before["windows"][k]
            dd = list(dec.delta_d[k]) + [0] * (len(old) - len(dec.delta_d[k]))
            late = w.late_real - before["late"][k]
            dropped = w.dropped_phantoms - before["dropped"][k]
            for d in range(len(old) - 1):
                expect = old[d + 1][1] - dd[d + 1]
                if d == 0:
                    expect += late - dropped
                if w.slots[d].count != expect:
                    fail(f"service {k} window slot {d}: {w.slots[d].count} != {expect}")
            new_tail = w.slots[-1].count
            if st.qp()[k] != before["qp"][k] - sum(dd) + new_tail + late - dropped:
                fail(f"service {k}: prediction queue recurrence broken")
        # single successor per non-terminal instance, valid target
        if not dec.batched:
            for i in np.nonzero(flat.inst_terminal == 0)[0]:
                succ = flat.succ_idx[flat.succ_ptr[i]:flat.succ_ptr[i + 1]]
                if dec.x_target[i] not in succ:
                    fail(f"instance {i} has no valid successor")
        # capacity
        check_capacity(flat, dec.alloc)
        # instance queue recurrences
        inflow = pre - before["lengths"]
        after = st.lengths()
        if np.any(after != np.maximum(pre - rates, 0)):
            fail("instance queue does not follow [Q + in - phi]^+")
        bound = np.maximum(before["lengths"] - rates, 0) + np.maximum(inflow, 0)
        if np.any(after > bound):
            fail("instance queue exceeds [Q - phi]^+ + arrivals")
        sent = np.bincount(dec.fwd_dst, weights=dec.fwd_cnt, minlength=flat.n_instances)
        adm = np.zeros(flat.n_instances)
        np.add.at(adm, flat.ingress_idx, dec.mu)
        if np.any(inflow != sent + adm):
            fail("instance inflow differs from forwarded plus admitted requests")
        if np.any(before["carries"] > nominal):
            fail("carry exceeds last slot's service rate")
        # carries never exceed the service rate that produced them
        c = st.carries()
        if np.any(c > rates):
            fail("carry exceeds the service rate")
        if np.any((c > 0) & (flat.inst_terminal == 1)):
            fail("terminal instance holds a carry")
        # conservation and FIFO
        if st.admitted_real != q.real_in_system + q.completed_real:
            fail(f"real requests not conserved: admitted {st.admitted_real}, "
                 f"in system {q.real_in_system}, done {q.completed_real}")
        if st.admitted_phantom != q.phantom_in_system + q.completed_phantom:
            fail("phantom requests not conserved")
        if q.fifo_violations:
            fail("FIFO order violated")


# ---------------------------------------------------------------- runs

@dataclass
class RunResult:
    summary: RunSummary
    m: np.ndarray
    g: np.ndarray
    h: np.ndarray
    completions: np.ndarray
    config: dict
    histogram: np.ndarray = None
    extras: dict = field(default_factory=dict)

    def slots_csv(self, header: bool = True) -> str:
        lines = []
        if header:
            lines.append(f"# created={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
        lines.append("slot,m,g,h,completions")
        rows = zip(self.m.tolist(), self.g.tolist(), self.h.tolist(), self.completions.tolist())
        for t, (m, g, h, c) in enumerate(rows):
            lines.append(f"{t},{m!r},{g!r},{h!r},{c}")
        return "\n".join(lines) + "\n"

    def summary_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "summary": self.summary.to_dict(),
                "extras": self.extras, "config": self.config}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        a, b = out / "slots.csv", out / "summary.json"
        a.write_text(self.slots_csv())
        b.write_text(json.dumps(clean_json(self.summary_dict()), indent=2, sort_keys=True, default=_json_default) + "\n")
        return a, b


def clean_json(obj):
    """Replace NaN/inf floats (e.g. no completed requests) with ``None``."""
    if isinstance(obj, dict):
        return {k: clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    return obj


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def build_simulation(config: SimulationConfig, snapshot=None) -> Simulation:
    """Model, workload and windows for ``config.seed``; streams are independent per concern."""
    cfg = config.raw
    r_topo, r_model, r_comm, r_work, r_pred, r_sched = seed_streams(config.seed)
    if cfg["model"].get("seed") is not None:
        r_topo, r_model, r_comm = seed_streams(int(cfg["model"]["seed"]))[:3]
    model = build_model(cfg, r_topo, r_model, r_comm)
    K = len(model.catalog.services)
    wl = cfg["workload"]
    if wl["kind"] == "trace":
        trace = load_trace(wl["trace"], wl.get("trace_mode", "counts"), config.slot_length_ms,
                           int(wl["a_max"]))
        if trace.n_services == 1 and K > 1:
            trace = ArrivalTrace(np.repeat(trace.counts, K, axis=0), trace.slot_length_ms)
    elif wl["kind"] == "poisson":
        trace = generate_poisson(arrival_rates(cfg, model), config.horizon, r_work,
                                 int(wl["a_max"]), config.slot_length_ms)
    else:
        raise ValueError(f"unknown workload kind {wl['kind']!r}")
    explicit = list(cfg["prediction"].get("windows") or [])
    if config.forecaster.learned:
        sizes = [1] * K
    elif explicit:
        sizes = [int(x) for x in np.broadcast_to(np.asarray(explicit), (K,))]
    elif "servers" in cfg["model"]:
        sizes = [k.window_size for k in model.catalog.services]
    else:
        sizes = assign_window_sizes(config.d_avg, K, r_pred)
    jitter = float(cfg["topology"]["variation"]) if cfg["topology"].get("jitter") else 0.0
    return Simulation(model, trace, config.params, config.strategy, config.forecaster, sizes,
                      rng_predict=r_pred, rng_sched=r_sched, cost_mode=config.cost_mode,
                      debug=config.debug, backend=config.backend, comm_jitter=jitter)


def run(config: SimulationConfig, snapshot_path=None) -> RunResult:
    """Execute ``config.horizon`` slots from an empty system."""
    sim = build_simulation(config)
    T = config.horizon
    m, g, h = np.zeros(T), np.zeros(T), np.zeros(T)
    comp = np.zeros(T, dtype=np.int64)
    snap = open(snapshot_path, "w") if snapshot_path else None
    try:
        if snap:
            snap.write("slot,queue,length,carry\n")
        for t in range(T):
            if snap:
                for i, (l, c) in enumerate(zip(sim.state.lengths(), sim.state.carries())):
                    snap.write(f"{t},{i},{l},{c}\n")
            r = sim.step()
            m[t], g[t], h[t], comp[t] = r.m, r.g, r.h, r.completions
    finally:
        if snap:
            snap.close()
    q = sim.state.queues
    hist = q.response_histogram()
    a_max = float(sim.trace.counts.max()) if sim.trace.counts.size else 0.0
    bound = model_bound_B(_with_windows(sim), config.params.alpha, a_max)
    labels = {"V": config.params.V, "alpha": config.params.alpha, "D_avg": config.d_avg,
              "scheduler": config.strategy.label, "forecaster": config.forecaster.variant,
              "seed": config.seed}
    summary = summarize(m, g, h, comp, hist, config.params.gamma, config.slot_length_ms,
                        config.warmup, q.pre_served, bound, labels)
    extras = {
        "backend": kernels.BACKEND if config.backend == "auto" else config.backend,
        "window_sizes": sim.window_sizes,
        "admitted_real": int(sim.state.admitted_real),
        "admitted_phantom": int(sim.state.admitted_phantom),
        "completed_phantom": int(q.completed_phantom),
        "dropped_phantoms": int(sum(w.dropped_phantoms for w in sim.state.windows)),
        "late_real": int(sum(w.late_real for w in sim.state.windows)),
        "in_system": int(q.real_in_system + q.phantom_in_system),
    }
    return RunResult(summary, m, g, h, comp, copy.deepcopy(config.raw), hist, extras)


def _with_windows(sim: Simulation) -> SystemModel:
    cat = sim.model.catalog.with_windows(sim.window_sizes)
    return SystemModel(sim.model.servers, cat, sim.model.placement, sim.model.comm_cost)


def _run_seed(args):
    config, seed = args
    return run(config.with_seed(seed))


def replicate(config: SimulationConfig, workers: int = 1) -> tuple[list[RunResult], dict]:
    """Runs with seeds ``seed, seed+1, ...``; results come back in seed order."""
    seeds = [config.seed + r for r in range(config.replications)]
    jobs = [(config, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    return results, aggregate([r.summary for r in results])
