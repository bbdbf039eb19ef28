"""Per-slot costs, run summaries, response times and the drift bound constant."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .queues import RequestRecord


@dataclass
class SlotMetrics:
    slot: int
    m: float  # communication cost
    g: float  # energy cost
    h: float  # weighted total queue length
    completions: int
    pre_served: int = 0


def slot_comm_cost(src, dst, cnt, comm: np.ndarray, inst_server=None) -> float:
    """Sum of ``count * w`` over forwarded batches.

    ``src``/``dst`` are server ids, or instance ids when ``inst_server`` maps
    instances to servers.
    """
    src, dst, cnt = np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), np.asarray(cnt)
    if len(cnt) == 0:
        return 0.0
    if inst_server is not None:
        src, dst = inst_server[src], inst_server[dst]
    w = comm[src, dst]
    mask = cnt > 0
    return float(np.sum(cnt[mask] * w[mask]))


def slot_energy_cost(alloc, unit_cost) -> float:
    """``sum lambda_s . Y`` over instances.

    ``alloc`` is a list of ``(server, option_vector)`` and ``unit_cost`` the
    per-server cost vectors.
    """
    total = 0.0
    for s, y in alloc:
        total += float(np.dot(unit_cost[s], y))
    return total


def drift_bound_B(K: int, a_max: float, D: int, b_max: int, phi_max: float, alpha: float) -> float:
    """Constant term of the one-slot drift-plus-penalty bound."""
    a2 = a_max ** 2
    p2 = phi_max ** 2
    return (0.5 * (K * a2 + K * (D + 1) ** 2 * a2)
            + 0.5 * alpha * K * b_max * ((D + 1) ** 2 * a2 + p2)
            + 0.5 * alpha * K * b_max * (b_max ** 2 * p2 + p2))


def model_bound_B(model, alpha: float, a_max: float) -> float:
    """``drift_bound_B`` with ``K``, ``D``, ``b_max`` and ``phi_max`` read off a model."""
    cat = model.catalog
    b_max = max(len(model.placement.hosts.get(f.id, ())) for f in cat.vnfs)
    D = max(k.window_size for k in cat.services)
    phi = max(f.phi_max for f in cat.vnfs)
    return drift_bound_B(len(cat.services), a_max, D, b_max, phi, alpha)


class PhantomRequestError(ValueError):
    pass


def response_time(record: RequestRecord, slot_length_ms: float = 10.0) -> float:
    """Milliseconds from true arrival to completion; pre-served requests score zero."""
    if record.phantom:
        raise PhantomRequestError("phantom requests have no response time")
    if record.completion_slot is None:
        raise ValueError("request has not completed")
    return max(0, record.completion_slot - record.arrival_slot) * slot_length_ms


def nearest_rank(hist: np.ndarray, q: float) -> float:
    """Nearest-rank percentile of a histogram over response slots (NaN when empty)."""
    n = int(hist.sum())
    if n == 0:
        return math.nan
    rank = max(1, math.ceil(q / 100.0 * n))
    return float(np.searchsorted(np.cumsum(hist), rank))


@dataclass
class ResponseStats:
    count: int
    mean: float
    p50: float
    p95: float
    p99: float

    @classmethod
    def from_histogram(cls, hist: np.ndarray, slot_length_ms: float) -> "ResponseStats":
        hist = np.asarray(hist, dtype=np.int64)
        n = int(hist.sum())
        mean = float(np.dot(np.arange(len(hist)), hist) / n) if n else math.nan
        return cls(n, mean * slot_length_ms,
                   *(nearest_rank(hist, q) * slot_length_ms for q in (50, 95, 99)))


@dataclass
class RunSummary:
    time_avg_cost: float
    time_avg_m: float
    time_avg_g: float
    time_avg_h: float
    max_h: float
    response_time_ms: ResponseStats
    completed: int
    pre_served: int
    slots: int
    bound_B: float | None = None
    labels: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.bound_B is not None and self.labels.get("V"):
            d["bound_B_over_V"] = self.bound_B / float(self.labels["V"])
        return d


def summarize(m, g, h, completions, hist, gamma: float, slot_length_ms: float, warmup: int = 0,
              pre_served: int = 0, bound_B=None, labels=None) -> RunSummary:
    m, g, h = (np.asarray(x, dtype=float)[warmup:] for x in (m, g, h))
    T = len(m)
    if T < 1:
        raise ValueError("summary needs at least one slot")
    cost = m + gamma * g
    return RunSummary(
        time_avg_cost=float(cost.sum() / T),
        time_avg_m=float(m.sum() / T),
        time_avg_g=float(g.sum() / T),
        time_avg_h=float(h.sum() / T),
        max_h=float(h.max()),
        response_time_ms=ResponseStats.from_histogram(hist, slot_length_ms),
        completed=int(np.sum(np.asarray(completions)[warmup:])),
        pre_served=int(pre_served),
        slots=T,
        bound_B=bound_B,
        labels=dict(labels or {}),
    )


def aggregate(summaries: list[RunSummary]) -> dict:
    """Mean and sample std of the scalar summary fields across replications."""
    fields = {
        "time_avg_cost": [s.time_avg_cost for s in summaries],
        "time_avg_m": [s.time_avg_m for s in summaries],
        "time_avg_g": [s.time_avg_g for s in summaries],
        "time_avg_h": [s.time_avg_h for s in summaries],
        "response_mean_ms": [s.response_time_ms.mean for s in summaries],
        "response_p95_ms": [s.response_time_ms.p95 for s in summaries],
    }
    out = {"replications": len(summaries)}
    for k, v in fields.items():
        arr = np.asarray(v, dtype=float)
        out[f"{k}_mean"] = float(arr.mean())
        out[f"{k}_std"] = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return out
