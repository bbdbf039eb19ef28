"""POSCARS per-slot decisions: admission, service chaining, resource allocation.

All three decisions are computed from one snapshot of the queue state.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .queues import ConstraintViolation, DecisionSet, QueueState, check_capacity


class SchedulingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlParams:
    V: float = 10.0
    alpha: float = 10.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.V < 0 or self.alpha < 0 or self.gamma < 0:
            raise ValueError("V, alpha and gamma must be non-negative")

    def scaled(self, c: float) -> "ControlParams":
        return ControlParams(self.V * c, self.alpha * c, self.gamma)


# ---------------------------------------------------------------- admission

def even_split(total: int, n: int) -> list[int]:
    """Largest-remainder split of ``total`` into ``n`` parts; extras go to the first parts."""
    base, rem = divmod(int(total), n)
    return [base + (1 if j < rem else 0) for j in range(n)]


def earliest_first(counts, total: int) -> list[int]:
    """Take ``total`` from ``counts`` starting at index 0."""
    out = []
    for c in counts:
        t = min(c, total)
        out.append(t)
        total -= t
    if total:
        raise ValueError("not enough requests to admit")
    return out


def admission_amount(qp: int, q0: int, least_ingress_queue: int, alpha: float) -> int:
    """Current-slot requests only when every least-loaded ingress queue outweighs the prediction queue."""
    if alpha * least_ingress_queue > qp:
        return q0
    return qp


def decide_admission(state: QueueState, params: ControlParams, lengths=None):
    """Returns ``(mu, delta_d)`` for all services."""
    flat = state.flat
    q = (state.lengths() if lengths is None else lengths).tolist()
    mu = [0] * len(flat.ingress_idx)
    delta_d = []
    e0 = 0
    for win, group in zip(state.windows, flat.ingress_groups):
        ql = [q[i] for i in group]
        qmin = min(ql)
        counts = win.counts()
        total = admission_amount(sum(counts), counts[0] if counts else 0, qmin, params.alpha)
        star = [e0 + j for j, x in enumerate(ql) if x == qmin]
        for e, n in zip(star, even_split(total, len(star))):
            mu[e] = n
        delta_d.append(earliest_first(counts, total))
        e0 += len(group)
    return np.array(mu, dtype=np.int64), delta_d


# ---------------------------------------------------------------- chaining

def chaining_score(V: float, w: float, alpha: float, succ_queue: float, carry: float) -> float:
    """Price of sending ``carry`` requests over a link of cost ``w`` to a queue of ``succ_queue``.

    Unreachable links (``w = inf``) score ``inf``.
    """
    if math.isinf(w):
        return math.inf
    return (V * w + alpha * succ_queue) * carry


def run_chaining(mode: int, state: QueueState, comm: np.ndarray, params: ControlParams,
                 keys=None, uinst=None, d: int = 1, batch: int = 1, lengths=None,
                 carries=None, backend: str = "auto"):
    """Run the chaining kernel; returns ``(x_target, src, dst, cnt)``."""
    flat = state.flat
    q = state.lengths() if lengths is None else lengths
    c = state.carries() if carries is None else carries
    n = flat.n_instances
    if keys is None:
        keys = np.zeros(len(flat.succ_idx))
    if uinst is None:
        uinst = np.zeros(n)
    cap = n + int(c.sum()) + 1
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    cnt = np.empty(cap, dtype=np.int64)
    x = np.empty(n, dtype=np.int64)
    na = kernels.get(backend).chain_targets(
        mode, float(params.V), float(params.alpha), comm, q, flat.inst_server, flat.succ_ptr,
        flat.succ_idx, c, flat.inst_phi_max, keys, uinst, int(d), int(batch), src, dst, cnt, x)
    if na == kernels.ERR_NO_SUCCESSOR:
        raise SchedulingError("an instance has no reachable successor")
    return x, src[:na], dst[:na], cnt[:na]


def decide_chaining(state: QueueState, comm: np.ndarray, params: ControlParams, **kw):
    """Each non-terminal instance picks the successor minimising ``V*w + alpha*Q``."""
    return run_chaining(kernels.POSCARS, state, comm, params, **kw)


# ---------------------------------------------------------------- allocation

def net_cost(V: float, gamma: float, unit_cost, alpha: float, queue: float, rate: float,
             option) -> float:
    """Energy price of ``option`` minus the queue-weighted service it buys.

    ``rate`` is the service rate the option yields.
    """
    energy = sum(l * y for l, y in zip(unit_cost, option))
    return V * gamma * energy - alpha * queue * rate


def decide_allocation(state: QueueState, params: ControlParams, lengths=None,
                      backend: str = "auto") -> np.ndarray:
    flat = state.flat
    q = state.lengths() if lengths is None else lengths
    out = np.zeros(flat.n_instances, dtype=np.int64)
    kernels.get(backend).allocate(
        float(params.V), float(params.gamma), float(params.alpha), q, flat.srv_ptr, flat.srv_inst,
        flat.iopt_ptr, flat.iopt_res, flat.iopt_rate, flat.iopt_cost, flat.capacity, out)
    return out


def optimal_allocation(state: QueueState, params: ControlParams, server: int, lengths=None):
    """Exhaustive minimiser of the server's total net cost (reference for small instances).

    Returns ``(choice per resident instance, total net cost)``.
    """
    flat = state.flat
    q = state.lengths() if lengths is None else lengths
    insts = flat.srv_inst[flat.srv_ptr[server]:flat.srv_ptr[server + 1]]
    ranges = [range(flat.iopt_ptr[i + 1] - flat.iopt_ptr[i]) for i in insts]
    best, best_r = None, math.inf
    for combo in itertools.product(*ranges):
        rows = [flat.iopt_ptr[i] + o for i, o in zip(insts, combo)]
        used = flat.iopt_res[rows].sum(axis=0) if rows else 0
        if np.any(used > flat.capacity[server]):
            continue
        r = sum(params.V * params.gamma * flat.iopt_cost[row] - params.alpha * q[i] * flat.iopt_rate[row]
                for i, row in zip(insts, rows))
        if r < best_r:
            best, best_r = dict(zip(map(int, insts), combo)), r
    return best, best_r


# ---------------------------------------------------------------- objective

def slot_objective(state: QueueState, dec: DecisionSet, params: ControlParams, comm: np.ndarray,
                   lengths=None, carries=None, qp=None, check: bool = True) -> float:
    """Per-slot transformed objective evaluated at the pre-decision snapshot."""
    flat = state.flat
    q = state.lengths() if lengths is None else lengths
    c = state.carries() if carries is None else carries
    qp = state.qp() if qp is None else qp
    V, a = params.V, params.alpha
    total = 0.0
    for k in range(len(state.windows)):
        lo, hi = flat.ingress_ptr[k], flat.ingress_ptr[k + 1]
        adm = int(dec.mu[lo:hi].sum())
        if check:
            counts = state.windows[k].counts()
            if not (counts[0] if counts else 0) <= adm <= sum(counts):
                raise ConstraintViolation(f"service {k}: infeasible admission")
        for e in range(lo, hi):
            total += (-qp[k] + a * q[flat.ingress_idx[e]]) * dec.mu[e]
    if dec.batched:
        pairs = zip(dec.fwd_src, dec.fwd_dst, dec.fwd_cnt)
    else:
        pairs = [(i, dec.x_target[i], c[i]) for i in range(flat.n_instances) if flat.inst_terminal[i] == 0]
    for s, t, n in pairs:
        if check and t < 0:
            raise ConstraintViolation(f"instance {s}: no successor chosen")
        if n:
            total += chaining_score(V, comm[flat.inst_server[s], flat.inst_server[t]], a, q[t], n)
    if check:
        check_capacity(flat, dec.alloc)
    rows = flat.iopt_ptr[:-1] + dec.alloc
    total += float(np.sum(V * params.gamma * flat.iopt_cost[rows] - a * q * flat.iopt_rate[rows]))
    return total


def decide(state: QueueState, comm: np.ndarray, params: ControlParams, strategy=None, rng=None,
           backend: str = "auto") -> DecisionSet:
    """All three decisions from one snapshot; ``strategy`` defaults to POSCARS chaining."""
    from .variants import ChainingStrategy

    strategy = strategy or ChainingStrategy()
    q = state.lengths()
    c = state.carries()
    mu, dd = decide_admission(state, params, lengths=q)
    x, src, dst, cnt = strategy.chain(state, comm, params, rng, lengths=q, carries=c, backend=backend)
    alloc = decide_allocation(state, params, lengths=q, backend=backend)
    return DecisionSet(mu, dd, x, src, dst, cnt, alloc, batched=strategy.batched)
