"""Mutable queue state and the per-slot queue updates (admission, forwarding, processing)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import FlatModel
from .workload import PredictionWindow


class ConstraintViolation(RuntimeError):
    """A decision broke a feasibility constraint; signals a scheduler bug."""


@dataclass
class RequestRecord:
    service: int
    arrival_slot: int
    phantom: bool = False
    completion_slot: int | None = None


@dataclass
class DecisionSet:
    """One slot's decisions.

    ``mu[e]`` is the admission to ingress instance ``flat.ingress_idx[e]``;
    ``delta_d[k][d]`` the requests taken from window slot ``d`` of service
    ``k``.  Chaining is kept both as ``x_target`` (chosen successor instance
    per instance, ``-1`` when none/batched) and as the flat forwarding
    assignments ``(fwd_src, fwd_dst, fwd_cnt)``.  ``alloc[i]`` is the local
    option index of instance ``i``.
    """

    mu: np.ndarray
    delta_d: list
    x_target: np.ndarray
    fwd_src: np.ndarray
    fwd_dst: np.ndarray
    fwd_cnt: np.ndarray
    alloc: np.ndarray
    batched: bool = False

    @property
    def n_assign(self) -> int:
        return len(self.fwd_src)

    def as_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "delta_d": [list(map(int, d)) for d in self.delta_d],
            "x_target": self.x_target.tolist(),
            "forward": list(zip(self.fwd_src.tolist(), self.fwd_dst.tolist(), self.fwd_cnt.tolist())),
            "alloc": self.alloc.tolist(),
        }


@dataclass
class QueueState:
    flat: FlatModel
    windows: list[PredictionWindow]
    queues: object  # kernels.InstanceQueues
    nominal_rate: np.ndarray = None  # phi(Y(t-1)) per instance
    admitted_real: int = 0
    admitted_phantom: int = 0
    processed: np.ndarray = field(default=None, repr=False)

    @classmethod
    def empty(cls, flat: FlatModel, windows, backend: str = "auto") -> "QueueState":
        mod = kernels.get(backend)
        return cls(flat, list(windows), mod.InstanceQueues(flat.n_instances),
                   np.zeros(flat.n_instances, dtype=np.int64),
                   processed=np.zeros(flat.n_instances, dtype=np.int64))

    def qp(self) -> np.ndarray:
        return np.array([w.qp for w in self.windows], dtype=np.int64)

    def q0(self) -> np.ndarray:
        return np.array([w.q0 for w in self.windows], dtype=np.int64)

    def lengths(self) -> np.ndarray:
        return self.queues.lengths()

    def carries(self) -> np.ndarray:
        return self.queues.carries()


def apply_admission(state: QueueState, dec: DecisionSet) -> list[tuple[int, int, int, bool]]:
    """Drain the windows per ``delta_d`` and append the requests to ingress instances.

    Returns the pushed runs ``(instance, arrival, count, phantom)``.
    """
    flat = state.flat
    pushed = []
    mu_all = dec.mu.tolist()
    push = state.queues.push
    e0 = 0
    for k, (win, group) in enumerate(zip(state.windows, flat.ingress_groups)):
        mu = mu_all[e0:e0 + len(group)]
        e0 += len(group)
        dd = dec.delta_d[k]
        total = sum(mu)
        if not win.q0 and not any(mu):
            continue
        if min(mu) < 0 or sum(dd) != total:
            raise ConstraintViolation(f"service {k}: admission split does not match mu")
        q0, qp = win.q0, win.qp
        if not q0 <= total <= qp:
            raise ConstraintViolation(f"service {k}: admitted {total} outside [{q0}, {qp}]")
        runs = []
        for d, n in enumerate(dd):
            if n == 0:
                continue
            if d >= len(win.slots) or n > win.slots[d].count:
                raise ConstraintViolation(f"service {k}: delta^({d})={n} exceeds window slot")
            s = win.slots[d]
            take = min(n, s.real)
            if take:
                runs.append([s.arrival, take, False])
                s.real -= take
            if n - take:
                runs.append([s.arrival, n - take, True])
                s.phantom -= n - take
        ri = 0
        for inst, need in zip(group, mu):
            while need:
                run = runs[ri]
                take = min(need, run[1])
                push(inst, run[0], take, run[2])
                pushed.append((inst, run[0], take, run[2]))
                if run[2]:
                    state.admitted_phantom += take
                else:
                    state.admitted_real += take
                run[1] -= take
                need -= take
                if run[1] == 0:
                    ri += 1
    return pushed


def apply_forwarding(state: QueueState, dec: DecisionSet, check: bool = True):
    """Move every carry to its chosen successor(s); returns ``(src, dst, cnt)`` arrays."""
    flat = state.flat
    if check:
        carry = state.carries()
        sent = np.bincount(dec.fwd_src, weights=dec.fwd_cnt, minlength=flat.n_instances)
        bad = np.nonzero(sent != carry)[0]
        if len(bad):
            raise ConstraintViolation(f"instance {int(bad[0])} carries {int(carry[bad[0]])} "
                                      f"but forwards {int(sent[bad[0]])}: missing successor")
        if not dec.batched:
            nt = np.nonzero(flat.inst_terminal == 0)[0]
            for i in nt:
                t = dec.x_target[i]
                succ = flat.succ_idx[flat.succ_ptr[i]:flat.succ_ptr[i + 1]]
                if t not in succ:
                    raise ConstraintViolation(f"instance {i}: no valid successor chosen")
        for s, t in zip(dec.fwd_src, dec.fwd_dst):
            succ = flat.succ_idx[flat.succ_ptr[s]:flat.succ_ptr[s + 1]]
            if t not in succ:
                raise ConstraintViolation(f"instance {s} forwards to non-successor {t}")
    state.queues.forward(dec.fwd_src, dec.fwd_dst, dec.fwd_cnt, len(dec.fwd_src))
    return dec.fwd_src, dec.fwd_dst, dec.fwd_cnt


def allocation_rates(flat: FlatModel, alloc: np.ndarray) -> np.ndarray:
    return flat.iopt_rate[flat.iopt_ptr[:-1] + alloc]


def check_capacity(flat: FlatModel, alloc: np.ndarray) -> None:
    rows = flat.iopt_ptr[:-1] + alloc
    if np.any(alloc < 0) or np.any(rows >= flat.iopt_ptr[1:]):
        raise ConstraintViolation("allocation outside the option set")
    used = np.zeros_like(flat.capacity)
    np.add.at(used, flat.inst_server, flat.iopt_res[rows])
    if np.any(used > flat.capacity):
        s = int(np.nonzero((used > flat.capacity).any(axis=1))[0][0])
        raise ConstraintViolation(f"server {s}: allocation {used[s].tolist()} exceeds capacity")


def apply_processing(state: QueueState, alloc: np.ndarray, slot: int, check: bool = True) -> np.ndarray:
    """Serve ``min(phi(Y), backlog)`` per instance; returns processed counts per instance."""
    flat = state.flat
    if check:
        check_capacity(flat, alloc)
    rates = allocation_rates(flat, alloc)
    stale = state.queues.process(rates, slot, flat.inst_terminal, state.processed)
    if stale:
        raise ConstraintViolation(f"{stale} instance(s) kept un-forwarded carries")
    state.nominal_rate = rates
    return state.processed


def total_queue_snapshot(state_or_qp, alpha: float, lengths=None) -> float:
    """Weighted total queue length: prediction queues plus ``alpha`` times instance queues."""
    if isinstance(state_or_qp, QueueState):
        qp, lengths = state_or_qp.qp(), state_or_qp.lengths()
    else:
        qp = state_or_qp
    return float(np.sum(qp)) + alpha * float(np.sum(lengths))
