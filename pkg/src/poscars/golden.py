"""The two-VNF motivating scenario, replayed through the real queue engine.

One service ``a -> b``.  VNF ``a`` runs on server I, VNF ``b`` on servers II
and III; each server has two unit-cost cores and a core serves one request
per slot.  Forwarding from I costs 1 to II and 2 to III.  At slot ``t`` the
instance of ``b`` on II holds two requests, the one on III holds one, ``a``
carries one request processed in the previous slot and one new request
arrives.

* Decision 1 sends the carry to II and powers (1, 2, 1) cores: cost 5, one
  request left behind.
* Decision 2 sends it to III and powers (1, 2, 2) cores: cost 7, nothing left.
* With one slot of lookahead, the request due at ``t+1`` is admitted and
  processed by ``a`` at ``t`` and completes at ``t+1``: zero response time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Placement, Server, ServiceCatalog, ServiceChainSpec, SystemModel, VnfSpec
from .queues import DecisionSet
from .scheduler import ControlParams
from .sim import Simulation
from .workload import ArrivalTrace

SERVER_I, SERVER_II, SERVER_III = 0, 1, 2


def golden_model(window: int = 0) -> SystemModel:
    servers = tuple(Server(s, (2,), (1.0,)) for s in range(3))
    opts = ((0,), (1,), (2,))
    vnfs = (VnfSpec(0, 0, 1, (1.0,), 2, opts, name="a"),
            VnfSpec(1, 0, 2, (1.0,), 2, opts, name="b"))
    catalog = ServiceCatalog((ServiceChainSpec(0, (0, 1), window),), vnfs)
    placement = Placement.from_pairs([(0, SERVER_I), (1, SERVER_II), (1, SERVER_III)])
    comm = np.array([[0.0, 1.0, 2.0],
                     [1.0, 0.0, 1.0],
                     [2.0, 1.0, 0.0]])
    return SystemModel(servers, catalog, placement, comm)


def golden_simulation(window: int = 0, future_arrivals: int = 0, debug: bool = True) -> Simulation:
    """Simulation positioned at slot ``t = 0`` with the initial backlogs in place."""
    model = golden_model(window)
    trace = ArrivalTrace(np.array([[1, future_arrivals]], dtype=np.int64))
    sim = Simulation(model, trace, ControlParams(V=1.0, alpha=1.0, gamma=1.0), debug=debug)
    st, fm = sim.state, sim.flat
    a, b2, b3 = fm.inst_of[(0, SERVER_I)], fm.inst_of[(1, SERVER_II)], fm.inst_of[(1, SERVER_III)]
    st.queues.push(b2, -1, 2, False)
    st.queues.push(b3, -1, 1, False)
    st.queues.set_carry(a, -1, 1, False)
    st.admitted_real = 4
    st.nominal_rate = np.array([1, 0, 0], dtype=np.int64)
    return sim


def forced_decision(sim: Simulation, target_server: int, cores, admit_window=None) -> DecisionSet:
    """Decision that forwards ``a``'s carry to ``target_server`` and powers ``cores`` per instance."""
    fm = sim.flat
    a = fm.inst_of[(0, SERVER_I)]
    tgt = fm.inst_of[(1, target_server)]
    counts = sim.state.windows[0].counts()
    dd = list(counts) if admit_window is None else list(admit_window)
    mu = np.array([sum(dd)], dtype=np.int64)
    x = np.full(fm.n_instances, -1, dtype=np.int64)
    x[a] = tgt
    carry = int(sim.state.carries()[a])
    src = np.array([a] if carry else [], dtype=np.int64)
    dst = np.array([tgt] if carry else [], dtype=np.int64)
    cnt = np.array([carry] if carry else [], dtype=np.int64)
    alloc = np.empty(fm.n_instances, dtype=np.int64)
    for i in range(fm.n_instances):
        opts = sim.model.catalog.vnfs[int(fm.inst_vnf[i])].options
        alloc[i] = opts.index((int(cores[i]),))
    return DecisionSet(mu, [dd], x, src, dst, cnt, alloc)


@dataclass
class GoldenCheck:
    name: str
    expected: object
    actual: object

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


def run_golden() -> list[GoldenCheck]:
    checks = []
    for label, server, cores, cost, left in (("decision 1", SERVER_II, (1, 2, 1), 5, 1),
                                             ("decision 2", SERVER_III, (1, 2, 2), 7, 0)):
        sim = golden_simulation()
        r = sim.step(forced_decision(sim, server, cores))
        checks.append(GoldenCheck(f"{label}: total cost", cost, int(round(r.m + r.g))))
        checks.append(GoldenCheck(f"{label}: residual backlog", left, int(sim.state.lengths().sum())))

    # pre-service: a one-slot window reveals the request due at t+1
    sim = golden_simulation(window=1, future_arrivals=1)
    sim.step(forced_decision(sim, SERVER_III, (2, 2, 2), admit_window=(1, 1)))
    sim.step(forced_decision(sim, SERVER_III, (0, 2, 2)))
    done = completion_slot(sim, arrival=1)
    checks.append(GoldenCheck("pre-service: future request response (slots)", 0,
                              None if done is None else max(0, done - 1)))
    checks.append(GoldenCheck("pre-service: pre-served requests", 1, int(sim.state.queues.pre_served)))
    return checks


def completion_slot(sim: Simulation, arrival: int) -> int | None:
    """Slot in which the last request stamped ``arrival`` left the system, if it has."""
    q = sim.state.queues
    for i in range(sim.flat.n_instances):
        if any(a == arrival for a, _, _ in q.backlog(i) + q.carry(i)):
            return None
    if any(s.arrival == arrival and s.count for w in sim.state.windows for s in w.slots):
        return None
    return sim.t - 1
