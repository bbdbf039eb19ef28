import numpy as np
import pytest

from poscars.model import (Placement, Server, ServiceCatalog, ServiceChainSpec, SystemModel, VnfSpec,
                           make_options)
from poscars.queues import QueueState
from poscars.workload import PredictionWindow


def small_model(chains, hosts, capacity, unit_cost=None, comm=None, theta=1.0, y_max=2, phi_max=None,
                windows=None):
    """Model from a chain list (VNF ids per service) and a host list per VNF."""
    S = len(capacity)
    unit_cost = unit_cost if unit_cost is not None else [1.0] * S
    servers = tuple(Server(s, (int(capacity[s]),), (float(unit_cost[s]),)) for s in range(S))
    phi = phi_max or max(1, int(theta * y_max))
    vnfs, services = [], []
    for k, chain in enumerate(chains):
        for j, f in enumerate(chain):
            assert f == len(vnfs)
            vnfs.append(VnfSpec(f, k, j + 1, (theta,), phi, make_options(y_max)))
        services.append(ServiceChainSpec(k, tuple(chain), (windows or [0] * len(chains))[k]))
    pairs = [(f, s) for f, ss in enumerate(hosts) for s in ss]
    if comm is None:
        comm = np.ones((S, S)) - np.eye(S)
    return SystemModel(servers, ServiceCatalog(tuple(services), tuple(vnfs)),
                       Placement.from_pairs(pairs), np.asarray(comm, dtype=float))


def empty_state(model, backend="auto", window_counts=None):
    """Queue state with one window per service holding ``window_counts[k]`` real requests."""
    flat = model.flatten()
    windows = []
    for k in range(len(model.catalog.services)):
        w = PredictionWindow(k, 0)
        counts = (window_counts or {}).get(k, [0])
        for d, c in enumerate(counts):
            w.fill(d, c, c, 0)
        w.size = len(counts) - 1
        windows.append(w)
    return QueueState.empty(flat, windows, backend)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(rng, max_servers=3, max_services=2, max_hosts=None, y_max=3):
    """Small random model: at most ``max_servers`` servers and ``max_services`` chains of length 2-3."""
    S = int(rng.integers(1, max_servers + 1))
    K = int(rng.integers(1, max_services + 1))
    max_hosts = max_hosts or S
    chains, hosts = [], []
    for _ in range(K):
        L = int(rng.integers(2, 4))
        chains.append(list(range(len(hosts), len(hosts) + L)))
        for _ in range(L):
            n = int(rng.integers(1, min(S, max_hosts) + 1))
            hosts.append(sorted(int(s) for s in rng.choice(S, size=n, replace=False)))
    cap = rng.integers(y_max, y_max + 4, size=S)
    lam = np.round(rng.uniform(0.5, 3.0, size=S), 2)
    w = np.round(rng.uniform(0.5, 3.0, size=(S, S)), 2)
    w = np.triu(w, 1) + np.triu(w, 1).T
    theta = float(rng.choice([1.0, 1.5, 2.0]))
    return small_model(chains, hosts, cap, lam, w, theta=theta, y_max=y_max)


def random_state(rng, model, max_queue=8):
    """Random backlogs and carries; carries sit only on non-terminal instances."""
    st = empty_state(model)
    fm = st.flat
    for i in range(fm.n_instances):
        st.queues.push(i, 0, int(rng.integers(0, max_queue + 1)), False)
        if not fm.inst_terminal[i]:
            st.queues.set_carry(i, 0, int(rng.integers(0, fm.inst_phi_max[i] + 1)), False)
    return st


# acceptance criteria report: criterion number -> (ok, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
