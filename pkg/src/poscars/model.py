"""Static system description: servers, VNFs, service chains and placement.

Everything here is immutable after construction.  ``SystemModel.flatten``
turns the object graph into the flat integer arrays consumed by the
simulation kernels.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class ModelError(ValueError):
    """Raised when a model cannot be constructed."""


class InvalidOptionError(ModelError):
    """An allocation vector is not one of the VNF's options."""


class NotFoundError(KeyError):
    """Unknown VNF, server or service id."""


def _vec(values: Iterable, kind=int) -> tuple:
    return tuple(kind(v) for v in values)


@dataclass(frozen=True)
class Server:
    id: int
    capacity: tuple[int, ...]
    unit_cost: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacity", _vec(self.capacity))
        object.__setattr__(self, "unit_cost", _vec(self.unit_cost, float))
        if len(self.capacity) != len(self.unit_cost):
            raise ModelError(f"server {self.id}: capacity/unit_cost length mismatch")
        if any(c < 0 for c in self.capacity) or any(c < 0 for c in self.unit_cost):
            raise ModelError(f"server {self.id}: negative resource entry")


@dataclass(frozen=True)
class VnfSpec:
    id: int
    service: int
    position: int  # 1-based index inside the chain
    theta: tuple[float, ...]
    phi_max: int
    options: tuple[tuple[int, ...], ...]
    name: str = ""

    def __post_init__(self):
        theta = _vec(self.theta, float)
        opts = {_vec(o) for o in self.options}
        opts.add((0,) * len(theta))
        object.__setattr__(self, "theta", theta)
        # lexicographic order puts the empty allocation first
        object.__setattr__(self, "options", tuple(sorted(opts)))
        if self.phi_max < 1:
            raise ModelError(f"vnf {self.id}: phi_max must be >= 1")
        for o in self.options:
            if len(o) != len(theta) or any(v < 0 for v in o):
                raise ModelError(f"vnf {self.id}: malformed option {o}")

    @property
    def n_resources(self) -> int:
        return len(self.theta)


@dataclass(frozen=True)
class ServiceChainSpec:
    id: int
    vnfs: tuple[int, ...]
    window_size: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vnfs", tuple(int(f) for f in self.vnfs))
        if len(self.vnfs) < 2:
            raise ModelError(f"service {self.id}: chain length must be >= 2")
        if len(set(self.vnfs)) != len(self.vnfs):
            raise ModelError(f"service {self.id}: repeated VNF in chain")
        if self.window_size < 0:
            raise ModelError(f"service {self.id}: negative window size")


@dataclass(frozen=True)
class Placement:
    hosted: Mapping[int, frozenset]  # server -> VNF ids
    hosts: Mapping[int, frozenset]  # VNF id -> servers

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "Placement":
        """Build from ``(vnf, server)`` pairs."""
        hosted: dict[int, set] = {}
        hosts: dict[int, set] = {}
        for f, s in pairs:
            hosts.setdefault(int(f), set()).add(int(s))
            hosted.setdefault(int(s), set()).add(int(f))
        return cls({s: frozenset(v) for s, v in hosted.items()},
                   {f: frozenset(v) for f, v in hosts.items()})

    def servers_of(self, f: int) -> list[int]:
        return sorted(self.hosts.get(f, ()))

    def vnfs_on(self, s: int) -> list[int]:
        return sorted(self.hosted.get(s, ()))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted((f, s) for f, ss in self.hosts.items() for s in ss)


@dataclass(frozen=True)
class ServiceCatalog:
    services: tuple[ServiceChainSpec, ...]
    vnfs: tuple[VnfSpec, ...]

    def __post_init__(self):
        for i, f in enumerate(self.vnfs):
            if f.id != i:
                raise ModelError("VNF ids must be 0..F-1 in order")
        for i, k in enumerate(self.services):
            if k.id != i:
                raise ModelError("service ids must be 0..K-1 in order")

    def vnf(self, f: int) -> VnfSpec:
        if not 0 <= f < len(self.vnfs):
            raise NotFoundError(f"unknown VNF {f}")
        return self.vnfs[f]

    @property
    def ingress(self) -> list[int]:
        return [k.vnfs[0] for k in self.services]

    @property
    def non_terminal(self) -> list[int]:
        return sorted(f for k in self.services for f in k.vnfs[:-1])

    def with_windows(self, windows: Sequence[int]) -> "ServiceCatalog":
        svc = tuple(ServiceChainSpec(k.id, k.vnfs, int(d), k.name)
                    for k, d in zip(self.services, windows))
        return ServiceCatalog(svc, self.vnfs)


def chain_neighbors(catalog: ServiceCatalog, f: int) -> tuple[int | None, int | None]:
    """Return ``(previous, next)`` VNF of ``f`` in its chain (``None`` at the ends)."""
    vnf = catalog.vnf(f)
    chain = catalog.services[vnf.service].vnfs
    j = chain.index(f)
    prev = chain[j - 1] if j > 0 else None
    nxt = chain[j + 1] if j + 1 < len(chain) else None
    return prev, nxt


def service_rate(vnf: VnfSpec, alloc: Sequence[int]) -> int:
    """Requests per slot the instance can process under ``alloc``.

    Linear in the allocation with a hard cap at ``phi_max``.
    """
    alloc = _vec(alloc)
    if alloc not in vnf.options:
        raise InvalidOptionError(f"{alloc} is not an option of VNF {vnf.id}")
    raw = sum(t * a for t, a in zip(vnf.theta, alloc))
    return min(vnf.phi_max, int(math.floor(raw + 1e-9)))


def make_options(y_max: Sequence[int] | int, max_capacity: Sequence[int] | None = None) -> tuple:
    """Cross product ``{0..y_max_i}`` per resource, truncated to fit ``max_capacity``."""
    if isinstance(y_max, int):
        y_max = (y_max,)
    ranges = [range(int(y) + 1) for y in y_max]
    opts = []
    for o in itertools.product(*ranges):
        if max_capacity is not None and any(a > c for a, c in zip(o, max_capacity)):
            continue
        opts.append(tuple(o))
    return tuple(opts)


@dataclass(frozen=True)
class SystemModel:
    servers: tuple[Server, ...]
    catalog: ServiceCatalog
    placement: Placement
    comm_cost: np.ndarray = field(repr=False)  # |S| x |S|, np.inf when unreachable

    @property
    def n_resources(self) -> int:
        return len(self.servers[0].capacity)

    def validate(self) -> list[str]:
        return validate_model(self.servers, self.catalog, self.placement, self.comm_cost)

    def flatten(self) -> "FlatModel":
        return FlatModel.build(self)


def validate_model(servers, catalog, placement, comm_cost=None) -> list[str]:
    """Collect invariant violations; an empty list means the model is usable."""
    problems: list[str] = []
    ids = {s.id for s in servers}
    if [s.id for s in servers] != list(range(len(servers))):
        problems.append("server ids must be 0..S-1 in order")
    R = {len(s.capacity) for s in servers} | {f.n_resources for f in catalog.vnfs}
    if len(R) > 1:
        problems.append("inconsistent resource dimension")
    for s in servers:
        if all(c < 1 for c in s.capacity):
            problems.append(f"server {s.id}: no resource with capacity >= 1")
    for s, fs in placement.hosted.items():
        for f in fs:
            if s not in placement.hosts.get(f, ()):
                problems.append(f"placement inconsistency: server {s} lists VNF {f}")
    for f, ss in placement.hosts.items():
        for s in ss:
            if f not in placement.hosted.get(s, ()):
                problems.append(f"placement inconsistency: VNF {f} lists server {s}")
            if s not in ids:
                problems.append(f"placement references unknown server {s}")
        if f >= len(catalog.vnfs):
            problems.append(f"placement references unknown VNF {f}")
    max_cap = None
    if servers and len(R) == 1:
        max_cap = tuple(max(col) for col in zip(*(s.capacity for s in servers)))
    for f in catalog.vnfs:
        hosts = placement.hosts.get(f.id, frozenset())
        if not hosts:
            problems.append(f"unplaced VNF {f.id}")
            continue
        for o in f.options:
            if max_cap is not None and any(a > c for a, c in zip(o, max_cap)):
                problems.append(f"VNF {f.id}: option {o} exceeds every server")
            fits = any(all(a <= c for a, c in zip(o, servers[s].capacity))
                       for s in hosts if s in ids)
            if not fits:
                problems.append(f"VNF {f.id}: option {o} fits no hosting server")
    for k in catalog.services:
        for j, f in enumerate(k.vnfs):
            v = catalog.vnfs[f] if f < len(catalog.vnfs) else None
            if v is None or v.service != k.id or v.position != j + 1:
                problems.append(f"service {k.id}: VNF {f} has wrong service/position")
    if comm_cost is not None:
        w = np.asarray(comm_cost, dtype=float)
        if w.shape != (len(servers), len(servers)):
            problems.append("communication cost matrix has wrong shape")
        elif np.any(np.diag(w) != 0) or np.any(w < 0):
            problems.append("communication cost matrix must be >= 0 with zero diagonal")
    return problems


@dataclass(frozen=True)
class FlatModel:
    """Array view of a ``SystemModel``; instance ``i`` is the i-th sorted ``(vnf, server)`` pair."""

    n_servers: int
    n_instances: int
    inst_vnf: np.ndarray
    inst_server: np.ndarray
    inst_terminal: np.ndarray  # uint8
    inst_phi_max: np.ndarray
    succ_ptr: np.ndarray  # CSR: successor instances, ascending server id
    succ_idx: np.ndarray
    ingress_ptr: np.ndarray  # CSR per service: ingress instances, ascending server id
    ingress_idx: np.ndarray
    srv_ptr: np.ndarray  # CSR per server: resident instances, ascending VNF id
    srv_inst: np.ndarray
    iopt_ptr: np.ndarray  # CSR per instance: options, lexicographic
    iopt_res: np.ndarray  # (rows, R) int64
    iopt_rate: np.ndarray
    iopt_cost: np.ndarray  # lambda_s . option
    capacity: np.ndarray  # (S, R) int64
    comm_cost: np.ndarray
    inst_of: dict  # (vnf, server) -> instance

    @functools.cached_property
    def ingress_groups(self) -> list[list[int]]:
        """Ingress instance ids per service, as plain lists."""
        p, idx = self.ingress_ptr.tolist(), self.ingress_idx.tolist()
        return [idx[p[k]:p[k + 1]] for k in range(len(p) - 1)]

    @classmethod
    def build(cls, model: SystemModel) -> "FlatModel":
        cat, pl = model.catalog, model.placement
        pairs = pl.pairs()
        inst_of = {p: i for i, p in enumerate(pairs)}
        inst_vnf = np.array([f for f, _ in pairs], dtype=np.int64)
        inst_server = np.array([s for _, s in pairs], dtype=np.int64)
        succ_ptr, succ_idx, term, phimax = [0], [], [], []
        for f, s in pairs:
            _, nxt = chain_neighbors(cat, f)
            term.append(1 if nxt is None else 0)
            phimax.append(cat.vnfs[f].phi_max)
            if nxt is not None:
                succ_idx.extend(inst_of[(nxt, s2)] for s2 in pl.servers_of(nxt))
            succ_ptr.append(len(succ_idx))
        ing_ptr, ing_idx = [0], []
        for k in cat.services:
            f = k.vnfs[0]
            ing_idx.extend(inst_of[(f, s)] for s in pl.servers_of(f))
            ing_ptr.append(len(ing_idx))
        srv_ptr, srv_inst = [0], []
        for s in range(len(model.servers)):
            srv_inst.extend(inst_of[(f, s)] for f in pl.vnfs_on(s))
            srv_ptr.append(len(srv_inst))
        iopt_ptr, res, rate, cost = [0], [], [], []
        for f, s in pairs:
            vnf = cat.vnfs[f]
            lam = model.servers[s].unit_cost
            for o in vnf.options:
                res.append(o)
                rate.append(service_rate(vnf, o))
                cost.append(float(sum(l * a for l, a in zip(lam, o))))
            iopt_ptr.append(len(res))
        i64 = lambda x: np.asarray(x, dtype=np.int64)
        return cls(
            n_servers=len(model.servers),
            n_instances=len(pairs),
            inst_vnf=inst_vnf,
            inst_server=inst_server,
            inst_terminal=np.asarray(term, dtype=np.uint8),
            inst_phi_max=i64(phimax),
            succ_ptr=i64(succ_ptr),
            succ_idx=i64(succ_idx),
            ingress_ptr=i64(ing_ptr),
            ingress_idx=i64(ing_idx),
            srv_ptr=i64(srv_ptr),
            srv_inst=i64(srv_inst),
            iopt_ptr=i64(iopt_ptr),
            iopt_res=np.asarray(res, dtype=np.int64).reshape(len(res), model.n_resources),
            iopt_rate=i64(rate),
            iopt_cost=np.asarray(cost, dtype=np.float64),
            capacity=np.asarray([s.capacity for s in model.servers], dtype=np.int64),
            comm_cost=np.ascontiguousarray(model.comm_cost, dtype=np.float64),
            inst_of=inst_of,
        )

    @property
    def max_successors(self) -> int:
        d = np.diff(self.succ_ptr)
        return int(d.max()) if len(d) else 0
