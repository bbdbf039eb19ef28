"""Fat-Tree and Jellyfish substrate graphs and the derived communication costs."""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

SWITCH, HOST, NFV = "switch", "host", "nfv-server"


class TopologyError(ValueError):
    pass


@dataclass
class SwitchGraph:
    graph: nx.Graph
    name: str = ""

    def nodes_of(self, kind: str) -> list:
        return sorted(n for n, k in self.graph.nodes(data="kind") if k == kind)

    @property
    def switches(self) -> list:
        return self.nodes_of(SWITCH)

    @property
    def end_nodes(self) -> list:
        return sorted(n for n, k in self.graph.nodes(data="kind") if k != SWITCH)

    @property
    def nfv_servers(self) -> list:
        return self.nodes_of(NFV)

    def is_connected(self) -> bool:
        return self.graph.number_of_nodes() > 0 and nx.is_connected(self.graph)


def build_fat_tree(k: int, nfv_per_pod: int = 1, seed=None) -> SwitchGraph:
    """Standard k-ary fat-tree; ``nfv_per_pod`` end nodes per pod host VNFs."""
    if k < 2 or k % 2:
        raise TopologyError(f"fat-tree needs an even k >= 2, got {k}")
    half = k // 2
    per_pod = half * half
    if not 0 <= nfv_per_pod <= per_pod:
        raise TopologyError(f"nfv_per_pod must lie in [0, {per_pod}]")
    rng = np.random.default_rng(seed)
    g = nx.Graph()
    nid = iter(range(10**9))
    core = [next(nid) for _ in range(half * half)]
    for c in core:
        g.add_node(c, kind=SWITCH, layer="core")
    for p in range(k):
        aggs = [next(nid) for _ in range(half)]
        edges = [next(nid) for _ in range(half)]
        for a_i, a in enumerate(aggs):
            g.add_node(a, kind=SWITCH, layer="agg", pod=p)
            for c in core[a_i * half:(a_i + 1) * half]:
                g.add_edge(a, c)
        pod_hosts = []
        for e in edges:
            g.add_node(e, kind=SWITCH, layer="edge", pod=p)
            for a in aggs:
                g.add_edge(e, a)
            for _ in range(half):
                h = next(nid)
                g.add_node(h, kind=HOST, pod=p)
                g.add_edge(h, e)
                pod_hosts.append(h)
        for h in rng.choice(pod_hosts, size=nfv_per_pod, replace=False):
            g.nodes[int(h)]["kind"] = NFV
    return SwitchGraph(g, name=f"fat-tree(k={k})")


def _random_pairing(n: int, degree: int, rng) -> list[list[int]]:
    stubs = np.repeat(np.arange(n), degree)
    rng.shuffle(stubs)
    return [[int(stubs[i]), int(stubs[i + 1])] for i in range(0, len(stubs), 2)]


def _key(u, v):
    return (u, v) if u <= v else (v, u)


def _repair_simple(edges: list[list[int]], rng, max_rounds: int) -> None:
    """Degree-preserving swaps until there are no self-loops or parallel edges."""
    m = len(edges)
    for _ in range(max_rounds):
        counts: dict = {}
        for u, v in edges:
            counts[_key(u, v)] = counts.get(_key(u, v), 0) + 1
        bad = [i for i, (u, v) in enumerate(edges) if u == v or counts[_key(u, v)] > 1]
        if not bad:
            return
        i = bad[int(rng.integers(len(bad)))]
        j = int(rng.integers(m))
        if i == j:
            continue
        u, v = edges[i]
        x, y = edges[j]
        if rng.random() < 0.5:
            x, y = y, x
        if u == x or v == y:
            continue
        new1, new2 = _key(u, x), _key(v, y)
        if new1 == new2 or counts.get(new1, 0) or counts.get(new2, 0):
            continue
        edges[i] = [u, x]
        edges[j] = [v, y]
    raise TopologyError("could not repair random pairing into a simple graph")


def _components(n: int, edges) -> list[list[int]]:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, q = [], deque([s])
        while q:
            u = q.popleft()
            comp.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    q.append(w)
        comps.append(comp)
    return comps


def _repair_connected(edges: list[list[int]], n: int, rng, max_rounds: int) -> None:
    """Merge components with 2-edge swaps ``(u,v),(x,y) -> (u,x),(v,y)``."""
    for _ in range(max_rounds):
        comps = _components(n, edges)
        if len(comps) == 1:
            return
        label = {}
        for c, nodes in enumerate(comps):
            for u in nodes:
                label[u] = c
        in_a = [i for i, (u, _) in enumerate(edges) if label[u] == 0]
        in_b = [i for i, (u, _) in enumerate(edges) if label[u] == 1]
        i = in_a[int(rng.integers(len(in_a)))]
        j = in_b[int(rng.integers(len(in_b)))]
        u, v = edges[i]
        x, y = edges[j]
        edges[i] = [u, x]
        edges[j] = [v, y]
    raise TopologyError("could not connect the random regular graph")


def build_jellyfish(n_switches: int, switch_degree: int, servers_per_switch: int,
                    n_nfv: int, seed=None) -> SwitchGraph:
    """Random regular switch graph (seeded pairing + swap repair) with attached servers."""
    n, d = int(n_switches), int(switch_degree)
    if n < 1 or d < 1 or d >= n or (n * d) % 2:
        raise TopologyError(f"degree sequence n={n}, d={d} is not realizable")
    if d == 1 and n > 2:
        raise TopologyError("a connected 1-regular graph needs exactly 2 switches")
    total_servers = n * servers_per_switch
    if not 0 <= n_nfv <= total_servers:
        raise TopologyError("n_nfv exceeds the number of attached servers")
    rng = np.random.default_rng(seed)
    edges = _random_pairing(n, d, rng)
    rounds = 200 * len(edges) + 1000
    for _ in range(50):
        _repair_simple(edges, rng, rounds)
        _repair_connected(edges, n, rng, rounds)
        # a merge swap can create a parallel edge; alternate until both hold
        keys = [_key(u, v) for u, v in edges]
        if len(set(keys)) == len(keys) and all(u != v for u, v in edges):
            break
    else:
        raise TopologyError("jellyfish repair did not converge")
    g = nx.Graph()
    for s in range(n):
        g.add_node(s, kind=SWITCH)
    g.add_edges_from(map(tuple, edges))
    servers = []
    nid = n
    for s in range(n):
        for _ in range(servers_per_switch):
            g.add_node(nid, kind=HOST, switch=s)
            g.add_edge(nid, s)
            servers.append(nid)
            nid += 1
    for h in rng.choice(servers, size=n_nfv, replace=False) if n_nfv else []:
        g.nodes[int(h)]["kind"] = NFV
    return SwitchGraph(g, name=f"jellyfish(n={n},d={d})")


def hop_matrix(graph: SwitchGraph | nx.Graph, servers=None) -> np.ndarray:
    """BFS hop counts between NFV servers; ``-1`` marks unreachable pairs."""
    g = graph.graph if isinstance(graph, SwitchGraph) else graph
    if servers is None:
        servers = sorted(n for n, k in g.nodes(data="kind") if k == NFV)
    idx = {s: i for i, s in enumerate(servers)}
    hops = np.full((len(servers), len(servers)), -1, dtype=np.int64)
    for s in servers:
        dist = nx.single_source_shortest_path_length(g, s)
        for t, h in dist.items():
            if t in idx:
                hops[idx[s], idx[t]] = h
    return hops


def unreachable_pairs(hops: np.ndarray) -> list[tuple[int, int]]:
    return [tuple(map(int, p)) for p in np.argwhere(hops < 0)]


@dataclass(frozen=True)
class CommCostMatrix:
    cost: np.ndarray = field(repr=False)
    hops: np.ndarray = field(repr=False)

    def jittered(self, base_cost: float, variation_frac: float, rng) -> np.ndarray:
        """Fresh per-slot draw around the hop-proportional cost (symmetric)."""
        return _draw_costs(self.hops, base_cost, variation_frac, rng)


def _draw_costs(hops, base_cost, variation_frac, rng) -> np.ndarray:
    n = hops.shape[0]
    u = rng.uniform(-variation_frac, variation_frac, size=(n, n))
    u = np.triu(u, 1)
    u = u + u.T
    cost = hops.astype(float) * base_cost * (1.0 + u)
    cost[hops < 0] = np.inf
    np.fill_diagonal(cost, 0.0)
    return cost


def comm_cost_matrix(hops: np.ndarray, base_cost: float = 1.0, variation_frac: float = 0.1,
                     seed=None) -> CommCostMatrix:
    """Per-request cost proportional to hops, with a uniform +-variation per server pair."""
    if not 0 <= variation_frac < 1:
        raise TopologyError("variation_frac must lie in [0, 1)")
    hops = np.asarray(hops, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return CommCostMatrix(_draw_costs(hops, base_cost, variation_frac, rng), hops)


def write_edge_list(graph: SwitchGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {graph.name}\n")
        for n, kind in sorted(graph.graph.nodes(data="kind")):
            fh.write(f"# node {n} {kind}\n")
        for u, v in sorted(_key(u, v) for u, v in graph.graph.edges()):
            fh.write(f"{u} {v}\n")


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(matrix):
            w.writerow(["inf" if np.isinf(x) else repr(float(x)) if isinstance(x, float) else x
                        for x in row.tolist()])
