import networkx as nx
import numpy as np
import pytest

from poscars.topology import (NFV, SWITCH, TopologyError, build_fat_tree, build_jellyfish,
                              comm_cost_matrix, hop_matrix, unreachable_pairs, write_edge_list,
                              write_matrix_csv)


@pytest.mark.parametrize("k, switches, ends", [(24, 720, 3456), (4, 20, 16), (2, 5, 2)])
def test_fat_tree_counts(k, switches, ends):
    g = build_fat_tree(k, nfv_per_pod=1, seed=0)
    assert len(g.switches) == switches
    assert len(g.end_nodes) == ends


@pytest.mark.parametrize("k", [2, 4, 6, 8])
def test_fat_tree_closed_forms(k):
    g = build_fat_tree(k, seed=1)
    assert len(g.switches) == 5 * k * k // 4
    assert len(g.end_nodes) == k ** 3 // 4
    assert g.is_connected()
    assert all(g.graph.degree(n) == k for n in g.switches)


def test_fat_tree_rejects_odd_k():
    with pytest.raises(TopologyError):
        build_fat_tree(3)


def test_fat_tree_nfv_servers_per_pod():
    g = build_fat_tree(4, nfv_per_pod=2, seed=3)
    pods = [g.graph.nodes[n]["pod"] for n in g.nfv_servers]
    assert sorted(pods) == [0, 0, 1, 1, 2, 2, 3, 3]


def test_jellyfish_k4():
    g = build_jellyfish(4, 3, 1, 0, seed=0)
    sw = g.graph.subgraph(g.switches)
    assert nx.is_isomorphic(sw, nx.complete_graph(4))


@pytest.mark.parametrize("seed", range(5))
def test_jellyfish_ring_is_one_cycle(seed):
    g = build_jellyfish(6, 2, 1, 2, seed=seed)
    sw = g.graph.subgraph(g.switches)
    assert all(d == 2 for _, d in sw.degree())
    assert nx.is_connected(sw)
    assert len(nx.cycle_basis(sw)) == 1


def test_jellyfish_regular_and_connected():
    g = build_jellyfish(40, 5, 2, 10, seed=7)
    sw = g.graph.subgraph(g.switches)
    assert all(d == 5 for _, d in sw.degree())
    assert nx.number_of_selfloops(sw) == 0
    assert g.is_connected()
    assert len(g.nfv_servers) == 10


def test_hops_same_edge_switch_and_across_pods():
    g = build_fat_tree(4, nfv_per_pod=4, seed=0)
    servers = g.nfv_servers
    hops = hop_matrix(g)
    edge_of = {s: next(iter(g.graph.neighbors(s))) for s in servers}
    pod = {s: g.graph.nodes[s]["pod"] for s in servers}
    for i, a in enumerate(servers):
        for j, b in enumerate(servers):
            if a == b:
                assert hops[i, j] == 0
            elif edge_of[a] == edge_of[b]:
                assert hops[i, j] == 2
            elif pod[a] == pod[b]:
                assert hops[i, j] == 4
            else:
                assert hops[i, j] == 6


def test_hops_single_server():
    g = nx.Graph()
    g.add_node(0, kind=NFV)
    assert hop_matrix(g).tolist() == [[0]]


def test_unreachable_pairs_flagged():
    g = nx.Graph()
    g.add_node(0, kind=NFV)
    g.add_node(1, kind=NFV)
    hops = hop_matrix(g)
    assert unreachable_pairs(hops) == [(0, 1), (1, 0)]
    assert np.isinf(comm_cost_matrix(hops, seed=0).cost[0, 1])


def test_comm_cost_without_variation():
    c = comm_cost_matrix(np.array([[0, 3], [3, 0]]), 1.0, 0.0, seed=0).cost
    assert c.tolist() == [[0.0, 3.0], [3.0, 0.0]]


def test_comm_cost_variation_range_and_symmetry():
    hops = np.full((30, 30), 2)
    np.fill_diagonal(hops, 0)
    c = comm_cost_matrix(hops, 1.0, 0.1, seed=4).cost
    off = c[~np.eye(30, dtype=bool)]
    assert off.min() >= 1.8 and off.max() <= 2.2
    assert np.array_equal(c, c.T)
    assert np.all(np.diag(c) == 0)


def test_comm_cost_rejects_bad_variation():
    with pytest.raises(TopologyError):
        comm_cost_matrix(np.zeros((1, 1)), 1.0, 1.0)


def test_exports(tmp_path):
    g = build_fat_tree(2, 1, seed=0)
    write_edge_list(g, tmp_path / "e.txt")
    lines = [l for l in (tmp_path / "e.txt").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == g.graph.number_of_edges()
    write_matrix_csv(np.array([[0.0, np.inf], [1.5, 0.0]]), tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == ["0.0,inf", "1.5,0.0"]
