import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from poscars.queues import apply_processing
from poscars.scheduler import ControlParams
from poscars.variants import (ChainingStrategy, baseline_choose, p_bf_assign, p_bs_assign,
                              p_pod_choose)

from conftest import empty_state, small_model

QUEUE_ONLY = ControlParams(V=0.0, alpha=1.0)


def succ(queues, w=None):
    w = w or [1.0] * len(queues)
    return [(s, float(c), float(q)) for s, (c, q) in enumerate(zip(w, queues))]


@pytest.mark.parametrize("text, variant, d, batch", [
    ("poscars", "poscars", 2, 5), ("p-pod(3)", "p-pod", 3, 5), ("P-BS(2,4)", "p-bs", 2, 4),
    ("bf", "p-bf", 2, 5), ("OneHop-SCH", "onehop", 2, 5), ("jsq", "jsq", 2, 5)])
def test_parse(text, variant, d, batch):
    s = ChainingStrategy.parse(text)
    assert (s.variant, s.probe_ratio, s.batch) == (variant, d, batch)


def test_parse_rejects_unknown_and_bad_numbers():
    with pytest.raises(ValueError):
        ChainingStrategy.parse("fifo")
    with pytest.raises(ValueError):
        ChainingStrategy.parse("p-pod(0)")


def test_labels():
    assert ChainingStrategy.parse("p-bf(3,5)").label == "p-bf(3,5)"
    assert ChainingStrategy.parse("p-pod(2)").label == "p-pod(2)"
    assert ChainingStrategy().label == "poscars" and not ChainingStrategy().batched


def test_pod_with_full_probe_is_argmin(rng):
    assert p_pod_choose(succ([4, 1, 3]), 3, QUEUE_ONLY, rng) == 1


def test_batch_sampling_takes_cheapest_probes(rng):
    out = p_bs_assign(10, 5, 2, succ([9, 4, 7, 1]), QUEUE_ONLY, rng)
    assert sorted(s for s, _ in out) == [1, 3]
    assert [n for _, n in out] == [5, 5]


def test_batch_sampling_zero_carry(rng):
    assert p_bs_assign(0, 5, 2, succ([1, 2]), QUEUE_ONLY, rng) == []


def test_batch_sizes_with_remainder(rng):
    out = p_bs_assign(12, 5, 3, succ([0, 0, 0]), QUEUE_ONLY, rng)
    assert [n for _, n in out] == [5, 5, 2]


def test_batch_filling_splits_equal_targets(rng):
    out = p_bf_assign(10, 5, 1, succ([2, 2]), QUEUE_ONLY, rng)
    assert sorted(s for s, _ in out) == [0, 1]


def test_batch_filling_stays_on_clear_winner(rng):
    out = p_bf_assign(10, 5, 2, succ([0, 100]), QUEUE_ONLY, rng)
    assert [s for s, _ in out] == [0, 0]


def test_single_batch_filling_equals_sampling():
    a = p_bs_assign(4, 5, 2, succ([3, 1, 2]), QUEUE_ONLY, np.random.default_rng(3))
    b = p_bf_assign(4, 5, 2, succ([3, 1, 2]), QUEUE_ONLY, np.random.default_rng(3))
    assert a == b


def test_jsq_picks_shortest(rng):
    assert baseline_choose("jsq", succ([5, 2, 9]), rng) == 1


def test_onehop_skips_busy_cheap_successor(rng):
    assert baseline_choose("onehop", succ([4, 0], w=[1, 2]), rng, phi_max=4) == 1
    assert baseline_choose("onehop", succ([3, 0], w=[1, 2]), rng, phi_max=4) == 0


def test_unreachable_successor_excluded(rng):
    s = [(0, math.inf, 0.0), (1, 5.0, 50.0)]
    assert baseline_choose("jsq", s, rng) == 1
    with pytest.raises(ValueError):
        baseline_choose("random", [(0, math.inf, 0.0)], rng)


def test_random_is_uniform():
    rng = np.random.default_rng(2024)
    n = 100_000
    picks = [baseline_choose("random", succ([0, 0, 0]), rng) for _ in range(n)]
    freq = np.bincount(picks, minlength=3)
    sigma = math.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(freq - n / 3) < 3 * sigma)
    assert chisquare(freq).pvalue > 0.01


# ------------------------------------------------- reference rules vs kernels

def fan_out_state(queues, w):
    """One instance on server 0 whose successors sit on servers 1..n."""
    n = len(queues)
    comm = np.zeros((n + 1, n + 1))
    comm[0, 1:] = comm[1:, 0] = w
    m = small_model([[0, 1]], [[0], list(range(1, n + 1))], [8] * (n + 1), comm=comm, y_max=4)
    st = empty_state(m)
    for j, q in enumerate(queues):
        st.queues.push(st.flat.inst_of[(1, j + 1)], 0, int(q), False)
    return m, st


@settings(max_examples=150, deadline=None)
@given(queues=st.lists(st.integers(0, 9), min_size=1, max_size=5), data=st.data(),
       variant=st.sampled_from(["p-pod", "p-bs", "p-bf", "random", "jsq", "onehop"]),
       d=st.integers(1, 4), batch=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_reference_rules_match_kernel(queues, data, variant, d, batch, seed):
    n = len(queues)
    w = data.draw(st.lists(st.sampled_from([1.0, 2.0, 3.5]), min_size=n, max_size=n))
    m, state = fan_out_state(queues, w)
    fm = state.flat
    a = fm.inst_of[(0, 0)]
    carry = data.draw(st.integers(0, 8))
    state.queues.push(a, 0, carry, False)
    alloc = np.zeros(fm.n_instances, dtype=np.int64)
    alloc[a] = 4
    apply_processing(state, alloc, 0)
    carry = int(state.carries()[a])
    params = ControlParams(V=data.draw(st.sampled_from([0.0, 1.0, 5.0])), alpha=1.0)
    strat = ChainingStrategy(variant, probe_ratio=d, batch=batch)
    x, src, dst, cnt = strat.chain(state, m.comm_cost, params, np.random.default_rng(seed))
    s = [(j + 1, w[j], float(state.lengths()[fm.inst_of[(1, j + 1)]])) for j in range(n)]
    ref_rng = np.random.default_rng(seed)
    to_server = lambda i: int(fm.inst_server[i])
    if variant == "p-pod":
        assert to_server(x[a]) == p_pod_choose(s, d, params, ref_rng)
    elif variant in ("p-bs", "p-bf"):
        fn = p_bs_assign if variant == "p-bs" else p_bf_assign
        got = [(to_server(t), int(c)) for t, c in zip(dst, cnt)]
        assert got == fn(carry, batch, d, s, params, ref_rng)
    else:
        phi = [int(fm.inst_phi_max[fm.inst_of[(1, j + 1)]]) for j in range(n)]
        assert to_server(x[a]) == baseline_choose(variant, s, ref_rng, phi_max=phi)


def test_every_variant_emits_valid_chaining():
    rng = np.random.default_rng(8)
    m = small_model([[0, 1, 2], [3, 4]], [[0, 1], [1, 2], [0, 2], [0], [0, 1, 2]], [6, 6, 6])
    st = empty_state(m)
    fm = st.flat
    for i in range(fm.n_instances):
        st.queues.push(i, 0, int(rng.integers(0, 5)), False)
        if not fm.inst_terminal[i]:
            st.queues.set_carry(i, 0, int(rng.integers(0, 3)), False)
    for name in ("poscars", "p-pod(1)", "p-bs(2,1)", "p-bf(2,1)", "random", "jsq", "onehop"):
        strat = ChainingStrategy.parse(name)
        x, src, dst, cnt = strat.chain(st, m.comm_cost, ControlParams(), rng)
        sent = np.bincount(src, weights=cnt, minlength=fm.n_instances)
        assert np.array_equal(sent, st.carries())
        for s, t in zip(src, dst):
            assert t in fm.succ_idx[fm.succ_ptr[s]:fm.succ_ptr[s + 1]]
        if not strat.batched:
            for i in np.nonzero(fm.inst_terminal == 0)[0]:
                assert x[i] in fm.succ_idx[fm.succ_ptr[i]:fm.succ_ptr[i + 1]]
