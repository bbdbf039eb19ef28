import numpy as np
import pytest

from poscars.golden import SERVER_I, SERVER_II, golden_simulation
from poscars.queues import (ConstraintViolation, DecisionSet, apply_admission, apply_forwarding,
                            apply_processing, check_capacity, total_queue_snapshot)

from conftest import empty_state, small_model


def decision(flat, mu=None, delta_d=None, x=None, fwd=(), alloc=None, K=1):
    n = flat.n_instances
    src, dst, cnt = (np.array(c, dtype=np.int64) for c in zip(*fwd)) if fwd else (np.zeros(0, np.int64),) * 3
    return DecisionSet(
        np.asarray(mu if mu is not None else [0] * len(flat.ingress_idx), dtype=np.int64),
        delta_d if delta_d is not None else [[0]] * K,
        np.asarray(x if x is not None else [-1] * n, dtype=np.int64),
        src, dst, cnt,
        np.asarray(alloc if alloc is not None else [0] * n, dtype=np.int64))


def chain_model(y_max=3):
    # service 0: VNF 0 on server 0 -> VNF 1 on servers 0 and 1
    return small_model([[0, 1]], [[0], [0, 1]], [4, 4], y_max=y_max)


def test_admission_drains_current_and_future_slot():
    m = chain_model()
    st = empty_state(m, window_counts={0: [1, 1]})
    pushed = apply_admission(st, decision(st.flat, mu=[2], delta_d=[[1, 1]]))
    assert st.windows[0].counts() == [0, 0]
    assert st.lengths().tolist() == [2, 0, 0]
    assert [(a, c) for _, a, c, _ in pushed] == [(0, 1), (1, 1)]
    assert st.admitted_real == 2


def test_admission_noop():
    m = chain_model()
    st = empty_state(m)
    assert apply_admission(st, decision(st.flat)) == []
    assert st.lengths().sum() == 0


def test_admission_must_cover_current_slot():
    m = chain_model()
    st = empty_state(m, window_counts={0: [2, 3]})
    with pytest.raises(ConstraintViolation):
        apply_admission(st, decision(st.flat, mu=[1], delta_d=[[1, 0]]))


def test_admission_split_must_match_mu():
    m = chain_model()
    st = empty_state(m, window_counts={0: [2, 3]})
    with pytest.raises(ConstraintViolation):
        apply_admission(st, decision(st.flat, mu=[2], delta_d=[[2, 1]]))


def test_forwarding_moves_carry_to_successor():
    m = chain_model()
    st = empty_state(m)
    fm = st.flat
    a, b0, b1 = fm.inst_of[(0, 0)], fm.inst_of[(1, 0)], fm.inst_of[(1, 1)]
    st.queues.push(b1, 0, 1, False)
    st.queues.set_carry(a, 0, 3, False)
    x = [-1] * fm.n_instances
    x[a] = b1
    apply_forwarding(st, decision(fm, x=x, fwd=[(a, b1, 3)]))
    assert st.lengths()[b1] == 4 and st.carries()[a] == 0


def test_forwarding_zero_carry_leaves_successor():
    m = chain_model()
    st = empty_state(m)
    fm = st.flat
    x = [-1] * fm.n_instances
    x[fm.inst_of[(0, 0)]] = fm.inst_of[(1, 1)]
    apply_forwarding(st, decision(fm, x=x))
    assert st.lengths().sum() == 0


def test_forwarding_golden_decision_one():
    sim = golden_simulation()
    fm, st = sim.flat, sim.state
    a, b2 = fm.inst_of[(0, SERVER_I)], fm.inst_of[(1, SERVER_II)]
    before = int(st.lengths()[b2])
    x = [-1] * fm.n_instances
    x[a] = b2
    apply_forwarding(st, decision(fm, x=x, fwd=[(a, b2, 1)]))
    assert st.lengths()[b2] == before + 1


def test_forwarding_without_successor_raises():
    m = chain_model()
    st = empty_state(m)
    st.queues.set_carry(st.flat.inst_of[(0, 0)], 0, 1, False)
    with pytest.raises(ConstraintViolation, match="missing successor"):
        apply_forwarding(st, decision(st.flat))


def test_forwarding_to_non_successor_raises():
    m = chain_model()
    st = empty_state(m)
    fm = st.flat
    a = fm.inst_of[(0, 0)]
    st.queues.set_carry(a, 0, 1, False)
    x = [-1] * fm.n_instances
    x[a] = fm.inst_of[(1, 0)]
    with pytest.raises(ConstraintViolation):
        apply_forwarding(st, decision(fm, x=x, fwd=[(a, a, 1)]))


def test_processing_queue_recurrence():
    m = chain_model()
    st = empty_state(m)
    b = st.flat.inst_of[(1, 0)]
    st.queues.push(b, 0, 5, False)
    st.queues.push(b, 1, 2, False)
    alloc = [0] * st.flat.n_instances
    alloc[b] = 3  # option (3): rate 3
    apply_processing(st, np.array(alloc), slot=1)
    assert st.lengths()[b] == 4
    assert st.queues.completed_real == 3


def test_processing_carry_limited_by_backlog():
    m = chain_model()
    st = empty_state(m)
    a = st.flat.inst_of[(0, 0)]
    st.queues.push(a, 0, 1, False)
    alloc = [0] * st.flat.n_instances
    alloc[a] = 3
    processed = apply_processing(st, np.array(alloc), slot=0)
    assert processed[a] == 1
    assert st.carries()[a] == 1
    assert st.nominal_rate[a] == 3


def test_processing_idle_instance():
    m = chain_model()
    st = empty_state(m)
    apply_processing(st, np.zeros(st.flat.n_instances, dtype=np.int64), slot=0)
    assert st.lengths().sum() == 0 and st.carries().sum() == 0


def test_capacity_violation_detected():
    m = chain_model()
    st = empty_state(m)
    alloc = np.array([3, 3, 0])  # instances 0 and 1 share server 0 with 4 cores
    with pytest.raises(ConstraintViolation, match="exceeds capacity"):
        check_capacity(st.flat, alloc)


def test_unforwarded_carry_detected():
    m = chain_model()
    st = empty_state(m)
    st.queues.set_carry(st.flat.inst_of[(0, 0)], 0, 1, False)
    with pytest.raises(ConstraintViolation):
        apply_processing(st, np.zeros(st.flat.n_instances, dtype=np.int64), slot=0)


def test_weighted_queue_total():
    assert total_queue_snapshot(np.array([2]), 10.0, lengths=np.array([1, 3])) == 42
    assert total_queue_snapshot(np.array([2]), 0.0, lengths=np.array([1, 3])) == 2
    assert total_queue_snapshot(np.array([0]), 10.0, lengths=np.array([0, 0])) == 0


def test_weighted_queue_total_from_state():
    m = chain_model()
    st = empty_state(m, window_counts={0: [2]})
    st.queues.push(0, 0, 1, False)
    st.queues.push(2, 0, 3, False)
    assert total_queue_snapshot(st, 10.0) == 42


def test_pre_served_requests_score_zero():
    m = chain_model()
    st = empty_state(m)
    b = st.flat.inst_of[(1, 0)]
    st.queues.push(b, 5, 2, False)  # due at slot 5, served at slot 3
    alloc = np.zeros(st.flat.n_instances, dtype=np.int64)
    alloc[b] = 2
    apply_processing(st, alloc, slot=3)
    assert st.queues.pre_served == 2
    assert st.queues.response_histogram().tolist() == [2]


def test_phantoms_complete_without_response_time():
    m = chain_model()
    st = empty_state(m)
    b = st.flat.inst_of[(1, 0)]
    st.queues.push(b, 0, 2, True)
    alloc = np.zeros(st.flat.n_instances, dtype=np.int64)
    alloc[b] = 2
    apply_processing(st, alloc, slot=4)
    assert st.queues.completed_phantom == 2 and st.queues.completed_real == 0
    assert st.queues.response_histogram().sum() == 0
