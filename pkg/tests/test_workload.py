import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poscars.workload import (ArrivalTrace, Ewma, ForecasterSpec, MovingAverage, PredictionWindow,
                              Predictor, ScalarKalman, TraceParseError, advance_window,
                              assign_window_sizes, forecast_next, generate_poisson, init_window,
                              load_trace)


def test_poisson_zero_rate():
    assert not generate_poisson(0.0, 100, seed=1).counts.any()


def test_poisson_mean_within_three_sigma():
    tr = generate_poisson(25.5, 10_000, seed=2)
    sigma = np.sqrt(25.5 / 10_000)
    assert abs(tr.counts.mean() - 25.5) < 3 * sigma


def test_poisson_deterministic_per_seed():
    a = generate_poisson([1.0, 3.0], 500, seed=9).counts
    b = generate_poisson([1.0, 3.0], 500, seed=9).counts
    assert a.shape == (2, 500)
    assert np.array_equal(a, b)


def test_poisson_capped_by_a_max():
    assert generate_poisson(50.0, 200, seed=0, a_max=10).counts.max() == 10


def test_poisson_rejects_negative_rate():
    with pytest.raises(ValueError):
        generate_poisson(-1.0, 10)


def test_trace_past_end_is_zero():
    tr = ArrivalTrace(np.array([[1, 2]]))
    assert tr.at(0, 1) == 2 and tr.at(0, 5) == 0


def test_load_counts(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("3\n0\n7\n")
    assert load_trace(p).counts.tolist() == [[3, 0, 7]]


def test_load_counts_multi_service(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# header comment\n1,2\n3,4\n")
    assert load_trace(p).counts.tolist() == [[1, 3], [2, 4]]


def test_empty_trace(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("\n")
    with pytest.raises(TraceParseError, match="empty trace"):
        load_trace(p)


def test_malformed_line_number(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("1\nx\n")
    with pytest.raises(TraceParseError, match="line 2"):
        load_trace(p)


def test_timestamps_binned_into_slots(tmp_path):
    rng = np.random.default_rng(5)
    stamps = np.cumsum(rng.exponential(0.594, size=60_000))
    p = tmp_path / "ts.csv"
    p.write_text("timestamp_ms\n" + "\n".join(f"{x:.4f}" for x in stamps) + "\n")
    tr = load_trace(p, mode="timestamps", slot_length_ms=10.0)
    full = tr.counts[0, :-1]  # the last slot is partial
    assert abs(full.mean() - 10 / 0.594) < 0.3
    assert tr.counts.sum() == len(stamps)


def test_window_sizes_zero():
    assert assign_window_sizes(0, 6, seed=1) == [0] * 6


def test_window_sizes_range_and_mean():
    sizes = np.array(assign_window_sizes(10, 10_000, seed=3))
    assert sizes.min() >= 0 and sizes.max() <= 20
    sigma = np.sqrt((21 ** 2 - 1) / 12 / len(sizes))
    assert abs(sizes.mean() - 10) < 3 * sigma


def test_ewma_formula():
    e = Ewma(0.5, estimate=4.0)
    e.observe(8)
    assert e.forecast() == 6


def test_moving_average():
    assert forecast_next(ForecasterSpec(variant="ma", window=3), [100, 3, 6, 9]) == 6


def test_kalman_tracks_latest_with_exact_observations():
    k = ScalarKalman(process_var=1.0, obs_var=1e-12)
    for z in (5, 9, 2, 14):
        k.observe(z)
    assert k.forecast() == 14
    assert abs(k.x - 14) < 1e-6


def test_distribution_forecaster_draws_from_history():
    spec = ForecasterSpec.parse("distr(4)")
    out = {forecast_next(spec, [3, 3, 7, 7]) for _ in range(5)}
    assert out <= {3, 7}


@pytest.mark.parametrize("text, attr, value", [("false-positive(5)", "rate", 5.0), ("ewma(0.3)", "beta", 0.3),
                                               ("ma(4)", "window", 4), ("fn", "variant", "all-false-negative"),
                                               ("kalman(2,3)", "obs_var", 3.0)])
def test_forecaster_parse(text, attr, value):
    assert getattr(ForecasterSpec.parse(text), attr) == value


def test_forecaster_parse_unknown():
    with pytest.raises(ValueError):
        ForecasterSpec.parse("oracle")


def window_with(spec, truth, size=1, seed=0):
    tr = ArrivalTrace(np.array([truth], dtype=np.int64))
    pred = Predictor(ForecasterSpec.parse(spec), 1, np.random.default_rng(seed))
    return init_window(0, size, tr, pred), pred, tr


def test_perfect_prediction_fills_truth():
    w, _, _ = window_with("perfect", [0, 4])
    assert w.counts() == [0, 4]
    assert w.slots[1].real == 4


def test_false_negative_reveals_at_arrival():
    w, pred, tr = window_with("all-false-negative", [0, 3, 0])
    assert w.counts() == [0, 0]
    advance_window(w, tr.at(0, 2), pred)
    assert w.q0 == 3
    assert w.late_real == 3


def test_false_positive_adds_phantoms():
    w, _, _ = window_with("false-positive(5)", [0, 2], size=1, seed=11)
    s = w.slots[1]
    assert s.real == 2
    ph = [window_with("false-positive(5)", [0, 2], seed=i)[0].slots[1].phantom for i in range(400)]
    assert abs(np.mean(ph) - 5) < 3 * np.sqrt(5 / 400)


def test_phantoms_dropped_when_slot_becomes_current():
    w, pred, tr = window_with("false-positive(50)", [0, 1, 0], size=1, seed=1)
    n_ph = w.slots[1].phantom
    advance_window(w, 0, pred)
    assert w.q0 == 1
    assert w.dropped_phantoms == n_ph


def test_advance_requires_current_slot_admitted():
    w, pred, _ = window_with("perfect", [2, 0])
    with pytest.raises(ValueError):
        advance_window(w, 0, pred)


def test_admit_earliest_first():
    w = PredictionWindow(0, 1)
    w.fill(0, 2, 2, 0)
    w.fill(1, 3, 3, 0)
    runs = w.admit(2)
    assert runs == [(0, 2, False)]
    assert w.counts() == [0, 3]
    with pytest.raises(ValueError):
        w.admit(4)


@settings(max_examples=60, deadline=None)
@given(truth=st.lists(st.integers(0, 6), min_size=6, max_size=6), size=st.integers(0, 3),
       spec=st.sampled_from(["perfect", "all-false-negative", "false-positive(2)", "ewma", "ma(2)"]),
       seed=st.integers(0, 1000))
def test_window_slots_bounded_by_prediction(truth, size, spec, seed):
    w, pred, tr = window_with(spec, truth, size=size, seed=seed)
    for t in range(4):
        w.admit(w.q0)
        advance_window(w, tr.at(0, t + 1 + size), pred)
        assert len(w.slots) == size + 1
        assert w.slots[0].arrival == t + 1
        for s in w.slots:
            assert 0 <= s.count <= s.predicted
        # the current slot always shows what truly arrived, nothing phantom
        assert w.slots[0].phantom == 0
        assert w.q0 == tr.at(0, t + 1)
