import json

import numpy as np
import pytest

from poscars.config import ConfigError, load_config
from poscars.golden import SERVER_II, forced_decision, golden_simulation, run_golden
from poscars.metrics import SlotMetrics
from poscars.queues import ConstraintViolation
from poscars.sim import SimulationConfig, build_simulation, replicate, run


def cfg(*overrides, path=None):
    return SimulationConfig.load(path, list(overrides))


def test_empty_workload_single_slot():
    r = run(cfg("horizon=1", "workload.rate=0"))
    s = r.summary
    assert (s.time_avg_cost, s.time_avg_h, s.completed, s.slots) == (0, 0, 0, 1)


def test_zero_state_slot_is_free():
    sim = build_simulation(cfg("workload.rate=0", "horizon=3"))
    assert sim.step() == SlotMetrics(0, 0.0, 0.0, 0.0, 0, 0)


def test_same_seed_same_csv():
    c = cfg("horizon=300", "d_avg=2", "forecaster=\"false-positive(1)\"")
    assert run(c).slots_csv(header=False) == run(c).slots_csv(header=False)


def test_different_seed_differs():
    a = run(cfg("horizon=200", "seed=1")).slots_csv(header=False)
    b = run(cfg("horizon=200", "seed=2")).slots_csv(header=False)
    assert a != b


def test_stable_load_has_bounded_backlog():
    r = run(cfg("horizon=10000"))
    half = len(r.h) // 2
    assert r.h[half:].max() < 2 * r.h[:half].max()


def test_single_replication_equals_run():
    c = cfg("horizon=200", "seed=4")
    results, agg = replicate(c)
    assert results[0].slots_csv(header=False) == run(c).slots_csv(header=False)
    assert agg["time_avg_cost_mean"] == results[0].summary.time_avg_cost
    assert agg["time_avg_cost_std"] == 0


def test_deterministic_workload_zero_std(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("\n".join(str(x) for x in [3, 1, 4, 1, 5, 9, 2, 6] * 20) + "\n")
    c = cfg("horizon=160", "replications=4", "model.seed=3", "workload.kind=\"trace\"",
            f"workload.trace=\"{trace}\"")
    _, agg = replicate(c)
    assert agg["time_avg_cost_std"] == 0 and agg["time_avg_h_std"] == 0


def test_poisson_replications_vary():
    results, agg = replicate(cfg("horizon=200", "replications=50", "model.seed=1"), workers=2)
    costs = np.array([r.summary.time_avg_cost for r in results])
    assert agg["time_avg_cost_std"] == pytest.approx(costs.std(ddof=1))
    assert agg["time_avg_cost_std"] > 0


def test_replications_independent_of_workers():
    c = cfg("horizon=150", "replications=3")
    a, _ = replicate(c, workers=1)
    b, _ = replicate(c, workers=3)
    assert [r.slots_csv(header=False) for r in a] == [r.slots_csv(header=False) for r in b]


@pytest.mark.parametrize("sched", ["poscars", "p-pod(2)", "p-bs(2,3)", "p-bf(2,3)", "random", "jsq", "onehop"])
def test_debug_run_all_schedulers(sched):
    r = run(cfg("horizon=150", "simulation.debug=true", f"scheduler.name=\"{sched}\"", "d_avg=2",
                "forecaster=\"false-positive(1)\""))
    assert r.summary.completed > 0


@pytest.mark.parametrize("fc", ["all-false-negative", "ewma(0.5)", "kalman", "ma(3)", "distr(20)"])
def test_debug_run_forecasters(fc):
    r = run(cfg("horizon=150", "simulation.debug=true", f"forecaster=\"{fc}\"", "d_avg=3"))
    assert r.summary.completed > 0
    if fc != "all-false-negative":
        assert set(r.extras["window_sizes"]) == {1}


def test_debug_detects_bad_forced_decision():
    sim = golden_simulation()
    dec = forced_decision(sim, SERVER_II, (2, 2, 2))
    dec.alloc[0] = 7  # not an option of VNF a
    with pytest.raises(ConstraintViolation):
        sim.step(dec)


def test_prediction_shortens_response():
    base = run(cfg("horizon=3000", "d_avg=0")).summary.response_time_ms.mean
    ahead = run(cfg("horizon=3000", "d_avg=5")).summary.response_time_ms.mean
    assert ahead < base


def test_explicit_windows_and_rate_mode():
    r = run(cfg("horizon=200", "prediction.windows=[2]", "simulation.cost_mode=\"rate\""))
    assert set(r.extras["window_sizes"]) == {2}
    assert r.summary.time_avg_m > 0


def test_rate_mode_rejects_batched_scheduler():
    with pytest.raises(ConfigError):
        load_config(None, ["simulation.cost_mode=\"rate\"", "scheduler.name=\"p-bs\""])


def test_comm_jitter_runs():
    r = run(cfg("horizon=200", "topology.jitter=true", "simulation.debug=true"))
    assert r.summary.time_avg_m > 0


def test_jellyfish_topology():
    r = run(cfg("horizon=100", "topology.kind=\"jellyfish\""))
    assert r.summary.completed > 0


def test_warmup_excluded():
    full = run(cfg("horizon=300"))
    warm = run(cfg("horizon=300", "simulation.warmup=100"))
    assert warm.summary.slots == 200
    assert warm.summary.time_avg_cost == pytest.approx(full.m[100:].mean() + full.g[100:].mean())


def test_snapshot_and_outputs(tmp_path):
    c = cfg("horizon=20")
    r = run(c, snapshot_path=tmp_path / "snap.csv")
    snap = (tmp_path / "snap.csv").read_text().splitlines()
    n_inst = build_simulation(c).flat.n_instances
    assert snap[0] == "slot,queue,length,carry"
    assert len(snap) == 1 + 20 * n_inst
    r.write(tmp_path)
    lines = (tmp_path / "slots.csv").read_text().splitlines()
    assert lines[0].startswith("# created=") and lines[1] == "slot,m,g,h,completions"
    assert len(lines) == 22
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["config"]["simulation"]["horizon"] == 20
    assert doc["summary"]["bound_B"] > 0


def test_golden_checks_pass():
    checks = run_golden()
    assert len(checks) == 6
    assert all(c.ok for c in checks), [c for c in checks if not c.ok]


def test_explicit_model_config(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text("""
[simulation]
horizon = 50
debug = true

[workload]
rate = 1.0

[model]
comm = [[0, 1], [1, 0]]

[[model.servers]]
capacity = [4]
unit_cost = [1.0]

[[model.servers]]
capacity = [4]
unit_cost = [2.0]

[[model.vnfs]]
name = "fw"
hosts = [0]
phi_max = 4
y_max = [2]
theta = [2.0]

[[model.vnfs]]
name = "nat"
hosts = [0, 1]
phi_max = 4
y_max = [2]
theta = [2.0]

[[model.services]]
chain = ["fw", "nat"]
window = 1
""")
    r = run(SimulationConfig.load(p))
    assert r.extras["window_sizes"] == [1]
    assert r.summary.completed > 0
