"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--slots 2000] [--repeat 3]

Times the three hot kernels on a captured mid-run state and a full
simulation per backend, and checks that both backends agree.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from poscars import kernels
from poscars.queues import QueueState
from poscars.scheduler import ControlParams, decide_allocation, run_chaining
from poscars.sim import SimulationConfig, build_simulation, run


def warm_state(overrides, slots=300):
    """A state after ``slots`` slots of the default workload, copied into each backend."""
    sim = build_simulation(SimulationConfig.load(None, overrides))
    for _ in range(slots):
        sim.step()
    return sim


def clone(sim, backend):
    src = sim.state
    st = QueueState.empty(src.flat, src.windows, backend)
    for i in range(src.flat.n_instances):
        for a, c, p in src.queues.backlog(i):
            st.queues.push(i, a, c, p)
        for a, c, p in src.queues.carry(i):
            st.queues.set_carry(i, a, c, p)
    return st


def bench(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=2000, help="horizon of the full-run benchmark")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--config", nargs="*", default=[], help="extra key=value overrides")
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels are not built; only the Python backend is available", file=sys.stderr)
    backends = ["python"] + (["compiled"] if kernels.compiled is not None else [])

    sim = warm_state(args.config)
    params = ControlParams(10.0, 10.0, 1.0)
    rng = np.random.default_rng(0)
    keys = rng.random(len(sim.flat.succ_idx))
    rows = {}
    outputs = {}
    for b in backends:
        st = clone(sim, b)
        chain = lambda: run_chaining(kernels.POD, st, sim.comm, params, keys=keys, d=2, backend=b)
        alloc = lambda: decide_allocation(st, params, backend=b)

        def queues():
            q = kernels.get(b).InstanceQueues(sim.flat.n_instances)
            for i in range(sim.flat.n_instances):
                q.push(i, 0, 20, False)
            out = np.zeros(sim.flat.n_instances, dtype=np.int64)
            rates = np.full(sim.flat.n_instances, 3, dtype=np.int64)
            for t in range(5):
                q.process(rates, t, sim.flat.inst_terminal, out)
                c = q.carries()
                nz = np.nonzero(c)[0]
                dst = sim.flat.succ_idx[sim.flat.succ_ptr[nz]]
                q.forward(nz, dst, c[nz], len(nz))

        cfg = SimulationConfig.load(None, [f"horizon={args.slots}", f'simulation.backend="{b}"', *args.config])
        full = lambda: outputs.__setitem__(b, run(cfg).slots_csv(header=False))
        rows[b] = (bench(chain, args.repeat, 200), bench(alloc, args.repeat, 200),
                   bench(queues, args.repeat, 50), bench(full, 1, 1) / args.slots)

    print(f"model: {sim.flat.n_servers} servers, {sim.flat.n_instances} instances")
    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + ("     speed-up" if len(backends) > 1 else ""))
    names = ("chaining (P-Pod)", "allocation", "queue rounds x5", "full slot")
    for k, name in enumerate(names):
        vals = [rows[b][k] for b in backends]
        line = f"{name:<22}" + "".join(f"{v * 1e6:>11.1f} us" for v in vals)
        if len(vals) > 1:
            line += f"{vals[0] / vals[1]:>12.1f}x"
        print(line)
    if len(backends) > 1:
        same = outputs["python"] == outputs["compiled"]
        print("full-run outputs identical:", same)
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
