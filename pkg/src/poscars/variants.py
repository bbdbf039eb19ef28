"""Sampling variants of POSCARS chaining and the baseline chaining rules.

Admission and allocation are shared with POSCARS; only the choice of
successor differs.  The per-instance functions below are the readable
reference; ``ChainingStrategy.chain`` runs the same rules for all instances
at once through the kernels, drawing the random keys in the same order.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scheduler import ControlParams, run_chaining

MODES = {
    "poscars": kernels.POSCARS,
    "p-pod": kernels.POD,
    "p-bs": kernels.BATCH_SAMPLING,
    "p-bf": kernels.BATCH_FILLING,
    "random": kernels.RANDOM,
    "jsq": kernels.JSQ,
    "onehop": kernels.ONEHOP,
}
_ALIASES = {"pod": "p-pod", "p-pod*d*": "p-pod", "bs": "p-bs", "bf": "p-bf", "onehop-sch": "onehop"}


@dataclass(frozen=True)
class ChainingStrategy:
    variant: str = "poscars"
    probe_ratio: int = 2  # d, d_bs or d_bf
    batch: int = 5

    def __post_init__(self):
        v = _ALIASES.get(self.variant.lower(), self.variant.lower())
        if v not in MODES:
            raise ValueError(f"unknown scheduler {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if self.probe_ratio < 1 or self.batch < 1:
            raise ValueError("probe ratio and batch size must be >= 1")

    @classmethod
    def parse(cls, text: str, **kw) -> "ChainingStrategy":
        """``"poscars"``, ``"p-pod(2)"``, ``"p-bf(3,5)"``, ``"jsq"`` ..."""
        m = re.fullmatch(r"\s*([\w*-]+)\s*(?:\(([^)]*)\))?\s*", text)
        if not m:
            raise ValueError(f"bad scheduler spec {text!r}")
        args = [int(a) for a in (m.group(2) or "").split(",") if a.strip()]
        if args:
            kw["probe_ratio"] = args[0]
        if len(args) > 1:
            kw["batch"] = args[1]
        return cls(m.group(1), **kw)

    @property
    def mode(self) -> int:
        return MODES[self.variant]

    @property
    def batched(self) -> bool:
        return self.variant in ("p-bs", "p-bf")

    @property
    def label(self) -> str:
        if self.variant == "p-pod":
            return f"p-pod({self.probe_ratio})"
        if self.batched:
            return f"{self.variant}({self.probe_ratio},{self.batch})"
        return self.variant

    def draw(self, flat, rng):
        """Random keys consumed by the kernel: one per successor entry, or one per instance."""
        keys = uinst = None
        if self.variant in ("p-pod", "p-bs", "p-bf", "jsq"):
            keys = rng.random(len(flat.succ_idx))
        elif self.variant == "random":
            uinst = rng.random(flat.n_instances)
        return keys, uinst

    def chain(self, state, comm, params: ControlParams, rng=None, lengths=None, carries=None,
              backend: str = "auto"):
        keys, uinst = self.draw(state.flat, rng) if rng is not None else (None, None)
        return run_chaining(self.mode, state, comm, params, keys=keys, uinst=uinst,
                            d=self.probe_ratio, batch=self.batch, lengths=lengths,
                            carries=carries, backend=backend)


# ------------------------------------------------------------ per-instance rules
# ``successors`` is a sequence of (server, w, queue) sorted by server id.

def _reachable(successors):
    out = [s for s in successors if not math.isinf(s[1])]
    if not out:
        raise ValueError("no reachable successor")
    return out


def _score(params: ControlParams, w, q):
    return params.V * w + params.alpha * q


def _probe(n: int, m: int, keys) -> list[int]:
    return sorted(sorted(range(n), key=lambda e: (keys[e], e))[:m])


def p_pod_choose(successors, d: int, params: ControlParams, rng) -> int:
    """Probe ``d`` successors uniformly without replacement; return the cheapest one's server."""
    keys = rng.random(len(successors))
    cand = [(s, k) for s, k in zip(successors, keys) if not math.isinf(s[1])]
    succ = [s for s, _ in cand]
    if not succ:
        raise ValueError("no reachable successor")
    probed = _probe(len(succ), min(d, len(succ)), [k for _, k in cand])
    best = min(probed, key=lambda e: (_score(params, succ[e][1], succ[e][2]), e))
    return succ[best][0]


def _batches(carry: int, batch: int) -> list[int]:
    z = -(-carry // batch)
    return [batch] * (z - 1) + [carry - batch * (z - 1)] if z else []


def p_bs_assign(carry: int, batch: int, d_bs: int, successors, params: ControlParams, rng):
    """Batch sampling: ``z`` batches go to the ``z`` cheapest of ``d_bs*z`` probes, one each.

    Returns ``[(server, batch_size), ...]``; with fewer probes than batches
    the cheapest targets are reused in score order.
    """
    keys = rng.random(len(successors))
    if carry == 0:
        return []
    cand = [(s, k) for s, k in zip(successors, keys) if not math.isinf(s[1])]
    succ = [s for s, _ in cand]
    sizes = _batches(carry, batch)
    m = min(d_bs * len(sizes), len(succ))
    probed = _probe(len(succ), m, [k for _, k in cand])
    order = sorted(probed, key=lambda e: (_score(params, succ[e][1], succ[e][2]), e))
    return [(succ[order[b % m]][0], n) for b, n in enumerate(sizes)]


def p_bf_assign(carry: int, batch: int, d_bf: int, successors, params: ControlParams, rng):
    """Batch filling: batches go one by one to the currently cheapest probe,
    whose queue is bumped by the batch before the next choice."""
    keys = rng.random(len(successors))
    if carry == 0:
        return []
    cand = [(s, k) for s, k in zip(successors, keys) if not math.isinf(s[1])]
    succ = [s for s, _ in cand]
    sizes = _batches(carry, batch)
    m = min(d_bf * len(sizes), len(succ))
    probed = _probe(len(succ), m, [k for _, k in cand])
    extra = {e: 0 for e in probed}
    out = []
    for n in sizes:
        e = min(probed, key=lambda e: (_score(params, succ[e][1], succ[e][2] + extra[e]), e))
        extra[e] += n
        out.append((succ[e][0], n))
    return out


def baseline_choose(variant: str, successors, rng, phi_max=None) -> int:
    """Random / JSQ / OneHop-SCH successor choice; returns the server id.

    ``phi_max`` (per successor, or a scalar) defines OneHop's idle test
    ``queue < phi_max``.
    """
    variant = _ALIASES.get(variant.lower(), variant.lower())
    succ = _reachable(successors)
    if variant == "random":
        return succ[min(int(rng.random() * len(succ)), len(succ) - 1)][0]
    if variant == "jsq":
        keys = rng.random(len(successors))
        keys = [k for s, k in zip(successors, keys) if not math.isinf(s[1])]
        e = min(range(len(succ)), key=lambda e: (succ[e][2], keys[e], e))
        return succ[e][0]
    if variant == "onehop":
        if phi_max is None:
            raise ValueError("onehop needs phi_max")
        caps = list(phi_max) if np.ndim(phi_max) else [phi_max] * len(successors)
        caps = [c for s, c in zip(successors, caps) if not math.isinf(s[1])]
        idle = [e for e in range(len(succ)) if succ[e][2] < caps[e]]
        pool = idle or range(len(succ))
        return succ[min(pool, key=lambda e: (succ[e][1], e))][0]
    raise ValueError(f"unknown baseline {variant!r}")
