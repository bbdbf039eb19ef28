"""Pure-Python twin of the compiled ``_kernels`` extension.

Both modules expose the same names with identical semantics; ``kernels``
picks one at import time.  Keep them in lock-step: the test-suite replays
random states through both and requires identical output.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

# chaining modes
POSCARS, POD, BATCH_SAMPLING, BATCH_FILLING, RANDOM, JSQ, ONEHOP = range(7)

ERR_NO_SUCCESSOR = -2


class InstanceQueues:
    """Per-instance FIFO backlogs and carries with request identities.

    A queue holds runs ``[arrival_slot, count, phantom, stamp]``; ``stamp`` is
    the enqueue order at that instance, used to audit FIFO service.
    """

    def __init__(self, n: int):
        self.n = n
        self._backlog = [deque() for _ in range(n)]
        self._carry = [deque() for _ in range(n)]
        self._blen = [0] * n
        self._clen = [0] * n
        self._last_served = [-1] * n
        self._stamp = 0
        self._hist = []
        self.real_in_system = 0
        self.phantom_in_system = 0
        self.completed_real = 0
        self.completed_phantom = 0
        self.fifo_violations = 0
        self.pre_served = 0  # real completions no later than their arrival slot

    # -- inspection
    def lengths(self) -> np.ndarray:
        return np.array(self._blen, dtype=np.int64)

    def carries(self) -> np.ndarray:
        return np.array(self._clen, dtype=np.int64)

    def backlog(self, i: int) -> list[tuple[int, int, bool]]:
        return [(a, c, bool(p)) for a, c, p, _ in self._backlog[i]]

    def carry(self, i: int) -> list[tuple[int, int, bool]]:
        return [(a, c, bool(p)) for a, c, p, _ in self._carry[i]]

    def response_histogram(self) -> np.ndarray:
        return np.array(self._hist, dtype=np.int64)

    # -- mutation
    def push(self, i: int, arrival: int, count: int, phantom: bool) -> None:
        if count <= 0:
            return
        self._backlog[i].append([int(arrival), int(count), bool(phantom), self._stamp])
        self._stamp += 1
        self._blen[i] += count
        if phantom:
            self.phantom_in_system += count
        else:
            self.real_in_system += count

    def set_carry(self, i: int, arrival: int, count: int, phantom: bool) -> None:
        if count <= 0:
            return
        self._carry[i].append([int(arrival), int(count), bool(phantom), -1])
        self._clen[i] += count
        if phantom:
            self.phantom_in_system += count
        else:
            self.real_in_system += count

    def forward(self, src, dst, cnt, n: int) -> None:
        """Move the first ``cnt[a]`` carried requests of ``src[a]`` to ``dst[a]``'s backlog."""
        for a in range(n):
            s, d, need = int(src[a]), int(dst[a]), int(cnt[a])
            if need > self._clen[s]:
                raise ValueError(f"instance {s} forwards {need} but carries {self._clen[s]}")
            cq, bq = self._carry[s], self._backlog[d]
            self._clen[s] -= need
            self._blen[d] += need
            while need:
                seg = cq[0]
                if seg[1] <= need:
                    cq.popleft()
                    take = seg[1]
                else:
                    take = need
                    seg[1] -= need
                bq.append([seg[0], take, seg[2], self._stamp])
                self._stamp += 1
                need -= take

    def process(self, rates, slot: int, terminal, processed_out) -> int:
        """Serve ``min(rate, backlog)`` requests per instance, FIFO.

        Non-terminal output becomes the instance's carry; terminal output
        completes.  Returns the number of instances whose carry was not
        fully forwarded (the caller treats non-zero as an error).
        """
        stale = 0
        hist = self._hist
        for i in range(self.n):
            if self._clen[i]:
                stale += 1
            p = min(int(rates[i]), self._blen[i])
            processed_out[i] = p
            if p <= 0:
                continue
            self._blen[i] -= p
            bq = self._backlog[i]
            term = terminal[i]
            last = self._last_served[i]
            while p:
                seg = bq[0]
                if seg[3] < last:
                    self.fifo_violations += 1
                last = seg[3]
                if seg[1] <= p:
                    bq.popleft()
                    take = seg[1]
                else:
                    take = p
                    seg[1] -= p
                p -= take
                if term:
                    if seg[2]:
                        self.completed_phantom += take
                        self.phantom_in_system -= take
                    else:
                        self.completed_real += take
                        self.real_in_system -= take
                        r = slot - seg[0]
                        if r <= 0:
                            r = 0
                            self.pre_served += take
                        if r >= len(hist):
                            hist.extend([0] * (r + 1 - len(hist)))
                        hist[r] += take
                else:
                    self._carry[i].append([seg[0], take, seg[2], -1])
                    self._clen[i] += take
            self._last_served[i] = last
        return stale


def _score(V, alpha, wv, q):
    return V * wv + alpha * q


def chain_targets(mode, V, alpha, w, qlen, inst_server, succ_ptr, succ_idx, carry, phi_max,
                  keys, uinst, d, batch, out_src, out_dst, out_cnt, x_target) -> int:
    """Chaining decision for every instance with successors.

    Single-target modes write ``x_target[i]`` and one assignment per instance
    with a non-zero carry; batched modes write one assignment per batch and
    set ``x_target[i] = -1``.  Returns the number of assignments, or
    ``ERR_NO_SUCCESSOR`` when an instance has no reachable successor.
    """
    n_inst = len(succ_ptr) - 1
    na = 0
    for i in range(n_inst):
        a, b = succ_ptr[i], succ_ptr[i + 1]
        x_target[i] = -1
        if a == b:
            continue
        si = inst_server[i]
        # reachable successors, ascending server id, with their random keys
        cand = []
        for e in range(a, b):
            j = succ_idx[e]
            wv = w[si, inst_server[j]]
            if not math.isinf(wv):
                cand.append((j, wv, keys[e]))
        if not cand:
            return ERR_NO_SUCCESSOR
        c = int(carry[i])
        if mode == BATCH_SAMPLING or mode == BATCH_FILLING:
            if c == 0:
                continue
            z = (c + batch - 1) // batch
            m = min(d * z, len(cand))
            probed = sorted(range(len(cand)), key=lambda e: (cand[e][2], e))[:m]
            probed.sort()
            sizes = [batch] * (z - 1) + [c - batch * (z - 1)]
            if mode == BATCH_SAMPLING:
                order = sorted(probed, key=lambda e: (_score(V, alpha, cand[e][1], qlen[cand[e][0]]), e))
                for bi in range(z):
                    e = order[bi % m]
                    out_src[na], out_dst[na], out_cnt[na] = i, cand[e][0], sizes[bi]
                    na += 1
            else:
                extra = [0] * len(cand)
                for bi in range(z):
                    best, best_s = -1, 0.0
                    for e in probed:
                        sc = _score(V, alpha, cand[e][1], qlen[cand[e][0]] + extra[e])
                        if best < 0 or sc < best_s:
                            best, best_s = e, sc
                    extra[best] += sizes[bi]
                    out_src[na], out_dst[na], out_cnt[na] = i, cand[best][0], sizes[bi]
                    na += 1
            continue
        if mode == POSCARS:
            pool = range(len(cand))
        elif mode == POD:
            m = min(d, len(cand))
            pool = sorted(sorted(range(len(cand)), key=lambda e: (cand[e][2], e))[:m])
        else:
            pool = None
        if pool is not None:
            best, best_s = -1, 0.0
            for e in pool:
                sc = _score(V, alpha, cand[e][1], qlen[cand[e][0]])
                if best < 0 or sc < best_s:
                    best, best_s = e, sc
        elif mode == RANDOM:
            best = min(int(uinst[i] * len(cand)), len(cand) - 1)
        elif mode == JSQ:
            best = min(range(len(cand)), key=lambda e: (qlen[cand[e][0]], cand[e][2], e))
        elif mode == ONEHOP:
            idle = [e for e in range(len(cand)) if qlen[cand[e][0]] < phi_max[cand[e][0]]]
            pool = idle if idle else range(len(cand))
            best = min(pool, key=lambda e: (cand[e][1], e))
        else:
            raise ValueError(f"unknown chaining mode {mode}")
        x_target[i] = cand[best][0]
        if c > 0:
            out_src[na], out_dst[na], out_cnt[na] = i, cand[best][0], c
            na += 1
    return na


def allocate(V, gamma, alpha, qlen, srv_ptr, srv_inst, iopt_ptr, iopt_res, iopt_rate, iopt_cost,
             capacity, choice_out) -> None:
    """Greedy per-server allocation: repeatedly take the most negative net cost that fits.

    ``choice_out[i]`` receives the local option index (0 is the empty option).
    """
    R = capacity.shape[1]
    vg = V * gamma
    for s in range(len(srv_ptr) - 1):
        entries = []
        for e in range(srv_ptr[s], srv_ptr[s + 1]):
            i = srv_inst[e]
            choice_out[i] = 0
            q = qlen[i]
            for o in range(iopt_ptr[i], iopt_ptr[i + 1]):
                r = vg * iopt_cost[o] - alpha * q * iopt_rate[o]
                if r < 0:
                    entries.append((r, len(entries), i, o))
        if not entries:
            continue
        entries.sort()
        used = [0] * R
        done = set()
        for r, _, i, o in entries:
            if i in done:
                continue
            if all(used[x] + iopt_res[o, x] <= capacity[s, x] for x in range(R)):
                for x in range(R):
                    used[x] += iopt_res[o, x]
                choice_out[i] = o - iopt_ptr[i]
                done.add(i)
