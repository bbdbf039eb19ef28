# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled per-slot kernels.  Mirrors ``_pykernels`` exactly."""
from libc.math cimport isinf
from libc.stdint cimport int64_t, uint8_t
from libcpp.deque cimport deque
from libcpp.vector cimport vector
from libcpp.utility cimport pair
from libcpp.algorithm cimport sort

import numpy as np

cdef enum:
    _POSCARS = 0
    _POD = 1
    _BS = 2
    _BF = 3
    _RANDOM = 4
    _JSQ = 5
    _ONEHOP = 6

POSCARS, POD, BATCH_SAMPLING, BATCH_FILLING, RANDOM, JSQ, ONEHOP = range(7)
ERR_NO_SUCCESSOR = -2


cdef struct Seg:
    int64_t arrival
    int64_t count
    int64_t stamp
    bint phantom


cdef class InstanceQueues:
    cdef public int64_t n
    cdef vector[deque[Seg]] _backlog
    cdef vector[deque[Seg]] _carry
    cdef vector[int64_t] _blen
    cdef vector[int64_t] _clen
    cdef vector[int64_t] _last_served
    cdef vector[int64_t] _hist
    cdef int64_t _stamp
    cdef public int64_t real_in_system, phantom_in_system
    cdef public int64_t completed_real, completed_phantom, fifo_violations, pre_served

    def __init__(self, int64_t n):
        self.n = n
        self._backlog.resize(n)
        self._carry.resize(n)
        self._blen.assign(n, 0)
        self._clen.assign(n, 0)
        self._last_served.assign(n, -1)
        self._stamp = 0
        self.real_in_system = 0
        self.phantom_in_system = 0
        self.completed_real = 0
        self.completed_phantom = 0
        self.fifo_violations = 0
        self.pre_served = 0

    def lengths(self):
        out = np.empty(self.n, dtype=np.int64)
        cdef int64_t[:] v = out
        cdef int64_t i
        for i in range(self.n):
            v[i] = self._blen[i]
        return out

    def carries(self):
        out = np.empty(self.n, dtype=np.int64)
        cdef int64_t[:] v = out
        cdef int64_t i
        for i in range(self.n):
            v[i] = self._clen[i]
        return out

    def backlog(self, int64_t i):
        return [(s.arrival, s.count, bool(s.phantom)) for s in self._backlog[i]]

    def carry(self, int64_t i):
        return [(s.arrival, s.count, bool(s.phantom)) for s in self._carry[i]]

    def response_histogram(self):
        return np.array([x for x in self._hist], dtype=np.int64)

    cdef inline void _count_in(self, int64_t count, bint phantom):
        if phantom:
            self.phantom_in_system += count
        else:
            self.real_in_system += count

    def push(self, int64_t i, int64_t arrival, int64_t count, phantom):
        cdef Seg seg
        if count <= 0:
            return
        seg.arrival = arrival
        seg.count = count
        seg.phantom = bool(phantom)
        seg.stamp = self._stamp
        self._stamp += 1
        self._backlog[i].push_back(seg)
        self._blen[i] += count
        self._count_in(count, seg.phantom)

    def set_carry(self, int64_t i, int64_t arrival, int64_t count, phantom):
        cdef Seg seg
        if count <= 0:
            return
        seg.arrival = arrival
        seg.count = count
        seg.phantom = bool(phantom)
        seg.stamp = -1
        self._carry[i].push_back(seg)
        self._clen[i] += count
        self._count_in(count, seg.phantom)

    def forward(self, const int64_t[:] src, const int64_t[:] dst, const int64_t[:] cnt, int64_t n):
        cdef int64_t a, s, d, need, take
        cdef Seg seg
        cdef deque[Seg]* cq
        cdef deque[Seg]* bq
        for a in range(n):
            s = src[a]
            d = dst[a]
            need = cnt[a]
            if need > self._clen[s]:
                raise ValueError(f"instance {s} forwards {need} but carries {self._clen[s]}")
            cq = &self._carry[s]
            bq = &self._backlog[d]
            self._clen[s] -= need
            self._blen[d] += need
            while need > 0:
                seg = cq.front()
                cq.pop_front()
                if seg.count <= need:
                    take = seg.count
                else:
                    take = need
                    seg.count -= need
                    cq.push_front(seg)
                seg.count = take
                seg.stamp = self._stamp
                self._stamp += 1
                bq.push_back(seg)
                need -= take

    def process(self, const int64_t[:] rates, int64_t slot, const uint8_t[:] terminal,
                int64_t[:] processed_out):
        cdef int64_t i, p, take, r, last, stale = 0
        cdef Seg seg, out
        cdef deque[Seg]* bq
        cdef bint term
        for i in range(self.n):
            if self._clen[i]:
                stale += 1
            p = rates[i]
            if self._blen[i] < p:
                p = self._blen[i]
            if p < 0:
                p = 0
            processed_out[i] = p
            if p == 0:
                continue
            self._blen[i] -= p
            bq = &self._backlog[i]
            term = terminal[i]
            last = self._last_served[i]
            while p > 0:
                seg = bq.front()
                bq.pop_front()
                if seg.stamp < last:
                    self.fifo_violations += 1
                last = seg.stamp
                if seg.count <= p:
                    take = seg.count
                else:
                    take = p
                    seg.count -= p
                    bq.push_front(seg)
                p -= take
                if term:
                    if seg.phantom:
                        self.completed_phantom += take
                        self.phantom_in_system -= take
                    else:
                        self.completed_real += take
                        self.real_in_system -= take
                        r = slot - seg.arrival
                        if r <= 0:
                            r = 0
                            self.pre_served += take
                        if r >= <int64_t>self._hist.size():
                            self._hist.resize(r + 1, 0)
                        self._hist[r] += take
                else:
                    out.arrival = seg.arrival
                    out.count = take
                    out.phantom = seg.phantom
                    out.stamp = -1
                    self._carry[i].push_back(out)
                    self._clen[i] += take
            self._last_served[i] = last
        return stale


cdef inline double _score(double V, double alpha, double wv, double q) nogil:
    return V * wv + alpha * q


def chain_targets(int mode, double V, double alpha, const double[:, :] w, const int64_t[:] qlen,
                  const int64_t[:] inst_server, const int64_t[:] succ_ptr, const int64_t[:] succ_idx,
                  const int64_t[:] carry, const int64_t[:] phi_max, const double[:] keys,
                  const double[:] uinst, int64_t d, int64_t batch, int64_t[:] out_src,
                  int64_t[:] out_dst, int64_t[:] out_cnt, int64_t[:] x_target):
    cdef int64_t n_inst = succ_ptr.shape[0] - 1
    cdef int64_t i, a, b, e, f, g, j, si, nc, c, z, m, bi, best, na = 0, tmp, size
    cdef double wv, sc, best_s
    cdef int64_t maxs = 1
    for i in range(n_inst):
        if succ_ptr[i + 1] - succ_ptr[i] > maxs:
            maxs = succ_ptr[i + 1] - succ_ptr[i]
    cdef vector[int64_t] cj, order, extra
    cdef vector[double] cw, ck
    cj.resize(maxs)
    cw.resize(maxs)
    ck.resize(maxs)
    order.resize(maxs)
    extra.resize(maxs)
    for i in range(n_inst):
        a = succ_ptr[i]
        b = succ_ptr[i + 1]
        x_target[i] = -1
        if a == b:
            continue
        si = inst_server[i]
        nc = 0
        for e in range(a, b):
            j = succ_idx[e]
            wv = w[si, inst_server[j]]
            if not isinf(wv):
                cj[nc] = j
                cw[nc] = wv
                ck[nc] = keys[e]
                nc += 1
        if nc == 0:
            return ERR_NO_SUCCESSOR
        c = carry[i]
        if mode == _BS or mode == _BF:
            if c == 0:
                continue
            z = (c + batch - 1) // batch
            m = d * z
            if m > nc:
                m = nc
            _smallest_keys(ck, nc, m, order)
            if mode == _BS:
                # probed, sorted by (score, index)
                for f in range(1, m):
                    tmp = order[f]
                    g = f - 1
                    while g >= 0 and _less(V, alpha, cw, cj, qlen, tmp, order[g]):
                        order[g + 1] = order[g]
                        g -= 1
                    order[g + 1] = tmp
                for bi in range(z):
                    size = batch if bi < z - 1 else c - batch * (z - 1)
                    e = order[bi % m]
                    out_src[na] = i
                    out_dst[na] = cj[e]
                    out_cnt[na] = size
                    na += 1
            else:
                for f in range(nc):
                    extra[f] = 0
                for bi in range(z):
                    size = batch if bi < z - 1 else c - batch * (z - 1)
                    best = -1
                    best_s = 0.0
                    for f in range(m):
                        e = order[f]
                        sc = _score(V, alpha, cw[e], <double>(qlen[cj[e]] + extra[e]))
                        if best < 0 or sc < best_s:
                            best = e
                            best_s = sc
                    extra[best] += size
                    out_src[na] = i
                    out_dst[na] = cj[best]
                    out_cnt[na] = size
                    na += 1
            continue
        best = -1
        if mode == _POSCARS or mode == _POD:
            if mode == _POSCARS:
                m = nc
                for f in range(nc):
                    order[f] = f
            else:
                m = d if d < nc else nc
                _smallest_keys(ck, nc, m, order)
            best_s = 0.0
            for f in range(m):
                e = order[f]
                sc = _score(V, alpha, cw[e], <double>qlen[cj[e]])
                if best < 0 or sc < best_s:
                    best = e
                    best_s = sc
        elif mode == _RANDOM:
            best = <int64_t>(uinst[i] * nc)
            if best > nc - 1:
                best = nc - 1
        elif mode == _JSQ:
            best = 0
            for e in range(1, nc):
                if qlen[cj[e]] < qlen[cj[best]] or (qlen[cj[e]] == qlen[cj[best]] and ck[e] < ck[best]):
                    best = e
        elif mode == _ONEHOP:
            for e in range(nc):
                if qlen[cj[e]] < phi_max[cj[e]] and (best < 0 or cw[e] < cw[best]):
                    best = e
            if best < 0:
                best = 0
                for e in range(1, nc):
                    if cw[e] < cw[best]:
                        best = e
        else:
            raise ValueError(f"unknown chaining mode {mode}")
        x_target[i] = cj[best]
        if c > 0:
            out_src[na] = i
            out_dst[na] = cj[best]
            out_cnt[na] = c
            na += 1
    return na


cdef inline bint _less(double V, double alpha, vector[double]& cw, vector[int64_t]& cj,
                       const int64_t[:] qlen, int64_t x, int64_t y):
    cdef double sx = _score(V, alpha, cw[x], <double>qlen[cj[x]])
    cdef double sy = _score(V, alpha, cw[y], <double>qlen[cj[y]])
    return sx < sy or (sx == sy and x < y)


cdef void _smallest_keys(vector[double]& ck, int64_t nc, int64_t m, vector[int64_t]& order):
    """Indices of the m smallest keys (ties by index), returned in ascending index order."""
    cdef int64_t f, g, tmp
    for f in range(nc):
        order[f] = f
    # insertion sort by (key, index); nc is small
    for f in range(1, nc):
        tmp = order[f]
        g = f - 1
        while g >= 0 and (ck[tmp] < ck[order[g]] or (ck[tmp] == ck[order[g]] and tmp < order[g])):
            order[g + 1] = order[g]
            g -= 1
        order[g + 1] = tmp
    # first m back into index order
    for f in range(1, m):
        tmp = order[f]
        g = f - 1
        while g >= 0 and tmp < order[g]:
            order[g + 1] = order[g]
            g -= 1
        order[g + 1] = tmp


def allocate(double V, double gamma, double alpha, const int64_t[:] qlen, const int64_t[:] srv_ptr,
             const int64_t[:] srv_inst, const int64_t[:] iopt_ptr, const int64_t[:, :] iopt_res,
             const int64_t[:] iopt_rate, const double[:] iopt_cost, const int64_t[:, :] capacity,
             int64_t[:] choice_out):
    cdef int64_t S = srv_ptr.shape[0] - 1
    cdef int64_t R = capacity.shape[1]
    cdef int64_t s, e, i, o, x, k, n
    cdef double vg = V * gamma, r
    cdef bint fits
    # (r, entry index): sorting the pairs reproduces "smallest r, earliest entry first"
    cdef vector[pair[double, int64_t]] order
    cdef vector[int64_t] ei, eo, used
    cdef vector[uint8_t] done
    used.resize(R)
    done.assign(qlen.shape[0], 0)
    for s in range(S):
        order.clear()
        ei.clear()
        eo.clear()
        for e in range(srv_ptr[s], srv_ptr[s + 1]):
            i = srv_inst[e]
            choice_out[i] = 0
            for o in range(iopt_ptr[i], iopt_ptr[i + 1]):
                r = vg * iopt_cost[o] - alpha * <double>qlen[i] * <double>iopt_rate[o]
                if r < 0:
                    order.push_back(pair[double, int64_t](r, ei.size()))
                    ei.push_back(i)
                    eo.push_back(o)
        n = order.size()
        if n == 0:
            continue
        sort(order.begin(), order.end())
        for x in range(R):
            used[x] = 0
        for k in range(n):
            i = ei[order[k].second]
            if done[i]:
                continue
            o = eo[order[k].second]
            fits = True
            for x in range(R):
                if used[x] + iopt_res[o, x] > capacity[s, x]:
                    fits = False
                    break
            if fits:
                for x in range(R):
                    used[x] += iopt_res[o, x]
                choice_out[i] = o - iopt_ptr[i]
                done[i] = 1
