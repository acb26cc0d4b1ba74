# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled carrier kernels.

Every function here has a pure-Python twin in ``_pykernels`` with the same
signature and bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t, int32_t, int64_t
from libc.math cimport exp

cnp.import_array()

cdef enum:
    MAXPLANES = 64


cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


cdef inline int _sweep(uint8_t* s, Py_ssize_t n, int l, int u, bint write,
                       int32_t* loads, int64_t* pickups) noexcept nogil:
    cdef Py_ssize_t x
    cdef int64_t pk = 0
    cdef int o, pick, drop
    for x in range(n):
        if loads != NULL:
            loads[x] = u
        o = s[x]
        pick = o & (u < l)
        drop = (o ^ 1) & (u > 0)
        u += pick - drop
        pk += pick
        if write:
            s[x] = o ^ pick ^ drop
    pickups[0] = pk
    return u


def sweep(uint8_t[::1] s, int l, int u, bint write, int32_t[::1] loads=None):
    """One left-to-right carrier pass; returns (exit load, pickups)."""
    cdef int64_t pk = 0
    cdef int32_t* lp = NULL
    cdef Py_ssize_t n = s.shape[0]
    if loads is not None:
        lp = &loads[0] if n > 0 else NULL
    if n == 0:
        return u, 0
    with nogil:
        u = _sweep(&s[0], n, l, u, write, lp, &pk)
    return u, pk


cdef int _periodic_load(const uint8_t* s, Py_ssize_t n, int l) noexcept nogil:
    cdef int u = 0, e, it
    cdef int64_t pk
    for it in range(l + 1):
        e = _sweep(<uint8_t*>s, n, l, u, False, NULL, &pk)
        if e == u:
            return u
        u = e
    return -1


def periodic_load(const uint8_t[::1] s, int l):
    """Least fixed point of the pass map, or -1 if not reached in l+1 passes."""
    if s.shape[0] == 0:
        return 0
    return _periodic_load(&s[0], s.shape[0], l)


def soliton_rounds(const uint8_t[::1] s, int kmax):
    """Counts of matched 1-0 pairs by elimination round, rounds 1..kmax.

    Requires fewer balls than holes; the last slot collects every deeper round.
    """
    cdef Py_ssize_t n = s.shape[0], x, m = 0, j, top = 0
    cdef int64_t h = 0, hmin = 0, c, q
    cdef int64_t o, pop, idx
    if kmax < 1:
        raise ValueError("kmax must be positive")
    cdef cnp.ndarray[int64_t, ndim=1] out = np.zeros(kmax, dtype=np.int64)
    cdef int64_t[::1] cnt = out
    cdef int64_t[::1] buf = np.zeros(n + 3, dtype=np.int64)
    cdef int64_t* st = &buf[2]  # st[-1], st[-2] are scratch slots
    with nogil:
        for x in range(n):
            q = h < hmin
            hmin = h if q else hmin
            m = x if q else m
            h += 2 * <int64_t>s[x] - 1
        # branch-free stack pass: a push writes a zero at st[top]; a pop reads
        # st[top-1] and raises its parent st[top-2] to the popped depth
        for j in range(n):
            x = m + j
            if x >= n:
                x -= n
            o = s[x]
            pop = (1 - o) & (top > 0)
            c = st[top - 1] + 1
            idx = (c if c < kmax else kmax) - 1
            cnt[idx] += pop
            q = c * pop
            st[top - 2] = q if q > st[top - 2] else st[top - 2]
            st[top] = 0
            top += o - pop
    if top != 0:
        raise ValueError("unmatched balls: density must be below one half")
    return out


def current_field(const uint8_t[::1] s, int l, int i, int ul, int ui, int32_t[::1] out):
    """Generalized current min(i - u'(x), u(x)) for given entering loads.

    ``s`` is left untouched.  Returns (total, exit load of u, exit load of u').
    """
    cdef Py_ssize_t n = s.shape[0], x
    cdef int u = ul, v = ui, a, b, o, pick, drop
    cdef int64_t tot = 0
    with nogil:
        for x in range(n):
            # first carrier (capacity l) on s, second (capacity i) on T_l(s)
            a = i - v
            b = u
            a = a if a < b else b
            out[x] = a
            tot += a
            o = s[x]
            pick = o & (u < l)
            drop = (o ^ 1) & (u > 0)
            u += pick - drop
            o = o ^ pick ^ drop
            v += (o & (v < i)) - ((o ^ 1) & (v > 0))
    return tot, u, v


def periodic_load_after(const uint8_t[::1] s, int l, int ul, int i):
    """Fixed-point load of a capacity-i carrier acting on T_l(s) (T_l from ul)."""
    cdef Py_ssize_t n = s.shape[0]
    cdef uint8_t[::1] t = np.array(s, dtype=np.uint8)
    cdef int64_t pk
    if n == 0:
        return 0
    _sweep(&t[0], n, l, ul, True, NULL, &pk)
    return _periodic_load(&t[0], n, i)


# ---------------------------------------------------------------------------
# 64-lane bit-sliced evolution.  Word x holds site x of 64 independent rings;
# the carrier load is stored as B = bit_length(l) bit planes.

cdef inline void _lane_step(uint64_t o, uint64_t* c, int nb, uint64_t* lm,
                            uint64_t* out) noexcept nogil:
    # lm[b] is all ones where bit b of the capacity is set
    cdef uint64_t nz = 0, full = <uint64_t>-1, carry, borrow, cb, cz
    cdef int b
    for b in range(nb):
        cb = c[b]
        nz |= cb
        full &= ~(cb ^ lm[b])
    carry = o & ~full
    borrow = ~o & nz
    out[0] = (o & full) | borrow
    for b in range(nb):
        cb = c[b]
        c[b] = cb ^ (carry | borrow)
        carry &= cb
        borrow &= ~cb


cdef inline void _lane_range_n(uint64_t* w, Py_ssize_t start, Py_ssize_t stop, uint64_t* c,
                               int nb, uint64_t* lm, bint write) noexcept nogil:
    cdef Py_ssize_t x
    cdef uint64_t o
    for x in range(start, stop):
        _lane_step(w[x], c, nb, lm, &o)
        if write:
            w[x] = o


cdef void _lane_range(uint64_t* w, Py_ssize_t start, Py_ssize_t stop, uint64_t* c,
                      int nb, uint64_t* lm, bint write) noexcept nogil:
    # constant plane counts let the compiler unroll the inner loops
    if write:
        if nb == 1:
            _lane_range_n(w, start, stop, c, 1, lm, True)
        elif nb == 2:
            _lane_range_n(w, start, stop, c, 2, lm, True)
        elif nb == 3:
            _lane_range_n(w, start, stop, c, 3, lm, True)
        elif nb == 4:
            _lane_range_n(w, start, stop, c, 4, lm, True)
        else:
            _lane_range_n(w, start, stop, c, nb, lm, True)
    else:
        if nb == 1:
            _lane_range_n(w, start, stop, c, 1, lm, False)
        elif nb == 2:
            _lane_range_n(w, start, stop, c, 2, lm, False)
        elif nb == 3:
            _lane_range_n(w, start, stop, c, 3, lm, False)
        elif nb == 4:
            _lane_range_n(w, start, stop, c, 4, lm, False)
        else:
            _lane_range_n(w, start, stop, c, nb, lm, False)


cdef inline void _lane_record(uint64_t* c, int nb, int64_t* acc) noexcept nogil:
    cdef int b, k
    cdef uint64_t p
    for b in range(nb):
        p = c[b]
        while p:
            k = __builtin_ctzll(p)
            acc[k] += (<int64_t>1) << b
            p &= p - 1


cdef int _lane_entry(uint64_t* w, Py_ssize_t n, int nb, uint64_t* lm, int l,
                     uint64_t* out, Py_ssize_t* xstart) noexcept nogil:
    """Entering carrier planes at some site xstart, valid for a periodic pass.

    Returns 0 on success, -1 if the fixed point iteration did not converge.
    """
    cdef uint64_t lo[MAXPLANES]
    cdef uint64_t hi[MAXPLANES]
    cdef uint64_t tmp[MAXPLANES]
    cdef uint64_t diff
    cdef Py_ssize_t x, stop
    cdef int b, it
    for b in range(nb):
        lo[b] = 0
        hi[b] = lm[b]
    # sandwich: the fixed-point carrier lies between the carriers started
    # empty and full; once they meet in every lane the state is determined
    x = 0
    while True:
        diff = 0
        for b in range(nb):
            diff |= lo[b] ^ hi[b]
        if diff == 0:
            for b in range(nb):
                out[b] = lo[b]
            xstart[0] = x if x < n else 0
            return 0
        if x >= n:
            break
        stop = x + 16 if x + 16 < n else n
        _lane_range(w, x, stop, lo, nb, lm, False)
        _lane_range(w, x, stop, hi, nb, lm, False)
        x = stop
    # no coalescence: plain least-fixed-point iteration from the empty carrier
    for b in range(nb):
        out[b] = 0
    for it in range(l + 2):
        for b in range(nb):
            tmp[b] = out[b]
        _lane_range(w, 0, n, tmp, nb, lm, False)
        diff = 0
        for b in range(nb):
            diff |= tmp[b] ^ out[b]
            out[b] = tmp[b]
        if diff == 0:
            xstart[0] = 0
            return 0
    return -1


def lane_evolve(uint64_t[::1] w, int l, int steps, int64_t[::1] bonds,
                int64_t[:, ::1] acc):
    """Apply T_l ``steps`` times to 64 packed rings in place.

    ``bonds`` must be sorted; ``acc[k, lane]`` accumulates the load entering
    site ``bonds[k]`` over all steps.  Returns 0, or -1 on non-convergence.
    """
    cdef Py_ssize_t n = w.shape[0], nbond = bonds.shape[0]
    cdef int nb = 0, b, st, rc = 0
    cdef uint64_t c[MAXPLANES]
    cdef uint64_t lm[MAXPLANES]
    cdef uint64_t lbits = <uint64_t>l
    cdef Py_ssize_t xs, x, k, seg, kstart
    while (lbits >> nb) != 0:
        nb += 1
    if n == 0 or nb == 0 or steps <= 0:
        return 0
    if nb > MAXPLANES:
        raise ValueError("capacity too large")
    for b in range(nb):
        lm[b] = <uint64_t>-1 if (lbits >> b) & 1 else 0
    with nogil:
        for st in range(steps):
            if _lane_entry(&w[0], n, nb, lm, l, c, &xs) != 0:
                rc = -1
                break
            # first bond index >= xs
            kstart = 0
            while kstart < nbond and bonds[kstart] < xs:
                kstart += 1
            x = xs
            k = kstart
            while x < n:
                seg = bonds[k] if k < nbond else n
                _lane_range(&w[0], x, seg, c, nb, lm, True)
                x = seg
                if k < nbond:
                    _lane_record(c, nb, &acc[k, 0])
                    k += 1
            k = 0
            x = 0
            while x < xs:
                seg = bonds[k] if (k < kstart) else xs
                _lane_range(&w[0], x, seg, c, nb, lm, True)
                x = seg
                if k < kstart:
                    _lane_record(c, nb, &acc[k, 0])
                    k += 1
    return rc


def pack_lanes(const uint8_t[:, ::1] configs):
    """Pack up to 64 configurations (rows) into one word per site."""
    cdef Py_ssize_t nl = configs.shape[0], n = configs.shape[1], x, k
    if nl > 64:
        raise ValueError("at most 64 lanes")
    cdef cnp.ndarray[uint64_t, ndim=1] out = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] w = out
    with nogil:
        for k in range(nl):
            for x in range(n):
                if configs[k, x]:
                    w[x] |= (<uint64_t>1) << k
    return out


def unpack_lanes(uint64_t[::1] w, int nlanes):
    cdef Py_ssize_t n = w.shape[0], x
    cdef int k
    cdef cnp.ndarray[uint8_t, ndim=2] out = np.zeros((nlanes, n), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    with nogil:
        for x in range(n):
            for k in range(nlanes):
                o[k, x] = (w[x] >> k) & 1
    return out


def bernoulli_bits(uint64_t[::1] raw, uint64_t threshold, uint8_t[::1] out):
    """Site x occupied iff the x-th 32-bit half of ``raw`` is below threshold."""
    cdef Py_ssize_t n = out.shape[0], h = n >> 1, x
    cdef uint64_t r
    with nogil:
        for x in range(h):
            r = raw[x]
            out[2 * x] = (r & <uint64_t>0xFFFFFFFFUL) < threshold
            out[2 * x + 1] = (r >> 32) < threshold
        if n & 1:
            out[n - 1] = (raw[h] & <uint64_t>0xFFFFFFFFUL) < threshold


def metropolis(uint8_t[::1] s, double beta1, double beta_inf,
               int64_t[::1] sites, double[::1] uniforms):
    """Single-site-flip Metropolis moves for exp(-beta1*E1 - beta_inf*Q).

    E1 is the number of sites x with s[x-1] = 0 and s[x] = 1.
    """
    cdef Py_ssize_t n = s.shape[0], m = sites.shape[0], t, x, xl, xr
    cdef int d1, dq, before, after
    cdef int64_t acc = 0
    cdef double dw
    with nogil:
        for t in range(m):
            x = sites[t]
            xl = x - 1 if x > 0 else n - 1
            xr = x + 1 if x + 1 < n else 0
            before = (s[xl] == 0 and s[x] == 1) + (s[x] == 0 and s[xr] == 1)
            s[x] ^= 1
            after = (s[xl] == 0 and s[x] == 1) + (s[x] == 0 and s[xr] == 1)
            d1 = after - before
            dq = 1 if s[x] else -1
            dw = beta1 * d1 + beta_inf * dq
            if dw <= 0 or uniforms[t] < exp(-dw):
                acc += 1
            else:
                s[x] ^= 1
    return acc
