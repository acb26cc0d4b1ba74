"""Pure-Python versions of the compiled kernels (same signatures and results)."""
from __future__ import annotations

import math

import numpy as np


def sweep(s, l, u, write, loads=None):
    pk = 0
    for x in range(len(s)):
        if loads is not None:
            loads[x] = u
        if s[x]:
            if u < l:
                u += 1
                pk += 1
                if write:
                    s[x] = 0
        elif u > 0:
            u -= 1
            if write:
                s[x] = 1
    return u, pk


def periodic_load(s, l):
    if len(s) == 0:
        return 0
    u = 0
    for _ in range(l + 1):
        e, _pk = sweep(s, l, u, False)
        if e == u:
            return u
        u = e
    return -1


def soliton_rounds(s, kmax):
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    n = len(s)
    h = hmin = 0
    m = 0
    for x in range(n):
        if h < hmin:
            hmin, m = h, x
        h += 1 if s[x] else -1
    cnt = np.zeros(kmax, dtype=np.int64)
    stack = []
    for j in range(n):
        x = (m + j) % n
        if s[x]:
            stack.append(0)
        elif stack:
            c = stack.pop() + 1
            cnt[min(c, kmax) - 1] += 1
            if stack and stack[-1] < c:
                stack[-1] = c
    if stack:
        raise ValueError("unmatched balls: density must be below one half")
    return cnt


def current_field(s, l, i, ul, ui, out):
    u, v = ul, ui
    tot = 0
    for x in range(len(s)):
        o = s[x]
        out[x] = min(i - v, u)
        tot += int(out[x])
        if o:
            if u < l:
                u += 1
                o = 0
        elif u > 0:
            u -= 1
            o = 1
        if o:
            if v < i:
                v += 1
        elif v > 0:
            v -= 1
    return tot, u, v


def periodic_load_after(s, l, ul, i):
    t = np.array(s, dtype=np.uint8)
    if len(t) == 0:
        return 0
    sweep(t, l, ul, True)
    return periodic_load(t, i)


def lane_evolve(w, l, steps, bonds, acc):
    n = len(w)
    if n == 0 or l <= 0 or steps <= 0:
        return 0
    cfg = unpack_lanes(w, 64)
    loads = np.zeros(n, dtype=np.int32)
    for lane in range(64):
        s = cfg[lane]
        for _ in range(steps):
            u = periodic_load(s, l)
            if u < 0:
                return -1
            sweep(s, l, u, True, loads)
            for k, b in enumerate(bonds):
                acc[k, lane] += int(loads[b])
    w[:] = pack_lanes(cfg)
    return 0


def pack_lanes(configs):
    configs = np.asarray(configs, dtype=np.uint8)
    if configs.shape[0] > 64:
        raise ValueError("at most 64 lanes")
    shifts = np.arange(configs.shape[0], dtype=np.uint64)
    return (configs.astype(np.uint64) << shifts[:, None]).sum(axis=0, dtype=np.uint64)


def unpack_lanes(w, nlanes):
    w = np.asarray(w, dtype=np.uint64)
    shifts = np.arange(nlanes, dtype=np.uint64)
    return ((w[None, :] >> shifts[:, None]) & np.uint64(1)).astype(np.uint8)


def bernoulli_bits(raw, threshold, out):
    halves = np.empty(2 * len(raw), dtype=np.uint64)
    halves[0::2] = raw & np.uint64(0xFFFFFFFF)
    halves[1::2] = raw >> np.uint64(32)
    out[:] = halves[: len(out)] < np.uint64(threshold)


def metropolis(s, beta1, beta_inf, sites, uniforms):
    n = len(s)
    acc = 0
    for x, r in zip(sites, uniforms):
        x = int(x)
        xl, xr = (x - 1) % n, (x + 1) % n
        before = int(s[xl] == 0 and s[x] == 1) + int(s[x] == 0 and s[xr] == 1)
        s[x] ^= 1
        after = int(s[xl] == 0 and s[x] == 1) + int(s[x] == 0 and s[xr] == 1)
        dw = beta1 * (after - before) + beta_inf * (1 if s[x] else -1)
        if dw <= 0 or r < math.exp(-dw):
            acc += 1
        else:
            s[x] ^= 1
    return acc
