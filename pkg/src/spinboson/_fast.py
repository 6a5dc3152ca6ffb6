"""Compiled inner loop for the sampler's incremental action update."""
import math

import numba
import numpy as np


@numba.njit(cache=True)
def _ome(x):
    return -math.expm1(-x)


@numba.njit(cache=True)
def flip_delta_fast(sign, jumps, T, lo, hi, weights, rates, lam, mu):
    n = len(jumps) + 1
    bp = np.empty(n + 1)
    bp[0] = 0.0
    bp[1:n] = jumps
    bp[n] = T
    lin = 0.0
    for i in range(n):
        s = sign if i % 2 == 0 else -sign
        a = min(max(bp[i], lo), hi)
        b = min(max(bp[i + 1], lo), hi)
        lin += s * (b - a)
    delta = 2.0 * mu * lin
    if lam == 0.0 or (lo <= 0.0 and hi >= T):
        return delta
    quad = 0.0
    for j in range(len(rates)):
        w = weights[j]
        if w == 0.0:
            continue
        om = rates[j]
        gl = 0.0
        grl = 0.0
        gh = 0.0
        grh = 0.0
        for i in range(n):
            s = sign if i % 2 == 0 else -sign
            a_r = min(max(bp[i], lo), hi)
            b_r = min(max(bp[i + 1], lo), hi)
            if b_r > a_r:
                f = _ome(om * (b_r - a_r))
                grl += s * math.exp(-om * (a_r - lo)) * f
                grh += s * math.exp(-om * (hi - b_r)) * f
            if bp[i] < lo:
                b_l = min(bp[i + 1], lo)
                gl += s * math.exp(-om * (lo - b_l)) * _ome(om * (b_l - bp[i]))
            if bp[i + 1] > hi:
                a_h = max(bp[i], hi)
                gh += s * math.exp(-om * (a_h - hi)) * _ome(om * (bp[i + 1] - a_h))
        cross = 0.0
        if lo > 0.0:
            cross += gl * grl
        if hi < T:
            cross += gh * grh
        quad += w / (om * om) * cross
    return delta - 4.0 * lam * lam * quad


@numba.njit(cache=True)
def _phi2(x):
    if abs(x) < 1e-3:
        return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    return x + math.expm1(-x)


@numba.njit(cache=True)
def quadratic_form_fast(signs, jumps, counts, T, weights, rates):
    """Per-path int int W x x; ``jumps`` padded rows, ``counts`` real jump numbers."""
    n_paths = len(signs)
    out = np.empty(n_paths)
    for p in range(n_paths):
        k = counts[p]
        acc = 0.0
        for j in range(len(rates)):
            om = rates[j]
            u = 0.0
            tot = 0.0
            prev = 0.0
            s = float(signs[p])
            for i in range(k + 1):
                t = jumps[p, i] if i < k else T
                x = om * (t - prev)
                f = _ome(x)
                decay = f / om
                # one transcendental per interval: e^{-x} = 1 - f and phi2 = x - f
                p2 = _phi2(x) if x < 1e-3 else x - f
                tot += s * u * decay + p2 / (om * om)
                u = u * (1.0 - f) + s * decay
                prev = t
                s = -s
            acc += weights[j] * tot
        out[p] = 2.0 * acc
    return out
