"""Compiled inner loops (numba).

Ulam entries for an affine piece t = s x + c on [xa, xb] pushed through a
uniform offset law on [nlo, nhi] use the exact cumulative

    C(y) = (1 / (|s| w h)) * int_{t0}^{t1} clip(y - t - nlo, 0, w) dt,

whose differences over cell edges give the matrix entries; with w = 0 the
law is a point mass and C(y) = clip(y - t0, 0, t1 - t0) / (|s| h).
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _q(x):
    return 0.5 * x * x if x > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _cum(y, t0, t1, nlo, nhi, scale):
    w = nhi - nlo
    if w <= 0.0:
        v = y - t0
        if v < 0.0:
            v = 0.0
        if v > t1 - t0:
            v = t1 - t0
        return v * scale
    if y < t0 + nlo:
        return 0.0
    if y > t1 + nhi:
        y = t1 + nhi
    return (_q(y - nlo - t0) - _q(y - nlo - t1) - _q(y - nhi - t0) + _q(y - nhi - t1)) * scale / w


@njit(cache=True, nogil=True)
def _piece_range(k, x0, h, seg_lo, seg_hi, slope, icpt, nlo, nhi, y0, hy, ny, j):
    xa = max(x0 + k * h, seg_lo[j])
    xb = min(x0 + (k + 1) * h, seg_hi[j])
    if xb <= xa:
        return -1, -1, 0.0, 0.0
    ta = slope[j] * xa + icpt[j]
    tb = slope[j] * xb + icpt[j]
    t0, t1 = min(ta, tb), max(ta, tb)
    lo = int(np.floor((t0 + nlo[j] - y0) / hy))
    hi = int(np.floor((t1 + nhi[j] - y0) / hy))
    lo = max(lo, 0)
    hi = min(hi, ny - 1)
    return lo, hi, t0, t1


@njit(cache=True, nogil=True)
def ulam_count(x0, h, n, seg_lo, seg_hi, slope, icpt, nlo, nhi, y0, hy, ny):
    counts = np.zeros(n, dtype=np.int64)
    m = seg_lo.size
    for k in range(n):
        c = 0
        for j in range(m):
            lo, hi, t0, t1 = _piece_range(k, x0, h, seg_lo, seg_hi, slope, icpt, nlo, nhi, y0, hy, ny, j)
            if lo >= 0 and hi >= lo:
                c += hi - lo + 1
        counts[k] = c
    return counts


@njit(cache=True, nogil=True)
def ulam_fill(x0, h, n, seg_lo, seg_hi, slope, icpt, nlo, nhi, y0, hy, ny, offsets, rows, cols, vals):
    m = seg_lo.size
    for k in range(n):
        p = offsets[k]
        for j in range(m):
            lo, hi, t0, t1 = _piece_range(k, x0, h, seg_lo, seg_hi, slope, icpt, nlo, nhi, y0, hy, ny, j)
            if lo < 0 or hi < lo:
                continue
            scale = 1.0 / (abs(slope[j]) * h)
            prev = _cum(y0 + lo * hy, t0, t1, nlo[j], nhi[j], scale)
            for l in range(lo, hi + 1):
                cur = _cum(y0 + (l + 1) * hy, t0, t1, nlo[j], nhi[j], scale)
                rows[p] = k
                cols[p] = l
                vals[p] = cur - prev
                prev = cur
                p += 1


@njit(cache=True, nogil=True)
def _region(x, right):
    # first index with x <= right[k]; arrays are tiny so a scan beats bisection
    n = right.size
    for k in range(n - 1):
        if x <= right[k]:
            return k
    return n - 1


@njit(cache=True, nogil=True)
def _branch(x, right):
    return _region(x, right)


@njit(cache=True, nogil=True)
def chain_step(x, u, br_right, br_slope, br_icpt, nz_right, nz_lo, nz_hi, nz_flip):
    j = _branch(x, br_right)
    t = br_slope[j] * x + br_icpt[j]
    r = _region(x, nz_right)
    uu = 1.0 - u if nz_flip[r] else u
    return t + nz_lo[r] + uu * (nz_hi[r] - nz_lo[r])


@njit(cache=True, nogil=True)
def _label(x, well_lo, well_hi, well_id):
    # well pieces sorted and disjoint; returns the well index or 0 (hole)
    for k in range(well_lo.size):
        if x < well_lo[k]:
            return 0
        if x <= well_hi[k]:
            return well_id[k]
    return 0


@njit(cache=True, nogil=True)
def label_points(xs, well_lo, well_hi, well_id):
    out = np.empty(xs.size, dtype=np.int64)
    for n in range(xs.size):
        out[n] = _label(xs[n], well_lo, well_hi, well_id)
    return out


@njit(cache=True, nogil=True)
def run_to_target(rng, x, target_mask, require_jump, cap,
                  br_right, br_slope, br_icpt, nz_right, nz_lo, nz_hi, nz_flip,
                  well_lo, well_hi, well_id):
    """Iterate the chain until it sits in a well flagged by target_mask.

    target_mask[w] for w = 0..kappa (0 = hole).  Returns
    (steps, final_x, final_label, visits) where visits[w] counts step
    starts in each label before stopping.
    """
    visits = np.zeros(target_mask.size, dtype=np.int64)
    lab = _label(x, well_lo, well_hi, well_id)
    if not require_jump and target_mask[lab]:
        return 0, x, lab, visits
    n = 0
    while n < cap:
        visits[lab] += 1
        x = chain_step(x, rng.random(), br_right, br_slope, br_icpt, nz_right, nz_lo, nz_hi, nz_flip)
        n += 1
        lab = _label(x, well_lo, well_hi, well_id)
        if target_mask[lab]:
            return n, x, lab, visits
    return -1, x, lab, visits


@njit(cache=True, nogil=True)
def run_horizon(rng, x, beta, horizon, max_jumps,
                br_right, br_slope, br_icpt, nz_right, nz_lo, nz_hi, nz_flip):
    """Jump path on the sped-up clock up to `horizon`; returns (states, times)."""
    states = np.empty(max_jumps + 1)
    times = np.empty(max_jumps + 1)
    states[0] = x
    times[0] = 0.0
    t = 0.0
    n = 0
    while n < max_jumps:
        t += rng.exponential(1.0) / beta
        if t > horizon:
            break
        x = chain_step(x, rng.random(), br_right, br_slope, br_icpt, nz_right, nz_lo, nz_hi, nz_flip)
        n += 1
        states[n] = x
        times[n] = t
    return states[:n + 1].copy(), times[:n + 1].copy()
