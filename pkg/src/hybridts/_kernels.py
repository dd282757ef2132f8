"""Hot numeric loops.

Every kernel exists as a plain loop (``_loop_*``), compiled with numba's
``njit`` when numba is importable, and most also have a vectorised numpy
twin (``_np_*``).  Which one the public names bind to is decided once at
import time:

* numba installed and ``HYBRIDTS_DISABLE_NUMBA`` unset  -> compiled loops
* otherwise                                             -> numpy twins
  (or the interpreted loop where no vectorised form exists)

Both paths return identical results; ``tests/test_kernels.py`` pins that.
"""

import os
import warnings

import numpy as np

_DISABLE = os.environ.get("HYBRIDTS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    if not _DISABLE:
        warnings.warn("numba not found; falling back to numpy kernels")

HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLE


def _jit(fn):
    if HAVE_NUMBA:
        return _nb.njit(cache=True, nogil=True)(fn)
    return fn


# --------------------------------------------------------------------------
# prefix-minimum bound scan
#
# Checks v[k] <= b[j] for every j <= k.  Because only the smallest b seen so
# far matters, one pass suffices.  Returns the pair minimising the
# tolerance-scaled slack  min_{j<=k} b[j] - v[k] + atol + rtol*|.|.
# --------------------------------------------------------------------------

def _loop_prefix_bound(b, v, atol, rtol):
    n = b.shape[0]
    best_k = -1
    best_j = -1
    best_raw = np.inf
    best_scaled = np.inf
    cur = np.inf
    cur_j = -1
    for k in range(n):
        if b[k] < cur:
            cur = b[k]
            cur_j = k
        raw = cur - v[k]
        scaled = raw + atol + rtol * abs(cur)
        if scaled < best_scaled:
            best_scaled = scaled
            best_raw = raw
            best_k = k
            best_j = cur_j
    return best_j, best_k, best_raw, best_scaled


def _np_prefix_bound(b, v, atol, rtol):
    n = b.shape[0]
    if n == 0:
        return -1, -1, np.inf, np.inf
    pm = np.minimum.accumulate(b)
    new_min = np.empty(n, dtype=np.bool_)
    new_min[0] = True
    new_min[1:] = b[1:] < pm[:-1]
    idx = np.arange(n)
    arg = np.maximum.accumulate(np.where(new_min, idx, 0))
    raw = pm - v
    scaled = raw + atol + rtol * np.abs(pm)
    k = int(np.argmin(scaled))
    return int(arg[k]), k, float(raw[k]), float(scaled[k])


# --------------------------------------------------------------------------
# late exceedance (uniform attractivity)
#
# s* = first index with d <= cap.  Among k with t[k] >= t[s*] + T, find the
# largest d[k].  Returns (s*, k, d[k]) or (-1, -1, -inf) when no pair exists.
# --------------------------------------------------------------------------

def _loop_late_exceedance(t, d, cap, horizon):
    n = t.shape[0]
    s = -1
    for j in range(n):
        if d[j] <= cap:
            s = j
            break
    if s < 0:
        return -1, -1, -np.inf
    start = t[s] + horizon
    best_k = -1
    best = -np.inf
    for k in range(s, n):
        if t[k] >= start and d[k] > best:
            best = d[k]
            best_k = k
    if best_k < 0:
        return -1, -1, -np.inf
    return s, best_k, best


def _np_late_exceedance(t, d, cap, horizon):
    hits = np.flatnonzero(d <= cap)
    if hits.size == 0:
        return -1, -1, -np.inf
    s = int(hits[0])
    k0 = max(int(np.searchsorted(t, t[s] + horizon, side="left")), s)
    if k0 >= t.shape[0]:
        return -1, -1, -np.inf
    k = k0 + int(np.argmax(d[k0:]))
    return s, k, float(d[k])


# --------------------------------------------------------------------------
# band corridor: maximal runs of consecutive samples with lo <= d <= hi.
# Returns the earliest (s, k) with t[k] - t[s] >= T inside one run, else
# (-1, -1), together with the longest run span.
# --------------------------------------------------------------------------

def _loop_first_corridor(t, d, lo, hi, horizon):
    n = t.shape[0]
    longest = -np.inf
    found_s = -1
    found_k = -1
    run_start = -1
    for k in range(n):
        if d[k] >= lo and d[k] <= hi:
            if run_start < 0:
                run_start = k
            span = t[k] - t[run_start]
            if span > longest:
                longest = span
            if found_s < 0 and span >= horizon:
                found_s = run_start
                found_k = k
        else:
            run_start = -1
    return found_s, found_k, longest


def _runs(mask):
    """Start/stop (exclusive) indices of the True runs in ``mask``."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return edges[0::2], edges[1::2]


def _np_first_corridor(t, d, lo, hi, horizon):
    mask = (d >= lo) & (d <= hi)
    starts, stops = _runs(mask)
    if starts.size == 0:
        return -1, -1, -np.inf
    spans = t[stops - 1] - t[starts]
    longest = float(spans.max())
    ok = np.flatnonzero(spans >= horizon)
    if ok.size == 0:
        return -1, -1, longest
    s = int(starts[ok[0]])
    k = int(np.searchsorted(t, t[s] + horizon, side="left"))
    # the earliest k in the run reaching the span
    while t[k] - t[s] < horizon:
        k += 1
    return s, k, longest


# --------------------------------------------------------------------------
# corridor decrease: inside each band run, every pair s <= k with
# t[k] >= t[s] + T must satisfy V[k] <= V[s] - delta.  The binding s for a
# given k is the minimiser of V over the run prefix ending at t[k] - T.
# Returns the pair minimising the scaled slack  V[s] - delta - V[k] + tol.
# --------------------------------------------------------------------------

def _loop_corridor_decrease(t, d, V, lo, hi, horizon, delta, atol, rtol):
    n = t.shape[0]
    best_s = -1
    best_k = -1
    best_raw = np.inf
    best_scaled = np.inf
    pairs = 0
    k = 0
    while k < n:
        if not (d[k] >= lo and d[k] <= hi):
            k += 1
            continue
        start = k
        stop = k
        while stop < n and d[stop] >= lo and d[stop] <= hi:
            stop += 1
        p = start
        vmin = np.inf
        jmin = -1
        for m in range(start, stop):
            while p < m and t[p] <= t[m] - horizon:
                if V[p] < vmin:
                    vmin = V[p]
                    jmin = p
                p += 1
            if jmin >= 0:
                pairs += p - start
                raw = vmin - delta - V[m]
                scaled = raw + atol + rtol * abs(vmin)
                if scaled < best_scaled:
                    best_scaled = scaled
                    best_raw = raw
                    best_s = jmin
                    best_k = m
        k = stop
    return best_s, best_k, best_raw, best_scaled, pairs


def _np_corridor_decrease(t, d, V, lo, hi, horizon, delta, atol, rtol):
    mask = (d >= lo) & (d <= hi)
    starts, stops = _runs(mask)
    best = (-1, -1, np.inf, np.inf)
    pairs = 0
    for a, b in zip(starts, stops):
        tr = t[a:b]
        vr = V[a:b]
        # number of admissible s for each k: t[s] <= t[k] - T
        cnt = np.searchsorted(tr, tr - horizon, side="right")
        cnt = np.minimum(cnt, np.arange(tr.size))
        pairs += int(cnt.sum())
        ok = cnt > 0
        if not ok.any():
            continue
        pm = np.minimum.accumulate(vr)
        new_min = np.empty(vr.size, dtype=np.bool_)
        new_min[0] = True
        new_min[1:] = vr[1:] < pm[:-1]
        arg = np.maximum.accumulate(np.where(new_min, np.arange(vr.size), 0))
        m = np.flatnonzero(ok)
        j = cnt[m] - 1
        vmin = pm[j]
        raw = vmin - delta - vr[m]
        scaled = raw + atol + rtol * np.abs(vmin)
        i = int(np.argmin(scaled))
        if scaled[i] < best[3]:
            best = (int(a + arg[j[i]]), int(a + m[i]), float(raw[i]), float(scaled[i]))
    return best[0], best[1], best[2], best[3], pairs


# --------------------------------------------------------------------------
# planar switched linear system under a two-line switching law
#
#   mode 0 if (l1 . x)(l2 . x) <= 0, mode 1 otherwise
#
# Fixed-step RK4; crossings of the law are located by bisection on the step
# length, so the switch instant lands within ``event_tol`` of the surface
# with the post-crossing state.  Output arrays are trimmed by the caller
# using the returned count.
# --------------------------------------------------------------------------

def _loop_rk4_lin2(a, x0, x1, h):
    k1a = a[0, 0] * x0 + a[0, 1] * x1
    k1b = a[1, 0] * x0 + a[1, 1] * x1
    y0 = x0 + 0.5 * h * k1a
    y1 = x1 + 0.5 * h * k1b
    k2a = a[0, 0] * y0 + a[0, 1] * y1
    k2b = a[1, 0] * y0 + a[1, 1] * y1
    y0 = x0 + 0.5 * h * k2a
    y1 = x1 + 0.5 * h * k2b
    k3a = a[0, 0] * y0 + a[0, 1] * y1
    k3b = a[1, 0] * y0 + a[1, 1] * y1
    y0 = x0 + h * k3a
    y1 = x1 + h * k3b
    k4a = a[0, 0] * y0 + a[0, 1] * y1
    k4b = a[1, 0] * y0 + a[1, 1] * y1
    return (x0 + h * (k1a + 2.0 * k2a + 2.0 * k3a + k4a) / 6.0,
            x1 + h * (k1b + 2.0 * k2b + 2.0 * k3b + k4b) / 6.0)


def _make_switched_planar(rk4):
    def switched_planar(mats, l1, l2, x0, step, horizon, event_tol, conv_tol):
        return _switched_body(rk4, mats, l1, l2, x0, step, horizon, event_tol, conv_tol)
    return switched_planar


def _switched_body(rk4, mats, l1, l2, x0, step, horizon, event_tol, conv_tol):
    n_steps = int(np.ceil(horizon / step))
    cap = 2 * n_steps + 4
    ts = np.empty(cap)
    xs = np.empty((cap, 2))
    modes = np.empty(cap, dtype=np.int64)
    sw = np.empty(cap, dtype=np.int64)
    n_sw = 0

    a0 = x0[0]
    a1 = x0[1]
    q = (l1[0] * a0 + l1[1] * a1) * (l2[0] * a0 + l2[1] * a1)
    mode = 0 if q <= 0.0 else 1
    t = 0.0
    ts[0] = t
    xs[0, 0] = a0
    xs[0, 1] = a1
    modes[0] = mode
    n = 1
    converged = False
    if a0 * a0 + a1 * a1 <= conv_tol * conv_tol:
        return ts, xs, modes, sw, n, n_sw, True

    while t < horizon:
        h = step
        if t + h > horizon:
            h = horizon - t
        if h <= 0.0:
            break
        A = mats[mode]
        b0, b1 = rk4(A, a0, a1, h)
        q = (l1[0] * b0 + l1[1] * b1) * (l2[0] * b0 + l2[1] * b1)
        crossed = (q > 0.0) if mode == 0 else (q <= 0.0)
        if crossed:
            lo = 0.0
            hi = h
            while hi - lo > event_tol:
                mid = 0.5 * (lo + hi)
                c0, c1 = rk4(A, a0, a1, mid)
                qm = (l1[0] * c0 + l1[1] * c1) * (l2[0] * c0 + l2[1] * c1)
                hit = (qm > 0.0) if mode == 0 else (qm <= 0.0)
                if hit:
                    hi = mid
                else:
                    lo = mid
            b0, b1 = rk4(A, a0, a1, hi)
            h = hi
        t = t + h
        a0 = b0
        a1 = b1
        if crossed:
            mode = 1 - mode
            sw[n_sw] = n
            n_sw += 1
        ts[n] = t
        xs[n, 0] = a0
        xs[n, 1] = a1
        modes[n] = mode
        n += 1
        if a0 * a0 + a1 * a1 <= conv_tol * conv_tol:
            converged = True
            break
    return ts, xs, modes, sw, n, n_sw, converged


# --------------------------------------------------------------------------
# binding
# --------------------------------------------------------------------------

_FALLBACK = {
    "prefix_bound": _np_prefix_bound,
    "late_exceedance": _np_late_exceedance,
    "first_corridor": _np_first_corridor,
    "corridor_decrease": _np_corridor_decrease,
    "switched_planar": _make_switched_planar(_loop_rk4_lin2),
}
_COMPILED = {}


def _compile_all():
    if _COMPILED:
        return _COMPILED
    rk4 = _nb.njit(cache=True, nogil=True)(_loop_rk4_lin2)
    body = _nb.njit(cache=True, nogil=True)(_switched_body)

    @_nb.njit(nogil=True)
    def switched_planar(mats, l1, l2, x0, step, horizon, event_tol, conv_tol):
        return body(rk4, mats, l1, l2, x0, step, horizon, event_tol, conv_tol)

    _COMPILED.update({
        "prefix_bound": _jit(_loop_prefix_bound),
        "late_exceedance": _jit(_loop_late_exceedance),
        "first_corridor": _jit(_loop_first_corridor),
        "corridor_decrease": _jit(_loop_corridor_decrease),
        "switched_planar": switched_planar,
    })
    return _COMPILED


def compiled(name):
    """The numba-compiled variant of kernel ``name`` (benchmarks, tests)."""
    if not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    return _compile_all()[name]


def fallback(name):
    """The numpy (or interpreted-loop) variant of kernel ``name``."""
    return _FALLBACK[name]


_active = _compile_all() if USE_NUMBA else _FALLBACK
BACKEND = "numba" if USE_NUMBA else "numpy"

prefix_bound = _active["prefix_bound"]
late_exceedance = _active["late_exceedance"]
first_corridor = _active["first_corridor"]
corridor_decrease = _active["corridor_decrease"]
switched_planar = _active["switched_planar"]
