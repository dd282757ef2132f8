"""Compiled and fallback kernels agree with each other and with brute force."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridts import _kernels as K
from hybridts.scenarios import EX2_A0, EX2_A1, EX2_L1, EX2_L2

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
ATOL = RTOL = 1e-9

# small integer-valued data produce plenty of ties, which is where tie-breaking diverges
small = st.lists(st.integers(0, 6), min_size=0, max_size=40)


def arrays(draw_vals, scale=0.5):
    v = np.asarray(draw_vals, dtype=float) * scale
    return np.ascontiguousarray(v)


def times(n, seed):
    rng = np.random.default_rng(seed)
    return np.ascontiguousarray(np.cumsum(rng.choice([0.25, 0.5, 1.0], n)))


def variants(name):
    out = [K.fallback(name), getattr(K, "_loop_" + name)]
    if K.HAVE_NUMBA:
        out.append(K.compiled(name))
    return out


def same(a, b):
    return all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))


# ---- prefix bound -----------------------------------------------------------------------

def brute_prefix(b, v):
    best = np.inf
    for k in range(v.size):
        for j in range(k + 1):
            best = min(best, b[j] - v[k] + ATOL + RTOL * abs(b[j]))
    return best


@settings(max_examples=200, deadline=None)
@given(small, st.integers(0, 2**16))
def test_prefix_bound(vals, seed):
    v = arrays(vals)
    b = np.ascontiguousarray(np.random.default_rng(seed).permutation(v) if v.size else v)
    results = [f(b, v, ATOL, RTOL) for f in variants("prefix_bound")]
    for r in results[1:]:
        assert same(results[0], r)
    j, k, raw, scaled = results[0]
    if v.size:
        assert scaled == pytest.approx(brute_prefix(b, v), abs=1e-15)
        assert j <= k and raw == b[j] - v[k]


# ---- late exceedance --------------------------------------------------------------------

def brute_late(t, d, cap, T):
    starts = [j for j in range(d.size) if d[j] <= cap]
    if not starts:
        return None
    s = starts[0]
    late = [k for k in range(s, d.size) if t[k] >= t[s] + T]
    if not late:
        return None
    return max(d[k] for k in late)


@settings(max_examples=200, deadline=None)
@given(small, st.integers(0, 2**16), st.sampled_from([0.5, 1.0, 2.5]), st.sampled_from([0.0, 1.0, 2.0]))
def test_late_exceedance(vals, seed, T, cap):
    d = arrays(vals)
    t = times(d.size, seed)
    results = [f(t, d, cap, T) for f in variants("late_exceedance")]
    for r in results[1:]:
        assert same(results[0], r)
    s, k, dk = results[0]
    expected = brute_late(t, d, cap, T)
    if expected is None:
        assert s == -1
    else:
        assert dk == expected and t[k] >= t[s] + T


# ---- first corridor ---------------------------------------------------------------------

def brute_corridor(t, d, lo, hi, T):
    inside = (d >= lo) & (d <= hi)
    for k in range(d.size):
        for s in range(k + 1):
            if t[k] - t[s] >= T and inside[s:k + 1].all():
                # earliest by end index, then by start
                return s, k
    return -1, -1


@settings(max_examples=200, deadline=None)
@given(small, st.integers(0, 2**16), st.sampled_from([0.5, 1.0, 3.0]))
def test_first_corridor(vals, seed, T):
    d = arrays(vals)
    t = times(d.size, seed)
    results = [f(t, d, 1.0, 2.0, T) for f in variants("first_corridor")]
    for r in results[1:]:
        assert same(results[0], r)
    s, k, _ = results[0]
    bs, bk = brute_corridor(t, d, 1.0, 2.0, T)
    assert (s >= 0) == (bs >= 0)
    if s >= 0:
        # same run; the reported pair spans at least T and lies inside the band
        assert t[k] - t[s] >= T and np.all((d[s:k + 1] >= 1.0) & (d[s:k + 1] <= 2.0))


# ---- corridor decrease ------------------------------------------------------------------

def brute_decrease(t, d, V, lo, hi, T, delta):
    inside = (d >= lo) & (d <= hi)
    best = np.inf
    for k in range(d.size):
        for s in range(k):
            if t[k] - t[s] >= T and inside[s:k + 1].all():
                best = min(best, V[s] - delta - V[k] + ATOL + RTOL * abs(V[s]))
    return best


@settings(max_examples=200, deadline=None)
@given(small, st.integers(0, 2**16), st.sampled_from([0.5, 1.0]))
def test_corridor_decrease(vals, seed, T):
    d = arrays(vals)
    t = times(d.size, seed)
    V = np.ascontiguousarray(np.random.default_rng(seed).integers(0, 5, d.size).astype(float))
    args = (t, d, V, 0.5, 2.0, T, 0.25, ATOL, RTOL)
    results = [f(*args) for f in variants("corridor_decrease")]
    for r in results[1:]:
        assert same(results[0], r)
    s, k, raw, scaled, pairs = results[0]
    expected = brute_decrease(t, d, V, 0.5, 2.0, T, 0.25)
    if np.isinf(expected):
        assert s == -1
    else:
        assert scaled == pytest.approx(expected, abs=1e-15)
        assert raw == V[s] - 0.25 - V[k]


# ---- switched planar integrator -----------------------------------------------------------

@needs_numba
@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.0, 6.283))
def test_switched_planar_variants_agree(r, a):
    mats = np.ascontiguousarray(np.stack([EX2_A0, EX2_A1]))
    x0 = np.array([r * np.cos(a), r * np.sin(a)])
    args = (mats, EX2_L1, EX2_L2, x0, 1e-3, 3.0, 1e-12, 1e-6 * r)
    fa, fb = K.compiled("switched_planar")(*args), K.fallback("switched_planar")(*args)
    n, m = fa[4], fa[5]
    assert (n, m, fa[6]) == (fb[4], fb[5], fb[6])
    assert np.array_equal(fa[0][:n], fb[0][:n]) and np.array_equal(fa[1][:n], fb[1][:n])
    assert np.array_equal(fa[2][:n], fb[2][:n]) and np.array_equal(fa[3][:m], fb[3][:m])


def test_switched_planar_rk4_on_rotation():
    # a single mode rotating at unit rate: compare with the exact solution
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    mats = np.ascontiguousarray(np.stack([rot, rot]))
    x0 = np.array([1.0, 0.0])
    ts, xs, modes, sw, n, n_sw, _ = K.fallback("switched_planar")(
        mats, EX2_L1, EX2_L2, x0, 1e-2, 1.0, 1e-12, 0.0)
    ts, xs = ts[:n], xs[:n]
    exact = np.column_stack([np.cos(ts), np.sin(ts)])
    assert np.max(np.abs(xs - exact)) < 1e-9


# ---- backend selection -----------------------------------------------------------------------

@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("", "numba" if K.HAVE_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, HYBRIDTS_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from hybridts import _kernels as K; print(K.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
