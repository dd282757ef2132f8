"""Acceptance gate: nine end-to-end checks at their stated tolerances.

Run standalone for a one-line verdict per criterion::

    python tests/test_acceptance.py

or through pytest (``pytest tests/test_acceptance.py -s`` shows the lines).
"""

import math
import sys
import time

import numpy as np
import pytest

from hybridts.calculus import Signal, euclidean_norm, vectorized
from hybridts.domains import (
    embed_switched,
    is_in_H,
    random_hybrid_time_domain,
    random_switching_signal,
    sjr,
    to_gts,
    to_htd,
)
from hybridts.scenarios import (
    ball_closed_form,
    bouncing_ball,
    bouncing_ball_report,
    bouncing_ball_zeno,
    example1_continuous,
    example1_discrete,
    example1_discrete_ensemble,
    example1_ensemble,
    example2_ensemble,
    example2_report,
    example2_V,
    fit_growth,
)
from hybridts.stability import (
    Ensemble,
    Power,
    check_attractivity,
    check_corollary1,
    check_k_weak,
    check_strict_decrease,
    check_ugs,
    exp_growth_gamma,
    falsify_c1,
    identity,
    ugs_bound_from_kweak,
)
from hybridts.timescale import (
    TAIL_CLOSED,
    TAIL_HALF_OPEN,
    GeneralizedTimeScale as G,
    random_members,
    random_timescale,
)


# ---- 1 ------------------------------------------------------------------------------------

def decomposition_identity():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        I = random_timescale(rng, max_segments=20)
        t = random_members(I, rng, 50)
        worst = max(worst, float(np.max(np.abs(t - (I.continuous_part(t) + I.discrete_part(t))))))
    return worst <= 1e-9, f"max |t - (T_c + N_d)| = {worst:.2e} over 100 scales x 50 points"


# ---- 2 ------------------------------------------------------------------------------------

def domain_bijection():
    rng = np.random.default_rng(202)
    dev_htd = dev_gts = dev_id = 0.0
    for _ in range(100):
        htd = random_hybrid_time_domain(rng)
        I = to_gts(htd)
        dev_htd = max(dev_htd, htd.max_deviation(to_htd(I)))
        for p in htd.pieces:
            hi = p.lo + 3.0 if math.isinf(p.hi) else p.hi
            ts = np.append(rng.uniform(p.lo, hi, 4), p.lo)
            if htd.tail == TAIL_HALF_OPEN and p is htd.pieces[-1]:
                ts = ts[ts < p.hi]
            tc = np.atleast_1d(I.continuous_part(ts + p.j))
            nd = np.atleast_1d(I.discrete_part(ts + p.j))
            dev_id = max(dev_id, float(np.max(np.abs(tc - ts), initial=0.0)),
                         float(np.max(np.abs(nd - p.j), initial=0.0)))
    for _ in range(100):
        # an independent H-scale: unit gaps between random segments
        I = to_gts(random_hybrid_time_domain(rng))
        if not is_in_H(I):
            return False, "generated scale is not in H"
        J = to_gts(to_htd(I))
        if len(J.segments) != len(I.segments) or J.tail != I.tail:
            return False, "scale changed shape on the round trip"
        a = np.array([[s.lo, s.hi] for s in I.segments])
        b = np.array([[s.lo, s.hi] for s in J.segments])
        fin = np.isfinite(a)
        dev_gts = max(dev_gts, float(np.max(np.abs(a[fin] - b[fin]))))
    ok = dev_htd <= 1e-12 and dev_gts <= 1e-12 and dev_id <= 1e-9
    return ok, (f"htd->gts->htd {dev_htd:.2e}, gts->htd->gts {dev_gts:.2e}, "
                f"T_c/N_d identities {dev_id:.2e}")


# ---- 3 ------------------------------------------------------------------------------------

def example1_continuous_decay():
    _, rep = example1_continuous([1.0, 0.0], horizon=5.0, step=1e-3)
    err = rep["decay_rate_error"]
    return err <= 1e-4, f"max |d(t) - e^-t| = {err:.2e}"


# ---- 4 ------------------------------------------------------------------------------------

def example1_discrete_growth():
    rng = np.random.default_rng(404)
    worst = 0.0
    for r in (0.5, 1.0, 1.5, 3.0):
        for _ in range(20):
            # kept small so that 10 steps at r = 3 stay far from overflow
            _, rep = example1_discrete(rng.uniform(-0.05, 0.05, 2), r)
            worst = max(worst, rep["identity_residual_rel"])
    _, rep = example1_discrete([0.1, 0.0], 3.0, n_steps=10)
    V = np.array(rep["V"])
    four = float(np.max(np.abs(V - V[0] * 4.0 ** np.arange(V.size)) / (V[0] * 4.0 ** np.arange(V.size))))
    unstable = check_ugs(example1_discrete_ensemble(np.random.default_rng(4), 3.0, radius=0.05), identity())
    stable = check_ugs(example1_ensemble(np.random.default_rng(4)), identity())
    ok = worst <= 1e-9 and four <= 1e-12 and not unstable.passed and stable.passed
    return ok, (f"per-step identity {worst:.2e}, 4^n growth {four:.1e}, "
                f"UGS r=3 {unstable.verdict}, continuous {stable.verdict}")


# ---- 5 ------------------------------------------------------------------------------------

def example2_properties():
    sigs, logs = example2_ensemble(np.random.default_rng(505), n=20, horizon=60.0, step=1e-4)
    E = Ensemble(sigs, euclidean_norm)
    mismatch = sandwich = 0.0
    w_lo, w_hi = math.inf, -math.inf
    worst_ratio = 0.0
    fits = []
    for sig, lg in zip(sigs, logs):
        rep = example2_report(sig, lg)
        mismatch = max(mismatch, rep["mode0_V_mismatch"])
        d = euclidean_norm(sig.x)
        V = example2_V(sig.x)
        sandwich = max(sandwich, float(np.max(d * d / 3.0 - V)), float(np.max(V - 5.0 * d * d)))
        w_lo, w_hi = min(w_lo, rep["angular_rate_min"]), max(w_hi, rep["angular_rate_max"])
        worst_ratio = max(worst_ratio, rep["final_distance_ratio"])
        fits.append(fit_growth(sig, lg))
    alpha, beta = Power(1.0 / 3.0, 2.0), Power(5.0, 2.0)
    gamma = exp_growth_gamma(1.0, max(f["M"] for f in fits), max(f["tau_max"] for f in fits))
    fitted = check_k_weak(E, example2_V, alpha, beta, gamma)
    plain = check_k_weak(E, example2_V, alpha, beta, identity())
    ok = (mismatch <= 1e-6 and sandwich <= 1e-9 and w_lo >= -10 - 1e-3 and w_hi <= -0.5 + 1e-3
          and worst_ratio <= 1e-3 and fitted.passed and not plain.passed)
    return ok, (f"(a) V mismatch {mismatch:.1e} (b) sandwich slack {sandwich:.1e} "
                f"(c) rates [{w_lo:.3f}, {w_hi:.3f}] (d) final ratio {worst_ratio:.1e} "
                f"(e) fitted gain {fitted.verdict}, identity {plain.verdict}")


# ---- 6 ------------------------------------------------------------------------------------

def bouncing_ball_impacts():
    _, table = bouncing_ball(0.0, 1.0, 2.0, 0.5)
    rep = bouncing_ball_report(table, 0.0, 1.0, 2.0, 0.5, n_check=10)
    event_tol = 1e-10
    ok = (len(table.rows) >= 10 and rep["impact_time_error"] <= event_tol + 1e-6
          and rep["velocity_ratio_error"] <= 1e-6 and abs(rep["t_inf_estimate"] - 2.0) <= 1e-3)
    return ok, (f"impact times {rep['impact_time_error']:.1e}, ratio {rep['velocity_ratio_error']:.1e}, "
                f"t_inf {rep['t_inf_estimate']:.9f}")


# ---- 7 ------------------------------------------------------------------------------------

def zeno_passage():
    sig, rt = bouncing_ball_zeno(0.0, 1.0, 2.0, 0.5)
    gaps = sig.dom.gaps()
    N = sig.meta["resolved_impacts"]
    geometric = all(gaps[n - 1] == 0.5 ** n for n in range(1, N))
    budget = math.fsum(gaps)
    t_inf = sig.meta["t_inf"]
    closure_ok = sig.meta["zeno_closure"] == t_inf + 1.0 and (t_inf + 1.0) in sig.dom
    rest = bool(np.all(sig.x[sig.t >= t_inf + 1.0] == 0.0))
    impacts = ball_closed_form(0.0, 1.0, 2.0, 0.5, N)["t"]
    proj = True
    for s, vals in rt.entries:
        at_impact = bool(np.any(np.abs(impacts - s) <= 1e-12))
        if s >= t_inf:
            proj &= vals.shape[0] == 1 and bool(np.all(vals == 0.0))
        else:
            proj &= vals.shape[0] == (2 if at_impact else 1)
    ok = geometric and budget <= 1.0 + 1e-12 and closure_ok and rest and proj
    return ok, (f"{N} geometric gaps, budget {budget:.15f}, closure at {sig.meta['zeno_closure']}, "
                f"rest state exact {rest}, projection {'ok' if proj else 'wrong'}")


# ---- 8 ------------------------------------------------------------------------------------

def switched_embedding():
    rng = np.random.default_rng(808)
    a, n = 10.0, 1001
    g = np.linspace(0.0, a, n)
    x = Signal(G.from_pairs([[0.0, a]], TAIL_CLOSED), [g], [np.column_stack([np.cos(g), np.sin(g)])])
    worst_nd = 0.0
    worst_rec = 0.0
    for _ in range(100):
        lam = random_switching_signal(rng, horizon=a, max_switches=50)
        e = embed_switched(x, lam, 0.5)
        worst_nd = max(worst_nd, float(e.discrete_times().max()))
        tc = e.continuous_times()
        src = np.union1d(x.t, lam.breakpoints)
        idx = np.clip(np.searchsorted(src, tc), 1, src.size - 1)
        near = np.minimum(np.abs(src[idx] - tc), np.abs(src[idx - 1] - tc))
        covered = np.all(np.min(np.abs(src[:, None] - tc[None, :]), axis=1) <= 1e-9)
        worst_rec = max(worst_rec, float(near.max()) if covered else math.inf)
    fixture = [sjr([1.0, 2.0], 0.5, s) for s in (0.5, 1.0, 2.0, 3.0)]
    hand = [(0.5,), (1.0, 1.5), (2.5, 2.75), (3.75,)]
    ok = worst_nd <= 1.0 + 1e-12 and worst_rec <= 1e-9 and fixture == hand
    return ok, (f"max N_d {worst_nd:.15f}, source-time recovery {worst_rec:.1e}, "
                f"two-switch fixture {'matches' if fixture == hand else fixture}")


# ---- 9 ------------------------------------------------------------------------------------

@vectorized
def _absval(X):
    return np.abs(np.asarray(X, dtype=float)[:, 0])


@vectorized
def _square(X):
    return np.asarray(X, dtype=float)[:, 0] ** 2


def _scalar(t, v, pairs=None):
    return Signal.from_flat(G.from_pairs(pairs or [[t[0], t[-1]]]), t, v)


def checker_fixtures():
    t = np.linspace(0.0, 5.0, 501)
    decay = Ensemble([_scalar(t, np.exp(-t))], _absval)
    grow = Ensemble([_scalar(t, 0.1 * np.exp(t))], _absval)
    const = Ensemble([_scalar(t, np.ones_like(t))], _absval)
    gappy = Ensemble([_scalar(np.array([0.0, 1.0, 3.0, 4.0]), np.array([1.0, 0.5, 0.3, 0.2]),
                              [[0, 1], [3, 4]])], _absval)
    cases = {
        "ugs": (lambda E: check_ugs(E, identity()), decay, grow),
        "attractivity": (lambda E: check_attractivity(E, 0.1, math.log(100) + 0.1), decay, const),
        "k_weak": (lambda E: check_k_weak(E, _square, Power(1, 2), Power(1, 2), identity()), decay, grow),
        "c1": (lambda E: falsify_c1(E, 0.5, 2.0), decay, const),
        "corollary1": (lambda E: check_corollary1(E, _square, 1.0, 0.5, 1.0, 0.1), decay, const),
        "corollary1-gap": (lambda E: check_corollary1(E, _square, 1.0, 0.5, 1.0, 0.01), decay, gappy),
        "strict": (lambda E: check_strict_decrease(E.signals[0], _square, Power(1, 2), _absval), decay, grow),
    }
    bad = []
    for name, (check, pos, neg) in cases.items():
        good = check(pos)
        fail = check(neg)
        again = check(neg)
        if not good.passed or fail.passed or fail.witness is None or fail.witness != again.witness:
            bad.append(name)
            continue
        if not _witness_reproduces(name, neg, fail.witness):
            bad.append(name + " (witness)")
    bound = ugs_bound_from_kweak(Power(1.0 / 3.0, 2.0), Power(5.0, 2.0), identity())
    s = np.linspace(0.0, 100.0, 10001)
    comp = float(np.max(np.abs(bound(s) - math.sqrt(15.0) * s) / np.maximum(1.0, s)))
    ok = not bad and comp <= 1e-12
    return ok, (f"{len(cases) - len(bad)}/{len(cases)} checks separate their fixtures"
                + (f" (bad: {', '.join(bad)})" if bad else "") + f", sqrt(15) envelope error {comp:.1e}")


def _witness_reproduces(name, E, w):
    """Re-evaluate the stored indices and confirm the violation bit-exactly."""
    i = w.get("signal", 0)
    sig, d = E.signals[i], E.d(i)
    if "t_index" in w and float(sig.t[w["t_index"]]) != w["t"]:
        return False
    if name == "ugs":
        return d[w["t_index"]] == w["d_t"] and float(identity()(d[w["s_index"]])) == w["bound"] < w["d_t"]
    if name == "attractivity":
        return d[w["s_index"]] <= 10.0 and d[w["t_index"]] >= 0.1 and w["t"] - w["s"] >= math.log(100) + 0.1
    if name == "k_weak":
        v = E.values(i, _square)
        return v[w["t_index"]] == w["V_t"] and v[w["t_index"]] > w["bound"]
    if name == "c1":
        seg = d[w["s_index"]:w["t_index"] + 1]
        return bool(np.all((seg >= 0.5) & (seg <= 2.0))) and w["t"] - w["s"] >= 2.0
    if name == "corollary1":
        v = E.values(i, _square)
        return v[w["t_index"]] > v[w["s_index"]] - 0.1
    if name == "corollary1-gap":
        return sig.dom.sigma(w["t"]) - w["t"] == w["gap"] > 1.0
    if name == "strict":
        return w["V_delta"] > w["bound"]
    return False


CRITERIA = [
    (1, "decomposition identity", decomposition_identity),
    (2, "hybrid time domain bijection", domain_bijection),
    (3, "example 1 continuous decay", example1_continuous_decay),
    (4, "example 1 discrete growth", example1_discrete_growth),
    (5, "example 2 switched system", example2_properties),
    (6, "bouncing ball impacts", bouncing_ball_impacts),
    (7, "Zeno passage", zeno_passage),
    (8, "switched embedding", switched_embedding),
    (9, "checker soundness", checker_fixtures),
]


def run_one(num, title, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    line = f"{'PASS' if ok else 'FAIL'} criterion {num} ({title}, {time.perf_counter() - t0:.1f}s): {detail}"
    print(line)
    return ok


@pytest.mark.parametrize("num, title, fn", CRITERIA, ids=[f"{n}-{t.replace(' ', '-')}" for n, t, _ in CRITERIA])
def test_criterion(num, title, fn):
    assert run_one(num, title, fn)


def main():
    results = [run_one(*c) for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
