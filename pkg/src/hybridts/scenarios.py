"""Worked examples: a planar system on the half-line and on lattices, a
switched linear system with a state-dependent law, and the bouncing ball
with and without passage through its Zeno time.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .calculus import RealTimeTrace, Signal, euclidean_norm, vectorized
from .hybrid import BOUNDARY_TOL, HybridSystem, SolverConfig, solve
from .stability import Ensemble
from .timescale import TOL_T, GeneralizedTimeScale, Lattice, Segment

log = logging.getLogger(__name__)


# ---- planar system  x1' = -x1 + x2^2,  x2' = -x2 - x1 x2 --------------------------------

def planar_field(x):
    return np.array([-x[0] + x[1] * x[1], -x[1] - x[0] * x[1]])


@vectorized
def squared_norm(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sum(X * X, axis=-1)


def example1_continuous(x0, horizon: float = 5.0, step: float = 1e-3):
    """RK4 trace on ``[0, horizon]``; report compares ``|x(t)|`` with ``e^-t |x0|``.

    Because ``d/dt |x|^2 = -2 |x|^2`` along every solution, the distance
    decays exactly like ``e^-t`` whatever the initial state.
    """
    if not (horizon > 0 and step > 0):
        raise ValueError("horizon and step must be positive")
    x0 = np.asarray(x0, dtype=float)
    sys_ = HybridSystem(in_C=lambda x: True, in_D=lambda x: False, flow=planar_field, jump=lambda x: x)
    sig = solve(sys_, x0, SolverConfig(step=step, horizon=horizon))
    d = euclidean_norm(sig.x)
    ref = np.exp(-sig.t) * d[0]
    err = np.abs(d - ref)
    report = {
        "scenario": "example1-continuous",
        "x0": x0.tolist(),
        "step": step,
        "horizon": horizon,
        "decay_rate_error": float(err.max()),
        "final_distance": float(d[-1]),
    }
    i1 = int(np.argmin(np.abs(sig.t - 1.0)))
    if abs(sig.t[i1] - 1.0) < 1e-9 and d[0] > 0:
        report["ratio_at_1"] = float(d[i1] / d[0])
    return sig, report


def example1_discrete(x0, r: float, n_steps: int = 10):
    """Lattice trace ``x(t + r) = x(t) + r f(x(t))`` on ``{0, r, ..., n r}``.

    The report holds the per-step residual of ``V(t+r) = V(t)((r-1)^2 + r^2 x2(t)^2)``
    with ``V = |x|^2``, absolute and relative to ``max(1, |V(t+r)|)``.
    """
    if not r > 0:
        raise ValueError("lattice spacing must be positive")
    if n_steps < 1:
        raise ValueError("need at least one step")
    dom = Lattice(0.0, r).restrict(0.0, n_steps * r)
    n = len(dom.segments)
    xs = np.empty((n, 2))
    xs[0] = np.asarray(x0, dtype=float)
    for k in range(n - 1):
        xs[k + 1] = xs[k] + r * planar_field(xs[k])
    grids = [[s.lo] for s in dom.segments]
    sig = Signal(dom, grids, [row[None, :] for row in xs])
    V = squared_norm(xs)
    pred = V[:-1] * ((r - 1.0) ** 2 + r * r * xs[:-1, 1] ** 2)
    res = np.abs(V[1:] - pred)
    rel = res / np.maximum(1.0, np.abs(V[1:]))
    report = {
        "scenario": "example1-discrete",
        "x0": xs[0].tolist(),
        "r": r,
        "n_steps": n - 1,
        "identity_residual_abs": float(res.max()),
        "identity_residual_rel": float(rel.max()),
        "growth_factors": (V[1:] / np.where(V[:-1] == 0, np.nan, V[:-1])).tolist(),
        "V": V.tolist(),
    }
    return sig, report


# ---- switched linear system ---------------------------------------------------------

EX2_A0 = np.array([[0.0, 10.0], [0.0, 0.0]])
EX2_A1 = np.array([[1.5, 2.0], [-2.0, -0.5]])
EX2_L1 = np.array([1.0, 4.0])    # x1 + 4 x2
EX2_L2 = np.array([1.0, -2.0])   # x1 - 2 x2


@vectorized
def example2_V(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return 2.0 * (X[:, 0] + X[:, 1]) ** 2 + X[:, 1] ** 2


def example2_mode(x) -> int:
    """0 where ``(x1 + 4 x2)(x1 - 2 x2) <= 0`` (boundary included), else 1."""
    q = (EX2_L1 @ x) * (EX2_L2 @ x)
    return 0 if q <= 0.0 else 1


@dataclass
class SwitchEventLog:
    rows: list = field(default_factory=list)   # (time, from_mode, to_mode, state, V)
    tau_min_observed: Optional[float] = None
    tau_max_observed: Optional[float] = None
    angular_rates: np.ndarray = field(default_factory=lambda: np.empty(0))
    modes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    switch_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    converged: bool = False
    trivial: bool = False

    def dwells(self, mode: Optional[int] = None, full_only: bool = True) -> list:
        """``(start, stop)`` switch times of every dwell (in ``mode`` if given)."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if mode is None or a[2] == mode:
                out.append((a[0], b[0]))
        return out

    def to_dict(self) -> dict:
        return {
            "switches": [
                {"time": t, "from": f, "to": to, "state": list(map(float, x)), "V": v}
                for t, f, to, x, v in self.rows
            ],
            "tau_min_observed": self.tau_min_observed,
            "tau_max_observed": self.tau_max_observed,
            "angular_rate_min": float(self.angular_rates.min()) if self.angular_rates.size else None,
            "angular_rate_max": float(self.angular_rates.max()) if self.angular_rates.size else None,
            "converged": self.converged,
        }


def example2_switched(x0, horizon: float = 60.0, step: float = 1e-4, event_tol: float = 1e-12,
                      conv_tol: Optional[float] = None):
    """Simulate the two-mode system under the sector switching law.

    Integration stops early, flagged ``converged``, once ``|x| <= conv_tol``
    (default ``1e-6 |x0|``).  At ``x0 = 0`` the law is undefined and the
    trivial solution is returned without dwell analysis.
    """
    x0 = np.asarray(x0, dtype=float)
    if not (horizon > 0 and step > 0):
        raise ValueError("horizon and step must be positive")
    nrm = float(np.hypot(*x0))
    if nrm == 0.0:
        dom = GeneralizedTimeScale.interval(0.0, horizon)
        sig = Signal(dom, [[0.0, horizon]], [np.zeros((2, 2))], {"reason": "trivial"})
        return sig, SwitchEventLog(trivial=True, converged=True)
    if conv_tol is None:
        conv_tol = 1e-6 * nrm
    mats = np.ascontiguousarray(np.stack([EX2_A0, EX2_A1]))
    ts, xs, modes, sw, n, n_sw, converged = _kernels.switched_planar(
        mats, EX2_L1, EX2_L2, x0, step, horizon, event_tol, conv_tol)
    ts, xs, modes, sw = ts[:n].copy(), xs[:n].copy(), modes[:n].copy(), sw[:n_sw].copy()
    dom = GeneralizedTimeScale.interval(0.0, float(ts[-1]))
    sig = Signal(dom, [ts], [xs], {"reason": "converged" if converged else "horizon"})
    V = example2_V(xs)
    rows = [(float(ts[i]), int(modes[i - 1]), int(modes[i]), xs[i].copy(), float(V[i])) for i in sw]
    dwell = np.diff([r[0] for r in rows])
    # angular rate of x along the active field: (x1 x2' - x2 x1') / |x|^2
    A = np.where(modes[:, None, None] == 0, EX2_A0, EX2_A1)
    dx = np.einsum("nij,nj->ni", A, xs)
    r2 = np.sum(xs * xs, axis=1)
    omega = (xs[:, 0] * dx[:, 1] - xs[:, 1] * dx[:, 0]) / np.where(r2 > 0, r2, np.nan)
    log_ = SwitchEventLog(
        rows=rows,
        tau_min_observed=float(dwell.min()) if dwell.size else None,
        tau_max_observed=float(dwell.max()) if dwell.size else None,
        angular_rates=omega[np.isfinite(omega)],
        modes=modes,
        switch_index=sw,
        converged=bool(converged),
    )
    return sig, log_


def example2_report(sig: Signal, log_: SwitchEventLog) -> dict:
    """Closed-form checks: equal V across mode-0 dwells, angular-rate range, decay."""
    out = {"scenario": "example2", "converged": log_.converged, "switches": len(log_.rows)}
    if log_.trivial:
        out["trivial"] = True
        return out
    gaps = [abs(b[4] - a[4]) for a, b in zip(log_.rows, log_.rows[1:]) if a[2] == 0]
    out["mode0_V_mismatch"] = max(gaps) if gaps else 0.0
    out["tau_min_observed"] = log_.tau_min_observed
    out["tau_max_observed"] = log_.tau_max_observed
    out["angular_rate_min"] = float(log_.angular_rates.min())
    out["angular_rate_max"] = float(log_.angular_rates.max())
    d = euclidean_norm(sig.x)
    out["final_distance_ratio"] = float(d[-1] / d[0])
    fit = fit_growth(sig, log_)
    out.update(fit)
    return out


def fit_growth(sig: Signal, log_: SwitchEventLog) -> dict:
    """Empirical constants of ``V(t) <= rho e^{M |t - s|} V(s)``.

    ``rho = 1`` and ``M`` is the largest growth rate of ``ln V`` between
    consecutive samples (positive part); ``tau_max`` is the longest observed
    dwell, or the whole trace when no full dwell exists.
    """
    V = example2_V(sig.x)
    ok = V > 0
    lv = np.log(V[ok])
    rates = np.diff(lv) / np.diff(sig.t[ok])
    M = float(max(rates.max(), 0.0)) if rates.size else 0.0
    tau_max = log_.tau_max_observed if log_.tau_max_observed is not None else float(sig.t[-1])
    return {"rho": 1.0, "M": M, "tau_max": tau_max}


def example2_ensemble(rng: np.random.Generator, n: int = 20, horizon: float = 60.0,
                      step: float = 1e-4, r_lo: float = 0.1, r_hi: float = 10.0):
    """``n`` traces from random initial states with ``r_lo <= |x0| <= r_hi``."""
    sigs, logs = [], []
    for _ in range(n):
        rad = rng.uniform(r_lo, r_hi)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        s, lg = example2_switched([rad * math.cos(ang), rad * math.sin(ang)], horizon, step)
        sigs.append(s)
        logs.append(lg)
    return sigs, logs


# ---- bouncing ball ----------------------------------------------------------------

def ball_closed_form(h0: float, v0: float, g: float, theta: float, n: int) -> dict:
    """Impact times, velocities and the Zeno time for ``n`` impacts."""
    v1 = math.sqrt(v0 * v0 + 2.0 * g * h0)
    t = np.empty(n)
    vm = np.empty(n)
    vp = np.empty(n)
    t[0] = (v0 + v1) / g
    vm[0] = -v1
    for i in range(n):
        vp[i] = -theta * vm[i]
        if i + 1 < n:
            t[i + 1] = t[i] + 2.0 * vp[i] / g
            vm[i + 1] = -vp[i]
    t_inf = t[0] + (2.0 * theta * v1 / (g * (1.0 - theta)) if theta < 1 else math.inf)
    return {"t": t, "v_minus": vm, "v_plus": vp, "t_inf": t_inf}


def bouncing_ball_system(g: float = 9.81, theta: float = 0.5, tol: float = BOUNDARY_TOL,
                         zeno_passage: bool = False) -> HybridSystem:
    """Height/velocity model; with ``zeno_passage`` the flow is switched off at the origin."""

    def flow(x):
        return np.array([x[1], -g])

    def halted_flow(x):
        return np.zeros(2) if (abs(x[0]) <= tol and abs(x[1]) <= tol) else flow(x)

    return HybridSystem(
        in_C=lambda x: x[0] >= -tol,
        in_D=lambda x: abs(x[0]) <= tol and x[1] <= tol,
        flow=halted_flow if zeno_passage else flow,
        jump=lambda x: np.array([0.0, -theta * x[1]]),
        event=lambda x: x[0],
        zeno_limit=(lambda x: np.zeros(2)) if zeno_passage else None,
        post_zeno_flow=(lambda x: np.zeros(2)) if zeno_passage else None,
    )


@dataclass
class ImpactTable:
    rows: list = field(default_factory=list)  # (n, t_n, v_minus, v_plus, gap)

    def column(self, name: str) -> np.ndarray:
        idx = {"n": 0, "t_n": 1, "v_minus": 2, "v_plus": 3, "gap": 4}[name]
        return np.array([r[idx] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "t_n", "v_minus", "v_plus", "gap"])
        for n, t, vm, vp, gap in self.rows:
            w.writerow([n, repr(t), repr(vm), repr(vp), "" if gap is None else repr(gap)])
        return buf.getvalue()


def bouncing_ball(h0: float = 0.0, v0: float = 1.0, g: float = 2.0, theta: float = 0.5,
                  cfg: Optional[SolverConfig] = None):
    """Solve the ball model and tabulate its impacts (in flow time)."""
    if not (g > 0 and 0 <= theta < 1 and h0 >= 0):
        raise ValueError("need g > 0, 0 <= theta < 1 and h0 >= 0")
    if cfg is None:
        t_inf = ball_closed_form(h0, v0, g, theta, 1)["t_inf"]
        cfg = SolverConfig(horizon=t_inf + 1.0)
    sys_ = bouncing_ball_system(g, theta)
    sig = solve(sys_, [h0, v0], cfg)
    jt = np.asarray(sig.meta["jump_times"], dtype=float)
    rows = []
    if jt.size:
        tc = np.atleast_1d(sig.dom.continuous_part(jt))
        for n, (t, c) in enumerate(zip(jt, tc), start=1):
            vm = float(sig.sample(t)[1])
            vp = float(sig.sample(sig.dom.sigma(t))[1])
            gap = float(tc[n] - c) if n < tc.size else None
            rows.append((n, float(c), vm, vp, gap))
    return sig, ImpactTable(rows)


def bouncing_ball_report(table: ImpactTable, h0: float, v0: float, g: float, theta: float,
                         n_check: int = 10) -> dict:
    rows = table.rows[:n_check]
    out = {"scenario": "bouncing-ball", "impacts": len(table.rows)}
    if not rows:
        return out
    cf = ball_closed_form(h0, v0, g, theta, len(rows))
    t = table.column("t_n")[:len(rows)]
    vm = table.column("v_minus")[:len(rows)]
    vp = table.column("v_plus")[:len(rows)]
    out["impact_time_error"] = float(np.max(np.abs(t - cf["t"])))
    out["v_minus_error"] = float(np.max(np.abs(vm - cf["v_minus"])))
    ratios = vp[1:] / vp[:-1] if theta > 0 else np.empty(0)
    if ratios.size:
        out["velocity_ratio_error"] = float(np.max(np.abs(ratios - theta)))
    gaps = np.diff(t)
    if gaps.size > 1 and theta > 0:
        out["gap_ratio_error"] = float(np.max(np.abs(gaps[1:] / gaps[:-1] - theta)))
    # Zeno time from the measured first impact and the measured ratio
    th = float(np.mean(ratios)) if ratios.size else theta
    out["t1"] = float(t[0])
    out["v1_minus"] = float(vm[0])
    out["t_inf_estimate"] = float(t[0] + 2.0 * vp[0] / (g * (1.0 - th)))
    out["t_inf_closed_form"] = float(cf["t_inf"])
    return out


def bouncing_ball_zeno(h0: float = 0.0, v0: float = 1.0, g: float = 2.0, theta: float = 0.5,
                       zeno_tol: float = 1e-6, step: float = 1e-3, post_horizon: float = 1.0,
                       tol_t: float = TOL_T):
    """Solution through the Zeno time on a scale with gaps ``(1/2)^n``.

    Impact ``n`` at flow time ``t_n`` maps to the pair ``t_n + P_{n-1}``,
    ``t_n + P_n`` with ``P_n = 1 - (1/2)^n``.  Impacts are generated until
    ``t_inf - t_N <= zeno_tol`` (or the gap would drop below ``10 tol_t``);
    the arc after impact ``N`` is followed by the chord to the origin at
    ``t_inf``, and the remaining ``(1/2)^N`` of gap budget leads to the
    closure point ``t_inf + 1``, after which the state is exactly ``(0, 0)``.
    """
    if not (g > 0 and 0 <= theta < 1 and h0 >= 0):
        raise ValueError("need g > 0, 0 <= theta < 1 and h0 >= 0")
    n_cap = int(math.floor(math.log2(1.0 / (10.0 * tol_t))))
    probe = ball_closed_form(h0, v0, g, theta, n_cap + 1)
    t_imp, vm, vp, t_inf = probe["t"], probe["v_minus"], probe["v_plus"], probe["t_inf"]
    degenerate = vm[0] == 0.0
    N = n_cap
    if not degenerate:
        for n in range(1, n_cap + 1):
            if t_inf - t_imp[n - 1] <= zeno_tol:
                N = n
                break
    P = [1.0 - 0.5 ** n for n in range(N + 1)]  # exact in binary
    segs, grids, vals = [], [], []

    def arc(t_a, t_b, v_start):
        """Free flight from the ground at t_a with upward speed v_start."""
        k = max(1, int(math.ceil((t_b - t_a) / step)))
        tau = np.linspace(t_a, t_b, k + 1) if t_b > t_a else np.array([t_a])
        s = tau - t_a
        h = v_start * s - 0.5 * g * s * s
        v = v_start - g * s
        if t_b > t_a:
            h[-1] = 0.0
        return tau, np.column_stack([h, v])

    # before the first impact
    k0 = max(1, int(math.ceil(t_imp[0] / step)))
    tau = np.linspace(0.0, t_imp[0], k0 + 1) if t_imp[0] > 0 else np.array([0.0])
    h = h0 + v0 * tau - 0.5 * g * tau * tau
    v = v0 - g * tau
    h[-1] = 0.0
    v[-1] = vm[0]
    h[0], v[0] = h0, v0
    blocks = [(tau, np.column_stack([h, v]))]
    for n in range(1, N):
        tau, x = arc(t_imp[n - 1], t_imp[n], vp[n - 1])
        x[0] = (0.0, vp[n - 1])
        x[-1] = (0.0, vm[n]) if tau.size > 1 else (0.0, vp[n - 1])
        blocks.append((tau, x))
    # last resolved arc, then the chord to the origin at t_inf
    tau, x = arc(t_imp[N - 1], t_imp[N] if N < len(t_imp) else t_imp[N - 1], vp[N - 1])
    x[0] = (0.0, vp[N - 1])
    if tau[-1] < t_inf:
        tau = np.append(tau, t_inf)
        x = np.vstack([x, [0.0, 0.0]])
    elif tau.size > 1:
        x[-1] = (0.0, 0.0)
    else:
        tau, x = np.array([t_inf]), np.zeros((1, 2))
    blocks.append((tau, x))
    for n, (tau, x) in enumerate(blocks):
        g_scale = tau + P[n]
        segs.append(Segment(g_scale[0], g_scale[-1]))
        grids.append(g_scale)
        vals.append(x)
    closure = t_inf + 1.0
    post = np.linspace(closure, closure + post_horizon, max(2, int(math.ceil(post_horizon / step)) + 1))
    segs.append(Segment(closure, math.inf))
    grids.append(post)
    vals.append(np.zeros((post.size, 2)))
    dom = GeneralizedTimeScale(segs, tol_t)
    meta = {"zeno_closure": closure, "t_inf": t_inf, "resolved_impacts": N,
            "jump_times": [float(grids[k][-1]) for k in range(len(grids) - 1)]}
    sig = Signal(dom, grids, vals, meta)
    return sig, realtime_projection(sig)


def realtime_projection(sig: Signal, tol: Optional[float] = None) -> RealTimeTrace:
    """Group samples by continuous part; a jump contributes both of its values."""
    tol = sig.dom.tol_t if tol is None else tol
    tc = sig.continuous_times()
    entries = []
    i = 0
    n = len(sig)
    while i < n:
        j = i + 1
        while j < n and tc[j] - tc[i] <= tol:
            j += 1
        vals = []
        for row in sig.x[i:j]:
            if not any(np.array_equal(row, v) for v in vals):
                vals.append(row.copy())
        entries.append((float(tc[i]), np.array(vals)))
        i = j
    return RealTimeTrace(entries)


def scenario_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def example1_ensemble(rng: np.random.Generator, n: int = 20, horizon: float = 5.0, step: float = 1e-3,
                      radius: float = 1.0):
    sigs = []
    for _ in range(n):
        x0 = rng.uniform(-radius, radius, 2)
        sigs.append(example1_continuous(x0, horizon, step)[0])
    return Ensemble(sigs, euclidean_norm)


def example1_discrete_ensemble(rng: np.random.Generator, r: float, n: int = 20, n_steps: int = 10,
                               radius: float = 0.5):
    sigs = []
    for _ in range(n):
        x0 = rng.uniform(-radius, radius, 2)
        sigs.append(example1_discrete(x0, r, n_steps)[0])
    return Ensemble(sigs, euclidean_norm)
