"""Finite-ensemble checks of Lyapunov-type stability conditions.

Every check scans the stored grids of a set of signals and either finds a
violating pair (returned as a witness that re-evaluates to the same
numbers) or reports "pass at the tested resolution".  Inequalities are
relaxed by ``atol + rtol * |bound|`` (both 1e-9 by default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .calculus import Signal, delta_derivatives, evaluate_pointwise

ATOL = 1e-9
RTOL = 1e-9


# ---- class K-infinity functions ---------------------------------------------------

class ClassKInf:
    """Continuous, zero at zero, strictly increasing and unbounded."""

    def __call__(self, s):
        raise NotImplementedError

    def inverse(self) -> "ClassKInf":
        raise ValueError(f"{self!r} has no computable inverse")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(ClassKInf):
    """``a * s**b``."""

    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("power class-K-infinity function needs a > 0 and b > 0")

    def __call__(self, s):
        return self.a * np.power(s, self.b)

    def inverse(self) -> "Power":
        return Power(self.a ** (-1.0 / self.b), 1.0 / self.b)

    def to_dict(self) -> dict:
        return {"kind": "power", "a": self.a, "b": self.b}


class Table(ClassKInf):
    """Piecewise-linear through ``(xs, ys)`` starting at ``(0, 0)``.

    Beyond the last sample the function continues with ``slope``.
    """

    def __init__(self, xs, ys, slope: float):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
            raise ValueError("table needs two matching 1-D sample arrays of length >= 2")
        if xs[0] != 0.0 or ys[0] != 0.0:
            raise ValueError("table must start at (0, 0)")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise ValueError("table samples must be strictly increasing in both coordinates")
        if not slope > 0:
            raise ValueError("extrapolation slope must be positive")
        self.xs, self.ys, self.slope = xs, ys, float(slope)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.xs, self.ys)
        return np.where(s > self.xs[-1], self.ys[-1] + self.slope * (s - self.xs[-1]), out)

    def inverse(self) -> "Table":
        return Table(self.ys, self.xs, 1.0 / self.slope)

    def to_dict(self) -> dict:
        return {"kind": "table", "xs": self.xs.tolist(), "ys": self.ys.tolist(), "slope": self.slope}

    def __repr__(self):
        return f"Table({self.xs.size} samples, slope={self.slope})"


class Composition(ClassKInf):
    """``fns[0] o fns[1] o ...`` (the last one is applied first)."""

    def __init__(self, *fns: ClassKInf):
        if not fns:
            raise ValueError("empty composition")
        self.fns = tuple(fns)

    def __call__(self, s):
        for f in reversed(self.fns):
            s = f(s)
        return s

    def inverse(self) -> "Composition":
        return Composition(*[f.inverse() for f in reversed(self.fns)])

    def to_dict(self) -> dict:
        return {"kind": "composition", "fns": [f.to_dict() for f in self.fns]}

    def __repr__(self):
        return " o ".join(repr(f) for f in self.fns)


def identity() -> Power:
    return Power(1.0, 1.0)


def kinf_from_dict(d: dict) -> ClassKInf:
    kind = d["kind"]
    if kind == "power":
        return Power(float(d["a"]), float(d["b"]))
    if kind == "table":
        return Table(d["xs"], d["ys"], d["slope"])
    if kind == "composition":
        return Composition(*[kinf_from_dict(f) for f in d["fns"]])
    raise ValueError(f"unknown class-K-infinity kind {kind!r}")


def parse_kinf(text: str) -> ClassKInf:
    """``identity``, ``power:a,b`` or ``table:x1,y1;x2,y2;...@slope``."""
    text = text.strip()
    if text == "identity":
        return identity()
    kind, _, rest = text.partition(":")
    if kind == "power":
        a, b = (float(v) for v in rest.split(","))
        return Power(a, b)
    if kind == "table":
        body, _, slope = rest.partition("@")
        pts = [tuple(float(v) for v in p.split(",")) for p in body.split(";") if p]
        xs, ys = zip(*([(0.0, 0.0)] + pts))
        return Table(xs, ys, float(slope or 1.0))
    raise ValueError(f"cannot parse class-K-infinity function {text!r}")


def ugs_bound_from_kweak(alpha: ClassKInf, beta: ClassKInf, gamma: ClassKInf) -> ClassKInf:
    """Envelope ``alpha^-1 o gamma o beta`` implied by a K-weak functional.

    Three power functions compose to a power function in closed form.
    """
    if isinstance(alpha, Power) and isinstance(beta, Power) and isinstance(gamma, Power):
        a1, b1 = alpha.a, alpha.b
        a2, b2 = gamma.a, gamma.b
        a3, b3 = beta.a, beta.b
        return Power((a2 * a3 ** b2 / a1) ** (1.0 / b1), b2 * b3 / b1)
    return Composition(alpha.inverse(), gamma, beta)


def exp_growth_gamma(rho: float, M: float, tau_max: float) -> Power:
    """Linear gain ``rho**2 * exp(2 M tau_max)`` covering growth over a dwell."""
    return Power(rho * rho * math.exp(2.0 * M * tau_max), 1.0)


# ---- ensembles and reports -----------------------------------------------------------

Scalarizer = Callable  # pointwise map from a state vector (or (n, p) array) to a scalar


@dataclass
class Ensemble:
    signals: list
    distance: Scalarizer
    forward_complete_extensions_declared: bool = False
    _d: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        dims = {s.dim for s in self.signals}
        if len(dims) > 1:
            raise ValueError("ensemble signals must share one value dimension")

    def __len__(self):
        return len(self.signals)

    def d(self, i: int) -> np.ndarray:
        if i not in self._d:
            vals = evaluate_pointwise(self.distance, self.signals[i].x)
            if np.any(vals < 0) or np.any(np.isnan(vals)):
                raise ValueError("the distance map returned a negative value")
            self._d[i] = np.ascontiguousarray(vals)
        return self._d[i]

    def values(self, i: int, V: Scalarizer) -> np.ndarray:
        return np.ascontiguousarray(evaluate_pointwise(V, self.signals[i].x))


@dataclass
class StabilityReport:
    check: str
    verdict: str
    witness: Optional[dict] = None
    checked_pairs: int = 0
    margin: float = math.inf
    params: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "verdict": self.verdict,
            "witness": self.witness,
            "checked_pairs": self.checked_pairs,
            "margin": _finite_or_none(self.margin),
            "params": self.params,
            "resolution": self.resolution,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _resolution(E: Ensemble) -> dict:
    steps = []
    for sig in E.signals:
        if len(sig) > 1:
            dt = np.diff(sig.t)
            same = sig.seg[1:] == sig.seg[:-1]
            if same.any():
                steps.append(float(dt[same].max()))
    return {
        "signals": len(E),
        "samples": int(sum(len(s) for s in E.signals)),
        "max_step": max(steps) if steps else None,
    }


def _tol(bound, atol, rtol):
    return atol + rtol * abs(bound)


def _report(check, params, E, best, pairs, witness_fn, extra=None):
    """Assemble a report from the globally worst (scaled slack) candidate."""
    if best is None:
        return StabilityReport(check, "pass", None, pairs, math.inf, params, _resolution(E), extra or {})
    scaled, raw, info = best
    verdict = "fail" if scaled < 0 else "pass"
    witness = witness_fn(info) if verdict == "fail" else None
    return StabilityReport(check, verdict, witness, pairs, raw, params, _resolution(E), extra or {})


# ---- checks -----------------------------------------------------------------------------

def check_ugs(E: Ensemble, beta: ClassKInf, atol: float = ATOL, rtol: float = RTOL) -> StabilityReport:
    """``d(t) <= beta(d(s))`` for every ordered grid pair ``s <= t``.

    Since beta is increasing, the binding ``s`` for each ``t`` is the one
    with the smallest ``d`` so far; one prefix-minimum pass covers all
    ``n(n+1)/2`` pairs.
    """
    best = None
    pairs = 0
    for i, sig in enumerate(E.signals):
        d = E.d(i)
        if d.size == 0:
            continue
        b = np.ascontiguousarray(beta(d), dtype=float)
        j, k, raw, scaled = _kernels.prefix_bound(b, d, atol, rtol)
        pairs += d.size * (d.size + 1) // 2
        if best is None or scaled < best[0]:
            best = (scaled, raw, (i, int(j), int(k)))

    def witness(info):
        i, j, k = info
        sig, d = E.signals[i], E.d(i)
        return {"signal": i, "s": float(sig.t[j]), "t": float(sig.t[k]), "s_index": j, "t_index": k,
                "d_s": float(d[j]), "d_t": float(d[k]), "bound": float(beta(d[j]))}

    return _report("ugs", {"beta": beta.to_dict(), "atol": atol, "rtol": rtol}, E, best, pairs, witness)


def check_attractivity(E: Ensemble, eps: float, T: float,
                       atol: float = ATOL, rtol: float = RTOL) -> StabilityReport:
    """``d(s) <= 1/eps`` and ``t >= s + T`` imply ``d(t) < eps``."""
    if not 0 < eps < 1 or not T > 0:
        raise ValueError("need 0 < eps < 1 and T > 0")
    cap = 1.0 / eps
    best = None
    pairs = 0
    for i, sig in enumerate(E.signals):
        d = E.d(i)
        t = np.ascontiguousarray(sig.t)
        s, k, dk = _kernels.late_exceedance(t, d, cap, T)
        if s < 0:
            continue
        starts = np.flatnonzero(d <= cap)
        first = np.searchsorted(t, t[starts] + T, side="left")
        pairs += int(np.sum(t.size - np.maximum(first, starts)))
        raw = eps - dk
        scaled = raw + _tol(eps, atol, rtol)
        if best is None or scaled < best[0]:
            best = (scaled, raw, (i, int(s), int(k)))

    def witness(info):
        i, j, k = info
        sig, d = E.signals[i], E.d(i)
        return {"signal": i, "s": float(sig.t[j]), "t": float(sig.t[k]), "s_index": j, "t_index": k,
                "d_s": float(d[j]), "d_t": float(d[k])}

    return _report("attractivity", {"eps": eps, "T": T}, E, best, pairs, witness)


def check_k_weak(E: Ensemble, V: Scalarizer, alpha: ClassKInf, beta: ClassKInf, gamma: ClassKInf,
                 atol: float = ATOL, rtol: float = RTOL) -> StabilityReport:
    """Sandwich ``alpha(d) <= V <= beta(d)`` pointwise and ``V(t) <= gamma(V(s))`` for ``s <= t``."""
    best = None
    pairs = 0
    for i, sig in enumerate(E.signals):
        d = E.d(i)
        v = E.values(i, V)
        if d.size == 0:
            continue
        lo = np.asarray(alpha(d), dtype=float)
        hi = np.asarray(beta(d), dtype=float)
        raw_lo = v - lo
        raw_hi = hi - v
        sc_lo = raw_lo + atol + rtol * np.abs(lo)
        sc_hi = raw_hi + atol + rtol * np.abs(hi)
        for raw, sc, which in ((raw_lo, sc_lo, "lower"), (raw_hi, sc_hi, "upper")):
            k = int(np.argmin(sc))
            if best is None or sc[k] < best[0]:
                best = (float(sc[k]), float(raw[k]), (i, 1, which, k, k))
        g = np.ascontiguousarray(gamma(v), dtype=float)
        j, k, raw, scaled = _kernels.prefix_bound(g, v, atol, rtol)
        pairs += v.size * (v.size + 1) // 2
        if scaled < best[0]:
            best = (scaled, raw, (i, 2, "gain", int(j), int(k)))

    def witness(info):
        i, cond, which, j, k = info
        sig, d = E.signals[i], E.d(i)
        v = E.values(i, V)
        w = {"signal": i, "condition": cond, "side": which, "s": float(sig.t[j]), "t": float(sig.t[k]),
             "s_index": j, "t_index": k, "d_s": float(d[j]), "d_t": float(d[k]),
             "V_s": float(v[j]), "V_t": float(v[k])}
        if cond == 1:
            w["bound"] = float(alpha(d[k]) if which == "lower" else beta(d[k]))
        else:
            w["bound"] = float(gamma(v[j]))
        return w

    params = {"alpha": alpha.to_dict(), "beta": beta.to_dict(), "gamma": gamma.to_dict()}
    return _report("k_weak", params, E, best, pairs, witness)


def falsify_c1(E: Ensemble, eps: float, T: float) -> StabilityReport:
    """Search for a corridor: ``t >= s + T`` with ``eps <= d <= 1/eps`` on all of ``[s, t]``.

    Pass means no corridor exists at the tested resolution.  On failure the
    earliest corridor of the first offending signal is returned.
    """
    if not 0 < eps < 1 or not T > 0:
        raise ValueError("need 0 < eps < 1 and T > 0")
    longest = -math.inf
    for i, sig in enumerate(E.signals):
        d = E.d(i)
        t = np.ascontiguousarray(sig.t)
        s, k, span = _kernels.first_corridor(t, d, eps, 1.0 / eps, T)
        longest = max(longest, span)
        if s >= 0:
            w = {"signal": i, "s": float(t[s]), "t": float(t[k]), "s_index": int(s), "t_index": int(k),
                 "d_s": float(d[s]), "d_t": float(d[k]),
                 "d_min": float(d[s:k + 1].min()), "d_max": float(d[s:k + 1].max())}
            return StabilityReport("c1", "fail", w, 0, T - span, {"eps": eps, "T": T}, _resolution(E),
                                   {"longest_corridor": span})
    margin = T - longest if math.isfinite(longest) else math.inf
    return StabilityReport("c1", "pass", None, 0, margin, {"eps": eps, "T": T}, _resolution(E),
                           {"longest_corridor": _finite_or_none(longest)})


def corridor_length_bound(beta: ClassKInf, eps: float, delta: float, T: float, M: float) -> tuple:
    """Counting bound on how long a signal can stay in the eps-band.

    With ``k`` the least integer above ``beta(1/eps) / delta``, no stay can
    last ``k (T + M)``: every ``T + M`` of it costs at least ``delta`` of V.
    """
    k = int(math.floor(float(beta(1.0 / eps)) / delta)) + 1
    return k, k * (T + M)


def check_corollary1(E: Ensemble, V: Scalarizer, M: float, eps: float, T: float, delta: float,
                     beta: Optional[ClassKInf] = None,
                     atol: float = ATOL, rtol: float = RTOL) -> StabilityReport:
    """Bounded gaps ``sigma(t) <= t + M`` and band decrease ``V(t) <= V(s) - delta``."""
    if not (M > 0 and T > 0 and delta > 0 and 0 < eps < 1):
        raise ValueError("need M, T, delta > 0 and 0 < eps < 1")
    params = {"M": M, "eps": eps, "T": T, "delta": delta}
    extra = {}
    if beta is not None:
        k, bound = corridor_length_bound(beta, eps, delta, T, M)
        extra = {"k": k, "corridor_length_bound": bound}
        params["beta"] = beta.to_dict()
    # condition 1: every gap of every domain
    worst_gap = 0.0
    for i, sig in enumerate(E.signals):
        gaps = sig.dom.gaps()
        if gaps.size:
            k = int(np.argmax(gaps))
            worst_gap = max(worst_gap, float(gaps[k]))
            if gaps[k] > M + _tol(M, atol, rtol):
                seg = sig.dom.segments[k]
                w = {"signal": i, "condition": 1, "t": seg.hi, "sigma_t": sig.dom.segments[k + 1].lo,
                     "gap": float(gaps[k])}
                return StabilityReport("corollary1", "fail", w, 0, M - float(gaps[k]), params,
                                       _resolution(E), {**extra, "max_gap": float(gaps[k])})
    best = None
    pairs = 0
    for i, sig in enumerate(E.signals):
        d = E.d(i)
        v = E.values(i, V)
        t = np.ascontiguousarray(sig.t)
        s, k, raw, scaled, n = _kernels.corridor_decrease(t, d, v, eps, 1.0 / eps, T, delta, atol, rtol)
        pairs += int(n)
        if s >= 0 and (best is None or scaled < best[0]):
            best = (scaled, raw, (i, int(s), int(k)))

    def witness(info):
        i, j, k = info
        sig, d = E.signals[i], E.d(i)
        v = E.values(i, V)
        return {"signal": i, "condition": 2, "s": float(sig.t[j]), "t": float(sig.t[k]),
                "s_index": j, "t_index": k, "d_s": float(d[j]), "d_t": float(d[k]),
                "V_s": float(v[j]), "V_t": float(v[k])}

    extra["max_gap"] = worst_gap
    return _report("corollary1", params, E, best, pairs, witness, extra)


def check_strict_decrease(sig: Signal, V: Scalarizer, gamma: ClassKInf, d: Scalarizer,
                          slack: Optional[float] = None) -> StabilityReport:
    """``V^Delta(tau) <= -gamma(d(tau)) + slack`` wherever the delta derivative exists.

    ``slack`` defaults to ten times the largest in-segment grid step, the
    size of the first-order quotient error.
    """
    E = Ensemble([sig], d)
    res = _resolution(E)
    if slack is None:
        slack = 10.0 * (res["max_step"] or 0.0)
    v = evaluate_pointwise(V, sig.x)
    dv = delta_derivatives(sig.with_values(v))[:, 0]
    dd = E.d(0)
    ok = ~np.isnan(dv)
    if not ok.any():
        return StabilityReport("strict_decrease", "pass", None, 0, math.inf,
                               {"gamma": gamma.to_dict(), "slack": slack}, res)
    bound = -np.asarray(gamma(dd), dtype=float)
    raw = np.where(ok, bound - dv, np.inf)
    k = int(np.argmin(raw))
    verdict = "fail" if raw[k] + slack < 0 else "pass"
    w = None
    if verdict == "fail":
        w = {"signal": 0, "t": float(sig.t[k]), "t_index": k, "V_t": float(v[k]),
             "V_delta": float(dv[k]), "d_t": float(dd[k]), "bound": float(bound[k])}
    return StabilityReport("strict_decrease", verdict, w, int(ok.sum()), float(raw[k]),
                           {"gamma": gamma.to_dict(), "slack": slack}, res)


def p_ugas_consistent(E: Ensemble, beta: ClassKInf, schedule: Sequence[tuple]) -> tuple:
    """UGS with ``beta`` plus no corridor for every ``(eps, T)`` in ``schedule``.

    Returns ``(consistent, reports)``.  A ``True`` only means no
    counterexample was found at the tested resolution.
    """
    reports = [check_ugs(E, beta)] + [falsify_c1(E, eps, T) for eps, T in schedule]
    return all(r.passed for r in reports), reports
