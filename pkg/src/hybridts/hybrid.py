"""Hybrid systems ``x' = f(x), x in C`` / ``x+ = g(x), x in D`` and their
solutions on generalized time scales.

:func:`solve` builds the time scale and the signal together: flow segments
come from fixed-step RK4 clamped at detected events, and every jump opens a
gap whose length is set by the configured :class:`GapPolicy`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import Signal, delta_derivatives
from .timescale import GeneralizedTimeScale, Segment, TOL_T, is_subinterval

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class GapPolicy:
    """Length of the n-th gap: ``delta`` (constant) or ``r**n`` (geometric)."""

    kind: str = "constant"
    delta: float = 1.0
    r: float = 0.5

    def __post_init__(self):
        if self.kind == "constant":
            if not self.delta > 0:
                raise ValueError("constant gap must be positive")
        elif self.kind == "geometric":
            if not 0 < self.r < 1:
                raise ValueError("geometric ratio must lie in (0, 1)")
        else:
            raise ValueError(f"unknown gap policy {self.kind!r}")

    def gap(self, n: int) -> float:
        if self.kind == "constant":
            return self.delta
        return self.r ** n

    def used(self, n: int) -> float:
        """Total length of the first ``n`` gaps."""
        if self.kind == "constant":
            return n * self.delta
        return math.fsum(self.r ** m for m in range(1, n + 1))

    def remaining(self, n: int) -> float:
        """What is left of the total budget after ``n`` gaps (inf for constant)."""
        if self.kind == "constant":
            return math.inf
        return self.r ** (n + 1) / (1.0 - self.r)

    def max_gap(self) -> float:
        return self.delta if self.kind == "constant" else self.r

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "delta": self.delta}
        return {"kind": "geometric", "r": self.r}

    @classmethod
    def from_dict(cls, d: dict) -> "GapPolicy":
        if d["kind"] == "constant":
            return cls("constant", delta=float(d.get("delta", 1.0)))
        return cls("geometric", r=float(d["r"]))


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1e-3
    event_tol: float = 1e-10
    gap_policy: GapPolicy = field(default_factory=GapPolicy)
    max_jumps: int = 10_000
    horizon: float = 10.0
    zeno_tol: float = 1e-6
    zeno_run: int = 8

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")
        if self.zeno_run < 2:
            raise ValueError("zeno_run must be at least 2")
        if self.max_jumps < 0 or not self.horizon >= 0:
            raise ValueError("max_jumps and horizon must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap_policy"] = self.gap_policy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "gap_policy" in d:
            d["gap_policy"] = GapPolicy.from_dict(d["gap_policy"])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        for k in ("max_jumps", "zeno_run"):
            if k in d:
                d[k] = int(d[k])
        return cls(**d)


@dataclass
class HybridSystem:
    """Single-valued selections of the flow and jump maps plus the two sets.

    ``event`` is an optional scalar guard: when given, a jump is triggered
    only once ``event(x) <= 0`` as well as ``in_D(x)``, and the bisection
    locates that crossing rather than the first entry into a tolerance band.
    ``jump_targets`` enumerates the jump set G(x) when it has several
    elements; ``mode_choice(t, x, targets)`` picks one (default: the first).
    ``zeno_limit`` / ``post_zeno_flow`` describe how to continue past an
    accumulation of jumps.
    """

    in_C: Callable[[np.ndarray], bool]
    in_D: Callable[[np.ndarray], bool]
    flow: Callable[[np.ndarray], np.ndarray]
    jump: Callable[[np.ndarray], np.ndarray]
    jump_targets: Optional[Callable[[np.ndarray], Sequence[np.ndarray]]] = None
    mode_choice: Optional[Callable] = None
    event: Optional[Callable[[np.ndarray], float]] = None
    zeno_limit: Optional[Callable[[np.ndarray], np.ndarray]] = None
    post_zeno_flow: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class ViolationReport:
    initial_ok: bool
    flow_violations: list = field(default_factory=list)
    jump_violations: list = field(default_factory=list)
    max_flow_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.initial_ok and not self.flow_violations and not self.jump_violations


def rk4_step(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _eval_flow(f, x):
    try:
        out = np.asarray(f(x), dtype=float)
    except Exception as exc:  # user callables may raise anything
        raise SolverError(f"flow field failed at x = {x}: {exc}") from exc
    if out.shape != x.shape or not np.all(np.isfinite(out)):
        raise SolverError(f"flow field returned {out!r} at x = {x}")
    return out


def _select_jump(sys: HybridSystem, t: float, x: np.ndarray) -> np.ndarray:
    if sys.jump_targets is not None:
        targets = [np.asarray(y, dtype=float) for y in sys.jump_targets(x)]
        if not targets:
            raise SolverError(f"empty jump set at x = {x}")
        if sys.mode_choice is not None:
            return np.asarray(sys.mode_choice(t, x, targets), dtype=float)
        return targets[0]
    return np.asarray(sys.jump(x), dtype=float)


def solve(sys: HybridSystem, x0, cfg: SolverConfig = SolverConfig()) -> Signal:
    """Construct a solution and its generalized time scale, starting at 0.

    The returned signal's ``meta`` records ``reason`` (``horizon``,
    ``max_jumps``, ``exit``, ``zeno``), the jump count and scale times, and
    ``zeno_closure`` (scale time of the accumulation closure point) when a
    Zeno passage happened.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not (sys.in_C(x) or sys.in_D(x)):
        raise SolverError(f"initial state {x} lies in neither C nor D")
    policy = cfg.gap_policy
    tol_t = TOL_T

    def flow_of(post):
        f = sys.post_zeno_flow if (post and sys.post_zeno_flow is not None) else sys.flow
        return lambda y: _eval_flow(f, y)

    flow = flow_of(False)
    post_zeno = False

    def triggered(y):
        if not sys.in_C(y):
            return True
        if post_zeno or not sys.in_D(y):
            return False
        return sys.event is None or sys.event(y) <= 0.0

    segs, grids, vals = [], [], []
    seg_start = 0.0
    cur_t, cur_x = [0.0], [x.copy()]
    tau = 0.0
    tc = 0.0
    jumps = 0
    jump_times = []
    durations = []
    closure = None
    reason = None
    horizon_eps = 1e-12 * max(1.0, cfg.horizon)

    def close_segment():
        segs.append(Segment(seg_start, tau))
        grids.append(np.array(cur_t))
        vals.append(np.array(cur_x))

    while True:
        if not post_zeno and sys.in_D(x):
            if jumps >= cfg.max_jumps:
                reason = "max_jumps"
                break
            durations.append(tau - seg_start)
            recent = durations[-cfg.zeno_run:]
            zeno = len(recent) == cfg.zeno_run and all(d < cfg.zeno_tol for d in recent)
            next_gap = policy.gap(jumps + 1)
            if not zeno and policy.kind == "geometric" and next_gap <= 10 * tol_t:
                zeno = True
            if zeno:
                if sys.zeno_limit is None:
                    reason = "zeno"
                    break
                gap = policy.remaining(jumps) if policy.kind == "geometric" else policy.delta
                gap = max(gap, 10 * tol_t)
                close_segment()
                tau = tau + gap
                closure = tau
                x = np.asarray(sys.zeno_limit(x), dtype=float)
                post_zeno = True
                flow = flow_of(True)
                log.debug("zeno closure at scale time %.12g after %d jumps", tau, jumps)
            else:
                close_segment()
                jump_times.append(tau)
                x = _select_jump(sys, tau, x)
                jumps += 1
                tau = tau + next_gap
            seg_start = tau
            cur_t, cur_x = [tau], [x.copy()]
            continue

        if cfg.horizon - tc <= horizon_eps:
            reason = "horizon"
            break
        if not sys.in_C(x):
            reason = "exit"
            break

        h = min(cfg.step, cfg.horizon - tc)
        y = rk4_step(flow, x, h)
        leaving = False
        if triggered(y):
            lo, hi = 0.0, h
            it = 0
            while hi - lo > cfg.event_tol:
                mid = 0.5 * (lo + hi)
                if triggered(rk4_step(flow, x, mid)):
                    hi = mid
                else:
                    lo = mid
                it += 1
                if it > 200:
                    raise SolverError("event bisection did not converge")
            y = rk4_step(flow, x, hi)
            if sys.in_C(y) or (not post_zeno and sys.in_D(y)):
                h = hi
            else:
                # left C without reaching D: stop at the last admissible state
                leaving = True
                h = lo
                y = rk4_step(flow, x, lo) if lo > 0 else x
        if h > 0 and tau + h > tau:
            tau = tau + h
            tc = tc + h
            x = y
            cur_t.append(tau)
            cur_x.append(x.copy())
        if leaving:
            reason = "exit"
            break

    close_segment()
    dom = GeneralizedTimeScale(segs, tol_t)
    meta = {
        "reason": reason,
        "jumps": jumps,
        "jump_times": jump_times,
        "zeno_closure": closure,
        "config": cfg.to_dict(),
    }
    return Signal(dom, grids, vals, meta)


def validate(sys: HybridSystem, sig: Signal, tol: float) -> ViolationReport:
    """Pointwise check of the initial, flow and jump conditions on the grid."""
    x = sig.x
    t = sig.t
    closure = sig.meta.get("zeno_closure")
    rep = ViolationReport(initial_ok=bool(sys.in_C(x[0]) or sys.in_D(x[0])))
    rs = sig.right_scattered_mask()
    deriv = delta_derivatives(sig)
    n = len(sig)
    max_res = 0.0
    for i in range(n):
        if rs[i]:
            nxt = x[i + 1]
            sigma_t = t[i + 1]
            if closure is not None and abs(sigma_t - closure) <= sig.dom.tol_t:
                if sys.zeno_limit is not None and np.linalg.norm(nxt - sys.zeno_limit(x[i])) > tol:
                    rep.jump_violations.append((float(t[i]), "closure value differs from the Zeno limit"))
                continue
            if not sys.in_D(x[i]):
                rep.jump_violations.append((float(t[i]), "x(t) not in D"))
                continue
            if sys.jump_targets is not None:
                dist = min(np.linalg.norm(nxt - np.asarray(y)) for y in sys.jump_targets(x[i]))
            else:
                dist = float(np.linalg.norm(nxt - np.asarray(sys.jump(x[i]))))
            if dist > tol:
                rep.jump_violations.append((float(t[i]), f"x(sigma(t)) misses G(x(t)) by {dist:.3g}"))
            continue
        if i == n - 1:
            continue  # Fin, or the last recorded sample of an open tail
        if not sys.in_C(x[i]):
            rep.flow_violations.append((float(t[i]), math.inf))
            max_res = math.inf
            continue
        f = sys.flow
        if closure is not None and t[i] >= closure - sig.dom.tol_t and sys.post_zeno_flow is not None:
            f = sys.post_zeno_flow
        res = float(np.linalg.norm(deriv[i] - np.asarray(f(x[i]), dtype=float)))
        max_res = max(max_res, res)
        if res > tol:
            rep.flow_violations.append((float(t[i]), res))
    rep.max_flow_residual = max_res
    return rep


def is_extension(base: Signal, ext: Signal, tol: float) -> bool:
    """True iff ``base``'s domain is a subinterval of ``ext``'s and values agree."""
    if not is_subinterval(base.dom, ext.dom):
        return False
    for ti, xi in zip(base.t, base.x):
        try:
            if np.linalg.norm(ext.sample(ti) - xi) > tol:
                return False
        except ValueError:
            return False
    return True
