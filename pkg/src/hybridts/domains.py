"""Hybrid time domains, the H family of generalized time scales, and the
embedding of switched-system trajectories on time scales with shrinking gaps.

A hybrid time domain is a union of ``[t_j, t_{j+1}] x {j}``.  The sum map
``(t, j) -> t + j`` turns it into a generalized time scale whose gaps all
have length one; :func:`to_htd` inverts it through the (continuous part,
discrete part) decomposition.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calculus import Signal, SignalError
from .hybrid import HybridSystem
from .timescale import (
    TAIL_CLOSED,
    TAIL_HALF_OPEN,
    TAIL_UNBOUNDED,
    TOL_T,
    GeneralizedTimeScale,
    Lattice,
    Segment,
    TimeScaleError,
    _neumaier_cumsum,
)

log = logging.getLogger(__name__)

# membership tolerance of embedded scales; geometric gaps shrink fast, so the
# default 1e-9 would stop resolving switches after about 26 of them at r = 1/2
EMBED_TOL_T = 1e-12


class DomainError(ValueError):
    pass


class NotInHError(DomainError):
    pass


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    j: int


class HybridTimeDomain:
    """Union of ``[lo, hi] x {j}`` pieces with ``j = 0, 1, 2, ...``.

    The last piece may be ``[lo, inf)`` (``tail="unbounded"``) or
    ``[lo, hi)`` (``tail="half_open"``).
    """

    def __init__(self, pieces: Sequence, tail: str = TAIL_CLOSED):
        ps = [p if isinstance(p, Piece) else Piece(float(p[0]), float(p[1]), int(p[2])) for p in pieces]
        if not ps:
            raise DomainError("a hybrid time domain needs at least one piece")
        if tail not in (TAIL_CLOSED, TAIL_HALF_OPEN, TAIL_UNBOUNDED):
            raise DomainError(f"unknown tail kind {tail!r}")
        if ps[0].lo != 0.0:
            raise DomainError("hybrid time domains start at t = 0")
        for k, p in enumerate(ps):
            if p.j != k:
                raise DomainError(f"piece {k} carries jump index {p.j}")
            last = k == len(ps) - 1
            if math.isinf(p.hi) and not (last and tail == TAIL_UNBOUNDED):
                raise DomainError("only an unbounded last piece may reach infinity")
            if last and tail == TAIL_UNBOUNDED and not math.isinf(p.hi):
                raise DomainError("unbounded tail needs hi = inf")
            if last and tail == TAIL_HALF_OPEN and not p.hi > p.lo:
                raise DomainError("a half-open last piece must have positive length")
            if not p.lo <= p.hi:
                raise DomainError(f"piece {k} has lo > hi")
            if k and p.lo != ps[k - 1].hi:
                raise DomainError(f"piece {k} does not start where piece {k - 1} ends")
        self.pieces = tuple(ps)
        self.tail = tail

    def __eq__(self, other):
        if not isinstance(other, HybridTimeDomain):
            return NotImplemented
        return self.pieces == other.pieces and self.tail == other.tail

    def __repr__(self):
        return f"HybridTimeDomain({[(p.lo, p.hi, p.j) for p in self.pieces]}, tail={self.tail!r})"

    def breakpoints(self) -> np.ndarray:
        return np.array([p.lo for p in self.pieces] + [self.pieces[-1].hi])

    def max_deviation(self, other: "HybridTimeDomain") -> float:
        """Largest breakpoint difference; inf if the shapes differ."""
        if len(self.pieces) != len(other.pieces) or self.tail != other.tail:
            return math.inf
        a, b = self.breakpoints(), other.breakpoints()
        both_inf = np.isinf(a) & np.isinf(b)
        diff = np.abs(np.where(both_inf, 0.0, a) - np.where(both_inf, 0.0, b))
        return float(np.max(diff))

    def to_dict(self) -> dict:
        return {
            "pieces": [{"lo": p.lo, "hi": None if math.isinf(p.hi) else p.hi, "j": p.j} for p in self.pieces],
            "tail": self.tail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridTimeDomain":
        pieces = [(p["lo"], math.inf if p["hi"] is None else p["hi"], p["j"]) for p in d["pieces"]]
        return cls(pieces, d.get("tail", TAIL_CLOSED))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "HybridTimeDomain":
        return cls.from_dict(json.loads(text))


def to_gts(htd: HybridTimeDomain, tol_t: float = TOL_T) -> GeneralizedTimeScale:
    """Image of ``htd`` under ``(t, j) -> t + j``."""
    segs = []
    n = len(htd.pieces)
    for k, p in enumerate(htd.pieces):
        last = k == n - 1
        closed = not (last and htd.tail == TAIL_HALF_OPEN)
        segs.append(Segment(p.lo + p.j, p.hi + p.j, closed_right=closed))
    return GeneralizedTimeScale(segs, tol_t)


def is_in_H(I, tol: float | None = None) -> bool:
    """Ini = 0 and every gap has length one (within ``tol_t``)."""
    if isinstance(I, Lattice):
        tol = I.tol_t if tol is None else tol
        return abs(I.start) <= tol and abs(I.stride - 1.0) <= tol
    tol = I.tol_t if tol is None else tol
    if abs(I.ini()) > tol:
        return False
    return bool(np.all(np.abs(I.gaps() - 1.0) <= tol))


def to_htd(I, horizon: float | None = None) -> HybridTimeDomain:
    """Inverse of :func:`to_gts`: pieces ``(T_c, N_d)`` of each segment.

    A lattice ``Z_+`` has no finite segment list, so ``horizon`` selects the
    window ``[0, horizon]`` to materialize.
    """
    if isinstance(I, Lattice):
        if horizon is None:
            raise DomainError("converting a lattice needs a horizon")
        if not is_in_H(I):
            raise NotInHError(f"{I!r} is not in H (needs start 0 and stride 1)")
        I = I.restrict(0.0, float(horizon))
    if not is_in_H(I):
        gaps = I.gaps()
        bad = [g for g in gaps if abs(g - 1.0) > I.tol_t]
        why = f"Ini = {I.ini()}" if abs(I.ini()) > I.tol_t else f"gap of length {bad[0]}"
        raise NotInHError(f"not in H: {why}")
    pieces = []
    prev_hi = None
    for j, seg in enumerate(I.segments):
        lo = 0.0 if j == 0 else prev_hi
        hi = math.inf if math.isinf(seg.hi) else seg.hi - j
        if j and abs((seg.lo - j) - lo) > 10 * I.tol_t:
            raise NotInHError("segment start does not continue the previous flow time")
        pieces.append(Piece(lo, max(hi, lo), j))
        prev_hi = pieces[-1].hi
    return HybridTimeDomain(pieces, I.tail)


def random_hybrid_time_domain(rng: np.random.Generator, max_pieces: int = 20,
                              tail: str | None = None) -> HybridTimeDomain:
    n = int(rng.integers(1, max_pieces + 1))
    if tail is None:
        tail = (TAIL_CLOSED, TAIL_HALF_OPEN, TAIL_UNBOUNDED)[int(rng.integers(3))]
    # about a third of the pieces are instantaneous (consecutive jumps)
    lengths = np.where(rng.random(n) < 0.3, 0.0, rng.uniform(0.01, 3.0, n))
    if tail == TAIL_HALF_OPEN and lengths[-1] == 0.0:
        lengths[-1] = rng.uniform(0.01, 3.0)
    pieces = []
    t = 0.0
    for j in range(n):
        hi = t + float(lengths[j])
        if j == n - 1 and tail == TAIL_UNBOUNDED:
            hi = math.inf
        pieces.append(Piece(t, hi, j))
        t = hi
    return HybridTimeDomain(pieces, tail)


# ---- switched systems -----------------------------------------------------------

@dataclass
class SwitchingSignal:
    """Piecewise constant right-continuous mode signal.

    ``modes[0]`` holds before the first breakpoint and ``modes[n]`` on
    ``[t_n, t_{n+1})``.  ``infinite`` declares that the listed breakpoints
    are a finite window of an infinite switching sequence.
    """

    breakpoints: list = field(default_factory=list)
    modes: list = field(default_factory=lambda: [0])
    infinite: bool = False

    def __post_init__(self):
        self.breakpoints = [float(t) for t in self.breakpoints]
        self.modes = [int(m) for m in self.modes]
        if len(self.modes) != len(self.breakpoints) + 1:
            raise DomainError("need one more mode than breakpoints")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise DomainError("breakpoints must be strictly increasing")
        if self.breakpoints and self.breakpoints[0] < 0:
            raise DomainError("breakpoints must be non-negative")

    def mode_at(self, s: float) -> int:
        return self.modes[bisect.bisect_right(self.breakpoints, s)]

    def to_dict(self) -> dict:
        d = {"breakpoints": self.breakpoints, "modes": self.modes}
        if self.infinite:
            d["infinite"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchingSignal":
        return cls(list(d["breakpoints"]), list(d["modes"]), bool(d.get("infinite", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SwitchingSignal":
        return cls.from_dict(json.loads(text))


def random_switching_signal(rng: np.random.Generator, horizon: float = 10.0,
                            max_switches: int = 50, n_modes: int = 2) -> SwitchingSignal:
    n = int(rng.integers(0, max_switches + 1))
    bps = np.unique(rng.uniform(0.0, horizon, n))
    bps = bps[bps > 0.0]
    modes = [int(rng.integers(n_modes))]
    for _ in bps:
        # a switch always changes the mode
        modes.append((modes[-1] + 1 + int(rng.integers(n_modes - 1))) % n_modes if n_modes > 1 else 0)
    return SwitchingSignal(bps.tolist(), modes)


def _geometric_partial_sums(r: float, n: int) -> np.ndarray:
    """``P[k] = sum_{m=1}^k r^m`` for k = 0..n, compensated."""
    return _neumaier_cumsum(r ** m for m in range(1, n + 1))


def sjr(breakpoints: Sequence[float], r: float, s: float) -> tuple:
    """Image of real time ``s`` on the scale with geometric gaps.

    ``(s,)`` before the first breakpoint, ``(s + P_n,)`` strictly between the
    n-th and (n+1)-th breakpoints, and the pair ``(s + P_{n-1}, s + P_n)`` at
    the n-th breakpoint, where ``P_n = r + r^2 + ... + r^n``.
    """
    if s < 0:
        raise DomainError("real time must be non-negative")
    if not 0 < r <= 1:
        raise DomainError("ratio must lie in (0, 1]")
    n = bisect.bisect_right(breakpoints, s)
    P = _geometric_partial_sums(r, n)
    if n and breakpoints[n - 1] == s:
        return (s + P[n - 1], s + P[n])
    return (s + P[n],)


def embed_switched(x: Signal, lam: SwitchingSignal, r: float,
                   tol_t: float = EMBED_TOL_T) -> Signal:
    """Lift a real-time trajectory and its mode signal onto the image scale.

    The result has one extra coordinate holding the mode.  At a breakpoint
    the first image point carries the mode before the switch and the second
    the mode after it.  Gaps that would fall below ``10 * tol_t`` cannot be
    told apart in floating point; from the first such switch on, the whole
    remaining gap budget is placed once and later switches change the mode
    without a gap (``meta["resolved_switches"]`` counts the switches that
    received their own gap).  Breakpoints past the last recorded sample are
    ignored.
    """
    dom = x.dom
    if len(dom.segments) != 1 or dom.ini() != 0.0:
        raise SignalError("embed_switched needs a gap-free real-time signal starting at 0")
    if not 0 < r <= 1:
        raise DomainError("ratio must lie in (0, 1]")
    if r == 1 and lam.infinite:
        warnings.warn("r = 1 with infinitely many switches: the discrete part grows without bound",
                      RuntimeWarning, stacklevel=2)
    seg = dom.segments[0]
    end = seg.hi
    # a switch after the last recorded sample has no state to attach to
    last_t = float(x.t[-1])
    bps = [b for b in lam.breakpoints
           if (b < end or (seg.closed_right and b == end)) and b <= last_t + dom.tol_t]
    floor = 10.0 * tol_t
    n_bp = len(bps)
    resolved = 0
    while resolved < n_bp and r ** (resolved + 1) > floor:
        resolved += 1
    P = _geometric_partial_sums(r, resolved)
    shifts = list(P)  # shift applied after the k-th resolved breakpoint
    if resolved < n_bp:
        # lumped tail: everything that remains of the budget (only reachable for r < 1)
        rest = r ** (resolved + 1) / (1.0 - r)
        shifts.append(P[-1] + max(rest, 2.0 * tol_t))
        cut = resolved + 1
    else:
        cut = resolved
    # grid with the breakpoints inserted
    t_src = np.asarray(x.t)
    extra = [b for b in bps if not np.any(np.abs(t_src - b) <= dom.tol_t)]
    ts = np.union1d(t_src, np.asarray(extra, dtype=float)) if extra else t_src
    xs = np.array([x.sample(t) for t in ts])
    # snap breakpoints onto their grid representatives
    bp_idx = [int(np.argmin(np.abs(ts - b))) for b in bps]
    cut_idx = bp_idx[:cut]
    starts = [0] + cut_idx
    stops = cut_idx + [len(ts) - 1]
    grids, vals, segs = [], [], []
    for k, (a, b) in enumerate(zip(starts, stops)):
        shift = shifts[k]
        g = ts[a:b + 1] + shift
        modes = np.array([lam.mode_at(t) for t in ts[a:b + 1]], dtype=float)
        if k + 1 < len(starts):
            modes[-1] = lam.modes[k]  # pre-switch mode at the left image point
        grids.append(g)
        vals.append(np.column_stack([xs[a:b + 1], modes]))
        last = k == len(starts) - 1
        if last and not seg.closed_right:
            hi = math.inf if math.isinf(end) else end + shift
            segs.append(Segment(g[0], hi, closed_right=False))
        else:
            segs.append(Segment(g[0], g[-1]))
    new_dom = GeneralizedTimeScale(segs, tol_t)
    meta = dict(x.meta)
    meta.update({"ratio": r, "switches": n_bp, "resolved_switches": resolved})
    return Signal(new_dom, grids, vals, meta)


def switched_hybrid_system(fields: Sequence[Callable], modes: Sequence[int] | None = None) -> HybridSystem:
    """Hybrid form of ``u' = f_zeta(u)`` with state ``(u, zeta)``.

    C = D = everything; the flow leaves the mode alone and a jump may pick
    any mode while keeping ``u``.  Meant for :func:`hybrid.validate`, not
    for :func:`hybrid.solve` (D everywhere would jump forever).
    """
    fields = list(fields)
    modes = list(range(len(fields))) if modes is None else list(modes)

    def flow(z):
        u, zeta = z[:-1], int(round(z[-1]))
        return np.append(np.asarray(fields[zeta](u), dtype=float), 0.0)

    def targets(z):
        return [np.append(z[:-1], float(i)) for i in modes]

    return HybridSystem(
        in_C=lambda z: True,
        in_D=lambda z: True,
        flow=flow,
        jump=lambda z: np.asarray(z, dtype=float),
        jump_targets=targets,
    )
