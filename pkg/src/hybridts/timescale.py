"""Generalized time scales built from finitely many closed segments.

A :class:`GeneralizedTimeScale` is an ordered list of disjoint segments
``[lo, hi]``; a degenerate segment ``lo == hi`` is an isolated point.  Only
the last segment may be half-open ``[lo, hi)`` or unbounded ``[lo, inf)``,
which keeps every prefix truncation closed.  The unbounded lattice
``start + stride * Z_+`` is represented intensionally by :class:`Lattice`
and materialised per query window.

Both classes expose the same methods; the module-level functions
(:func:`ini`, :func:`sigma`, :func:`continuous_part`, ...) dispatch to them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

TOL_T = 1e-9

TAIL_CLOSED = "closed"
TAIL_HALF_OPEN = "half_open"
TAIL_UNBOUNDED = "unbounded"


class TimeScaleError(ValueError):
    pass


class EmptyTimeScaleError(TimeScaleError):
    pass


class MembershipError(TimeScaleError):
    pass


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    closed_right: bool = True

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or math.isinf(lo):
            raise TimeScaleError(f"bad segment bounds ({self.lo}, {self.hi})")
        if lo > hi:
            raise TimeScaleError(f"segment lo {lo} > hi {hi}")
        if lo == hi and not self.closed_right:
            raise TimeScaleError("an isolated point must be closed")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if math.isinf(hi):
            object.__setattr__(self, "closed_right", False)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi


def _neumaier_cumsum(values: Iterable[float]) -> np.ndarray:
    """Compensated running sum, prefixed with 0."""
    out = [0.0]
    s = 0.0
    c = 0.0
    for v in values:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out.append(s + c)
    return np.asarray(out, dtype=float)


class GeneralizedTimeScale:
    """Finite union of disjoint segments, closed except possibly the last."""

    def __init__(self, segments: Sequence[Segment], tol_t: float = TOL_T):
        segs = [s if isinstance(s, Segment) else Segment(*s) for s in segments]
        if not segs:
            raise EmptyTimeScaleError("a generalized time scale needs at least one segment")
        for k, s in enumerate(segs[:-1]):
            if not s.closed_right:
                raise TimeScaleError(f"segment {k} is open on the right but is not the last one")
            if segs[k + 1].lo - s.hi <= tol_t:
                raise TimeScaleError(
                    f"segments {k} and {k + 1} are not separated by more than tol_t "
                    f"({s.hi} vs {segs[k + 1].lo})"
                )
        self.segments: tuple[Segment, ...] = tuple(segs)
        self.tol_t = float(tol_t)
        self._lo = np.array([s.lo for s in segs])
        self._hi = np.array([s.hi for s in segs])
        lengths = [s.length for s in segs]
        if math.isinf(lengths[-1]):
            lengths[-1] = 0.0  # never summed past the last start
        self._cum_measure = _neumaier_cumsum(lengths)
        gaps = [segs[k + 1].lo - segs[k].hi for k in range(len(segs) - 1)]
        self._cum_gap = _neumaier_cumsum(gaps)

    # ---- construction helpers ----------------------------------------

    @classmethod
    def interval(cls, lo: float, hi: float = math.inf, closed_right: bool = True,
                 tol_t: float = TOL_T) -> "GeneralizedTimeScale":
        return cls([Segment(lo, hi, closed_right)], tol_t)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]], tail: str = TAIL_CLOSED,
                   tol_t: float = TOL_T) -> "GeneralizedTimeScale":
        pairs = [tuple(p) for p in pairs]
        segs = [Segment(lo, hi) for lo, hi in pairs[:-1]]
        lo, hi = pairs[-1]
        if tail == TAIL_UNBOUNDED:
            segs.append(Segment(lo, math.inf))
        elif tail == TAIL_HALF_OPEN:
            segs.append(Segment(lo, hi, closed_right=False))
        elif tail == TAIL_CLOSED:
            segs.append(Segment(lo, hi))
        else:
            raise TimeScaleError(f"unknown tail kind {tail!r}")
        return cls(segs, tol_t)

    @classmethod
    def points(cls, pts: Iterable[float], tol_t: float = TOL_T) -> "GeneralizedTimeScale":
        return cls([Segment(p, p) for p in pts], tol_t)

    # ---- basic structure --------------------------------------------

    def __len__(self):
        return len(self.segments)

    def __repr__(self):
        parts = []
        for s in self.segments:
            if s.is_point:
                parts.append(f"{{{s.lo:g}}}")
            else:
                parts.append(f"[{s.lo:g}, {s.hi:g}{']' if s.closed_right else ')'}")
        return "GeneralizedTimeScale(" + " u ".join(parts) + ")"

    def __eq__(self, other):
        if not isinstance(other, GeneralizedTimeScale):
            return NotImplemented
        return self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    @property
    def tail(self) -> str:
        last = self.segments[-1]
        if math.isinf(last.hi):
            return TAIL_UNBOUNDED
        return TAIL_CLOSED if last.closed_right else TAIL_HALF_OPEN

    @property
    def bounded(self) -> bool:
        return not math.isinf(self.segments[-1].hi)

    def ini(self) -> float:
        return self.segments[0].lo

    def fin(self) -> float:
        return self.segments[-1].hi

    @property
    def fin_attained(self) -> bool:
        return self.tail == TAIL_CLOSED

    def is_time_scale(self) -> bool:
        """True when the set is closed (Fin attained)."""
        return self.fin_attained

    def gaps(self) -> np.ndarray:
        """Lengths of the gaps between consecutive segments."""
        return self._lo[1:] - self._hi[:-1]

    def measure(self) -> float:
        return float(sum(s.length for s in self.segments))

    # ---- membership -------------------------------------------------

    def locate(self, t) -> np.ndarray:
        """Segment index of each time in ``t``; -1 where t is not a member."""
        t = np.asarray(t, dtype=float)
        tol = self.tol_t
        k = np.searchsorted(self._lo, t + tol, side="right") - 1
        kk = np.clip(k, 0, None)
        hi = self._hi[kk]
        inside = (k >= 0) & (t <= hi + tol)
        last = len(self.segments) - 1
        if self.tail == TAIL_HALF_OPEN:
            inside &= ~((kk == last) & (t >= hi))
        return np.where(inside, k, -1)

    def contains(self, t) -> Union[bool, np.ndarray]:
        res = self.locate(t) >= 0
        return bool(res) if np.ndim(res) == 0 else res

    def __contains__(self, t) -> bool:
        return bool(self.contains(float(t)))

    def _require(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        k = self.locate(t)
        if np.any(k < 0):
            bad = np.atleast_1d(t)[np.atleast_1d(k) < 0][0]
            raise MembershipError(f"t = {bad!r} is not a member of {self!r}")
        return t, k

    # ---- operators ----------------------------------------------------

    def sigma(self, t: float) -> float:
        t, k = self._require(float(t))
        k = int(k)
        seg = self.segments[k]
        at_right_end = seg.closed_right and t >= seg.hi - self.tol_t
        if not at_right_end:
            return float(t)
        if k + 1 < len(self.segments):
            return self.segments[k + 1].lo
        return seg.hi

    def right_scattered(self) -> np.ndarray:
        """All points of R(I): the right ends of every non-final segment."""
        return self._hi[:-1].copy()

    def gap_points(self, a: float, b: float) -> list[float]:
        if a > b:
            raise TimeScaleError(f"window [{a}, {b}] is reversed")
        r = self._hi[:-1]
        sel = (r >= a - self.tol_t) & (r <= b + self.tol_t)
        return [float(x) for x in r[sel]]

    def continuous_part(self, t):
        """Ini + Lebesgue measure of ``[Ini, t]`` intersected with the scale."""
        t, k = self._require(t)
        lo = self._lo[k]
        hi = self._hi[k]
        within = np.clip(t, lo, hi) - lo
        out = self.ini() + self._cum_measure[k] + within
        return float(out) if out.ndim == 0 else out

    def discrete_part(self, t):
        """Total length of the gaps lying before ``t``."""
        t, k = self._require(t)
        out = self._cum_gap[k]
        return float(out) if np.ndim(out) == 0 else out.astype(float)

    # ---- derived scales ----------------------------------------------

    def restrict(self, a: float, b: float) -> "GeneralizedTimeScale":
        if a > b:
            raise TimeScaleError(f"window [{a}, {b}] is reversed")
        out = []
        for s in self.segments:
            lo = max(s.lo, a)
            if s.closed_right or b < s.hi:
                hi = min(s.hi, b)
                if lo <= hi:
                    out.append(Segment(lo, hi))
            elif lo < s.hi:
                out.append(Segment(lo, s.hi, closed_right=False))
        if not out:
            raise EmptyTimeScaleError(f"{self!r} does not meet [{a}, {b}]")
        return GeneralizedTimeScale(out, self.tol_t)

    def truncate_below(self, a: float) -> "GeneralizedTimeScale":
        self._require(float(a))
        return self.restrict(self.ini(), float(a))

    def materialize(self, a: float, b: float) -> "GeneralizedTimeScale":
        return self.restrict(a, b)

    # ---- serialisation -----------------------------------------------

    def to_dict(self) -> dict:
        pairs = [[s.lo, s.hi] for s in self.segments]
        if self.tail == TAIL_UNBOUNDED:
            pairs[-1][1] = None
        return {"segments": pairs, "tail": self.tail, "tol_t": self.tol_t}


class Lattice:
    """The unbounded lattice ``start + stride * Z_+``."""

    def __init__(self, start: float = 0.0, stride: float = 1.0, tol_t: float = TOL_T):
        if not stride > 0:
            raise TimeScaleError("lattice stride must be positive")
        if stride <= tol_t:
            raise TimeScaleError("lattice stride must exceed tol_t")
        self.start = float(start)
        self.stride = float(stride)
        self.tol_t = float(tol_t)

    def __repr__(self):
        return f"Lattice(start={self.start:g}, stride={self.stride:g})"

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return (self.start, self.stride) == (other.start, other.stride)

    def __hash__(self):
        return hash((self.start, self.stride))

    tail = TAIL_UNBOUNDED
    bounded = False
    fin_attained = False

    def ini(self) -> float:
        return self.start

    def fin(self) -> float:
        return math.inf

    def is_time_scale(self) -> bool:
        return True

    def _index(self, t):
        t = np.asarray(t, dtype=float)
        n = np.rint((t - self.start) / self.stride)
        ok = (n >= 0) & (np.abs(t - (self.start + n * self.stride)) <= self.tol_t)
        return n, ok

    def contains(self, t):
        _, ok = self._index(t)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def __contains__(self, t) -> bool:
        return bool(self.contains(float(t)))

    def _require(self, t):
        n, ok = self._index(t)
        if not np.all(ok):
            bad = np.atleast_1d(np.asarray(t, dtype=float))[~np.atleast_1d(ok)][0]
            raise MembershipError(f"t = {bad!r} is not a member of {self!r}")
        return n

    def sigma(self, t: float) -> float:
        n = self._require(float(t))
        return self.start + (float(n) + 1.0) * self.stride

    def gap_points(self, a: float, b: float) -> list[float]:
        if a > b:
            raise TimeScaleError(f"window [{a}, {b}] is reversed")
        n0 = max(0, math.ceil((a - self.tol_t - self.start) / self.stride))
        n1 = math.floor((b + self.tol_t - self.start) / self.stride)
        return [self.start + n * self.stride for n in range(n0, n1 + 1)]

    def continuous_part(self, t):
        self._require(t)
        out = np.full(np.shape(t), self.start)
        return float(out) if out.ndim == 0 else out

    def discrete_part(self, t):
        n = self._require(t)
        out = n * self.stride
        return float(out) if np.ndim(out) == 0 else out

    def restrict(self, a: float, b: float) -> GeneralizedTimeScale:
        pts = self.gap_points(a, b)
        if not pts:
            raise EmptyTimeScaleError(f"{self!r} does not meet [{a}, {b}]")
        return GeneralizedTimeScale.points(pts, self.tol_t)

    materialize = restrict

    def truncate_below(self, a: float) -> GeneralizedTimeScale:
        self._require(float(a))
        return self.restrict(self.start, float(a))

    def to_dict(self) -> dict:
        return {"lattice": {"start": self.start, "stride": self.stride}, "tol_t": self.tol_t}


TimeScaleLike = Union[GeneralizedTimeScale, Lattice]


# ---- module-level operations ---------------------------------------------

def ini(I: TimeScaleLike) -> float:
    return I.ini()


def fin(I: TimeScaleLike) -> float:
    """Supremum of the scale; see ``I.fin_attained`` for membership."""
    return I.fin()


def sigma(I: TimeScaleLike, t: float) -> float:
    """Forward jump operator; ``sigma(Fin) = Fin`` when Fin is attained."""
    return I.sigma(t)


def gap_points(I: TimeScaleLike, a: float, b: float) -> list[float]:
    return I.gap_points(a, b)


def restrict(I: TimeScaleLike, a: float, b: float) -> GeneralizedTimeScale:
    return I.restrict(a, b)


def truncate_below(I: TimeScaleLike, a: float) -> GeneralizedTimeScale:
    return I.truncate_below(a)


def continuous_part(I: TimeScaleLike, t):
    return I.continuous_part(t)


def discrete_part(I: TimeScaleLike, t):
    return I.discrete_part(t)


def is_subinterval(J: TimeScaleLike, I: TimeScaleLike) -> bool:
    """True iff J is a subset of I and I has no points inside J's gaps.

    Equivalently ``[s, t]_J == [s, t]_I`` for every ``s, t`` in J.
    """
    if isinstance(J, Lattice):
        if isinstance(I, Lattice):
            return abs(J.stride - I.stride) <= J.tol_t and bool(I.contains(J.start))
        return False
    if isinstance(I, Lattice):
        if not J.bounded:
            return False
        try:
            I = I.restrict(J.ini(), J.fin())
        except EmptyTimeScaleError:
            return False
    tol = max(J.tol_t, I.tol_t)
    hosts = []
    for seg in J.segments:
        k = int(I.locate(seg.lo))
        if k < 0:
            return False
        host = I.segments[k]
        if math.isinf(seg.hi):
            if not math.isinf(host.hi):
                return False
        elif seg.closed_right:
            if seg.hi > host.hi + tol:
                return False
            if not host.closed_right and seg.hi >= host.hi:
                return False
        elif seg.hi > host.hi + tol:
            return False
        hosts.append(k)
    for n in range(1, len(hosts)):
        # nothing of I may sit strictly inside a gap of J
        prev, seg = J.segments[n - 1], J.segments[n]
        kp, k = hosts[n - 1], hosts[n]
        if k != kp + 1:
            return False
        if abs(I.segments[kp].hi - prev.hi) > tol or abs(I.segments[k].lo - seg.lo) > tol:
            return False
    return True


# ---- serialisation --------------------------------------------------------

def timescale_from_dict(data: dict) -> TimeScaleLike:
    tol = float(data.get("tol_t", TOL_T))
    if "lattice" in data:
        lat = data["lattice"]
        return Lattice(lat["start"], lat["stride"], tol)
    pairs = [[lo, math.inf if hi is None else hi] for lo, hi in data["segments"]]
    return GeneralizedTimeScale.from_pairs(pairs, data.get("tail", TAIL_CLOSED), tol)


def dumps(I: TimeScaleLike) -> str:
    return json.dumps(I.to_dict())


def loads(text: str) -> TimeScaleLike:
    return timescale_from_dict(json.loads(text))


# ---- random generation (tests, CLI) ----------------------------------------

def random_timescale(rng: np.random.Generator, max_segments: int = 20,
                     tail: str | None = None, tol_t: float = TOL_T) -> GeneralizedTimeScale:
    """Random finite union of intervals and isolated points."""
    n = int(rng.integers(1, max_segments + 1))
    t = float(rng.uniform(-5.0, 5.0))
    segs = []
    for k in range(n):
        if rng.random() < 0.3:
            length = 0.0
        else:
            length = float(rng.exponential(1.0))
        segs.append([t, t + length])
        t = t + length + float(rng.uniform(1e-3, 2.0))
    if tail is None:
        tail = rng.choice([TAIL_CLOSED, TAIL_HALF_OPEN, TAIL_UNBOUNDED])
    if tail == TAIL_HALF_OPEN and segs[-1][0] == segs[-1][1]:
        segs[-1][1] = segs[-1][0] + 0.5
    return GeneralizedTimeScale.from_pairs(segs, str(tail), tol_t)


def random_members(I: GeneralizedTimeScale, rng: np.random.Generator, n: int,
                   horizon: float = 5.0) -> np.ndarray:
    """``n`` member times, a mix of segment endpoints and interior points."""
    out = []
    for _ in range(n):
        seg = I.segments[int(rng.integers(len(I.segments)))]
        hi = seg.hi if not math.isinf(seg.hi) else seg.lo + horizon
        u = rng.random()
        if u < 0.2 or seg.is_point:
            t = seg.lo
        elif u < 0.4 and seg.closed_right and not math.isinf(seg.hi):
            t = seg.hi
        else:
            t = seg.lo + float(rng.uniform(0.0, 1.0)) * (hi - seg.lo)
            if not seg.closed_right and t >= hi:
                t = seg.lo
        out.append(t)
    return np.asarray(out)
