"""Signals on generalized time scales.

A :class:`Signal` stores, for every segment of its domain, a strictly
increasing sample grid and one value vector per sample.  Bounded segments
always carry samples at both endpoints, so every right-scattered point and
its image under sigma are recorded.  Values between grid points are linear
interpolations inside a segment; across a gap nothing is defined until
:func:`extend` fills it with the chord.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .timescale import (
    TAIL_CLOSED,
    TAIL_HALF_OPEN,
    GeneralizedTimeScale,
    Lattice,
    MembershipError,
    Segment,
    TimeScaleError,
)


class SignalError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Signal:
    """Real-vector samples on a generalized time scale.

    Parameters
    ----------
    dom : GeneralizedTimeScale
        Domain.  A :class:`~hybridts.timescale.Lattice` must be restricted
        to a finite window first.
    grids : sequence of array_like
        One strictly increasing grid per segment of ``dom``.
    values : sequence of array_like
        One ``(len(grid), p)`` array per segment (1-D arrays mean ``p = 1``).
    meta : mapping, optional
        Free-form provenance (solver termination reason, closure points...).
    """

    def __init__(self, dom: GeneralizedTimeScale, grids: Sequence, values: Sequence,
                 meta: Mapping | None = None):
        if isinstance(dom, Lattice):
            raise SignalError("restrict a lattice domain to a finite window before sampling on it")
        if len(grids) != len(dom.segments) or len(values) != len(dom.segments):
            raise SignalError("need exactly one grid and one value block per segment")
        tol = dom.tol_t
        ts, xs, seg_ids = [], [], []
        p = None
        for k, (seg, g, v) in enumerate(zip(dom.segments, grids, values)):
            g = np.asarray(g, dtype=float).ravel()
            v = np.asarray(v, dtype=float)
            if v.ndim == 1:
                v = v.reshape(-1, 1) if g.size != 1 or v.size == 1 else v.reshape(1, -1)
            if v.ndim != 2 or v.shape[0] != g.size:
                raise SignalError(f"segment {k}: {g.size} grid times but values of shape {v.shape}")
            if p is None:
                p = v.shape[1]
            elif v.shape[1] != p:
                raise SignalError("all value vectors must share one dimension")
            if g.size == 0:
                raise SignalError(f"segment {k} has an empty grid")
            if np.any(np.diff(g) <= 0):
                raise SignalError(f"segment {k}: grid is not strictly increasing")
            if abs(g[0] - seg.lo) > tol:
                raise SignalError(f"segment {k}: grid must start at the segment start {seg.lo}")
            if seg.closed_right and abs(g[-1] - seg.hi) > tol:
                raise SignalError(f"segment {k}: grid must end at the segment end {seg.hi}")
            if g[-1] > seg.hi + tol or (not seg.closed_right and g[-1] >= seg.hi):
                raise SignalError(f"segment {k}: grid leaves the segment")
            ts.append(g)
            xs.append(v)
            seg_ids.append(np.full(g.size, k, dtype=np.int64))
        self.dom = dom
        self.t = _frozen(np.concatenate(ts))
        self.x = _frozen(np.concatenate(xs, axis=0))
        self.seg = _frozen(np.concatenate(seg_ids))
        self.offsets = _frozen(np.concatenate(([0], np.cumsum([g.size for g in ts]))))
        self.meta = dict(meta or {})

    @classmethod
    def from_flat(cls, dom: GeneralizedTimeScale, t, x, meta: Mapping | None = None) -> "Signal":
        """Split flat ``(t, x)`` samples into per-segment blocks."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        k = dom.locate(t)
        if np.any(k < 0):
            raise MembershipError("some sample times are not members of the domain")
        grids, values = [], []
        for j in range(len(dom.segments)):
            sel = k == j
            grids.append(t[sel])
            values.append(x[sel])
        return cls(dom, grids, values, meta)

    # ---- structure ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.t.shape[0]

    def __repr__(self):
        return f"Signal(p={self.dim}, samples={len(self)}, dom={self.dom!r})"

    def grid(self, k: int) -> np.ndarray:
        return self.t[self.offsets[k]:self.offsets[k + 1]]

    def block(self, k: int) -> np.ndarray:
        return self.x[self.offsets[k]:self.offsets[k + 1]]

    def right_scattered_mask(self) -> np.ndarray:
        """Grid points that are right ends of non-final segments."""
        mask = np.zeros(len(self), dtype=bool)
        mask[self.offsets[1:-1] - 1] = True
        return mask

    def with_values(self, x, meta: Mapping | None = None) -> "Signal":
        """Same domain and grids, new values (``len(self)`` rows)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.shape[0] != len(self):
            raise SignalError("value count does not match the grid")
        blocks = [x[self.offsets[k]:self.offsets[k + 1]] for k in range(len(self.dom.segments))]
        grids = [self.grid(k) for k in range(len(self.dom.segments))]
        return Signal(self.dom, grids, blocks, self.meta if meta is None else meta)

    def continuous_times(self) -> np.ndarray:
        return np.asarray(self.dom.continuous_part(self.t), dtype=float)

    def discrete_times(self) -> np.ndarray:
        return np.asarray(self.dom.discrete_part(self.t), dtype=float)

    # ---- evaluation ---------------------------------------------------

    def sample(self, t: float) -> np.ndarray:
        t = float(t)
        k = int(self.dom.locate(t))
        if k < 0:
            raise MembershipError(f"t = {t!r} is not in the signal's domain {self.dom!r}")
        g = self.grid(k)
        blk = self.block(k)
        tol = self.dom.tol_t
        i = int(np.searchsorted(g, t))
        for j in (i - 1, i):
            if 0 <= j < g.size and abs(g[j] - t) <= tol:
                return blk[j].copy()
        if i == 0 or i >= g.size:
            raise SignalError(f"t = {t!r} lies beyond the recorded samples of segment {k}")
        w = (t - g[i - 1]) / (g[i] - g[i - 1])
        return blk[i - 1] + w * (blk[i] - blk[i - 1])

    __call__ = sample


def sample(sig: Signal, t: float) -> np.ndarray:
    return sig.sample(t)


def extend(sig: Signal) -> Signal:
    """Fill every gap ``(s, sigma(s))`` with the chord from x(s) to x(sigma(s)).

    The result lives on the single interval ``[Ini, Fin]`` (half-open if the
    domain's tail is) and keeps every original sample.
    """
    dom = sig.dom
    if not dom.bounded:
        raise SignalError("cannot extend a signal on an unbounded domain")
    seg = Segment(dom.ini(), dom.fin(), closed_right=dom.tail != TAIL_HALF_OPEN)
    if seg.is_point:
        seg = Segment(seg.lo, seg.hi)
    new_dom = GeneralizedTimeScale([seg], dom.tol_t)
    return Signal(new_dom, [sig.t], [sig.x], sig.meta)


def restrict_signal(sig: Signal, a: float, b: float) -> Signal:
    """The part of ``sig`` on ``[a, b]``; cut points get interpolated samples."""
    dom = sig.dom.restrict(a, b)
    grids, values = [], []
    tol = dom.tol_t
    for seg in dom.segments:
        inside = (sig.t >= seg.lo - tol) & (sig.t <= seg.hi + tol)
        g = sig.t[inside]
        v = sig.x[inside]
        if g.size == 0 or abs(g[0] - seg.lo) > tol:
            g = np.concatenate(([seg.lo], g))
            v = np.concatenate((sig.sample(seg.lo)[None, :], v))
        if abs(g[-1] - seg.hi) > tol:
            g = np.concatenate((g, [seg.hi]))
            v = np.concatenate((v, sig.sample(seg.hi)[None, :]))
        grids.append(g)
        values.append(v)
    return Signal(dom, grids, values, sig.meta)


def delta_derivative(sig: Signal, t: float) -> np.ndarray:
    """Delta derivative at a member ``t``.

    Right-scattered: the exact difference quotient over the gap.  Right-dense:
    the forward one-sided quotient to the next grid point of the segment (the
    backward one at a closed Fin).
    """
    dom = sig.dom
    t = float(t)
    s = dom.sigma(t)
    tol = dom.tol_t
    if s > t + tol:
        return (sig.sample(s) - sig.sample(t)) / (s - t)
    k = int(dom.locate(t))
    g = sig.grid(k)
    blk = sig.block(k)
    i = int(np.searchsorted(g, t + tol, side="right"))
    if i < g.size:
        return (blk[i] - sig.sample(t)) / (g[i] - t)
    j = int(np.searchsorted(g, t - tol, side="left")) - 1
    if j < 0:
        raise SignalError(f"no forward or backward information at t = {t!r} (isolated final point)")
    return (sig.sample(t) - blk[j]) / (t - g[j])


def delta_derivatives(sig: Signal) -> np.ndarray:
    """Delta derivative at every grid point, same rules as :func:`delta_derivative`.

    Rows are NaN where no quotient exists (an isolated final point).
    """
    t, x = sig.t, sig.x
    n = len(sig)
    out = np.full_like(x, np.nan)
    if n < 2:
        return out
    # forward quotient to the next sample; across a gap this is exactly the
    # right-scattered quotient because the next sample sits at sigma(t)
    out[:-1] = (x[1:] - x[:-1]) / (t[1:] - t[:-1])[:, None]
    if sig.offsets[-1] - sig.offsets[-2] >= 2:
        out[-1] = out[-2]
    return out


# ---- pointwise maps ---------------------------------------------------------

def vectorized(fn: Callable) -> Callable:
    """Mark a pointwise map as accepting an ``(n, p)`` array and returning ``(n,)``."""
    fn.vectorized = True
    return fn


def evaluate_pointwise(fn: Callable, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if getattr(fn, "vectorized", False):
        return np.asarray(fn(X), dtype=float).reshape(X.shape[0])
    return np.fromiter((fn(row) for row in X), dtype=float, count=X.shape[0])


@vectorized
def euclidean_norm(X):
    X = np.asarray(X, dtype=float)
    return np.sqrt(np.sum(X * X, axis=-1))


def coordinate_subspace_distance(zero_axes: Iterable[int]) -> Callable:
    """Distance to the set where the given coordinates vanish and the rest are free."""
    axes = list(zero_axes)

    @vectorized
    def dist(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.sqrt(np.sum(X[:, axes] ** 2, axis=-1))

    return dist


def point_set_distance(points) -> Callable:
    """Distance to a finite set of points: the infimum of Euclidean distances."""
    P = np.atleast_2d(np.asarray(points, dtype=float))

    @vectorized
    def dist(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - P[None, :, :]
        return np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))

    return dist


def pseudo_distance(sig: Signal, d: Callable) -> Signal:
    """Scalar signal ``d(x(t))`` with the same domain and grids as ``sig``."""
    vals = evaluate_pointwise(d, sig.x)
    if np.any(vals < 0) or np.any(np.isnan(vals)):
        raise SignalError("a pseudo distance must be non-negative")
    return sig.with_values(vals)


# ---- real-time projections ----------------------------------------------------

@dataclass
class RealTimeTrace:
    """Set-valued trace indexed by real (continuous-part) time."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        s = [e[0] for e in self.entries]
        if any(b <= a for a, b in zip(s, s[1:])):
            raise SignalError("real-time trace instants must be strictly increasing")

    def __len__(self):
        return len(self.entries)

    def times(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries])

    def at(self, s: float, tol: float = 1e-9) -> np.ndarray:
        times = self.times()
        i = int(np.argmin(np.abs(times - s)))
        if abs(times[i] - s) > tol:
            raise KeyError(s)
        return self.entries[i][1]

    def to_json(self) -> str:
        return json.dumps([{"s": s, "values": np.asarray(v).tolist()} for s, v in self.entries])

    @classmethod
    def from_json(cls, text: str) -> "RealTimeTrace":
        return cls([(e["s"], np.asarray(e["values"], dtype=float)) for e in json.loads(text)])


# ---- trace CSV ----------------------------------------------------------------

def write_trace_csv(sig: Signal, fh) -> None:
    """Write ``t,t_c,t_d,x0..x{p-1}`` rows, one per grid point."""
    close = False
    if not hasattr(fh, "write"):
        fh = open(fh, "w", newline="")
        close = True
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "t_c", "t_d"] + [f"x{i}" for i in range(sig.dim)])
        tc = sig.continuous_times()
        td = sig.discrete_times()
        for i in range(len(sig)):
            w.writerow([repr(float(sig.t[i])), repr(float(tc[i])), repr(float(td[i]))]
                       + [repr(float(v)) for v in sig.x[i]])
    finally:
        if close:
            fh.close()


def trace_csv_text(sig: Signal) -> str:
    buf = io.StringIO()
    write_trace_csv(sig, buf)
    return buf.getvalue()


def read_trace_csv(fh, tol_t: float = 1e-9, tail: str = TAIL_CLOSED) -> Signal:
    """Rebuild a signal from trace CSV; segments split where ``t_d`` jumps."""
    close = False
    if not hasattr(fh, "read"):
        fh = open(fh, newline="")
        close = True
    try:
        rows = list(csv.reader(fh))
    finally:
        if close:
            fh.close()
    header, body = rows[0], rows[1:]
    if header[:3] != ["t", "t_c", "t_d"]:
        raise SignalError(f"unexpected trace header {header!r}")
    data = np.array([[float(v) for v in r] for r in body], dtype=float)
    if data.size == 0:
        raise SignalError("empty trace")
    t, td, x = data[:, 0], data[:, 2], data[:, 3:]
    breaks = np.flatnonzero(np.diff(td) > tol_t) + 1
    bounds = np.concatenate(([0], breaks, [len(t)]))
    pairs = [[t[a], t[b - 1]] for a, b in zip(bounds[:-1], bounds[1:])]
    try:
        dom = GeneralizedTimeScale.from_pairs(pairs, tail, tol_t)
    except TimeScaleError as exc:
        raise SignalError(f"trace does not describe a valid domain: {exc}") from None
    grids = [t[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    vals = [x[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    return Signal(dom, grids, vals)
