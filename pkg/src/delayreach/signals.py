"""Closed-form piecewise input signals.

Signals are exact descriptions, never sampled arrays: the integrator
evaluates them at arbitrary times with no interpolation error, and their
breakpoints are known so step boundaries never straddle a discontinuity.
All signals are vector valued (scalars are 1-vectors) and defined for all
t >= 0; piecewise-constant signals use the right-continuous convention at
breakpoints.
"""

from __future__ import annotations

import numpy as np


class OutOfDomain(ValueError):
    """Signal evaluated outside its domain."""


class DwellTooSmall(ValueError):
    """Smoothing width too large for the schedule's shortest piece."""


def _as_value(v) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValueError("signal values must be scalars or 1-d vectors")
    return arr


class Signal:
    """Base class; concrete signals implement eval/breakpoints/sup_norm."""

    dim: int

    def eval(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def eval_left(self, t: float) -> np.ndarray:
        """Limit from the left; differs from eval only at jump points."""
        return self.eval(t)

    def breakpoints(self, lo: float, hi: float) -> np.ndarray:
        """Discontinuities and kinks strictly inside (lo, hi), sorted."""
        raise NotImplementedError

    def sup_norm(self, lo: float, hi: float) -> float:
        """Essential supremum of |s(t)|_inf over [lo, hi]."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class Constant(Signal):
    def __init__(self, value):
        self.value = _as_value(value)
        self.dim = self.value.size

    def eval(self, t):
        if t < 0.0:
            raise OutOfDomain(f"t={t} < 0")
        return self.value

    def breakpoints(self, lo, hi):
        return np.empty(0)

    def sup_norm(self, lo, hi):
        return float(np.abs(self.value).max())

    def to_json(self):
        return {"kind": "constant", "value": self.value.tolist()}


class PiecewiseConstant(Signal):
    """len(values) pieces separated by len(values)-1 strictly increasing breaks.

    Piece i holds on [breaks[i-1], breaks[i]); the first piece extends to the
    left of breaks[0] and the last to the right of breaks[-1].
    """

    def __init__(self, values, breaks):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        self.breaks = np.asarray(breaks, dtype=float)
        if len(self.breaks) != len(self.values) - 1:
            raise ValueError("need exactly one breakpoint between consecutive pieces")
        if len(self.breaks) > 1 and not (np.diff(self.breaks) > 0).all():
            raise ValueError("breakpoints must be strictly increasing")
        self.dim = self.values.shape[1]

    def _piece(self, t: float) -> int:
        return int(np.searchsorted(self.breaks, t, side="right"))

    def eval(self, t):
        if t < 0.0:
            raise OutOfDomain(f"t={t} < 0")
        return self.values[self._piece(t)]

    def eval_left(self, t):
        return self.values[int(np.searchsorted(self.breaks, t, side="left"))]

    def breakpoints(self, lo, hi):
        b = self.breaks
        return b[(b > lo) & (b < hi)]

    def sup_norm(self, lo, hi):
        if hi <= lo:
            return float(np.abs(self.eval(max(lo, 0.0))).max())
        i0 = self._piece(lo)
        # piece index of the last piece with positive overlap of (lo, hi)
        i1 = int(np.searchsorted(self.breaks, hi, side="left"))
        return float(np.abs(self.values[i0 : i1 + 1]).max())

    def min_dwell(self) -> float:
        if len(self.breaks) < 2:
            return np.inf
        return float(np.diff(self.breaks).min())

    def to_json(self):
        return {
            "kind": "piecewise_constant",
            "values": self.values.tolist(),
            "breaks": self.breaks.tolist(),
        }


class PiecewiseLinear(Signal):
    """Continuous broken line through (knots[i], values[i]).

    Constant extension outside the knot range keeps the signal defined and
    continuous on all of [0, inf).
    """

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if len(self.knots) != len(self.values):
            raise ValueError("one value per knot")
        if len(self.knots) > 1 and not (np.diff(self.knots) > 0).all():
            raise ValueError("knots must be strictly increasing")
        self.dim = self.values.shape[1]

    def eval(self, t):
        if t < 0.0:
            raise OutOfDomain(f"t={t} < 0")
        return self.eval_unclamped(t)

    def eval_unclamped(self, t):
        k = self.knots
        if t <= k[0]:
            return self.values[0]
        if t >= k[-1]:
            return self.values[-1]
        i = int(np.searchsorted(k, t, side="right")) - 1
        w = (t - k[i]) / (k[i + 1] - k[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def breakpoints(self, lo, hi):
        k = self.knots
        return k[(k > lo) & (k < hi)]

    def sup_norm(self, lo, hi):
        k = self.knots
        inside = k[(k > lo) & (k < hi)]
        cand = [self.eval_unclamped(lo), self.eval_unclamped(hi)]
        cand.extend(self.values[np.isin(k, inside)])
        return float(max(np.abs(c).max() for c in cand))

    def to_json(self):
        return {
            "kind": "piecewise_linear",
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
        }


class ExponentialTail(Signal):
    """value * exp(-rate * (t - start)) for t >= start, frozen before start."""

    def __init__(self, value, rate, start=0.0):
        self.value = _as_value(value)
        self.rate = float(rate)
        self.start = float(start)
        self.dim = self.value.size

    def eval(self, t):
        if t < 0.0:
            raise OutOfDomain(f"t={t} < 0")
        if t <= self.start:
            return self.value
        return self.value * np.exp(-self.rate * (t - self.start))

    def breakpoints(self, lo, hi):
        if lo < self.start < hi:
            return np.array([self.start])
        return np.empty(0)

    def sup_norm(self, lo, hi):
        # |value| e^{-rate t} is monotone on either side of `start`
        peak = float(np.abs(self.value).max())
        if self.rate >= 0.0:
            if hi <= self.start or lo <= self.start:
                return peak
            return peak * float(np.exp(-self.rate * (lo - self.start)))
        if hi <= self.start:
            return peak
        return peak * float(np.exp(-self.rate * (hi - self.start)))

    def to_json(self):
        return {
            "kind": "exponential_tail",
            "value": self.value.tolist(),
            "rate": self.rate,
            "start": self.start,
        }


class Concatenation(Signal):
    """`first` on [0, t_switch), `second` on [t_switch, inf), absolute time."""

    def __init__(self, first: Signal, second: Signal, t_switch: float):
        if first.dim != second.dim:
            raise ValueError("dimension mismatch")
        self.first = first
        self.second = second
        self.t_switch = float(t_switch)
        self.dim = first.dim

    def eval(self, t):
        if t < self.t_switch:
            return self.first.eval(t)
        return self.second.eval(t)

    def eval_left(self, t):
        if t <= self.t_switch:
            return self.first.eval_left(t)
        return self.second.eval_left(t)

    def breakpoints(self, lo, hi):
        pts = [self.first.breakpoints(lo, min(hi, self.t_switch))]
        if lo < self.t_switch < hi:
            pts.append(np.array([self.t_switch]))
        pts.append(self.second.breakpoints(max(lo, self.t_switch), hi))
        return np.unique(np.concatenate(pts))

    def sup_norm(self, lo, hi):
        out = 0.0
        if lo < self.t_switch:
            out = self.first.sup_norm(lo, min(hi, self.t_switch))
        if hi > self.t_switch:
            out = max(out, self.second.sup_norm(max(lo, self.t_switch), hi))
        return out

    def to_json(self):
        return {
            "kind": "concatenation",
            "first": self.first.to_json(),
            "second": self.second.to_json(),
            "t_switch": self.t_switch,
        }


class TimeShift(Signal):
    """inner evaluated at t - shift."""

    def __init__(self, inner: Signal, shift: float):
        self.inner = inner
        self.shift = float(shift)
        self.dim = inner.dim

    def eval(self, t):
        return self.inner.eval(t - self.shift)

    def eval_left(self, t):
        return self.inner.eval_left(t - self.shift)

    def breakpoints(self, lo, hi):
        return self.inner.breakpoints(lo - self.shift, hi - self.shift) + self.shift

    def sup_norm(self, lo, hi):
        return self.inner.sup_norm(lo - self.shift, hi - self.shift)

    def to_json(self):
        return {"kind": "time_shift", "inner": self.inner.to_json(), "shift": self.shift}


class Window(Signal):
    """inner on [lo, hi), zero elsewhere; inner is never evaluated outside."""

    def __init__(self, inner: Signal, lo: float, hi: float):
        if not hi > lo:
            raise ValueError("empty window")
        self.inner = inner
        self.lo = float(lo)
        self.hi = float(hi)
        self.dim = inner.dim

    def eval(self, t):
        if self.lo <= t < self.hi:
            return self.inner.eval(t)
        return np.zeros(self.dim)

    def eval_left(self, t):
        if self.lo < t <= self.hi:
            return self.inner.eval_left(t)
        return np.zeros(self.dim)

    def breakpoints(self, lo, hi):
        pts = [self.inner.breakpoints(max(lo, self.lo), min(hi, self.hi))]
        edges = [e for e in (self.lo, self.hi) if lo < e < hi]
        if edges:
            pts.append(np.array(edges))
        return np.unique(np.concatenate(pts)) if pts else np.empty(0)

    def sup_norm(self, lo, hi):
        a, b = max(lo, self.lo), min(hi, self.hi)
        return self.inner.sup_norm(a, b) if b > a else 0.0

    def to_json(self):
        return {
            "kind": "zero_outside_interval",
            "inner": self.inner.to_json(),
            "lo": self.lo,
            "hi": self.hi,
        }


def concat(v: Signal, w: Signal, t_switch: float) -> Signal:
    """Concatenate two signals at the given instant (right piece owns it)."""
    return Concatenation(v, w, t_switch)


def sup_norm(s: Signal, lo: float, hi: float) -> float:
    return s.sup_norm(lo, hi)


def smooth_square(
    schedule: PiecewiseConstant, delta: float, strict: bool = True
) -> PiecewiseLinear:
    """Continuous trapezoidal smoothing of a piecewise-constant schedule.

    Exact centered moving average of width `delta`: the result is piecewise
    linear with kinks at breakpoint +- delta/2, equals the schedule outside
    those ramps, never exceeds its sup norm, and converges to it pointwise
    a.e. as delta -> 0.

    With strict=True the width must be below half the minimum dwell so every
    ramp is an isolated linear crossing of a single breakpoint. Non-strict
    mode keeps the moving average exact even when ramps overlap, which is
    what the diverging-peaks sweep needs.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if strict and not delta < 0.5 * schedule.min_dwell():
        raise DwellTooSmall(
            f"delta={delta} not below half the minimum dwell {schedule.min_dwell()}"
        )
    breaks = schedule.breaks
    values = schedule.values
    if len(breaks) == 0:
        return PiecewiseLinear(np.array([0.0]), values[:1].copy())

    # cumulative integral of the schedule from breaks[0], constant-extended;
    # the piece between breaks[i] and breaks[i+1] carries values[i+1]
    seg = values[1:-1] * np.diff(breaks)[:, None] if len(breaks) > 1 else np.zeros((0, schedule.dim))
    cum = np.vstack([np.zeros((1, schedule.dim)), np.cumsum(seg, axis=0)])

    def integral(t: float) -> np.ndarray:
        # integral of the schedule from breaks[0] to t (t may be on either side)
        if t <= breaks[0]:
            return values[0] * (t - breaks[0])
        if t >= breaks[-1]:
            return cum[-1] + values[-1] * (t - breaks[-1])
        i = int(np.searchsorted(breaks, t, side="right")) - 1
        return cum[i] + values[i + 1] * (t - breaks[i])

    half = 0.5 * delta
    knots = np.unique(np.concatenate([breaks - half, breaks + half]))
    vals = np.array([(integral(k + half) - integral(k - half)) / delta for k in knots])
    return PiecewiseLinear(knots, vals)


def from_json(obj: dict) -> Signal:
    """Rebuild a signal from its JSON description."""
    kind = obj["kind"]
    if kind == "constant":
        return Constant(obj["value"])
    if kind == "piecewise_constant":
        return PiecewiseConstant(obj["values"], obj["breaks"])
    if kind == "piecewise_linear":
        return PiecewiseLinear(obj["knots"], obj["values"])
    if kind == "exponential_tail":
        return ExponentialTail(obj["value"], obj["rate"], obj.get("start", 0.0))
    if kind == "concatenation":
        return Concatenation(
            from_json(obj["first"]), from_json(obj["second"]), obj["t_switch"]
        )
    if kind == "time_shift":
        return TimeShift(from_json(obj["inner"]), obj["shift"])
    if kind == "zero_outside_interval":
        return Window(from_json(obj["inner"]), obj["lo"], obj["hi"])
    raise ValueError(f"unknown signal kind {kind!r}")
