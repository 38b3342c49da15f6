"""Adaptive method-of-steps integration for discrete-delay systems.

A Dormand-Prince 5(4) embedded pair drives both delayed and nondelayed
systems. Delayed state lookups are served from the initial history on
[-tau, 0] and from the trajectory's dense output afterwards; a step never
extends past the shortest delay, so lookups never touch the step being
computed. Step boundaries are forced at every input breakpoint and at the
first few multiples of the shortest delay, where the solution loses
smoothness. Unboundedness is the only failure mode of the underlying
solution concept, so crossing a norm threshold (or a step-size collapse
while the norm is growing) is reported as a finite-escape outcome, not as
an error.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .signals import Constant, Signal


class BadHistoryDomain(ValueError):
    """History domain does not match the system's maximum delay."""


class SpanTooShort(ValueError):
    """Trajectory does not cover the requested history window."""


class StepSizeCollapse(RuntimeError):
    """Error test kept failing below h_min while the state was not growing."""


# Dormand-Prince 5(4) tableau (FSAL; the 5th-order solution is propagated).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BSTAR = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _BSTAR

# Coefficients of the 4th-order continuous extension: the dense-output
# polynomial is y(t0 + theta*h) = y0 + h * (K^T P) @ [theta, ..., theta^4],
# with K the 7 stage derivatives of the accepted step.
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

# 5-point Gauss-Legendre nodes/weights on [0, 1], used by the residual audit
_GL_X = (1.0 + np.array([-0.9061798459386640, -0.5384693101056831, 0.0,
                         0.5384693101056831, 0.9061798459386640])) / 2.0
_GL_W = np.array([0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                  0.4786286704993665, 0.2369268850561891]) / 2.0


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-9
    h_min: float = 1e-12
    h_max: Optional[float] = None
    escape_threshold: float = 1e6
    max_steps: int = 5_000_000
    first_step: Optional[float] = None
    #: force step boundaries at k*tau_1 for k up to this count; beyond that
    #: the solution is smooth enough for the 5th-order pair
    delay_multiples: int = 8


def _hermite_sup(y0, y1, f0, f1, h) -> float:
    """Exact sup of |cubic Hermite|_inf over one segment, per component."""
    best = max(float(np.abs(y0).max()), float(np.abs(y1).max()))
    # hermite in theta: p = a theta^3 + b theta^2 + c theta + d
    a = 2.0 * (y0 - y1) + h * (f0 + f1)
    b = -3.0 * (y0 - y1) - h * (2.0 * f0 + f1)
    c = h * f0
    for i in range(len(y0)):
        aa, bb, cc = 3.0 * a[i], 2.0 * b[i], c[i]
        if aa == 0.0:
            roots = [] if bb == 0.0 else [-cc / bb]
        else:
            disc = bb * bb - 4.0 * aa * cc
            if disc < 0.0:
                continue
            s = math.sqrt(disc)
            roots = [(-bb - s) / (2.0 * aa), (-bb + s) / (2.0 * aa)]
        for r in roots:
            if 0.0 < r < 1.0:
                val = ((a[i] * r + b[i]) * r + c[i]) * r + y0[i]
                best = max(best, abs(val))
    return best


def _quartic_eval(y0, q, th):
    """Dense-output value at fraction th of a segment with coefficients q."""
    return y0 + th * (q[0] + th * (q[1] + th * (q[2] + th * q[3])))


def _quartic_sup(y0, q) -> float:
    """Exact sup of |dense output|_inf over one segment, per component.

    Interior extrema are roots of the cubic derivative of the quartic
    segment polynomial.
    """
    y1 = y0 + q[0] + q[1] + q[2] + q[3]
    best = max(float(np.abs(y0).max()), float(np.abs(y1).max()))
    for i in range(len(y0)):
        coeffs = [4.0 * q[3][i], 3.0 * q[2][i], 2.0 * q[1][i], q[0][i]]
        while coeffs and coeffs[0] == 0.0:
            coeffs = coeffs[1:]
        if len(coeffs) < 2:
            continue
        for r in np.roots(coeffs):
            if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0:
                th = float(r.real)
                val = y0[i] + th * (q[0][i] + th * (q[1][i] + th * (q[2][i] + th * q[3][i])))
                best = max(best, abs(val))
    return best


class Trajectory:
    """Dense-output solution: one 4th-order polynomial per accepted step.

    Nodes carry the state plus one-sided derivatives; segment polynomials
    come from the stage derivatives of the step that produced them, so a
    segment ending at an input discontinuity interpolates with the correct
    left limit.
    """

    def __init__(self, ts, ys, f_out, f_in, errs, qs):
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.f_out = np.asarray(f_out, dtype=float)  # derivative leaving node i
        self.f_in = np.asarray(f_in, dtype=float)  # derivative arriving at node i
        self.errs = np.asarray(errs, dtype=float)  # accepted local error estimates
        self.qs = np.asarray(qs, dtype=float)  # (n_seg, 4, dim) segment coefficients

    @property
    def t_start(self) -> float:
        return float(self.ts[0])

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    @property
    def dim(self) -> int:
        return self.ys.shape[1]

    def _segment(self, t: float) -> int:
        i = int(np.searchsorted(self.ts, t, side="right")) - 1
        return min(max(i, 0), len(self.ts) - 2)

    def eval(self, t: float) -> np.ndarray:
        if not (self.t_start - 1e-12 <= t <= self.t_end + 1e-12):
            raise SpanTooShort(f"t={t} outside [{self.t_start}, {self.t_end}]")
        if len(self.ts) == 1:
            return self.ys[0]
        i = self._segment(t)
        if t == self.ts[i + 1]:
            return self.ys[i + 1]
        th = (t - self.ts[i]) / (self.ts[i + 1] - self.ts[i])
        return _quartic_eval(self.ys[i], self.qs[i], th)

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def eval_deriv(self, t: float) -> np.ndarray:
        i = self._segment(t)
        h = self.ts[i + 1] - self.ts[i]
        th = (t - self.ts[i]) / h
        q = self.qs[i]
        return (q[0] + th * (2.0 * q[1] + th * (3.0 * q[2] + th * 4.0 * q[3]))) / h

    def sup_norm(self, lo: float, hi: float) -> float:
        """Exact sup of |x(t)|_inf over [lo, hi] under the dense output."""
        lo = max(lo, self.t_start)
        hi = min(hi, self.t_end)
        if hi < lo:
            raise SpanTooShort("empty window")
        i0, i1 = self._segment(lo), self._segment(hi)
        best = max(float(np.abs(self.eval(lo)).max()), float(np.abs(self.eval(hi)).max()))
        for i in range(i0, i1 + 1):
            a = max(lo, self.ts[i])
            b = min(hi, self.ts[i + 1])
            if b <= a:
                continue
            if a == self.ts[i] and b == self.ts[i + 1]:
                best = max(best, _quartic_sup(self.ys[i], self.qs[i]))
            else:
                for t in np.linspace(a, b, 9):
                    best = max(best, float(np.abs(self.eval(t)).max()))
        return best

    def last_time_above(self, level: float) -> float:
        """Largest t with |x(t)|_inf > level, or t_start if never above."""
        for i in range(len(self.ts) - 2, -1, -1):
            seg = _quartic_sup(self.ys[i], self.qs[i])
            if seg > level:
                # refine inside the segment from the right
                lo, hi = self.ts[i], self.ts[i + 1]
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if self.sup_norm(mid, self.ts[i + 1]) > level:
                        lo = mid
                    else:
                        hi = mid
                return hi
        return self.t_start


class _TrajBuilder:
    def __init__(self, t0: float, y0: np.ndarray, f0: np.ndarray):
        self.ts = [t0]
        self.ys = [y0.copy()]
        self.f_out = [f0.copy()]
        self.f_in = [f0.copy()]
        self.errs: list[float] = []
        self.qs: list[np.ndarray] = []

    def append(self, t, y, f_in, f_out, err, q):
        self.ts.append(float(t))
        self.ys.append(y.copy())
        self.f_in.append(f_in.copy())
        self.f_out.append(f_out.copy())
        self.errs.append(float(err))
        self.qs.append(q)

    def replace_last_f_out(self, f):
        self.f_out[-1] = f.copy()

    def eval(self, t: float) -> np.ndarray:
        if len(self.ts) == 1:
            return self.ys[0]
        i = bisect.bisect_right(self.ts, t) - 1
        i = min(max(i, 0), len(self.ts) - 2)
        if t == self.ts[i + 1]:
            return self.ys[i + 1]
        th = (t - self.ts[i]) / (self.ts[i + 1] - self.ts[i])
        return _quartic_eval(self.ys[i], self.qs[i], th)

    def freeze(self) -> Trajectory:
        qs = self.qs if self.qs else np.empty((0, 4, len(self.ys[0])))
        return Trajectory(self.ts, self.ys, self.f_out, self.f_in, self.errs, qs)


class HistoryFn:
    """Continuous function on [-tau, 0], piecewise linear or cubic Hermite."""

    def __init__(self, knots, values, derivs=None):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        self.derivs = None if derivs is None else np.asarray(derivs, dtype=float)
        if len(self.knots) < 1 or len(self.knots) != len(self.values):
            raise ValueError("one value per knot")
        if len(self.knots) > 1 and not (np.diff(self.knots) > 0).all():
            raise ValueError("knots must be strictly increasing")
        if abs(float(self.knots[-1])) > 1e-9:
            raise BadHistoryDomain("history must end at time 0")

    @property
    def tau(self) -> float:
        return -float(self.knots[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, value, tau: float) -> "HistoryFn":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if tau <= 0.0:
            return cls(np.array([0.0]), v.reshape(1, -1))
        return cls(np.array([-tau, 0.0]), np.vstack([v, v]))

    @classmethod
    def from_signal(cls, sig: Signal, tau: float, shift: float = 0.0) -> "HistoryFn":
        """Sample sig(s + shift) for s in [-tau, 0] at its exact breakpoints.

        Exact for piecewise-linear signals; other kinds are refined on a
        64-point grid per smooth span.
        """
        from .signals import PiecewiseLinear

        inner = sig.breakpoints(shift - tau, shift)
        pts = np.unique(np.concatenate([[shift - tau, shift], inner]))
        if not isinstance(sig, PiecewiseLinear):
            fine = [np.linspace(pts[i], pts[i + 1], 65) for i in range(len(pts) - 1)]
            pts = np.unique(np.concatenate(fine))
        vals = np.array([sig.eval(p) for p in pts])
        return cls(pts - shift, vals)

    def eval(self, s: float) -> np.ndarray:
        k = self.knots
        if s < k[0] - 1e-9 or s > k[-1] + 1e-9:
            raise BadHistoryDomain(f"history evaluated at {s} outside [{k[0]}, 0]")
        s = min(max(s, k[0]), k[-1])
        if len(k) == 1:
            return self.values[0]
        i = int(np.searchsorted(k, s, side="right")) - 1
        i = min(max(i, 0), len(k) - 2)
        h = k[i + 1] - k[i]
        th = (s - k[i]) / h
        if self.derivs is None:
            return (1.0 - th) * self.values[i] + th * self.values[i + 1]
        h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
        h10 = th * (1.0 - th) ** 2
        h01 = th * th * (3.0 - 2.0 * th)
        h11 = th * th * (th - 1.0)
        return (
            h00 * self.values[i]
            + h * h10 * self.derivs[i]
            + h01 * self.values[i + 1]
            + h * h11 * self.derivs[i + 1]
        )

    def __call__(self, s: float) -> np.ndarray:
        return self.eval(s)

    def norm(self) -> float:
        """Exact sup norm over [-tau, 0] (max |.|_inf)."""
        if self.derivs is None or len(self.knots) == 1:
            return float(np.abs(self.values).max())
        best = float(np.abs(self.values).max())
        for i in range(len(self.knots) - 1):
            h = self.knots[i + 1] - self.knots[i]
            best = max(
                best,
                _hermite_sup(self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1], h),
            )
        return best


@dataclass(frozen=True)
class DiscreteDelaySystem:
    """State dim n, input dim m, strictly increasing positive delays.

    rhs(y, delayed, u) receives the current state, one delayed state per
    delay (in order) and the input value; delays=() encodes a nondelayed
    system.
    """

    dim: int
    input_dim: int
    delays: tuple
    rhs: Callable[[np.ndarray, tuple, np.ndarray], np.ndarray]
    name: str = ""

    def __post_init__(self):
        d = tuple(float(x) for x in self.delays)
        if any(x <= 0.0 for x in d):
            raise ValueError("delays must be positive")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("delays must be strictly increasing")
        object.__setattr__(self, "delays", d)

    @property
    def tau(self) -> float:
        return self.delays[-1] if self.delays else 0.0

    @property
    def tau_star(self) -> float:
        """Smallest gap between consecutive delays (tau_0 = 0)."""
        if not self.delays:
            return 0.0
        gaps = np.diff(np.concatenate([[0.0], np.array(self.delays)]))
        return float(gaps.min())


@dataclass
class SimOutcome:
    """Completed run, or finite escape with the trajectory prefix."""

    trajectory: Trajectory
    escaped: bool = False
    t_escape: Optional[float] = None
    final_norm: Optional[float] = None
    flag: Optional[str] = None  # 'threshold' | 'h_min_collapse' | 'nonfinite'

    @property
    def completed(self) -> bool:
        return not self.escaped


_OK, _ESCAPED = 0, 1


class Stepper:
    """Incremental adaptive DP5(4) driver over a caller-supplied rhs.

    rhs(t, y, left) must use the left limit of any discontinuous input when
    left=True (the two end-of-step stages), so dense output stays one-sided.
    """

    def __init__(self, rhs, t0: float, y0: np.ndarray, opts: IntegratorOptions, h_cap=None):
        self.rhs = rhs
        self.t = float(t0)
        self.y = np.asarray(y0, dtype=float).copy()
        self.opts = opts
        self.h_cap = h_cap
        self.k1 = rhs(self.t, self.y, False)
        self.builder = _TrajBuilder(self.t, self.y, self.k1)
        self.h = opts.first_step or 0.0
        self.nsteps = 0
        self.escape_info = None
        self._norm_prev = float(np.abs(self.y).max())

    def invalidate_rhs_cache(self):
        """Call after the rhs changed at the current time (e.g. new input piece)."""
        self.k1 = self.rhs(self.t, self.y, False)
        self.builder.replace_last_f_out(self.k1)

    def _scale(self, y0, y1):
        return self.opts.abs_tol + self.opts.rel_tol * np.maximum(np.abs(y0), np.abs(y1))

    def _initial_step(self, target):
        o = self.opts
        scale = o.abs_tol + o.rel_tol * np.abs(self.y)
        d0 = float(np.sqrt(np.mean((self.y / scale) ** 2)))
        d1 = float(np.sqrt(np.mean((self.k1 / scale) ** 2)))
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, target - self.t, *( [self.h_cap] if self.h_cap else [] ))
        y1 = self.y + h0 * self.k1
        f1 = self.rhs(self.t + h0, y1, False)
        d2 = float(np.sqrt(np.mean(((f1 - self.k1) / scale) ** 2))) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100.0 * h0, h1)

    def advance(self, target: float) -> int:
        """Integrate up to `target` (a forced boundary). Returns _OK or _ESCAPED."""
        o = self.opts
        if self.escape_info is not None:
            return _ESCAPED
        if float(np.abs(self.y).max()) >= o.escape_threshold:
            self.escape_info = (self.t, float(np.abs(self.y).max()), "threshold")
            return _ESCAPED
        if self.h <= 0.0:
            self.h = self._initial_step(target)
        eps_t = max(1e-15, 4.0 * np.spacing(abs(target)))
        while target - self.t > eps_t:
            if self.nsteps >= o.max_steps:
                raise RuntimeError(f"exceeded max_steps={o.max_steps}")
            h = self.h
            if self.h_cap is not None:
                h = min(h, self.h_cap)
            if o.h_max is not None:
                h = min(h, o.h_max)
            clipped = False
            if h >= target - self.t:
                h = target - self.t
                clipped = True
            t_new = target if clipped else self.t + h
            at_end = clipped  # end of step lands on a forced boundary
            ks = [self.k1]
            bad = not np.isfinite(self.k1).all()
            if not bad:
                for i in range(1, 7):
                    ts = self.t + _C[i] * h
                    if i >= 5:
                        ts = t_new if clipped else ts
                    ys = self.y + h * sum(a * k for a, k in zip(_A[i], ks))
                    if not np.isfinite(ys).all():
                        bad = True
                        break
                    left = at_end and i >= 5
                    k = self.rhs(ts, ys, left)
                    if not np.isfinite(k).all():
                        bad = True
                        break
                    ks.append(k)
            if not bad:
                y_new = self.y + h * sum(b * k for b, k in zip(_B[:6], ks[:6]))
                err_vec = h * sum(e * k for e, k in zip(_E, ks))
                scale = self._scale(self.y, y_new)
                err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
                bad = not math.isfinite(err)
            if bad or err > 1.0:
                self.nsteps += 1
                if h <= o.h_min * (1.0 + 1e-9):
                    norm = float(np.abs(self.y).max())
                    growing = norm > self._norm_prev or bad
                    if growing:
                        self.escape_info = (
                            self.t,
                            norm,
                            "nonfinite" if bad else "h_min_collapse",
                        )
                        return _ESCAPED
                    raise StepSizeCollapse(
                        f"error test failing at h={h} <= h_min at t={self.t}"
                    )
                fac = 0.1 if bad else max(0.2, 0.9 * err ** -0.2)
                self.h = max(h * fac, o.h_min)
                continue
            # accepted
            self.nsteps += 1
            k7 = ks[6]
            self._norm_prev = float(np.abs(self.y).max())
            q = h * (_P.T @ np.asarray(ks))
            self.builder.append(t_new, y_new, k7, k7, err, q)
            self.t = t_new
            self.y = y_new
            self.k1 = k7
            if at_end:
                # rhs may jump at the boundary; recompute the outgoing slope
                self.k1 = self.rhs(self.t, self.y, False)
                self.builder.replace_last_f_out(self.k1)
            if not clipped:
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                self.h = max(h * fac, o.h_min)
            norm_new = float(np.abs(y_new).max())
            if norm_new >= o.escape_threshold:
                t_esc = self._locate_escape()
                self.escape_info = (t_esc, norm_new, "threshold")
                return _ESCAPED
        self.t = target
        return _OK

    def _locate_escape(self) -> float:
        """Earliest time in the last segment where |x| reaches the threshold."""
        b = self.builder
        lo, hi = b.ts[-2], b.ts[-1]
        thr = self.opts.escape_threshold
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(np.abs(b.eval(mid)).max()) >= thr:
                hi = mid
            else:
                lo = mid
        return lo

    def outcome(self) -> SimOutcome:
        traj = self.builder.freeze()
        if self.escape_info is None:
            return SimOutcome(trajectory=traj)
        t_esc, norm, flag = self.escape_info
        return SimOutcome(
            trajectory=traj, escaped=True, t_escape=t_esc, final_norm=norm, flag=flag
        )


def _forced_stops(
    sys: DiscreteDelaySystem, u: Optional[Signal], T: float, opts, history=None, extra=None
) -> np.ndarray:
    pts = [np.array([T])]
    if extra is not None:
        pts.append(np.asarray(extra, dtype=float))
    if u is not None:
        pts.append(np.asarray(u.breakpoints(0.0, T)))
    if sys.delays:
        tau1 = sys.delays[0]
        mult = tau1 * np.arange(1, opts.delay_multiples + 1)
        pts.append(mult[mult < T])
        # derivative discontinuities at history kinks propagate forward by
        # whole multiples of each delay
        if isinstance(history, HistoryFn) and len(history.knots) > 1:
            for d in sys.delays:
                for m in range(1, opts.delay_multiples + 1):
                    shifted = history.knots[:-1] + m * d
                    pts.append(shifted[(shifted > 0.0) & (shifted < T)])
    stops = np.unique(np.concatenate(pts))
    return stops[(stops > 0.0) & (stops <= T)]


def _make_rhs(sys: DiscreteDelaySystem, history, u, lookup):
    delays = sys.delays
    rhs = sys.rhs
    if delays and u is not None and sys.input_dim > 0:
        def f(t, y, left=False):
            d = tuple(lookup(t - dl) for dl in delays)
            uval = u.eval_left(t) if left else u.eval(t)
            return rhs(y, d, uval)
    elif delays:
        zero_u = np.zeros(max(sys.input_dim, 0))
        def f(t, y, left=False):
            d = tuple(lookup(t - dl) for dl in delays)
            return rhs(y, d, zero_u)
    elif u is not None and sys.input_dim > 0:
        def f(t, y, left=False):
            uval = u.eval_left(t) if left else u.eval(t)
            return rhs(y, (), uval)
    else:
        zero_u = np.zeros(max(sys.input_dim, 0))
        def f(t, y, left=False):
            return rhs(y, (), zero_u)
    return f


def integrate(
    sys: DiscreteDelaySystem,
    history,
    u: Optional[Signal],
    T: float,
    opts: Optional[IntegratorOptions] = None,
    extra_stops=None,
) -> SimOutcome:
    """Integrate the system on [0, T] from the given history and input.

    `history` is a HistoryFn on [-tau, 0] (mandatory when the system has
    delays); a bare state vector is accepted for nondelayed systems.
    `extra_stops` adds caller-known times where the right-hand side loses
    smoothness (e.g. saturation crossings) to the forced step boundaries.
    """
    opts = opts or IntegratorOptions()
    if T <= 0.0:
        raise ValueError("T must be positive")
    if sys.delays:
        if not isinstance(history, HistoryFn):
            raise BadHistoryDomain("delayed system requires a HistoryFn")
        if abs(history.tau - sys.tau) > 1e-9 * max(1.0, sys.tau):
            raise BadHistoryDomain(
                f"history domain [-{history.tau}, 0] does not match tau={sys.tau}"
            )
        if history.dim != sys.dim:
            raise BadHistoryDomain("history dimension mismatch")
        y0 = history.eval(0.0)
    else:
        y0 = history.eval(0.0) if isinstance(history, HistoryFn) else np.atleast_1d(
            np.asarray(history, dtype=float)
        )
        if y0.size != sys.dim:
            raise BadHistoryDomain("initial state dimension mismatch")

    builder_ref: list = []

    def lookup(tq: float) -> np.ndarray:
        if tq <= 0.0:
            return history.eval(tq)
        return builder_ref[0].eval(tq)

    f = _make_rhs(sys, history, u, lookup)
    h_cap = sys.delays[0] if sys.delays else None
    stepper = Stepper(f, 0.0, y0, opts, h_cap=h_cap)
    builder_ref.append(stepper.builder)
    for stop in _forced_stops(sys, u, T, opts, history, extra_stops):
        if stepper.advance(float(stop)) != _OK:
            break
    return stepper.outcome()


def extract_history(traj: Trajectory, t: float, tau: float) -> HistoryFn:
    """History segment s -> x(t + s) on [-tau, 0] from the dense output."""
    if t - tau < traj.t_start - 1e-12 or t > traj.t_end + 1e-12:
        raise SpanTooShort(
            f"[{t - tau}, {t}] not inside [{traj.t_start}, {traj.t_end}]"
        )
    lo = max(t - tau, traj.t_start)
    inner = traj.ts[(traj.ts > lo) & (traj.ts < t)]
    pts = np.unique(np.concatenate([[lo, t], inner]))
    vals = np.array([traj.eval(p) for p in pts])
    ders = np.array([traj.eval_deriv(p) for p in pts])
    return HistoryFn(pts - t, vals, ders)


def residual_audit(
    traj: Trajectory,
    sys: DiscreteDelaySystem,
    u: Optional[Signal],
    sample_count: int = 20,
    history: Optional[HistoryFn] = None,
    seed: int = 0,
) -> float:
    """Max defect of the integral form x(t) - x(0) - int_0^t f over samples.

    Quadrature is 5-point Gauss-Legendre per dense-output segment, so nodes
    are interior and never touch an input breakpoint. Delayed lookups are
    served from the trajectory itself (and the history before time 0).
    """

    def lookup(tq: float) -> np.ndarray:
        if tq <= 0.0:
            if history is None:
                raise ValueError("history required to audit a delayed system")
            return history.eval(tq)
        return traj.eval(tq)

    f = _make_rhs(sys, history, u, lookup)

    def seg_integral(a: float, b: float) -> np.ndarray:
        ts = a + (b - a) * _GL_X
        acc = np.zeros(traj.dim)
        for w, s in zip(_GL_W, ts):
            acc += w * f(s, traj.eval(s), False)
        return (b - a) * acc

    n_seg = len(traj.ts) - 1
    cum = np.zeros((n_seg + 1, traj.dim))
    for i in range(n_seg):
        cum[i + 1] = cum[i] + seg_integral(traj.ts[i], traj.ts[i + 1])

    rng = np.random.default_rng(seed)
    samples = traj.t_start + (traj.t_end - traj.t_start) * rng.random(sample_count)
    samples = np.concatenate([samples, [traj.t_end]])
    x0 = traj.eval(traj.t_start)
    worst = 0.0
    for t in samples:
        i = traj._segment(t)
        q = cum[i] + (seg_integral(traj.ts[i], t) if t > traj.ts[i] else 0.0)
        defect = traj.eval(t) - x0 - q
        worst = max(worst, float(np.abs(defect).max()))
    return worst
