"""Concrete systems: the switched planar vector field, its delay cascade,
the associated nondelayed system, history/input embeddings between the two
formulations, and a destabilizing sampled-feedback switching policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .integrator import (
    DiscreteDelaySystem,
    HistoryFn,
    IntegratorOptions,
    SimOutcome,
    Stepper,
    _OK,
)
from .lyap import A_MODE1, A_MODE2, Mat2
from .signals import PiecewiseConstant, PiecewiseLinear, Signal, TimeShift, Window


class WindowOverlap(ValueError):
    """Delay gaps too small for the history-completion windows."""


def unit_saturation(r: float) -> float:
    """Clamp to [0, 1]: 0 for r < 0, r on [0, 1], 1 for r > 1."""
    if r < 0.0:
        return 0.0
    if r > 1.0:
        return 1.0
    return float(r)


@dataclass(frozen=True)
class PlanarParams:
    """Gain pair of the switched planar system; defaults are bit-exact."""

    a1: Mat2 = A_MODE1
    a2: Mat2 = A_MODE2

    def gain(self, lam: float) -> np.ndarray:
        return lam * self.a1.as_array() + (1.0 - lam) * self.a2.as_array()


DEFAULT_PLANAR = PlanarParams()


def planar_rhs(params: PlanarParams = DEFAULT_PLANAR) -> Callable:
    """g(x, u) = (1 + |x|_2^2) * A(sat(u)) * x, cubic in the state."""
    m1 = params.a1.as_array()
    m2 = params.a2.as_array()

    def g(x: np.ndarray, u: float) -> np.ndarray:
        lam = unit_saturation(float(u))
        a = lam * m1 + (1.0 - lam) * m2
        return (1.0 + float(x @ x)) * (a @ x)

    return g


def planar_system(params: PlanarParams = DEFAULT_PLANAR) -> DiscreteDelaySystem:
    """Nondelayed planar system with a scalar input."""
    g = planar_rhs(params)

    def rhs(y, delayed, u):
        return g(y, u[0])

    return DiscreteDelaySystem(dim=2, input_dim=1, delays=(), rhs=rhs, name="planar")


def cascade_system(tau: float, params: PlanarParams = DEFAULT_PLANAR) -> DiscreteDelaySystem:
    """Input-free 3-state cascade: scalar exponential decay feeding the
    planar block through a single discrete delay.

    State layout: y = [z, x1, x2]; only the delayed z-component enters the
    planar block.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    g = planar_rhs(params)

    def rhs(y, delayed, u):
        z = y[0]
        x = y[1:3]
        z_del = delayed[0][0]
        gx = g(x, z_del)
        return np.array([-z, gx[0], gx[1]])

    return DiscreteDelaySystem(dim=3, input_dim=0, delays=(tau,), rhs=rhs, name="cascade")


def associated_system(params: PlanarParams = DEFAULT_PLANAR) -> DiscreteDelaySystem:
    """Nondelayed companion of the cascade: the delayed feed becomes an input."""
    g = planar_rhs(params)

    def rhs(y, delayed, u):
        z = y[0]
        x = y[1:3]
        gx = g(x, u[0])
        return np.array([-z, gx[0], gx[1]])

    return DiscreteDelaySystem(dim=3, input_dim=1, delays=(), rhs=rhs, name="associated")


def _history_as_piecewise_linear(history: HistoryFn) -> tuple[np.ndarray, np.ndarray]:
    """Knot/value arrays representing the history as a broken line.

    Exact for linear histories; cubic histories are refined with 8 interior
    samples per segment.
    """
    if history.derivs is None or len(history.knots) == 1:
        return history.knots, history.values
    fine = [history.knots[:1]]
    for i in range(len(history.knots) - 1):
        fine.append(np.linspace(history.knots[i], history.knots[i + 1], 10)[1:])
    knots = np.concatenate(fine)
    vals = np.array([history.eval(s) for s in knots])
    return knots, vals


def embed_history_as_inputs(
    history: HistoryFn, delays
) -> tuple[np.ndarray, list[Signal]]:
    """Turn a history into the initial state and inputs of the nondelayed twin.

    Returns xi0 = history(0) and one input per delay, equal to the shifted
    history on [0, tau_1) and zero afterwards. No input norm ever exceeds the
    history's norm.
    """
    delays = [float(d) for d in delays]
    if not delays:
        raise ValueError("need at least one delay")
    tau1 = delays[0]
    knots, vals = _history_as_piecewise_linear(history)
    xi0 = history.eval(0.0)
    inputs: list[Signal] = []
    for d in delays:
        # v_i(t) = history(t - d) on [0, tau1); shifting the knots keeps the
        # signal defined on [0, inf) as required
        base = PiecewiseLinear(knots + d, vals)
        inputs.append(Window(base, 0.0, tau1))
    return xi0, inputs


def history_from_inputs(xi0, inputs, delays) -> HistoryFn:
    """Assemble a continuous history matching each input on its window.

    Input i pins the history on [-tau_i, -tau_i + tau*/2]; history(0) = xi0;
    the gaps are filled by linear interpolation.
    """
    delays = [float(d) for d in delays]
    if len(inputs) != len(delays):
        raise ValueError("one input per delay")
    taus = [0.0] + delays
    tau_star = min(b - a for a, b in zip(taus, taus[1:]))
    if tau_star <= 0.0:
        raise WindowOverlap("delays must be strictly increasing and positive")
    half = 0.5 * tau_star
    if -delays[0] + half >= 0.0:
        raise WindowOverlap("first window reaches time 0")
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
    knots: list[float] = [0.0]
    vals: list[np.ndarray] = [xi0]
    for d, v in zip(delays, inputs):
        inner = v.breakpoints(0.0, half)
        pts = np.unique(np.concatenate([[0.0, half], inner]))
        for p in pts:
            knots.append(p - d)
            vals.append(np.atleast_1d(v.eval(p)))
    order = np.argsort(knots)
    knots_arr = np.array(knots)[order]
    vals_arr = np.array([vals[i] for i in order])
    return HistoryFn(knots_arr, vals_arr)


def saturation_stop_times(history: HistoryFn, tau: float, T: float, levels=(0.0, 1.0)) -> np.ndarray:
    """Times in (0, T) where the delayed feed crosses a saturation level.

    The saturated blend kinks the right-hand side wherever the feed crosses
    0 or 1; forcing step boundaries there restores full integration order.
    Crossings are exact for piecewise-linear histories. The same times apply
    to the input-embedded companion run, whose input is the shifted history.
    """
    knots = history.knots
    z = history.values[:, 0]
    out = []
    for lv in levels:
        d = z - lv
        for i in range(len(knots) - 1):
            if d[i] == 0.0:
                out.append(float(knots[i]))
            elif d[i] * d[i + 1] < 0.0:
                out.append(float(knots[i] + (knots[i + 1] - knots[i]) * d[i] / (d[i] - d[i + 1])))
    arr = np.asarray(out, dtype=float) + tau
    return np.unique(arr[(arr > 0.0) & (arr < T)])


@dataclass(frozen=True)
class SwitchingPolicy:
    """Sampled state feedback selecting one of the two planar gains."""

    dwell: float
    rule: Callable[[np.ndarray], int]


def greedy_worst_switch(
    params: PlanarParams = DEFAULT_PLANAR, dwell: float = 1e-3
) -> SwitchingPolicy:
    """Pick the gain maximizing the instantaneous growth of |x|_2^2.

    rule(x) = argmax over lam in {0, 1} of x^T (A(lam) + A(lam)^T) x, ties
    resolved to 1. Combined with the cubic factor this greedily maximizes
    d|x|^2/dt.
    """
    s1 = params.a1.as_array()
    s1 = s1 + s1.T
    s2 = params.a2.as_array()
    s2 = s2 + s2.T

    def rule(x: np.ndarray) -> int:
        return 1 if float(x @ s1 @ x) >= float(x @ s2 @ x) else 0

    return SwitchingPolicy(dwell=dwell, rule=rule)


@dataclass
class SwitchedRun:
    """Closed-loop switching experiment: outcome plus the open-loop replay."""

    outcome: SimOutcome
    signal: PiecewiseConstant
    t_end: float


def run_switched(
    policy: SwitchingPolicy,
    x0,
    T: float,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: Optional[IntegratorOptions] = None,
    min_dwell: float = 1e-13,
) -> SwitchedRun:
    """Drive the planar system by the policy, sampled every dwell interval.

    The dwell shrinks with 1/(1 + |x|_2^2) so sampling keeps up with the
    cubically accelerating rotation; it never drops below `min_dwell`. The
    realized input is recorded as a piecewise-constant signal (consecutive
    equal values merged) so the escape can be replayed open loop.
    """
    opts = opts or IntegratorOptions(h_min=1e-14)
    g = planar_rhs(params)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    current = [0.0]

    def rhs(t, y, left=False):
        return g(y, current[0])

    stepper = Stepper(rhs, 0.0, x0, opts, h_cap=None)
    piece_vals: list[float] = []
    piece_breaks: list[float] = []
    while stepper.t < T and stepper.escape_info is None:
        lam = float(policy.rule(stepper.y))
        if not piece_vals:
            piece_vals.append(lam)
        elif lam != piece_vals[-1]:
            piece_vals.append(lam)
            piece_breaks.append(stepper.t)
        if lam != current[0]:
            current[0] = lam
            stepper.invalidate_rhs_cache()
        dwell = policy.dwell / (1.0 + float(stepper.y @ stepper.y))
        dwell = min(max(dwell, min_dwell), policy.dwell)
        target = min(stepper.t + dwell, T)
        if stepper.advance(target) != _OK:
            break
    outcome = stepper.outcome()
    sig = PiecewiseConstant(np.array(piece_vals), np.array(piece_breaks))
    return SwitchedRun(outcome=outcome, signal=sig, t_end=stepper.t)


@lru_cache(maxsize=4)
def recorded_escape(dwell: float = 1e-3) -> SwitchedRun:
    """Greedy switching run from (1, 0) up to the escape threshold, memoized."""
    policy = greedy_worst_switch(dwell=dwell)
    run = run_switched(policy, np.array([1.0, 0.0]), T=20.0)
    return run


def default_cascade_delay(dwell: float = 1e-3) -> float:
    """1.5x the observed open-loop escape time of the greedy signal, so the
    delay window contains the whole blow-up region."""
    run = recorded_escape(dwell)
    if not run.outcome.escaped:
        raise RuntimeError("greedy switching unexpectedly failed to escape")
    return 1.5 * float(run.outcome.t_escape)
