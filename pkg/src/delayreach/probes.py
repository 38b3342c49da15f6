"""Experiment drivers that certify or falsify stability properties of the
cascade and its planar core: exponential-envelope checks, uniform reach-time
tables, reachability lower-bound sampling, the diverging-peaks sweep, and
Lyapunov decay audits.

All probes are deterministic given (seed, options): every random draw uses a
seed derived from the master seed and the draw index, so results are
reproducible and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrator import (
    DiscreteDelaySystem,
    HistoryFn,
    IntegratorOptions,
    SimOutcome,
    Trajectory,
    integrate,
)
from .lyap import Certificate, default_certificate
from .signals import PiecewiseConstant, Signal, smooth_square
from .systems import (
    DEFAULT_PLANAR,
    PlanarParams,
    associated_system,
    cascade_system,
    default_cascade_delay,
    planar_system,
    recorded_escape,
)


class HorizonTooShort(RuntimeError):
    """A sample failed to settle by the theoretical reach-time bound."""


class UnexpectedEscape(RuntimeError):
    """A run with a continuous history escaped; the integrator is misconfigured."""


class WindowInvalid(ValueError):
    """Decay audit requested on an empty window."""


#: Probe-level integrator settings; probes compare against >=5% analytic
#: margins, so they run looser (and much faster) than the oracle defaults.
PROBE_OPTS = IntegratorOptions(rel_tol=1e-6, abs_tol=1e-8)

#: Smoothing widths of the diverging-peaks sweep: geometric, halving, chosen
#: so the coarsest run is clearly tame and the finest approaches the escape.
DEFAULT_DELTAS = tuple(0.1 / 2 ** k for k in range(7))


@dataclass(frozen=True)
class ReachEstimate:
    """Sampled lower bound on a reachability supremum."""

    r: float
    T: float
    lower_bound: float
    sample_budget: int
    escape_seen: bool


@dataclass(frozen=True)
class EnvelopeFit:
    k_emp: float
    p_emp: float
    violations: int


@dataclass(frozen=True)
class UgaCell:
    r: float
    eps: float
    t_theory: float
    t_emp_max: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.t_emp_max <= self.t_theory


@dataclass(frozen=True)
class RfcSweepResult:
    deltas: tuple
    peaks: tuple
    settle_times: tuple
    settle_bound: float
    history_norms: tuple

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.peaks, self.peaks[1:]))

    @property
    def growth_factor(self) -> float:
        return max(self.peaks) / min(self.peaks)

    @property
    def settled_in_time(self) -> bool:
        return all(t <= self.settle_bound for t in self.settle_times)


def random_history(rng, target_norm: float, tau: float, dim: int, max_knots: int = 20) -> HistoryFn:
    """Piecewise-linear history on [-tau, 0] with sup norm exactly target_norm."""
    k = int(rng.integers(3, max_knots + 1))
    interior = np.sort(rng.uniform(-tau, 0.0, size=k - 2)) if k > 2 else np.empty(0)
    knots = np.unique(np.concatenate([[-tau], interior, [0.0]]))
    vals = rng.uniform(-1.0, 1.0, size=(len(knots), dim))
    peak = np.abs(vals).max()
    if peak == 0.0:
        vals[0, 0] = 1.0
        peak = 1.0
    return HistoryFn(knots, vals * (target_norm / peak))


def random_piecewise_input(rng, sup: float, T: float, dim: int = 1, max_pieces: int = 20) -> Signal:
    k = int(rng.integers(1, max_pieces + 1))
    breaks = np.sort(rng.uniform(0.0, T, size=k - 1)) if k > 1 else np.empty(0)
    breaks = np.unique(breaks)
    vals = rng.uniform(-sup, sup, size=(len(breaks) + 1, dim))
    return PiecewiseConstant(vals, breaks)


def theoretical_reach_time(r: float, eps: float, tau: float, cert: Certificate) -> float:
    """Reach-time bound t1 + tau + 2 c2^2 / (c1 eps^2).

    t1 = max(0, ln(r / min(Lambda, eps))) is the time for the exponentially
    decaying feed to drop below both the certificate region and the target.
    """
    lam = cert.capital_lambda
    t1 = max(0.0, math.log(r / min(lam, eps))) if r > 0 else 0.0
    return t1 + tau + 2.0 * cert.c2 ** 2 / (cert.c1 * eps * eps)


def _certified_settle(
    sys: DiscreteDelaySystem,
    history: HistoryFn,
    eps: float,
    cert: Certificate,
    hard_horizon: float,
    opts: IntegratorOptions,
) -> tuple[float, Trajectory]:
    """Empirical settle time into the eps-ball, with a certified tail.

    Integrates until a time t_c where the Lyapunov certificate guarantees the
    state can never leave the eps-ball again (|z| below the certificate
    region for a full delay window and W(x) <= c1 eps^2), then reports the
    last observed time above eps. Doubling horizons keep long tails cheap;
    failing to certify by `hard_horizon` raises HorizonTooShort.
    """
    tau = sys.tau
    lam = cert.capital_lambda
    horizon = min(tau + 50.0, hard_horizon)
    while True:
        out = integrate(sys, history, None, horizon, opts)
        if out.escaped:
            raise UnexpectedEscape(
                f"escape at t={out.t_escape} from a continuous history"
            )
        traj = out.trajectory
        t_emp = traj.last_time_above(eps)

        def certified_at(t_c: float) -> bool:
            z_back = history.eval(t_c - tau) if t_c - tau <= 0.0 else traj.eval(t_c - tau)
            state = traj.eval(t_c)
            return (
                abs(float(z_back[0])) <= lam
                and abs(float(state[0])) <= min(lam, eps)
                and cert.p0.quad(state[1:3]) <= cert.c1 * eps * eps
            )

        # any certification instant after t_emp seals the tail: the state sits
        # inside the eps-ball on [t_emp, t_c] by construction and the
        # certificate keeps it there forever after t_c
        if t_emp < horizon - 1e-9 and any(
            certified_at(t_c) for t_c in np.linspace(t_emp, horizon, 65)[1:]
        ):
            return t_emp, traj
        if horizon >= hard_horizon - 1e-9:
            raise HorizonTooShort(
                f"not settled into eps={eps} by t={hard_horizon}"
            )
        horizon = min(2.0 * horizon, hard_horizon)


def es_check(
    n_ics: int = 200,
    T: float = 30.0,
    tau: Optional[float] = None,
    fit_tol: float = 0.05,
    seed: int = 0,
    cert: Optional[Certificate] = None,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: IntegratorOptions = PROBE_OPTS,
    samples_per_run: int = 100,
) -> EnvelopeFit:
    """Check the exponential envelope k ||phi|| e^{-pt} on random small histories.

    Histories are piecewise linear with sup norm below the certificate region
    bound, which is where the envelope is guaranteed. Violations count
    sampled points above the envelope inflated by fit_tol.
    """
    cert = cert or default_certificate()
    tau = tau if tau is not None else default_cascade_delay()
    sys = cascade_system(tau, params)
    k_env = cert.constants.k
    p_env = cert.constants.p
    lam = cert.capital_lambda
    violations = 0
    k_emp = 0.0
    p_emp = math.inf
    for i in range(n_ics):
        rng = np.random.default_rng((seed, i))
        norm = lam * rng.uniform(0.2, 1.0)
        hist = random_history(rng, norm, tau, sys.dim)
        out = integrate(sys, hist, None, T, opts)
        if out.escaped:
            raise UnexpectedEscape("escape in the small-norm envelope region")
        traj = out.trajectory
        ts = rng.uniform(0.0, T, size=samples_per_run)
        for t in ts:
            mag = float(np.abs(traj.eval(t)).max())
            env = k_env * norm * math.exp(-p_env * t)
            if mag > env * (1.0 + fit_tol):
                violations += 1
            if mag > 0.0:
                k_emp = max(k_emp, mag * math.exp(p_env * t) / norm)
                if t >= 1.0 and mag < k_env * norm:
                    p_emp = min(p_emp, math.log(k_env * norm / mag) / t)
    if not math.isfinite(p_emp):
        p_emp = p_env
    return EnvelopeFit(k_emp=k_emp, p_emp=p_emp, violations=violations)


def uga_table(
    r_list: Sequence[float],
    eps_list: Sequence[float],
    n_samples: int = 50,
    margin_T: float = 100.0,
    tau: Optional[float] = None,
    seed: int = 0,
    cert: Optional[Certificate] = None,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: IntegratorOptions = PROBE_OPTS,
) -> list[UgaCell]:
    """Empirical vs theoretical reach times into the eps-ball.

    For each (r, eps) cell, the worst settle time over sampled histories of
    norm <= r must not exceed the theoretical bound; HorizonTooShort
    otherwise (a falsification, which must not occur).
    """
    cert = cert or default_certificate()
    tau = tau if tau is not None else default_cascade_delay()
    sys = cascade_system(tau, params)
    cells = []
    for r in r_list:
        for eps in eps_list:
            t_theory = theoretical_reach_time(r, eps, tau, cert)
            worst = 0.0
            for i in range(n_samples):
                rng = np.random.default_rng((seed, int(r * 1000), int(eps * 1000), i))
                hist = random_history(rng, r * rng.uniform(0.3, 1.0), tau, sys.dim)
                t_emp, _ = _certified_settle(
                    sys, hist, eps, cert, t_theory + margin_T, opts
                )
                worst = max(worst, t_emp)
            cells.append(
                UgaCell(r=r, eps=eps, t_theory=t_theory, t_emp_max=worst, n_samples=n_samples)
            )
    return cells


def escape_schedule(dwell: float = 1e-3) -> tuple[PiecewiseConstant, float]:
    """Recorded greedy switching signal, zeroed after its escape time."""
    run = recorded_escape(dwell)
    if not run.outcome.escaped:
        raise RuntimeError("greedy switching did not escape")
    t_esc = float(run.outcome.t_escape)
    sig = run.signal
    values = np.vstack([sig.values, np.zeros((1, sig.dim))])
    breaks = np.append(sig.breaks, t_esc)
    return PiecewiseConstant(values, breaks), t_esc


def rfc_sweep(
    tau: Optional[float] = None,
    delta_list: Sequence[float] = DEFAULT_DELTAS,
    x0=(1.0, 0.0),
    eps: float = 0.1,
    cert: Optional[Certificate] = None,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: IntegratorOptions = PROBE_OPTS,
    margin_T: float = 100.0,
) -> RfcSweepResult:
    """Diverging peaks from an equibounded family of continuous histories.

    The recorded greedy escape signal is smoothed at each width in
    delta_list (strictly decreasing) and installed as the decaying-feed
    history; the planar part starts at x0 with |x0| = 1. Every run must
    complete (continuous history), re-enter the eps-ball by the theoretical
    reach time, yet the peak grows without a uniform bound as the smoothing
    vanishes.
    """
    if not all(b < a for a, b in zip(delta_list, delta_list[1:])):
        raise ValueError("delta_list must be strictly decreasing")
    cert = cert or default_certificate()
    schedule, t_esc = escape_schedule()
    tau = tau if tau is not None else 1.5 * t_esc
    if tau < 1.5 * t_esc - 1e-12:
        raise ValueError("tau must cover 1.5x the escape time")
    sys = cascade_system(tau, params)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    peaks = []
    settles = []
    norms = []
    t_theory = theoretical_reach_time(1.0, eps, tau, cert)
    for delta in delta_list:
        w = smooth_square(schedule, delta, strict=False)
        knots = np.unique(np.concatenate([[0.0, tau], w.knots[(w.knots > 0) & (w.knots < tau)]]))
        zvals = np.array([float(w.eval_unclamped(t)[0]) for t in knots])
        vals = np.column_stack([zvals, np.full_like(zvals, x0[0]), np.full_like(zvals, x0[1])])
        hist = HistoryFn(knots - tau, vals)
        norms.append(hist.norm())
        t_emp, traj = _certified_settle(sys, hist, eps, cert, t_theory + margin_T, opts)
        peaks.append(traj.sup_norm(0.0, tau))
        settles.append(t_emp)
    return RfcSweepResult(
        deltas=tuple(delta_list),
        peaks=tuple(peaks),
        settle_times=tuple(settles),
        settle_bound=t_theory,
        history_norms=tuple(norms),
    )


def estimate_R(
    system_kind: str,
    r: float,
    T: float,
    budget: int,
    seed: int = 0,
    tau: Optional[float] = None,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: IntegratorOptions = PROBE_OPTS,
) -> ReachEstimate:
    """Sampled lower bound on the reachability supremum R(r, T) or R*(r, T).

    The draw pool always contains the deterministic boundary draw (initial
    condition of norm exactly r, zero input), `budget` seeded random draws,
    and, for the input-driven kinds with r >= 1, the recorded destabilizing
    switching signal. Suprema are uncomputable; a lower bound is what the
    falsification argument needs.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    tau = tau if tau is not None else default_cascade_delay()
    if system_kind == "planar":
        sys = planar_system(params)
    elif system_kind == "cascade":
        sys = cascade_system(tau, params)
    elif system_kind == "associated":
        sys = associated_system(params)
    else:
        raise ValueError(f"unknown system kind {system_kind!r}")

    def corner_state():
        x = np.zeros(sys.dim)
        x[min(1, sys.dim - 1) if system_kind != "planar" else 0] = r
        return x

    draws = []
    # boundary draw: initial norm exactly r, zero input
    draws.append(("corner", corner_state(), None))
    if system_kind in ("planar", "associated") and r >= 1.0:
        adv_u, _ = escape_schedule()
        x = np.zeros(sys.dim)
        x[-2] = 1.0
        draws.append(("adversarial", x, adv_u))
    for i in range(budget):
        rng = np.random.default_rng((seed, i))
        if system_kind == "cascade":
            hist = random_history(rng, r * rng.uniform(0.2, 1.0), tau, sys.dim)
            draws.append(("random", hist, None))
        else:
            x0 = rng.uniform(-r, r, size=sys.dim)
            u = random_piecewise_input(rng, r, max(T, 1.0)) if sys.input_dim else None
            draws.append(("random", x0, u))

    lower = 0.0
    escape_seen = False
    if T == 0.0:
        # the reachable set at time zero is exactly the initial ball
        return ReachEstimate(r=r, T=T, lower_bound=r, sample_budget=budget, escape_seen=False)
    for _, ic, u in draws:
        if system_kind == "cascade" and not isinstance(ic, HistoryFn):
            ic = HistoryFn.constant(ic, tau)
        out = integrate(sys, ic, u, T, opts)
        if isinstance(ic, HistoryFn):
            lower = max(lower, ic.norm())
        else:
            lower = max(lower, float(np.abs(ic).max()))
        lower = max(lower, out.trajectory.sup_norm(out.trajectory.t_start, out.trajectory.t_end))
        if out.escaped:
            escape_seen = True
            if out.final_norm is not None:
                lower = max(lower, out.final_norm)
    return ReachEstimate(
        r=r, T=T, lower_bound=lower, sample_budget=budget, escape_seen=escape_seen
    )


def decay_audit(
    traj: Trajectory,
    cert: Certificate,
    t_lo: float,
    t_hi: float,
    fd_step: float = 1e-4,
    n_samples: int = 200,
) -> float:
    """Worst violation margin of the Lyapunov decay inequality on a window.

    Along a cascade trajectory (state [z, x1, x2]) with the delayed feed
    inside the certificate region, the finite-difference slope of
    w(t) = x(t)^T P0 x(t) must satisfy
    dw/dt <= -w/(2 c2) - w^2/(2 c2^2). Returns max(slope - bound); values
    <= 0 mean no violation. Callers pick the window so the delayed feed
    precondition holds.
    """
    if t_hi <= t_lo:
        raise WindowInvalid("decay audit window is empty")
    a = max(t_lo, traj.t_start + fd_step)
    b = min(t_hi, traj.t_end - fd_step)
    if b <= a:
        raise WindowInvalid("decay audit window is empty after clipping")
    c2 = cert.c2
    worst = -math.inf
    for t in np.linspace(a, b, n_samples):
        w0 = cert.p0.quad(traj.eval(t - fd_step)[1:3])
        w1 = cert.p0.quad(traj.eval(t + fd_step)[1:3])
        w = cert.p0.quad(traj.eval(t)[1:3])
        slope = (w1 - w0) / (2.0 * fd_step)
        bound = -w / (2.0 * c2) - w * w / (2.0 * c2 * c2)
        worst = max(worst, slope - bound)
    return worst


def constant_input_descent(
    c_list: Sequence[float],
    n_ics: int = 10,
    T: float = 5.0,
    seed: int = 0,
    params: PlanarParams = DEFAULT_PLANAR,
    opts: IntegratorOptions = PROBE_OPTS,
    fd_step: float = 1e-4,
    n_samples: int = 200,
) -> float:
    """Worst relative growth of W(x) under constant inputs.

    For each constant input c, W is the quadratic form of the Lyapunov
    matrix solved for the saturated blend of c; along every trajectory the
    finite-difference slope of W must stay non-positive. Returns the worst
    slope normalized by W(x(0)).
    """
    from .lyap import blend, solve_lyapunov
    from .systems import unit_saturation

    sys = planar_system(params)
    worst = -math.inf
    for c in c_list:
        lam = unit_saturation(c)
        p = solve_lyapunov(blend(params.a1, params.a2, lam))
        from .signals import Constant

        for i in range(n_ics):
            rng = np.random.default_rng((seed, i))
            x0 = rng.uniform(-1.0, 1.0, size=2)
            out = integrate(sys, x0, Constant([c]), T, opts)
            if out.escaped:
                raise UnexpectedEscape("escape under a constant input")
            traj = out.trajectory
            w0 = p.quad(x0)
            if w0 == 0.0:
                continue
            for t in np.linspace(fd_step, T - fd_step, n_samples):
                wl = p.quad(traj.eval(t - fd_step))
                wr = p.quad(traj.eval(t + fd_step))
                worst = max(worst, (wr - wl) / (2.0 * fd_step) / w0)
    return worst
