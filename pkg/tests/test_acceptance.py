"""Acceptance suite: one test per headline property, one verdict line each.

Run with `pytest -s tests/test_acceptance.py` to see the verdict lines for
passing criteria as well (pytest shows captured output only on failure).
"""

import math

import numpy as np
import pytest

from delayreach.integrator import (
    DiscreteDelaySystem,
    HistoryFn,
    IntegratorOptions,
    integrate,
    residual_audit,
)
from delayreach.lyap import A_MODE1, A_MODE2, blend, is_hurwitz, lyapunov_residual, solve_lyapunov
from delayreach.probes import (
    constant_input_descent,
    es_check,
    estimate_R,
    random_history,
    rfc_sweep,
    uga_table,
)
from delayreach.systems import (
    associated_system,
    cascade_system,
    embed_history_as_inputs,
    history_from_inputs,
    saturation_stop_times,
)

ORACLE_OPTS = IntegratorOptions()  # rel_tol 1e-8, abs_tol 1e-9


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    assert ok, line


def test_criterion_1_lyapunov_certification():
    worst = 0.0
    for lam in np.linspace(0.0, 1.0, 101):
        a = blend(A_MODE1, A_MODE2, float(lam))
        assert is_hurwitz(a)
        worst = max(worst, lyapunov_residual(a, solve_lyapunov(a)))
    report(
        "lyapunov-certification",
        worst <= 1e-12,
        f"101 blend points Hurwitz, max residual {worst:.2e} <= 1e-12",
    )


def test_criterion_2_integrator_oracles():
    tol = 10.0 * ORACLE_OPTS.rel_tol
    decay = DiscreteDelaySystem(dim=1, input_dim=0, delays=(), rhs=lambda y, d, u: -y, name="d")
    out = integrate(decay, np.array([1.0]), None, 1.0, ORACLE_OPTS)
    err_decay = abs(out.trajectory.eval(1.0)[0] - math.exp(-1.0))

    burst = DiscreteDelaySystem(
        dim=1, input_dim=0, delays=(), rhs=lambda y, d, u: 1.0 + y * y, name="b"
    )
    out_b = integrate(burst, np.array([0.0]), None, 5.0, ORACLE_OPTS)
    err_escape = abs(out_b.t_escape - math.pi / 2.0)

    tau = 1.0
    casc = cascade_system(tau)
    h = HistoryFn.constant(np.array([0.8, 0.001, -0.001]), tau)
    out_c = integrate(casc, h, None, 5.0, ORACLE_OPTS)
    err_z = max(
        abs(out_c.trajectory.eval(t)[0] - 0.8 * math.exp(-t)) for t in np.linspace(0.0, 5.0, 100)
    )

    ok = err_decay <= tol and out_b.escaped and err_escape <= 1e-3 and err_z <= tol
    report(
        "integrator-oracles",
        ok,
        f"decay err {err_decay:.2e} <= {tol:.0e}; blow-up time err {err_escape:.2e} <= 1e-3; "
        f"feed-decay err {err_z:.2e} <= {tol:.0e}",
    )


def test_criterion_3_no_forward_completeness(escape_run):
    out = escape_run.outcome
    escaped = out.escaped and out.t_escape < 20.0 and out.final_norm >= 1e6
    worst_slope = constant_input_descent(
        [-2.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 10.0], n_ics=5, T=4.0, seed=0
    )
    ok = escaped and worst_slope <= 1e-6
    report(
        "finite-escape-and-constant-input-descent",
        ok,
        f"greedy switching escapes at t={out.t_escape:.4f} < 20 with |x| >= 1e6; "
        f"worst relative Lyapunov slope under constant inputs {worst_slope:.2e} <= 1e-6",
    )


def test_criterion_4_exponential_envelope():
    fit = es_check(n_ics=200, T=30.0, fit_tol=0.05, seed=0)
    report(
        "exponential-envelope",
        fit.violations == 0,
        f"200 small histories, 0 of required 0 envelope violations on [0, 30] "
        f"(k_emp {fit.k_emp:.3f})",
    )


def test_criterion_5_uniform_reach_times():
    cells = uga_table([1.0, 10.0, 100.0], [0.1, 1.0], n_samples=50, seed=0)
    ok = all(c.ok for c in cells)
    worst = max(c.t_emp_max / c.t_theory for c in cells)
    report(
        "uniform-reach-times",
        ok,
        f"6 cells x 50 histories all settle within the theoretical bound "
        f"(worst ratio {worst:.3f})",
    )


def test_criterion_6_unbounded_peaks():
    res = rfc_sweep()
    ok = res.strictly_increasing and res.growth_factor >= 10.0 and res.settled_in_time
    report(
        "unbounded-reachability-peaks",
        ok,
        f"7 smoothing levels complete; peaks strictly increasing with growth "
        f"{res.growth_factor:.2f}x >= 10x; every run re-settles within the reach-time bound",
    )


def test_criterion_7_embedding_equivalence():
    tau = 1.0
    opts = IntegratorOptions(rel_tol=1e-8, abs_tol=1e-9)
    casc = cascade_system(tau)
    assoc = associated_system()
    worst_embed = 0.0
    worst_complete = 0.0
    for i in range(50):
        rng = np.random.default_rng((2024, i))
        hist = random_history(rng, rng.uniform(0.1, 1.0), tau, 3)
        xi0, inputs = embed_history_as_inputs(hist, casc.delays)
        stops = saturation_stop_times(hist, tau, tau)
        out_d = integrate(casc, hist, None, tau, opts, extra_stops=stops)
        out_a = integrate(assoc, xi0, inputs[0], tau, opts, extra_stops=stops)
        dev = max(
            float(np.abs(out_d.trajectory.eval(t) - out_a.trajectory.eval(t)).max())
            for t in np.linspace(0.0, tau, 64)
        )
        worst_embed = max(worst_embed, dev)

        # reverse direction: a history assembled from (xi0, input) reproduces
        # the input-driven run on the shared half-window
        from delayreach.signals import PiecewiseLinear

        knots = np.sort(rng.uniform(0.0, tau, size=5))
        knots = np.unique(np.concatenate([[0.0], knots, [tau]]))
        v = PiecewiseLinear(knots, rng.uniform(-0.8, 0.8, size=(len(knots), 3)))
        xi0_r = rng.uniform(-0.5, 0.5, size=3)
        hist_r = history_from_inputs(xi0_r, [v], casc.delays)
        stops_r = saturation_stop_times(hist_r, tau, tau / 2.0)
        out_d2 = integrate(casc, hist_r, None, tau / 2.0, opts, extra_stops=stops_r)
        out_a2 = integrate(assoc, xi0_r, v, tau / 2.0, opts, extra_stops=stops_r)
        dev2 = max(
            float(np.abs(out_d2.trajectory.eval(t) - out_a2.trajectory.eval(t)).max())
            for t in np.linspace(0.0, tau / 2.0, 33)
        )
        worst_complete = max(worst_complete, dev2)
    scale = 3.0  # states stay within a few units for these draws
    tol = 10.0 * (opts.rel_tol * scale + opts.abs_tol)
    exact = all(estimate_R(k, 1.7, 0.0, 2).lower_bound == 1.7 for k in ("planar", "cascade", "associated"))
    ok = worst_embed <= tol and worst_complete <= tol and exact
    report(
        "embedding-equivalence",
        ok,
        f"50 pairs: embed-direction deviation {worst_embed:.2e} and completion-direction "
        f"deviation {worst_complete:.2e} both <= {tol:.1e}; zero-horizon reach bound exact",
    )


def test_criterion_8_integral_form_audit():
    bound = 100.0 * ORACLE_OPTS.abs_tol
    decay = DiscreteDelaySystem(dim=1, input_dim=0, delays=(), rhs=lambda y, d, u: -y, name="d")
    runs = []
    out = integrate(decay, np.array([1.0]), None, 2.0, ORACLE_OPTS)
    runs.append(("decay", residual_audit(out.trajectory, decay, None)))

    tau = 1.0
    casc = cascade_system(tau)
    hist = HistoryFn.constant(np.array([0.5, 0.2, -0.1]), tau)
    out_c = integrate(casc, hist, None, 3.0, ORACLE_OPTS)
    runs.append(("cascade", residual_audit(out_c.trajectory, casc, None, history=hist)))

    rng = np.random.default_rng(9)
    h2 = random_history(rng, 0.6, tau, 3)
    xi0, inputs = embed_history_as_inputs(h2, casc.delays)
    assoc = associated_system()
    stops = saturation_stop_times(h2, tau, tau)
    out_a = integrate(assoc, xi0, inputs[0], tau, ORACLE_OPTS, extra_stops=stops)
    runs.append(("embedded", residual_audit(out_a.trajectory, assoc, inputs[0])))

    worst = max(r for _, r in runs)

    tight = IntegratorOptions(rel_tol=1e-9, abs_tol=1e-10)
    out_t = integrate(casc, hist, None, 3.0, tight)
    r_loose = dict(runs)["cascade"]
    r_tight = residual_audit(out_t.trajectory, casc, None, history=hist)
    shrink = r_loose / max(r_tight, 1e-300)

    ok = worst <= bound and shrink >= 4.0
    report(
        "integral-form-audit",
        ok,
        f"max defect {worst:.2e} <= {bound:.0e} across completed runs; "
        f"defect shrinks {shrink:.1f}x >= 4x under 10x tighter tolerances",
    )
