import math

import numpy as np
import pytest

from delayreach.integrator import (
    BadHistoryDomain,
    DiscreteDelaySystem,
    HistoryFn,
    IntegratorOptions,
    SpanTooShort,
    extract_history,
    integrate,
    residual_audit,
)
from delayreach.signals import Constant, PiecewiseConstant


def decay_system(rate=1.0):
    return DiscreteDelaySystem(
        dim=1, input_dim=0, delays=(), rhs=lambda y, d, u: -rate * y, name="decay"
    )


def tan_system():
    # x' = 1 + x^2 from 0 blows up at pi/2 with x(t) = tan(t)
    return DiscreteDelaySystem(
        dim=1, input_dim=0, delays=(), rhs=lambda y, d, u: 1.0 + y * y, name="tan"
    )


def delayed_unit_system():
    # x'(t) = -x(t - 1); from constant history 1 the solution is a
    # polynomial spline computable by hand, one degree per unit interval
    return DiscreteDelaySystem(
        dim=1, input_dim=0, delays=(1.0,), rhs=lambda y, d, u: -d[0], name="unitdelay"
    )


class TestScalarOracles:
    def test_exponential_decay(self):
        out = integrate(decay_system(), np.array([1.0]), None, 1.0)
        assert not out.escaped
        assert abs(out.trajectory.eval(1.0)[0] - math.exp(-1.0)) <= 1e-7

    def test_forced_harmonic_matches_closed_form(self):
        # x' = -x + u with u = 1 on [0, 1), 0 after: closed form by variation
        # of constants on each piece
        sys = DiscreteDelaySystem(
            dim=1, input_dim=1, delays=(), rhs=lambda y, d, u: -y + u, name="relax"
        )
        u = PiecewiseConstant([1.0, 0.0], [1.0])
        out = integrate(sys, np.array([0.0]), u, 3.0)
        x1 = 1.0 - math.exp(-1.0)
        assert out.trajectory.eval(1.0)[0] == pytest.approx(x1, abs=1e-8)
        assert out.trajectory.eval(3.0)[0] == pytest.approx(x1 * math.exp(-2.0), abs=1e-8)

    def test_blowup_time(self):
        out = integrate(tan_system(), np.array([0.0]), None, 5.0)
        assert out.escaped
        assert out.flag == "threshold"
        assert out.t_escape == pytest.approx(math.pi / 2.0, abs=1e-3)

    def test_escape_threshold_monotone(self):
        lo = integrate(
            tan_system(), np.array([0.0]), None, 5.0, IntegratorOptions(escape_threshold=1e3)
        )
        hi = integrate(
            tan_system(), np.array([0.0]), None, 5.0, IntegratorOptions(escape_threshold=1e6)
        )
        assert lo.escaped and hi.escaped
        assert lo.t_escape <= hi.t_escape
        # tan crosses level L at arctan(L)
        assert lo.t_escape == pytest.approx(math.atan(1e3), abs=1e-3)


class TestDelayOracle:
    def test_method_of_steps_spline(self):
        hist = HistoryFn.constant(np.array([1.0]), 1.0)
        out = integrate(delayed_unit_system(), hist, None, 3.0)
        traj = out.trajectory

        def exact(t):
            if t <= 1.0:
                return 1.0 - t
            # x'(t) = -(1-(t-1)) = t-2, x(1) = 0
            return (t * t - 1.0) / 2.0 - 2.0 * (t - 1.0)

        for t in np.linspace(0.0, 2.0, 41):
            assert traj.eval(t)[0] == pytest.approx(exact(t), abs=1e-8)
        assert traj.eval(2.0)[0] == pytest.approx(-0.5, abs=1e-8)

    def test_history_domain_validation(self):
        hist = HistoryFn.constant(np.array([1.0]), 2.0)
        with pytest.raises(BadHistoryDomain):
            integrate(delayed_unit_system(), hist, None, 1.0)
        with pytest.raises(BadHistoryDomain):
            integrate(delayed_unit_system(), np.array([1.0]), None, 1.0)


class TestDenseOutput:
    def test_node_values_exact(self):
        out = integrate(decay_system(), np.array([1.0]), None, 2.0)
        traj = out.trajectory
        for i, t in enumerate(traj.ts):
            assert np.array_equal(traj.eval(float(t)), traj.ys[i])

    def test_interpolant_accuracy(self):
        out = integrate(decay_system(), np.array([1.0]), None, 2.0)
        for t in np.linspace(0.0, 2.0, 101):
            assert out.trajectory.eval(t)[0] == pytest.approx(math.exp(-t), abs=1e-7)

    def test_eval_deriv_matches_rhs(self):
        out = integrate(decay_system(), np.array([1.0]), None, 2.0)
        for t in np.linspace(0.1, 1.9, 19):
            d = out.trajectory.eval_deriv(t)[0]
            assert d == pytest.approx(-out.trajectory.eval(t)[0], abs=1e-6)

    def test_eval_outside_span(self):
        out = integrate(decay_system(), np.array([1.0]), None, 1.0)
        with pytest.raises(SpanTooShort):
            out.trajectory.eval(1.5)

    def test_sup_norm_matches_dense_sampling(self):
        sys = DiscreteDelaySystem(
            dim=2,
            input_dim=0,
            delays=(),
            rhs=lambda y, d, u: np.array([y[1], -y[0]]),
            name="osc",
        )
        out = integrate(sys, np.array([1.0, 0.0]), None, 7.0)
        traj = out.trajectory
        dense = max(float(np.abs(traj.eval(t)).max()) for t in np.linspace(0.0, 7.0, 5001))
        assert traj.sup_norm(0.0, 7.0) >= dense - 1e-12
        assert traj.sup_norm(0.0, 7.0) == pytest.approx(1.0, abs=1e-6)

    def test_last_time_above(self):
        out = integrate(decay_system(), np.array([1.0]), None, 5.0)
        # e^{-t} > 0.1 until t = ln 10
        assert out.trajectory.last_time_above(0.1) == pytest.approx(math.log(10.0), abs=1e-6)
        assert out.trajectory.last_time_above(2.0) == 0.0


class TestRestart:
    def test_extract_history_and_resume(self):
        hist = HistoryFn.constant(np.array([1.0]), 1.0)
        full = integrate(delayed_unit_system(), hist, None, 3.0)
        mid = extract_history(full.trajectory, 2.0, 1.0)
        resumed = integrate(delayed_unit_system(), mid, None, 1.0)
        for t in np.linspace(0.0, 1.0, 21):
            assert resumed.trajectory.eval(t)[0] == pytest.approx(
                full.trajectory.eval(2.0 + t)[0], abs=1e-7
            )

    def test_extract_requires_enough_span(self):
        out = integrate(decay_system(), np.array([1.0]), None, 1.0)
        with pytest.raises(SpanTooShort):
            extract_history(out.trajectory, 0.5, 1.0)


class TestDeterminism:
    def test_bitwise_repeatable(self):
        a = integrate(tan_system(), np.array([0.0]), None, 1.5)
        b = integrate(tan_system(), np.array([0.0]), None, 1.5)
        assert np.array_equal(a.trajectory.ts, b.trajectory.ts)
        assert np.array_equal(a.trajectory.ys, b.trajectory.ys)


class TestHistoryFn:
    def test_constant(self):
        h = HistoryFn.constant(np.array([2.0, -1.0]), 1.5)
        assert np.array_equal(h.eval(-1.5), [2.0, -1.0])
        assert np.array_equal(h.eval(0.0), [2.0, -1.0])
        assert h.norm() == 2.0
        assert h.tau == 1.5

    def test_linear_interpolation_and_norm(self):
        h = HistoryFn(np.array([-1.0, 0.0]), np.array([[0.0], [4.0]]))
        assert h.eval(-0.5)[0] == pytest.approx(2.0)
        assert h.norm() == 4.0

    def test_from_signal(self):
        # history(s) = sig(s + shift); the window [shift - tau, shift] must
        # stay inside the signal domain [0, inf)
        h = HistoryFn.from_signal(PiecewiseConstant([1.0, 3.0], [0.5]), tau=1.0, shift=1.0)
        assert h.tau == 1.0
        assert h.eval(0.0)[0] == 3.0
        assert h.eval(-1.0)[0] == 1.0


class TestResidualAudit:
    def test_small_residual_on_completed_run(self):
        out = integrate(decay_system(), np.array([1.0]), None, 2.0)
        res = residual_audit(out.trajectory, decay_system(), None)
        assert res <= 100.0 * IntegratorOptions().abs_tol

    def test_residual_shrinks_with_tolerance(self):
        sys = tan_system()
        loose = IntegratorOptions(rel_tol=1e-8, abs_tol=1e-9)
        tight = IntegratorOptions(rel_tol=1e-9, abs_tol=1e-10)
        r_loose = residual_audit(integrate(sys, np.array([0.0]), None, 1.2, loose).trajectory, sys, None)
        r_tight = residual_audit(integrate(sys, np.array([0.0]), None, 1.2, tight).trajectory, sys, None)
        assert r_tight <= r_loose / 4.0

    def test_residual_with_delay_and_history(self):
        hist = HistoryFn.constant(np.array([1.0]), 1.0)
        sys = delayed_unit_system()
        out = integrate(sys, hist, None, 3.0)
        res = residual_audit(out.trajectory, sys, None, history=hist)
        assert res <= 100.0 * IntegratorOptions().abs_tol


class TestOptionsValidation:
    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            integrate(decay_system(), np.array([1.0]), None, 0.0)
