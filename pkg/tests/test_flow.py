import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kjblab import flow as fl
from kjblab.errors import DegenerateConstant, NotApplicable, NotElliptic, StepRejected
from kjblab.field import GridSpec, ScalarField
from kjblab.functionals import frakJ_beta
from kjblab.geometry import TwistData, ellipticity_margin, h_tilde, make_state
from kjblab.sampling import random_potential

from helpers import cosine, negative_twist


class TestKernel:
    @given(seed=st.integers(0, 2 ** 16), n=st.sampled_from([1, 2]), beta=st.sampled_from([0.0, 0.3, 0.9]))
    def test_matches_reference_quantities(self, seed, n, beta):
        g = GridSpec(n, 16 if n == 1 else 8)
        r = np.random.default_rng(seed)
        t = negative_twist(g, r, beta)
        phi = random_potential(g, r, 0.6)
        s = make_state(phi)
        lo, ell, H, cap = fl._Kernel(g, t, 0.8).evaluate(phi.values)
        assert lo == pytest.approx(s.min_eig, abs=1e-12)
        assert ell == pytest.approx(ellipticity_margin(s, t)[0], abs=1e-12)
        assert np.max(np.abs(H - h_tilde(s, t).values)) < 1e-12
        assert cap == pytest.approx(fl.stable_dt(s, t, 0.8), rel=1e-10)

    def test_reports_positivity_loss(self):
        g = GridSpec(1, 16)
        lo, _, H, cap = fl._Kernel(g, TwistData(-np.eye(1)), 0.8).evaluate(cosine(g, 0.2).values)
        assert lo < 0 and H is None and cap is None


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"dt0": 0.0}, {"tol_residual": 0.0}, {"max_steps": -1}, {"record_every": 0},
        {"cone_variant": "other"}, {"dt_fraction": 1.5}, {"snapshot_every": 0}, {"adaptive": False},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            fl.FlowConfig(**kwargs)


class TestOracle:
    def test_single_mode_solution(self):
        # psi = eps cos(2 pi x) gives phi = -eps/(1+beta) cos(2 pi x)
        g = GridSpec(1, 16)
        eps, beta = 0.02, 0.3
        t = TwistData(-np.eye(1), cosine(g, eps), beta)
        phi = fl.linear_oracle_n1(t)
        assert np.max(np.abs(phi.values - cosine(g, -eps / (1 + beta)).values)) < 1e-15
        assert fl.oracle_residual(phi, t) < 1e-14

    def test_random_twist_residual(self, rng):
        g = GridSpec(1, 32)
        t = negative_twist(g, rng)
        phi = fl.linear_oracle_n1(t)
        assert fl.oracle_residual(phi, t) <= 1e-12
        assert h_tilde(make_state(phi), t).sup() <= 1e-12
        assert abs(phi.mean()) < 1e-15

    def test_degenerate_constant(self):
        g = GridSpec(1, 16)
        with pytest.raises(DegenerateConstant):
            fl.linear_oracle_n1(TwistData(np.array([[0.5]]), None, 0.5), g)

    def test_dimension_two_not_applicable(self):
        with pytest.raises(NotApplicable):
            fl.linear_oracle_n1(TwistData(-np.eye(2)), GridSpec(2, 8))

    def test_grid_required_without_psi(self):
        with pytest.raises(ValueError):
            fl.linear_oracle_n1(TwistData(-np.eye(1)))


class TestStep:
    def test_step_moves_along_residual(self, rng):
        g = GridSpec(1, 16)
        t = negative_twist(g, rng)
        s = make_state(random_potential(g, rng, 0.3))
        dt = fl.stable_dt(s, t, 0.5)
        new = fl.step(s, t, dt)
        assert np.allclose(new.phi.values, s.phi.values + dt * h_tilde(s, t).values, atol=1e-15)

    def test_huge_step_rejected(self, rng):
        g = GridSpec(1, 16)
        t = negative_twist(g, rng)
        s = make_state(random_potential(g, rng, 0.5))
        with pytest.raises(StepRejected):
            fl.step(s, t, 1e3)

    def test_not_elliptic(self):
        g = GridSpec(2, 8)
        with pytest.raises(NotElliptic):
            fl.step(make_state(ScalarField.zeros(g)), TwistData(np.diag([-1.0, 0.5])), 1e-3)
        with pytest.raises(NotElliptic) as exc:
            fl.run(ScalarField.zeros(g), TwistData(np.diag([-1.0, 0.5])))
        assert exc.value.margin == pytest.approx(-0.5)


@pytest.fixture(scope="module")
def converged():
    g = GridSpec(1, 16)
    r = np.random.default_rng(11)
    t = negative_twist(g, r)
    phi0 = random_potential(g, r, 0.5)
    trace, state = fl.run(phi0, t, fl.FlowConfig(tol_residual=1e-10, record_every=5, snapshot_every=50))
    return g, t, trace, state


class TestRun:
    def test_reaches_oracle(self, converged):
        g, t, trace, state = converged
        assert trace.status == fl.CONVERGED
        assert trace.final_residual < 1e-10
        oracle = fl.linear_oracle_n1(t)
        shifted = state.phi - state.phi.mean()
        assert shifted.osc() > 0
        assert np.max(np.abs(shifted.values - oracle.values)) < 1e-9
        assert frakJ_beta(state, t) == pytest.approx(frakJ_beta(make_state(oracle), t), abs=1e-12)

    def test_trace_bookkeeping(self, converged):
        g, t, trace, state = converged
        assert len(trace) == len(trace.steps) == len(trace.dts)
        assert trace.steps[0] == 0 and trace.steps[-1] == trace.n_steps
        assert all(s % 5 == 0 for s in trace.steps[:-1])
        assert np.all(np.diff(trace.times) > 0)
        assert trace.snapshots[0][0] == 0.0 and trace.snapshots[-1][1] is not None
        summary = trace.summary()
        assert summary["records"] == len(trace) and summary["status"] == fl.CONVERGED

    def test_monitors(self, converged):
        g, t, trace, state = converged
        assert fl.energy_dissipation_check(trace).passed
        assert fl.maximum_principle_check(trace, lipschitz=0).passed
        assert np.all(trace.column("pos_margin") > 0)
        assert np.all(trace.column("ellip_margin") > 0)
        assert np.all(np.isfinite(trace.column("A_max")))
        assert fl.eigen_bound_check(trace, t).passed

    def test_budget_status(self, rng):
        g = GridSpec(1, 16)
        t = negative_twist(g, rng)
        trace, _ = fl.run(random_potential(g, rng, 0.5), t, fl.FlowConfig(max_steps=7, record_every=3))
        assert trace.status == fl.BUDGET
        assert trace.steps == [0, 3, 6, 7]

    def test_start_at_critical_point(self, rng):
        g = GridSpec(1, 16)
        t = negative_twist(g, rng)
        trace, state = fl.run(fl.linear_oracle_n1(t), t, fl.FlowConfig(tol_residual=1e-10))
        assert trace.status == fl.CONVERGED and trace.n_steps == 0 and len(trace) == 1

    def test_dimension_two_decreases_residual(self):
        g = GridSpec(2, 8)
        r = np.random.default_rng(4)
        t = negative_twist(g, r)
        trace, state = fl.run(random_potential(g, r, 0.3), t, fl.FlowConfig(max_steps=300, record_every=20))
        E = trace.column("E_beta")
        assert E[-1] < 1e-3 * E[0]
        assert fl.energy_dissipation_check(trace).passed
        assert fl.maximum_principle_check(trace, lipschitz=0).passed


class TestChecks:
    def test_gradient_flow_identity(self, rng):
        g = GridSpec(1, 16)
        t = negative_twist(g, rng)
        res = fl.gradient_flow_identity(random_potential(g, rng, 0.5), t, steps=200)
        assert res.passed, res.line()
        assert res.detail["matched_times"] > 100

    def test_eigen_bound_denominators(self):
        assert fl.eigen_bound_denominator(-0.2, -1.3) == pytest.approx(1.5)
        assert fl.eigen_bound_denominator(-0.2, -1.3, "literal") == pytest.approx(1.1)
        with pytest.raises(ValueError):
            fl.eigen_bound_denominator(0.0, -1.0, "other")

    def test_eigen_bound_needs_negative_chi(self):
        g = GridSpec(1, 8)
        trace = fl.FlowTrace(snapshots=[(0.0, ScalarField.zeros(g))], initial_min_dot=0.0)
        with pytest.raises(NotApplicable):
            fl.eigen_bound_check(trace, TwistData(np.eye(1)))
        with pytest.raises(ValueError):
            fl.eigen_bound_check(fl.FlowTrace(), TwistData(-np.eye(1)))

    def test_eigen_bound_rejects_nonpositive_denominator(self):
        g = GridSpec(1, 8)
        trace = fl.FlowTrace(snapshots=[(0.0, ScalarField.zeros(g))], initial_min_dot=-2.0)
        with pytest.raises(NotApplicable):
            fl.eigen_bound_check(trace, TwistData(-np.eye(1)), "literal")

    def test_maximum_principle_detects_violation(self):
        trace = fl.FlowTrace(dts=[0.0, 0.1, 0.1])
        for t, lo, hi in [(0.0, -1.0, 1.0), (0.1, -0.5, 0.5), (0.2, -0.4, 1.3)]:
            trace.rows.append((t, 0.0, 0.0, lo, hi, 1.0, 1.0, math.nan, 1.0, 0.0))
        res = fl.maximum_principle_check(trace, lipschitz=0)
        assert not res.passed
        assert res.lhs == pytest.approx(0.3)
        assert res.detail["worst_index"] == 2

    def test_energy_dissipation_detects_increase(self):
        trace = fl.FlowTrace()
        for t, J in [(0.0, 1.0), (0.1, 0.5), (0.2, 0.6)]:
            trace.rows.append((t, J, 0.0, 0.0, 0.0, 1.0, 1.0, math.nan, 1.0, 0.0))
        res = fl.energy_dissipation_check(trace)
        assert not res.passed and res.lhs == pytest.approx(0.1)
