import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kjblab import flow as fl
from kjblab import geodesics as gd
from kjblab.errors import NotGeodesic, PositivityLoss
from kjblab.field import GridSpec, ScalarField
from kjblab.functionals import first_variation_jbeta, grad_norm_sq
from kjblab.geometry import TwistData, make_state
from kjblab.sampling import band_limited, random_potential

from helpers import cosine, negative_twist

G16 = GridSpec(1, 16)


def _pair(seed, amp=0.4, grid=G16, cutoff=None):
    r = np.random.default_rng(seed)
    return random_potential(grid, r, amp, cutoff=cutoff), random_potential(grid, r, amp, cutoff=cutoff)


class TestPath:
    def test_needs_two_nodes_on_one_grid(self):
        with pytest.raises(ValueError):
            gd.Path([ScalarField.zeros(G16)])
        with pytest.raises(ValueError):
            gd.Path([ScalarField.zeros(G16), ScalarField.zeros(GridSpec(1, 8))])

    def test_linear_path_nodes(self):
        a, b = _pair(0)
        p = gd.Path.linear(a, b, 8)
        assert p.K == 8 and p.dt == 0.125
        assert np.allclose(p.nodes[4].values, 0.5 * (a.values + b.values))

    @given(c=st.floats(-3, 3))
    def test_shift_path_energy(self, c):
        # mean(det g) = 1 for every potential, so a constant velocity c has energy c^2
        a, _ = _pair(1)
        p = gd.Path.linear(a, a + c, 8)
        assert gd.path_energy(p) == pytest.approx(c * c, abs=1e-13)

    @given(seed=st.integers(0, 2 ** 16))
    def test_energy_is_length_squared_plus_speed_variance(self, seed):
        r = np.random.default_rng(seed)
        nodes = [random_potential(G16, r, 0.3) for _ in range(9)]
        p = gd.Path(nodes)
        s = gd.segment_speeds(p)
        L = float(np.sum(s) * p.dt)
        assert gd.path_energy(p) == pytest.approx(L * L + p.dt * np.sum((s - L) ** 2), rel=1e-12)

    def test_energy_gradient_matches_finite_differences(self, rng):
        a, b = _pair(2)
        P = gd.Path.linear(a, b, 8).stack()
        P[1:-1] += 0.05 * np.stack([band_limited(G16, rng) for _ in range(7)])
        _, G, _ = gd._energy_and_gradient(P, G16, 1 / 8)
        W = np.zeros_like(P)
        W[1:-1] = np.stack([band_limited(G16, rng) for _ in range(7)])
        h = 1e-6
        fd = (gd._energy_and_gradient(P + h * W, G16, 1 / 8)[0]
              - gd._energy_and_gradient(P - h * W, G16, 1 / 8)[0]) / (2 * h)
        assert np.sum(np.mean(G * W[1:-1], axis=(1, 2))) == pytest.approx(fd, rel=1e-7)


class TestResidual:
    def test_carre_du_champ_equals_gradient_norm_for_resolved_fields(self, grid, rng):
        s = make_state(random_potential(grid, rng, 0.5))
        v = band_limited(grid, rng, cutoff=grid.N // 8)
        assert np.max(np.abs(gd.carre_du_champ(s, v) - grad_norm_sq(s, v))) < 1e-10

    def test_residual_of_linear_path(self):
        # a linear path has phi'' = 0, leaving minus the carre du champ of the constant velocity
        a, b = _pair(3)
        p = gd.Path.linear(a, b, 8)
        r = gd.geodesic_residual(p)
        assert np.max(np.abs(r + np.stack([gd.carre_du_champ(p.state(k), (b - a).values)
                                              for k in range(1, 8)]))) < 1e-10


class TestSegment:
    def test_constant_shift_is_a_geodesic(self):
        a, _ = _pair(4)
        res = gd.geodesic_segment(a, a + 0.7, K=8)
        assert abs(res.distance - 0.7) <= 1e-10
        assert res.residual_sup <= 1e-10
        assert res.speed_variance <= 1e-12

    def test_distance_is_symmetric(self):
        a, b = _pair(5)
        ab = gd.geodesic_segment(a, b, K=8)
        ba = gd.geodesic_segment(b, a, K=8)
        assert abs(ab.distance - ba.distance) <= 1e-9
        assert np.allclose(ab.path.nodes[3].values, ba.path.nodes[5].values, atol=1e-6)

    def test_small_separation_matches_flat_distance(self):
        # near phi = 0 the squared speed is mean(u^2) (1 + O(eps)), the O(eps) term coming from det g
        u = band_limited(G16, np.random.default_rng(6))
        errs = []
        for eps in (1e-2, 5e-3):
            d = gd.geodesic_segment(ScalarField.zeros(G16), ScalarField(G16, eps * u), K=8).distance
            errs.append(abs(d / (eps * math.sqrt(np.mean(u * u))) - 1))
        assert errs[0] < 10 * 1e-2
        assert 0.4 < errs[1] / errs[0] < 0.6

    def test_geodesic_beats_linear_path(self):
        a, b = _pair(7)
        res = gd.geodesic_segment(a, b, K=8)
        assert res.energy <= gd.path_energy(gd.Path.linear(a, b, 8)) + 1e-12
        assert res.residual_sup < 1e-2
        assert res.speed_variance < 1e-2

    def test_refinement_reduces_residual(self):
        # smooth endpoints keep the spatial truncation of the residual below the time error
        a, b = _pair(8, grid=GridSpec(1, 32), cutoff=1)
        r8 = gd.geodesic_segment(a, b, K=8).residual_sup
        r16 = gd.geodesic_segment(a, b, K=16).residual_sup
        assert r16 < r8 / 3

    def test_argument_validation(self):
        a, b = _pair(9)
        with pytest.raises(ValueError):
            gd.geodesic_segment(a, b, K=4)
        with pytest.raises(ValueError):
            gd.geodesic_segment(a, ScalarField.zeros(GridSpec(1, 8)))
        with pytest.raises(PositivityLoss) as exc:
            gd.geodesic_segment(a, cosine(G16, 0.2))
        assert exc.value.node == 16


@pytest.fixture(scope="module")
def geo():
    r = np.random.default_rng(10)
    t = negative_twist(G16, r)
    a, b = random_potential(G16, r, 0.4), random_potential(G16, r, 0.4)
    return t, a, b, gd.geodesic_segment(a, b, K=8)


class TestChecksAlongGeodesics:
    def test_convexity(self, geo):
        t, a, b, res = geo
        c = gd.convexity_probe(res, t)
        assert c.passed and c.detail["hypothesis"]
        with pytest.raises(NotGeodesic):
            gd.convexity_probe(res, t, residual_tol=1e-12)

    def test_convexity_flags_indefinite_twist(self, geo):
        _, a, b, res = geo
        assert not gd.convexity_probe(res, TwistData(np.eye(1))).detail["hypothesis"]

    def test_end_slope_is_the_first_variation(self, geo):
        t, a, b, res = geo
        rho = (res.path.nodes[-1].values - res.path.nodes[-2].values) / res.path.dt
        assert gd.f_beta_estimate(res, t) == pytest.approx(first_variation_jbeta(make_state(b), t, rho), rel=1e-14)

    def test_bridge_inequality(self, geo):
        t, a, b, res = geo
        assert gd.bridge_inequality_check(a, b, t, result=res).passed

    def test_npc_collinear_equality(self):
        x, z = _pair(11)
        c = gd.npc_midpoint_check(x, x, z, K=8)
        assert abs(c.lhs - c.rhs) <= 1e-9
        assert c.passed

    def test_npc_triangle(self):
        r = np.random.default_rng(12)
        x, y, z = (random_potential(G16, r, 0.4) for _ in range(3))
        c = gd.npc_midpoint_check(x, y, z, K=8)
        assert c.passed
        d = c.detail
        assert d["d_yz"] <= d["d_xy"] + d["d_xz"] + 1e-9

    def test_npc_needs_even_k(self):
        x, z = _pair(13)
        with pytest.raises(ValueError):
            gd.npc_midpoint_check(x, x, z, K=9)


class TestRay:
    def test_requires_converged_flow(self):
        with pytest.raises(ValueError):
            gd.ray_from_flow(fl.FlowTrace(status=fl.BUDGET), ScalarField.zeros(G16), TwistData(-np.eye(1)))

    def test_ray_checks_on_converged_flow(self):
        r = np.random.default_rng(14)
        t = negative_twist(G16, r)
        phi0 = random_potential(G16, r, 0.4)
        trace, state = fl.run(phi0, t, fl.FlowConfig(tol_residual=1e-9, snapshot_every=20))
        results, rep = gd.ray_from_flow(trace, phi0, t, K=8, max_segments=4)
        assert len(results) == len(rep.times) <= 4
        assert all(c.passed for c in rep.checks), [c.line() for c in rep.checks]
        assert np.all(np.diff(rep.distances) >= -1e-9)
        assert set(rep.summary()) >= {"times", "distances", "cauchy"}
