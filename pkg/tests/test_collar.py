"""Collar chart, mollifier, and curvature-control diagnostics."""

import numpy as np
import pytest

from masslab import collar, metrics
from masslab.collar import MollifierSpec, sigma_delta
from masslab.domains import half_space

DOM = half_space(n=3, r_inner=2.0, r_outer=16.0, h=1.0 / 16.0)


def glued_field(m=2.0):
    return metrics.glued_schwarzschild_flat(m=m, r0=2.0, n=3)


@pytest.fixture(scope="module")
def glued_collar():
    return collar.build_collar_field(glued_field(), DOM, epsilon=2.0)


class TestMollifierSpec:
    def test_chi_normalization_and_support(self):
        spec = MollifierSpec(delta=0.1)
        s = np.linspace(-1.2, 1.2, 2001)
        vals = spec.chi(s)
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
        assert np.all(vals[np.abs(s) >= 1.0] == 0.0)
        assert abs(np.trapezoid(vals, s) - 1.0) < 1e-6

    def test_sigma_plateau_and_support(self):
        spec = MollifierSpec(delta=0.1)
        assert spec.sigma(np.array([0.0]))[0] == 0.01
        assert spec.sigma(np.array([0.2]))[0] == 0.01
        mid = spec.sigma(np.array([0.35]))[0]
        assert 0.0 < mid <= 0.01
        assert spec.sigma(np.array([0.6]))[0] == 0.0

    def test_sigma_delta_values(self):
        spec = MollifierSpec(delta=0.1)
        assert sigma_delta(0.0, spec) == pytest.approx(1e-4, abs=1e-18)
        assert sigma_delta(0.1 / 5.0, spec) == pytest.approx(1e-4, abs=1e-18)
        assert sigma_delta(0.06, spec) == 0.0
        assert sigma_delta(-0.06, spec) == 0.0


class TestCollarChart:
    def test_euclidean_flow_is_affine(self):
        ch = collar.build_collar_field(metrics.euclidean(3), DOM, epsilon=0.5)
        x = np.array([2.0, 0.0, 0.0])
        for t in (-0.9, -0.3, 0.0, 0.4, 0.9):
            z = ch.to_ambient(x, t)
            assert np.allclose(z, (1.0 + t / 2.0) * x, atol=1e-12)

    def test_round_trip(self, glued_collar):
        x = 2.0 * np.array([0.6, 0.64, 0.48])
        for t in (-3.5, -1.0, -0.01, 0.0, 0.01, 1.2, 3.9):
            z = glued_collar.to_ambient(x, t)
            x2, t2 = glued_collar.from_ambient(z)
            assert abs(t2 - t) < 1e-10
            assert np.linalg.norm(x2 - x) < 1e-10

    def test_xi_boundary_tangency_exact(self, glued_collar):
        z = np.array([0.0, 2.3, 0.7])
        assert glued_collar.xi(z)[0] == 0.0

    def test_xi_unit_and_normal_at_interface(self, glued_collar):
        fld = glued_field()
        x = 2.0 * np.array([0.48, 0.6, 0.64])
        xi = glued_collar.xi(x)
        g = fld.eval(x)
        assert abs(xi @ g @ xi - 1.0) < 1e-10
        from masslab.geometry import tangent_basis
        for v in tangent_basis(x):
            assert abs(xi @ g @ v) < 1e-10

    def test_flow_leaves_domain_raises(self):
        # eps = 3 forces |t| up to 6 > interior arclength 4.5
        with pytest.raises(collar.CollarError):
            collar.build_collar_field(glued_field(), DOM, epsilon=3.0)

    def test_non_orthogonal_metric_rejected(self):
        def g(x):
            out = np.eye(3)
            out[0, 1] = out[1, 0] = 0.1
            return out

        skew = metrics.MetricField(3, g=g)
        with pytest.raises(collar.CollarError):
            collar.build_collar_field(skew, DOM, epsilon=0.5)


class TestWarp:
    def test_euclidean_warp_curvature_zero(self):
        ch = collar.build_collar_field(metrics.euclidean(3), DOM, epsilon=0.5)
        w = ch.warp()
        for t in (-0.8, 0.0, 0.7):
            F, dF, ddF = float(w.F(t)), float(w.dF(t)), float(w.ddF(t))
            assert abs(collar.warp_scalar_curvature(F, dF, ddF, 3)) < 1e-9
            rho = float(ch.rho_of_t(t))
            assert abs(collar.warp_mean_curvature(F, dF, 3) - 2.0 / rho) < 1e-9

    def test_warp_derivatives_match_fd(self, glued_collar):
        # FD on the C^1 flow interpolant is O(step^2)-accurate; the exact
        # chain-rule path is tighter, so compare at the table's accuracy
        w = glued_collar.warp()
        for t0 in (-0.9, 0.35, 1.4):
            dt = 1e-5
            fd1 = (float(w.F(t0 + dt)) - float(w.F(t0 - dt))) / (2 * dt)
            assert abs(fd1 - float(w.dF(t0))) < 1e-5 * max(1.0, abs(fd1))
            fd2 = (float(w.F(t0 + dt)) - 2 * float(w.F(t0))
                   + float(w.F(t0 - dt))) / dt ** 2
            assert abs(fd2 - float(w.ddF(t0))) < 5e-4 * max(1.0, abs(fd2))

    def test_kink_jump_matches_mean_curvature_jump(self, glued_collar):
        # (n-1) [F'](0) / (2F) = -(H_- - H_+)
        from masslab.geometry import mean_curvature, sphere_chart
        fld = glued_field()
        w = glued_collar.warp()
        surf = sphere_chart(2.0, 3)
        x = np.array([2.0, 0.0, 0.0])
        hm = mean_curvature(fld, surf, x, DOM.h, side="minus")
        hp = mean_curvature(fld, surf, x, DOM.h, side="plus")
        F0 = float(w.F(0.0))
        assert abs(w.jump_dF() - 2.0 * F0 * (hp - hm) / 2.0) < 1e-8


@pytest.fixture(scope="module")
def mollified(glued_collar):
    return collar.mollify_metric(glued_field(), glued_collar,
                                 MollifierSpec(delta=0.1))


class TestMollify:

    def test_bitwise_outside_band(self, mollified):
        fld = glued_field()
        ch = mollified.collar
        x = 2.0 * np.array([0.6, 0.64, 0.48])
        for t in (-0.9, -0.06, 0.06, 1.0):
            z = ch.to_ambient(x, t)
            ga = mollified.eval(z)
            gb = fld.eval(z)
            assert np.array_equal(ga, gb)

    def test_uniform_closeness_decreases_with_delta(self, glued_collar):
        fld = glued_field()
        sups = []
        x = 2.0 * np.array([1.0, 0.0, 0.0])
        for d in (0.2, 0.1, 0.05):
            mm = collar.mollify_metric(fld, glued_collar, MollifierSpec(delta=d))
            ts = np.linspace(-d / 2, d / 2, 161)
            worst = 0.0
            for t in ts:
                z = glued_collar.to_ambient(x, float(t))
                gap = np.abs(mm.eval(z) - fld.eval(z)).max()
                worst = max(worst, float(gap))
            sups.append(worst)
        assert sups[1] <= sups[0] * 1.05
        assert sups[2] <= sups[1] * 1.05

    def test_smooth_field_band_error_order(self, glued_collar):
        # smooth across Sigma: |g_delta - g| = O(delta^2) on the plateau
        fld = glued_field()
        smooth = metrics.schwarzschild_half(m=2.0, n=3)
        ch = collar.build_collar_field(smooth, DOM, epsilon=2.0)
        gaps = []
        x = np.array([2.0, 0.0, 0.0])
        for d in (0.2, 0.1, 0.05):
            mm = collar.mollify_metric(smooth, ch, MollifierSpec(delta=d))
            z = ch.to_ambient(x, 0.0)
            gaps.append(np.abs(mm.eval(z) - smooth.eval(z)).max())
        # each delta-halving divides the plateau width by 4
        assert gaps[1] < gaps[0] / 8.0
        assert gaps[2] < gaps[1] / 8.0

    def test_delta_cap_enforced(self, glued_collar):
        with pytest.raises(ValueError):
            collar.mollify_metric(glued_field(), glued_collar,
                                  MollifierSpec(delta=0.25))

    def test_ambient_derivatives_refused_in_band(self, mollified):
        z = np.array([2.0001, 0.0, 0.0])
        with pytest.raises(collar.CollarError):
            mollified.d_eval(z)

    def test_positive_definite_in_band(self, mollified):
        x = 2.0 * np.array([0.6, 0.64, 0.48])
        for t in np.linspace(-0.05, 0.05, 21):
            z = mollified.collar.to_ambient(x, float(t))
            g = metrics.metric_eval(mollified, z)
            assert np.linalg.eigvalsh(g)[0] > 0


@pytest.fixture(scope="module")
def reports(glued_collar):
    fld = glued_field()
    out = {}
    for d in (0.2, 0.1, 0.05):
        mm = collar.mollify_metric(fld, glued_collar, MollifierSpec(delta=d))
        out[d] = collar.curvature_control_report(mm, fld, glued_collar,
                                                 MollifierSpec(delta=d))
    return out


class TestCurvatureControl:

    def test_band_integral_is_twice_the_jump(self, reports):
        # the spike integrates to 2 (H_- - H_+): R contains -2 dH/dnu and the
        # mollified H transitions by exactly the jump across the band
        for d, rep in reports.items():
            assert rep.fitted_sign == 1.0
            assert abs(rep.singular_scale - 2.0) < 0.05, (d, rep.singular_scale)

    def test_displayed_coefficient_off_by_factor_two(self, reports):
        # the displayed spike coefficient (the jump itself) underestimates the
        # band integral by that same factor
        for rep in reports.values():
            assert 0.9 < rep.singular_fit_error < 1.1

    def test_smooth_remainder_uniformly_bounded(self, reports):
        bounds = [rep.smooth_bound for rep in reports.values()]
        assert max(bounds) <= 2.0 * min(bounds) + 1e-12

    def test_transition_region_bounded(self, reports):
        # both glued pieces are scalar-flat, so the transition value is tiny;
        # the claim under test is uniform boundedness in delta
        bounds = [rep.transition_bound for rep in reports.values()]
        assert max(bounds) < 1.0

    def test_boundary_mean_bounded(self, reports):
        for rep in reports.values():
            assert rep.boundary_mean_bound < 1e-7

    def test_smooth_field_has_no_spike(self, glued_collar):
        smooth = metrics.schwarzschild_half(m=2.0, n=3)
        ch = collar.build_collar_field(smooth, DOM, epsilon=2.0)
        bounds = []
        for d in (0.2, 0.1):
            mm = collar.mollify_metric(smooth, ch, MollifierSpec(delta=d))
            rep = collar.curvature_control_report(mm, smooth, ch,
                                                  MollifierSpec(delta=d))
            assert abs(np.mean(list(rep.jump_samples.values()))) < 1e-8
            bounds.append(rep.smooth_bound)
        assert max(bounds) <= 2.0 * min(bounds) + 1e-9
