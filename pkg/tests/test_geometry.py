"""Pointwise geometry against closed-form and symbolic oracles."""

import numpy as np
import pytest
import sympy as sp

from masslab import geometry, metrics
from masslab.domains import half_space

N = 3
H = 1.0 / 32.0


def conformal_christoffel_oracle(u_expr, x):
    """Symbolic Christoffels of g = u^{4/(n-2)} delta at a point (n = 3)."""
    xs = sp.symbols("x0 x1 x2", real=True)
    k = sp.Rational(4, N - 2)
    g = sp.Matrix.eye(N) * u_expr(xs) ** k
    ginv = g.inv()
    gamma = np.empty((N, N, N))
    subs = dict(zip(xs, x))
    for a in range(N):
        for b in range(N):
            for c in range(N):
                expr = sum(
                    ginv[a, d] * (sp.diff(g[d, b], xs[c]) + sp.diff(g[d, c], xs[b])
                                  - sp.diff(g[b, c], xs[d]))
                    for d in range(N)) / 2
                gamma[a, b, c] = float(expr.subs(subs))
    return gamma


def schwarzschild_u(xs):
    r = sp.sqrt(sum(v ** 2 for v in xs))
    return 1 + 1 / (2 * r)


class TestMetricEval:
    def test_euclidean_identity(self):
        fld = metrics.euclidean(N)
        x = np.array([1.0, -0.5, 2.0])
        assert np.array_equal(metrics.metric_eval(fld, x), np.eye(N))

    def test_conformal_closed_form(self):
        # u = 1 + m/(2|x|^{n-2}), n=3, m=1, |x|=2 -> (1 + 1/4)^4 * I
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        x = np.array([2.0, 0.0, 0.0])
        g = metrics.metric_eval(fld, x)
        assert np.allclose(g, 1.25 ** 4 * np.eye(N), rtol=0, atol=1e-14)

    def test_two_piece_continuity(self):
        fld = metrics.glued_schwarzschild_flat(m=1.0, r0=2.0, n=N)
        dirs = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.2], [0.1, -1.0, 0.4]])
        assert fld.continuity_defect(dirs) < 1e-12

    def test_two_piece_default_side_is_minus(self):
        fld = metrics.glued_schwarzschild_flat(m=1.0, r0=2.0, n=N)
        x = np.array([0.0, 2.0, 0.0])
        g_def = fld.eval(x)
        g_min = fld.eval(x, side="minus")
        assert np.array_equal(g_def, g_min)

    def test_positive_definiteness_enforced(self):
        bad = metrics.MetricField(N, g=lambda x: -np.eye(N))
        with pytest.raises(metrics.MetricError):
            metrics.metric_eval(bad, np.array([1.0, 0.0, 0.0]))

    def test_domain_membership_enforced(self):
        fld = metrics.euclidean(N)
        dom = half_space(n=N, r_outer=4.0)
        with pytest.raises(ValueError):
            metrics.metric_eval(fld, np.array([-1.0, 0.0, 0.0]), domain=dom)


class TestRadialTensorDerivatives:
    """Exact radial derivative algebra against finite differences."""

    def setup_method(self):
        prof = metrics.RadialProfile(
            A=lambda r: 1.0 + 0.3 / r,
            B=lambda r: 1.0 + 0.1 / r ** 2,
            dA=lambda r: -0.3 / r ** 2,
            dB=lambda r: -0.2 / r ** 3,
            ddA=lambda r: 0.6 / r ** 3,
            ddB=lambda r: 0.6 / r ** 4)
        self.fld = metrics.from_radial_profile(prof, n=N)

    def test_first_derivatives_match_fd(self):
        x = np.array([1.3, -0.7, 2.1])
        exact = self.fld.d_eval(x)
        h = 1e-5
        fd = np.empty_like(exact)
        for c in range(N):
            e = np.zeros(N)
            e[c] = h
            fd[:, :, c] = (self.fld.eval(x + e) - self.fld.eval(x - e)) / (2 * h)
        assert np.allclose(exact, fd, atol=1e-8)

    def test_second_derivatives_match_fd(self):
        x = np.array([0.9, 1.1, -1.4])
        exact = self.fld.dd_eval(x)
        h = 1e-4
        fd = np.empty_like(exact)
        for c in range(N):
            for d in range(N):
                ec, ed = np.zeros(N), np.zeros(N)
                ec[c] = h
                ed[d] = h
                fd[:, :, c, d] = (self.fld.eval(x + ec + ed) - self.fld.eval(x + ec - ed)
                                  - self.fld.eval(x - ec + ed)
                                  + self.fld.eval(x - ec - ed)) / (4 * h * h)
        assert np.allclose(exact, fd, atol=1e-6)


class TestChristoffel:
    def test_euclidean_zero(self):
        fld = metrics.euclidean(N)
        gamma = geometry.christoffel(fld, np.array([1.0, 2.0, -1.0]), H)
        assert np.abs(gamma).max() < 1e-13

    def test_conformal_against_symbolic(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        x = np.array([1.2, 0.8, -0.5])
        gamma = geometry.christoffel(fld, x, H)
        oracle = conformal_christoffel_oracle(schwarzschild_u, x)
        assert np.allclose(gamma, oracle, atol=1e-10)

    def test_fd_path_second_order(self):
        # strip exact derivatives to force the FD path
        base = metrics.schwarzschild_half(m=1.0, n=N)
        fld = metrics.MetricField(N, g=base.eval)
        x = np.array([1.2, 0.8, -0.5])
        oracle = conformal_christoffel_oracle(schwarzschild_u, x)
        errs = []
        for h in (0.08, 0.04, 0.02):
            gamma = geometry.christoffel(fld, x, h)
            errs.append(np.abs(gamma - oracle).max())
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        assert all(3.4 <= r <= 4.6 for r in ratios), ratios

    def test_symmetry_in_lower_indices(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        gamma = geometry.christoffel(fld, np.array([0.7, 1.9, 0.4]), H)
        assert np.allclose(gamma, np.transpose(gamma, (0, 2, 1)), atol=1e-14)


class TestScalarCurvature:
    def test_euclidean_zero(self):
        fld = metrics.euclidean(N)
        R = geometry.scalar_curvature(fld, np.array([1.5, 0.3, -0.2]), H)
        assert abs(R) < 1e-10

    def test_harmonic_factor_scalar_flat(self):
        # u = 1 + m/(2r) is flat-harmonic, so R vanishes identically
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        for x in ([1.0, 1.0, 0.5], [3.0, -1.0, 0.2]):
            R = geometry.scalar_curvature(fld, np.array(x), H)
            assert abs(R) < 1e-9, R

    def test_round_sphere_chart(self):
        fld = metrics.stereographic_sphere(N)
        errs = []
        for h in (0.02, 0.01):
            R = geometry.scalar_curvature(fld, np.array([0.4, 0.2, -0.3]), h)
            errs.append(abs(R - fld.exact_scalar_curvature))
        assert errs[-1] < 5e-6
        # exact derivative paths make this limited by roundoff, not h
        assert errs[0] < 5e-6

    def test_round_sphere_fd_metric_only(self):
        base = metrics.stereographic_sphere(N)
        fld = metrics.MetricField(N, g=base.eval)
        x = np.array([0.4, 0.2, -0.3])
        errs = [abs(geometry.scalar_curvature(fld, x, h) - 6.0)
                for h in (0.04, 0.02, 0.01)]
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        assert all(3.0 <= r <= 5.2 for r in ratios), (errs, ratios)


class TestSecondFundamentalForm:
    def test_euclidean_face_totally_geodesic(self):
        fld = metrics.euclidean(N)
        surf = geometry.face_chart(0, N)
        A, _, _ = geometry.second_fundamental_form(
            fld, surf, np.array([0.0, 1.0, 2.0]), H)
        assert np.abs(A).max() < 1e-13

    def test_euclidean_sphere_classical(self):
        fld = metrics.euclidean(N)
        rho = 2.0
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.6, 0.64, 0.48])
        A, induced, _ = geometry.second_fundamental_form(fld, surf, x, H)
        assert np.allclose(A, induced / rho, atol=1e-12)

    def test_conformal_sphere_umbilic_oracle(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        rho = 2.0
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([1.0, 0.0, 0.0])
        A, induced, _ = geometry.second_fundamental_form(fld, surf, x, H)
        u, du = 1.25, -1.0 / 8.0
        # H-law for g~ = u^4 delta, n=3: H = u^-3 (u H_e + 4 du/dr), H_e = 2/rho
        H_oracle = u ** -3 * (u * 2.0 / rho + 4.0 * du)
        # umbilic: A = (H/(n-1)) * induced
        assert np.allclose(A, H_oracle / 2.0 * induced, atol=1e-10)


class TestMeanCurvature:
    def test_euclidean_face_zero(self):
        fld = metrics.euclidean(N)
        surf = geometry.face_chart(0, N)
        Hm = geometry.mean_curvature(fld, surf, np.array([0.0, -1.0, 0.7]), H)
        assert abs(Hm) < 1e-13

    def test_euclidean_sphere_classical(self):
        fld = metrics.euclidean(N)
        rho = 3.0
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.2, 0.4, np.sqrt(1 - 0.2 ** 2 - 0.4 ** 2)])
        Hm = geometry.mean_curvature(fld, surf, x, H)
        assert abs(Hm - (N - 1) / rho) < 1e-12

    def test_schwarzschild_sphere_conformal_law(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        rho = 2.5
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.48, 0.6, 0.64])
        Hm = geometry.mean_curvature(fld, surf, x, H)
        u = 1 + 0.5 / rho
        du = -0.5 / rho ** 2
        H_oracle = u ** -3 * (u * (N - 1) / rho + 4.0 * du)
        assert abs(Hm - H_oracle) < 1e-10

    def test_trace_vs_divergence_consistency(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        rho = 2.5
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.48, 0.6, 0.64])
        Ht = geometry.mean_curvature(fld, surf, x, 1e-4, method="trace")
        Hd = geometry.mean_curvature(fld, surf, x, 1e-4, method="divergence")
        assert abs(Ht - Hd) < 1e-7

    def test_glued_one_sided_jump(self):
        fld = metrics.glued_schwarzschild_flat(m=1.0, r0=2.0, n=N)
        surf = geometry.sphere_chart(2.0, N)
        x = np.array([2.0, 0.0, 0.0])
        Hm = geometry.mean_curvature(fld, surf, x, H, side="minus")
        Hp = geometry.mean_curvature(fld, surf, x, H, side="plus")
        # closed forms: flat core 2/(u0^2 r0); exterior conformal law
        u0 = 1.25
        assert abs(Hm - 2.0 / (u0 ** 2 * 2.0)) < 1e-10
        Hp_oracle = u0 ** -3 * (u0 * 1.0 + 4.0 * (-1.0 / 8.0))
        assert abs(Hp - Hp_oracle) < 1e-10
        assert Hm > Hp


class TestSurfaceScalarCurvature:
    def test_euclidean_sphere(self):
        fld = metrics.euclidean(N)
        rho = 2.0
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.6, 0.64, 0.48])
        Rs = geometry.surface_scalar_curvature(fld, surf, x, H)
        assert abs(Rs - (N - 1) * (N - 2) / rho ** 2) < 1e-10

    def test_brioschi_matches_radial_closed_form(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        rho = 2.5
        surf = geometry.sphere_chart(rho, N)
        x = rho * np.array([0.48, 0.6, 0.64])
        fast = geometry.surface_scalar_curvature(fld, surf, x, H)
        generic = metrics.MetricField(N, g=fld.eval)
        errs = [abs(geometry.surface_scalar_curvature(generic, surf, x, h) - fast)
                for h in (H, H / 2.0)]
        assert errs[1] < errs[0]
        assert errs[1] < 1e-4 * abs(fast)

    def test_face_is_flat_for_euclidean(self):
        fld = metrics.MetricField(N, g=metrics.euclidean(N).eval)
        surf = geometry.face_chart(0, N)
        Rs = geometry.surface_scalar_curvature(fld, surf,
                                               np.array([0.0, 1.0, 0.5]), H)
        assert abs(Rs) < 1e-10


class TestDecayProfile:
    def test_euclidean_sentinel(self):
        fit = geometry.decay_profile(metrics.euclidean(N), [4.0, 6.0, 8.0])
        assert fit.tau_hat == float("inf")
        assert not fit.violates_declared

    def test_schwarzschild_order(self):
        fld = metrics.schwarzschild_half(m=1.0, n=N)
        fit = geometry.decay_profile(fld, [16.0, 24.0, 32.0])
        assert abs(fit.tau_hat - 1.0) < 0.1
        assert not fit.violates_declared

    def test_compact_perturbation_flat_outside(self):
        fld = metrics.compact_perturbation(amplitude=0.2, center=3.0, width=1.0)
        fit = geometry.decay_profile(fld, [5.0, 7.0, 9.0])
        assert fit.tau_hat == float("inf")

    def test_needs_three_radii(self):
        with pytest.raises(ValueError):
            geometry.decay_profile(metrics.euclidean(N), [4.0, 8.0])
