"""Reflection doubling: evaluator semantics, interface regularity, mass ratio."""

import numpy as np
import pytest

from masslab import conformal, doubling, geometry, metrics
from masslab.domains import half_space, quarter_space
from masslab.quadrature import QuadratureSpec

QDOM = quarter_space(n=3, r_inner=2.0, r_outer=16.0, h=1.0 / 16.0)


@pytest.fixture(scope="module")
def flattened():
    fld = metrics.schwarzschild_half(m=1.0, n=3)
    out = conformal.conformally_flatten(fld, 4.0, QDOM)
    return out


@pytest.fixture(scope="module")
def doubled_flat(flattened):
    return doubling.double_manifold(flattened.g_eps, QDOM,
                                    K_radius=flattened.K_radius)


class TestDoubleManifold:
    def test_euclidean_double_is_euclidean(self):
        cfg = doubling.double_manifold(metrics.euclidean(3), QDOM)
        for z in ([1.0, 0.5, 2.0], [1.0, 0.5, -2.0], [0.3, -1.0, -0.2]):
            assert np.array_equal(cfg.doubled.eval(np.array(z)), np.eye(3))

    def test_restriction_reproduces_base_bitwise(self, doubled_flat):
        fld = doubled_flat.base
        for z in ([2.0, 1.0, 0.5], [4.0, -3.0, 2.2], [1.0, 0.1, 0.0]):
            z = np.array(z)
            assert np.array_equal(doubled_flat.doubled.eval(z), fld.eval(z))

    def test_reflection_pushforward_components(self):
        # generic (non-symmetric in x_n) tensor: check the sign map
        def g(x):
            base = np.eye(3) * (1.0 + 0.1 / (1.0 + x @ x))
            base[0, 2] = base[2, 0] = 0.05 * x[0] / (1.0 + x @ x)
            return base

        fld = metrics.MetricField(3, g=g)
        doubled = doubling.DoubledMetricField(fld)
        z = np.array([1.2, 0.4, -0.7])
        zm = np.array([1.2, 0.4, 0.7])
        gz = doubled.eval(z)
        gm = fld.eval(zm)
        assert gz[0, 0] == gm[0, 0]
        assert gz[0, 1] == gm[0, 1]
        assert gz[0, 2] == -gm[0, 2]
        assert gz[2, 2] == gm[2, 2]

    def test_continuity_across_interface(self, doubled_flat):
        d = doubled_flat.doubled
        for x12 in ([2.0, 1.0], [5.0, -2.0]):
            above = np.array([x12[0], x12[1], 1e-13])
            below = np.array([x12[0], x12[1], -1e-13])
            assert np.allclose(d.eval(above), d.eval(below), atol=1e-11)

    def test_non_quarter_domain_rejected(self):
        dom = half_space(n=3)
        with pytest.raises(doubling.DoublingError):
            doubling.double_manifold(metrics.euclidean(3), dom)

    def test_non_geodesic_face_rejected(self):
        # an x_n-odd conformal factor bends the face
        def u(x):
            return 1.0 + 0.2 * x[2] / (1.0 + float(x @ x)) ** 2

        fld = metrics.conformally_flat(u, n=3)
        with pytest.raises(doubling.DoublingError):
            doubling.double_manifold(fld, QDOM)

    def test_one_sided_mean_curvatures_flip(self, doubled_flat):
        # H of the interface sphere from below equals +H^{Sigma_2}-side value
        # and from above equals its negative under the doubled metric
        d = doubled_flat.doubled
        rho = 10.0
        surf = geometry.sphere_chart(rho, 3)
        xb = np.array([0.6, 0.64, 0.48]) * rho
        Hq = geometry.mean_curvature(doubled_flat.base, surf, xb, 1.0 / 16)
        Hd_above = geometry.mean_curvature(d, surf, xb, 1.0 / 16)
        assert abs(Hq - Hd_above) < 1e-10


class TestInterfaceRegularity:
    def test_flattened_passes(self, doubled_flat):
        probes = [np.array([10.0, 2.0, 0.0]), np.array([9.0, -4.0, 0.0])]
        rep = doubling.check_c2_across_interface(doubled_flat, probes,
                                                 h=1.0 / 16.0, tol=1e-5)
        assert rep.passed, rep

    def test_euclidean_exact(self):
        cfg = doubling.double_manifold(metrics.euclidean(3), QDOM)
        rep = doubling.check_c2_across_interface(
            cfg, [np.array([3.0, 1.0, 0.0])], h=1.0 / 16.0)
        assert rep.max_gijn_defect < 1e-12
        assert rep.max_gan_defect < 1e-10

    def test_odd_contamination_detected(self):
        # negative control: an odd-in-x_n part must show in g_ij,n
        def g(x):
            return np.eye(3) * (1.0 + 0.1 * x[2] / (1.0 + x @ x))

        fld = metrics.MetricField(3, g=g)
        cfg = doubling.DoubledConfig(fld, doubling.DoubledMetricField(fld),
                                     K_radius=0.0, domain=QDOM)
        rep = doubling.check_c2_across_interface(
            cfg, [np.array([3.0, 1.0, 0.0])], h=1.0 / 32.0)
        assert rep.max_gijn_defect > 1e-4

    def test_probe_inside_K_rejected(self, doubled_flat):
        with pytest.raises(doubling.DoublingError):
            doubling.check_c2_across_interface(
                doubled_flat, [np.array([1.0, 0.0, 0.0])], h=1.0 / 16.0)


class TestMassRelation:
    def test_euclidean_trivial(self):
        cfg = doubling.double_manifold(metrics.euclidean(3), QDOM)
        rel = doubling.doubled_mass_relation(cfg, [8.0, 12.0])
        assert rel.m_corner == (0.0, 0.0)
        assert rel.m_doubled == (0.0, 0.0)

    def test_flattened_ratio_two(self, doubled_flat):
        rel = doubling.doubled_mass_relation(doubled_flat, [10.0, 12.0, 15.0])
        assert rel.max_ratio_defect < 1e-10, rel

    def test_synthetic_integrand_exact(self):
        # conformally flat, x_n-even: the pairing makes the sum literally 2x
        fld = metrics.schwarzschild_half(m=0.7, n=3)
        cfg = doubling.double_manifold(fld, QDOM)
        rel = doubling.doubled_mass_relation(cfg, [9.0])
        assert rel.max_ratio_defect < 1e-12

    def test_face_terms_must_vanish(self):
        # a metric with nonzero g_{1i} on the face breaks the relation;
        # the x_2-odd coefficient keeps the circle integral from cancelling
        def g(x):
            out = np.eye(3)
            out[0, 1] = out[1, 0] = 0.05 * x[1] / (1.0 + float(x @ x)) ** 1.5
            return out

        fld = metrics.MetricField(3, g=g)
        cfg = doubling.DoubledConfig(fld, doubling.DoubledMetricField(fld),
                                     K_radius=0.0, domain=QDOM)
        with pytest.raises(doubling.DoublingError):
            doubling.doubled_mass_relation(cfg, [8.0])


class TestExtendInterface:
    def test_euclidean_exact(self):
        chart = doubling.extend_interface(metrics.euclidean(3), 6.0, 4.0)
        assert chart.kind == "interface_sphere"
        assert chart.radius == 6.0

    def test_flattened_orthogonality(self, flattened, doubled_flat):
        chart = doubling.extend_interface(doubled_flat.doubled, 10.0,
                                          flattened.K_radius)
        assert chart.radius == 10.0

    def test_radius_inside_K_rejected(self, flattened):
        with pytest.raises(doubling.DoublingError):
            doubling.extend_interface(flattened.g_eps, 6.0, flattened.K_radius)
