"""Mass integrals against the conformally flat closed-form oracle."""

import numpy as np
import pytest

from masslab import mass, metrics
from masslab.domains import half_space, quarter_space
from masslab.quadrature import QuadratureSpec

SPEC = QuadratureSpec(n_theta=32, n_phi=64, n_r=32)


class TestHalfSpaceMass:
    def test_euclidean_exactly_zero(self):
        fld = metrics.euclidean(3)
        s = mass.half_space_mass_at_radius(fld, 8.0, SPEC)
        assert s.flux_term == 0.0
        assert s.boundary_terms == (0.0,)
        assert s.total == 0.0

    def test_schwarzschild_flux_matches_oracle(self):
        fld = metrics.schwarzschild_half(m=1.0, n=3)
        rho = 8.0
        s = mass.half_space_mass_at_radius(fld, rho, SPEC)
        oracle = mass.schwarzschild_half_mass_oracle(1.0, 3, rho)
        assert abs(s.flux_term - oracle) < 1e-8 * abs(oracle)
        # conformally flat: off-diagonal components vanish on the boundary circle
        assert abs(s.boundary_terms[0]) < 1e-14

    def test_compact_perturbation_zero_beyond_support(self):
        fld = metrics.compact_perturbation(amplitude=0.2, center=3.0, width=1.0)
        s = mass.half_space_mass_at_radius(fld, 6.0, SPEC)
        assert s.total == 0.0

    def test_radius_range_enforced(self):
        dom = half_space(r_outer=8.0)
        with pytest.raises(ValueError):
            mass.half_space_mass_at_radius(metrics.euclidean(3), 7.99,
                                           SPEC, domain=dom)

    def test_total_is_exact_sum(self):
        fld = metrics.schwarzschild_half(m=0.5, n=3)
        s = mass.half_space_mass_at_radius(fld, 6.0, SPEC)
        assert s.total == s.flux_term + sum(s.boundary_terms)


class TestCornerMass:
    def test_euclidean_exactly_zero(self):
        s = mass.corner_mass_at_radius(metrics.euclidean(3), 8.0, SPEC)
        assert s.total == 0.0

    def test_quarter_flux_is_half_hemisphere_flux(self):
        fld = metrics.schwarzschild_half(m=1.0, n=3)
        rho = 8.0
        half = mass.half_space_mass_at_radius(fld, rho, SPEC)
        quarter = mass.corner_mass_at_radius(fld, rho, SPEC)
        assert abs(quarter.flux_term - 0.5 * half.flux_term) \
            < 1e-10 * abs(half.flux_term)
        assert all(abs(b) < 1e-14 for b in quarter.boundary_terms)

    def test_domain_kind_enforced(self):
        dom = quarter_space(r_outer=16.0)
        with pytest.raises(ValueError):
            mass.half_space_mass_at_radius(metrics.euclidean(3), 8.0,
                                           SPEC, domain=dom)


class TestExtrapolation:
    @staticmethod
    def _mk(rho, total):
        return mass.MassSample(rho, total, (), total)

    def test_constant_samples(self):
        samples = [self._mk(r, 2.5) for r in (8.0, 16.0, 32.0)]
        est = mass.extrapolate_mass(samples)
        assert est.m_infinity == 2.5
        assert est.fit_residual == 0.0

    def test_synthetic_power_law(self):
        samples = [self._mk(r, 3.0 + 1.0 / r) for r in (8.0, 16.0, 32.0)]
        est = mass.extrapolate_mass(samples, model=mass.POWER_LAW)
        assert abs(est.m_infinity - 3.0) < 1e-9
        assert abs(est.fit_exponent - 1.0) < 1e-6

    def test_synthetic_power_law_more_samples(self):
        samples = [self._mk(r, 3.0 + 2.0 * r ** -1.5)
                   for r in (6.0, 8.0, 12.0, 16.0, 24.0)]
        est = mass.extrapolate_mass(samples)
        assert abs(est.m_infinity - 3.0) < 1e-8

    def test_richardson_fixed_exponent(self):
        samples = [self._mk(r, 1.0 + 5.0 / r) for r in (8.0, 16.0, 32.0)]
        est = mass.extrapolate_mass(samples, model=mass.RICHARDSON,
                                    tau=1.0, n=3)
        assert abs(est.fit_exponent - 1.0) < 1e-14
        assert abs(est.m_infinity - 1.0) < 1e-10

    def test_needs_three_samples(self):
        with pytest.raises(ValueError):
            mass.extrapolate_mass([self._mk(8.0, 1.0), self._mk(16.0, 1.0)])

    def test_schwarzschild_extrapolated_mass(self):
        # late sample radii keep the single-power model bias inside 0.5%
        fld = metrics.schwarzschild_half(m=1.0, n=3)
        est = mass.mass_estimate(fld, [12.0, 14.0, 15.8], spec=SPEC)
        oracle = mass.schwarzschild_half_mass_oracle(1.0, 3)
        assert abs(est.m_infinity - oracle) < 0.005 * oracle


class TestConformalMassShift:
    def test_unit_factor_zero(self):
        dom = half_space(r_outer=8.0)
        fld = metrics.euclidean(3)
        shift = mass.conformal_mass_shift(
            fld, u=lambda x: 1.0, grad_u=lambda x: np.zeros(3), domain=dom)
        assert shift.value == 0.0

    def test_gradient_term_sign_forced(self):
        # R^- = H^- = 0: the shift is a positive multiple of |grad u|^2
        dom = half_space(r_outer=8.0)
        fld = metrics.euclidean(3)

        def u(x):
            return 1.0 + 0.1 / (1.0 + float(x @ x))

        def grad_u(x):
            return -0.2 * np.asarray(x) / (1.0 + float(x @ x)) ** 2

        shift = mass.conformal_mass_shift(fld, u, grad_u, dom)
        assert shift.value > 0.0
        assert shift.boundary_term == 0.0
