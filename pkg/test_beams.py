"""
Tests for the Jacobi/Riccati integrator, Floquet data and Gaussian beams.
"""

import math

import numpy as np
import pytest

from beams import (
    BeamDomainError,
    CausticError,
    StepSizeError,
    beam_complexify,
    beam_eval,
    build_beam,
    curvature_preset,
    floquet_factor,
    integrate_jacobi,
    integrate_jacobi_refined,
    oscillator_frame,
    poincare_from_jacobi,
    riccati_gamma,
    riccati_report,
    richardson_check,
    sphere_beam_error,
    tabulated_curvature,
)
from geometries import highest_weight_norm2
from symplectic import (
    DegenerateElliptic,
    Elliptic,
    HyperbolicPositive,
    check_symplectic,
    rotation,
)

TWO_PI = 2 * math.pi
TAU = 0.5


def coupled_curvature(s):
    return np.array([[1.0 + 0.1 * np.cos(s), 0.05], [0.05, 1.5]])


@pytest.fixture(scope="module")
def sphere_beam():
    return build_beam(curvature_preset("sphere"), TWO_PI, 50, steps=4000)


@pytest.fixture(scope="module")
def stable_profile():
    # mean curvature 1.3 keeps cos(2s) away from the parametric resonance at 1
    return curvature_preset("perturbed-sphere", epsilon=0.1, mode=2, base=1.3)


class TestIntegrateJacobi:
    def test_sphere_frame_rotates(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi(curvature_preset("sphere"), TWO_PI, Y0, V0, 2000)
        expected = np.exp(1j * sol.grid) / math.sqrt(2)
        assert np.max(np.abs(sol.Y[:, 0, 0] - expected)) < 1e-9

    def test_flat_case_is_linear(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi(lambda s: 0.0, 3.0, Y0, V0, 30)
        expected = (1 + 1j * sol.grid) / math.sqrt(2)
        assert np.max(np.abs(sol.Y[:, 0, 0] - expected)) < 1e-12

    def test_perturbed_wronskian_drift(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi(curvature_preset("perturbed-sphere", 0.1, 1), TWO_PI, Y0, V0, 10_000)
        assert sol.wronskian_drift < 1e-8

    def test_coupled_frame_drift(self):
        Y0, V0 = oscillator_frame(2)
        sol = integrate_jacobi(coupled_curvature, TWO_PI, Y0, V0, 4000)
        assert sol.d == 2
        assert sol.wronskian_drift < 1e-8

    def test_richardson_certifies_fourth_order(self):
        Y0, V0 = oscillator_frame(1)
        report = richardson_check(curvature_preset("perturbed-sphere", 0.1, 1), TWO_PI, Y0, V0, 100)
        assert report.order == pytest.approx(4.0, abs=0.3)
        assert report.error_estimate < 1e-6

    def test_rejects_unnormalized_frame(self):
        with pytest.raises(BeamDomainError):
            integrate_jacobi(curvature_preset("sphere"), TWO_PI, [[1.0]], [[0.0]], 100)

    def test_caustic_detected(self):
        with pytest.raises(CausticError):
            integrate_jacobi(curvature_preset("sphere"), math.pi, [[1.0]], [[0.0]], 1000, normalized=False)

    def test_coarse_steps_raise(self):
        Y0, V0 = oscillator_frame(1)
        with pytest.raises(StepSizeError):
            integrate_jacobi(lambda s: 400.0, TWO_PI, Y0, V0, 10)

    def test_refinement_doubles_steps(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi_refined(curvature_preset("sphere"), TWO_PI, Y0, V0, 16)
        assert sol.steps in (64, 128)
        assert sol.wronskian_drift <= 1e-6

    def test_refinement_gives_up(self):
        Y0, V0 = oscillator_frame(1)
        with pytest.raises(StepSizeError):
            integrate_jacobi_refined(lambda s: 400.0, TWO_PI, Y0, V0, 10)


class TestRiccati:
    def test_sphere_gamma_is_i(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi(curvature_preset("sphere"), TWO_PI, Y0, V0, 2000)
        gamma = riccati_gamma(sol)
        assert np.max(np.abs(gamma - 1j)) < 1e-8

    def test_perturbed_report(self):
        Y0, V0 = oscillator_frame(1)
        sol = integrate_jacobi(curvature_preset("perturbed-sphere", 0.1, 1), TWO_PI, Y0, V0, 10_000)
        report = riccati_report(sol)
        assert report.residual < 1e-6
        assert report.identity_error < 1e-8
        assert report.min_imag_eigenvalue > 0

    def test_coupled_gamma_symmetric(self):
        Y0, V0 = oscillator_frame(2)
        sol = integrate_jacobi(coupled_curvature, TWO_PI, Y0, V0, 4000)
        report = riccati_report(sol)
        assert report.symmetry_error < 1e-8
        assert report.identity_error < 1e-8
        assert report.min_imag_eigenvalue > 0

    def test_gamma_invariant_under_frame_change(self):
        Y0, V0 = oscillator_frame(2)
        mix = np.array([[1.0, 0.3], [-0.2, 2.0]])
        sol = integrate_jacobi(coupled_curvature, TWO_PI, Y0, V0, 2000)
        mixed = integrate_jacobi(coupled_curvature, TWO_PI, Y0 @ mix, V0 @ mix, 2000, normalized=False)
        assert np.max(np.abs(riccati_gamma(sol) - riccati_gamma(mixed))) < 1e-9


class TestPoincareFromJacobi:
    def test_full_rotation_is_identity(self):
        sol = integrate_jacobi(curvature_preset("sphere"), TWO_PI, *oscillator_frame(1), 2000)
        data = poincare_from_jacobi(sol)
        assert np.max(np.abs(data.S.matrix - np.eye(2))) < 1e-8
        assert isinstance(data.tag, DegenerateElliptic)
        assert data.exponents == pytest.approx([TWO_PI], abs=1e-6)

    def test_half_period_is_rotation_by_pi(self):
        sol = integrate_jacobi(curvature_preset("sphere"), math.pi, *oscillator_frame(1), 2000)
        data = poincare_from_jacobi(sol)
        assert np.max(np.abs(data.S.matrix - rotation(math.pi).matrix)) < 1e-8
        assert data.T == math.pi
        assert data.exponents == pytest.approx([math.pi], abs=1e-6)

    def test_stable_perturbation_is_elliptic(self, stable_profile):
        sol = integrate_jacobi(stable_profile, TWO_PI, *oscillator_frame(1), 4000)
        data = poincare_from_jacobi(sol)
        assert isinstance(data.tag, Elliptic)
        assert np.abs(np.linalg.eigvals(data.S.matrix)) == pytest.approx([1.0, 1.0], abs=1e-8)
        assert check_symplectic(data.S, 1e-8)
        assert len(data.exponents) == 1
        assert data.exponents[0] == pytest.approx(TWO_PI * math.sqrt(1.3), abs=0.1)

    def test_resonant_perturbation_is_hyperbolic(self):
        profile = curvature_preset("perturbed-sphere", epsilon=0.1, mode=2)
        sol = integrate_jacobi(profile, TWO_PI, *oscillator_frame(1), 4000)
        data = poincare_from_jacobi(sol)
        assert isinstance(data.tag, HyperbolicPositive)
        assert data.exponents == []


class TestBeams:
    def test_quantized_r(self, sphere_beam):
        assert sphere_beam.r_kq == pytest.approx(50.5, abs=1e-8)
        assert sphere_beam.alphas == pytest.approx((TWO_PI,), abs=1e-6)
        assert floquet_factor(sphere_beam) == pytest.approx(1.0, abs=1e-8)

    def test_normalization_constant(self, sphere_beam):
        r = sphere_beam.r_kq
        expected = (TWO_PI * math.sqrt(TWO_PI / r)) ** -0.5
        assert sphere_beam.c0 == pytest.approx(expected, rel=1e-9)

    def test_modulus_constant_along_geodesic(self, sphere_beam):
        moduli = [abs(beam_eval(sphere_beam, s, 0.0)) for s in (0.0, 0.4, 1.7, 3.3, 5.9)]
        assert moduli == pytest.approx([moduli[0]] * 5, rel=1e-9)

    def test_transverse_gaussian_decay(self, sphere_beam):
        y = 0.5 * sphere_beam.tube_radius
        ratio = abs(beam_eval(sphere_beam, 1.1, y)) / abs(beam_eval(sphere_beam, 1.1, 0.0))
        assert ratio == pytest.approx(math.exp(-sphere_beam.r_kq * y ** 2 / 2), rel=1e-8)

    def test_periodic_in_s(self, sphere_beam):
        here = beam_eval(sphere_beam, 0.7, 0.1)
        there = beam_eval(sphere_beam, 0.7 + TWO_PI, 0.1)
        assert abs(there - here) < 1e-8 * abs(here)

    def test_phase_matches_highest_weight(self, sphere_beam):
        value = beam_eval(sphere_beam, 0.3, 0.0)
        assert np.angle(value) == pytest.approx(np.angle(np.exp(50j * 0.3)), abs=1e-8)

    def test_outside_tube_rejected(self, sphere_beam):
        with pytest.raises(BeamDomainError):
            beam_eval(sphere_beam, 0.0, 2 * sphere_beam.tube_radius)

    def test_excited_beam_cannot_be_evaluated(self):
        spec = build_beam(curvature_preset("sphere"), TWO_PI, 10, steps=2000, q=(1,))
        assert spec.r_kq == pytest.approx(11.5, abs=1e-8)
        with pytest.raises(BeamDomainError):
            beam_eval(spec, 0.0, 0.0)

    def test_complexify_at_real_point(self, sphere_beam):
        real = beam_eval(sphere_beam, 0.7, 0.1)
        continued = beam_complexify(sphere_beam, 0.7, 0.0, 0.1, 0.0)
        assert abs(continued - real) < 1e-12 * abs(real)

    def test_growth_direction(self, sphere_beam):
        r = sphere_beam.r_kq
        down = abs(beam_complexify(sphere_beam, 0.2, -TAU, tau=TAU))
        up = abs(beam_complexify(sphere_beam, 0.2, TAU, tau=TAU))
        # the det Y factor contributes e^{tau} on the sphere
        assert up / down == pytest.approx(math.exp(-2 * r * TAU + TAU), rel=1e-6)

    def test_sigma_outside_tube_rejected(self, sphere_beam):
        with pytest.raises(BeamDomainError):
            beam_complexify(sphere_beam, 0.0, -0.6, tau=TAU)

    def test_tabulated_profile_not_continued(self):
        s = np.linspace(0.0, TWO_PI, 65)
        k = 1.3 + 0.1 * np.cos(2 * s)
        k[-1] = k[0]
        spec = build_beam(tabulated_curvature(s, k), TWO_PI, 10, steps=2000)
        assert abs(beam_eval(spec, 1.0, 0.0)) > 0
        with pytest.raises(BeamDomainError):
            beam_complexify(spec, 1.0, -0.1)

    def test_hyperbolic_geodesic_has_no_beam(self):
        with pytest.raises(BeamDomainError):
            build_beam(curvature_preset("perturbed-sphere", epsilon=0.1, mode=2), TWO_PI, 10, steps=2000)

    def test_stable_beam_quantization(self, stable_profile):
        spec = build_beam(stable_profile, TWO_PI, 20, steps=4000)
        assert spec.r_kq == pytest.approx((TWO_PI * 20 + 0.5 * spec.alphas[0]) / TWO_PI, rel=1e-12)
        assert floquet_factor(spec) == pytest.approx(1.0, abs=1e-8)
        here = beam_eval(spec, 0.9, 0.05)
        assert abs(beam_eval(spec, 0.9 + TWO_PI, 0.05) - here) < 1e-7 * abs(here)

    def test_unknown_preset(self):
        with pytest.raises(BeamDomainError):
            curvature_preset("ellipsoid")


@pytest.mark.slow
class TestSphereCrossValidation:
    def test_complexified_beam_matches_highest_weight_growth(self):
        ratios = []
        for N in (50, 100):
            spec = build_beam(curvature_preset("sphere"), TWO_PI, N)
            exact = math.exp(N * TAU) / math.sqrt(highest_weight_norm2(N))
            ratios.append(abs(beam_complexify(spec, 0.0, -TAU, tau=TAU)) / exact)
        assert ratios[0] == pytest.approx(1.0, rel=0.05)
        assert abs(ratios[1] / ratios[0] - 1) < 0.05

    def test_error_decays_like_one_over_n(self):
        e50 = sphere_beam_error(50)
        e100 = sphere_beam_error(100)
        assert e50 < 0.1
        assert e100 / e50 <= 0.6
