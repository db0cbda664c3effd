"""
Tests for the circle, flat torus and round sphere models.
"""

import math

import numpy as np
import pytest
from scipy.special import eval_legendre, gammaln, lpmv

from geometries import (
    AccuracyError,
    DomainError,
    LatticeHarmonic,
    NotPeriodic,
    ResourceError,
    boundary_volume,
    build_eigendata,
    circle_eigendata,
    create_geometry,
    flat_torus_derivative_bound,
    flat_torus_modulus,
    flat_torus_q,
    geodesic_flow,
    grauert_radius,
    highest_weight_gamma_ratio,
    highest_weight_norm2,
    legendre_complex,
    legendre_log_table,
    legendre_quadrature,
    poincare_data,
    primitive_lattice_direction,
    sphere_coherent_state,
    sphere_eigendata,
    sphere_projection_kernel,
    sphere_tube_point,
    torus_eigendata,
    tube_point,
)
from qfunction import sawtooth_partial_sum
from symplectic import DegenerateElliptic, Parabolic, Trivial, check_symplectic

CIRCLE = create_geometry("circle")
TORUS2 = create_geometry("torus", 2)
SPHERE = create_geometry("sphere")


def wrapped_distance(a, b):
    return float(np.max(np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))))


class TestGeometryFactory:
    def test_torus_requires_m(self):
        with pytest.raises(DomainError):
            create_geometry("torus")

    def test_unknown(self):
        with pytest.raises(DomainError):
            create_geometry("ellipsoid")

    def test_dimensions(self):
        assert CIRCLE.m == 1
        assert SPHERE.m == 2
        assert TORUS2.label == "torus(m=2)"


class TestCircle:
    def test_count(self):
        assert len(circle_eigendata(10)) == 21

    def test_order(self):
        data = circle_eigendata(2)
        assert [entry.index for entry in data] == [0, -1, 1, -2, 2]
        assert list(data.lambdas) == [0, 1, 1, 2, 2]

    def test_constant_harmonic(self):
        p = tube_point(CIRCLE, [1.3], [-1.0], 0.7)
        entry = circle_eigendata(3)[0]
        assert entry.eval_complexified(p) == pytest.approx(1.0)
        assert entry.eval_abs2(p) == 1.0

    def test_growth_off_real_axis(self):
        p = tube_point(CIRCLE, [0.2], [-1.0], 0.5)
        assert LatticeHarmonic(CIRCLE, (3,)).abs2(p) == pytest.approx(math.exp(3.0))

    def test_abs2_matches_value(self):
        p = tube_point(CIRCLE, [0.4], [1.0], 0.3)
        for entry in circle_eigendata(5):
            assert entry.eval_abs2(p) == pytest.approx(abs(entry.eval_complexified(p)) ** 2, rel=1e-12)

    def test_real_restriction(self):
        p = tube_point(CIRCLE, [0.9], [1.0], 0.0)
        assert LatticeHarmonic(CIRCLE, (4,)).value(p) == pytest.approx(np.exp(3.6j), abs=1e-12)


class TestTorus:
    def test_weight_at_maximizing_fiber(self):
        tau = 0.5
        p = tube_point(TORUS2, [0.1, 0.2], [-1.0, 0.0], tau)
        assert LatticeHarmonic(TORUS2, (1, 0)).abs2(p) == pytest.approx(math.exp(2 * tau))

    def test_constant_harmonic(self):
        p = tube_point(TORUS2, [0.1, 0.2], [0.6, 0.8], 1.0)
        assert LatticeHarmonic(TORUS2, (0, 0)).abs2(p) == 1.0

    @pytest.mark.parametrize("lambda_max,count", [(5, 81), (3, 29)])
    def test_lattice_count(self, lambda_max, count):
        assert len(torus_eigendata(2, lambda_max)) == count

    def test_matches_brute_force(self):
        data = torus_eigendata(3, 4.5)
        brute = sum(1 for a in range(-5, 6) for b in range(-5, 6) for c in range(-5, 6)
                    if a * a + b * b + c * c <= 4.5 ** 2)
        assert len(data) == brute
        assert np.all(np.diff(data.lambdas) >= 0)

    def test_worker_count_does_not_change_order(self):
        single = torus_eigendata(2, 20, workers=1)
        pooled = torus_eigendata(2, 20, workers=4)
        assert np.array_equal(single.lattice, pooled.lattice)

    def test_resource_budget(self):
        with pytest.raises(ResourceError) as excinfo:
            torus_eigendata(3, 1000)
        assert excinfo.value.estimate > 10 ** 9

    def test_vectorized_weights_match_entries(self):
        data = torus_eigendata(2, 4)
        p = tube_point(TORUS2, [0.3, 1.1], [0.6, -0.8], 0.4)
        values = data.values(p)
        for i, entry in enumerate(data):
            assert values[i] == pytest.approx(entry.eval_complexified(p), rel=1e-12)


class TestSphereHarmonics:
    def test_gamma_ratio(self):
        assert highest_weight_gamma_ratio(2) == pytest.approx(0.601802, abs=1e-6)

    def test_constant_harmonic_normalization(self):
        data = sphere_eigendata(3)
        p = tube_point(SPHERE, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 0.0)
        assert data.highest_weight(0).abs2(p) == pytest.approx(1 / (4 * math.pi))

    @pytest.mark.parametrize("N", [1, 5, 12])
    def test_highest_weight_unit_norm(self, N):
        nodes, weights = np.polynomial.legendre.leggauss(64)
        sin_phi = np.sqrt(1 - nodes ** 2)
        integrand = np.abs(sin_phi) ** (2 * N) / highest_weight_norm2(N)
        total = np.sum(weights * integrand) * 2 * math.pi
        assert total == pytest.approx(1.0, rel=1e-12)

    def test_zonal_at_north_pole(self):
        data = sphere_eigendata(10)
        p = tube_point(SPHERE, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.0)
        N = 7
        expected = math.sqrt((2 * N + 1) / (4 * math.pi))
        assert data.zonal(N).value(p) == pytest.approx(expected, rel=1e-12)

    def test_zonal_quadrature_matches_recurrence(self, rng):
        for N in (3, 20, 60):
            z = rng.uniform(-2.0, 2.0, size=5) + 0.3j * rng.normal(size=5)
            assert np.allclose(legendre_quadrature(N, z), legendre_complex(N, z), rtol=1e-9)

    def test_legendre_matches_scipy_on_real_axis(self):
        x = np.linspace(-1, 1, 11)
        assert np.allclose(legendre_complex(9, x).real, eval_legendre(9, x), atol=1e-12)

    def test_legendre_log_table(self):
        logs = legendre_log_table(40, 1.7)
        assert logs[40] == pytest.approx(math.log(eval_legendre(40, 1.7)), rel=1e-12)

    def test_under_resolved_quadrature(self):
        with pytest.raises(AccuracyError):
            legendre_quadrature(50, 0.3, nodes=100)
        with pytest.raises(AccuracyError):
            sphere_eigendata(10, quadrature_nodes=40)

    @pytest.mark.parametrize("N", [0, 3, 11, 20])
    def test_addition_theorem(self, N, rng):
        x = rng.normal(size=3)
        y = rng.normal(size=3)
        x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)

        def harmonics(point):
            phi = math.acos(point[2])
            theta = math.atan2(point[1], point[0])
            out = []
            for order in range(0, N + 1):
                scale = math.sqrt((2 * N + 1) / (4 * math.pi)
                                  * math.exp(gammaln(N - order + 1) - gammaln(N + order + 1)))
                out.append(scale * lpmv(order, N, math.cos(phi)) * np.exp(1j * order * theta))
            return np.array(out)

        hx, hy = harmonics(x), harmonics(y)
        total = (hx[0] * np.conj(hy[0])).real + 2 * np.sum((hx[1:] * np.conj(hy[1:])).real)
        kernel = sphere_projection_kernel(N, x, y)
        assert kernel.real == pytest.approx(total, abs=1e-10 * (2 * N + 1))
        assert kernel.real == pytest.approx((2 * N + 1) / (4 * math.pi) * eval_legendre(N, x @ y), abs=1e-12)

    def test_cluster_dominates_single_harmonics(self):
        data = sphere_eigendata(15)
        p = sphere_tube_point(1.1, 0.4, 2.0, 0.3)
        clusters = data.abs2(p)
        for N in (1, 8, 15):
            assert data.highest_weight(N).abs2(p) <= clusters[N] * (1 + 1e-12)
            assert data.zonal(N).abs2(p) <= clusters[N] * (1 + 1e-12)

    def test_cluster_on_real_sphere(self):
        data = sphere_eigendata(6)
        p = tube_point(SPHERE, [0.0, 0.6, 0.8], [1.0, 0.0, 0.0], 0.0)
        degrees = np.arange(7)
        assert np.allclose(data.abs2(p), (2 * degrees + 1) / (4 * math.pi))
        assert data[4].multiplicity == 9
        assert data[4].eval_complexified is None

    def test_coherent_state_peaks_at_centre(self):
        centre = sphere_tube_point(0.9, 0.3, 1.2, 0.4)
        state = sphere_coherent_state(10, centre)
        peak = state.abs2(centre)
        for phi, theta, psi in [(0.5, 0.3, 1.2), (0.9, 1.0, 1.2), (0.9, 0.3, 2.5)]:
            assert state.abs2(sphere_tube_point(phi, theta, psi, 0.4)) < peak

    def test_coherent_state_radius_mismatch(self):
        with pytest.raises(DomainError):
            sphere_coherent_state(3, sphere_tube_point(1.0, 0.0, 0.0, 0.4), tau=0.5)


class TestTubePoints:
    def test_sphere_example(self):
        p = tube_point(SPHERE, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.5)
        assert np.allclose(p.zeta, [0.521095j, 0.0, 1.127626], atol=1e-6)
        assert np.sum(p.zeta * p.zeta) == pytest.approx(1.0, abs=1e-12)

    def test_frame_points_satisfy_tube_constraint(self, rng):
        for _ in range(20):
            phi, theta, psi = rng.uniform(0.1, 3.0), rng.uniform(0, 6.2), rng.uniform(0, 6.2)
            tau = rng.uniform(0.05, 1.5)
            p = sphere_tube_point(phi, theta, psi, tau)
            assert abs(np.sum(p.zeta * p.zeta) - 1.0) < 1e-12
            assert grauert_radius(p) == pytest.approx(tau, abs=1e-10)

    def test_non_unit_direction(self):
        with pytest.raises(DomainError):
            tube_point(TORUS2, [0.0, 0.0], [1.0, 1.0], 0.5)

    def test_non_tangent_direction(self):
        with pytest.raises(DomainError):
            tube_point(SPHERE, [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], 0.5)

    def test_zero_radius_is_real_point(self):
        p = tube_point(SPHERE, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], 0.0)
        assert np.allclose(p.zeta, [0.0, 1.0, 0.0])

    def test_torus_radius(self):
        p = tube_point(TORUS2, [0.0, 0.0], [1.0, 0.0], 0.5)
        assert grauert_radius(p) == pytest.approx(0.5)


class TestGeodesicFlow:
    def test_identity_at_zero(self):
        p = sphere_tube_point(1.0, 2.0, 0.5, 0.3)
        q = geodesic_flow(p, 0.0)
        assert np.allclose(q.x, p.x) and np.allclose(q.direction, p.direction)

    def test_sphere_closes_after_two_pi(self):
        p = sphere_tube_point(0.7, 1.9, 2.3, 0.8)
        q = geodesic_flow(p, 2 * math.pi)
        assert np.allclose(q.zeta, p.zeta, atol=1e-12)

    def test_group_law(self):
        p = sphere_tube_point(0.7, 1.9, 2.3, 0.8)
        a = geodesic_flow(p, 1.3 + 0.4)
        b = geodesic_flow(geodesic_flow(p, 1.3), 0.4)
        assert np.allclose(a.zeta, b.zeta, atol=1e-12)

        t = tube_point(TORUS2, [0.1, 0.2], [0.6, 0.8], 0.5)
        a = geodesic_flow(t, 2.5)
        b = geodesic_flow(geodesic_flow(t, 1.0), 1.5)
        assert wrapped_distance(a.x, b.x) < 1e-12

    def test_torus_closes_after_period(self):
        k = np.array([1, 2])
        p = tube_point(TORUS2, [0.3, 0.4], k / np.linalg.norm(k), 0.5)
        data = poincare_data(p)
        assert data.T == pytest.approx(2 * math.pi * math.sqrt(5))
        assert wrapped_distance(geodesic_flow(p, data.T).x, p.x) < 1e-10


class TestPoincareData:
    def test_torus_axis_direction(self):
        data = poincare_data(tube_point(TORUS2, [0.0, 0.0], [1.0, 0.0], 0.5))
        assert data.T_literal == pytest.approx(1.0)
        assert data.T == pytest.approx(2 * math.pi)
        assert isinstance(data.tag, Parabolic)
        assert check_symplectic(data.S)
        assert data.lattice_vector == (1, 0)

    def test_irrational_direction(self):
        direction = np.array([1.0, math.sqrt(2)]) / math.sqrt(3)
        assert isinstance(poincare_data(tube_point(TORUS2, [0.0, 0.0], direction, 0.5)), NotPeriodic)

    def test_circle(self):
        data = poincare_data(tube_point(CIRCLE, [0.0], [-1.0], 0.5))
        assert data.T == pytest.approx(2 * math.pi)
        assert isinstance(data.tag, Trivial)

    def test_sphere(self):
        data = poincare_data(sphere_tube_point(1.0, 0.0, 0.0, 0.5))
        assert data.T == pytest.approx(2 * math.pi)
        assert isinstance(data.tag, DegenerateElliptic)

    def test_primitive_direction(self):
        k = primitive_lattice_direction(np.array([2.0, -4.0]) / math.sqrt(20))
        assert list(k) == [1, -2]


class TestFlatTorusSeries:
    def test_zero_lambda(self):
        assert flat_torus_q((1, 0), 0.5, 0.0, 2, 1000) == 0.0

    def test_one_dimension_reduces_to_sawtooth(self):
        lam = np.array([0.3, 1.7, 2.2])
        expected = sawtooth_partial_sum(lam * 2.0, 500) / (2 * 2.0)
        assert np.allclose(flat_torus_q((2,), 0.5, lam, 1, 500), expected, atol=1e-12)

    def test_modulus_bounded_by_derivative(self):
        grid = np.linspace(0.0, 5.0, 101)
        h = 1e-3
        modulus = flat_torus_modulus((1, 0), 0.5, grid, h, 2, 2000)
        assert modulus <= flat_torus_derivative_bound((1, 0), 0.5, 5.0 + h, 2, 2000) * h

    def test_conventions_differ_by_period(self):
        literal = flat_torus_q((1, 0), 0.5, 1.0, 2, 200, convention="literal")
        normalized = flat_torus_q((1, 0), 0.5, 1.0, 2, 200, convention="normalized")
        assert literal != normalized

    def test_zero_vector(self):
        with pytest.raises(DomainError):
            flat_torus_q((0, 0), 0.5, 1.0, 2, 10)


class TestBuildEigendata:
    def test_sphere_cutoff(self):
        data = build_eigendata(SPHERE, math.sqrt(12.0))
        assert data.N_max == 3

    def test_boundary_volume(self):
        assert boundary_volume(TORUS2, 0.5) == pytest.approx(math.pi)
        assert boundary_volume(CIRCLE, 0.5) == pytest.approx(2.0)
