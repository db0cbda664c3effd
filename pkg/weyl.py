"""
Tempered Weyl Sums Module

Brute-force tempered spectral sums P^tau_[0,lambda](zeta) over model
eigendata, boundary L^2 norms and Husimi distributions, band-limited
smoothing kernels, period-coefficient extraction and the power-law fits
used to compare the sums against two-term asymptotics.

Every reduction over eigendata is correctly rounded (math.fsum or the
running-sum accumulator), so results do not depend on chunking or on the
worker count.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize
from scipy.integrate import trapezoid
from scipy.special import ive, logsumexp, roots_jacobi

from geometries import (
    Eigendata,
    Geometry,
    LatticeHarmonic,
    NotPeriodic,
    SphereEigendata,
    SphereHarmonic,
    TubePoint,
    boundary_volume,
    circle_eigendata,
    cluster_center,
    grauert_radius,
    poincare_data,
    sphere_frame_zetas,
    sphere_tube_point,
    tube_point,
)
from qfunction import QFunctionSpec, q_eval
from workers import ordered_map

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
# Husimi search grids must resolve the lambda^{-1/2} concentration scale
GRID_RESOLUTION = 0.2
# |chi(x)| below this fraction of chi(0) counts as outside the kernel
KERNEL_FLOOR = 1e-14
LOOKUP_TOL = 1e-9

Harmonic = Union[LatticeHarmonic, SphereHarmonic]


class WeylError(Exception):
    """Custom exception for tempered-sum computations."""
    pass


class CoverageError(WeylError):
    """Raised when eigendata does not reach the requested spectral window."""
    pass


class AccuracyError(WeylError):
    """Raised for under-resolved quadratures or search grids."""
    pass


class SpectrumLookupError(WeylError):
    """Raised when a requested eigenvalue is not in the eigendata."""
    pass


class ConfigurationError(WeylError):
    """Raised for inconsistent kernel, window or geometry parameters."""
    pass


class InternalError(WeylError):
    """Raised when a quantity that is positive by construction is not."""
    pass


@dataclass
class TemperedSumSeries:
    geometry: str
    zeta: TubePoint
    tau: float
    grid: np.ndarray
    values: np.ndarray
    jump_records: List[Tuple[float, float]] = field(default_factory=list)

    def to_rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.grid.tolist(), self.values.tolist()))


@dataclass
class FitResult:
    exponent: float
    amplitude: float
    residual: float
    window: Tuple[float, float]
    details: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HusimiSup:
    value: float
    amplitude: float
    argmax: TubePoint
    log_peak: float  # log |phi^C|^2 at the argmax, before normalization
    norm2: float
    within_bound: Optional[bool] = None


@dataclass
class UniversalBound:
    A: float
    calibration_window: Tuple[float, float]
    worst_ratio: float
    holds: bool


# Running sums

class RunningSum:
    """
    Like math.fsum, but allows a running sum.

    Partials form a nonoverlapping expansion of the exact total; total()
    rounds it once, so any prefix total is bitwise equal to math.fsum of
    the same prefix.
    """

    def __init__(self):
        self.partials: List[float] = []

    def add(self, x: float) -> None:
        partials = self.partials
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def total(self) -> float:
        return math.fsum(self.partials)


def _check_coverage(eigendata: Eigendata, lam: float, what: str = "lambda") -> None:
    if lam > eigendata.cutoff:
        raise CoverageError(f"{what}={lam:g} exceeds the eigendata cutoff {eigendata.cutoff:g}")


def _check_radius(zeta: TubePoint, tau: float) -> None:
    radius = grauert_radius(zeta)
    if abs(radius - tau) > 1e-9 * max(1.0, tau):
        logger.debug("tau=%g differs from sqrt(rho)=%g at the evaluation point", tau, radius)


def _weights(eigendata: Eigendata, zeta: TubePoint, tau: float) -> np.ndarray:
    _check_radius(zeta, tau)
    return eigendata.weights(zeta, tau)


# Tempered sums

def _prefix_sum(eigendata: Eigendata, weights: np.ndarray, lam: float) -> float:
    count = int(np.searchsorted(eigendata.lambdas, lam, side="right"))
    return math.fsum(weights[:count])


def tempered_sum(eigendata: Eigendata, zeta: TubePoint, tau: float, lam: float) -> float:
    """
    P^tau_[0,lambda](zeta) = sum over lambda_j <= lambda of
    e^{-2 tau lambda_j} |phi_j^C(zeta)|^2, correctly rounded.

    Raises:
        CoverageError: If lambda exceeds the eigendata cutoff
    """
    _check_coverage(eigendata, lam)
    return _prefix_sum(eigendata, _weights(eigendata, zeta, tau), lam)


def tempered_series(eigendata: Eigendata, zeta: TubePoint, tau: float, grid,
                    record_jumps: bool = True) -> TemperedSumSeries:
    """
    P^tau_[0,lambda] on an increasing grid in one pass over the eigendata.

    Values at grid points and the jumps at every eigenvalue inside the grid
    range are correctly rounded prefix totals of the same accumulator.

    Raises:
        CoverageError: If the grid reaches beyond the eigendata cutoff
        ConfigurationError: If the grid is not increasing
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("grid must be a nonempty increasing sequence")
    _check_coverage(eigendata, float(grid[-1]), "grid maximum")

    weights = _weights(eigendata, zeta, tau).tolist()
    lambdas = eigendata.lambdas.tolist()
    stop = int(np.searchsorted(eigendata.lambdas, grid[-1], side="right"))
    acc = RunningSum()
    values = np.empty(len(grid))
    records: List[Tuple[float, float]] = []
    g = 0
    before = 0.0
    for i in range(stop):
        lam_i = lambdas[i]
        while g < len(grid) and grid[g] < lam_i:
            values[g] = acc.total()
            g += 1
        acc.add(weights[i])
        last_of_level = i + 1 == stop or lambdas[i + 1] != lam_i
        if last_of_level:
            if record_jumps and lam_i >= grid[0]:
                after = acc.total()
                records.append((lam_i, after - before))
                before = after
            elif record_jumps:
                before = acc.total()
    while g < len(grid):
        values[g] = acc.total()
        g += 1
    logger.debug("tempered series: %d grid points, %d entries, %d jumps", len(grid), stop, len(records))
    return TemperedSumSeries(eigendata.geometry.label, zeta, tau, grid, values, records)


def spectral_gap(eigendata: Eigendata) -> float:
    """Minimum gap between distinct eigenvalues (1.0 for a single level)."""
    levels = np.unique(eigendata.lambdas)
    if len(levels) < 2:
        return 1.0
    return float(np.min(np.diff(levels)))


def _find_level(eigendata: Eigendata, lam_j: float) -> float:
    lambdas = eigendata.lambdas
    i = int(np.searchsorted(lambdas, lam_j))
    for j in (i - 1, i):
        if 0 <= j < len(lambdas) and abs(lambdas[j] - lam_j) <= LOOKUP_TOL * max(1.0, abs(lam_j)):
            return float(lambdas[j])
    raise SpectrumLookupError(f"{lam_j:g} is not an eigenvalue of the loaded eigendata")


def jump_at(eigendata: Eigendata, zeta: TubePoint, tau: float, lam_j: float) -> float:
    """
    P^tau_[0, lambda_j + 0] - P^tau_[0, lambda_j - 0] evaluated as the
    difference of tempered_sum at lambda_j +- delta, delta half the gap.

    Both sides share tempered_sum's prefix path without its cutoff check,
    so the top level of the eigendata is valid too.

    Raises:
        SpectrumLookupError: If lam_j is not an eigenvalue
    """
    level = _find_level(eigendata, lam_j)
    delta = 0.5 * spectral_gap(eigendata)
    weights = _weights(eigendata, zeta, tau)
    return (_prefix_sum(eigendata, weights, level + delta)
            - _prefix_sum(eigendata, weights, level - delta))


def level_weight(eigendata: Eigendata, zeta: TubePoint, tau: float, lam_j: float) -> float:
    """Correctly rounded sum of the weights of the degenerate level lam_j."""
    level = _find_level(eigendata, lam_j)
    weights = _weights(eigendata, zeta, tau)
    return math.fsum(weights[eigendata.lambdas == level])


def zoll_cluster_sum(eigendata: SphereEigendata, zeta: TubePoint, tau: float, N: int) -> float:
    """P^tau over the degree-N cluster (full multiplicity 2N + 1)."""
    if not isinstance(eigendata, SphereEigendata):
        raise ConfigurationError("Zoll clusters are defined for sphere eigendata")
    if not 0 <= N <= eigendata.N_max:
        raise CoverageError(f"degree {N} outside 0..{eigendata.N_max}")
    return float(_weights(eigendata, zeta, tau)[N])


def zoll_cluster_fit(eigendata: SphereEigendata, zeta: TubePoint, tau: float,
                     degrees: Sequence[int]) -> FitResult:
    """Power-law fit of cluster sums against (N + beta/4) / sqrt(rho) with beta = 2."""
    degrees = list(degrees)
    sums = [zoll_cluster_sum(eigendata, zeta, tau, N) for N in degrees]
    x = np.array([cluster_center(N) for N in degrees]) / tau
    return fit_power_law(x, np.array(sums))


# Boundary L^2 norms and Husimi distributions

def _sphere_area(n: int) -> float:
    """|S^n|."""
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def lattice_required_nodes(k, tau: float) -> int:
    """Fiber nodes needed for Gauss-Jacobi to resolve e^{-2 tau |k| u}."""
    a = 2 * tau * float(np.linalg.norm(k))
    return int(math.ceil((a + 10 * math.sqrt(a)) / 2)) + 8


def sphere_required_nodes(N: int) -> int:
    """Trapezoid nodes per angle that integrate degree-2N trigonometric data exactly."""
    return 2 * N + 2


def _lattice_log_norm(harmonic: LatticeHarmonic, tau: float, nodes: Optional[int]) -> float:
    m = harmonic.geometry.m
    a = 2 * tau * harmonic.lam
    if m == 1:
        return float(np.logaddexp(a, -a))
    required = lattice_required_nodes(harmonic.k, tau)
    nodes = max(64, 2 * required) if nodes is None else nodes
    if nodes < required:
        raise AccuracyError(f"{nodes} fiber nodes cannot resolve |k|={harmonic.lam:g} (need >= {required})")
    alpha = (m - 3) / 2
    u, w = roots_jacobi(nodes, alpha, alpha)
    # e^{-a u} = e^{a} e^{-a (1 + u)}
    log_fiber = a + math.log(float(np.sum(w * np.exp(-a * (1 + u)))))
    return math.log(_sphere_area(m - 2)) + (m - 1) * math.log(tau) + log_fiber


def _sphere_log_norm(harmonic: SphereHarmonic, tau: float, nodes: Optional[int]) -> float:
    required = sphere_required_nodes(harmonic.N)
    nodes = max(64, 4 * harmonic.N + 16) if nodes is None else nodes
    if nodes < required:
        raise AccuracyError(f"{nodes} nodes cannot resolve degree {harmonic.N} (need >= {required})")
    x, w = np.polynomial.legendre.leggauss(nodes)
    phi = (x + 1) * (math.pi / 2)
    log_w_phi = np.log(w * (math.pi / 2) * np.sin(phi))
    psi = TWO_PI * np.arange(nodes) / nodes
    log_w_psi = math.log(TWO_PI / nodes)

    if harmonic.kind in ("highest-weight", "zonal"):
        # both depend on theta only through a unimodular factor
        zetas = sphere_frame_zetas(phi[:, None], 0.0, psi[None, :], tau)
        log_terms = harmonic.log_abs2(zetas) + log_w_phi[:, None] + log_w_psi
        log_theta = math.log(TWO_PI)
        total = float(logsumexp(log_terms)) + log_theta
    else:
        theta = TWO_PI * np.arange(nodes) / nodes
        log_w_theta = math.log(TWO_PI / nodes)
        partial = []
        for i in range(nodes):
            zetas = sphere_frame_zetas(phi[i], theta[:, None], psi[None, :], tau)
            partial.append(float(logsumexp(harmonic.log_abs2(zetas))) + log_w_phi[i])
        total = float(logsumexp(partial)) + log_w_theta + log_w_psi
    # unit-mass base (1/4pi) dA and fiber circle of radius tau
    return total - math.log(4 * math.pi) + math.log(tau)


def log_l2_norm_boundary(harmonic: Harmonic, tau: float, nodes: Optional[int] = None) -> float:
    """log ||phi^C||^2 over the tube boundary; see l2_norm_boundary."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if isinstance(harmonic, LatticeHarmonic):
        return _lattice_log_norm(harmonic, tau, nodes)
    if isinstance(harmonic, SphereHarmonic):
        return _sphere_log_norm(harmonic, tau, nodes)
    raise ConfigurationError(f"no boundary quadrature for {type(harmonic).__name__}")


def l2_norm_boundary(harmonic: Harmonic, tau: float, nodes: Optional[int] = None) -> float:
    """
    ||phi^C||^2 over the tube boundary with a unit-mass base measure.

    Lattice harmonics integrate e^{-2 tau |k| u} over the fiber sphere by
    Gauss-Jacobi quadrature in u = cos(angle to k); sphere harmonics use
    Gauss-Legendre in the polar angle times trapezoids in the azimuth and
    fiber angle, summed in log space.

    Args:
        harmonic: LatticeHarmonic or SphereHarmonic
        tau: Tube radius
        nodes: Quadrature nodes per direction (default from the degree)

    Returns:
        Squared boundary norm

    Raises:
        AccuracyError: If nodes is below the resolution requirement
    """
    return math.exp(log_l2_norm_boundary(harmonic, tau, nodes))


def l2_norm_oracle_torus(k, tau: float, m: int) -> float:
    """
    Closed form (2 pi)^{m/2} a^{1 - m/2} I_{m/2 - 1}(a) tau^{m-1}, a = 2 tau |k|.

    For m = 2 this is 2 pi tau I_0(2 |k| tau).
    """
    a = 2 * tau * float(np.linalg.norm(k))
    if a == 0:
        return boundary_volume(Geometry("torus", m), tau)
    nu = m / 2 - 1
    log_value = ((m / 2) * math.log(TWO_PI) + (1 - m / 2) * math.log(a)
                 + math.log(float(ive(nu, a))) + a + (m - 1) * math.log(tau))
    return math.exp(log_value)


def _log_abs2_at(harmonic: Harmonic, p: TubePoint) -> float:
    if isinstance(harmonic, LatticeHarmonic):
        return float(harmonic.log_abs2_xi(p.xi))
    return float(harmonic.log_abs2(p.zeta))


def husimi(harmonic: Harmonic, tau: float, p: TubePoint, norm2: Optional[float] = None) -> float:
    """
    |phi^C(p)|^2 / ||phi^C||^2 on the boundary of radius tau.

    Raises:
        ConfigurationError: If p does not lie on the tau boundary
        InternalError: If the boundary norm is not positive
    """
    if abs(p.tau - tau) > 1e-12 * max(1.0, tau):
        raise ConfigurationError(f"point lies on radius {p.tau}, not {tau}")
    log_norm = log_l2_norm_boundary(harmonic, tau) if norm2 is None else _log_positive(norm2)
    if not math.isfinite(log_norm):
        raise InternalError("boundary L2 norm is not positive")
    return math.exp(_log_abs2_at(harmonic, p) - log_norm)


def _log_positive(value: float) -> float:
    if not value > 0 or not math.isfinite(value):
        raise InternalError(f"boundary L2 norm must be positive, got {value}")
    return math.log(value)


def husimi_integral(harmonic: Harmonic, tau: float, nodes: int,
                    norm_nodes: Optional[int] = None) -> float:
    """Integral of the Husimi density over the boundary at `nodes` resolution."""
    return math.exp(log_l2_norm_boundary(harmonic, tau, nodes)
                    - log_l2_norm_boundary(harmonic, tau, norm_nodes))


def _direction(angles: np.ndarray, m: int) -> np.ndarray:
    if m == 2:
        return np.array([math.cos(angles[0]), math.sin(angles[0])])
    polar, azimuth = angles
    return np.array([math.sin(polar) * math.cos(azimuth), math.sin(polar) * math.sin(azimuth),
                     math.cos(polar)])


def _grid_step(lam: float, step: Optional[float]) -> float:
    limit = GRID_RESOLUTION / math.sqrt(max(lam, 1.0))
    if step is None:
        return limit / 2
    if step > limit:
        raise AccuracyError(f"grid step {step:g} exceeds {GRID_RESOLUTION} lambda^(-1/2) = {limit:g}")
    return step


def _lattice_sup(harmonic: LatticeHarmonic, tau: float, step: Optional[float]):
    m = harmonic.geometry.m
    k = np.asarray(harmonic.k, dtype=float)
    zero = np.zeros(m)
    if m == 1:
        candidates = [np.array([1.0]), np.array([-1.0])]
        best = max(candidates, key=lambda v: float(-2 * tau * v @ k))
        return tube_point(harmonic.geometry, zero, best, tau)
    if m > 3:
        raise ConfigurationError(f"fiber search implemented for m <= 3, got m={m}")
    h = _grid_step(harmonic.lam, step)
    if m == 2:
        beta = np.arange(0.0, TWO_PI, h)
        dirs = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
        start = np.array([beta[int(np.argmax(-2 * tau * dirs @ k))]])
    else:
        polar = np.arange(0.0, math.pi + h, h)
        azimuth = np.arange(0.0, TWO_PI, h)
        P, A = np.meshgrid(polar, azimuth, indexing="ij")
        dirs = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], axis=-1)
        idx = np.unravel_index(int(np.argmax(-2 * tau * dirs @ k)), P.shape)
        start = np.array([P[idx], A[idx]])

    def objective(angles):
        return float(2 * tau * _direction(angles, m) @ k)

    result = minimize(objective, start, method="Nelder-Mead",
                      options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
    direction = _direction(result.x, m)
    return tube_point(harmonic.geometry, zero, direction / np.linalg.norm(direction), tau)


def _sphere_sup(harmonic: SphereHarmonic, tau: float, step: Optional[float]):
    h = _grid_step(harmonic.lam, step)
    phi = np.arange(0.0, math.pi + h, h)
    psi = np.arange(0.0, TWO_PI, h)
    if harmonic.kind in ("highest-weight", "zonal"):
        zetas = sphere_frame_zetas(phi[:, None], 0.0, psi[None, :], tau)
        values = harmonic.log_abs2(zetas)
        i, j = np.unravel_index(int(np.argmax(values)), values.shape)
        start = np.array([phi[i], 0.0, psi[j]])
        free = [0, 2]
    else:
        theta = np.arange(0.0, TWO_PI, h)
        best, start = -np.inf, None
        for a in phi:
            values = harmonic.log_abs2(sphere_frame_zetas(a, theta[:, None], psi[None, :], tau))
            i, j = np.unravel_index(int(np.argmax(values)), values.shape)
            if values[i, j] > best:
                best, start = values[i, j], np.array([a, theta[i], psi[j]])
        free = [0, 1, 2]

    def objective(sub):
        angles = start.copy()
        angles[free] = sub
        zeta = sphere_frame_zetas(angles[0], angles[1], angles[2], tau)
        return -float(harmonic.log_abs2(zeta))

    result = minimize(objective, start[free], method="Nelder-Mead",
                      options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    angles = start.copy()
    angles[free] = result.x
    return sphere_tube_point(angles[0], angles[1], angles[2], tau)


def husimi_sup(harmonic: Harmonic, tau: float, step: Optional[float] = None,
               bound: Optional[float] = None, nodes: Optional[int] = None) -> HusimiSup:
    """
    Grid search with Nelder-Mead refinement for the Husimi supremum.

    Lattice harmonics are searched over fiber directions (|e_k^C| does not
    depend on the base point); sphere harmonics over the frame angles, with
    the azimuth frozen for the azimuthally invariant kinds.

    Args:
        harmonic: LatticeHarmonic or SphereHarmonic
        tau: Tube radius
        step: Grid step, at most 0.2 lambda^{-1/2}
        bound: Optional constant A; within_bound reports max <= A lambda^{(m-1)/2}
        nodes: Quadrature nodes for the boundary norm

    Returns:
        HusimiSup

    Raises:
        AccuracyError: If the grid step does not resolve lambda^{-1/2}
    """
    if isinstance(harmonic, LatticeHarmonic):
        argmax = _lattice_sup(harmonic, tau, step)
        m = harmonic.geometry.m
    else:
        argmax = _sphere_sup(harmonic, tau, step)
        m = 2
    log_norm = log_l2_norm_boundary(harmonic, tau, nodes)
    log_peak = _log_abs2_at(harmonic, argmax)
    value = math.exp(log_peak - log_norm)
    within = None
    if bound is not None:
        within = value <= bound * max(harmonic.lam, 1.0) ** ((m - 1) / 2)
        if not within:
            logger.warning("Husimi sup %.6g exceeds the bound %.6g lambda^((m-1)/2)", value, bound)
    return HusimiSup(value, math.sqrt(value), argmax, log_peak, math.exp(log_norm), within)


# Smoothing kernels

def _sinc_power_integral(n: int) -> float:
    """int_R (sin u / u)^n du in exact integer arithmetic (n >= 1)."""
    total = sum((-1) ** k * math.comb(n, k) * (n - 2 * k) ** (n - 1) for k in range(n // 2 + 1))
    log_scale = math.log(math.pi) - (n - 1) * math.log(2) - math.lgamma(n)
    return math.exp(math.log(total) + log_scale)


@dataclass
class SmoothingKernel:
    """
    chi with chi_hat compactly supported in [-support_radius, support_radius]
    and chi_hat(0) = 1, convention chi_hat(t) = int chi(x) e^{-ixt} dx.
    """
    shape: str  # BSplinePower or Custom
    support_radius: float
    p: int = 0
    a: float = 0.0
    c_p: float = 0.0
    width: float = 0.0
    samples: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def chi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shape == "BSplinePower":
            return self.c_p * np.sinc(self.a * np.abs(x) / math.pi) ** (2 * self.p)
        t, values = self.samples
        phases = np.exp(1j * np.multiply.outer(x, t))
        return np.real(trapezoid(phases * values, t, axis=-1)) / TWO_PI

    def chi_hat(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape == "BSplinePower":
            spline = _cardinal_bspline(2 * self.p)
            values = np.nan_to_num(spline(t / (2 * self.a)), nan=0.0)
            return values / float(spline(0.0))
        grid, values = self.samples
        return np.interp(t, grid, values, left=0.0, right=0.0)

    @property
    def effective_width(self) -> float:
        """Distance beyond which |chi| < KERNEL_FLOOR chi(0)."""
        return self.width


@lru_cache(maxsize=None)
def _cardinal_bspline(order: int) -> BSpline:
    knots = np.arange(order + 1) - order / 2
    return BSpline.basis_element(knots, extrapolate=False)


def build_smoothing_kernel(p: int, support_radius: float) -> SmoothingKernel:
    """
    chi(x) = c_p (sin(ax) / ax)^{2p} with a = support_radius / (2p).

    chi_hat is a centred cardinal B-spline of order 2p (the 2p-fold
    convolution of an indicator), vanishing outside the support radius;
    c_p makes chi_hat(0) = 1. chi >= 0 with zeros at nonzero multiples of
    pi / a.

    Raises:
        ConfigurationError: If p < 2 or support_radius <= 0
    """
    if p < 2:
        raise ConfigurationError(f"kernel power p must be >= 2, got {p}")
    if support_radius <= 0:
        raise ConfigurationError(f"support radius must be positive, got {support_radius}")
    a = support_radius / (2 * p)
    c_p = a / _sinc_power_integral(2 * p)
    width = KERNEL_FLOOR ** (-1 / (2 * p)) / a
    logger.debug("kernel p=%d R=%g: c_p=%.12g, width=%.4g", p, support_radius, c_p, width)
    return SmoothingKernel("BSplinePower", float(support_radius), p, a, c_p, width)


def custom_smoothing_kernel(t, chi_hat_values, width: float) -> SmoothingKernel:
    """
    Kernel from a sampled chi_hat on an increasing grid; chi is the
    trapezoidal inverse transform. Values are rescaled so chi_hat(0) = 1.

    Raises:
        ConfigurationError: For grids not containing 0 or chi_hat(0) = 0
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(chi_hat_values, dtype=float)
    if t.shape != values.shape or np.any(np.diff(t) <= 0) or not t[0] <= 0 <= t[-1]:
        raise ConfigurationError("chi_hat samples need an increasing grid containing 0")
    at_zero = float(np.interp(0.0, t, values))
    if at_zero == 0:
        raise ConfigurationError("chi_hat(0) must be nonzero")
    radius = float(max(abs(t[0]), abs(t[-1])))
    return SmoothingKernel("Custom", radius, width=float(width), samples=(t, values / at_zero))


def kernel_transform_numeric(kernel: SmoothingKernel, t) -> np.ndarray:
    """
    int chi(x) e^{-ixt} dx by the trapezoidal rule on a truncated line.

    The step resolves the band limit R + |t|, so the sum is exact up to the
    truncation tail, which is pushed below 1e-14.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    band = kernel.support_radius + float(np.max(np.abs(t)))
    h = 0.9 * TWO_PI / band
    if kernel.shape == "BSplinePower":
        n2 = 2 * kernel.p
        # tail int_X^inf c_p (a x)^{-2p} dx below 1e-14
        tail = kernel.c_p / (kernel.a ** n2 * (n2 - 1) * 1e-14)
        x_max = tail ** (1 / (n2 - 1))
    else:
        x_max = kernel.effective_width
    n = int(math.ceil(x_max / h))
    x = h * np.arange(-n, n + 1)
    chi = kernel.chi(x)
    values = h * (np.cos(np.outer(t, x)) @ chi)
    return values


def smoothed_density(eigendata: Eigendata, zeta: TubePoint, tau: float,
                     kernel: SmoothingKernel, lam: float) -> float:
    """
    (chi * dP^tau)(lambda) = sum_j chi(lambda_j - lambda) e^{-2 tau lambda_j} |phi_j^C|^2.

    Raises:
        CoverageError: If lambda + effective width exceeds the cutoff
    """
    _check_coverage(eigendata, lam + kernel.effective_width, "lambda + kernel width")
    weights = _weights(eigendata, zeta, tau)
    lo, hi = np.searchsorted(eigendata.lambdas, [lam - kernel.effective_width,
                                                 lam + kernel.effective_width])
    return math.fsum(kernel.chi(eigendata.lambdas[lo:hi] - lam) * weights[lo:hi])


def smoothed_series(eigendata: Eigendata, zeta: TubePoint, tau: float,
                    kernel: SmoothingKernel, grid, workers: int = 1) -> np.ndarray:
    """smoothed_density over a grid, one task per grid point."""
    grid = np.asarray(grid, dtype=float)
    _check_coverage(eigendata, float(np.max(grid)) + kernel.effective_width, "grid + kernel width")
    weights = _weights(eigendata, zeta, tau)
    lambdas = eigendata.lambdas
    width = kernel.effective_width

    def one(lam: float) -> float:
        lo, hi = np.searchsorted(lambdas, [lam - width, lam + width])
        return math.fsum(kernel.chi(lambdas[lo:hi] - lam) * weights[lo:hi])

    return np.array(ordered_map(one, grid.tolist(), workers))


def window_increment(eigendata: Eigendata, zeta: TubePoint, tau: float, lam: float,
                     width: float) -> float:
    """(P(lambda + w/2) - P(lambda - w/2)) / w: the indicator-window average."""
    return (tempered_sum(eigendata, zeta, tau, lam + width / 2)
            - tempered_sum(eigendata, zeta, tau, lam - width / 2)) / width


# Period coefficients

def _oscillatory_sum(eigendata: Eigendata, zeta: TubePoint, tau: float,
                     kernel: SmoothingKernel, lam: float, frequency: float) -> complex:
    _check_coverage(eigendata, lam + kernel.effective_width, "lambda + kernel width")
    weights = _weights(eigendata, zeta, tau)
    lo, hi = np.searchsorted(eigendata.lambdas, [lam - kernel.effective_width,
                                                 lam + kernel.effective_width])
    offsets = eigendata.lambdas[lo:hi] - lam
    terms = kernel.chi(offsets) * weights[lo:hi]
    return complex(math.fsum(terms * np.cos(frequency * offsets)),
                   math.fsum(terms * np.sin(frequency * offsets)))


def period_coefficient_extract(eigendata: Eigendata, zeta: TubePoint, tau: float, n: int,
                               lam: float, kernel: SmoothingKernel, T: Optional[float] = None,
                               calibration: Optional[float] = None) -> complex:
    """
    Estimate G_n from the spectral side of gamma * dP^tau with
    gamma(x) = chi(x) e^{i n T x}, so gamma_hat = chi_hat(. - nT).

    The sum is divided by C' lambda^{(m-1)/2} gamma_hat(nT) and multiplied by
    e^{i lambda n T}. Without a calibration constant the in-situ smoothed
    density (the n = 0 window) is used as the normalization instead.

    Args:
        eigendata: Eigendata covering lambda plus the kernel width
        zeta: Evaluation point
        tau: Tube radius
        n: Period multiple, n >= 1
        lam: Window centre
        kernel: Base kernel chi
        T: Period; defaults to the geodesic period at zeta
        calibration: C' from calibrate_period_constant

    Returns:
        Estimated G_n

    Raises:
        ConfigurationError: If the window reaches another period or zeta
            is not periodic and no T is given
    """
    if n < 1:
        raise ConfigurationError(f"period multiple must be >= 1, got {n}")
    if T is None:
        data = poincare_data(zeta)
        if isinstance(data, NotPeriodic):
            raise ConfigurationError(f"no period at zeta ({data.reason}); pass T explicitly")
        T = data.T
    if kernel.support_radius >= T / 2:
        raise ConfigurationError(
            f"window radius {kernel.support_radius:g} overlaps neighbouring periods (T/2 = {T / 2:g})")
    total = _oscillatory_sum(eigendata, zeta, tau, kernel, lam, n * T)
    if calibration is None:
        scale = smoothed_density(eigendata, zeta, tau, kernel, lam)
    else:
        m = eigendata.geometry.m
        scale = calibration * lam ** ((m - 1) / 2)
    scale *= float(kernel.chi_hat(0.0))
    if scale <= 0:
        raise InternalError("period normalization must be positive")
    return total * complex(np.exp(1j * lam * n * T)) / scale


def calibrate_period_constant(kernel: SmoothingKernel, lam: float = 100.0, tau: float = 0.5,
                              n: int = 1) -> float:
    """C' from the circle at its periodic point, where every G_n = 1."""
    data = circle_eigendata(lam + kernel.effective_width + 1)
    zeta = tube_point(data.geometry, [0.0], [-1.0], tau)
    total = _oscillatory_sum(data, zeta, tau, kernel, lam, n * TWO_PI)
    constant = abs(total) / float(kernel.chi_hat(0.0))
    logger.debug("circle calibration at lambda=%g, n=%d: C'=%.12g", lam, n, constant)
    return constant


# Fits

def fit_power_law(x, y) -> FitResult:
    """
    Least-squares fit log y = log A + e log x on the even-indexed points;
    residual is the max relative deviation on the odd-indexed points.

    Raises:
        ConfigurationError: For fewer than four points or nonpositive data
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 4 or x.shape != y.shape:
        raise ConfigurationError("power-law fit needs at least four matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ConfigurationError("power-law fit needs positive data")
    fit_x, fit_y = x[::2], y[::2]
    X = np.column_stack([np.ones(len(fit_x)), np.log(fit_x)])
    coef, *_ = np.linalg.lstsq(X, np.log(fit_y), rcond=None)
    log_amp, exponent = float(coef[0]), float(coef[1])
    held_x, held_y = x[1::2], y[1::2]
    model = np.exp(log_amp) * held_x ** exponent
    residual = float(np.max(np.abs(model / held_y - 1)))
    return FitResult(exponent, math.exp(log_amp), residual, (float(x[0]), float(x[-1])))


def _q_values(q: Union[QFunctionSpec, Callable], grid: np.ndarray) -> np.ndarray:
    if isinstance(q, QFunctionSpec):
        return np.asarray(q_eval(q, grid), dtype=float)
    return np.asarray(q(grid), dtype=float)


def two_term_residual(eigendata: Eigendata, zeta: TubePoint, tau: float,
                      q: Union[QFunctionSpec, Callable], grid) -> FitResult:
    """
    Two-term law check P = c lambda^{(m+1)/2} (1 + Q(lambda) / lambda).

    Only c is fitted, by least squares on the even-indexed grid points with
    the Q term taken at unit weight; the reported residual is
    sup |r(lambda)| lambda over the odd ones,
    r = P / (c lambda^{(m+1)/2}) - 1 - Q / lambda.

    details["fitted_q_scale"] is the Q weight a free two-parameter fit
    would choose; it is diagnostic and does not enter r.
    """
    grid = np.asarray(grid, dtype=float)
    m = eigendata.geometry.m
    power = (m + 1) / 2
    P = tempered_series(eigendata, zeta, tau, grid, record_jumps=False).values
    Q = _q_values(q, grid)

    lead = grid ** power
    model = (lead * (1 + Q / grid))[::2]
    c = float(np.dot(model, P[::2]) / np.dot(model, model))
    if c <= 0:
        raise InternalError(f"leading coefficient must be positive, got {c}")
    free, *_ = np.linalg.lstsq(np.column_stack([lead, lead * Q / grid])[::2], P[::2], rcond=None)
    fitted_q_scale = float(free[1] / free[0]) if free[0] != 0 else math.nan

    held = slice(1, None, 2)
    r = P[held] / (c * lead[held]) - 1 - Q[held] / grid[held]
    bound = float(np.max(np.abs(r) * grid[held]))
    logger.info("two-term residual on %s: c=%.6g, sup|r| lambda=%.4g (free Q scale %.4g)",
                eigendata.geometry.label, c, bound, fitted_q_scale)
    return FitResult(power, c, bound, (float(grid[0]), float(grid[-1])),
                     {"fitted_q_scale": fitted_q_scale})


def universal_bound(eigendata: Eigendata, zeta: TubePoint, tau: float,
                    calibration_fraction: float = 0.5, slack: float = 1.25) -> UniversalBound:
    """
    Fit A on the lowest `calibration_fraction` of the spectrum so that
    e^{-2 tau lambda_j} |phi_j^C|^2 <= A^2 max(lambda_j, 1)^{(m-1)/2},
    inflate by `slack`, and test the bound on every entry.
    """
    if not 0 < calibration_fraction <= 1:
        raise ConfigurationError(f"calibration fraction must lie in (0, 1], got {calibration_fraction}")
    m = eigendata.geometry.m
    weights = _weights(eigendata, zeta, tau)
    scale = np.maximum(eigendata.lambdas, 1.0) ** ((m - 1) / 2)
    ratios = weights / scale
    split = max(1, int(math.ceil(calibration_fraction * len(ratios))))
    A = math.sqrt(slack * float(np.max(ratios[:split])))
    worst = float(np.max(ratios)) / (A * A)
    window = (float(eigendata.lambdas[0]), float(eigendata.lambdas[split - 1]))
    return UniversalBound(A, window, worst, worst <= 1.0)


def circle_closed_form(lam, tau: float):
    """lambda - {lambda} + C(tau) with C(tau) = 1 + e^{-4 tau} / (1 - e^{-4 tau})."""
    lam = np.asarray(lam, dtype=float)
    q = math.exp(-4 * tau)
    return np.floor(lam) + 1 + q / (1 - q)
