"""
Model Geometries Module

Exact spectral data for the circle, the flat torus R^m / 2pi Z^m and the
round 2-sphere: eigenvalues, complexified eigenfunctions on the Grauert
tube boundary, the complexified geodesic flow, periodic points with their
Poincare data, and the flat-torus Q series.

Tube points are stored as (x, unit direction, tau) with xi = tau * direction,
so tau = 0 gives the real point x.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln

from symplectic import (
    ClassificationTag,
    DegenerateElliptic,
    Parabolic,
    SymplecticMap,
    Trivial,
    rotation,
)
from workers import ordered_map, partition

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
UNIT_TOL = 1e-12
# Lattice enumeration refuses requests above this many points
MAX_LATTICE_POINTS = 20_000_000
MIN_ZONAL_NODES = 256


class GeometryError(Exception):
    """Custom exception for model geometry errors."""
    pass


class DomainError(GeometryError):
    """Raised for invalid tube points or geometry parameters."""
    pass


class ResourceError(GeometryError):
    """Raised when an eigendata request exceeds the memory budget."""

    def __init__(self, message: str, estimate: int):
        super().__init__(f"{message} (estimated {estimate} entries)")
        self.estimate = estimate


class AccuracyError(GeometryError):
    """Raised when a quadrature cannot resolve the requested degree."""
    pass


@dataclass(frozen=True)
class Geometry:
    name: str  # circle, torus, sphere
    m: int

    @property
    def label(self) -> str:
        return f"torus(m={self.m})" if self.name == "torus" else self.name


def create_geometry(name: str, m: Optional[int] = None) -> Geometry:
    """
    Factory function for the model geometries.

    Args:
        name: "circle", "torus" or "sphere"
        m: Torus dimension (required for the torus)

    Returns:
        Geometry

    Raises:
        DomainError: For unknown names or a missing/invalid torus dimension
    """
    if name == "circle":
        return Geometry("circle", 1)
    if name == "sphere":
        return Geometry("sphere", 2)
    if name == "torus":
        if m is None or m < 1:
            raise DomainError(f"torus requires m >= 1, got {m}")
        return Geometry("torus", int(m))
    raise DomainError(f"unknown geometry: {name}")


@dataclass
class TubePoint:
    """
    A point E(x, xi) = exp_x(i xi) of the tube boundary with |xi| = tau.
    """
    geometry: Geometry
    x: np.ndarray
    direction: np.ndarray
    tau: float

    @property
    def xi(self) -> np.ndarray:
        return self.tau * self.direction

    @property
    def zeta(self) -> np.ndarray:
        """cosh(tau) x + i sinh(tau) v in C^3 (sphere only)."""
        if self.geometry.name != "sphere":
            raise DomainError("zeta is only materialized on the sphere")
        return math.cosh(self.tau) * self.x + 1j * math.sinh(self.tau) * self.direction


@dataclass
class EigendataEntry:
    lam: float
    index: object
    eval_complexified: Optional[Callable[[TubePoint], complex]]
    eval_abs2: Callable[[TubePoint], float]
    multiplicity: int = 1


@dataclass
class PoincareData:
    T: float
    S: Optional[SymplecticMap]
    tag: ClassificationTag
    exponents: List[float]
    T_literal: Optional[float] = None
    lattice_vector: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class NotPeriodic:
    reason: str = ""


# Tube points and flow

def _unit(vector, what: str) -> np.ndarray:
    arr = np.asarray(vector, dtype=float)
    if abs(np.linalg.norm(arr) - 1.0) > UNIT_TOL:
        raise DomainError(f"{what} must be a unit vector, got norm {np.linalg.norm(arr):.15g}")
    return arr


def tube_point(geometry: Geometry, x, direction, tau: float) -> TubePoint:
    """
    Construct the tube point exp_x(i tau v).

    Args:
        geometry: Model geometry
        x: Angle(s) on circle/torus, unit 3-vector on the sphere
        direction: Unit direction v (tangent to the sphere at x)
        tau: Tube radius, tau >= 0

    Returns:
        TubePoint

    Raises:
        DomainError: For non-unit or non-tangent directions, wrong
            dimensions or negative tau
    """
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = _unit(np.atleast_1d(direction), "direction")
    if geometry.name == "sphere":
        x = _unit(x, "base point")
        if x.shape != (3,) or v.shape != (3,):
            raise DomainError("sphere points and directions are 3-vectors")
        if abs(float(x @ v)) > UNIT_TOL:
            raise DomainError("direction must be tangent to the sphere at x")
    elif x.shape != (geometry.m,) or v.shape != (geometry.m,):
        raise DomainError(f"{geometry.label} points need {geometry.m} coordinates")
    return TubePoint(geometry, x, v, float(tau))


def sphere_tube_point(phi: float, theta: float, psi: float, tau: float) -> TubePoint:
    """
    Sphere tube point in the frame parametrization: polar angle phi,
    azimuth theta and fiber angle psi with v = cos(psi) e_theta + sin(psi) e_phi.
    """
    x = np.array([math.sin(phi) * math.cos(theta), math.sin(phi) * math.sin(theta), math.cos(phi)])
    e_theta = np.array([-math.sin(theta), math.cos(theta), 0.0])
    e_phi = np.array([math.cos(phi) * math.cos(theta), math.cos(phi) * math.sin(theta), -math.sin(phi)])
    v = math.cos(psi) * e_theta + math.sin(psi) * e_phi
    return TubePoint(Geometry("sphere", 2), x, v / np.linalg.norm(v), float(tau))


def sphere_frame_zetas(phi: np.ndarray, theta: np.ndarray, psi: np.ndarray, tau: float) -> np.ndarray:
    """Vectorized sphere_tube_point(...).zeta over broadcast angle arrays, shape (..., 3)."""
    phi, theta, psi = np.broadcast_arrays(phi, theta, psi)
    sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    x = np.stack([sp * ct, sp * st, cp], axis=-1)
    e_theta = np.stack([-st, ct, np.zeros_like(st)], axis=-1)
    e_phi = np.stack([cp * ct, cp * st, -sp], axis=-1)
    v = np.cos(psi)[..., None] * e_theta + np.sin(psi)[..., None] * e_phi
    return math.cosh(tau) * x + 1j * math.sinh(tau) * v


def grauert_radius(p: TubePoint) -> float:
    """
    sqrt(rho) of the tube point; on the sphere recovered from the
    complexified distance as |arccos(zeta . conj(zeta))| / 2.
    """
    if p.geometry.name != "sphere":
        return float(np.linalg.norm(p.xi))
    z = p.zeta
    inner = complex(np.sum(z * np.conj(z)))
    return float(abs(np.arccos(inner + 0j)) / 2)


def geodesic_flow(p: TubePoint, t: float) -> TubePoint:
    """
    g^t on the tube boundary: translation along the direction on flat
    geometries (angles reduced mod 2pi), rotation of (x, v) in their plane
    on the sphere.
    """
    if p.geometry.name == "sphere":
        c, s = math.cos(t), math.sin(t)
        return TubePoint(p.geometry, c * p.x + s * p.direction, -s * p.x + c * p.direction, p.tau)
    return TubePoint(p.geometry, np.mod(p.x + t * p.direction, TWO_PI), p.direction.copy(), p.tau)


def primitive_lattice_direction(direction, max_denominator: int = 10_000,
                                tol: float = 1e-10) -> Optional[np.ndarray]:
    """Primitive k' in Z^m parallel to a unit direction, or None for irrational slopes."""
    u = np.asarray(direction, dtype=float)
    j = int(np.argmax(np.abs(u)))
    ratios = u / u[j]
    fractions = [Fraction(float(r)).limit_denominator(max_denominator) for r in ratios]
    if any(abs(float(f) - r) > tol for f, r in zip(fractions, ratios)):
        return None
    lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fractions), 1)
    ints = [int(f * lcm) for f in fractions]
    g = reduce(math.gcd, (abs(i) for i in ints))
    k = np.array(ints, dtype=int) // g * int(np.sign(u[j]))
    if np.linalg.norm(k / np.linalg.norm(k) - u) > 1e-9:
        return None
    return k


def poincare_data(p: TubePoint) -> Union[PoincareData, NotPeriodic]:
    """
    Period and linearized Poincare map at a tube point.

    circle: T = 2pi with no transversal directions. torus: periodic iff the
    direction is k'/|k'| for a primitive lattice vector, T = 2pi |k'|
    (T_literal = |k'|), shear Poincare map. sphere: T = 2pi, identity map.
    """
    name = p.geometry.name
    if name == "circle":
        return PoincareData(T=TWO_PI, S=None, tag=Trivial(), exponents=[], T_literal=1.0,
                            lattice_vector=(int(np.sign(p.direction[0])),))
    if name == "sphere":
        return PoincareData(T=TWO_PI, S=rotation(0.0), tag=DegenerateElliptic(), exponents=[])

    k = primitive_lattice_direction(p.direction)
    if k is None:
        return NotPeriodic("irrational direction")
    norm = float(np.linalg.norm(k))
    T = TWO_PI * norm
    d = p.geometry.m - 1
    if d == 0:
        return PoincareData(T=T, S=None, tag=Trivial(), exponents=[], T_literal=norm,
                            lattice_vector=tuple(int(i) for i in k))
    eye = np.eye(d)
    shear = np.block([[eye, T * eye], [np.zeros((d, d)), eye]])
    return PoincareData(T=T, S=SymplecticMap(d, shear), tag=Parabolic(), exponents=[],
                        T_literal=norm, lattice_vector=tuple(int(i) for i in k))


# Legendre helpers

def legendre_complex(N: int, z) -> np.ndarray:
    """P_N(z) for complex z by the three-term recurrence."""
    z = np.asarray(z, dtype=complex)
    p_prev, p = np.ones_like(z), z.copy()
    if N == 0:
        return p_prev
    for n in range(1, N):
        p_prev, p = p, ((2 * n + 1) * z * p - n * p_prev) / (n + 1)
    return p


def legendre_log_table(N_max: int, x: float) -> np.ndarray:
    """log P_n(x) for n = 0..N_max and real x >= 1, with rescaling against overflow."""
    if x < 1.0:
        raise DomainError(f"legendre_log_table needs x >= 1, got {x}")
    logs = np.zeros(N_max + 1)
    if N_max == 0:
        return logs
    p_prev, p, scale = 1.0, x, 0.0
    logs[1] = math.log(x)
    for n in range(1, N_max):
        p_prev, p = p, ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
        if p > 1e100:
            p_prev /= p
            scale += math.log(p)
            p = 1.0
        logs[n + 1] = scale + math.log(p)
    return logs


def zonal_nodes(N: int) -> int:
    return max(MIN_ZONAL_NODES, 8 * N)


def legendre_quadrature(N: int, z, nodes: Optional[int] = None) -> np.ndarray:
    """
    P_N(z) = (1/2pi) int_0^{2pi} (z + sqrt(z^2 - 1) cos t)^N dt by the
    trapezoidal rule; exact once nodes > N.

    Raises:
        AccuracyError: If nodes < 8N
    """
    nodes = zonal_nodes(N) if nodes is None else nodes
    if nodes < 8 * N:
        raise AccuracyError(f"{nodes} quadrature nodes cannot resolve degree {N} (need >= {8 * N})")
    z = np.asarray(z, dtype=complex)
    t = TWO_PI * np.arange(nodes) / nodes
    root = np.sqrt(z * z - 1.0)
    base = z[..., None] + root[..., None] * np.cos(t)
    return np.mean(base ** N, axis=-1)


# Eigenfunctions

@dataclass
class LatticeHarmonic:
    """e_k(x) = e^{i <x, k>} on the circle/torus, complexified to x + i xi."""
    geometry: Geometry
    k: Tuple[int, ...]

    @property
    def lam(self) -> float:
        return float(np.linalg.norm(self.k))

    def log_abs2_xi(self, xi: np.ndarray) -> np.ndarray:
        """-2 <xi, k> for xi of shape (..., m)."""
        return -2.0 * np.asarray(xi, dtype=float) @ np.asarray(self.k, dtype=float)

    def value(self, p: TubePoint) -> complex:
        k = np.asarray(self.k, dtype=float)
        return complex(np.exp(1j * (p.x @ k) - p.xi @ k))

    def abs2(self, p: TubePoint) -> float:
        return float(np.exp(self.log_abs2_xi(p.xi)))

    def entry(self) -> EigendataEntry:
        index = self.k[0] if self.geometry.name == "circle" else self.k
        return EigendataEntry(self.lam, index, self.value, self.abs2)


def highest_weight_gamma_ratio(N: int) -> float:
    """Gamma(N + 1) / Gamma(N + 3/2); ||(x + iy)^N||^2 on S^2 is 2 pi^{3/2} times this."""
    return math.exp(gammaln(N + 1) - gammaln(N + 1.5))


def highest_weight_norm2(N: int) -> float:
    """||(x + iy)^N||^2 over S^2 with the area measure."""
    return 2 * math.pi ** 1.5 * highest_weight_gamma_ratio(N)


@dataclass
class SphereHarmonic:
    """
    Complexified sphere eigenfunction of degree N evaluated at zeta in C^3.

    kind is "highest-weight" (C_N (z1 + i z2)^N), "zonal"
    (sqrt((2N+1)/4pi) P_N(z3)) or "coherent" (normalized kernel section
    centred at the tube point `center`).
    """
    kind: str
    N: int
    center: Optional[np.ndarray] = None
    nodes: Optional[int] = None

    @property
    def lam(self) -> float:
        return math.sqrt(self.N * (self.N + 1))

    def _coherent_scale(self) -> float:
        c = (2 * self.N + 1) / (4 * math.pi)
        w = self.center
        return c / math.sqrt(c * legendre_complex(self.N, np.sum(w * np.conj(w))).real)

    def values(self, zetas, method: str = "recurrence") -> np.ndarray:
        z = np.asarray(zetas, dtype=complex)
        N = self.N
        if self.kind == "highest-weight":
            return math.sqrt(1.0 / highest_weight_norm2(N)) * (z[..., 0] + 1j * z[..., 1]) ** N
        if self.kind == "zonal":
            if method == "quadrature":
                p = legendre_quadrature(N, z[..., 2], self.nodes)
            else:
                p = legendre_complex(N, z[..., 2])
            return math.sqrt((2 * N + 1) / (4 * math.pi)) * p
        if self.kind == "coherent":
            inner = np.sum(z * np.conj(self.center), axis=-1)
            return self._coherent_scale() * legendre_complex(N, inner)
        raise DomainError(f"unknown harmonic kind: {self.kind}")

    def log_abs2(self, zetas) -> np.ndarray:
        z = np.asarray(zetas, dtype=complex)
        if self.kind == "highest-weight":
            modulus = np.abs(z[..., 0] + 1j * z[..., 1])
            with np.errstate(divide="ignore"):
                return -math.log(highest_weight_norm2(self.N)) + 2 * self.N * np.log(modulus)
        with np.errstate(divide="ignore"):
            return 2 * np.log(np.abs(self.values(z)))

    def value(self, p: TubePoint) -> complex:
        return complex(self.values(p.zeta, method="quadrature"))

    def abs2(self, p: TubePoint) -> float:
        return float(np.exp(self.log_abs2(p.zeta)))

    def entry(self) -> EigendataEntry:
        return EigendataEntry(self.lam, (self.N, self.kind), self.value, self.abs2)


def sphere_projection_kernel(N: int, z, w) -> np.ndarray:
    """
    ((2N+1)/4pi) P_N(z . conj(w)): the degree-N projection kernel continued
    holomorphically in z and anti-holomorphically in w.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return (2 * N + 1) / (4 * math.pi) * legendre_complex(N, np.sum(z * np.conj(w), axis=-1))


def sphere_coherent_state(N: int, w: TubePoint, tau: Optional[float] = None) -> SphereHarmonic:
    """
    L^2(S^2)-normalized coherent state Pi_N(., w) / ||Pi_N(., w)|| centred at w.

    tau defaults to the radius of w; a mismatch is a domain error.
    """
    if w.geometry.name != "sphere":
        raise DomainError("coherent states are defined on the sphere")
    if tau is not None and abs(tau - w.tau) > UNIT_TOL:
        raise DomainError(f"centre lies on radius {w.tau}, not {tau}")
    return SphereHarmonic("coherent", N, center=w.zeta)


# Eigendata containers

class Eigendata:
    """
    Eigenvalues sorted ascending with vectorized weight evaluation.

    Indexing yields EigendataEntry objects; bulk sums go through
    log_abs2 / weights.
    """

    def __init__(self, geometry: Geometry, lambdas: np.ndarray, cutoff: float,
                 multiplicity: Optional[np.ndarray] = None):
        self.geometry = geometry
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.cutoff = float(cutoff)
        self.multiplicity = (np.ones(len(self.lambdas), dtype=int)
                             if multiplicity is None else np.asarray(multiplicity, dtype=int))

    def __len__(self) -> int:
        return len(self.lambdas)

    def __iter__(self) -> Iterator[EigendataEntry]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> EigendataEntry:
        raise NotImplementedError

    def log_abs2(self, p: TubePoint) -> np.ndarray:
        raise NotImplementedError

    def abs2(self, p: TubePoint) -> np.ndarray:
        return np.exp(self.log_abs2(p))

    def weights(self, p: TubePoint, tau: float) -> np.ndarray:
        """e^{-2 tau lambda_j} |phi_j(zeta)|^2 for every entry."""
        return np.exp(-2.0 * tau * self.lambdas + self.log_abs2(p))

    def check_point(self, p: TubePoint) -> None:
        if p.geometry != self.geometry:
            raise DomainError(f"point on {p.geometry.label} used with {self.geometry.label} eigendata")


class LatticeEigendata(Eigendata):
    """Circle and torus: one entry per lattice vector k with |k| <= cutoff."""

    def __init__(self, geometry: Geometry, lattice: np.ndarray, cutoff: float):
        norm2 = np.sum(lattice * lattice, axis=1)
        keys = [lattice[:, j] for j in reversed(range(lattice.shape[1]))] + [norm2]
        order = np.lexsort(keys)
        self.lattice = lattice[order]
        super().__init__(geometry, np.sqrt(norm2[order].astype(float)), cutoff)

    def harmonic(self, i: int) -> LatticeHarmonic:
        return LatticeHarmonic(self.geometry, tuple(int(c) for c in self.lattice[i]))

    def __getitem__(self, i: int) -> EigendataEntry:
        return self.harmonic(i).entry()

    def log_abs2(self, p: TubePoint) -> np.ndarray:
        self.check_point(p)
        return -2.0 * (self.lattice @ p.xi)

    def values(self, p: TubePoint) -> np.ndarray:
        self.check_point(p)
        return np.exp(1j * (self.lattice @ p.x) - self.lattice @ p.xi)


class SphereEigendata(Eigendata):
    """
    Sphere clusters: entry N carries the full degree-N eigenspace
    (multiplicity 2N + 1) with |phi|^2 summed by the addition theorem,
    ((2N+1)/4pi) P_N(zeta . conj(zeta)).
    """

    def __init__(self, N_max: int, nodes: Optional[int] = None):
        degrees = np.arange(N_max + 1)
        super().__init__(Geometry("sphere", 2), np.sqrt(degrees * (degrees + 1.0)),
                         math.sqrt(N_max * (N_max + 1.0)), 2 * degrees + 1)
        self.N_max = N_max
        self.nodes = nodes

    def __getitem__(self, i: int) -> EigendataEntry:
        N = int(i)

        def abs2(p: TubePoint) -> float:
            return float(self.abs2(p)[N])

        return EigendataEntry(float(self.lambdas[N]), (N, "cluster"), None, abs2, multiplicity=2 * N + 1)

    def log_abs2(self, p: TubePoint) -> np.ndarray:
        self.check_point(p)
        z = p.zeta
        inner = float(np.real(np.sum(z * np.conj(z))))
        degrees = np.arange(self.N_max + 1)
        return np.log((2 * degrees + 1) / (4 * math.pi)) + legendre_log_table(self.N_max, max(inner, 1.0))

    def highest_weight(self, N: int) -> SphereHarmonic:
        self._check_degree(N)
        return SphereHarmonic("highest-weight", N)

    def zonal(self, N: int) -> SphereHarmonic:
        self._check_degree(N)
        return SphereHarmonic("zonal", N, nodes=self.nodes)

    def _check_degree(self, N: int) -> None:
        if not 0 <= N <= self.N_max:
            raise DomainError(f"degree {N} outside 0..{self.N_max}")


class TabulatedEigendata(Eigendata):
    """Explicit (lambda_j, |phi_j|^2) pairs, independent of the evaluation point."""

    def __init__(self, geometry: Geometry, lambdas, abs2_values, cutoff: float):
        order = np.argsort(np.asarray(lambdas, dtype=float), kind="stable")
        super().__init__(geometry, np.asarray(lambdas, dtype=float)[order], cutoff)
        self.abs2_values = np.asarray(abs2_values, dtype=float)[order]
        if np.any(self.abs2_values < 0):
            raise DomainError("tabulated |phi|^2 values must be nonnegative")

    def __getitem__(self, i: int) -> EigendataEntry:
        value = float(self.abs2_values[i])
        return EigendataEntry(float(self.lambdas[i]), i, None, lambda p: value)

    def log_abs2(self, p: TubePoint) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.abs2_values)


def cluster_center(N: int) -> float:
    """Zoll cluster centre N + 1/2 = N + beta/4 with beta = 2."""
    return N + 0.5


def circle_eigendata(lambda_max: float) -> LatticeEigendata:
    """
    Entries e^{ik theta} for |k| <= lambda_max, ordered 0, -1, 1, -2, 2, ...

    Raises:
        DomainError: If lambda_max < 0
    """
    if lambda_max < 0:
        raise DomainError(f"lambda_max must be nonnegative, got {lambda_max}")
    K = int(math.floor(lambda_max))
    return LatticeEigendata(Geometry("circle", 1), np.arange(-K, K + 1).reshape(-1, 1), lambda_max)


def lattice_count_estimate(m: int, lambda_max: float) -> int:
    """Ball-volume estimate of #{k in Z^m : |k| <= lambda_max}."""
    radius = lambda_max + math.sqrt(m) / 2
    log_volume = (m / 2) * math.log(math.pi) - gammaln(m / 2 + 1) + m * math.log(max(radius, 1e-300))
    return int(math.ceil(math.exp(min(log_volume, 700.0))))


def _lattice_slab(args) -> np.ndarray:
    first_values, m, bound2 = args
    chunks = []
    for k1 in first_values:
        rest2 = bound2 - k1 * k1
        if m == 1:
            chunks.append(np.array([[k1]]))
            continue
        R = int(math.isqrt(rest2))
        box = np.indices((2 * R + 1,) * (m - 1)).reshape(m - 1, -1).T - R
        box = box[np.sum(box * box, axis=1) <= rest2]
        chunks.append(np.column_stack([np.full(len(box), k1), box]))
    return np.concatenate(chunks) if chunks else np.empty((0, m), dtype=int)


def torus_eigendata(m: int, lambda_max: float, workers: int = 1) -> LatticeEigendata:
    """
    Lattice eigendata k in Z^m with |k| <= lambda_max on R^m / 2pi Z^m.

    The first coordinate is partitioned across workers; slabs are merged in
    order and globally sorted by (|k|^2, k) so the result does not depend
    on the worker count.

    Raises:
        DomainError: If m < 1 or lambda_max < 0
        ResourceError: If the lattice count exceeds MAX_LATTICE_POINTS
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if lambda_max < 0:
        raise DomainError(f"lambda_max must be nonnegative, got {lambda_max}")
    estimate = lattice_count_estimate(m, lambda_max)
    if estimate > MAX_LATTICE_POINTS:
        raise ResourceError(f"torus m={m} lambda_max={lambda_max} exceeds the lattice budget", estimate)

    bound2 = int(math.floor(lambda_max * lambda_max + 1e-9))
    K = int(math.isqrt(bound2))
    first = np.arange(-K, K + 1)
    jobs = [(first[a:b], m, bound2) for a, b in partition(len(first), max(1, workers))]
    slabs = ordered_map(_lattice_slab, jobs, workers)
    lattice = np.concatenate(slabs).astype(int)
    logger.debug("torus m=%d lambda_max=%g: %d lattice points", m, lambda_max, len(lattice))
    return LatticeEigendata(Geometry("torus", m), lattice, lambda_max)


def sphere_eigendata(N_max: int, quadrature_nodes: Optional[int] = None) -> SphereEigendata:
    """
    Degree clusters N <= N_max with lambda_N = sqrt(N(N+1)), plus
    highest-weight and zonal harmonics per degree.

    Raises:
        DomainError: If N_max < 0
        AccuracyError: If quadrature_nodes < 8 N_max
    """
    if N_max < 0:
        raise DomainError(f"N_max must be nonnegative, got {N_max}")
    if quadrature_nodes is not None and quadrature_nodes < 8 * N_max:
        raise AccuracyError(f"{quadrature_nodes} zonal quadrature nodes are below 8 N_max = {8 * N_max}")
    return SphereEigendata(N_max, quadrature_nodes)


def build_eigendata(geometry: Geometry, lambda_max: float, workers: int = 1) -> Eigendata:
    """Eigendata covering eigenvalues up to lambda_max for any model geometry."""
    if geometry.name == "circle":
        return circle_eigendata(lambda_max)
    if geometry.name == "torus":
        return torus_eigendata(geometry.m, lambda_max, workers)
    # lambda_N <= lambda_max  <=>  N(N+1) <= lambda_max^2
    N_max = int(math.floor((math.sqrt(1 + 4 * lambda_max * lambda_max) - 1) / 2 + 1e-12))
    return sphere_eigendata(N_max)


def boundary_volume(geometry: Geometry, tau: float) -> float:
    """|S^{m-1}| tau^{m-1}: volume of the tube boundary over a unit-mass base."""
    m = geometry.m
    sphere_area = 2 * math.pi ** (m / 2) / math.gamma(m / 2)
    return sphere_area * tau ** (m - 1)


# Flat torus Q series

def _flat_period(k: np.ndarray, convention: str) -> float:
    norm = float(np.linalg.norm(k))
    if norm == 0:
        raise DomainError("lattice vector must be nonzero")
    if convention == "literal":
        return norm
    if convention == "normalized":
        return TWO_PI * norm
    raise DomainError(f"unknown period convention: {convention}")


def _flat_coefficients(n: np.ndarray, period: float, tau: float, m: int) -> np.ndarray:
    a = (m - 1) / 2
    return np.real((n * period + 2j * tau) ** -a) / (n * period)


def flat_torus_q(k, tau: float, lam, m: int, N: int, convention: str = "literal"):
    """
    Truncated flat-torus series

        Re sum_{n=1}^N sin(n lambda P) / (n P) (lambda / (n P + 2 i tau))^{(m-1)/2}

    with P = |k| (literal) or 2pi |k| (normalized).
    """
    period = _flat_period(np.asarray(k, dtype=float), convention)
    lambdas = np.atleast_1d(np.asarray(lam, dtype=float))
    a = (m - 1) / 2
    total = np.zeros(len(lambdas))
    block = max(1, (1 << 22) // max(1, len(lambdas)))
    for start in range(1, N + 1, block):
        n = np.arange(start, min(N, start + block - 1) + 1)
        total += np.sin(np.outer(lambdas, n * period)) @ _flat_coefficients(n, period, tau, m)
    values = lambdas ** a * total
    return float(values[0]) if np.ndim(lam) == 0 else values


def flat_torus_derivative_bound(k, tau: float, lambda_max: float, m: int, N: int,
                                convention: str = "literal") -> float:
    """Term-wise bound on |dQ/dlambda| over [0, lambda_max] for the truncated series."""
    period = _flat_period(np.asarray(k, dtype=float), convention)
    a = (m - 1) / 2
    n = np.arange(1, N + 1)
    return float((1 + a) * lambda_max ** a * np.sum(np.abs(n * period + 2j * tau) ** -a))


def flat_torus_modulus(k, tau: float, lambda_grid, h: float, m: int, N: int,
                       convention: str = "literal") -> float:
    """max over the grid of |Q(lambda + h) - Q(lambda)| for the flat series."""
    grid = np.asarray(lambda_grid, dtype=float)
    return float(np.max(np.abs(flat_torus_q(k, tau, grid + h, m, N, convention)
                               - flat_torus_q(k, tau, grid, m, N, convention))))
