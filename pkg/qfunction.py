"""
Q-Function Module

Evaluates the oscillating second-term function

    Q(lambda) = sum_{n >= 1} Im(e^{i n (lambda T - pi)} G_n) / (n T)

from a period T and a coefficient sequence G_n, classifies its continuity,
locates and measures the jumps, enumerates the elliptic quantum spectrum
and reconstructs the spectral measure whose moments are the G_n.

Jumps occur exactly for elliptic Poincare maps, on s0 + lambda T in
pi + 2pi Z; there Q follows the sawtooth {s0 + lambda T - pi}.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from symplectic import (
    DegenerateElliptic,
    Elliptic,
    NonSemisimple,
    SymplecticMap,
    Trivial,
    UnsupportedClassError,
    classify,
    matrix_element_blockdet,
    power_sequence,
    tag_name,
)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
DEFAULT_ABEL_N = 100_000
DEFAULT_TRUNCATE_N = 1_000_000
TAIL_TOLERANCE = 1e-10
# r^n below this is dropped from Abel sums
ABEL_CUTOFF = 1e-12
# lambda x n elements evaluated per block
BLOCK_ELEMENTS = 1 << 22

Coefficients = Callable[[np.ndarray], np.ndarray]


class QFunctionError(Exception):
    """Custom exception for Q-function evaluation errors."""
    pass


class ConvergenceError(QFunctionError):
    """Raised when partial sums of a continuous Q-function fail to settle."""
    pass


# Summation policies

@dataclass(frozen=True)
class Truncate:
    N: int = DEFAULT_TRUNCATE_N


@dataclass(frozen=True)
class Abel:
    """Abel weights r^n; r defaults to 1 - 1/N."""
    N: int = DEFAULT_ABEL_N
    r: Optional[float] = None

    @property
    def radius(self) -> float:
        return 1.0 - 1.0 / self.N if self.r is None else self.r


@dataclass(frozen=True)
class Cesaro:
    """Fejer weights 1 - n / (N + 1)."""
    N: int = DEFAULT_ABEL_N


SummationPolicy = Union[Truncate, Abel, Cesaro]


@dataclass
class QFunctionSpec:
    """
    Period, coefficient generator and summation policy of a Q-function.

    coefficients is vectorized over integer arrays n >= 1 and returns
    complex G_n; None marks a non-periodic point (Q = 0).
    """
    period_T: float
    coefficients: Optional[Coefficients]
    summation: SummationPolicy = field(default_factory=Abel)
    tail_bound: Optional[Coefficients] = None
    continuous: bool = False
    tolerance: float = 1e-8
    d: Optional[int] = None

    def __post_init__(self):
        if self.period_T <= 0:
            raise QFunctionError(f"period_T must be positive, got {self.period_T}")

    def validate(self, samples: int = 1000) -> None:
        """Check |G_n| <= 2^{d/2} and the tail bound on the first samples."""
        if self.coefficients is None:
            return
        n = np.arange(1, samples + 1)
        g = np.abs(self.coefficients(n))
        if self.d is not None and np.any(g > 2 ** (self.d / 2) * (1 + 1e-12)):
            raise QFunctionError("coefficient exceeds the 2^{d/2} bound")
        if self.tail_bound is not None and np.any(g > self.tail_bound(n) * (1 + 1e-12)):
            raise QFunctionError("coefficient exceeds the declared tail bound")


@dataclass
class JumpProgression:
    """Arithmetic progression offset + k * gap, k >= 0."""
    offset: float
    gap: float

    def points(self, lo: float, hi: float) -> np.ndarray:
        k0 = math.ceil((lo - self.offset) / self.gap)
        k1 = math.floor((hi - self.offset) / self.gap)
        return self.offset + self.gap * np.arange(k0, k1 + 1)


@dataclass
class ContinuityReport:
    kind: str  # UniformlyContinuous or JumpsAt
    s0: Optional[float] = None
    s0_determinant: Optional[float] = None
    jump_points: Optional[JumpProgression] = None
    jump_height: Optional[float] = None


@dataclass
class EllipticLevel:
    s: float
    multiplicity: int
    ground_overlap: float


@dataclass
class EllipticSpectrum:
    alphas: List[float]
    levels: List[EllipticLevel]
    lambda_grid: np.ndarray  # shape (levels, j_max + 1)


@dataclass
class DiscreteMeasure:
    """Point masses on a uniform grid of [0, 2pi)."""
    theta: np.ndarray
    mass: np.ndarray

    def window_mass(self, center: float, width: float) -> float:
        distance = np.abs(np.angle(np.exp(1j * (self.theta - center))))
        return float(np.sum(self.mass[distance <= width / 2]))

    def max_window_mass(self, width: float) -> float:
        return max(self.window_mass(c, width) for c in self.theta)

    def moment(self, n: int) -> complex:
        return complex(np.sum(self.mass * np.exp(1j * n * self.theta)))


# Sawtooth

def sawtooth(x):
    """x mod 2pi in [0, 2pi)."""
    y = np.mod(x, TWO_PI)
    y = np.where(y >= TWO_PI, 0.0, y)
    return float(y) if np.ndim(y) == 0 else y


def sawtooth_partial_sum(x, N: int):
    """2 sum_{n=1}^N sin(n x) / n."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(xs)
    block = max(1, BLOCK_ELEMENTS // max(1, len(xs)))
    for start in range(1, N + 1, block):
        n = np.arange(start, min(N, start + block - 1) + 1)
        total += 2 * np.sum(np.sin(np.outer(xs, n)) / n, axis=1)
    return float(total[0]) if np.ndim(x) == 0 else total


# Q evaluation

def _weights(policy: SummationPolicy, spec: QFunctionSpec) -> Tuple[int, Callable[[np.ndarray], np.ndarray]]:
    if isinstance(policy, Abel):
        r = policy.radius
        if not 0 < r < 1:
            raise QFunctionError(f"Abel radius must lie in (0, 1), got {r}")
        n_max = int(math.ceil(math.log(ABEL_CUTOFF) / math.log(r)))
        return n_max, lambda n: r ** n
    if isinstance(policy, Cesaro):
        return policy.N, lambda n: 1.0 - n / (policy.N + 1)
    if isinstance(policy, Truncate):
        return _truncation_length(policy.N, spec), lambda n: np.ones(len(n))
    raise QFunctionError(f"unknown summation policy: {policy!r}")


def _truncation_length(N: int, spec: QFunctionSpec) -> int:
    if spec.tail_bound is None:
        return N
    n = np.arange(1, N + 1)
    terms = spec.tail_bound(n) / (n * spec.period_T)
    # tails[i] = sum over n > i + 1
    tails = np.cumsum(terms[::-1])[::-1]
    tails = np.append(tails[1:], 0.0)
    below = np.nonzero(tails < TAIL_TOLERANCE)[0]
    return int(below[0] + 1) if len(below) else N


def _partial_q(spec: QFunctionSpec, lambdas: np.ndarray, n_max: int,
               weight: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    T = spec.period_T
    total = np.zeros(len(lambdas))
    block = max(1, BLOCK_ELEMENTS // max(1, len(lambdas)))
    for start in range(1, n_max + 1, block):
        n = np.arange(start, min(n_max, start + block - 1) + 1)
        # e^{-i n pi}
        sign = np.where(n % 2 == 1, -1.0, 1.0)
        coeff = np.asarray(spec.coefficients(n), dtype=complex) * sign * weight(n) / (n * T)
        phases = np.exp(1j * T * np.outer(lambdas, n))
        total += np.imag(phases @ coeff)
    return total


def q_eval(spec: QFunctionSpec, lam):
    """
    Regularized Q(lambda) under its summation policy.

    Args:
        spec: QFunctionSpec
        lam: lambda >= 0, scalar or array

    Returns:
        Q values (float for scalar input)

    Raises:
        ConvergenceError: If a continuous Q-function's partial sums at N and 2N
            differ by more than spec.tolerance
    """
    lambdas = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lambdas < 0):
        raise QFunctionError("lambda must be nonnegative")
    if spec.coefficients is None:
        values = np.zeros(len(lambdas))
    else:
        n_max, weight = _weights(spec.summation, spec)
        values = _partial_q(spec, lambdas, n_max, weight)
        if spec.continuous:
            doubled = _doubled_policy(spec.summation, n_max)
            n2, weight2 = _weights(doubled, spec) if not isinstance(doubled, Truncate) else (2 * n_max, weight)
            check = _partial_q(spec, lambdas, n2, weight2)
            gap = float(np.max(np.abs(check - values)))
            if gap > spec.tolerance:
                raise ConvergenceError(
                    f"partial sums at N={n_max} and 2N differ by {gap:.3e} > {spec.tolerance:.1e}")
    return float(values[0]) if np.ndim(lam) == 0 else values


def _doubled_policy(policy: SummationPolicy, n_max: int) -> SummationPolicy:
    if isinstance(policy, Abel):
        return Abel(N=2 * policy.N) if policy.r is None else Abel(r=1 - (1 - policy.r) / 2)
    if isinstance(policy, Cesaro):
        return Cesaro(N=2 * policy.N)
    return Truncate(N=2 * n_max)


# Specs for common coefficient families

def elliptic_qspec(s0: float, T: float, summation: Optional[SummationPolicy] = None) -> QFunctionSpec:
    """G_n = e^{i n s0}."""
    return QFunctionSpec(
        period_T=T,
        coefficients=lambda n: np.exp(1j * n * s0),
        summation=summation or Abel(),
        d=None,
    )


def hyperbolic_qspec(mus, T: float, summation: Optional[SummationPolicy] = None) -> QFunctionSpec:
    """G_n = prod_j (cosh n mu_j)^{-1/2}, absolutely convergent."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))

    def coefficients(n):
        out = np.ones(len(n))
        for mu in mus:
            # (cosh x)^{-1/2} written to stay finite for large x
            x = n * mu
            out = out * np.sqrt(2.0) * np.exp(-x / 2) / np.sqrt(1.0 + np.exp(-2 * x))
        return out.astype(complex)

    def tail(n):
        return 2 ** (len(mus) / 2) * np.exp(-n * float(np.min(mus)) / 2)

    return QFunctionSpec(
        period_T=T,
        coefficients=coefficients,
        summation=summation or Truncate(),
        tail_bound=tail,
        continuous=True,
        d=len(mus),
    )


def sequence_qspec(values: List[complex], T: float, continuous: bool = True) -> QFunctionSpec:
    """Finite coefficient table; G_n = 0 beyond it."""
    table = np.asarray(values, dtype=complex)

    def coefficients(n):
        out = np.zeros(len(n), dtype=complex)
        inside = n <= len(table)
        out[inside] = table[n[inside] - 1]
        return out

    return QFunctionSpec(period_T=T, coefficients=coefficients,
                         summation=Truncate(N=len(table)), continuous=continuous)


def nonperiodic_qspec(T: float = 1.0) -> QFunctionSpec:
    return QFunctionSpec(period_T=T, coefficients=None)


def qspec_from_map(S: SymplecticMap, T: float, max_terms: int = 400) -> QFunctionSpec:
    """
    QFunctionSpec for a Poincare map.

    Elliptic and degenerate maps use the unit-modulus form G_n = e^{i n s0}
    with Abel summation; decaying classes use power_sequence values,
    truncated once |G_n| drops below the tail tolerance.
    """
    report = classify_continuity(S, T)
    if report.kind == "JumpsAt":
        return elliptic_qspec(report.s0, T)
    values = []
    for item in power_sequence(S, max_terms):
        values.append(item.value)
        if abs(item.value) < TAIL_TOLERANCE:
            break
    return sequence_qspec(values, T, continuous=True)


# Continuity

def _jump_report(s0: float, s0_det: Optional[float], T: float) -> ContinuityReport:
    offset = sawtooth(math.pi - s0) / T
    return ContinuityReport(
        kind="JumpsAt",
        s0=s0,
        s0_determinant=s0_det,
        jump_points=JumpProgression(offset=offset, gap=TWO_PI / T),
        jump_height=math.pi / T,
    )


def classify_continuity(S: Optional[SymplecticMap], T: float) -> ContinuityReport:
    """
    Continuity class of Q for the Poincare map S.

    Elliptic maps give jumps on {lambda : s0 + lambda T in pi + 2pi Z} with
    s0 = (1/2) sum alpha_j, the phase of G_1; arg det P = sum alpha_j is
    reported alongside. Degenerate unit-modulus maps (the identity of
    Zoll geometries) also jump. The d = 0 circle (S = None) carries s0 = pi,
    which puts its jumps on the integers when T = 2pi. Everything else is
    uniformly continuous.

    Raises:
        UnsupportedClassError: For non-semi-simple maps
    """
    if T <= 0:
        raise QFunctionError(f"T must be positive, got {T}")
    if S is None:
        return _jump_report(math.pi, 0.0, T)
    tag = classify(S)
    if isinstance(tag, NonSemisimple):
        raise UnsupportedClassError("continuity class of a non-semi-simple map is not supported")
    if isinstance(tag, Elliptic):
        total = float(sum(tag.alphas))
        return _jump_report(sawtooth(total / 2), sawtooth(total), T)
    if isinstance(tag, (DegenerateElliptic, Trivial)):
        g1 = matrix_element_blockdet(S).value
        s0 = sawtooth(float(np.angle(g1)))
        return _jump_report(s0, sawtooth(2 * s0), T)
    logger.debug("map classified %s -> uniformly continuous", tag_name(tag))
    return ContinuityReport(kind="UniformlyContinuous")


def jump_points(report: ContinuityReport, lambda_lo: float, lambda_hi: float) -> np.ndarray:
    if report.jump_points is None:
        return np.array([])
    return report.jump_points.points(lambda_lo, lambda_hi)


def closed_form_elliptic(s0: float, T: float, lam):
    """Exact value of the elliptic series away from jumps: (pi - {s0 + lambda T - pi}) / (2T)."""
    return (math.pi - sawtooth(np.asarray(lam) * T + s0 - math.pi)) / (2 * T)


def fit_closed_form_constant(q_values: np.ndarray, s0: float, T: float, lam: np.ndarray) -> float:
    """
    Least-squares constant c in Q ~ c * ({s0 + lambda T - pi} - pi).

    The literal series gives c = -1 / (2T).
    """
    model = sawtooth(np.asarray(lam) * T + s0 - math.pi) - math.pi
    return float(np.dot(model, q_values) / np.dot(model, model))


def modulus_of_continuity(spec: QFunctionSpec, lambda_grid, h: float) -> float:
    """max over the grid of |Q(lambda + h) - Q(lambda)|."""
    grid = np.asarray(lambda_grid, dtype=float)
    if spec.coefficients is None:
        return 0.0
    if not spec.continuous:
        logger.debug("modulus_of_continuity called on a Q-function not declared continuous")
    return float(np.max(np.abs(q_eval(spec, grid + h) - q_eval(spec, grid))))


def derivative_bound(spec: QFunctionSpec, samples: int = 100_000) -> float:
    """sum |G_n|, which bounds |dQ/dlambda| for absolutely summable G_n."""
    n = np.arange(1, samples + 1)
    return float(np.sum(np.abs(spec.coefficients(n))))


def extract_jump(spec: QFunctionSpec, nu: float, eps: float = 1e-2) -> float:
    """
    Jump of Q at nu from one-sided values.

    The difference Q(nu + e) - Q(nu - e) is modelled as J + a e + b / e
    (linear drift of Q between jumps plus the Abel smoothing deficit) and
    solved for J from e = eps, 2 eps, 4 eps.
    """
    offsets = eps * np.array([1.0, 2.0, 4.0])
    values = q_eval(spec, np.concatenate([nu + offsets, nu - offsets]))
    differences = values[:3] - values[3:]
    system = np.column_stack([np.ones(3), offsets, 1.0 / offsets])
    return float(np.linalg.solve(system, differences)[0])


def detect_jumps(spec: QFunctionSpec, lambda_lo: float, lambda_hi: float,
                 step: float = 1e-2, resolution: float = 1e-6) -> List[float]:
    """
    Locate jumps of Q in [lambda_lo, lambda_hi].

    An interval is flagged when its increment exceeds ten times both the
    summation tolerance and the typical increment; the location is then
    refined by bisection.
    """
    grid = np.arange(lambda_lo, lambda_hi + step / 2, step)
    values = q_eval(spec, grid)
    increments = np.abs(np.diff(values))
    threshold = 10 * max(spec.tolerance, float(np.median(increments)))
    found = []
    for i in np.nonzero(increments > threshold)[0]:
        a, b = grid[i], grid[i + 1]
        qa, qb = values[i], values[i + 1]
        while b - a > resolution:
            mid = 0.5 * (a + b)
            qm = q_eval(spec, mid)
            if abs(qm - qa) > abs(qb - qm):
                b, qb = mid, qm
            else:
                a, qa = mid, qm
        found.append(0.5 * (a + b))
    return found


# Elliptic quantum spectrum

def elliptic_spectrum(alphas, T: float, k_max: int, j_max: int) -> EllipticSpectrum:
    """
    Levels s = sum_j alpha_j (k_j + 1/2) for |k|_inf <= k_max and
    Lambda = (2 pi j + s) / T for 0 <= j <= j_max.
    """
    alphas = [float(a) for a in np.atleast_1d(alphas)]
    for a in alphas:
        if not 0 < a < TWO_PI:
            raise QFunctionError(f"alpha must lie in (0, 2pi), got {a}")
    if k_max < 0 or j_max < 0:
        raise QFunctionError("k_max and j_max must be nonnegative")

    entries = []
    for k in itertools.product(range(k_max + 1), repeat=len(alphas)):
        s = sum(a * (kj + 0.5) for a, kj in zip(alphas, k))
        entries.append((s, all(kj == 0 for kj in k)))
    entries.sort(key=lambda item: item[0])

    levels: List[EllipticLevel] = []
    for s, ground in entries:
        if levels and abs(levels[-1].s - s) <= 1e-12 * max(1.0, abs(s)):
            levels[-1].multiplicity += 1
            if ground:
                levels[-1].ground_overlap = 1.0
        else:
            levels.append(EllipticLevel(s=s, multiplicity=1, ground_overlap=1.0 if ground else 0.0))

    s_values = np.array([level.s for level in levels])
    grid = (TWO_PI * np.arange(j_max + 1)[None, :] + s_values[:, None]) / T
    return EllipticSpectrum(alphas=alphas, levels=levels, lambda_grid=grid)


# Spectral measure

def spectral_measure_from_moments(spec: QFunctionSpec, N: int, grid: int) -> DiscreteMeasure:
    """
    Fejer reconstruction of the measure on [0, 2pi) with moments G_n.

    density(theta) = (1/2pi) sum_{|n| <= N} (1 - |n|/(N+1)) G_n e^{-i n theta},
    G_0 = 1 and G_{-n} = conj(G_n).
    """
    if grid <= 2 * N:
        logger.debug("grid %d does not resolve %d moments exactly", grid, N)
    theta = TWO_PI * np.arange(grid) / grid
    n = np.arange(1, N + 1)
    if spec.coefficients is None:
        g = np.zeros(N, dtype=complex)
    else:
        g = np.asarray(spec.coefficients(n), dtype=complex)
    fejer = 1.0 - n / (N + 1)
    phases = np.exp(-1j * np.outer(theta, n))
    density = (1.0 + 2.0 * np.real(phases @ (fejer * g))) / TWO_PI
    return DiscreteMeasure(theta=theta, mass=density * TWO_PI / grid)


def spectral_measure_moments(measure: DiscreteMeasure, n: int) -> List[complex]:
    """Moments 1..n of a reconstructed measure."""
    return [measure.moment(j) for j in range(1, n + 1)]
