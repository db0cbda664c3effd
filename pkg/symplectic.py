"""
Symplectic Algebra Module

Linear symplectic algebra for linearized Poincare maps and the metaplectic
ground-state matrix elements G_n = <W_J(S^n) Omega, Omega>.

The block convention is S = [[A, B], [C, D]] acting on (q, p) with the
standard form Omega = [[0, I], [-I, 0]]. Matrix elements are evaluated by
several independent formulas (block determinant, key identity, magnitude,
Gaussian integral) so that callers can cross-check them.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm, logm, polar, schur

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
NONSEMISIMPLE_CONDITION = 1e8
# Largest allowed phase step of det(A + D + i(B - C)) between path samples
MAX_PHASE_STEP = math.pi / 4
MAX_PATH_SAMPLES = 1 << 16


class SymplecticError(Exception):
    """Custom exception for symplectic algebra errors."""
    pass


class DimensionError(SymplecticError):
    """Raised when a matrix does not have even square shape."""
    pass


class ContractViolation(SymplecticError):
    """Raised when an input breaks an operation's precondition."""
    pass


class SingularConfigurationError(SymplecticError):
    """Raised when det(A + D + i(B - C)) vanishes (metaplectic caustic)."""
    pass


class NumericError(SymplecticError):
    """Raised when the eigen-solver fails; carries the offending matrix."""

    def __init__(self, message: str, matrix: np.ndarray):
        super().__init__(f"{message}\nmatrix=\n{np.array2string(matrix, precision=6)}")
        self.matrix = matrix


class UnsupportedClassError(SymplecticError):
    """Raised when an operation does not support the map's classification."""
    pass


def omega(d: int) -> np.ndarray:
    """Standard symplectic form [[0, I], [-I, 0]] of size 2d."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass
class SymplecticMap:
    """
    Real 2d x 2d matrix in the (A, B, C, D) block convention.

    Construction only validates the shape; symplecticity is checked by
    check_symplectic so that non-symplectic matrices can still be inspected.
    """
    d: int
    matrix: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {self.matrix.shape}")
        if self.matrix.shape[0] % 2 != 0:
            raise DimensionError(f"matrix size must be even, got {self.matrix.shape[0]}")
        if self.d != self.matrix.shape[0] // 2:
            raise DimensionError(f"d={self.d} does not match matrix size {self.matrix.shape[0]}")

    @classmethod
    def from_matrix(cls, matrix, tol: float = DEFAULT_TOL) -> 'SymplecticMap':
        arr = np.asarray(matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 != 0:
            raise DimensionError(f"expected an even square matrix, got shape {arr.shape}")
        return cls(d=arr.shape[0] // 2, matrix=arr, tol=tol)

    @property
    def blocks(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        d = self.d
        m = self.matrix
        return m[:d, :d], m[:d, d:], m[d:, :d], m[d:, d:]

    def compose(self, other: 'SymplecticMap') -> 'SymplecticMap':
        return SymplecticMap(self.d, self.matrix @ other.matrix, self.tol)

    def inverse(self) -> 'SymplecticMap':
        # S^{-1} = -Omega S^T Omega for symplectic S
        w = omega(self.d)
        return SymplecticMap(self.d, -w @ self.matrix.T @ w, self.tol)

    def power(self, n: int) -> 'SymplecticMap':
        if n < 0:
            return self.inverse().power(-n)
        return SymplecticMap(self.d, np.linalg.matrix_power(self.matrix, n), self.tol)


# Classification tags

@dataclass(frozen=True)
class Elliptic:
    alphas: Tuple[float, ...]


@dataclass(frozen=True)
class HyperbolicPositive:
    mus: Tuple[float, ...]


@dataclass(frozen=True)
class HyperbolicNegative:
    mus: Tuple[float, ...]


@dataclass(frozen=True)
class Loxodromic:
    pairs: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class DegenerateElliptic:
    pass


@dataclass(frozen=True)
class NonSemisimple:
    pass


@dataclass(frozen=True)
class Mixed:
    blocks: Tuple[object, ...]


@dataclass(frozen=True)
class Parabolic:
    """Shear-type Poincare map of a flat torus geodesic."""
    pass


@dataclass(frozen=True)
class Trivial:
    """No transversal directions (d = 0), e.g. the circle."""
    pass


ClassificationTag = Union[Elliptic, HyperbolicPositive, HyperbolicNegative, Loxodromic,
                          DegenerateElliptic, NonSemisimple, Mixed, Parabolic, Trivial]


def tag_name(tag: ClassificationTag) -> str:
    return type(tag).__name__


@dataclass
class MatrixElementValue:
    """Ground-state matrix element with the square-root branch used."""
    value: complex
    branch_index: int
    method: str  # BlockDet, KeyId, Magnitude, Oracle

    def __abs__(self) -> float:
        return abs(self.value)


# Constructors

def rotation(alphas: Union[float, Sequence[float]]) -> SymplecticMap:
    """
    Orthogonal symplectic map rotating each (q_j, p_j) plane by alpha_j.

    Args:
        alphas: Rotation angle or one angle per degree of freedom

    Returns:
        SymplecticMap with A = D = diag(cos), C = -B = diag(sin)
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    c = np.diag(np.cos(alphas))
    s = np.diag(np.sin(alphas))
    return SymplecticMap(len(alphas), np.block([[c, -s], [s, c]]))


def hyperbolic(mus: Union[float, Sequence[float]]) -> SymplecticMap:
    """diag(e^mu, e^-mu) per degree of freedom."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    zero = np.zeros((len(mus), len(mus)))
    return SymplecticMap(len(mus), np.block([[np.diag(np.exp(mus)), zero],
                                             [zero, np.diag(np.exp(-mus))]]))


def loxodromic(alpha: float, mu: float) -> SymplecticMap:
    """
    Complex-dilation map on a 4-dimensional block.

    Built as the exponential of the Hamiltonian generator
    blockdiag(M, -M^T) with M = [[mu, -alpha], [alpha, mu]], so the
    eigenvalues are e^{+-mu +- i alpha}.
    """
    m = np.array([[mu, -alpha], [alpha, mu]])
    zero = np.zeros((2, 2))
    generator = np.block([[m, zero], [zero, -m.T]])
    return SymplecticMap(2, expm(generator))


def random_symplectic(d: int, rng: np.random.Generator, kind: str = "semisimple",
                      scale: float = 0.5) -> SymplecticMap:
    """
    Random symplectic map for property tests.

    Args:
        d: Degrees of freedom
        rng: numpy random generator
        kind: "semisimple" (exp of a random Hamiltonian generator), "elliptic"
            (conjugated rotation) or "unitary" (orthogonal symplectic)
        scale: Size of the random generator entries

    Returns:
        SymplecticMap
    """
    w = omega(d)
    if kind == "unitary":
        x = rng.normal(scale=scale, size=(d, d))
        y = rng.normal(scale=scale, size=(d, d))
        skew = x - x.T
        sym = y + y.T
        # Hamiltonian generator commuting with Omega -> orthogonal symplectic flow
        return SymplecticMap(d, expm(np.block([[skew, -sym], [sym, skew]])))
    if kind == "elliptic":
        alphas = rng.uniform(0.2, 2 * math.pi - 0.2, size=d)
        conj = expm(w @ _random_symmetric(2 * d, rng, scale))
        return SymplecticMap(d, conj @ rotation(alphas).matrix @ np.linalg.inv(conj))
    if kind == "semisimple":
        return SymplecticMap(d, expm(w @ _random_symmetric(2 * d, rng, scale)))
    raise ValueError(f"unknown kind: {kind}")


def _random_symmetric(n: int, rng: np.random.Generator, scale: float) -> np.ndarray:
    h = rng.normal(scale=scale, size=(n, n))
    return (h + h.T) / 2


# Operations

def check_symplectic(S: Union[SymplecticMap, np.ndarray], tol: Optional[float] = None) -> bool:
    """
    True iff S^T Omega S - Omega has max-entry magnitude <= tol.

    Raises:
        DimensionError: If the matrix is not even square
    """
    if isinstance(S, SymplecticMap):
        matrix = S.matrix
        tol = S.tol if tol is None else tol
    else:
        matrix = np.asarray(S, dtype=float)
        tol = DEFAULT_TOL if tol is None else tol
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2 != 0:
        raise DimensionError(f"expected an even square matrix, got shape {matrix.shape}")
    w = omega(matrix.shape[0] // 2)
    return float(np.max(np.abs(matrix.T @ w @ matrix - w))) <= tol


def _require_symplectic(S: SymplecticMap, operation: str) -> None:
    if not check_symplectic(S):
        raise ContractViolation(f"{operation}: input is not symplectic within tol={S.tol}")


def holomorphic_block(S: SymplecticMap) -> np.ndarray:
    """P = (A + D + i(C - B)) / 2."""
    A, B, C, D = S.blocks
    return 0.5 * (A + D + 1j * (C - B))


def _classification_tol(S: SymplecticMap) -> float:
    return 1e-9 * (1.0 + np.linalg.norm(S.matrix, 2))


def classify(S: SymplecticMap, tol: Optional[float] = None) -> ClassificationTag:
    """
    Classify a symplectic map by its eigenvalue quadruples.

    Elliptic exponents are taken in (0, 2pi) using the Krein sign of the
    eigenvector, so rotation(alpha) is Elliptic(alpha) for every alpha.

    Args:
        S: Symplectic map
        tol: Eigenvalue tolerance (default 1e-9 * (1 + ||S||))

    Returns:
        ClassificationTag

    Raises:
        NumericError: If the eigen-solver fails
    """
    tol = _classification_tol(S) if tol is None else tol
    try:
        eigvals, eigvecs = np.linalg.eig(S.matrix)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigen-solver failed: {e}", S.matrix)
    if not np.all(np.isfinite(eigvals)):
        raise NumericError("eigen-solver returned non-finite eigenvalues", S.matrix)

    if np.linalg.cond(eigvecs) > NONSEMISIMPLE_CONDITION:
        logger.debug("eigenvector condition %.3e -> NonSemisimple", np.linalg.cond(eigvecs))
        return NonSemisimple()

    w = omega(S.d)
    elliptic, degenerate, hyp_pos, hyp_neg, lox = [], 0, [], [], []
    for lam, vec in zip(eigvals, eigvecs.T):
        on_circle = abs(abs(lam) - 1.0) <= tol
        is_real = abs(lam.imag) <= tol
        if on_circle and is_real:
            degenerate += 1
        elif on_circle:
            if lam.imag > 0:
                theta = float(np.angle(lam))
                krein = float(np.imag(np.conj(vec) @ w @ vec))
                elliptic.append(theta if krein < 0 else 2 * math.pi - theta)
        elif is_real:
            if lam.real > 1.0:
                hyp_pos.append(math.log(lam.real))
            elif lam.real < -1.0:
                hyp_neg.append(math.log(-lam.real))
        elif abs(lam) > 1.0 and lam.imag > 0:
            lox.append((float(np.angle(lam)), math.log(abs(lam))))

    blocks: List[object] = []
    if elliptic:
        blocks.append(Elliptic(tuple(sorted(elliptic))))
    if hyp_pos:
        blocks.append(HyperbolicPositive(tuple(sorted(hyp_pos))))
    if hyp_neg:
        blocks.append(HyperbolicNegative(tuple(sorted(hyp_neg))))
    if lox:
        blocks.append(Loxodromic(tuple(sorted(lox))))
    if degenerate:
        blocks.append(DegenerateElliptic())

    if degenerate and not (hyp_pos or hyp_neg or lox):
        return DegenerateElliptic()
    if len(blocks) == 1:
        return blocks[0]
    return Mixed(tuple(blocks))


def polar_decompose(S: SymplecticMap) -> Tuple[SymplecticMap, SymplecticMap]:
    """
    Polar decomposition S = U Phat with Phat = (S^T S)^{1/2}.

    Raises:
        ContractViolation: If S is not symplectic
    """
    _require_symplectic(S, "polar_decompose")
    u, p = polar(S.matrix, side="right")
    p = (p + p.T) / 2
    return SymplecticMap(S.d, u, S.tol), SymplecticMap(S.d, p, S.tol)


def _blockdet_argument(matrices: np.ndarray, d: int) -> np.ndarray:
    """det(A + D + i(B - C)) for a stack of 2d x 2d matrices."""
    A = matrices[..., :d, :d]
    B = matrices[..., :d, d:]
    C = matrices[..., d:, :d]
    D = matrices[..., d:, d:]
    return np.linalg.det(A + D + 1j * (B - C))


class _PolarPath:
    """
    Continuous path t -> U(t) Phat^t from I to S inside Sp(2d).

    The unitary factor is moved along its eigen-angles taken in [0, 2pi),
    which makes rotation(alpha) follow rotation(t * alpha).
    """

    def __init__(self, S: SymplecticMap):
        self.d = S.d
        u, p = polar_decompose(S)
        d = S.d
        x = u.matrix[:d, :d]
        y = u.matrix[d:, :d]
        unitary = x + 1j * y
        t_form, z = schur(unitary, output="complex")
        angles = np.mod(np.angle(np.diag(t_form)), 2 * math.pi)
        # Numerically unit eigenvalues sitting at 2pi wrap back to 0
        angles[angles > 2 * math.pi - 1e-12] = 0.0
        self._z = z
        self._angles = angles
        log_p = np.real(logm(p.matrix))
        self._log_p = (log_p + log_p.T) / 2
        self._cache = {}

    def at(self, ts: np.ndarray) -> np.ndarray:
        key = len(ts)
        if key in self._cache:
            return self._cache[key]
        d = self.d
        out = np.empty((len(ts), 2 * d, 2 * d))
        for i, t in enumerate(ts):
            ut = self._z @ np.diag(np.exp(1j * t * self._angles)) @ self._z.conj().T
            re, im = ut.real, ut.imag
            u_real = np.block([[re, -im], [im, re]])
            out[i] = u_real @ expm(t * self._log_p)
        self._cache[key] = out
        return out


def _tracked_phases(path: _PolarPath, prefix: np.ndarray, start_phase: float) -> Tuple[float, float]:
    """
    Follow arg det(A + D + i(B - C)) along prefix @ path(t), t in [0, 1].

    Returns:
        (unwrapped end phase, modulus of the determinant at t = 1)
    """
    samples = 64
    while True:
        ts = np.linspace(0.0, 1.0, samples + 1)
        mats = prefix @ path.at(ts)
        dets = _blockdet_argument(mats, path.d)
        if np.any(np.abs(dets) < 1e-300):
            raise SingularConfigurationError("det(A + D + i(B - C)) vanishes along the path")
        phases = np.angle(dets)
        steps = np.angle(np.exp(1j * np.diff(phases)))
        if np.max(np.abs(steps), initial=0.0) < MAX_PHASE_STEP or samples >= MAX_PATH_SAMPLES:
            break
        samples *= 2
    # continuity with the phase carried in from the previous segment
    offset = start_phase - phases[0]
    offset = 2 * math.pi * round(offset / (2 * math.pi))
    unwrapped = np.unwrap(phases) + offset
    return float(unwrapped[-1]), float(np.abs(dets[-1]))


def _value_from_phase(d: int, phase: float, modulus: float) -> Tuple[complex, int]:
    value = 2 ** (d / 2) * modulus ** -0.5 * np.exp(-0.5j * phase)
    principal = math.atan2(math.sin(phase), math.cos(phase))
    branch_index = int(round((phase - principal) / (2 * math.pi)))
    return complex(value), branch_index


def matrix_element_blockdet(S: SymplecticMap) -> MatrixElementValue:
    """
    2^{d/2} det(A + D + i(B - C))^{-1/2} with the branch continued from S = I.

    Raises:
        ContractViolation: If S is not symplectic
        SingularConfigurationError: If the determinant vanishes
    """
    _require_symplectic(S, "matrix_element_blockdet")
    A, B, C, D = S.blocks
    if abs(np.linalg.det(A + D + 1j * (B - C))) <= S.tol:
        raise SingularConfigurationError("det(A + D + i(B - C)) vanishes")
    path = _PolarPath(S)
    phase, modulus = _tracked_phases(path, np.eye(2 * S.d), 0.0)
    value, branch = _value_from_phase(S.d, phase, modulus)
    return MatrixElementValue(value, branch, "BlockDet")


def matrix_element_keyid(S: SymplecticMap) -> MatrixElementValue:
    """
    2^d det(I + iJ + S(I - iJ))^{-1/2} with J = Omega.

    det(I + iJ + S(I - iJ)) = 2^d det(A + D + i(B - C)), so the branch is
    inherited from the block-determinant path (2^d is a positive factor).
    """
    _require_symplectic(S, "matrix_element_keyid")
    n = 2 * S.d
    j = omega(S.d)
    eye = np.eye(n)
    key = np.linalg.det(eye + 1j * j + S.matrix @ (eye - 1j * j))
    if abs(key) <= S.tol:
        raise SingularConfigurationError("det(I + iJ + S(I - iJ)) vanishes")
    reference = matrix_element_blockdet(S)
    root = key ** -0.5
    # pick the square root sign matching the tracked block-determinant branch
    candidate = 2 ** S.d * root
    if abs(candidate - reference.value) > abs(-candidate - reference.value):
        candidate = -candidate
    return MatrixElementValue(complex(candidate), reference.branch_index, "KeyId")


def matrix_element_magnitude(S: SymplecticMap) -> float:
    """2^{d/2} det(I + S^T S)^{-1/4}."""
    sign, logdet = np.linalg.slogdet(np.eye(2 * S.d) + S.matrix.T @ S.matrix)
    return float(2 ** (S.d / 2) * math.exp(-logdet / 4))


def matrix_element_gaussian_oracle(S: SymplecticMap, levi_scale: float) -> float:
    """
    Normalized Gaussian integral of exp(-(|u|^2 + |Su|^2) / tau) over R^{2d}.

    The integral equals (pi tau)^d det(I + S^T S)^{-1/2}; dividing by its
    value at S = I and taking the square root gives the matrix-element
    modulus.

    Raises:
        ValueError: If levi_scale <= 0
    """
    if levi_scale <= 0:
        raise ValueError(f"levi_scale must be positive, got {levi_scale}")
    n = 2 * S.d
    form = (np.eye(n) + S.matrix.T @ S.matrix) / levi_scale
    _, logdet = np.linalg.slogdet(form)
    log_integral = (n / 2) * math.log(math.pi) - logdet / 2
    _, logdet_id = np.linalg.slogdet(2 * np.eye(n) / levi_scale)
    log_reference = (n / 2) * math.log(math.pi) - logdet_id / 2
    return float(math.exp((log_integral - log_reference) / 2))


def gaussian_integral_numeric(S: SymplecticMap, levi_scale: float, extent: float = 8.0) -> float:
    """
    Direct 2D quadrature of the Gaussian integral for d = 1 (test oracle).
    """
    from scipy.integrate import dblquad

    if S.d != 1:
        raise UnsupportedClassError("numeric Gaussian integral is only available for d = 1")
    m = S.matrix

    def integrand(p, q):
        u = np.array([q, p])
        su = m @ u
        return math.exp(-(u @ u + su @ su) / levi_scale)

    r = extent * math.sqrt(levi_scale)
    value, _ = dblquad(integrand, -r, r, -r, r, epsabs=1e-13, epsrel=1e-12)
    reference = math.pi * levi_scale / 2
    return math.sqrt(value / reference)


def power_sequence(S: SymplecticMap, N: int) -> List[MatrixElementValue]:
    """
    G_1..G_N for S^n with the branch continued along a path from I.

    The path concatenates S^j * gamma(t), where gamma is the polar path from
    I to S, so the square root of det(A + D + i(B - C)) stays continuous.

    Raises:
        UnsupportedClassError: If S is not semi-simple
    """
    _require_symplectic(S, "power_sequence")
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    if isinstance(classify(S), NonSemisimple):
        raise UnsupportedClassError("power_sequence requires a semi-simple map")

    path = _PolarPath(S)
    prefix = np.eye(2 * S.d)
    phase = 0.0
    values = []
    for _ in range(N):
        phase, modulus = _tracked_phases(path, prefix, phase)
        prefix = prefix @ S.matrix
        value, branch = _value_from_phase(S.d, phase, modulus)
        values.append(MatrixElementValue(value, branch, "BlockDet"))
    return values


def closed_form_sequence(tag: ClassificationTag, N: int) -> List[complex]:
    """
    G_1..G_N from the classification tag alone (normal-form maps).

    Elliptic blocks give e^{i n alpha / 2}, hyperbolic blocks
    (cosh n mu)^{-1/2}, the identity 1.
    """
    ns = np.arange(1, N + 1)
    if isinstance(tag, (DegenerateElliptic, Trivial)):
        return [1.0 + 0j] * N
    if isinstance(tag, Elliptic):
        return list(np.exp(0.5j * ns * sum(tag.alphas)))
    if isinstance(tag, HyperbolicPositive):
        values = np.ones(N)
        for mu in tag.mus:
            values = values * np.cosh(ns * mu) ** -0.5
        return list(values.astype(complex))
    if isinstance(tag, Mixed):
        values = np.ones(N, dtype=complex)
        for block in tag.blocks:
            if isinstance(block, (Loxodromic, HyperbolicNegative)):
                raise UnsupportedClassError(f"no closed form for {tag_name(block)} blocks")
            values = values * np.asarray(closed_form_sequence(block, N))
        return list(values)
    raise UnsupportedClassError(f"no closed form for {tag_name(tag)}")


def create_symplectic_map(matrix, tol: float = DEFAULT_TOL, validate: bool = True) -> SymplecticMap:
    """
    Factory function to build a SymplecticMap from a raw array.

    Args:
        matrix: Even square array-like
        tol: Symplecticity tolerance
        validate: Raise if the matrix is not symplectic

    Returns:
        SymplecticMap

    Raises:
        DimensionError: For odd or non-square input
        ContractViolation: If validate and the matrix is not symplectic
    """
    S = SymplecticMap.from_matrix(matrix, tol=tol)
    if validate:
        _require_symplectic(S, "create_symplectic_map")
    return S
