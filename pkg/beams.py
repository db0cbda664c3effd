"""
Gaussian Beams Module

Gaussian beam quasi-modes along a closed geodesic of a surface of revolution.
The transversal Jacobi equation Y'' + K(s) Y = 0 is integrated with a
fixed-step fourth-order Runge-Kutta scheme, the Riccati matrix
Gamma = Y' Y^{-1} and the Floquet exponents of the monodromy are derived
from it, and the ground beam

    U(s, y) = C0 e^{i r s} (det Y(s))^{-1/2} e^{(i/2) r <Gamma(s) y, y>}

is evaluated on the real tube and continued to complex (s + i sigma, y + i eta).

The (det Y)^{-1/2} branch is tracked continuously from s = 0, where it is the
principal root. Caustics are reported as errors.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from geometries import PoincareData, SphereHarmonic
from symplectic import (
    DegenerateElliptic,
    Elliptic,
    classify,
    create_symplectic_map,
    omega,
    tag_name,
)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
DEFAULT_STEPS = 10_000
# Wronskian drift above this aborts an integration
MAX_WRONSKIAN_DRIFT = 1e-6
FRAME_TOL = 1e-10
# |det Y| below this fraction of |det Y(0)| is a caustic
CAUSTIC_TOL = 1e-8
# Monodromy eigenvalues closer than this share a Floquet cluster
CLUSTER_TOL = 1e-6
MONODROMY_TOL = 1e-8
# Beams are evaluated for |y| <= TUBE_WIDTH * r^{-1/2}
TUBE_WIDTH = 5.0
REFINE_ATTEMPTS = 4


class BeamError(Exception):
    """Custom exception for Jacobi field and Gaussian beam computations."""
    pass


class StepSizeError(BeamError):
    """Raised when the Wronskian drifts beyond tolerance during integration."""
    pass


class CausticError(BeamError):
    """Raised when det Y vanishes on the integration grid."""
    pass


class BeamDomainError(BeamError):
    """Raised for invalid frames, non-elliptic geodesics or points outside the beam tube."""
    pass


@dataclass
class CurvatureProfile:
    """
    Transversal curvature matrix K(s) along a closed geodesic of length L.

    analytic marks profiles that may be evaluated at complex arclength,
    which beam_complexify requires.
    """
    name: str
    function: Callable
    L: float
    d: int = 1
    analytic: bool = True

    def __call__(self, s) -> np.ndarray:
        value = np.asarray(self.function(s))
        return value.reshape(self.d, self.d)


def curvature_preset(name: str, epsilon: float = 0.1, mode: int = 1,
                     L: float = TWO_PI, base: float = 1.0) -> CurvatureProfile:
    """
    Named curvature profiles for d = 1.

    Args:
        name: "sphere" (K = 1) or "perturbed-sphere"
            (K = base + epsilon cos(2 pi mode s / L))
        epsilon: Perturbation amplitude
        mode: Perturbation mode number
        L: Geodesic length
        base: Mean curvature of the perturbed profile

    Returns:
        CurvatureProfile

    Raises:
        BeamDomainError: For unknown names or non-positive L
    """
    if L <= 0:
        raise BeamDomainError(f"geodesic length must be positive, got {L}")
    if name == "sphere":
        return CurvatureProfile("sphere", lambda s: 1.0, L)
    if name == "perturbed-sphere":
        omega_s = TWO_PI * mode / L

        def perturbed(s):
            return base + epsilon * np.cos(omega_s * s)

        return CurvatureProfile(f"perturbed-sphere(eps={epsilon}, mode={mode})", perturbed, L)
    raise BeamDomainError(f"unknown curvature preset: {name}")


def tabulated_curvature(s_samples, values, name: str = "tabulated") -> CurvatureProfile:
    """
    Periodic cubic-spline profile through sampled curvature values.

    The samples must start at s = 0, end at s = L and repeat the first value.
    The spline is not analytic in s, so the profile cannot be complexified.
    """
    s = np.asarray(s_samples, dtype=float)
    k = np.asarray(values, dtype=float)
    if s.ndim != 1 or len(s) < 4 or abs(s[0]) > 0:
        raise BeamDomainError("curvature table needs at least 4 samples starting at s = 0")
    d = 1 if k.ndim == 1 else k.shape[-1]
    try:
        spline = CubicSpline(s, k, bc_type="periodic", axis=0)
    except ValueError as e:
        raise BeamDomainError(f"curvature table is not periodic: {e}")
    L = float(s[-1])
    return CurvatureProfile(name, lambda t: spline(np.mod(np.real(t), L)), L, d=d, analytic=False)


def _as_profile(K, L: float, d: int) -> CurvatureProfile:
    if isinstance(K, CurvatureProfile):
        if K.d != d:
            raise BeamDomainError(f"curvature dimension {K.d} does not match frame dimension {d}")
        return K
    return CurvatureProfile("custom", K, L, d=d)


def oscillator_frame(d: int, kappa: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized frame for constant curvature kappa: Y = kappa^{-1/4} I/sqrt2, Y' = i kappa^{1/4} I/sqrt2."""
    if kappa <= 0:
        raise BeamDomainError(f"oscillator frame needs positive curvature, got {kappa}")
    eye = np.eye(d, dtype=complex)
    return eye * kappa ** -0.25 / math.sqrt(2), 1j * eye * kappa ** 0.25 / math.sqrt(2)


def _rk4_path(K: CurvatureProfile, start, h, steps: int, Y0: np.ndarray, V0: np.ndarray):
    """RK4 for Y'' = -K Y from `start` in `steps` steps of size h (h may be complex)."""
    Y = np.array(Y0, dtype=complex)
    V = np.array(V0, dtype=complex)
    Ys = np.empty((steps + 1,) + Y.shape, dtype=complex)
    Vs = np.empty_like(Ys)
    Ys[0], Vs[0] = Y, V
    for i in range(steps):
        s = start + i * h
        K0, Kh, K1 = K(s), K(s + h / 2), K(s + h)
        k1y, k1v = V, -K0 @ Y
        k2y, k2v = V + 0.5 * h * k1v, -Kh @ (Y + 0.5 * h * k1y)
        k3y, k3v = V + 0.5 * h * k2v, -Kh @ (Y + 0.5 * h * k2y)
        k4y, k4v = V + h * k3v, -K1 @ (Y + h * k3y)
        Y = Y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        Ys[i + 1], Vs[i + 1] = Y, V
    return Ys, Vs


def _wronskians(Y: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Y^T V - V^T Y and Y^* V - V^* Y for stacked samples."""
    Yt = np.swapaxes(Y, -1, -2)
    Vt = np.swapaxes(V, -1, -2)
    symmetric = Yt @ V - Vt @ Y
    hermitian = Yt.conj() @ V - Vt.conj() @ Y
    return symmetric, hermitian


@dataclass
class JacobiSolution:
    grid: np.ndarray
    Y: np.ndarray
    Ydot: np.ndarray
    curvature: CurvatureProfile
    L: float
    steps: int
    wronskian_drift: float
    normalized: bool = True

    @property
    def d(self) -> int:
        return self.Y.shape[-1]


def integrate_jacobi(K, L: float, Y0, Ydot0, steps: int = DEFAULT_STEPS,
                     normalized: bool = True) -> JacobiSolution:
    """
    Integrate Y'' + K(s) Y = 0 on [0, L] with fixed-step RK4.

    Args:
        K: CurvatureProfile or callable s -> d x d symmetric matrix
        L: Geodesic length
        Y0, Ydot0: Initial d x d frame
        steps: Number of RK4 steps
        normalized: Require Y^T Y' = Y'^T Y and Y^* Y' - Y'^* Y = iI at s = 0

    Returns:
        JacobiSolution with the certified Wronskian drift

    Raises:
        BeamDomainError: If the initial frame violates the Wronskian normalization
        StepSizeError: If the Wronskians drift by more than MAX_WRONSKIAN_DRIFT
        CausticError: If det Y vanishes on the grid
    """
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=complex))
    Ydot0 = np.atleast_2d(np.asarray(Ydot0, dtype=complex))
    d = Y0.shape[0]
    if Y0.shape != (d, d) or Ydot0.shape != (d, d):
        raise BeamDomainError(f"initial frame must be square, got {Y0.shape} and {Ydot0.shape}")
    if steps < 1 or L <= 0:
        raise BeamDomainError(f"need steps >= 1 and L > 0, got steps={steps}, L={L}")
    profile = _as_profile(K, L, d)

    sym0, herm0 = _wronskians(Y0, Ydot0)
    if normalized:
        if np.max(np.abs(sym0)) > FRAME_TOL or np.max(np.abs(herm0 - 1j * np.eye(d))) > FRAME_TOL:
            raise BeamDomainError("initial frame does not satisfy the Wronskian normalization")

    h = L / steps
    Ys, Vs = _rk4_path(profile, 0.0, h, steps, Y0, Ydot0)
    sym, herm = _wronskians(Ys, Vs)
    scale = max(1.0, float(np.max(np.abs(herm0))))
    drift = max(float(np.max(np.abs(sym - sym0))), float(np.max(np.abs(herm - herm0)))) / scale
    if not np.isfinite(drift) or drift > MAX_WRONSKIAN_DRIFT:
        raise StepSizeError(f"Wronskian drift {drift:.3e} with {steps} steps exceeds {MAX_WRONSKIAN_DRIFT}")

    dets = np.abs(np.linalg.det(Ys))
    floor = CAUSTIC_TOL * abs(np.linalg.det(Y0))
    if dets.min() <= floor:
        where = int(np.argmin(dets))
        raise CausticError(f"det Y vanishes near s = {where * h:.6f}")

    logger.debug(f"Jacobi integration over L={L} with {steps} steps, drift {drift:.2e}")
    return JacobiSolution(
        grid=np.linspace(0.0, L, steps + 1),
        Y=Ys,
        Ydot=Vs,
        curvature=profile,
        L=L,
        steps=steps,
        wronskian_drift=drift,
        normalized=normalized,
    )


def integrate_jacobi_refined(K, L: float, Y0, Ydot0, steps: int = DEFAULT_STEPS,
                             normalized: bool = True,
                             attempts: int = REFINE_ATTEMPTS) -> JacobiSolution:
    """integrate_jacobi, doubling the step count after each StepSizeError."""
    current = {"steps": steps}

    @retry(retry=retry_if_exception_type(StepSizeError), stop=stop_after_attempt(attempts), reraise=True)
    def attempt() -> JacobiSolution:
        try:
            return integrate_jacobi(K, L, Y0, Ydot0, current["steps"], normalized)
        except StepSizeError as e:
            logger.warning(f"{e}; retrying with {2 * current['steps']} steps")
            current["steps"] *= 2
            raise

    return attempt()


@dataclass
class RichardsonReport:
    order: float
    error_estimate: float
    steps: int

    def to_dict(self):
        return asdict(self)


def richardson_check(K, L: float, Y0, Ydot0, steps: int = DEFAULT_STEPS,
                     normalized: bool = True) -> RichardsonReport:
    """
    Observed convergence order of Y(L) from runs with steps, 2 steps and 4 steps.

    The order is inf when the coarse and fine runs already agree to rounding.
    """
    finals = [integrate_jacobi(K, L, Y0, Ydot0, n, normalized).Y[-1] for n in (steps, 2 * steps, 4 * steps)]
    e1 = float(np.max(np.abs(finals[0] - finals[1])))
    e2 = float(np.max(np.abs(finals[1] - finals[2])))
    if e2 == 0.0 or e1 == 0.0:
        order = math.inf
    else:
        order = math.log2(e1 / e2)
    return RichardsonReport(order=order, error_estimate=e2 / 15.0, steps=4 * steps)


def riccati_gamma(sol: JacobiSolution) -> np.ndarray:
    """Gamma = Y' Y^{-1} at every grid point, shape (steps + 1, d, d)."""
    dets = np.abs(np.linalg.det(sol.Y))
    if dets.min() <= CAUSTIC_TOL * dets[0]:
        raise CausticError("Y is singular on the grid")
    # Gamma^T = Y^{-T} Y'^T
    gamma_t = np.linalg.solve(np.swapaxes(sol.Y, -1, -2), np.swapaxes(sol.Ydot, -1, -2))
    return np.swapaxes(gamma_t, -1, -2)


@dataclass
class RiccatiReport:
    residual: float
    identity_error: float
    symmetry_error: float
    min_imag_eigenvalue: float

    def to_dict(self):
        return asdict(self)


def riccati_report(sol: JacobiSolution, gamma: Optional[np.ndarray] = None) -> RiccatiReport:
    """
    Certify Gamma along a normalized solution.

    residual is the fourth-order finite-difference residual of
    Gamma' + Gamma^2 + K relative to max |K|; identity_error compares
    Im Gamma with (Y Y^*)^{-1} / 2.
    """
    if gamma is None:
        gamma = riccati_gamma(sol)
    h = sol.L / sol.steps
    K = np.array([sol.curvature(s) for s in sol.grid])
    k_scale = max(float(np.max(np.abs(K))), 1e-300)

    residual = 0.0
    if len(gamma) >= 5:
        derivative = (-gamma[4:] + 8 * gamma[3:-1] - 8 * gamma[1:-3] + gamma[:-4]) / (12 * h)
        inner = gamma[2:-2]
        r = derivative + inner @ inner + K[2:-2]
        residual = float(np.max(np.abs(r))) / k_scale

    YYstar = sol.Y @ np.swapaxes(sol.Y.conj(), -1, -2)
    target = 0.5 * np.linalg.inv(YYstar)
    identity_error = float(np.max(np.abs(gamma.imag - target)))
    symmetry_error = float(np.max(np.abs(gamma - np.swapaxes(gamma, -1, -2))))
    imag_sym = 0.5 * (gamma.imag + np.swapaxes(gamma.imag, -1, -2))
    min_eig = float(np.min(np.linalg.eigvalsh(imag_sym)))
    return RiccatiReport(residual, identity_error, symmetry_error, min_eig)


def monodromy(K, L: float, d: int = 1, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Real 2d x 2d map (Y(0), Y'(0)) -> (Y(L), Y'(L)) of the Jacobi equation."""
    profile = _as_profile(K, L, d)
    eye = np.eye(d)
    zero = np.zeros((d, d))
    Ys, Vs = _rk4_path(profile, 0.0, L / steps, steps, np.hstack([eye, zero]), np.hstack([zero, eye]))
    return np.vstack([Ys[-1], Vs[-1]]).real


def _classify_monodromy(S):
    # +-I up to integration error: eigenvectors of the rounding noise are meaningless
    eye = np.eye(2 * S.d)
    if min(np.max(np.abs(S.matrix - eye)), np.max(np.abs(S.matrix + eye))) < CLUSTER_TOL:
        return DegenerateElliptic()
    return classify(S)


def floquet_frame(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """
    Normalized Floquet frame of an elliptic monodromy.

    Columns are eigenvectors P v = e^{i alpha} v with positive Krein form
    -i(v_y^* v_eta - v_eta^* v_y), scaled so the frame satisfies
    Y^* Y' - Y'^* Y = iI, phased so the largest y-component is real
    positive, and ordered by ascending principal alpha in [0, 2 pi).

    Raises:
        BeamDomainError: If the monodromy is not elliptic
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0] // 2
    tag = _classify_monodromy(create_symplectic_map(M, tol=MONODROMY_TOL))
    if not isinstance(tag, (Elliptic, DegenerateElliptic)):
        raise BeamDomainError(f"monodromy is not elliptic ({tag_name(tag)})")

    krein = -1j * omega(d)
    values = np.linalg.eigvals(M)
    scale = 1.0 + np.linalg.norm(M, 2)
    unassigned = list(range(len(values)))
    columns, alphas = [], []
    while unassigned:
        i = unassigned[0]
        group = [j for j in unassigned if abs(values[j] - values[i]) < CLUSTER_TOL]
        unassigned = [j for j in unassigned if j not in group]
        center = np.mean(values[group])
        # eigenspace of the whole cluster, stable when M is close to +-I
        _, singular, vh = np.linalg.svd(M - center * np.eye(2 * d))
        basis = vh.conj().T[:, singular < CLUSTER_TOL * scale]
        if basis.shape[1] != len(group):
            raise BeamDomainError(f"eigenvalue cluster near {center:.6f} is not semisimple")
        gram = basis.conj().T @ krein @ basis
        weights, directions = np.linalg.eigh(0.5 * (gram + gram.conj().T))
        alpha = float(np.mod(np.angle(center), TWO_PI))
        for w, u in zip(weights, directions.T):
            if w > CLUSTER_TOL:
                columns.append(basis @ u / math.sqrt(w))
                alphas.append(alpha)

    if len(columns) != d:
        raise BeamDomainError(f"found {len(columns)} positive Floquet directions, expected {d}")

    order = np.argsort(alphas, kind="stable")
    frame = np.array([columns[j] for j in order]).T
    for j in range(d):
        y = frame[:d, j]
        pivot = y[np.argmax(np.abs(y))]
        frame[:, j] *= abs(pivot) / pivot
    return frame[:d], frame[d:], [alphas[j] for j in order]


def _det_phase(Y: np.ndarray) -> np.ndarray:
    return np.unwrap(np.angle(np.linalg.det(Y)))


def _wound_alphas(alphas: Sequence[float], phase: np.ndarray) -> Tuple[List[float], float]:
    """Shift the largest alpha by 2 pi n so that sum(alpha) equals the winding of det Y."""
    winding = float(phase[-1] - phase[0])
    shifted = list(alphas)
    n = round((winding - sum(shifted)) / TWO_PI)
    if shifted:
        shifted[-1] += TWO_PI * n
    return shifted, winding


def poincare_from_jacobi(sol: JacobiSolution) -> PoincareData:
    """
    Linearized Poincare map of the periodic Jacobi equation behind `sol`.

    Elliptic monodromies also carry Floquet exponents alpha_j, continued so
    that their sum is the winding of det Y over one period (alpha = 2 pi for
    the round sphere). Other classes carry no exponents.
    """
    d = sol.d
    M = monodromy(sol.curvature, sol.L, d, sol.steps)
    S = create_symplectic_map(M, tol=MONODROMY_TOL)
    tag = _classify_monodromy(S)
    exponents: List[float] = []
    if isinstance(tag, (Elliptic, DegenerateElliptic)):
        Y0, V0, alphas = floquet_frame(M)
        frame_sol = integrate_jacobi_refined(sol.curvature, sol.L, Y0, V0, sol.steps)
        exponents, _ = _wound_alphas(alphas, _det_phase(frame_sol.Y))
    else:
        logger.info(f"monodromy over L={sol.L} is {tag_name(tag)}; no Floquet exponents")
    return PoincareData(T=sol.L, S=S, tag=tag, exponents=exponents)


@dataclass
class BeamSpec:
    jacobi: JacobiSolution
    alphas: Tuple[float, ...]
    k: int
    q: Tuple[int, ...]
    r_kq: float
    c0: float = 1.0
    gamma: np.ndarray = field(default=None, repr=False)
    det_log_modulus: np.ndarray = field(default=None, repr=False)
    det_phase: np.ndarray = field(default=None, repr=False)
    winding: float = 0.0

    @property
    def L(self) -> float:
        return self.jacobi.L

    @property
    def d(self) -> int:
        return self.jacobi.d

    @property
    def tube_radius(self) -> float:
        return TUBE_WIDTH / math.sqrt(self.r_kq)


def beam_l2_norm(sol: JacobiSolution, gamma: np.ndarray, r: float) -> float:
    """
    Squared L^2 norm over the tube of the unnormalized ground beam.

    The transverse Gaussian integrates to (pi/r)^{d/2} det(Im Gamma)^{-1/2};
    the s-integral is a trapezoid over the Jacobi grid.
    """
    d = sol.d
    imag_sym = 0.5 * (gamma.imag + np.swapaxes(gamma.imag, -1, -2))
    dets = np.linalg.det(imag_sym)
    if np.any(dets <= 0):
        raise BeamDomainError("Im Gamma is not positive definite")
    density = (math.pi / r) ** (d / 2) / np.sqrt(dets) / np.abs(np.linalg.det(sol.Y))
    return float(trapezoid(density, sol.grid))


def build_beam(K, L: float, k: int, steps: int = DEFAULT_STEPS, d: int = 1,
               q: Optional[Sequence[int]] = None) -> BeamSpec:
    """
    Factory function for the ground Gaussian beam along a closed geodesic.

    Args:
        K: CurvatureProfile or callable transversal curvature
        L: Geodesic length
        k: Longitudinal mode number
        steps: Initial RK4 step count (refined on Wronskian drift)
        d: Transversal dimension for plain callables
        q: Transversal multi-index recorded in r_kq (default zeros)

    Returns:
        BeamSpec normalized to unit L^2 norm over the tube

    Raises:
        BeamDomainError: For non-elliptic geodesics or non-positive r_kq
    """
    if isinstance(K, CurvatureProfile):
        d = K.d
    q = tuple(q) if q is not None else (0,) * d
    if len(q) != d or any(j < 0 for j in q):
        raise BeamDomainError(f"q must be {d} non-negative integers, got {q}")

    Y0, V0, alphas = floquet_frame(monodromy(K, L, d, steps))
    sol = integrate_jacobi_refined(K, L, Y0, V0, steps)
    phase = _det_phase(sol.Y)
    alphas, winding = _wound_alphas(alphas, phase)

    r = (TWO_PI * k + sum((qj + 0.5) * a for qj, a in zip(q, alphas))) / L
    if r <= 0:
        raise BeamDomainError(f"r_kq = {r} is not positive for k={k}")

    gamma = riccati_gamma(sol)
    norm2 = beam_l2_norm(sol, gamma, r)
    logger.debug(f"beam k={k} q={q}: r={r:.6f}, alphas={alphas}, norm^2={norm2:.6e}")
    return BeamSpec(
        jacobi=sol,
        alphas=tuple(alphas),
        k=k,
        q=q,
        r_kq=r,
        c0=norm2 ** -0.5,
        gamma=gamma,
        det_log_modulus=np.log(np.abs(np.linalg.det(sol.Y))),
        det_phase=phase,
        winding=winding,
    )


def floquet_factor(spec: BeamSpec) -> complex:
    """e^{i(r L - winding/2)}; equals 1 exactly when r_kq satisfies the quantization."""
    return complex(np.exp(1j * (spec.r_kq * spec.L - 0.5 * spec.winding)))


def _reduce(spec: BeamSpec, s: float) -> Tuple[float, int]:
    j = math.floor(s / spec.L)
    s0 = s - j * spec.L
    if s0 >= spec.L:
        s0, j = 0.0, j + 1
    return s0, j


def _state_at(spec: BeamSpec, s0: float):
    """Y, Y' and the continuous det-phase at s0 in [0, L)."""
    sol = spec.jacobi
    h = sol.L / sol.steps
    i = min(int(s0 // h), sol.steps - 1)
    delta = s0 - sol.grid[i]
    if delta == 0.0:
        return sol.Y[i], sol.Ydot[i], spec.det_phase[i]
    Ys, Vs = _rk4_path(sol.curvature, sol.grid[i], delta, 1, sol.Y[i], sol.Ydot[i])
    ratio = np.linalg.det(Ys[-1]) / np.linalg.det(sol.Y[i])
    return Ys[-1], Vs[-1], spec.det_phase[i] + float(np.angle(ratio))


def _transverse(y, d: int) -> np.ndarray:
    y = np.asarray(y)
    if d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    if y.shape[-1] != d:
        raise BeamDomainError(f"transverse vector must have {d} components")
    return y


def _require_ground(spec: BeamSpec) -> None:
    if any(spec.q):
        raise BeamDomainError(f"only the ground beam (q = 0) can be evaluated, got q={spec.q}")


def beam_eval(spec: BeamSpec, s: float, y) -> Union[complex, np.ndarray]:
    """
    Normalized ground beam at arclength s and transverse offset(s) y.

    Raises:
        BeamDomainError: For q != 0 or |y| outside the beam tube
        CausticError: If det Y vanishes at s
    """
    _require_ground(spec)
    yv = _transverse(y, spec.d)
    if np.any(np.linalg.norm(yv.real, axis=-1) > spec.tube_radius * (1 + 1e-12)):
        raise BeamDomainError(f"|y| exceeds the beam tube radius {spec.tube_radius:.6f}")

    s0, j = _reduce(spec, s)
    Y, V, phase = _state_at(spec, s0)
    det = np.linalg.det(Y)
    if abs(det) <= CAUSTIC_TOL * math.exp(spec.det_log_modulus[0]):
        raise CausticError(f"det Y vanishes at s = {s}")
    gamma = V @ np.linalg.inv(Y)
    total_phase = phase + j * spec.winding
    quadratic = np.einsum("...i,ij,...j->...", yv, gamma, yv)
    value = spec.c0 * np.exp(1j * spec.r_kq * s - 0.5 * (math.log(abs(det)) + 1j * total_phase)
                             + 0.5j * spec.r_kq * quadratic)
    return complex(value) if np.ndim(value) == 0 else value


def beam_complexify(spec: BeamSpec, s: float, sigma: float, y=0.0, eta=0.0,
                    tau: Optional[float] = None) -> Union[complex, np.ndarray]:
    """
    Analytic continuation of the ground beam to (s + i sigma, y + i eta).

    Y is continued along the vertical segment from s to s + i sigma with
    complex RK4 steps, and the (det Y)^{-1/2} branch follows det Y along it.

    Raises:
        BeamDomainError: For non-analytic curvature, q != 0 or |sigma| > tau
        CausticError: If det Y vanishes on the continuation path
    """
    _require_ground(spec)
    if not spec.jacobi.curvature.analytic:
        raise BeamDomainError(f"curvature profile {spec.jacobi.curvature.name} is not analytic")
    if tau is not None and abs(sigma) > tau:
        raise BeamDomainError(f"|sigma| = {abs(sigma)} exceeds the tube radius tau = {tau}")
    yc = _transverse(np.asarray(y) + 1j * np.asarray(eta), spec.d)

    s0, j = _reduce(spec, s)
    Y, V, phase = _state_at(spec, s0)
    if sigma != 0.0:
        h_grid = spec.L / spec.jacobi.steps
        n = max(16, math.ceil(abs(sigma) / h_grid))
        Ys, Vs = _rk4_path(spec.jacobi.curvature, s0, 1j * sigma / n, n, Y, V)
        dets = np.linalg.det(Ys)
        if np.abs(dets).min() <= CAUSTIC_TOL * abs(dets[0]):
            raise CausticError(f"det Y vanishes on the continuation path at s = {s}")
        phase = phase + float(np.sum(np.angle(dets[1:] / dets[:-1])))
        Y, V = Ys[-1], Vs[-1]
    det = np.linalg.det(Y)
    gamma = V @ np.linalg.inv(Y)
    z = s + 1j * sigma
    total_phase = phase + j * spec.winding
    quadratic = np.einsum("...i,ij,...j->...", yc, gamma, yc)
    value = spec.c0 * np.exp(1j * spec.r_kq * z - 0.5 * (math.log(abs(det)) + 1j * total_phase)
                             + 0.5j * spec.r_kq * quadratic)
    return complex(value) if np.ndim(value) == 0 else value


def sphere_beam_error(N: int, steps: int = DEFAULT_STEPS, samples: int = 201, s: float = 0.3) -> float:
    """
    Relative sup error of the k = N equatorial beam against the normalized
    highest-weight harmonic C_N (x1 + i x2)^N across the beam tube at arclength s.
    """
    spec = build_beam(curvature_preset("sphere"), TWO_PI, N, steps)
    ys = np.linspace(-1.0, 1.0, samples) * spec.tube_radius
    points = np.stack([np.cos(ys) * math.cos(s), np.cos(ys) * math.sin(s), np.sin(ys)], axis=-1)
    exact = SphereHarmonic("highest-weight", N).values(points)
    beam = beam_eval(spec, s, ys)
    return float(np.max(np.abs(beam - exact)) / np.max(np.abs(exact)))
