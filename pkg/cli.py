#!/usr/bin/env python3
"""
Grauert Tube Weyl Law CLI

A command-line interface for the tempered Weyl law computations: symplectic
classification, Q-functions, tempered sums, Husimi extremals, smoothed
densities, period coefficients and Gaussian beams. Every command reads the
same flat key=value run file; flags mirror its keys and override it.
"""

import dataclasses
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import numpy as np
from dotenv import load_dotenv

from beams import (
    BeamError,
    beam_complexify,
    beam_eval,
    build_beam,
    curvature_preset,
    floquet_factor,
    integrate_jacobi,
    oscillator_frame,
    riccati_report,
    sphere_beam_error,
    tabulated_curvature,
)
from geometries import (
    GeometryError,
    LatticeHarmonic,
    NotPeriodic,
    SphereHarmonic,
    build_eigendata,
    circle_eigendata,
    create_geometry,
    flat_torus_q,
    highest_weight_norm2,
    poincare_data,
    sphere_eigendata,
    sphere_tube_point,
    torus_eigendata,
    tube_point,
)
from qfunction import (
    Abel,
    Cesaro,
    QFunctionError,
    QFunctionSpec,
    Truncate,
    classify_continuity,
    closed_form_elliptic,
    detect_jumps,
    elliptic_qspec,
    fit_closed_form_constant,
    jump_points,
    q_eval,
    qspec_from_map,
)
from run_report import (
    DEFAULT_TAU,
    KEY_TYPES,
    ConfigError,
    RunConfig,
    VerificationReport,
    load_config,
    write_report,
    write_summary,
    write_table,
)
from symplectic import (
    SymplecticError,
    classify,
    closed_form_sequence,
    create_symplectic_map,
    hyperbolic,
    matrix_element_blockdet,
    matrix_element_keyid,
    matrix_element_magnitude,
    power_sequence,
    random_symplectic,
    rotation,
    tag_name,
)
from weyl import (
    WeylError,
    build_smoothing_kernel,
    calibrate_period_constant,
    circle_closed_form,
    fit_power_law,
    husimi_sup,
    jump_at,
    l2_norm_boundary,
    l2_norm_oracle_torus,
    period_coefficient_extract,
    smoothed_series,
    tempered_series,
    tempered_sum,
    two_term_residual,
    universal_bound,
    window_increment,
)
from workers import WorkerConfigError, resolve_worker_count

# Load environment variables from .env.local automatically
load_dotenv('.env.local')

VERSION = "1.0.0"
OUTPUT_DIR_ENV = "GW_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"
TWO_PI = 2 * math.pi

DEFAULT_GRID = 1000
DEFAULT_SWEEP = 9
DEFAULT_BEAM_SAMPLES = 200
# indicator window for the smoothed-density comparison
WINDOW_WIDTH = 10.0
# seed for the random cross-formula checks in verify-all
VERIFY_SEED = 20240607

LIBRARY_ERRORS = (ConfigError, GeometryError, WeylError, BeamError, SymplecticError,
                  QFunctionError, WorkerConfigError, OSError)

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """Table, summary and optional verification report produced by one command."""
    header: List[str]
    rows: List[Sequence[Any]]
    summary: Dict[str, Any] = field(default_factory=dict)
    report: Optional[VerificationReport] = None


# Input files

def load_matrix(path: str) -> np.ndarray:
    """
    Read a matrix file: first line "d=<int>", then 2d whitespace-separated
    rows of 2d entries, row-major. '#' starts a comment.

    Raises:
        ConfigError: With the offending line number
    """
    numbered = []
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            numbered.append((number, line))
    if not numbered or not numbered[0][1].replace(" ", "").startswith("d="):
        raise ConfigError(f"{path}: matrix file must start with 'd=<int>'",
                          numbered[0][0] if numbered else None)
    first_line, header = numbered[0]
    try:
        d = int(header.split("=", 1)[1])
    except ValueError:
        raise ConfigError(f"{path}: invalid dimension '{header}'", first_line)
    rows = numbered[1:]
    if len(rows) != 2 * d:
        raise ConfigError(f"{path}: expected {2 * d} rows for d={d}, got {len(rows)}", first_line)
    matrix = []
    for number, line in rows:
        try:
            values = [float(part) for part in line.split()]
        except ValueError:
            raise ConfigError(f"{path}: non-numeric entry in '{line}'", number)
        if len(values) != 2 * d:
            raise ConfigError(f"{path}: expected {2 * d} entries, got {len(values)}", number)
        matrix.append(values)
    return np.array(matrix)


def load_curvature(config: RunConfig):
    """Named curvature preset, or a two-column (s, K) table file."""
    name = config.curvature
    if name in ("sphere", "perturbed-sphere"):
        return curvature_preset(name, config.epsilon, config.mode, base=config.curvature_base)
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"curvature must be 'sphere', 'perturbed-sphere' or a table file, got '{name}'",
                          config.lines.get("curvature"))
    samples = []
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            samples.append([float(part) for part in line.split()])
        except ValueError:
            raise ConfigError(f"{path}: non-numeric curvature sample '{line}'", number)
    table = np.array(samples)
    if table.ndim != 2 or table.shape[1] != 2:
        raise ConfigError(f"{path}: curvature table needs two columns (s, K)")
    return tabulated_curvature(table[:, 0], table[:, 1], name=path.stem)


# Shared setup

def _tau(config: RunConfig) -> float:
    return config.tau if config.tau is not None else DEFAULT_TAU


def _summation(config: RunConfig):
    policy = {"abel": Abel, "cesaro": Cesaro, "truncate": Truncate}[config.summation]
    return policy(N=config.summation_N) if config.summation_N else policy()


def _geometry(config: RunConfig):
    return create_geometry(config.geometry, config.m)


def _evaluation_point(config: RunConfig, geometry):
    """
    Tube point from base_point/direction. Defaults: the equator point of the
    sphere, the lattice direction when lattice_vector is set, otherwise the
    irrational direction (1, sqrt 2, ...) normalized.
    """
    tau = config.tau
    if geometry.name == "sphere":
        if config.base_point is None and config.direction is None:
            return sphere_tube_point(math.pi / 2, 0.0, math.pi, tau)
        if config.base_point is None or config.direction is None:
            raise ConfigError("the sphere needs both base_point and direction, or neither",
                              config.lines.get("direction", config.lines.get("base_point")))
    dim = 3 if geometry.name == "sphere" else geometry.m
    base = np.zeros(dim) if config.base_point is None else np.asarray(config.base_point, dtype=float)
    if config.direction is not None:
        direction = np.asarray(config.direction, dtype=float)
    elif geometry.name == "circle":
        direction = np.array([-1.0])
    elif config.lattice_vector is not None:
        direction = np.asarray(config.lattice_vector, dtype=float)
    else:
        direction = np.sqrt(np.arange(1.0, dim + 1))
    if len(base) != dim or len(direction) != dim:
        raise ConfigError(f"base_point and direction need {dim} components for {geometry.label}",
                          config.lines.get("direction", config.lines.get("base_point")))
    return tube_point(geometry, base, direction / np.linalg.norm(direction), tau)


def _eigendata(config: RunConfig, geometry, lambda_max: float, workers: int):
    if geometry.name == "sphere":
        if config.N_max is not None and config.lambda_max is None:
            return sphere_eigendata(config.N_max, config.quadrature_nodes)
        N_max = int(math.floor((math.sqrt(1 + 4 * lambda_max * lambda_max) - 1) / 2 + 1e-12))
        return sphere_eigendata(N_max, config.quadrature_nodes)
    return build_eigendata(geometry, lambda_max, workers)


def _q_function(config: RunConfig, zeta):
    """Q along the geodesic through zeta, as a QFunctionSpec or a callable."""
    data = poincare_data(zeta)
    if isinstance(data, NotPeriodic):
        logger.info(f"evaluation point is not periodic ({data.reason}); Q = 0")
        return lambda lam: np.zeros_like(np.asarray(lam, dtype=float))
    if data.lattice_vector is not None and zeta.geometry.name == "torus":
        terms = config.summation_N or 200
        return lambda lam: flat_torus_q(data.lattice_vector, zeta.tau, lam, zeta.geometry.m,
                                        terms, "normalized")
    if data.S is None:
        return elliptic_qspec(classify_continuity(None, data.T).s0, data.T, _summation(config))
    return _with_summation(qspec_from_map(data.S, data.T), config)


def _with_summation(spec: QFunctionSpec, config: RunConfig) -> QFunctionSpec:
    # decaying sequences keep their own truncation
    if spec.continuous:
        return spec
    return dataclasses.replace(spec, summation=_summation(config))


def _sweep(lo: int, hi: int, count: int) -> List[int]:
    return sorted({int(round(v)) for v in np.linspace(lo, hi, count)})


def _fit_summary(prefix: str, fit) -> Dict[str, Any]:
    return {
        f"{prefix}_exponent": fit.exponent,
        f"{prefix}_amplitude": fit.amplitude,
        f"{prefix}_residual": fit.residual,
        f"{prefix}_window": fit.window,
    }


# Commands

def run_classify(config: RunConfig, workers: int) -> CommandResult:
    S = create_symplectic_map(load_matrix(config.matrix_file))
    tag = classify(S)
    values = power_sequence(S, 5)
    rows = [(n, v.value.real, v.value.imag, abs(v.value)) for n, v in enumerate(values, start=1)]
    summary = {"matrix_file": config.matrix_file, "d": S.d, "tag": tag_name(tag)}
    for n, v in enumerate(values, start=1):
        summary[f"G_{n}"] = v.value
    return CommandResult(["n", "re", "im", "abs"], rows, summary)


def run_qfunc(config: RunConfig, workers: int) -> CommandResult:
    S = create_symplectic_map(load_matrix(config.matrix_file))
    T = config.period_T
    lambda_max = config.effective_lambda_max
    spec = _with_summation(qspec_from_map(S, T), config)
    grid = np.linspace(0.0, lambda_max, config.grid_size(DEFAULT_GRID))
    values = np.asarray(q_eval(spec, grid), dtype=float)
    report = classify_continuity(S, T)
    jumps = jump_points(report, 0.0, lambda_max)
    summary = {
        "tag": tag_name(classify(S)),
        "period_T": T,
        "continuity": report.kind,
        "summation": type(spec.summation).__name__,
        "summation_N": spec.summation.N,
    }
    if report.kind == "JumpsAt":
        summary.update({
            "s0": report.s0,
            "s0_determinant": report.s0_determinant,
            "jump_height": report.jump_height,
            "jump_offset": report.jump_points.offset,
            "jump_gap": report.jump_points.gap,
            "jumps_in_range": len(jumps),
        })
    return CommandResult(["lambda", "Q"], list(zip(grid, values)), summary)


def run_weyl_sum(config: RunConfig, workers: int) -> CommandResult:
    geometry = _geometry(config)
    tau = config.tau
    data = _eigendata(config, geometry, config.effective_lambda_max, workers)
    zeta = _evaluation_point(config, geometry)
    lambda_max = min(config.effective_lambda_max, data.cutoff)
    n = config.grid_size(DEFAULT_GRID)
    grid = np.linspace(lambda_max / n, lambda_max, n)
    P = tempered_series(data, zeta, tau, grid, record_jumps=False).values

    summary: Dict[str, Any] = {"geometry": geometry.label, "tau": tau, "eigenvalues": len(data.lambdas)}
    if geometry.name == "circle":
        model = circle_closed_form(grid, tau)
        summary["model"] = "closed-form"
    else:
        q = _q_function(config, zeta)
        fit = two_term_residual(data, zeta, tau, q, grid)
        Q = np.asarray(q_eval(q, grid) if isinstance(q, QFunctionSpec) else q(grid), dtype=float)
        power = (geometry.m + 1) / 2
        model = fit.amplitude * grid ** power * (1 + Q / grid)
        summary.update({
            "model": "two-term",
            "leading_constant": fit.amplitude,
            "fitted_q_scale": fit.details["fitted_q_scale"],
            "residual_bound": fit.residual,
            "fit_window": fit.window,
        })
    half = n // 2 if n >= 8 else 0
    growth = fit_power_law(grid[half:], P[half:])
    summary.update(_fit_summary("growth", growth))
    residual = P - model
    summary["max_abs_residual"] = float(np.max(np.abs(residual)))
    rows = list(zip(grid, P, model, residual))
    return CommandResult(["lambda", "P_tau", "model", "residual"], rows, summary)


def _lattice_vector(config: RunConfig, geometry) -> np.ndarray:
    if config.lattice_vector is not None:
        v = np.asarray(config.lattice_vector, dtype=int)
        if len(v) != geometry.m:
            raise ConfigError(f"lattice_vector needs {geometry.m} components",
                              config.lines.get("lattice_vector"))
        return v
    v = np.zeros(geometry.m, dtype=int)
    v[0] = 1
    return v


def _lattice_degrees(config: RunConfig, v: np.ndarray) -> List[int]:
    top = int(math.floor(config.effective_lambda_max / float(np.linalg.norm(v))))
    if top < 1:
        raise ConfigError("lambda_max is below the first lattice multiple", config.lines.get("lambda_max"))
    return _sweep(max(1, top // 5), top, config.grid_size(DEFAULT_SWEEP))


def _sphere_degrees(config: RunConfig) -> List[int]:
    if config.N_max is not None:
        top = config.N_max
    else:
        lam = config.effective_lambda_max
        top = int(math.floor((math.sqrt(1 + 4 * lam * lam) - 1) / 2 + 1e-12))
    if top < 1:
        raise ConfigError("the sweep needs degree N >= 1", config.lines.get("lambda_max"))
    return _sweep(max(1, top // 5), top, config.grid_size(DEFAULT_SWEEP))


def run_husimi(config: RunConfig, workers: int) -> CommandResult:
    geometry = _geometry(config)
    tau = config.tau
    if geometry.name == "sphere":
        harmonics = [SphereHarmonic(config.harmonic, N) for N in _sphere_degrees(config)]
    else:
        v = _lattice_vector(config, geometry)
        harmonics = [LatticeHarmonic(geometry, tuple(int(c) for c in K * v))
                     for K in _lattice_degrees(config, v)]
    sups = [husimi_sup(h, tau, nodes=config.quadrature_nodes) for h in harmonics]
    lams = np.array([h.lam for h in harmonics])

    rows = [(h.lam, s.value, s.amplitude, s.log_peak, s.argmax.direction)
            for h, s in zip(harmonics, sups)]
    summary: Dict[str, Any] = {"geometry": geometry.label, "tau": tau}
    if geometry.name == "sphere":
        summary["harmonic"] = config.harmonic
        summary["fit_on"] = "amplitude"
        fit = fit_power_law(lams, [s.amplitude for s in sups])
    else:
        summary["fit_on"] = "value"
        fit = fit_power_law(lams, [s.value for s in sups])
    summary["expected_exponent"] = (geometry.m - 1) / 2 if geometry.name != "sphere" else 0.5
    summary.update(_fit_summary("husimi", fit))
    return CommandResult(["lambda", "sup", "amplitude", "log_peak", "argmax_direction"], rows, summary)


def run_l2norm(config: RunConfig, workers: int) -> CommandResult:
    geometry = _geometry(config)
    tau = config.tau
    nodes = config.quadrature_nodes
    summary: Dict[str, Any] = {"geometry": geometry.label, "tau": tau}
    if geometry.name == "sphere":
        rows = []
        for N in _sphere_degrees(config):
            harmonic = SphereHarmonic(config.harmonic, N)
            norm2 = l2_norm_boundary(harmonic, tau, nodes)
            rows.append((harmonic.lam, norm2, math.log(norm2) - 2 * harmonic.lam * tau))
        summary["harmonic"] = config.harmonic
        return CommandResult(["lambda", "norm2", "log_norm2_minus_2tau_lambda"], rows, summary)

    m = geometry.m
    v = _lattice_vector(config, geometry)
    rows = []
    for K in _lattice_degrees(config, v):
        k = K * v
        lam = float(np.linalg.norm(k))
        norm2 = l2_norm_boundary(LatticeHarmonic(geometry, tuple(int(c) for c in k)), tau, nodes)
        oracle = l2_norm_oracle_torus(k, tau, m)
        scaled = norm2 * math.exp(-2 * tau * lam) * lam ** ((m - 1) / 2)
        rows.append((lam, norm2, oracle, norm2 / oracle, scaled))
    ratios = np.array([row[3] for row in rows])
    summary.update({
        "max_oracle_deviation": float(np.max(np.abs(ratios - 1))),
        "scaled_drift": abs(rows[-1][4] / rows[-2][4] - 1) if len(rows) > 1 else 0.0,
        "scaled_window": (rows[0][0], rows[-1][0]),
    })
    return CommandResult(["lambda", "norm2", "oracle", "ratio", "scaled"], rows, summary)


def run_smooth(config: RunConfig, workers: int) -> CommandResult:
    geometry = _geometry(config)
    tau = config.tau
    kernel = build_smoothing_kernel(config.kernel_p, config.kernel_radius)
    lambda_max = config.effective_lambda_max
    data = _eigendata(config, geometry, lambda_max + kernel.effective_width + 1, workers)
    zeta = _evaluation_point(config, geometry)
    n = config.grid_size(DEFAULT_GRID // 5)
    grid = np.linspace(lambda_max / 10, lambda_max, n)
    values = smoothed_series(data, zeta, tau, kernel, grid, workers)
    window = min(WINDOW_WIDTH, lambda_max / 10)
    averages = np.array([window_increment(data, zeta, tau, lam, window) for lam in grid])

    fit = fit_power_law(grid, values)
    summary: Dict[str, Any] = {
        "geometry": geometry.label,
        "tau": tau,
        "kernel_p": kernel.p,
        "kernel_radius": kernel.support_radius,
        "kernel_width": kernel.effective_width,
        "window_width": window,
        "expected_exponent": (geometry.m - 1) / 2,
    }
    summary.update(_fit_summary("density", fit))
    return CommandResult(["lambda", "smoothed", "window_average"], list(zip(grid, values, averages)), summary)


def run_extract(config: RunConfig, workers: int) -> CommandResult:
    geometry = _geometry(config)
    tau = config.tau
    lam = config.lambda_
    kernel = build_smoothing_kernel(config.kernel_p, config.kernel_radius)
    data = _eigendata(config, geometry, lam + kernel.effective_width + 1, workers)
    zeta = _evaluation_point(config, geometry)
    calibration = None
    summary: Dict[str, Any] = {"geometry": geometry.label, "tau": tau, "lambda": lam}
    if geometry.name == "circle":
        calibration = calibrate_period_constant(kernel, lam=100.0, tau=tau)
        summary["calibration_constant"] = calibration
        summary["calibration_window"] = (100.0 - kernel.effective_width, 100.0 + kernel.effective_width)
    else:
        summary["normalization"] = "smoothed-density"

    orders = [config.period_n] if config.period_n else list(range(1, config.n_terms + 1))
    rows = []
    for n in orders:
        estimate = period_coefficient_extract(data, zeta, tau, n, lam, kernel, T=config.period_T,
                                              calibration=calibration)
        rows.append((n, estimate.real, estimate.imag, abs(estimate)))
        summary[f"G_{n}"] = estimate
    return CommandResult(["n", "re", "im", "abs"], rows, summary)


def run_beam(config: RunConfig, workers: int) -> CommandResult:
    profile = load_curvature(config)
    spec = build_beam(profile, profile.L, config.beam_k, config.steps)
    report = riccati_report(spec.jacobi, spec.gamma)
    s = np.linspace(0.0, profile.L, config.grid_size(DEFAULT_BEAM_SAMPLES), endpoint=False)
    values = [beam_eval(spec, float(si), 0.0) for si in s]
    rows = [(si, v.real, v.imag, abs(v)) for si, v in zip(s, values)]

    factor = floquet_factor(spec)
    summary: Dict[str, Any] = {
        "curvature": profile.name,
        "L": profile.L,
        "k": spec.k,
        "r_kq": spec.r_kq,
        "alphas": spec.alphas,
        "c0": spec.c0,
        "steps": spec.jacobi.steps,
        "wronskian_drift": spec.jacobi.wronskian_drift,
        "floquet_factor": factor,
    }
    summary.update({f"riccati_{key}": value for key, value in report.to_dict().items()})
    if profile.analytic:
        tau = _tau(config)
        summary["tau"] = tau
        summary["complexified_modulus"] = abs(beam_complexify(spec, 0.0, -tau, tau=tau))
    else:
        summary["complexified_modulus"] = "n/a (tabulated curvature)"
    return CommandResult(["s", "re", "im", "abs"], rows, summary)


# Acceptance suite

def _check_circle(report: VerificationReport, tau: float) -> None:
    data = circle_eigendata(200)
    p = tube_point(data.geometry, [0.0], [-1.0], tau)
    for lam in (10.5, 25.3, 100.7):
        report.add(f"circle_closed_form[{lam}]", float(circle_closed_form(lam, tau)),
                   tempered_sum(data, p, tau, lam), 1e-6, "closed-form")


def _check_matrix_elements(report: VerificationReport) -> None:
    rng = np.random.default_rng(VERIFY_SEED)
    worst_keyid, worst_magnitude = 0.0, 0.0
    for _ in range(100):
        S = random_symplectic(int(rng.integers(1, 4)), rng)
        blockdet = matrix_element_blockdet(S).value
        worst_keyid = max(worst_keyid, abs(blockdet - matrix_element_keyid(S).value))
        worst_magnitude = max(worst_magnitude, abs(abs(blockdet) - matrix_element_magnitude(S)))
    report.add("matrix_element_blockdet_vs_keyid", 0.0, worst_keyid, 1e-10, "cross-formula")
    report.add("matrix_element_blockdet_vs_magnitude", 0.0, worst_magnitude, 1e-10, "cross-formula")
    S = hyperbolic([0.4, 0.9])
    expected = closed_form_sequence(classify(S), 10)
    worst = max(abs(got.value - want) for got, want in zip(power_sequence(S, 10), expected))
    report.add("hyperbolic_cosh_form", 0.0, worst, 1e-10, "closed-form")


def _check_elliptic_q(report: VerificationReport) -> None:
    s0, T = 0.5, TWO_PI
    spec = elliptic_qspec(s0, T, Abel(N=10_000))
    continuity = classify_continuity(rotation(2 * s0), T)
    candidates = np.linspace(0.0, 3.0, 400)
    nu = jump_points(continuity, -1.0, 4.0)
    # sample away from the Abel-smoothed jumps
    far = candidates[np.min(np.abs(candidates[:, None] - nu[None, :]), axis=1) >= 0.1][:200]
    q = np.asarray(q_eval(spec, far), dtype=float)
    report.add("elliptic_q_sawtooth", 0.0, float(np.max(np.abs(q - closed_form_elliptic(s0, T, far)))),
               1e-3, "closed-form")
    report.add("elliptic_q_constant", -1 / (2 * T), fit_closed_form_constant(q, s0, T, far),
               1e-3 / (2 * T), "closed-form")
    detected = np.array(detect_jumps(spec, 0.0, 3.0))
    expected = jump_points(continuity, 0.0, 3.0)
    if len(detected) == len(expected):
        distance = float(np.max(np.abs(detected - expected))) if len(expected) else 0.0
        report.add("elliptic_jump_locations", 0.0, distance, 1e-3, "closed-form")
        # s0 + nu T against pi + 2 pi Z
        phase = float(np.max(np.abs(np.angle(-np.exp(1j * (s0 + detected * T)))))) if len(detected) else 0.0
        report.add("elliptic_jump_phase", 0.0, phase, 1e-3 * T, "closed-form")
    else:
        report.add("elliptic_jump_count", len(expected), len(detected), 0.0, "closed-form")


def _check_torus(report: VerificationReport, tau: float, workers: int) -> None:
    torus = create_geometry("torus", 2)
    direction = np.array([1.0, math.sqrt(2.0)]) / math.sqrt(3.0)
    data = torus_eigendata(2, 400, workers)
    p = tube_point(torus, [0.0, 0.0], direction, tau)
    grid = np.linspace(100.0, 400.0, 41)
    series = tempered_series(data, p, tau, grid, record_jumps=False)
    report.add("torus_growth_exponent", 1.5, fit_power_law(grid, series.values).exponent, 0.03,
               "asymptotic")

    worst = 0.0
    for K in (10, 50, 200):
        ratio = l2_norm_boundary(LatticeHarmonic(torus, (K, 0)), tau) / l2_norm_oracle_torus((K, 0), tau, 2)
        worst = max(worst, abs(ratio - 1))
    report.add("torus_l2_vs_bessel_oracle", 0.0, worst, 1e-10, "cross-formula")

    def scaled(K):
        return l2_norm_boundary(LatticeHarmonic(torus, (K, 0)), tau) * math.exp(-2 * tau * K) * K ** 0.5

    report.add("torus_l2_asymptotic_drift", 0.0, abs(scaled(200) / scaled(100) - 1), 0.05, "asymptotic")

    ks = np.arange(20, 201, 20)
    values = [husimi_sup(LatticeHarmonic(torus, (int(K), 0)), tau).value for K in ks]
    report.add("torus_husimi_exponent", 0.5, fit_power_law(ks, values).exponent, 0.05, "asymptotic")
    sup = husimi_sup(LatticeHarmonic(torus, (30, 40)), tau)
    report.add("torus_husimi_argmax", 0.0, float(np.linalg.norm(sup.argmax.direction - [-0.6, -0.8])),
               0.2 / math.sqrt(50.0), "closed-form")


def _check_sphere(report: VerificationReport, tau: float) -> None:
    degrees = np.arange(20, 101, 10)
    lams = np.sqrt(degrees * (degrees + 1.0))
    highest = [husimi_sup(SphereHarmonic("highest-weight", int(N)), tau) for N in degrees]
    zonal = [husimi_sup(SphereHarmonic("zonal", int(N)), tau) for N in degrees]
    fit_highest = fit_power_law(lams, [s.amplitude for s in highest])
    fit_zonal = fit_power_law(lams, [s.amplitude for s in zonal])
    report.add("sphere_highest_weight_exponent", 0.5, fit_highest.exponent, 0.05, "asymptotic")
    gap = fit_highest.exponent - fit_zonal.exponent
    report.add("sphere_extremal_gap", 0.2, gap, 0.0, "asymptotic", passed=gap >= 0.2)

    argmax = husimi_sup(SphereHarmonic("highest-weight", 30), tau).argmax
    report.add("sphere_argmax_on_lifted_equator", 0.0, abs(float(argmax.x[2])), 1e-6, "closed-form")

    def ratio(N):
        sup = highest[list(degrees).index(N)]
        return math.exp(sup.log_peak / 2) / (N ** 0.25 * math.exp(N * tau))

    report.add("sphere_peak_growth_drift", 0.0, abs(ratio(100) / ratio(50) - 1), 0.05, "asymptotic")


def _check_periods(report: VerificationReport, tau: float, workers: int) -> None:
    kernel = build_smoothing_kernel(6, 2.0)
    constant = calibrate_period_constant(kernel, lam=100.0, tau=tau)
    data = circle_eigendata(400)
    p = tube_point(data.geometry, [0.0], [-1.0], tau)
    for n in (1, 2):
        estimate = period_coefficient_extract(data, p, tau, n, 200.0, kernel, calibration=constant)
        report.add(f"circle_period_coefficient[{n}]", 1.0, abs(estimate), 0.05, "closed-form")

    torus = create_geometry("torus", 2)
    direction = np.array([1.0, math.sqrt(2.0)]) / math.sqrt(3.0)
    torus_data = torus_eigendata(2, 200 + kernel.effective_width + 1, workers)
    q = tube_point(torus, [0.0, 0.0], direction, tau)
    estimate = period_coefficient_extract(torus_data, q, tau, 1, 200.0, kernel, T=TWO_PI)
    report.add("torus_nonperiodic_coefficient", 0.0, abs(estimate), 0.05, "asymptotic")


def _check_beams(report: VerificationReport, tau: float) -> None:
    stable = curvature_preset("perturbed-sphere", 0.1, 2, base=1.3)
    Y0, V0 = oscillator_frame(1)
    sol = integrate_jacobi(stable, stable.L, Y0, V0, steps=10_000)
    report.add("jacobi_wronskian_drift", 0.0, sol.wronskian_drift, 1e-8, "cross-formula")

    sphere = curvature_preset("sphere")
    spec = build_beam(sphere, TWO_PI, 50, steps=4000)
    riccati = riccati_report(spec.jacobi, spec.gamma)
    report.add("riccati_identity", 0.0, riccati.identity_error, 1e-8, "cross-formula")
    report.add("sphere_gamma_is_i", 0.0, float(np.max(np.abs(spec.gamma - 1j))), 1e-8, "closed-form")

    e50, e100 = sphere_beam_error(50), sphere_beam_error(100)
    report.add("sphere_beam_error", 0.0, e50, 0.1, "closed-form")
    report.add("sphere_beam_error_decay", 0.6, e100 / e50, 0.0, "asymptotic",
               passed=e100 / e50 <= 0.6)

    ratios = []
    for N in (50, 100):
        beam = build_beam(sphere, TWO_PI, N)
        exact = math.exp(N * tau) / math.sqrt(highest_weight_norm2(N))
        ratios.append(abs(beam_complexify(beam, 0.0, -tau, tau=tau)) / exact)
    report.add("complexified_beam_vs_highest_weight", 1.0, ratios[0], 0.05, "closed-form")
    report.add("complexified_beam_growth_drift", 0.0, abs(ratios[1] / ratios[0] - 1), 0.05,
               "asymptotic")


def _check_jumps(report: VerificationReport, tau: float) -> None:
    torus = create_geometry("torus", 2)
    cases = [
        (circle_eigendata(400), tube_point(create_geometry("circle"), [0.0], [-1.0], tau), (5.0, 12.0)),
        (torus_eigendata(2, 30), tube_point(torus, [0.2, 0.4], [1 / math.sqrt(3), math.sqrt(2 / 3)], tau),
         (5.0, 12.0)),
        (sphere_eigendata(300), sphere_tube_point(math.pi / 2, 0.0, math.pi, tau), (5.0, 50.0)),
    ]
    for data, p, (lo, hi) in cases:
        series = tempered_series(data, p, tau, np.linspace(lo, hi, 8))
        worst = max(abs(jump - jump_at(data, p, tau, lam_j)) for lam_j, jump in series.jump_records)
        report.add(f"jump_identity[{data.geometry.label}]", 0.0, worst, 0.0, "cross-formula")
        bound = universal_bound(data, p, tau)
        report.add(f"universal_bound[{data.geometry.label}]", 1.0, bound.worst_ratio, 0.0,
                   "asymptotic", passed=bound.holds)


def run_verify_all(config: RunConfig, workers: int) -> CommandResult:
    tau = _tau(config)
    report = VerificationReport()
    suite = [
        ("circle closed form", lambda: _check_circle(report, tau)),
        ("matrix elements", lambda: _check_matrix_elements(report)),
        ("elliptic Q", lambda: _check_elliptic_q(report)),
        ("torus", lambda: _check_torus(report, tau, workers)),
        ("sphere extremals", lambda: _check_sphere(report, tau)),
        ("period coefficients", lambda: _check_periods(report, tau, workers)),
        ("beams", lambda: _check_beams(report, tau)),
        ("jumps and bounds", lambda: _check_jumps(report, tau)),
    ]
    for name, check in suite:
        click.echo(f"🔎 {name}...")
        check()
    rows = [(c.name, c.expected, c.observed, c.tolerance, "pass" if c.passed else "FAIL", c.provenance)
            for c in report.checks]
    summary = {"tau": tau, "checks": len(report.checks), "failures": len(report.failures)}
    return CommandResult(["name", "expected", "observed", "tolerance", "passed", "provenance"],
                         rows, summary, report)


RUNNERS: Dict[str, Callable[[RunConfig, int], CommandResult]] = {
    "classify": run_classify,
    "qfunc": run_qfunc,
    "weyl-sum": run_weyl_sum,
    "husimi": run_husimi,
    "l2norm": run_l2norm,
    "smooth": run_smooth,
    "extract": run_extract,
    "beam": run_beam,
    "verify-all": run_verify_all,
}


def run(config: RunConfig) -> int:
    """
    Run a validated configuration and write its artifacts.

    Writes <command>.csv and <command>_summary.txt under the output
    directory, plus verification_report.txt for verify-all.

    Returns:
        0 on success, 2 when a verification check fails
    """
    workers = resolve_worker_count(config.workers)
    output_dir = Path(config.output_dir or os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))
    start = time.time()
    result = RUNNERS[config.command](config, workers)
    elapsed = time.time() - start

    table = write_table(output_dir / f"{config.command}.csv", result.header, result.rows)
    summary = dict(result.summary)
    summary["workers"] = workers
    summary["wall_time_s"] = round(elapsed, 3)
    summary_path = write_summary(output_dir / f"{config.command}_summary.txt", summary)

    for key, value in result.summary.items():
        click.echo(f"   {key}: {value}")
    click.echo(f"📄 Table: {table}")
    click.echo(f"📝 Summary: {summary_path}")
    click.echo(f"⏱️  Wall time: {elapsed:.2f}s with {workers} workers")

    if result.report is not None:
        report_path = write_report(output_dir / "verification_report.txt", result.report)
        click.echo(f"📋 Report: {report_path}")
        if not result.report.passed:
            for check in result.report.failures:
                click.echo(click.style(f"   ✗ {check.name}: expected {check.expected!r}, "
                                       f"observed {check.observed!r}", fg="red"), err=True)
            click.echo(click.style(f"❌ {len(result.report.failures)} of {len(result.report.checks)} "
                                   f"checks failed", fg="red"), err=True)
            return 2
    click.echo(click.style(f"✅ {config.command} completed successfully!", fg="green"))
    return 0


# Click surface

def _option_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def config_options(fn):
    """Attach --config plus one option per run-file key (except command)."""
    for key in reversed(list(KEY_TYPES)):
        if key == "command":
            continue
        kind = KEY_TYPES[key]
        dest = "lambda_" if key == "lambda" else key
        option_type = kind if kind in (int, float) else str
        fn = click.option(_option_name(key), dest, type=option_type, default=None,
                          help=f"Overrides '{key}' from the run file.")(fn)
    return click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                        default=None, help="key=value run file.")(fn)


def build_config(command: str, config_file: Optional[str], options: Dict[str, Any]) -> RunConfig:
    """Run file first, then flags; validated for `command`."""
    config = load_config(config_file, validate=False) if config_file else RunConfig()
    for dest, value in options.items():
        if value is None:
            continue
        key = "lambda" if dest == "lambda_" else dest
        kind = KEY_TYPES[key]
        if kind not in (int, float, str):
            try:
                value = kind(value)
            except ValueError:
                raise ConfigError(f"invalid value '{value}' for {_option_name(key)}")
        config.set(key, value)
    config.command = command
    return config.validate()


def execute(command: str, config_file: Optional[str], options: Dict[str, Any]) -> None:
    """Build the config, run it and exit with the run's code."""
    try:
        config = build_config(command, config_file, options)
        click.echo(f"🧮 Running {click.style(command, fg='cyan', bold=True)}...")
        code = run(config)
    except ConfigError as e:
        click.echo(click.style(f"❌ Configuration Error: {e}", fg="red"), err=True)
        sys.exit(1)
    except LIBRARY_ERRORS as e:
        click.echo(click.style(f"❌ Error: {e}", fg="red"), err=True)
        sys.exit(1)
    except KeyboardInterrupt:
        click.echo(click.style("\n🛑 Run cancelled by user", fg="yellow"), err=True)
        sys.exit(1)
    if code:
        sys.exit(code)


@click.group(invoke_without_command=True)
@click.option(
    "--version",
    is_flag=True,
    help="Show version information and exit."
)
@click.option(
    "--verbose", "-v",
    is_flag=True,
    help="Enable debug logging."
)
@click.pass_context
def main(ctx: click.Context, version: bool, verbose: bool) -> None:
    """
    Grauert Tube Weyl Law - tempered Weyl sums on model geometries.

    Every command accepts --config FILE plus flags mirroring the run-file
    keys; flags override the file and GW_WORKERS overrides the worker count.

      python3 cli.py weyl-sum --geometry circle --tau 0.5 --lambda-max 100
    """
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if version:
        click.echo(f"Grauert Tube Weyl Law v{VERSION}")
        click.echo("Built with Click, NumPy and SciPy")
        ctx.exit()

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command("run")
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
def run_file(config_file: str) -> None:
    """Run the command named in a run file."""
    try:
        command = load_config(config_file, validate=False).command
    except ConfigError as e:
        click.echo(click.style(f"❌ Configuration Error: {e}", fg="red"), err=True)
        sys.exit(1)
    execute(command, config_file, {})


def _register(command: str, doc: str) -> None:
    def callback(config_file, **options):
        execute(command, config_file, options)

    callback.__doc__ = doc
    main.command(command)(config_options(callback))


_register("classify", "Classify a symplectic matrix and print G_1..G_5.")
_register("qfunc", "Evaluate Q(lambda) for a Poincare map over [0, lambda_max].")
_register("weyl-sum", "Tempered Weyl sum P^tau on a lambda grid against its model.")
_register("husimi", "Husimi suprema over a degree sweep with the fitted exponent.")
_register("l2norm", "Boundary L^2 norms over a degree sweep.")
_register("smooth", "Smoothed tempered density and indicator-window averages.")
_register("extract", "Period coefficients G_n from the spectral side.")
_register("beam", "Gaussian beam along a closed geodesic.")
_register("verify-all", "Run the acceptance suite and write verification_report.txt.")


if __name__ == "__main__":
    main()
