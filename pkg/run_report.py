"""
Run Configuration and Reports Module

Parses flat key=value run files into a validated RunConfig, and writes the
artifacts of a run: CSV tables, key: value summaries and the verification
report. All writers format floats with repr() so identical inputs give
byte-identical files.
"""

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

COMMANDS = ("classify", "qfunc", "weyl-sum", "husimi", "l2norm", "smooth", "extract", "beam", "verify-all")
GEOMETRIES = ("circle", "torus", "sphere")
PROVENANCES = ("closed-form", "asymptotic", "cross-formula")
# 2 tau lambda_max above this overflows e^{2 tau lambda} in double precision
MAX_EXPONENT = 700.0
DEFAULT_TAU_CAP = 2.0
DEFAULT_TAU = 0.5


class ConfigError(Exception):
    """Custom exception for run configuration errors, carrying the offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.replace(",", " ").split())


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.replace(",", " ").split())


KEY_TYPES = {
    "command": str,
    "geometry": str,
    "m": int,
    "tau": float,
    "tau_cap": float,
    "lambda_max": float,
    "N_max": int,
    "base_point": _float_list,
    "direction": _float_list,
    "lattice_vector": _int_list,
    "kernel_p": int,
    "kernel_radius": float,
    "summation": str,
    "summation_N": int,
    "quadrature_nodes": int,
    "grid_points": int,
    "workers": int,
    "output_dir": str,
    "matrix_file": str,
    "period_T": float,
    "n_terms": int,
    "period_n": int,
    "lambda": float,
    "curvature": str,
    "epsilon": float,
    "curvature_base": float,
    "mode": int,
    "beam_k": int,
    "steps": int,
    "harmonic": str,
}

# Attribute names differ from keys only where the key is a Python keyword
ATTRIBUTES = {"lambda": "lambda_"}

REQUIRED = {
    "classify": ("matrix_file",),
    "qfunc": ("matrix_file", "period_T", "lambda_max"),
    "weyl-sum": ("geometry", "tau", "lambda_max"),
    "husimi": ("geometry", "tau", "lambda_max"),
    "l2norm": ("geometry", "tau", "lambda_max"),
    "smooth": ("geometry", "tau", "lambda_max"),
    "extract": ("geometry", "tau", "lambda"),
    "beam": ("curvature", "beam_k"),
    "verify-all": (),
}


@dataclass
class RunConfig:
    """
    Validated run configuration. `lines` maps each key read from a file to
    its line number so later validation can point at the source.
    """
    command: str = "verify-all"
    geometry: Optional[str] = None
    m: Optional[int] = None
    tau: Optional[float] = None
    tau_cap: float = DEFAULT_TAU_CAP
    lambda_max: Optional[float] = None
    N_max: Optional[int] = None
    base_point: Optional[Tuple[float, ...]] = None
    direction: Optional[Tuple[float, ...]] = None
    lattice_vector: Optional[Tuple[int, ...]] = None
    kernel_p: int = 6
    kernel_radius: float = 2.0
    summation: str = "abel"
    summation_N: Optional[int] = None
    quadrature_nodes: Optional[int] = None
    grid_points: Optional[int] = None
    workers: Optional[int] = None
    output_dir: Optional[str] = None
    matrix_file: Optional[str] = None
    period_T: Optional[float] = None
    n_terms: int = 2
    period_n: Optional[int] = None
    lambda_: Optional[float] = None
    curvature: Optional[str] = None
    epsilon: float = 0.1
    curvature_base: float = 1.0
    mode: int = 1
    beam_k: Optional[int] = None
    steps: int = 10_000
    harmonic: str = "highest-weight"
    lines: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("lines")
        return data

    def set(self, key: str, value: Any, line: Optional[int] = None) -> None:
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown key '{key}'", line)
        setattr(self, ATTRIBUTES.get(key, key), value)
        if line is not None:
            self.lines[key] = line

    def get(self, key: str) -> Any:
        return getattr(self, ATTRIBUTES.get(key, key))

    def _fail(self, message: str, key: str) -> None:
        raise ConfigError(message, self.lines.get(key))

    @property
    def effective_lambda_max(self) -> Optional[float]:
        """lambda_max, or lambda_{N_max} = sqrt(N(N+1)) when only N_max is set."""
        if self.lambda_max is not None:
            return self.lambda_max
        if self.N_max is not None:
            return math.sqrt(self.N_max * (self.N_max + 1))
        return None

    def grid_size(self, default: int) -> int:
        """grid_points when set, else the command's own default."""
        return self.grid_points if self.grid_points is not None else default

    def validate(self) -> 'RunConfig':
        """
        Check required keys and numeric ranges for the configured command.

        Raises:
            ConfigError: Naming the violated condition and its line
        """
        if self.command not in COMMANDS:
            self._fail(f"unknown command '{self.command}' (expected one of {', '.join(COMMANDS)})", "command")
        for key in REQUIRED[self.command]:
            if key == "lambda_max" and self.effective_lambda_max is not None:
                continue
            if self.get(key) is None:
                self._fail(f"missing required key '{key}' for command {self.command}", "command")

        if self.geometry is not None:
            if self.geometry not in GEOMETRIES:
                self._fail(f"unknown geometry '{self.geometry}'", "geometry")
            if self.geometry == "torus" and self.m is None:
                self._fail("missing required key 'm' for geometry torus", "geometry")
            if self.m is not None and self.m < 1:
                self._fail(f"m must be >= 1, got {self.m}", "m")

        if not self.tau_cap > 0:
            self._fail(f"tau_cap must be positive, got {self.tau_cap}", "tau_cap")
        if self.tau is not None and not 0 < self.tau <= self.tau_cap:
            self._fail(f"tau must lie in (0, tau_cap = {self.tau_cap}], got {self.tau}", "tau")
        lam = self.effective_lambda_max
        if lam is not None and self.tau is not None:
            if 2 * self.tau * lam > MAX_EXPONENT:
                self._fail(f"2 tau lambda_max = {2 * self.tau * lam:g} exceeds {MAX_EXPONENT:g}", "tau")

        positive = ("kernel_p", "grid_points", "n_terms", "steps", "summation_N", "quadrature_nodes",
                    "workers", "period_n", "N_max")
        for key in positive:
            value = self.get(key)
            if value is not None and value < 1:
                self._fail(f"{key} must be >= 1, got {value}", key)
        if lam is not None and lam <= 0:
            self._fail(f"lambda_max must be positive, got {lam}", "lambda_max")
        for key in ("kernel_radius", "period_T", "lambda"):
            value = self.get(key)
            if value is not None and not value > 0:
                self._fail(f"{key} must be positive, got {value}", key)
        if self.summation not in ("abel", "cesaro", "truncate"):
            self._fail(f"unknown summation '{self.summation}'", "summation")
        if self.harmonic not in ("highest-weight", "zonal"):
            self._fail(f"unknown harmonic '{self.harmonic}'", "harmonic")
        sweeps = ("weyl-sum", "husimi", "l2norm", "smooth")
        if self.grid_points is not None and self.grid_points < 4 and self.command in sweeps:
            self._fail("grid_points must be at least 4 for a fitted sweep", "grid_points")
        return self


def parse_config(text: str, validate: bool = True) -> RunConfig:
    """
    Parse a flat key=value run file.

    Args:
        text: File contents; '#' starts a comment, blank lines are skipped
        validate: Run RunConfig.validate on the result

    Returns:
        RunConfig

    Raises:
        ConfigError: For malformed lines, unknown or repeated keys, bad values
    """
    config = RunConfig()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got '{line}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown key '{key}'", number)
        if key in config.lines:
            raise ConfigError(f"key '{key}' repeated (first on line {config.lines[key]})", number)
        try:
            parsed = KEY_TYPES[key](value)
        except ValueError:
            raise ConfigError(f"invalid value '{value}' for key '{key}'", number)
        config.set(key, parsed, number)
    return config.validate() if validate else config


def load_config(path: Union[str, Path], validate: bool = True) -> RunConfig:
    """parse_config on a file."""
    return parse_config(Path(path).read_text(), validate=validate)


@dataclass
class VerificationCheck:
    name: str
    expected: float
    observed: float
    tolerance: float
    passed: bool
    provenance: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    checks: List[VerificationCheck] = field(default_factory=list)

    def add(self, name: str, expected: float, observed: float, tolerance: float,
            provenance: str, passed: Optional[bool] = None) -> VerificationCheck:
        """
        Record a check. Without an explicit verdict the check passes when
        |observed - expected| <= tolerance.
        """
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance: {provenance}")
        if passed is None:
            passed = bool(abs(observed - expected) <= tolerance)
        check = VerificationCheck(name, float(expected), float(observed), float(tolerance),
                                  bool(passed), provenance)
        self.checks.append(check)
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"{name}: expected {expected!r}, observed {observed!r} "
                          f"({'pass' if check.passed else 'FAIL'})")
        return check

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[VerificationCheck]:
        return [check for check in self.checks if not check.passed]

    def to_text(self) -> str:
        lines = ["name,expected,observed,tolerance,passed,provenance"]
        for c in self.checks:
            lines.append(",".join([c.name, _fmt(c.expected), _fmt(c.observed), _fmt(c.tolerance),
                                   "pass" if c.passed else "FAIL", c.provenance]))
        lines.append(f"result: {'pass' if self.passed else 'FAIL'} "
                     f"({len(self.checks) - len(self.failures)}/{len(self.checks)})")
        return "\n".join(lines) + "\n"


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        value = complex(value)
        sign = "+" if value.imag >= 0 else "-"
        return f"{value.real!r}{sign}{abs(value.imag)!r}j"
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


def write_table(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with a header row and repr-formatted floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    logger.debug(f"wrote table {path}")
    return path


def write_summary(path: Union[str, Path], items: Dict[str, Any]) -> Path:
    """key: value lines in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{key}: {_fmt(value)}\n" for key, value in items.items()))
    return path


def write_report(path: Union[str, Path], report: VerificationReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_text())
    return path
