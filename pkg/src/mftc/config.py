"""INI experiment configs.

    [model]     kind = quadratic | kernel, n, lambda, T, then either the
                matrices Q Qbar S QT QbarT ST or kernel / kernel_params /
                terminal_kernel / terminal_params
    [ensemble]  points = row; row; ...   or   sampler = gaussian, N, mean, cov, seed
    [solver]    M, tol, max_iter, t
    [outputs]   dir, plots
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .functionals import CostFunctional, QuadraticModel, make_kernel, parse_matrix, parse_vector
from .measure_space import ParticleEnsemble

MATRIX_KEYS = ("Q", "Qbar", "S", "QT", "QbarT", "ST")
KERNEL_KEYS = ("kernel", "kernel_params", "terminal_kernel", "terminal_params")


class ConfigError(ValueError):
    """A config problem, tied to the ``section.key`` that caused it."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int
    lam: float
    T: float
    running: CostFunctional
    terminal: CostFunctional
    quadratic: QuadraticModel | None
    ensemble: ParticleEnsemble
    M: int = 400
    tol: float = 1e-10
    max_iter: int = 10_000
    t: float = 0.0
    out_dir: Path = Path("out")
    plots: bool = True


def _get(parser, section, key, conv=str, default=None, required=False):
    name = f"{section}.{key}"
    if not parser.has_section(section) or not parser.has_option(section, key):
        if required:
            raise ConfigError(name, "missing required key")
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(name, f"bad value {raw!r} ({exc})") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _params(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _build_model(p):
    sec = "model"
    if not p.has_section(sec):
        raise ConfigError(sec, "missing section")
    kind = _get(p, sec, "kind", required=True).strip()
    n = _get(p, sec, "n", int, required=True)
    if n < 1:
        raise ConfigError("model.n", "must be >= 1")
    lam = _get(p, sec, "lambda", float, required=True)
    T = _get(p, sec, "T", float, required=True)
    if lam <= 0:
        raise ConfigError("model.lambda", "must be > 0")
    present_m = [k for k in MATRIX_KEYS if p.has_option(sec, k)]
    present_k = [k for k in KERNEL_KEYS if p.has_option(sec, k)]

    if kind == "quadratic":
        if present_k:
            raise ConfigError(f"model.{present_k[0]}", "kernel key in a quadratic model")
        mats = {}
        for key in MATRIX_KEYS:
            text = _get(p, sec, key)
            try:
                mats[key] = parse_matrix(text, n, key) if text is not None else np.zeros((n, n))
            except ValueError as exc:
                raise ConfigError(f"model.{key}", str(exc)) from None
        try:
            model = QuadraticModel(lam=lam, T=T, **mats)
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None
        return kind, n, lam, T, model.running(), model.terminal(), model

    if kind == "kernel":
        if present_m:
            raise ConfigError(f"model.{present_m[0]}", "matrix key in a kernel model")
        costs = []
        for kkey, pkey, default in (("kernel", "kernel_params", None), ("terminal_kernel", "terminal_params", "zero")):
            name = _get(p, sec, kkey, default=default, required=default is None).strip()
            params = _get(p, sec, pkey, _params, default=())
            try:
                costs.append(make_kernel(name, n, params))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"model.{kkey}", str(exc)) from None
        return kind, n, lam, T, costs[0], costs[1], None

    raise ConfigError("model.kind", f"expected 'quadratic' or 'kernel', got {kind!r}")


def _build_ensemble(p, n: int) -> ParticleEnsemble:
    sec = "ensemble"
    if not p.has_section(sec):
        raise ConfigError(sec, "missing section")
    points = _get(p, sec, "points")
    sampler = _get(p, sec, "sampler")
    if (points is None) == (sampler is None):
        raise ConfigError("ensemble.points", "give exactly one of 'points' or 'sampler'")
    if points is not None:
        rows = [r for r in points.split(";") if r.strip()]
        try:
            pts = np.array([parse_vector(r, n, "ensemble.points") for r in rows])
        except ValueError as exc:
            raise ConfigError("ensemble.points", str(exc)) from None
        if pts.shape[0] == 0:
            raise ConfigError("ensemble.points", "no points given")
        return ParticleEnsemble(pts)
    if sampler.strip() != "gaussian":
        raise ConfigError("ensemble.sampler", f"only 'gaussian' is supported, got {sampler!r}")
    seed = _get(p, sec, "seed", int, required=True)
    N = _get(p, sec, "N", int, required=True)
    if N < 1:
        raise ConfigError("ensemble.N", "must be >= 1")
    mu = _get(p, sec, "mean", default="0 " * n)
    cov = _get(p, sec, "cov")
    try:
        mu = parse_vector(mu, n, "ensemble.mean")
    except ValueError as exc:
        raise ConfigError("ensemble.mean", str(exc)) from None
    try:
        C = parse_matrix(cov, n, "ensemble.cov") if cov is not None else np.eye(n)
    except ValueError as exc:
        raise ConfigError("ensemble.cov", str(exc)) from None
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(rng.multivariate_normal(mu, C, size=N, method="cholesky"))


def load_config(path) -> ExperimentConfig:
    p = configparser.ConfigParser()
    p.optionxform = str  # matrix names are case-sensitive
    try:
        read = p.read(path)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    if not read:
        raise ConfigError("file", f"cannot read {path}")
    kind, n, lam, T, running, terminal, quad = _build_model(p)
    X = _build_ensemble(p, n)
    M = _get(p, "solver", "M", int, default=400)
    tol = _get(p, "solver", "tol", float, default=1e-10)
    max_iter = _get(p, "solver", "max_iter", int, default=10_000)
    t = _get(p, "solver", "t", float, default=0.0)
    if M < 2:
        raise ConfigError("solver.M", "must be >= 2")
    if tol <= 0:
        raise ConfigError("solver.tol", "must be > 0")
    if max_iter < 1:
        raise ConfigError("solver.max_iter", "must be >= 1")
    if not 0 <= t < T:
        raise ConfigError("solver.t", f"need 0 <= t < T={T}")
    out_dir = Path(_get(p, "outputs", "dir", default="out"))
    plots = _get(p, "outputs", "plots", _bool, default=True)
    return ExperimentConfig(kind, n, lam, T, running, terminal, quad, X, M, tol, max_iter, t, out_dir, plots)
