"""Convergence studies on coupled noise, plus the checks behind the CLI.

A study draws one fine noise path per sample at ``(N_ref, n_ref)``,
runs the reference scheme on it, then runs every ladder level on
restrictions of the same path and records the sup-in-time L^2 error.
Sample ``s`` uses ``derive_seed(seed, s)``, so extending a study with
more samples leaves existing ones untouched.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .analysis import (
    ConvergenceReport,
    equal_energy_field,
    l2_norms,
    mean_and_stderr,
    smoothing_fit,
    sup_error,
    time_holder_fit,
)
from .noise import analytic_variance, derive_seed, mode_variance, sample_ou_path
from .nonlinearity import NonlinearitySpec
from .scheme import InitialProfile, SchemeConfig, linear_solution, run, run_reference
from .torus_spectral import make_lattice

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

AXES = ("spatial", "temporal")

# one factor mu_1^2 = (4 pi^2)^2 converts "unit |k|^4" time to torus time
NATURAL_TIME = 1.0 / (16.0 * math.pi**4)


class ConfigError(ValueError):
    """Invalid or incompatible study/scheme configuration."""


@dataclass(frozen=True)
class StudyConfig:
    axis: str = "temporal"
    levels: tuple = (8, 16, 32, 64)
    N: int = 16
    n: int = 256
    N_ref: int = 64
    n_ref: int = 512
    T: float = 1e-3
    sigma: float = 1.0
    u0: str = "smooth_bump"
    G: str = "sine(1)"
    drift_variant: str = "integrated"
    oversample: float = 2
    samples: int = 16
    seed: int = 1
    out: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        for name in ("N", "n", "N_ref", "n_ref", "samples", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "sigma", float(self.sigma))
        try:
            g = NonlinearitySpec.parse(self.G)
            u0 = InitialProfile.parse(self.u0)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "G", str(g))
        object.__setattr__(self, "u0", _profile_str(u0))
        self.validate()

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        lv = self.levels
        if len(lv) < 1 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError(f"level ladder must be strictly increasing, got {lv}")
        if lv[0] < 1:
            raise ConfigError("levels must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.T > 0 or self.sigma < 0:
            raise ConfigError("need T > 0 and sigma >= 0")
        if self.axis == "temporal":
            if self.N > self.N_ref:
                raise ConfigError(f"N={self.N} exceeds N_ref={self.N_ref}")
            for v in lv:
                if self.n_ref % v or v >= self.n_ref:
                    raise ConfigError(f"temporal level {v} must be a proper divisor of n_ref={self.n_ref}")
        else:
            for v in lv:
                if v >= self.N_ref:
                    raise ConfigError(f"spatial level {v} must be below N_ref={self.N_ref}")

    @property
    def reference_level(self) -> tuple[int, int]:
        """``(N, n)`` of the surrogate truth.

        Only the studied axis is refined; the other stays at the study's
        fixed value so that level errors isolate one discretisation.
        """
        if self.axis == "temporal":
            return self.N, self.n_ref
        return self.N_ref, self.n

    def scheme_config(self) -> SchemeConfig:
        N, n = self.reference_level
        return SchemeConfig(N=N, n=n, T=self.T, sigma=self.sigma, u0=self.u0,
                            G=self.G, drift_variant=self.drift_variant, oversample=self.oversample)

    def level_config(self, level: int) -> SchemeConfig:
        base = self.scheme_config()
        if self.axis == "temporal":
            return base.replace(N=self.N, n=level)
        return base.replace(N=level, n=self.n)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _profile_str(p: InitialProfile) -> str:
    if p.kind == "zero":
        return "zero"
    return f"{p.kind}({', '.join(repr(v) for v in p.params)})"


def load_toml(path: Union[str, Path]) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc


def study_config_from_dict(d: dict, **overrides) -> StudyConfig:
    known = {f.name for f in fields(StudyConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**d, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return StudyConfig(**merged)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_study_config(path: Union[str, Path], **overrides) -> StudyConfig:
    return study_config_from_dict(load_toml(path), **overrides)


def _sample_errors(args) -> tuple[int, list[float]]:
    cfg, index = args
    seed = derive_seed(cfg.seed, index)
    base = cfg.scheme_config()
    path = sample_ou_path(seed, base.lattice, base.n, cfg.T, cfg.sigma)
    ref = run_reference(base, path)
    errs = [sup_error(run(cfg.level_config(level), path), ref) for level in cfg.levels]
    return seed, errs


def run_convergence_study(cfg: StudyConfig, workers: int = 1) -> ConvergenceReport:
    """Coupled-noise error ladder; identical output for any ``workers``."""
    jobs = [(cfg, s) for s in range(cfg.samples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sample_errors, jobs))
    else:
        results = [_sample_errors(j) for j in jobs]
    seeds = [seed for seed, _ in results]
    errors = np.array([errs for _, errs in results], dtype=np.float64).T
    return ConvergenceReport(axis=cfg.axis, levels=list(cfg.levels), errors=errors,
                             seeds=seeds, config_digest=cfg.digest())


def write_report(report: ConvergenceReport, out: Union[str, Path]) -> tuple[Path, Path]:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    samples = d / "errors.csv"
    summary = d / "summary.csv"
    samples.write_text(report.samples_csv())
    summary.write_text(report.summary_csv())
    return samples, summary


# -- checks ------------------------------------------------------------------


@dataclass
class NoiseCheck:
    N: int
    T: float
    samples: int
    modes: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray
    z: np.ndarray
    total_mean: float
    total_stderr: float
    total_analytic: float

    @property
    def total_z(self) -> float:
        return (self.total_mean - self.total_analytic) / self.total_stderr

    def passed(self, mode_z: float = 4.0, total_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z) <= mode_z) and abs(self.total_z) <= total_se)

    def csv(self) -> str:
        lines = ["k1,k2,empirical_var,analytic_var,z_score"]
        for k, e, a, z in zip(self.modes, self.empirical, self.analytic, self.z):
            lines.append(f"{k[0]},{k[1]},{float(e)!r},{float(a)!r},{float(z)!r}")
        return "\n".join(lines) + "\n"


def noise_variance_check(seed: int, samples: int = 2000, N: int = 4, T: float = 0.1,
                         sigma: float = 1.0, n_steps: int = 1) -> NoiseCheck:
    """Compare ``E|U_k(T)|^2`` and ``E||U^N(T)||^2`` with their closed forms."""
    lat = make_lattice(N)
    final = np.stack([
        sample_ou_path(derive_seed(seed, s), lat, n_steps, T, sigma).values[-1]
        for s in range(samples)
    ])
    sq = np.abs(final) ** 2
    emp = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(samples)
    ana = mode_variance(T, lat, sigma)
    totals = np.sum(sq, axis=1)
    m, s = mean_and_stderr(totals)
    return NoiseCheck(N=N, T=T, samples=samples, modes=lat.modes, empirical=emp, analytic=ana,
                      z=(emp - ana) / se, total_mean=m, total_stderr=s,
                      total_analytic=analytic_variance(T, lat, sigma))


def linear_exactness(seed: int, N: int = 16, levels: Sequence[int] = (8, 16, 32, 64),
                     T: float = 0.01, sigma: float = 1.0, u0="smooth_bump") -> float:
    """Max relative deviation of the ``G = 0`` scheme from ``P_t u0 + U^N(t)``."""
    n_ref = max(levels)
    base = SchemeConfig(N=N, n=n_ref, T=T, sigma=sigma, u0=u0, G="zero")
    path = sample_ou_path(seed, base.lattice, n_ref, T, sigma)
    worst = 0.0
    for n in levels:
        cfg = base.replace(n=n)
        num = run(cfg, path).values
        exact = linear_solution(cfg, path).values
        diff = l2_norms(num - exact)
        ref = l2_norms(exact)
        if np.any(diff[ref == 0] != 0):
            return math.inf
        nz = ref > 0
        if np.any(nz):
            worst = max(worst, float(np.max(diff[nz] / ref[nz])))
    return worst


def noise_holder_exponent(seed: int, samples: int = 200, N: int = 32, alpha: float = -0.05,
                          base_lag: float = 2.0**-10, n_lags: int = 5, offset_steps: int = 16):
    """Time-Holder exponent of ``U^N`` in ``C^alpha`` over lags ``base_lag * 2^m``.

    Paths use grid step ``base_lag``; increments start ``offset_steps``
    steps after 0.
    """
    lat = make_lattice(N)
    total = offset_steps + 2 ** (n_lags - 1)
    pairs = [(offset_steps, offset_steps + 2**m) for m in range(n_lags)]
    paths = [sample_ou_path(derive_seed(seed, s), lat, total, total * base_lag)
             for s in range(samples)]
    return time_holder_fit(paths, alpha, pairs)


def smoothing_exponent(seed: int, N: int = 64, alpha: float = 1.0,
                       t_min: float = 1e-6, t_max: float = 1e-2, n_times: int = 9,
                       fields_count: int = 4) -> list[float]:
    """Slopes of ``log ||P_t f||_{C^alpha}`` vs ``log t`` for equal-block-energy fields."""
    rng = np.random.default_rng(seed)
    lat = make_lattice(N)
    times = np.geomspace(t_min, t_max, n_times)
    return [smoothing_fit(equal_energy_field(lat, rng), alpha, times).slope for _ in range(fields_count)]
