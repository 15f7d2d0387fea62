"""Norms, dyadic blocks, error metrics and rate fitting.

Dyadic blocks use sharp annuli: block ``j >= 0`` holds the modes with
``2^(j-1) < |k| <= 2^j`` and block ``-1`` holds only ``k = 0``, which
never occurs in the mean-zero frame.  Sharp blocks give a norm
equivalent to the smooth Littlewood-Paley one with exact
reconstruction ``sum_j Delta_j f = f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .noise import NoisePath
from .torus_spectral import ModeLattice, SpectralField, coeffs_to_grid, semigroup_factors

# -- norms -------------------------------------------------------------------


def l2_norm(f: SpectralField) -> float:
    """``||f||_{L^2(T^2)} = sqrt(sum_k |f_k|^2)``."""
    return math.sqrt(math.fsum(np.abs(f.coeffs) ** 2))


def l2_norms(coeffs: np.ndarray) -> np.ndarray:
    """Row-wise L^2 norms of a (..., K) coefficient stack."""
    c = np.asarray(coeffs)
    return np.sqrt(np.sum(c.real**2 + c.imag**2, axis=-1))


def sup_norm(f: SpectralField) -> float:
    from .torus_spectral import to_physical

    return float(np.max(np.abs(to_physical(f))))


def block_indices(lattice: ModeLattice) -> np.ndarray:
    """Dyadic block ``j`` of every mode: smallest ``j`` with ``|k| <= 2^j``."""
    s = lattice.norm_sq
    # 4^j >= s  <=>  2j >= bit_length(s - 1)
    bits = np.array([int(v - 1).bit_length() for v in s], dtype=np.int64)
    return (bits + 1) // 2


def max_block(lattice: ModeLattice) -> int:
    return int(block_indices(lattice).max())


@dataclass(frozen=True)
class DyadicPartition:
    lattice: ModeLattice
    index: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, lattice: ModeLattice) -> "DyadicPartition":
        return cls(lattice, block_indices(lattice))

    @property
    def blocks(self) -> range:
        return range(-1, int(self.index.max()) + 1)

    def mask(self, j: int) -> np.ndarray:
        return self.index == j


def dyadic_block(f: SpectralField, j: int) -> SpectralField:
    """``Delta_j f`` under the sharp annulus rule."""
    if j < -1:
        raise ValueError("block index must be >= -1")
    mask = block_indices(f.lattice) == j
    return SpectralField(f.lattice, np.where(mask, f.coeffs, 0))


def _lp(grid: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(grid)
    if math.isinf(p):
        return a.max(axis=(-2, -1))
    return np.mean(a**p, axis=(-2, -1)) ** (1.0 / p)


def block_lp_norms(lattice: ModeLattice, coeffs: np.ndarray, p: float = math.inf) -> np.ndarray:
    """``||Delta_j f||_{L^p}`` for ``j = 0..J``; shape (..., J + 1).

    Block ``-1`` is identically zero on mean-zero fields and omitted.
    """
    idx = block_indices(lattice)
    c = np.asarray(coeffs)
    out = []
    for j in range(int(idx.max()) + 1):
        out.append(_lp(coeffs_to_grid(lattice, np.where(idx == j, c, 0)), p))
    return np.stack(out, axis=-1)


def besov_norms(lattice: ModeLattice, coeffs: np.ndarray, alpha: float,
                p: float = math.inf, q: float = math.inf, chunk: int = 16) -> np.ndarray:
    c = np.asarray(coeffs)
    if c.ndim == 2 and len(c) > chunk:
        return np.concatenate([besov_norms(lattice, c[i:i + chunk], alpha, p, q, chunk)
                               for i in range(0, len(c), chunk)])
    blocks = block_lp_norms(lattice, c, p)
    weights = 2.0 ** (alpha * np.arange(blocks.shape[-1]))
    seq = blocks * weights
    if math.isinf(q):
        return seq.max(axis=-1)
    return np.sum(seq**q, axis=-1) ** (1.0 / q)


def besov_norm(f: SpectralField, alpha: float, p: float = math.inf, q: float = math.inf) -> float:
    """``||(2^{j alpha} ||Delta_j f||_{L^p})_j||_{l^q}``; ``C^alpha`` is ``p = q = inf``."""
    for v in (p, q):
        if not (v >= 1):
            raise ValueError("p and q must lie in [1, inf]")
    return float(besov_norms(f.lattice, f.coeffs, alpha, p, q))


def holder_norm(f: SpectralField, alpha: float) -> float:
    return besov_norm(f, alpha, math.inf, math.inf)


# -- trajectory errors -------------------------------------------------------


def sup_error(a, b) -> float:
    """``max_t ||a(t) - b(t)||_{L^2}`` over the shared grid times.

    The field on the smaller lattice is zero-extended; one time grid
    must refine the other.
    """
    if not math.isclose(a.config.T, b.config.T, rel_tol=1e-14):
        raise ValueError("trajectories cover different horizons; no shared grid")
    na, nb = a.n_steps, b.n_steps
    if nb % na and na % nb:
        raise ValueError(f"time grids n={na} and n={nb} do not nest; no shared times")
    n = min(na, nb)
    va = a.values[:: na // n]
    vb = b.values[:: nb // n]
    la, lb = a.lattice, b.lattice
    if la.N != lb.N:
        if la.N > lb.N:
            va, vb, la, lb = vb, va, lb, la
        # la is now the coarse lattice; extend its fields to lb
        pos = lb.index_of(la.modes)
        ext = np.zeros((len(va), lb.size), dtype=np.complex128)
        ext[:, pos] = va
        va = ext
    return float(l2_norms(va - vb).max())


# -- Monte Carlo statistics and fitting ----------------------------------------


def mean_and_stderr(samples: Sequence[float]) -> tuple[float, float]:
    """Order-insensitive mean and standard error (``ddof = 1``)."""
    x = [float(v) for v in samples]
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    mean = math.fsum(x) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    slope_stderr: float


def fit_rate(levels: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Least squares of ``log(error)`` on ``log(level)``.

    Logs are taken relative to the first point, so rescaling every error
    by a power of two leaves the slope bit-identical.
    """
    x = np.asarray(levels, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if x.shape != e.shape or x.ndim != 1:
        raise ValueError("levels and errors must be matching 1-d sequences")
    if len(x) < 3:
        raise ValueError("need at least 3 levels to fit a rate")
    if np.any(x <= 0):
        raise ValueError("levels must be positive")
    if np.any(~(e > 0)) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite for a log-log fit")
    lx = np.log(x / x[0])
    ly = np.log(e / e[0])
    xm = lx.mean()
    ym = ly.mean()
    dx = lx - xm
    dy = ly - ym
    sxx = float(np.dot(dx, dx))
    slope = float(np.dot(dx, dy)) / sxx
    icpt_rel = ym - slope * xm
    resid = dy - slope * dx
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(dy, dy))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    dof = len(x) - 2
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else math.nan
    intercept = float(math.log(e[0]) - slope * math.log(x[0]) + icpt_rel)
    return RateFit(slope=slope, intercept=intercept, r2=r2, slope_stderr=stderr)


@dataclass(frozen=True)
class HolderFit:
    exponent: float
    fit: RateFit
    lags: tuple
    moments: tuple
    p: float


def holder_fit_from_moments(lags: Sequence[float], moments: Sequence[float], p: float = 2.0) -> HolderFit:
    """Exponent of ``moments ~ lag^{exponent * p}``."""
    lags = tuple(float(v) for v in lags)
    moments = tuple(float(v) for v in moments)
    if len(set(lags)) < 4:
        raise ValueError("need at least 4 distinct lags")
    if any(not (m > 0) for m in moments):
        raise ValueError("degenerate increments: zero moment at some lag")
    fit = fit_rate(lags, moments)
    return HolderFit(exponent=fit.slope / p, fit=fit, lags=lags, moments=moments, p=p)


def time_holder_fit(paths: Sequence[NoisePath], alpha: float, pairs: Iterable[tuple[int, int]],
                    p: float = 2.0, min_samples: int = 100) -> HolderFit:
    """Fit ``E ||U_t - U_s||_{C^alpha}^p ~ |t - s|^{lambda p / 4}``.

    ``pairs`` are index pairs ``(s, t)`` into the paths' common time
    grid; pairs sharing a lag are pooled.  Returns the exponent per unit
    ``p`` (``lambda / 4`` in the smoothing scale).
    """
    paths = list(paths)
    if len(paths) < min_samples:
        raise ValueError(f"need >= {min_samples} samples, got {len(paths)}")
    lat = paths[0].lattice
    dt = paths[0].dt
    by_lag: dict[int, list[tuple[int, int]]] = {}
    for s, t in pairs:
        if t <= s:
            raise ValueError(f"degenerate pair ({s}, {t})")
        by_lag.setdefault(t - s, []).append((s, t))
    if len(by_lag) < 4:
        raise ValueError("need at least 4 distinct lags")
    lags, moments = [], []
    for lag in sorted(by_lag):
        incs = np.stack([path.values[t] - path.values[s] for path in paths for s, t in by_lag[lag]])
        norms = besov_norms(lat, incs, alpha)
        lags.append(lag * dt)
        moments.append(math.fsum(norms**p) / len(norms))
    return holder_fit_from_moments(lags, moments, p)


def equal_energy_field(lattice: ModeLattice, rng: np.random.Generator, energy: float = 1.0) -> SpectralField:
    """Random Hermitian field whose dyadic blocks all carry L^2 energy ``energy``."""
    f = SpectralField.random(lattice, rng)
    idx = block_indices(lattice)
    c = f.coeffs.copy()
    for j in np.unique(idx):
        m = idx == j
        c[m] *= math.sqrt(energy) / math.sqrt(float(np.sum(np.abs(c[m]) ** 2)))
    return SpectralField(lattice, c)


def smoothing_fit(f: SpectralField, alpha: float, times: Sequence[float]) -> RateFit:
    """Log-log fit of ``||P_t f||_{C^alpha}`` against ``t``."""
    times = np.asarray(times, dtype=np.float64)
    stack = np.stack([f.coeffs * semigroup_factors(f.lattice, t) for t in times])
    norms = besov_norms(f.lattice, stack, alpha)
    return fit_rate(times, norms)


# -- convergence reports -------------------------------------------------------


@dataclass
class ConvergenceReport:
    """Per-level, per-sample sup-in-time L^2 errors and their log-log fit.

    ``sup`` is taken over the coarse grid times only, the times at which
    the scheme is defined.
    """

    axis: str
    levels: list
    errors: np.ndarray  # (n_levels, n_samples)
    seeds: list
    config_digest: str = ""
    fit: Optional[RateFit] = None

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if self.errors.shape != (len(self.levels), len(self.seeds)):
            raise ValueError("errors must have shape (levels, samples)")
        if np.any(self.errors < 0):
            raise ValueError("errors must be non-negative")
        if self.fit is None and len(self.levels) >= 3 and np.all(self.errors.mean(axis=1) > 0):
            self.fit = fit_rate(self.levels, self.mean_errors)

    @property
    def summary(self) -> list[tuple[float, float]]:
        return [mean_and_stderr(row) for row in self.errors]

    @property
    def mean_errors(self) -> list[float]:
        return [m for m, _ in self.summary]

    @property
    def std_errors(self) -> list[float]:
        return [s for _, s in self.summary]

    def samples_csv(self) -> str:
        lines = ["axis,level,sample,seed,sup_l2_error"]
        for i, level in enumerate(self.levels):
            for s, seed in enumerate(self.seeds):
                lines.append(f"{self.axis},{level},{s},{seed},{float(self.errors[i, s])!r}")
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["axis,level,mean_error,std_error,n_samples"]
        for level, (m, se) in zip(self.levels, self.summary):
            lines.append(f"{self.axis},{level},{m!r},{se!r},{len(self.seeds)}")
        if self.fit is not None:
            f = self.fit
            lines.append(f"# slope={f.slope!r} intercept={f.intercept!r} r2={f.r2!r}")
        return "\n".join(lines) + "\n"
