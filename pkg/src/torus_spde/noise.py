"""Exact sampling of the truncated stochastic convolution.

Every retained mode of ``U^N`` is an Ornstein-Uhlenbeck process::

    dU_k = -mu_k^2 U_k dt + sigma dB_k,       U_k(0) = 0

whose transition over a step ``d`` is Gaussian and sampled exactly::

    U_k(t + d) = exp(-d mu_k^2) U_k(t) + eta,
    E|eta|^2   = sigma^2 (1 - exp(-2 d mu_k^2)) / (2 mu_k^2)

with the variance split evenly between real and imaginary parts.  One
complex innovation is drawn per +/-k pair; ``U_{-k}`` is the conjugate.

Randomness layout
-----------------
Draws come from a counter-based SplitMix64 construction, so each value
is a pure function of ``(seed, k, step)``:

* ``stream_key(seed, k) = mix64(mix64(seed) ^ (key(k) * ODD))``
* word ``p`` of that stream is ``mix64(stream_key + GOLDEN * (p + 1))``
* step ``j`` of mode ``k`` consumes words ``2j`` and ``2j + 1`` through a
  Box-Muller transform (real part, imaginary part).

Adding modes or steps therefore never changes existing draws, and the
path for one mode does not depend on which other modes are sampled.
Per-sample seeds are ``derive_seed(master, index)``, the ``index``-th
output of a SplitMix64 generator seeded with ``master``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .torus_spectral import (
    ModeLattice,
    SpectralField,
    lattice_with_grid,
    mode_keys,
    read_snapshots,
    write_snapshots,
)

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MODE_ODD = 0xD1B54A32D192ED03
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def derive_seed(master: int, index: int) -> int:
    """Seed of sample ``index`` (0-based) under master seed ``master``."""
    if index < 0:
        raise ValueError("sample index must be non-negative")
    return mix64((master & MASK64) + GOLDEN * (index + 1))


def stream_keys(seed: int, modes: np.ndarray) -> np.ndarray:
    base = np.uint64(mix64(seed))
    mk = mode_keys(modes).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(base ^ (mk * np.uint64(_MODE_ODD)))


def gaussian_innovations(seed: int, modes: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Standard complex normals ``Z[j, m]`` (unit variance per component).

    ``steps`` are the step indices ``j``; ``modes`` an (m, 2) array.
    """
    keys = stream_keys(seed, modes)[None, :]
    j = np.asarray(steps, dtype=np.uint64)[:, None]
    g = np.uint64(GOLDEN)
    with np.errstate(over="ignore"):
        w0 = _mix64_array(keys + g * (np.uint64(2) * j + np.uint64(1)))
        w1 = _mix64_array(keys + g * (np.uint64(2) * j + np.uint64(2)))
    scale = 2.0**-53
    u1 = ((w0 >> np.uint64(11)).astype(np.float64) + 1.0) * scale  # (0, 1]
    u2 = (w1 >> np.uint64(11)).astype(np.float64) * scale  # [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    return r * np.cos(theta) + 1j * (r * np.sin(theta))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Values of ``U^N`` on the grid ``t_j = j T / n_steps``.

    ``values[j]`` holds the coefficients at ``t_j`` in lattice order.
    """

    lattice: ModeLattice
    T: float
    n_steps: int
    sigma: float
    seed: int
    values: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * (self.T / self.n_steps)

    def field(self, j: int) -> SpectralField:
        return SpectralField(self.lattice, self.values[j])


def ou_step_coefficients(lattice: ModeLattice, dt: float, sigma: float):
    """Per-mode decay ``exp(-dt mu^2)`` and innovation std (total, complex)."""
    mu2 = lattice.mu**2
    decay = np.exp(-dt * mu2)
    std = sigma * np.sqrt(-np.expm1(-2.0 * dt * mu2) / (2.0 * mu2))
    return decay, std


def sample_ou_path(
    seed: int,
    lattice: ModeLattice,
    n_ref: int,
    T: float,
    sigma: float = 1.0,
) -> NoisePath:
    """Exact OU path of every lattice mode on ``n_ref`` equal steps over [0, T]."""
    if n_ref < 1:
        raise ValueError(f"n_ref must be >= 1, got {n_ref}")
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    rep = np.flatnonzero(lattice.representative)
    decay, std = ou_step_coefficients(lattice, T / n_ref, sigma)
    decay = decay[rep]
    std = std[rep] / math.sqrt(2.0)
    z = gaussian_innovations(seed, lattice.modes[rep], np.arange(n_ref))

    vals = np.zeros((n_ref + 1, lattice.size), dtype=np.complex128)
    cur = np.zeros(len(rep), dtype=np.complex128)
    neg = lattice.neg_index[rep]
    for j in range(n_ref):
        cur = decay * cur + std * z[j]
        vals[j + 1, rep] = cur
        vals[j + 1, neg] = np.conj(cur)
    vals.flags.writeable = False
    return NoisePath(lattice=lattice, T=float(T), n_steps=int(n_ref), sigma=float(sigma),
                     seed=int(seed), values=vals)


def restrict(path: NoisePath, N: int, n: int) -> NoisePath:
    """The same noise seen at spatial cutoff ``N`` and ``n`` time steps.

    Values are copied, not re-sampled: modes beyond ``N`` are dropped and
    only the times ``t_{j * n_ref / n}`` are kept.
    """
    if N > path.N or N < 1:
        raise ValueError(f"cannot restrict an N={path.N} path to N={N}")
    if n < 1 or path.n_steps % n:
        raise ValueError(f"n={n} does not divide n_ref={path.n_steps}; coupling would be inexact")
    if N == path.N and n == path.n_steps:
        return path
    stride = path.n_steps // n
    lat = path.lattice if N == path.N else lattice_with_grid(N, path.lattice.M)
    cols = path.lattice.index_of(lat.modes) if N != path.N else slice(None)
    vals = np.ascontiguousarray(path.values[::stride][:, cols])
    vals.flags.writeable = False
    return NoisePath(lattice=lat, T=path.T, n_steps=n, sigma=path.sigma, seed=path.seed, values=vals)


def analytic_variance(t: float, lattice: ModeLattice, sigma: float = 1.0) -> float:
    """``E ||U^N(t)||_{L^2}^2 = sigma^2 sum_k (1 - exp(-2 t mu_k^2)) / (2 mu_k^2)``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return sigma**2 * math.fsum(mode_variance(t, lattice, 1.0))


def mode_variance(t: float, lattice: ModeLattice, sigma: float = 1.0) -> np.ndarray:
    mu2 = lattice.mu**2
    return sigma**2 * (-np.expm1(-2.0 * t * mu2)) / (2.0 * mu2)


# -- on-disk cache -----------------------------------------------------------

_CACHE_RE = re.compile(
    r"ou_seed(?P<seed>\d+)_N(?P<N>\d+)_M(?P<M>\d+)_n(?P<n>\d+)_T(?P<T>[^_]+)_sigma(?P<sigma>[^_]+)\.spde$"
)


def cache_name(seed: int, N: int, M: int, n_ref: int, T: float, sigma: float) -> str:
    return f"ou_seed{seed}_N{N}_M{M}_n{n_ref}_T{float(T)!r}_sigma{float(sigma)!r}.spde"


def save_path(path: NoisePath, directory: Union[str, Path]) -> Path:
    """Write one snapshot record per time slice; returns the file written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = d / cache_name(path.seed, path.N, path.lattice.M, path.n_steps, path.T, path.sigma)
    write_snapshots((path.field(j) for j in range(path.n_steps + 1)), out)
    return out


def load_path(file: Union[str, Path]) -> NoisePath:
    m = _CACHE_RE.search(Path(file).name)
    if m is None:
        raise ValueError(f"not a noise-path cache file: {file}")
    fields = read_snapshots(file)
    n = int(m["n"])
    if len(fields) != n + 1:
        raise ValueError(f"cache file holds {len(fields)} slices, expected {n + 1}")
    vals = np.stack([f.coeffs for f in fields])
    vals.flags.writeable = False
    return NoisePath(lattice=fields[0].lattice, T=float(m["T"]), n_steps=n,
                     sigma=float(m["sigma"]), seed=int(m["seed"]), values=vals)


def cached_ou_path(seed: int, lattice: ModeLattice, n_ref: int, T: float, sigma: float = 1.0,
                   cache_dir: Optional[Union[str, Path]] = None) -> NoisePath:
    if cache_dir is None:
        return sample_ou_path(seed, lattice, n_ref, T, sigma)
    f = Path(cache_dir) / cache_name(seed, lattice.N, lattice.M, n_ref, T, sigma)
    if f.exists():
        return load_path(f)
    path = sample_ou_path(seed, lattice, n_ref, T, sigma)
    save_path(path, cache_dir)
    return path

