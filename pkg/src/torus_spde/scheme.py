"""Spectral-Galerkin / exponential-Euler discretisation.

Per retained mode ``k`` and step ``h = T / n``::

    u_k(t_{j+1}) = e^{-h mu_k^2} u_k(t_j)
                   + drift_factor(k, h) * G_k(u(t_j))
                   + [U_k(t_{j+1}) - e^{-h mu_k^2} U_k(t_j)]

where ``G_k`` is the Galerkin-projected nonlinearity frozen at the left
endpoint and ``U`` the exactly sampled stochastic convolution.  The
default ``"integrated"`` drift factor is the exact step integral
``(1 - e^{-h mu^2}) / mu^2``; ``"literal"`` uses ``h e^{-h mu^2}``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .noise import NoisePath, restrict
from .nonlinearity import NonlinearitySpec, eval_G_coeffs
from .torus_spectral import (
    ModeLattice,
    SpectralField,
    eigenvalue,
    extend,
    make_lattice,
    project,
    write_snapshot,
)

DRIFT_VARIANTS = ("integrated", "literal")


@dataclass(frozen=True)
class InitialProfile:
    """Named mean-zero initial condition.

    * ``zero``
    * ``single_mode``: params ``k1, k2, amp``; ``u = amp e_k + conj(amp) e_{-k}``
    * ``smooth_bump``: params ``amp, width, cutoff``;
      ``u_k = amp exp(-|k|^2 / width^2)`` for ``0 < |k| <= cutoff``
    """

    kind: str = "zero"
    params: tuple = ()

    _DEFAULTS = {
        "zero": (),
        "single_mode": (1.0, 0.0, 1.0),
        "smooth_bump": (1.0, 2.0, 4.0),
    }

    def __post_init__(self):
        if self.kind not in self._DEFAULTS:
            raise ValueError(f"unknown initial profile {self.kind!r}")
        defaults = self._DEFAULTS[self.kind]
        params = tuple(float(p) for p in self.params)
        if len(params) > len(defaults):
            raise ValueError(f"{self.kind} takes at most {len(defaults)} parameters")
        object.__setattr__(self, "params", params + defaults[len(params):])

    @classmethod
    def parse(cls, value) -> "InitialProfile":
        if isinstance(value, InitialProfile):
            return value
        if isinstance(value, dict):
            return cls(value["kind"], tuple(value.get("params", ())))
        if isinstance(value, (list, tuple)):
            return cls(value[0], tuple(value[1:]))
        text = str(value).strip()
        if "(" in text and text.endswith(")"):
            kind, rest = text[:-1].split("(", 1)
            return cls(kind.strip(), tuple(float(p) for p in rest.split(",") if p.strip()))
        return cls(text)

    def to_config(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    def on(self, lattice: ModeLattice) -> SpectralField:
        if self.kind == "zero":
            return SpectralField.zeros(lattice)
        if self.kind == "single_mode":
            k1, k2, amp = self.params
            k = (int(k1), int(k2))
            if k1 != k[0] or k2 != k[1]:
                raise ValueError("single_mode needs integer wavenumbers")
            eigenvalue(k)  # rejects k = 0
            if k[0] ** 2 + k[1] ** 2 > lattice.N**2:
                return SpectralField.zeros(lattice)
            return SpectralField.from_modes(lattice, {k: amp})
        amp, width, cutoff = self.params
        kk = lattice.norm_sq
        c = amp * np.exp(-kk / width**2) * (kk <= cutoff**2)
        return SpectralField(lattice, c.astype(np.complex128))


def initial_field(u0, lattice: ModeLattice) -> SpectralField:
    """``Pi_N u0`` on ``lattice`` for a field or a named profile."""
    if isinstance(u0, SpectralField):
        if u0.lattice.N >= lattice.N:
            return SpectralField(lattice, project(u0, lattice.N).coeffs)
        return extend(u0, lattice)
    return InitialProfile.parse(u0).on(lattice)


@dataclass(frozen=True)
class SchemeConfig:
    N: int
    n: int
    T: float
    sigma: float = 1.0
    u0: Union[InitialProfile, SpectralField, str] = field(default_factory=InitialProfile)
    G: NonlinearitySpec = field(default_factory=NonlinearitySpec.zero)
    drift_variant: str = "integrated"
    oversample: Union[int, float, Fraction] = 2

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma!r}")
        if self.drift_variant not in DRIFT_VARIANTS:
            raise ValueError(f"drift_variant must be one of {DRIFT_VARIANTS}")
        if not isinstance(self.u0, SpectralField):
            object.__setattr__(self, "u0", InitialProfile.parse(self.u0))
        object.__setattr__(self, "G", NonlinearitySpec.parse(self.G))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def lattice(self) -> ModeLattice:
        return make_lattice(self.N, self.oversample)

    def replace(self, **changes) -> "SchemeConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``u(t_j)``, ``j = 0..n``, stored as an (n + 1, K) array."""

    config: SchemeConfig
    lattice: ModeLattice
    values: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * (self.config.T / self.n_steps)

    def field(self, j: int) -> SpectralField:
        return SpectralField(self.lattice, self.values[j])

    @property
    def fields(self) -> list[SpectralField]:
        return [self.field(j) for j in range(self.n_steps + 1)]

    def write_snapshots(self, directory: Union[str, Path], stride: int = 1) -> list[Path]:
        if stride < 1:
            raise ValueError("stride must be >= 1")
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        for j in range(0, self.n_steps + 1, stride):
            p = d / f"snap_{j:06d}.spde"
            write_snapshot(self.field(j), p)
            written.append(p)
        return written


def drift_factor(k, h: float, variant: str = "integrated") -> float:
    """Weight of the frozen drift over one step for mode ``k``."""
    mu = eigenvalue(k)
    return float(drift_factors(np.array([mu]), h, variant)[0])


def drift_factors(mu: np.ndarray, h: float, variant: str = "integrated") -> np.ndarray:
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    mu2 = np.asarray(mu, dtype=np.float64) ** 2
    if variant == "integrated":
        return -np.expm1(-h * mu2) / mu2
    if variant == "literal":
        return h * np.exp(-h * mu2)
    raise ValueError(f"unknown drift variant {variant!r}")


def _check_path(path: NoisePath, config: SchemeConfig) -> None:
    if path.N != config.N or path.n_steps != config.n:
        raise ValueError(
            f"noise path level (N={path.N}, n={path.n_steps}) does not match "
            f"config (N={config.N}, n={config.n})"
        )
    if not np.isclose(path.T, config.T, rtol=1e-14, atol=0) or path.sigma != config.sigma:
        raise ValueError("noise path (T, sigma) do not match the scheme config")


class _Stepper:
    def __init__(self, config: SchemeConfig):
        lat = config.lattice
        self.lattice = lat
        self.spec = config.G
        self.decay = np.exp(-config.h * lat.mu**2)
        self.drift = drift_factors(lat.mu, config.h, config.drift_variant)
        self.linear = config.G.kind in ("zero", "constant")

    def advance(self, u: np.ndarray, U_now: np.ndarray, U_next: np.ndarray) -> np.ndarray:
        out = self.decay * u + (U_next - self.decay * U_now)
        if not self.linear:
            out = out + self.drift * eval_G_coeffs(self.spec, self.lattice, u)
        return out


def step(u: SpectralField, j: int, path: NoisePath, config: SchemeConfig) -> SpectralField:
    """Advance the state at ``t_j`` to ``t_{j+1}``.

    ``path`` must already be restricted to the config's ``(N, n)``.
    """
    _check_path(path, config)
    if not 0 <= j < config.n:
        raise ValueError(f"step index {j} outside 0..{config.n - 1}")
    st = _Stepper(config)
    if u.lattice.N != config.N:
        raise ValueError("state lattice does not match config N")
    nxt = st.advance(u.coeffs, path.values[j], path.values[j + 1])
    return SpectralField(st.lattice, nxt)


def run(config: SchemeConfig, path: NoisePath) -> Trajectory:
    """Iterate :func:`step` from ``Pi_N u0``; ``path`` may be any finer level."""
    if path.N != config.N or path.n_steps != config.n:
        path = restrict(path, config.N, config.n)
    _check_path(path, config)
    st = _Stepper(config)
    vals = np.empty((config.n + 1, st.lattice.size), dtype=np.complex128)
    vals[0] = initial_field(config.u0, st.lattice).coeffs
    U = path.values
    for j in range(config.n):
        vals[j + 1] = st.advance(vals[j], U[j], U[j + 1])
    vals.flags.writeable = False
    return Trajectory(config=config, lattice=st.lattice, values=vals)


def run_reference(config: SchemeConfig, path: NoisePath) -> Trajectory:
    """Surrogate for the mild solution: the scheme at the path's own level.

    ``config`` supplies everything except ``(N, n)``, which are taken
    from ``path``.  Accuracy rests on the reference level dominating every
    level it is compared against.
    """
    ref_cfg = config.replace(N=path.N, n=path.n_steps)
    return run(ref_cfg, path)


def linear_solution(config: SchemeConfig, path: NoisePath) -> Trajectory:
    """``P_t^N u0 + U^N(t)`` at the grid times (closed form for ``G = 0``)."""
    if path.N != config.N or path.n_steps != config.n:
        path = restrict(path, config.N, config.n)
    lat = config.lattice
    u0 = initial_field(config.u0, lat).coeffs
    t = np.arange(config.n + 1)[:, None] * config.h
    vals = np.exp(-t * lat.mu[None, :] ** 2) * u0[None, :] + path.values
    vals.flags.writeable = False
    return Trajectory(config=config, lattice=lat, values=vals)
