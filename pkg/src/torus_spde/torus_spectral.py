"""Fourier-mode bookkeeping on the unit torus T^2 = R^2 / Z^2.

A real, mean-zero field is stored by its complex coefficients on the
orthonormal basis ``e_k(x) = exp(2 pi i k.x)``::

    u(x) = sum_{0 < |k| <= N} u_k e_k(x),     u_{-k} = conj(u_k)

so ``-Laplacian e_k = mu_k e_k`` with ``mu_k = 4 pi^2 |k|^2`` and the
bi-Laplacian semigroup acts diagonally as ``exp(-t mu_k^2)``.  Both
members of every +/-k pair are stored, in lexicographic (k1, then k2)
order, so that the snapshot format is a plain dump of the coefficient
array.

Physical-space values live on an oversampled M x M grid
``x = (i/M, j/M)``, with ``M`` the smallest even integer not below
``oversample * (2N + 2)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Iterable, Union

import numpy as np
from scipy import fft as sfft

FOUR_PI_SQ = 4.0 * math.pi**2

SNAPSHOT_MAGIC = b"SPDE1"
_HEADER = struct.Struct("<5sIIQ")

# key = (k1 + _KEY_OFFSET) * _KEY_STRIDE + (k2 + _KEY_OFFSET); monotone in
# lexicographic order, so sorted keys give sorted modes.
_KEY_OFFSET = 1 << 20
_KEY_STRIDE = 1 << 21


def mode_keys(modes: np.ndarray) -> np.ndarray:
    modes = np.asarray(modes, dtype=np.int64)
    return (modes[..., 0] + _KEY_OFFSET) * _KEY_STRIDE + (modes[..., 1] + _KEY_OFFSET)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def eigenvalue(k) -> float:
    """Return ``mu_k = 4 pi^2 |k|^2`` for a nonzero integer pair ``k``."""
    k1, k2 = (int(c) for c in k)
    if k1 == 0 and k2 == 0:
        raise ValueError("the zero mode has no eigenvalue in the mean-zero frame")
    return FOUR_PI_SQ * (k1 * k1 + k2 * k2)


def grid_size_for(N: int, oversample: Union[int, float, Fraction] = 2) -> int:
    target = Fraction(oversample) * (2 * N + 2)
    M = math.ceil(target)
    return M + (M % 2)


@dataclass(frozen=True, eq=False)
class ModeLattice:
    """Truncated frequency set ``{k in Z^2 \\ {0} : |k| <= N}``.

    Besides the sorted mode list the lattice carries the arrays every
    other module needs: eigenvalues, the index of ``-k`` for each mode,
    a mask selecting one representative per +/-k pair and the scatter
    indices into an ``rfft2`` half-spectrum of the M x M grid.
    """

    N: int
    grid_size: int
    modes: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    neg_index: np.ndarray = field(repr=False)
    representative: np.ndarray = field(repr=False)
    keys: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.grid_size

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def norm_sq(self) -> np.ndarray:
        return self.modes[:, 0] ** 2 + self.modes[:, 1] ** 2

    def index_of(self, modes) -> np.ndarray:
        """Positions of ``modes`` (shape (..., 2)) in this lattice; KeyError if absent."""
        keys = mode_keys(np.asarray(modes))
        pos = np.searchsorted(self.keys, keys)
        pos_c = np.clip(pos, 0, self.size - 1)
        if np.any(self.keys[pos_c] != keys):
            raise KeyError("mode not in lattice")
        return pos_c

    @property
    def half_spectrum_index(self):
        """(row, col, from_conj, source) indices into the rfft2 half-spectrum."""
        return _half_spectrum_index(self.N, self.grid_size)


@lru_cache(maxsize=None)
def _build_lattice(N: int, M: int) -> ModeLattice:
    r = np.arange(-N, N + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    k1 = k1.ravel()
    k2 = k2.ravel()
    keep = (k1 * k1 + k2 * k2 <= N * N) & ~((k1 == 0) & (k2 == 0))
    modes = np.stack([k1[keep], k2[keep]], axis=1).astype(np.int64)
    keys = mode_keys(modes)
    order = np.argsort(keys, kind="stable")
    modes = modes[order]
    keys = keys[order]
    neg = np.searchsorted(keys, mode_keys(-modes))
    rep = (modes[:, 0] > 0) | ((modes[:, 0] == 0) & (modes[:, 1] > 0))
    mu = FOUR_PI_SQ * (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(np.float64)
    return ModeLattice(
        N=N,
        grid_size=M,
        modes=_readonly(modes),
        mu=_readonly(mu),
        neg_index=_readonly(neg),
        representative=_readonly(rep),
        keys=_readonly(keys),
    )


def lattice_with_grid(N: int, M: int) -> ModeLattice:
    if N < 1:
        raise ValueError(f"cutoff N must be >= 1, got {N}")
    if M < 2 * N + 2 or M % 2:
        raise ValueError(f"grid size M={M} must be even and >= 2N+2={2 * N + 2}")
    return _build_lattice(int(N), int(M))


def make_lattice(N: int, oversample: Union[int, float, Fraction] = 2) -> ModeLattice:
    """Lattice of all nonzero ``k`` with ``|k| <= N``.

    >>> make_lattice(1).modes.tolist()
    [[-1, 0], [0, -1], [0, 1], [1, 0]]
    """
    if int(N) != N or N < 1:
        raise ValueError(f"cutoff N must be a positive integer, got {N!r}")
    if Fraction(oversample) < 1:
        raise ValueError(f"oversample must be >= 1, got {oversample!r}")
    return lattice_with_grid(int(N), grid_size_for(int(N), oversample))


@lru_cache(maxsize=None)
def _half_spectrum_index(N: int, M: int):
    lat = _build_lattice(N, M)
    k = lat.modes
    # rfft2 stores columns k2 = 0..M/2; modes with k2 < 0 are read through -k.
    nonneg = k[:, 1] >= 0
    src = np.where(nonneg, np.arange(lat.size), lat.neg_index)
    kk = np.where(nonneg[:, None], k, -k)
    rows = np.mod(kk[:, 0], M)
    cols = kk[:, 1]
    return _readonly(rows), _readonly(cols), _readonly(~nonneg), _readonly(src)


class SpectralField:
    """Coefficients of a real mean-zero field on a :class:`ModeLattice`.

    Instances are treated as immutable; the coefficient array is made
    read-only on construction.
    """

    __slots__ = ("lattice", "coeffs")

    def __init__(self, lattice: ModeLattice, coeffs, *, check: bool = False):
        c = np.array(coeffs, dtype=np.complex128, copy=True)
        if c.shape != (lattice.size,):
            raise ValueError(
                f"expected {lattice.size} coefficients for N={lattice.N}, got shape {c.shape}"
            )
        if check:
            err = np.max(np.abs(c[lattice.neg_index] - np.conj(c)), initial=0.0)
            scale = max(np.max(np.abs(c), initial=0.0), 1e-300)
            if err > 1e-12 * scale:
                raise ValueError("coefficients are not Hermitian symmetric")
        c.flags.writeable = False
        self.lattice = lattice
        self.coeffs = c

    @classmethod
    def zeros(cls, lattice: ModeLattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.size, dtype=np.complex128))

    @classmethod
    def from_modes(cls, lattice: ModeLattice, amplitudes: dict) -> "SpectralField":
        """Field with ``u_k = a`` and ``u_{-k} = conj(a)`` for each ``{k: a}``."""
        c = np.zeros(lattice.size, dtype=np.complex128)
        for k, a in amplitudes.items():
            i = int(lattice.index_of(np.array(k)))
            c[i] = a
            c[lattice.neg_index[i]] = np.conj(a)
        return cls(lattice, c)

    @classmethod
    def random(cls, lattice: ModeLattice, rng: np.random.Generator, scale: float = 1.0):
        c = np.zeros(lattice.size, dtype=np.complex128)
        rep = lattice.representative
        m = int(rep.sum())
        c[rep] = scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
        c[lattice.neg_index[rep]] = np.conj(c[rep])
        return cls(lattice, c)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs[self.lattice.neg_index] - np.conj(self.coeffs)), initial=0.0))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField(N={self.lattice.N}, M={self.lattice.M})"


def _same_lattice(a: SpectralField, b: SpectralField) -> None:
    if a.lattice is not b.lattice and (a.lattice.N, a.lattice.M) != (b.lattice.N, b.lattice.M):
        raise ValueError("fields live on different lattices")


def project(f: SpectralField, N: int) -> SpectralField:
    """Orthogonal projection onto modes with ``|k| <= N`` (keeps the grid size)."""
    lat = f.lattice
    if N > lat.N:
        raise ValueError(f"cannot project N={lat.N} field onto larger cutoff {N}")
    if N == lat.N:
        return f
    target = lattice_with_grid(N, lat.M)
    return SpectralField(target, f.coeffs[lat.index_of(target.modes)])


def extend(f: SpectralField, lattice: ModeLattice) -> SpectralField:
    """Zero-extend ``f`` onto a lattice with a larger (or equal) cutoff."""
    if lattice.N < f.lattice.N:
        raise ValueError("target lattice is smaller than the field's lattice")
    if lattice.N == f.lattice.N:
        return f if lattice.M == f.lattice.M else SpectralField(lattice, f.coeffs)
    c = np.zeros(lattice.size, dtype=np.complex128)
    c[lattice.index_of(f.lattice.modes)] = f.coeffs
    return SpectralField(lattice, c)


def semigroup_factors(lattice: ModeLattice, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return np.exp(-t * lattice.mu**2)


def semigroup_apply(f: SpectralField, t: float) -> SpectralField:
    """``P_t f``: multiply each coefficient by ``exp(-t mu_k^2)``."""
    return SpectralField(f.lattice, f.coeffs * semigroup_factors(f.lattice, t))


def heat_kernel_coeffs(t: float, lattice: ModeLattice) -> SpectralField:
    """Coefficients of the truncated kernel ``p_t^N``; ``P_t^N f = p_t^N * f``."""
    if t <= 0:
        raise ValueError(f"kernel defined for t > 0 only, got {t}")
    return SpectralField(lattice, semigroup_factors(lattice, t).astype(np.complex128))


def convolve(kernel: SpectralField, f: SpectralField) -> SpectralField:
    """Convolution on T^2; diagonal in the orthonormal basis."""
    _same_lattice(kernel, f)
    return SpectralField(f.lattice, kernel.coeffs * f.coeffs)


def coeffs_to_grid(lattice: ModeLattice, coeffs: np.ndarray) -> np.ndarray:
    """Grid values for one coefficient vector or a stack of shape (..., K)."""
    M = lattice.M
    rows, cols, _, src = lattice.half_spectrum_index
    c = np.asarray(coeffs)
    # slot of a k2 < 0 mode is that of -k, which holds u_{-k}
    vals = c[..., src]
    half = np.zeros(c.shape[:-1] + (M, M // 2 + 1), dtype=np.complex128)
    half[..., rows, cols] = vals
    return sfft.irfft2(half, s=(M, M), norm="forward")


def grid_to_coeffs(lattice: ModeLattice, grid: np.ndarray) -> np.ndarray:
    M = lattice.M
    g = np.asarray(grid, dtype=np.float64)
    if g.shape[-2:] != (M, M):
        raise ValueError(f"grid shape {g.shape[-2:]} does not match lattice M={M}")
    half = sfft.rfft2(g, norm="forward")
    rows, cols, conj, _ = lattice.half_spectrum_index
    vals = half[..., rows, cols]
    return np.where(conj, np.conj(vals), vals)


def to_physical(f: SpectralField) -> np.ndarray:
    """Real values of ``f`` on the M x M grid ``(i/M, j/M)``."""
    return coeffs_to_grid(f.lattice, f.coeffs)


def from_physical(g: np.ndarray, lattice: ModeLattice) -> SpectralField:
    """Mean-zero Galerkin coefficients of grid data ``g`` on ``lattice``.

    The grid mean is discarded (the zero mode is not part of any
    lattice) and frequencies beyond ``lattice.N`` are dropped.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (lattice.M, lattice.M):
        raise ValueError(f"grid shape {g.shape} does not match lattice M={lattice.M}")
    return SpectralField(lattice, grid_to_coeffs(lattice, g - g.mean()))


def grid_points(M: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(M) / M
    return np.meshgrid(x, x, indexing="ij")


# -- snapshot binary format --------------------------------------------------

def write_snapshot(f: SpectralField, fh: Union[BinaryIO, str, Path]) -> None:
    """Append one field record: magic, u32 N, u32 M, u64 count, (re, im) f64 pairs."""
    if isinstance(fh, (str, Path)):
        with open(fh, "wb") as out:
            write_snapshot(f, out)
        return
    lat = f.lattice
    fh.write(_HEADER.pack(SNAPSHOT_MAGIC, lat.N, lat.M, lat.size))
    body = np.empty((lat.size, 2), dtype="<f8")
    body[:, 0] = f.coeffs.real
    body[:, 1] = f.coeffs.imag
    fh.write(body.tobytes())


def read_snapshot(fh: Union[BinaryIO, str, Path]) -> SpectralField:
    if isinstance(fh, (str, Path)):
        with open(fh, "rb") as src:
            return read_snapshot(src)
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise EOFError("truncated snapshot header")
    magic, N, M, count = _HEADER.unpack(head)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    lat = lattice_with_grid(N, M)
    if count != lat.size:
        raise ValueError(f"snapshot has {count} modes, lattice N={N} has {lat.size}")
    raw = fh.read(16 * count)
    if len(raw) != 16 * count:
        raise EOFError("truncated snapshot body")
    body = np.frombuffer(raw, dtype="<f8").reshape(count, 2)
    return SpectralField(lat, body[:, 0] + 1j * body[:, 1])


def read_snapshots(path: Union[str, Path]) -> list[SpectralField]:
    """Read every record of a multi-record snapshot file."""
    out = []
    size = Path(path).stat().st_size
    with open(path, "rb") as fh:
        while fh.tell() < size:
            out.append(read_snapshot(fh))
    return out


def write_snapshots(fields: Iterable[SpectralField], path: Union[str, Path]) -> None:
    with open(path, "wb") as fh:
        for f in fields:
            write_snapshot(f, fh)
