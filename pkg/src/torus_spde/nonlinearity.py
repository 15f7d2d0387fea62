"""Bounded, Lipschitz nonlinearities and their pseudo-spectral evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .torus_spectral import SpectralField, coeffs_to_grid, grid_to_coeffs

KINDS = ("zero", "constant", "sine", "tanh", "rational")
_N_PARAMS = {"zero": 0, "constant": 1, "sine": 1, "tanh": 1, "rational": 0}


class NonFiniteStateError(FloatingPointError):
    """Raised when a state evaluates to inf/nan on the physical grid."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """``kind`` plus its real parameters.

    ``sine(a)`` is ``sin(a u)``, ``tanh(a)`` is ``tanh(a u)``,
    ``rational`` is ``u / (1 + u^2)`` and ``constant(c)`` is ``c``.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; expected one of {KINDS}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _N_PARAMS[self.kind]:
            raise ValueError(f"{self.kind} takes {_N_PARAMS[self.kind]} parameter(s), got {len(params)}")
        object.__setattr__(self, "params", params)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, c: float):
        return cls("constant", (c,))

    @classmethod
    def sine(cls, a: float = 1.0):
        return cls("sine", (a,))

    @classmethod
    def tanh(cls, a: float = 1.0):
        return cls("tanh", (a,))

    @classmethod
    def rational(cls):
        return cls("rational")

    @classmethod
    def parse(cls, value) -> "NonlinearitySpec":
        """Accept ``"sine(2)"``, ``"zero"``, ``["sine", 2]`` or ``{"kind": .., "params": [..]}``."""
        if isinstance(value, NonlinearitySpec):
            return value
        if isinstance(value, dict):
            return cls(value["kind"], tuple(value.get("params", ())))
        if isinstance(value, (list, tuple)):
            return cls(value[0], tuple(value[1:]))
        text = str(value).strip()
        if "(" in text:
            if not text.endswith(")"):
                raise ValueError(f"cannot parse nonlinearity {value!r}")
            kind, rest = text[:-1].split("(", 1)
            params = tuple(float(p) for p in rest.split(",") if p.strip())
            return cls(kind.strip(), params)
        return cls(text)

    def to_config(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"

    def pointwise(self) -> Callable[[np.ndarray], np.ndarray]:
        kind, p = self.kind, self.params
        if kind == "zero":
            return np.zeros_like
        if kind == "constant":
            return lambda u: np.full_like(u, p[0])
        if kind == "sine":
            return lambda u: np.sin(p[0] * u)
        if kind == "tanh":
            return lambda u: np.tanh(p[0] * u)
        return lambda u: u / (1.0 + u * u)

    def sup_norm(self) -> float:
        """``||G||_inf`` over the real line."""
        kind, p = self.kind, self.params
        if kind == "zero":
            return 0.0
        if kind == "constant":
            return abs(p[0])
        if kind in ("sine", "tanh"):
            return 0.0 if p[0] == 0 else 1.0
        return 0.5


def lipschitz_bound(spec: NonlinearitySpec) -> float:
    """Exact ``||G'||_inf`` for the catalogue member."""
    if spec.kind in ("zero", "constant"):
        return 0.0
    if spec.kind in ("sine", "tanh"):
        return abs(spec.params[0])
    # d/du u/(1+u^2) = (1-u^2)/(1+u^2)^2, maximal in modulus at u = 0
    return 1.0


def eval_G(spec: NonlinearitySpec, f: SpectralField) -> SpectralField:
    """``Pi_N G(u)`` in the mean-zero frame by oversampled collocation."""
    return SpectralField(f.lattice, eval_G_coeffs(spec, f.lattice, f.coeffs))


def eval_G_coeffs(spec: NonlinearitySpec, lattice, coeffs: np.ndarray) -> np.ndarray:
    if spec.kind in ("zero", "constant"):
        return np.zeros(np.shape(coeffs), dtype=np.complex128)
    grid = coeffs_to_grid(lattice, coeffs)
    if not np.all(np.isfinite(grid)):
        raise NonFiniteStateError("state has non-finite values on the physical grid")
    # zero mode is not in the lattice, so the output is mean-zero by construction
    return grid_to_coeffs(lattice, spec.pointwise()(grid))


def catalogue() -> Sequence[NonlinearitySpec]:
    return (
        NonlinearitySpec.zero(),
        NonlinearitySpec.constant(0.7),
        NonlinearitySpec.sine(1.0),
        NonlinearitySpec.sine(2.0),
        NonlinearitySpec.tanh(1.5),
        NonlinearitySpec.rational(),
    )
