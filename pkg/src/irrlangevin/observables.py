"""Named observables addressable from the command line.

Three kinds are understood:

* coordinates       ``x1``, ``x2``, ...
* monomials         products of coordinate powers, e.g. ``x1^2*x2``
* Fourier modes     ``cos1``, ``sin2``, or with a harmonic ``cos1:3``
                    (meaning cos(3 x_1) on the torus)

Monomials vectorize on both oracle backends; Fourier modes only on the
torus grid (they are not polynomials, so the Galerkin truncation would not
represent them exactly).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral_oracle import (
    DiscretizedSystem,
    GaussianLinear,
    TorusGrid,
    hermite_coefficients,
)

Array = np.ndarray

_MONO_FACTOR = re.compile(r"^x(\d+)(?:\^(\d+))?$")
_FOURIER = re.compile(r"^(cos|sin)(\d+)(?::(\d+))?$")


@dataclass
class Observable:
    name: str
    fn: Callable[[Array], Array]  # (..., dim) -> (...)
    kind: str  # "monomial" | "fourier"
    degree: int | None = None  # total degree when polynomial


def parse_observable(spec: str, dim: int) -> Observable:
    """Turn an observable name into a vectorized callable."""
    text = spec.strip().lower()
    if not text:
        raise ValueError("empty observable spec")

    match = _FOURIER.match(text)
    if match:
        trig, axis_s, harmonic_s = match.groups()
        axis = int(axis_s) - 1
        harmonic = int(harmonic_s) if harmonic_s else 1
        if not 0 <= axis < dim:
            raise ValueError(f"observable {spec!r}: axis out of range for dim {dim}")
        if harmonic < 1:
            raise ValueError(f"observable {spec!r}: harmonic must be >= 1")
        base = np.cos if trig == "cos" else np.sin

        def fn(x, _axis=axis, _h=harmonic, _base=base):
            x = np.asarray(x, dtype=float)
            return _base(_h * x[..., _axis])

        return Observable(name=text, fn=fn, kind="fourier")

    powers: dict[int, int] = {}
    for factor in text.split("*"):
        match = _MONO_FACTOR.match(factor.strip())
        if not match:
            raise ValueError(
                f"cannot parse observable {spec!r}; expected a coordinate "
                "monomial like 'x1' or 'x1^2*x2', or a Fourier mode like 'cos1'"
            )
        axis = int(match.group(1)) - 1
        power = int(match.group(2)) if match.group(2) else 1
        if not 0 <= axis < dim:
            raise ValueError(f"observable {spec!r}: axis out of range for dim {dim}")
        if power < 1:
            raise ValueError(f"observable {spec!r}: powers must be >= 1")
        powers[axis] = powers.get(axis, 0) + power

    def fn(x, _powers=tuple(powers.items())):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for axis, power in _powers:
            out = out * x[..., axis] ** power
        return out

    return Observable(name=text, fn=fn, kind="monomial",
                      degree=sum(powers.values()))


def observable_vector(sys: DiscretizedSystem, obs: Observable) -> Array:
    """State-space representation of an observable on an oracle backend."""
    if isinstance(sys.backend, TorusGrid):
        return np.asarray(obs.fn(sys.points), dtype=float)
    if isinstance(sys.backend, GaussianLinear):
        if obs.kind != "monomial":
            raise ValueError(
                f"observable {obs.name!r} is not polynomial; the Gaussian "
                "backend represents monomials only"
            )
        basis_degree = max(sum(a) for a in sys.multi_indices)
        if obs.degree > basis_degree:
            raise ValueError(
                f"observable degree {obs.degree} exceeds the basis degree "
                f"{basis_degree}; raise --degree"
            )
        return hermite_coefficients(sys, obs.fn, poly_degree=obs.degree)
    raise TypeError(f"unknown backend {type(sys.backend).__name__}")
