"""Target potentials, skew drift fields, and growth-condition diagnostics.

The sampling target is the probability measure pi with density proportional
to e^{-U(x)}, for an energy U on R^d or on the flat torus [0, 2pi)^d.  A
drift perturbation C accelerates the reversible Langevin dynamics without
changing pi whenever it is weighted divergence-free, i.e.

    div(C e^{-U}) = 0,   equivalently   div C = C . grad U  pointwise.

The canonical construction is C = Q grad U for an antisymmetric matrix Q,
which satisfies the identity exactly: div(Q grad U) = tr(Q D2U) = 0 because
Q is antisymmetric and the Hessian D2U is symmetric, and (Q grad U).grad U
vanishes for the same reason.

All evaluators are vectorized over leading axes: ``eval`` maps (..., dim)
arrays to (...) energies, ``grad`` to (..., dim) and ``hess`` to
(..., dim, dim).  Instances are immutable after construction and safe to
share between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

Array = np.ndarray


class SpaceKind(Enum):
    EUCLIDEAN = "euclidean"
    FLAT_TORUS = "flat_torus"


class DriftKind(Enum):
    ZERO = "zero"
    QGRADU = "qgradu"
    CUSTOM = "custom"


@dataclass
class Potential:
    """Energy U with analytic gradient and Hessian.

    Analytic derivatives are required (the integrator and the grid oracle
    need them cheap and exact); finite differences are used only as
    cross-checks, see :func:`validate_potential`.
    """

    dim: int
    eval: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    space_kind: SpaceKind
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


@dataclass
class DriftField:
    """Perturbation drift C with its analytic divergence.

    For ``kind == DriftKind.QGRADU`` the stored ``q`` is exactly
    antisymmetric and ``divergence`` returns exactly zero.
    """

    dim: int
    eval: Callable[[Array], Array]
    divergence: Callable[[Array], Array]
    kind: DriftKind
    q: Array | None = None
    base: Potential | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


@dataclass
class AssumptionReport:
    """Probe-set diagnostics for the conditions the theory rests on.

    The checks are evaluated on a finite probe set (plus radial rays for the
    gradient-growth trend) and are therefore *probe-verified*, never proven.

    a3_residual
        max over probes of ``|div C - C . grad U|``; this equals
        ``e^U * |div(C e^{-U})|`` pointwise, so zero residual means the
        perturbation preserves pi.
    a4_margin
        for each epsilon, the smallest constant c such that
        ``|C . grad U| + |D2U|_F <= eps |grad U|^2 + c`` on the probes
        (negative when the left side is dominated outright).
    a5_ratio
        sup over probes of ``|C| / (|grad U| + 1)``; finite K certifies the
        drift is dominated by the gradient.
    a6_trend
        True when ``|grad U|`` is non-decreasing along sampled outward rays
        (Euclidean spaces only; None on the torus where growth is vacuous).
    """

    a3_residual: float
    a4_margin: dict[float, float]
    a5_ratio: float
    a6_trend: bool | None
    probe_points: Array


def make_qgradu_drift(q: Array, u: Potential) -> DriftField:
    """Build the drift C(x) = Q grad U(x) for an antisymmetric matrix Q.

    The divergence of this field is tr(Q D2U) which vanishes identically,
    so the returned field's ``divergence`` is exactly zero.  Rejects a
    matrix with any nonzero entry in Q + Q^T, and dimension mismatches.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (u.dim, u.dim):
        raise ValueError(f"q has shape {q.shape}, expected ({u.dim}, {u.dim})")
    if np.max(np.abs(q + q.T)) != 0.0:
        raise ValueError("q is not antisymmetric: q + q.T has a nonzero entry")
    q = q.copy()
    q.setflags(write=False)

    def _eval(x, _q=q, _grad=u.grad):
        return _grad(x) @ _q.T

    def _div(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return DriftField(
        dim=u.dim, eval=_eval, divergence=_div, kind=DriftKind.QGRADU,
        q=q, base=u, name=f"qgradu({u.name})",
    )


def zero_drift(dim: int) -> DriftField:
    """The trivial perturbation C = 0."""

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def _div(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return DriftField(dim=dim, eval=_eval, divergence=_div,
                      kind=DriftKind.ZERO, name="zero")


def stationary_density_unnorm(u: Potential, x: Array) -> Array:
    """Unnormalized stationary density e^{-U(x)}; strictly positive."""
    return np.exp(-u.eval(np.asarray(x, dtype=float)))


def check_assumptions(
    u: Potential,
    c: DriftField,
    probes: Array,
    epsilons: Sequence[float] = (0.01, 0.1, 1.0),
    n_rays: int = 8,
    ray_radii: Array | None = None,
    seed: int = 0,
) -> AssumptionReport:
    """Evaluate the drift/growth diagnostics on a probe set.

    Purely diagnostic: the report never raises on an assumption failure,
    only on a dimension mismatch.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("probe set is empty")
    if probes.shape[1] != u.dim or c.dim != u.dim:
        raise ValueError(
            f"dimension mismatch: probes {probes.shape[1]}, U {u.dim}, C {c.dim}"
        )

    grad = u.grad(probes)
    cval = c.eval(probes)
    div = c.divergence(probes)
    hess = u.hess(probes)

    a3 = float(np.max(np.abs(div - np.sum(cval * grad, axis=-1))))

    grad_norm = np.linalg.norm(grad, axis=-1)
    hess_norm = np.linalg.norm(hess, axis=(-2, -1))  # Frobenius
    lhs = np.abs(np.sum(cval * grad, axis=-1)) + hess_norm
    a4 = {
        float(eps): float(np.max(lhs - eps * grad_norm**2)) for eps in epsilons
    }

    a5 = float(np.max(np.linalg.norm(cval, axis=-1) / (grad_norm + 1.0)))

    if u.space_kind is SpaceKind.FLAT_TORUS:
        a6 = None  # compact space: gradient growth at infinity is vacuous
    else:
        if ray_radii is None:
            ray_radii = np.geomspace(1.0, 50.0, 12)
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_rays, u.dim))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        ok = True
        for d in dirs:
            along = np.linalg.norm(u.grad(np.outer(ray_radii, d)), axis=-1)
            if np.any(np.diff(along) < -1e-9 * (1.0 + np.max(along))):
                ok = False
                break
        a6 = ok

    return AssumptionReport(
        a3_residual=a3, a4_margin=a4, a5_ratio=a5, a6_trend=a6,
        probe_points=probes,
    )


def validate_potential(
    u: Potential,
    probes: Array | None = None,
    seed: int = 0,
    fd_step: float = 1e-4,
    grad_rtol: float = 1e-5,
    hess_sym_rtol: float = 1e-12,
) -> None:
    """Cross-check analytic derivatives against central finite differences.

    Raises ValueError when the gradient disagrees with the finite-difference
    gradient beyond ``grad_rtol`` (relative, at step ``fd_step``) or when the
    Hessian fails symmetry at ``hess_sym_rtol`` relative.
    """
    if probes is None:
        rng = np.random.default_rng(seed)
        if u.space_kind is SpaceKind.FLAT_TORUS:
            probes = rng.uniform(0.0, 2.0 * np.pi, size=(16, u.dim))
        else:
            probes = rng.standard_normal((16, u.dim))
    probes = np.atleast_2d(np.asarray(probes, dtype=float))

    hess = u.hess(probes)
    scale = np.maximum(np.linalg.norm(hess, axis=(-2, -1)), 1.0)
    asym = np.linalg.norm(hess - np.swapaxes(hess, -2, -1), axis=(-2, -1))
    if np.any(asym > hess_sym_rtol * scale):
        raise ValueError(
            f"hessian asymmetry {np.max(asym / scale):.3e} exceeds {hess_sym_rtol:.1e}"
        )

    grad = u.grad(probes)
    fd = np.empty_like(grad)
    for ax in range(u.dim):
        e = np.zeros(u.dim)
        e[ax] = fd_step
        fd[:, ax] = (u.eval(probes + e) - u.eval(probes - e)) / (2.0 * fd_step)
    denom = np.maximum(np.linalg.norm(grad, axis=-1), 1.0)
    err = np.linalg.norm(grad - fd, axis=-1) / denom
    if np.any(err > grad_rtol):
        raise ValueError(
            f"gradient mismatch {np.max(err):.3e} vs finite differences "
            f"(rtol {grad_rtol:.1e}, step {fd_step:.1e})"
        )


def validate_drift(
    c: DriftField,
    probes: Array,
    fd_step: float = 1e-4,
    div_rtol: float = 1e-5,
) -> None:
    """Check the stored divergence against a finite-difference divergence."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    div = c.divergence(probes)
    fd = np.zeros(probes.shape[0])
    for ax in range(c.dim):
        e = np.zeros(c.dim)
        e[ax] = fd_step
        fd += (c.eval(probes + e)[:, ax] - c.eval(probes - e)[:, ax]) / (2.0 * fd_step)
    scale = np.maximum(np.abs(div), np.max(np.abs(fd)) + 1.0)
    if np.any(np.abs(div - fd) > div_rtol * scale):
        raise ValueError(
            f"divergence mismatch {np.max(np.abs(div - fd) / scale):.3e} "
            f"vs finite differences (rtol {div_rtol:.1e})"
        )


# --- built-in potential catalog -------------------------------------------

def gaussian_potential(dim: int, cov: Array | float | None = None) -> Potential:
    """Gaussian energy U(x) = x . inv(cov) x / 2, so pi = N(0, cov)."""
    if cov is None:
        inv_cov = np.eye(dim)
        cov_arr = np.eye(dim)
    else:
        cov_arr = np.asarray(cov, dtype=float)
        if cov_arr.ndim == 0:
            cov_arr = float(cov_arr) * np.eye(dim)
        elif cov_arr.ndim == 1:
            cov_arr = np.diag(cov_arr)
        if cov_arr.shape != (dim, dim):
            raise ValueError(f"cov has shape {cov_arr.shape}, expected ({dim}, {dim})")
        inv_cov = np.linalg.inv(cov_arr)
        inv_cov = (inv_cov + inv_cov.T) / 2.0

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum((x @ inv_cov) * x, axis=-1)

    def _grad(x):
        x = np.asarray(x, dtype=float)
        return x @ inv_cov

    def _hess(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(inv_cov, x.shape[:-1] + (dim, dim)).copy()

    return Potential(dim=dim, eval=_eval, grad=_grad, hess=_hess,
                     space_kind=SpaceKind.EUCLIDEAN, name="gaussian",
                     params={"dim": dim, "cov": cov_arr.tolist()})


def double_well_2d(barrier: float = 1.0) -> Potential:
    """Two-well energy U(x) = b (x1^2 - 1)^2 + x2^2 / 2 on R^2."""
    b = float(barrier)
    if b <= 0:
        raise ValueError("barrier must be positive")

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return b * (x[..., 0] ** 2 - 1.0) ** 2 + 0.5 * x[..., 1] ** 2

    def _grad(x):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        g[..., 0] = 4.0 * b * x[..., 0] * (x[..., 0] ** 2 - 1.0)
        g[..., 1] = x[..., 1]
        return g

    def _hess(x):
        x = np.asarray(x, dtype=float)
        h = np.zeros(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = 4.0 * b * (3.0 * x[..., 0] ** 2 - 1.0)
        h[..., 1, 1] = 1.0
        return h

    return Potential(dim=2, eval=_eval, grad=_grad, hess=_hess,
                     space_kind=SpaceKind.EUCLIDEAN, name="double_well_2d",
                     params={"barrier": b})


def torus_cosine(dim: int, amplitude: float | Sequence[float] = 1.0) -> Potential:
    """Cosine energy U(x) = sum_i a_i cos(x_i) on the flat torus [0, 2pi)^dim.

    ``amplitude`` may be a scalar (same on every axis) or one value per axis;
    a zero entry switches that axis off, e.g. ``amplitude=(1, 0)`` gives an
    energy depending on the first coordinate only.
    """
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (dim,)).copy()

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return np.sum(amp * np.cos(x), axis=-1)

    def _grad(x):
        x = np.asarray(x, dtype=float)
        return -amp * np.sin(x)

    def _hess(x):
        x = np.asarray(x, dtype=float)
        h = np.zeros(x.shape[:-1] + (dim, dim))
        diag = -amp * np.cos(x)
        for i in range(dim):
            h[..., i, i] = diag[..., i]
        return h

    return Potential(dim=dim, eval=_eval, grad=_grad, hess=_hess,
                     space_kind=SpaceKind.FLAT_TORUS, name="torus_cosine",
                     params={"dim": dim, "amplitude": amp.tolist()})


POTENTIAL_CATALOG: Mapping[str, Callable[..., Potential]] = {
    "gaussian": gaussian_potential,
    "double_well_2d": double_well_2d,
    "torus_cosine": torus_cosine,
}


def make_potential(name: str, **params) -> Potential:
    """Instantiate a catalog potential by name (the CLI entry point)."""
    try:
        factory = POTENTIAL_CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown potential {name!r}; catalog: {sorted(POTENTIAL_CATALOG)}"
        ) from None
    return factory(**params)
