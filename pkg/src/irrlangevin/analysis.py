"""Equality detection, worst-case comparison, and growing-drift sweeps.

Everything here is a consequence of the spectral form of the perturbed
variance: with atoms (y_j, w_j) of the spectral weight of g = L^{-1/2} f
under B = i V A V,

    sigma2_{k}(f) = 2 sum_j w_j / (1 + k^2 y_j^2),

which is non-increasing in the drift scale k, tends to twice the mass at
y = 0 (the kernel component of g), and equals the reversible value exactly
when the drift operator annihilates L^{-1} f.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .spectral_oracle import (
    EIGENVALUE_MERGE_TOL,
    KERNEL_FLAG_RTOL,
    DiscretizedSystem,
    SpectralMeasure,
    _measure_from_eigh,
)

Array = np.ndarray


@dataclass
class KSweepResult:
    """Variance of one observable across drift scales k.

    ``limit_prediction`` is twice the spectral mass at zero (the k -> inf
    value); ``b_gap`` is the distance from zero to the nearest atom carrying
    weight, or None when all weight sits at zero.
    """

    k_values: Array
    sigma2_values: Array
    limit_prediction: float
    b_gap: float | None
    measure: SpectralMeasure  # atoms at unit scale, reused for every k


@dataclass
class WorstCaseResult:
    """Suprema of the variances over unit-norm observables.

    ``sup_rev`` is 2 / lambda with lambda the smallest mean-zero eigenvalue
    of L.  ``sup_irr`` maximizes the quadratic form of the symmetrized
    resolvent; ``strict`` records a genuine gap.  The principal angles
    between the lambda-eigenspace of L and the numerical kernel of A are
    kept so borderline intersection counts can be audited.
    """

    sup_rev: float
    sup_irr: float
    strict: bool
    kernel_intersection_dim: int
    lambda_min: float
    l_eigenspace_dim: int
    a_kernel_dim: int
    principal_angles: Array


@dataclass
class EqualityCertificate:
    equal: bool
    witness: Array  # state-space solution of L h = f
    residual: float  # |A h|_pi relative to |f|_pi


def sweep_k(sys_builder: Callable[[float], DiscretizedSystem], f: Array,
            k_values: Sequence[float],
            weight_tol: float = 1e-12) -> KSweepResult:
    """Evaluate sigma2_{k}(f) over drift scales by one eigendecomposition.

    ``sys_builder`` maps a drift scale to the discretized system; only the
    unit scale is built, because B scales linearly in k so every value
    follows from the same atoms.  ``k_values`` must be sorted ascending and
    start at 0 (whose entry reproduces the reversible variance).
    """
    k_arr = np.asarray(k_values, dtype=float)
    if k_arr.ndim != 1 or len(k_arr) == 0:
        raise ValueError("k_values must be a nonempty 1-d sequence")
    if np.any(np.diff(k_arr) <= 0):
        raise ValueError("k_values must be sorted strictly ascending")
    if k_arr[0] != 0.0:
        raise ValueError("k_values must include k = 0 as the first entry")

    sys = sys_builder(1.0)
    f = np.asarray(f, dtype=float)
    f_centered, _ = sys.center(f)
    fr = sys.to_mean_zero(f_centered)
    g = sys.v_matrix @ fr
    eigvals, eigvecs = sys._b_eigh
    measure = _measure_from_eigh(eigvals, eigvecs, g)

    locs = measure.locations
    wts = measure.weights
    sigma2 = 2.0 * np.array(
        [np.sum(wts / (1.0 + (k * locs) ** 2)) for k in k_arr]
    )

    at_zero = np.abs(locs) <= EIGENVALUE_MERGE_TOL
    limit = float(2.0 * np.sum(wts[at_zero]))

    carrying = (~at_zero) & (wts > weight_tol * max(measure.total_mass, 1e-300))
    b_gap = float(np.min(np.abs(locs[carrying]))) if np.any(carrying) else None

    return KSweepResult(k_values=k_arr, sigma2_values=sigma2,
                        limit_prediction=limit, b_gap=b_gap, measure=measure)


def worst_case(sys: DiscretizedSystem, angle_tol: float = 1e-8) -> WorstCaseResult:
    """Compare the worst observables of the two dynamics.

    For real f, sigma2_irr(f) = <(M + M*) f, f>_pi with M the inverse of the
    perturbed operator, so the supremum over unit-norm f is the largest
    eigenvalue of the symmetrized M, times 2 -- no optimization loop needed.
    The intersection dimension counts principal angles below ``angle_tol``
    between the numerical kernels of (L - lambda) and A.
    """
    lr, ar = sys.restricted
    w, vec = sys._l_eigh
    lam = float(w[0])
    sup_rev = 2.0 / lam

    m = scipy.linalg.lu_solve(sys._lc_lu, np.eye(lr.shape[0]))
    sym = (m + m.T) / 2.0
    sup_irr = float(2.0 * np.linalg.eigvalsh(sym)[-1])

    eig_mask = np.abs(w - lam) <= 1e-8 * max(lam, 1.0)
    l_space = vec[:, eig_mask]
    a_kernel = scipy.linalg.null_space(ar, rcond=1e-10)

    if a_kernel.shape[1] == 0:
        angles = np.asarray([])
        intersection = 0
    else:
        angles = scipy.linalg.subspace_angles(l_space, a_kernel)
        intersection = int(np.sum(np.sin(angles) <= angle_tol))

    return WorstCaseResult(
        sup_rev=sup_rev, sup_irr=sup_irr,
        strict=bool(sup_rev - sup_irr > 1e-9),
        kernel_intersection_dim=intersection, lambda_min=lam,
        l_eigenspace_dim=int(l_space.shape[1]),
        a_kernel_dim=int(a_kernel.shape[1]), principal_angles=angles,
    )


def equality_certificate(sys: DiscretizedSystem, f: Array,
                         rtol: float = KERNEL_FLAG_RTOL) -> EqualityCertificate:
    """Decide sigma2_irr(f) = sigma2_rev(f) by testing A (L^{-1} f) = 0.

    Returns the solve h = L^{-1} f as the witness either way; ``equal`` is
    True when |A h|_pi <= rtol |f|_pi.  Consistent with ``kernel_flag`` and
    ``equality_gap`` of :func:`irrlangevin.spectral_oracle.variance_report`.
    """
    f = np.asarray(f, dtype=float)
    f_centered, _ = sys.center(f)
    fr = sys.to_mean_zero(f_centered)
    _, ar = sys.restricted
    h = scipy.linalg.lu_solve(sys._l_lu, fr)
    fr_norm = float(np.linalg.norm(fr))
    residual = float(np.linalg.norm(ar @ h)) / max(fr_norm, 1e-300)
    return EqualityCertificate(
        equal=bool(residual <= rtol),
        witness=sys.from_mean_zero(h),
        residual=residual,
    )
