"""Estimators for the asymptotic variance of Langevin time averages.

For an ergodic chain and a square-integrable observable f, the scaled
time average sqrt(t) ( (1/t) int_0^t f(X_s) ds - mean ) tends to a centered
Gaussian whose variance sigma^2(f) these estimators target.  Two routes:

* batch means -- one long trajectory cut into contiguous blocks; the
  variance of block averages, scaled by the block length, estimates
  sigma^2(f).
* replicated CLT -- many independent chains; the across-chain variance of
  the full time averages, scaled by the horizon, estimates sigma^2(f)
  directly from the limit theorem.

Both center with the empirical mean (the target mean is generally unknown
up to normalization) and report the centering value.  Estimates are exact
zeros for constant observables.  A chi-square approximation with
(n_batches - 1), resp. (n_chains - 1), degrees of freedom provides the
standard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .model import DriftField, Potential
from .sde_sim import SimConfig, Trajectory, chain_time_averages

Array = np.ndarray
Observable = Callable[[Array], Array]


class EstimatorMethod(Enum):
    BATCH_MEANS = "batch_means"
    OVERLAPPING_BATCH_MEANS = "overlapping_batch_means"
    REPLICATED_CLT = "replicated_clt"


@dataclass
class VarianceEstimate:
    point_estimate: float
    stderr: float
    method: EstimatorMethod
    batch_length: float
    total_time: float
    n_chains: int
    center: float  # empirical mean removed before squaring
    dt: float
    bias_flagged: bool | None = None  # set by the step-halving recheck
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.point_estimate < 0:
            raise ValueError("point_estimate must be nonnegative")
        if not np.isfinite(self.stderr):
            raise ValueError("stderr must be finite")


def _left_endpoint_values(traj: Trajectory, f: Observable) -> Array:
    if traj.thin != 1:
        raise ValueError(
            "batch estimators need an unthinned trajectory (thin == 1); "
            f"got thin={traj.thin}"
        )
    return np.asarray(f(traj.states[:-1]), dtype=float)


def batch_means(traj: Trajectory, f: Observable,
                batch_length: float | None = None,
                min_batches: int = 20) -> VarianceEstimate:
    """Non-overlapping batch-means estimate from a single trajectory.

    ``batch_length`` defaults to sqrt(total_time), the usual
    mean-squared-error-optimal growth rate.  The post-burn-in horizon must
    cover at least ``min_batches`` batches (default 20; lowering it is for
    didactic two-batch computations, not production use).
    """
    if min_batches < 2:
        raise ValueError("min_batches must be at least 2")
    values = _left_endpoint_values(traj, f)
    dt = traj.step_size
    total = len(values) * dt
    if batch_length is None:
        batch_length = float(np.sqrt(total))
    if batch_length <= 0:
        raise ValueError("batch_length must be positive")
    if total < min_batches * batch_length:
        raise ValueError(
            f"horizon {total:g} too short for batch length {batch_length:g}: "
            f"need at least {min_batches} batches, i.e. a horizon of "
            f"{min_batches * batch_length:g}"
        )
    steps_per_batch = max(int(round(batch_length / dt)), 1)
    n_batches = len(values) // steps_per_batch
    used = values[: n_batches * steps_per_batch]
    means = used.reshape(n_batches, steps_per_batch).mean(axis=1)
    actual_b = steps_per_batch * dt

    center = float(used.mean())
    if np.ptp(used) == 0.0 or np.ptp(means) == 0.0:
        estimate = 0.0
    else:
        estimate = float(actual_b * np.var(means, ddof=1))
    stderr = estimate * np.sqrt(2.0 / (n_batches - 1))
    return VarianceEstimate(
        point_estimate=estimate, stderr=float(stderr),
        method=EstimatorMethod.BATCH_MEANS, batch_length=float(actual_b),
        total_time=float(n_batches * actual_b), n_chains=1, center=center,
        dt=dt, diagnostics={"n_batches": n_batches},
    )


def overlapping_batch_means(traj: Trajectory, f: Observable,
                            batch_length: float | None = None) -> VarianceEstimate:
    """Overlapping variant: every window of the batch length is a batch.

    Smaller variance than plain batch means at the same batch length; same
    bias.  Degrees of freedom for the standard error follow the effective
    count 1.5 * total / batch_length.
    """
    values = _left_endpoint_values(traj, f)
    dt = traj.step_size
    total = len(values) * dt
    if batch_length is None:
        batch_length = float(np.sqrt(total))
    if batch_length <= 0:
        raise ValueError("batch_length must be positive")
    if total < 20.0 * batch_length:
        raise ValueError(
            f"horizon {total:g} too short for batch length {batch_length:g}: "
            f"need at least 20 batches, i.e. a horizon of {20.0 * batch_length:g}"
        )
    b = max(int(round(batch_length / dt)), 1)
    n = len(values)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    means = (csum[b:] - csum[:-b]) / b  # n - b + 1 overlapping windows
    center = float(values.mean())
    dev = means - center
    if np.ptp(values) == 0.0:
        estimate = 0.0
    else:
        estimate = float(dt * n * b * np.sum(dev**2) / ((n - b) * (n - b + 1)))
    dof = max(int(round(1.5 * n / b)) - 1, 1)
    stderr = estimate * np.sqrt(2.0 / dof)
    return VarianceEstimate(
        point_estimate=estimate, stderr=float(stderr),
        method=EstimatorMethod.OVERLAPPING_BATCH_MEANS,
        batch_length=float(b * dt), total_time=float(total), n_chains=1,
        center=center, dt=dt, diagnostics={"n_windows": len(means)},
    )


def _normality_diagnostics(averages: Array) -> dict:
    """Standardized skewness and excess kurtosis of the chain averages."""
    n = len(averages)
    dev = averages - averages.mean()
    m2 = float(np.mean(dev**2))
    if m2 == 0.0:
        return {"degenerate": True, "skewness_z": 0.0, "kurtosis_z": 0.0,
                "normality_meaningful": False}
    skew = float(np.mean(dev**3)) / m2**1.5
    kurt = float(np.mean(dev**4)) / m2**2 - 3.0
    return {
        "degenerate": False,
        "skewness_z": skew / np.sqrt(6.0 / n),
        "kurtosis_z": kurt / np.sqrt(24.0 / n),
        "normality_meaningful": n >= 30,
    }


def replicated_clt(u: Potential, c: DriftField, f: Observable, cfg: SimConfig,
                   n_chains: int, check_bias: bool = False) -> VarianceEstimate:
    """Across-chain estimate from ``n_chains`` independent replicas.

    Chains are seeded ``cfg.seed, cfg.seed + 1, ...``.  The estimate is the
    horizon times the sample variance of the per-chain time averages of f,
    centered at the cross-chain mean.  A diverging chain raises
    DivergenceError carrying its seed.  With ``check_bias`` the run is
    repeated at half the step size and the estimate is flagged when it moves
    by more than one standard error.
    """
    averages, total_time = chain_time_averages(u, c, f, cfg, n_chains)
    estimate, stderr, center, diags = _clt_reduce(averages, total_time)
    out = VarianceEstimate(
        point_estimate=estimate, stderr=stderr,
        method=EstimatorMethod.REPLICATED_CLT, batch_length=total_time,
        total_time=total_time, n_chains=n_chains, center=center,
        dt=cfg.step_size, diagnostics=diags,
    )
    if check_bias:
        half = SimConfig(
            step_size=cfg.step_size / 2.0, n_steps=cfg.n_steps * 2,
            initial_point=cfg.initial_point,
            burn_in_steps=cfg.burn_in_steps * 2, seed=cfg.seed,
            perturbation_scale=cfg.perturbation_scale,
        )
        averages_h, total_h = chain_time_averages(u, c, f, half, n_chains)
        est_h, _, _, _ = _clt_reduce(averages_h, total_h)
        out.bias_flagged = bool(abs(est_h - estimate) > max(stderr, 1e-300))
        out.diagnostics["estimate_half_dt"] = est_h
    return out


def _clt_reduce(averages: Array, total_time: float):
    """Combine chain averages into (estimate, stderr, center, diagnostics).

    Associative and order-insensitive up to floating-point reassociation
    (relative tolerance about 1e-12 under permutations of the chains).
    """
    n = len(averages)
    center = float(averages.mean())
    if n < 2 or np.ptp(averages) == 0.0:
        estimate = 0.0
    else:
        estimate = float(total_time * np.var(averages, ddof=1))
    stderr = estimate * np.sqrt(2.0 / max(n - 1, 1))
    return estimate, float(stderr), center, _normality_diagnostics(averages)
