"""Reproducible acceptance matrix: every release gate in one table.

Each criterion runner returns rows of (expected, observed, tolerance,
pass/fail).  Closed-form targets come from the Gaussian rotation benchmark
(sigma2 = 2 / (1 + k^2) for f = x1, derived in
docs/ou_variance_derivation.md); structural gates check the discretized
operators directly.  The two Monte Carlo gates are stochastic but pinned
to a fixed seed bank, so the whole table is deterministic.

``run_benchmark`` executes the matrix (optionally a subset) and is what
``irrlangevin reproduce-benchmark`` calls; tolerance overrides exist so the
harness itself can be tested (a corrupted tolerance must turn the table
red).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import sweep_k, worst_case
from .mc_variance import replicated_clt
from .model import gaussian_potential, make_qgradu_drift, torus_cosine
from .sde_sim import SimConfig
from .spectral_oracle import (
    asymptotic_variances,
    build_b_operator,
    discretize_gaussian_linear,
    discretize_torus,
    generator_gaps,
    variance_report,
)

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])

OBSERVABLE_SEED = 20250810
MC_SEED_BANK = {0.0: 20250801, 1.0: 20250802}

TOLERANCES: dict[str, float] = {
    "C1_slack": 1e-10,
    "C2_value": 1e-9,
    "C3_route": 1e-8,
    "C4_structure": 1e-10,
    "C5_gap": 1e-9,
    "C5_ou_gap_min": 0.5,
    "C6_monotone": 1e-10,
    "C6_floor": 1e-9,
    "C6_limit": 1e-6,
    "C7_margin": 1e-9,
    "C7_ou": 1e-9,
    "C8_gap": 1e-10,
    "C9_rel": 0.25,
    "C10_low": 3.0,
    "C10_high": 5.0,
}


@dataclass
class CriterionRow:
    criterion: str
    case: str
    expected: str
    observed: float
    tolerance: float
    passed: bool


# --- shared instances (built once per process) ------------------------------


@lru_cache(maxsize=None)
def torus_benchmark_system(points_per_axis: int = 32):
    u = torus_cosine(2, 1.0)
    return discretize_torus(u, make_qgradu_drift(ROT, u), points_per_axis)


@lru_cache(maxsize=None)
def torus_axis_system(points_per_axis: int = 32):
    # energy depending on x1 only: functions of the energy are drift
    # invariants of the grid operator exactly, not just in the limit
    u = torus_cosine(2, (1.0, 0.0))
    return discretize_torus(u, make_qgradu_drift(ROT, u), points_per_axis)


@lru_cache(maxsize=None)
def gaussian_benchmark_system(k: float = 1.0, degree: int = 6):
    return discretize_gaussian_linear(k * ROT, dim=2, degree=degree)


def gaussian_x1(sys) -> np.ndarray:
    f = np.zeros(sys.n)
    f[sys.multi_indices.index((1, 0))] = 1.0
    return f


def _backends():
    return [("torus 32x32, U = cos x1 + cos x2", torus_benchmark_system()),
            ("gaussian-linear dim 2 degree 6", gaussian_benchmark_system())]


@lru_cache(maxsize=None)
def _inequality_scan(n_observables: int = 200):
    """Worst inequality slack and route discrepancy over random observables."""
    out = {}
    for name, sys in _backends():
        rng = np.random.default_rng(OBSERVABLE_SEED)
        worst_slack = -np.inf
        worst_route = 0.0
        for _ in range(n_observables):
            f = rng.standard_normal(sys.n)
            rep = variance_report(sys, f)
            worst_slack = max(worst_slack, rep.sigma2_irr - rep.sigma2_rev)
            worst_route = max(worst_route, rep.route_discrepancy)
        out[name] = (worst_slack, worst_route)
    return out


# --- criterion runners --------------------------------------------------------


def run_c1(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    for name, (slack, _) in _inequality_scan().items():
        rows.append(CriterionRow(
            "C1", name, "sigma2_irr - sigma2_rev <= tol over 200 observables",
            slack, tol["C1_slack"], slack <= tol["C1_slack"]))
    return rows


def run_c2(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    for k in (0.0, 1.0, 2.0, 4.0):
        sys = gaussian_benchmark_system(k)
        rep = variance_report(sys, gaussian_x1(sys))
        target = 2.0 / (1.0 + k**2)
        err_rev = abs(rep.sigma2_rev - 2.0)
        err_irr = abs(rep.sigma2_irr - target)
        rows.append(CriterionRow(
            "C2", f"k={k:g}: sigma2_rev", "|sigma2_rev - 2| <= tol",
            err_rev, tol["C2_value"], err_rev <= tol["C2_value"]))
        rows.append(CriterionRow(
            "C2", f"k={k:g}: sigma2_irr",
            f"|sigma2_irr - {target:.6g}| <= tol",
            err_irr, tol["C2_value"], err_irr <= tol["C2_value"]))
    return rows


def run_c3(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    for name, (_, route) in _inequality_scan().items():
        rows.append(CriterionRow(
            "C3", name, "relative route disagreement <= tol over criterion-1 set",
            route, tol["C3_route"], route <= tol["C3_route"]))
    return rows


def run_c4(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    t = tol["C4_structure"]
    for name, sys in _backends():
        pi_l = sys.pi_weights[:, None] * sys.l_matrix
        pi_a = sys.pi_weights[:, None] * sys.a_matrix
        lr, _ = sys.restricted
        lam_min = float(np.linalg.eigvalsh(lr)[0])
        b = build_b_operator(sys)
        v = sys.v_matrix
        checks = [
            ("pi-symmetry of L", float(np.max(np.abs(pi_l - pi_l.T)))),
            ("pi-antisymmetry of A", float(np.max(np.abs(pi_a + pi_a.T)))),
            ("L annihilates constants",
             float(np.max(np.abs(sys.l_matrix @ sys.const_vec)))),
            ("A annihilates constants",
             float(np.max(np.abs(sys.a_matrix @ sys.const_vec)))),
            ("V L V = I", float(np.max(np.abs(v @ lr @ v - np.eye(sys.n - 1))))),
            ("B Hermitian", float(np.max(np.abs(b - b.conj().T)))),
        ]
        for label, observed in checks:
            rows.append(CriterionRow("C4", f"{name}: {label}",
                                     "residual <= tol", observed, t,
                                     observed <= t))
        rows.append(CriterionRow(
            "C4", f"{name}: kernel of L is only the constants",
            "smallest mean-zero eigenvalue of L > 0", lam_min, 0.0,
            lam_min > 0.0))
    return rows


def run_c5(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    sys = torus_axis_system()
    energy = np.cos(sys.points[:, 0])
    for label, phi in (("g(U) = U", energy), ("g(U) = U^2", energy**2)):
        f = sys.l_matrix @ phi
        rep = variance_report(sys, f)
        gap = abs(rep.equality_gap)
        rows.append(CriterionRow(
            "C5", f"torus f = L({label})", "|equality_gap| <= tol",
            gap, tol["C5_gap"], gap <= tol["C5_gap"]))
        rows.append(CriterionRow(
            "C5", f"torus f = L({label}) kernel flag",
            "kernel_flag is true", float(rep.kernel_flag), 1.0,
            rep.kernel_flag))
    sys_ou = gaussian_benchmark_system(1.0)
    rep = variance_report(sys_ou, gaussian_x1(sys_ou))
    rows.append(CriterionRow(
        "C5", "gaussian f = x1, q rotation", "equality_gap >= 0.5",
        rep.equality_gap, tol["C5_ou_gap_min"],
        rep.equality_gap >= tol["C5_ou_gap_min"]))
    rows.append(CriterionRow(
        "C5", "gaussian f = x1 kernel flag", "kernel_flag is false",
        float(rep.kernel_flag), 0.0, not rep.kernel_flag))
    return rows


def _sweep_rows(tol, case, builder, f, ks) -> list[CriterionRow]:
    res = sweep_k(builder, f, ks)
    diffs = np.diff(res.sigma2_values)
    worst_increase = float(np.max(diffs)) if len(diffs) else 0.0
    rows = [CriterionRow(
        "C6", f"{case}: monotone in k", "max increase <= tol",
        worst_increase, tol["C6_monotone"],
        worst_increase <= tol["C6_monotone"])]
    floor = float(np.min(res.sigma2_values - res.limit_prediction))
    rows.append(CriterionRow(
        "C6", f"{case}: values above the limit", "min(sigma2 - limit) >= -tol",
        floor, tol["C6_floor"], floor >= -tol["C6_floor"]))
    if res.b_gap is not None and res.b_gap > 0:
        k_big = res.k_values[-1]
        excess = float(res.sigma2_values[-1] - res.limit_prediction)
        bound = max(tol["C6_limit"],
                    2.0 * res.measure.total_mass / (1.0 + k_big**2 * res.b_gap**2))
        rows.append(CriterionRow(
            "C6", f"{case}: k={k_big:g} within the gap bound of the limit",
            "sigma2(k) - limit <= max(tol, 2 mass/(1+k^2 gap^2))",
            excess, bound, excess <= bound * (1.0 + 1e-12)))
    return rows, res


def run_c6(tol: Mapping[str, float]) -> list[CriterionRow]:
    ks = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]

    def gaussian_builder(scale):
        return gaussian_benchmark_system(scale)

    sys = gaussian_benchmark_system(1.0)
    rows, res = _sweep_rows(tol, "gaussian f = x1", gaussian_builder,
                            gaussian_x1(sys), ks)
    rows.append(CriterionRow(
        "C6", "gaussian limit is zero", "|limit_prediction| <= tol",
        abs(res.limit_prediction), tol["C6_limit"],
        abs(res.limit_prediction) <= tol["C6_limit"]))

    u = torus_cosine(2, 1.0)

    def torus_builder(scale):
        return discretize_torus(u, make_qgradu_drift(scale * ROT, u), 32)

    f = np.cos(torus_benchmark_system().points[:, 0])
    torus_rows, _ = _sweep_rows(tol, "torus f = cos x1", torus_builder, f, ks)
    return rows + torus_rows


def run_c7(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    res = worst_case(torus_benchmark_system())
    rows.append(CriterionRow(
        "C7", "torus kernel intersection",
        "dim(Ker(L - lambda) cap Ker A) reported",
        float(res.kernel_intersection_dim), 0.0, True))
    if res.kernel_intersection_dim == 0:
        margin = res.sup_rev - res.sup_irr
        rows.append(CriterionRow(
            "C7", "torus strict worst-case gain", "sup_rev - sup_irr > tol",
            margin, tol["C7_margin"], margin > tol["C7_margin"]))
    res_ou = worst_case(gaussian_benchmark_system(1.0))
    err_rev = abs(res_ou.sup_rev - 2.0)
    err_irr = abs(res_ou.sup_irr - 1.0)
    rows.append(CriterionRow(
        "C7", "gaussian sup_rev", "|sup_rev - 2| <= tol", err_rev,
        tol["C7_ou"], err_rev <= tol["C7_ou"]))
    rows.append(CriterionRow(
        "C7", "gaussian sup_irr", "|sup_irr - 1| <= tol", err_irr,
        tol["C7_ou"], err_irr <= tol["C7_ou"]))
    return rows


def run_c8(tol: Mapping[str, float]) -> list[CriterionRow]:
    rows = []
    for name, sys in _backends():
        gap_l, min_real = generator_gaps(sys)
        deficit = gap_l - min_real
        rows.append(CriterionRow(
            "C8", name, "min Re spec(L - A) >= min eig(L) - tol",
            deficit, tol["C8_gap"], deficit <= tol["C8_gap"]))
    return rows


def run_c9(tol: Mapping[str, float]) -> list[CriterionRow]:
    u = gaussian_potential(2)
    c = make_qgradu_drift(ROT, u)
    estimates = {}
    for k, target in ((0.0, 2.0), (1.0, 1.0)):
        cfg = SimConfig(step_size=0.005, n_steps=202_000,
                        initial_point=[0.0, 0.0], burn_in_steps=2_000,
                        seed=MC_SEED_BANK[k], perturbation_scale=k)
        estimates[k] = replicated_clt(u, c, lambda x: x[..., 0], cfg,
                                      n_chains=100)
    rows = []
    for k, target in ((0.0, 2.0), (1.0, 1.0)):
        rel = abs(estimates[k].point_estimate - target) / target
        rows.append(CriterionRow(
            "C9", f"replicated CLT k={k:g} (100 chains, T=1e3)",
            f"relative error to {target:g} <= tol", rel, tol["C9_rel"],
            rel <= tol["C9_rel"]))
    drop = estimates[0.0].point_estimate - estimates[1.0].point_estimate
    combined = math.hypot(estimates[0.0].stderr, estimates[1.0].stderr)
    rows.append(CriterionRow(
        "C9", "variance reduction beyond noise",
        "estimate(k=0) - estimate(k=1) > combined stderr",
        drop, combined, drop > combined))
    return rows


def run_c10(tol: Mapping[str, float]) -> list[CriterionRow]:
    u = torus_cosine(2, 1.0)
    values = {}
    for m in (16, 32, 64):
        sys = discretize_torus(u, make_qgradu_drift(ROT, u), m)
        f = np.cos(sys.points[:, 0])
        values[m] = asymptotic_variances(sys, f)
    rows = []
    for route, label in ((0, "sigma2_rev"), (1, "sigma2_irr")):
        d1 = values[16][route] - values[32][route]
        d2 = values[32][route] - values[64][route]
        ratio = d1 / d2
        ok = tol["C10_low"] <= ratio <= tol["C10_high"]
        rows.append(CriterionRow(
            "C10", f"{label} at 16/32/64 points per axis",
            "difference ratio in [3, 5] (second order)", ratio,
            tol["C10_high"], ok))
    return rows


CRITERIA: dict[str, tuple[str, Callable]] = {
    "C1": ("main inequality on 200 random observables per backend", run_c1),
    "C2": ("closed-form gaussian rotation benchmark", run_c2),
    "C3": ("resolvent and spectral routes agree", run_c3),
    "C4": ("operator structure: symmetries, kernels, V L V, Hermitian B", run_c4),
    "C5": ("equality holds exactly on drift-invariant observables", run_c5),
    "C6": ("growing drift: monotone decay to the kernel mass", run_c6),
    "C7": ("worst-case comparison of the two dynamics", run_c7),
    "C8": ("perturbation does not shrink the spectral gap", run_c8),
    "C9": ("Monte Carlo estimates match the oracle", run_c9),
    "C10": ("grid oracle converges at second order", run_c10),
}


def run_benchmark(only: Sequence[str] | None = None,
                  tolerance_overrides: Mapping[str, float] | None = None,
                  ) -> tuple[list[CriterionRow], bool]:
    """Run the acceptance matrix; returns (rows, all_passed).

    ``tolerance_overrides`` is a testing hook: corrupting a tolerance must
    flip the verdict, which exercises the failure path of the harness.
    """
    tol = dict(TOLERANCES)
    if tolerance_overrides:
        unknown = set(tolerance_overrides) - set(tol)
        if unknown:
            raise ValueError(f"unknown tolerance overrides: {sorted(unknown)}")
        tol.update(tolerance_overrides)
    names = list(CRITERIA) if only is None else list(only)
    unknown = [n for n in names if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria: {unknown}; available {list(CRITERIA)}")
    rows: list[CriterionRow] = []
    for name in names:
        _, runner = CRITERIA[name]
        rows.extend(runner(tol))
    return rows, all(r.passed for r in rows)


def format_table(rows: Sequence[CriterionRow]) -> str:
    header = f"{'criterion':<10} {'case':<52} {'observed':>13} {'tolerance':>13}  result"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.criterion:<10} {r.case[:52]:<52} {r.observed:>13.4e} "
            f"{r.tolerance:>13.4e}  {'pass' if r.passed else 'FAIL'}"
        )
    n_pass = sum(r.passed for r in rows)
    lines.append(f"{n_pass}/{len(rows)} checks passed")
    return "\n".join(lines)
