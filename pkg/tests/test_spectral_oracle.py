"""Discretized operators, the Hermitian conjugation, and both variance routes.

Independent oracles used here
-----------------------------
* flat 1D grid: the circulant Laplacian has eigenvalues (2/h^2)(1 - cos(2 pi j / n)).
* Gaussian backend: matrix elements of the drift operator recomputed by
  Gauss-Hermite quadrature with exact polynomial derivatives (hermeder),
  fully independent of the raising/lowering construction.
* Gaussian benchmark: linear observables solve the perturbed Poisson
  equation in closed form, giving sigma2 = 2 v . (I + kQ)^{-1} v
  (docs/ou_variance_derivation.md); for v = e1, Q the rotation, this is
  2 / (1 + k^2).
"""

from math import factorial

import numpy as np
import pytest

from irrlangevin.errors import DiscretizationDefectError
from irrlangevin.model import (
    DriftField,
    DriftKind,
    make_qgradu_drift,
    torus_cosine,
    zero_drift,
)
from irrlangevin.spectral_oracle import (
    DiscretizedSystem,
    GaussianLinear,
    TorusGrid,
    asymptotic_variances,
    build_b_operator,
    discretize_gaussian_linear,
    discretize_torus,
    generator_gaps,
    hermite_coefficients,
    hermite_indices,
    measure_symmetry_residual,
    spectral_measure,
    variance_report,
)

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def exp_u_field_1d():
    """C = e^{U} on the 1D cosine torus: weighted divergence-free exactly."""

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return np.exp(np.cos(x))

    def _div(x):
        x = np.asarray(x, dtype=float)
        return (-np.sin(x) * np.exp(np.cos(x)))[..., 0]

    return DriftField(dim=1, eval=_eval, divergence=_div,
                      kind=DriftKind.CUSTOM, name="exp_u")


@pytest.fixture(scope="module")
def torus_sys():
    u = torus_cosine(2, 1.0)
    c = make_qgradu_drift(ROT, u)
    return discretize_torus(u, c, 24)


@pytest.fixture(scope="module")
def hermite_sys():
    return discretize_gaussian_linear(ROT, dim=2, degree=5)


# --- torus construction -------------------------------------------------


def test_flat_1d_grid_is_circulant_laplacian():
    n = 16
    u = torus_cosine(1, 0.0)  # U = 0
    sys = discretize_torus(u, zero_drift(1), n)
    h = 2 * np.pi / n
    row = np.zeros(n)
    row[0] = 2.0 / h**2
    row[1] = row[-1] = -1.0 / h**2
    expected = np.array([np.roll(row, i) for i in range(n)])
    np.testing.assert_allclose(sys.l_matrix, expected, atol=1e-12)
    eигs = np.sort(np.linalg.eigvalsh(sys.l_matrix))
    gap_expected = (2.0 / h**2) * (1.0 - np.cos(2 * np.pi / n))
    assert eигs[1] == pytest.approx(gap_expected, rel=1e-12)
    assert abs(eигs[0]) < 1e-10


def test_zero_drift_gives_zero_a_matrix(torus_sys):
    u = torus_cosine(2, 1.0)
    sys = discretize_torus(u, zero_drift(2), 12)
    assert np.all(sys.a_matrix == 0.0)
    assert sys.antisym_correction == 0.0


def test_weighted_divergence_free_columns():
    # exact pi-antisymmetrization forces the weighted column sums to vanish
    u = torus_cosine(1, 1.0)
    sys = discretize_torus(u, exp_u_field_1d(), 32)
    col_sums = (sys.pi_weights[:, None] * sys.a_matrix).sum(axis=0)
    assert np.max(np.abs(col_sums)) <= 1e-10


def test_torus_guards():
    u = torus_cosine(2, 1.0)
    c = make_qgradu_drift(ROT, u)
    with pytest.raises(ValueError, match="at least 8"):
        discretize_torus(u, c, 4)
    with pytest.raises(ValueError, match="memory guard"):
        discretize_torus(u, c, 150)  # 22500 nodes
    u3 = torus_cosine(3, 1.0)
    q3 = np.zeros((3, 3))
    with pytest.raises(ValueError, match="dim 1 or 2"):
        discretize_torus(u3, make_qgradu_drift(q3, u3), 8)
    from irrlangevin.model import gaussian_potential
    g = gaussian_potential(2)
    with pytest.raises(ValueError, match="flat-torus"):
        discretize_torus(g, make_qgradu_drift(ROT, g), 8)


def test_antisym_correction_reported(torus_sys):
    # centered differencing of a weighted-divergence-free field leaves an
    # O(h^2) symmetric defect; it must be recorded, small, and nonzero
    assert 0.0 < torus_sys.antisym_correction < 0.5


@pytest.mark.parametrize("sysname", ["torus", "hermite"])
def test_pi_structure(sysname, torus_sys, hermite_sys):
    sys = torus_sys if sysname == "torus" else hermite_sys
    pi_l = sys.pi_weights[:, None] * sys.l_matrix
    pi_a = sys.pi_weights[:, None] * sys.a_matrix
    assert np.max(np.abs(pi_l - pi_l.T)) <= 1e-10
    assert np.max(np.abs(pi_a + pi_a.T)) <= 1e-10
    assert np.max(np.abs(sys.l_matrix @ sys.const_vec)) <= 1e-10
    assert np.max(np.abs(sys.a_matrix @ sys.const_vec)) <= 1e-10
    # <1, 1>_pi = 1 and the mean-zero basis is pi-orthonormal and mean-free
    assert sys.pi_inner(sys.const_vec, sys.const_vec) == pytest.approx(1.0,
                                                                       abs=1e-14)
    b = sys.mean_zero_basis
    gram = b.T @ (sys.pi_weights[:, None] * b)
    np.testing.assert_allclose(gram, np.eye(sys.n - 1), atol=1e-12)
    means = sys.pi_weights @ (sys.const_vec[:, None] * b)
    assert np.max(np.abs(means)) <= 1e-12


@pytest.mark.parametrize("sysname", ["torus", "hermite"])
def test_bilinear_symmetry_random_vectors(sysname, torus_sys, hermite_sys):
    sys = torus_sys if sysname == "torus" else hermite_sys
    rng = np.random.default_rng(17)
    for _ in range(20):
        f = rng.standard_normal(sys.n)
        g = rng.standard_normal(sys.n)
        norm = np.sqrt(sys.pi_inner(f, f) * sys.pi_inner(g, g))
        sym = sys.pi_inner(sys.l_matrix @ f, g) - sys.pi_inner(f, sys.l_matrix @ g)
        asym = sys.pi_inner(sys.a_matrix @ f, g) + sys.pi_inner(f, sys.a_matrix @ g)
        assert abs(sym) <= 1e-10 * max(norm, 1.0)
        assert abs(asym) <= 1e-10 * max(norm, 1.0)


def test_restricted_l_positive_definite(torus_sys, hermite_sys):
    for sys in (torus_sys, hermite_sys):
        lr, _ = sys.restricted
        assert np.linalg.eigvalsh(lr)[0] > 0.0


# --- Gaussian backend ----------------------------------------------------


def test_hermite_degree_one_blocks():
    sys = discretize_gaussian_linear(ROT, dim=2, degree=1)
    assert sys.multi_indices == ((0, 0), (1, 0), (0, 1))
    np.testing.assert_allclose(sys.l_matrix, np.diag([0.0, 1.0, 1.0]))
    # drift acts on the linear span with coefficient matrix -Q
    np.testing.assert_allclose(sys.a_matrix[1:, 1:], -ROT, atol=1e-15)


def test_hermite_zero_q():
    sys = discretize_gaussian_linear(np.zeros((2, 2)), dim=2, degree=3)
    assert np.all(sys.a_matrix == 0.0)


def test_hermite_degree_two_shell_is_twice_identity():
    sys = discretize_gaussian_linear(ROT, dim=2, degree=2)
    shell = [i for i, a in enumerate(sys.multi_indices) if sum(a) == 2]
    np.testing.assert_allclose(
        sys.l_matrix[np.ix_(shell, shell)], 2.0 * np.eye(len(shell)))


def test_hermite_rejects_bad_input():
    with pytest.raises(ValueError, match="antisymmetric"):
        discretize_gaussian_linear(np.eye(2), dim=2, degree=2)
    with pytest.raises(ValueError, match="degree"):
        discretize_gaussian_linear(ROT, dim=2, degree=0)
    with pytest.raises(ValueError, match="shape"):
        discretize_gaussian_linear(ROT, dim=3, degree=2)


def test_hermite_drift_matrix_against_quadrature():
    # oracle: <h_gamma, (Qx).grad h_beta>_pi by exact Gauss-Hermite quadrature
    q = np.array([[0.0, 0.8], [-0.8, 0.0]])
    degree = 4
    sys = discretize_gaussian_linear(q, dim=2, degree=degree)
    idxs = sys.multi_indices
    herme = np.polynomial.hermite_e

    n_nodes = degree + 3  # integrands have degree <= 2*degree + 2
    nodes, wts = herme.hermegauss(n_nodes)
    wts = wts / np.sqrt(2 * np.pi)
    vals, ders = {}, {}
    for k in range(degree + 1):
        coeff = np.zeros(k + 1)
        coeff[k] = 1.0
        vals[k] = herme.hermeval(nodes, coeff) / np.sqrt(factorial(k))
        ders[k] = herme.hermeval(nodes, herme.hermeder(coeff)) / np.sqrt(
            factorial(k))

    oracle = np.zeros((sys.n, sys.n))
    w2 = np.outer(wts, wts)
    x_nodes = nodes[:, None] * np.ones_like(nodes)[None, :]
    y_nodes = np.ones_like(nodes)[:, None] * nodes[None, :]
    cx = q[0, 1] * y_nodes  # (Qx)_1 = q01 y
    cy = q[1, 0] * x_nodes  # (Qx)_2 = q10 x
    for col, beta in enumerate(idxs):
        af = (cx * np.outer(ders[beta[0]], vals[beta[1]])
              + cy * np.outer(vals[beta[0]], ders[beta[1]]))
        for row, gam in enumerate(idxs):
            basis = np.outer(vals[gam[0]], vals[gam[1]])
            oracle[row, col] = np.sum(w2 * basis * af)
    np.testing.assert_allclose(sys.a_matrix, oracle, atol=1e-12)


def test_hermite_indices_count():
    assert len(hermite_indices(2, 6)) == 28
    assert len(hermite_indices(3, 2)) == 10
    assert hermite_indices(1, 3) == [(0,), (1,), (2,), (3,)]


def test_hermite_coefficients_coordinate_and_square(hermite_sys):
    coeffs = hermite_coefficients(hermite_sys, lambda p: p[..., 0],
                                  poly_degree=1)
    expected = np.zeros(hermite_sys.n)
    expected[hermite_sys.multi_indices.index((1, 0))] = 1.0
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)
    # x1^2 = sqrt(2) h_(2,0) + h_(0,0)
    coeffs = hermite_coefficients(hermite_sys, lambda p: p[..., 0] ** 2,
                                  poly_degree=2)
    expected = np.zeros(hermite_sys.n)
    expected[hermite_sys.multi_indices.index((0, 0))] = 1.0
    expected[hermite_sys.multi_indices.index((2, 0))] = np.sqrt(2.0)
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


def test_hermite_coefficients_round_trip(hermite_sys):
    rng = np.random.default_rng(4)
    target = rng.standard_normal(hermite_sys.n)
    herme = np.polynomial.hermite_e

    def func(pts):
        out = np.zeros(pts.shape[:-1])
        for coeff, alpha in zip(target, hermite_sys.multi_indices):
            term = np.ones(pts.shape[:-1]) * coeff
            for ax, k in enumerate(alpha):
                c1 = np.zeros(k + 1)
                c1[k] = 1.0
                term = term * herme.hermeval(pts[..., ax], c1) / np.sqrt(
                    factorial(k))
            out += term
        return out

    recovered = hermite_coefficients(hermite_sys, func)
    np.testing.assert_allclose(recovered, target, atol=1e-10)


# --- B operator and spectral measures ------------------------------------


def test_b_operator_zero_drift():
    u = torus_cosine(2, 1.0)
    sys = discretize_torus(u, zero_drift(2), 12)
    b = build_b_operator(sys)
    assert np.max(np.abs(b)) == 0.0


def test_b_operator_ou_eigenvalues():
    a = 0.7
    sys = discretize_gaussian_linear(a * ROT, dim=2, degree=1)
    b = build_b_operator(sys)
    np.testing.assert_allclose(np.linalg.eigvalsh(b), [-a, a], atol=1e-12)


@pytest.mark.parametrize("sysname", ["torus", "hermite"])
def test_b_hermitian_and_vlv_identity(sysname, torus_sys, hermite_sys):
    sys = torus_sys if sysname == "torus" else hermite_sys
    b = build_b_operator(sys)
    assert np.max(np.abs(b - b.conj().T)) <= 1e-10
    lr, _ = sys.restricted
    v = sys.v_matrix
    np.testing.assert_allclose(v @ lr @ v, np.eye(sys.n - 1), atol=1e-10)


def test_b_operator_rejects_indefinite_restriction():
    # hand-built defective system: symmetric, kills constants, but indefinite
    l_bad = 3.0 * np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0],
                            [0.0, 0.0, 0.0]])
    pi = np.full(3, 1.0 / 3.0)
    sys = DiscretizedSystem(
        n=3, pi_weights=pi, l_matrix=l_bad, a_matrix=np.zeros((3, 3)),
        mean_zero_basis=_basis_for_uniform(3), backend=TorusGrid(1, 3, 1.0),
        const_vec=np.ones(3),
    )
    with pytest.raises(DiscretizationDefectError, match="smallest eigenvalue"):
        build_b_operator(sys)


def _basis_for_uniform(n):
    from irrlangevin.spectral_oracle import _mean_zero_basis_from_weights
    return _mean_zero_basis_from_weights(np.full(n, 1.0 / n))


def test_spectral_measure_zero_matrix():
    g = np.array([1.0, 2.0, -1.0])
    m = spectral_measure(np.zeros((3, 3)), g)
    np.testing.assert_allclose(m.locations, [0.0])
    assert m.weights[0] == pytest.approx(float(g @ g), rel=1e-14)
    assert m.total_mass == pytest.approx(6.0, rel=1e-14)


def test_spectral_measure_parseval():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    b = (a + a.conj().T) / 2.0
    g = rng.standard_normal(12)
    m = spectral_measure(b, g)
    assert m.total_mass == pytest.approx(float(g @ g), rel=1e-12)
    assert np.all(m.weights >= 0.0)
    assert np.all(np.diff(m.locations) > 0)


def test_spectral_measure_merges_degenerate_clusters():
    b = np.diag([0.3, 0.3 + 1e-12, -0.5])
    g = np.array([1.0, 1.0, 2.0])
    m = spectral_measure(b, g)
    np.testing.assert_allclose(m.locations, [-0.5, 0.3], atol=1e-9)
    np.testing.assert_allclose(m.weights, [4.0, 2.0], rtol=1e-12)


def test_spectral_measure_ou_atoms():
    a = 0.9
    sys = discretize_gaussian_linear(a * ROT, dim=2, degree=1)
    b = build_b_operator(sys)
    f = np.array([0.0, 1.0, 0.0])  # x1
    g = sys.v_matrix @ sys.to_mean_zero(f)
    m = spectral_measure(b, g)
    np.testing.assert_allclose(m.locations, [-a, a], atol=1e-12)
    np.testing.assert_allclose(m.weights, [0.5, 0.5], atol=1e-12)


def test_spectral_measure_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        spectral_measure(np.array([[0.0, 1.0], [0.0, 0.0]]), np.ones(2))


def test_measure_symmetric_for_real_observables(torus_sys):
    rng = np.random.default_rng(23)
    b = build_b_operator(torus_sys)
    for _ in range(5):
        f = rng.standard_normal(torus_sys.n)
        fc, _ = torus_sys.center(f)
        g = torus_sys.v_matrix @ torus_sys.to_mean_zero(fc)
        m = spectral_measure(b, g)
        assert measure_symmetry_residual(m) <= 1e-8 * m.total_mass


# --- variance reports -----------------------------------------------------


def test_variance_report_zero_drift_equality():
    u = torus_cosine(2, 1.0)
    sys = discretize_torus(u, zero_drift(2), 12)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(sys.n)
    rep = variance_report(sys, f)
    assert rep.sigma2_irr == pytest.approx(rep.sigma2_rev, rel=1e-12)
    assert abs(rep.equality_gap) <= 1e-10 * rep.sigma2_rev
    assert rep.kernel_flag is True


@pytest.mark.parametrize("k,expected", [(0.0, 2.0), (1.0, 1.0), (2.0, 0.4),
                                        (4.0, 2.0 / 17.0)])
def test_variance_report_ou_closed_form(k, expected):
    sys = discretize_gaussian_linear(k * ROT, dim=2, degree=4)
    f = np.zeros(sys.n)
    f[sys.multi_indices.index((1, 0))] = 1.0
    rep = variance_report(sys, f)
    assert rep.sigma2_rev == pytest.approx(2.0, abs=1e-12)
    assert rep.sigma2_irr == pytest.approx(expected, abs=1e-12)
    assert rep.route_spectral == pytest.approx(expected, abs=1e-12)
    assert rep.kernel_flag == (k == 0.0)


def test_variance_report_centers_observable(hermite_sys):
    f = np.zeros(hermite_sys.n)
    f[hermite_sys.multi_indices.index((1, 0))] = 1.0
    shifted = f + 3.0 * hermite_sys.const_vec
    rep = variance_report(hermite_sys, shifted)
    assert rep.center_shift == pytest.approx(3.0, rel=1e-14)
    base = variance_report(hermite_sys, f)
    assert rep.sigma2_irr == pytest.approx(base.sigma2_irr, rel=1e-12)


def test_variance_report_random_observables_inequality(torus_sys):
    rng = np.random.default_rng(5)
    for _ in range(25):
        f = rng.standard_normal(torus_sys.n)
        rep = variance_report(torus_sys, f)
        assert rep.sigma2_irr <= rep.sigma2_rev + 1e-10
        assert rep.route_discrepancy <= 1e-8
        assert rep.kernel_flag is False  # random vectors miss the kernel
        assert rep.equality_gap > 1e-9


def test_variance_report_input_validation(hermite_sys):
    with pytest.raises(ValueError, match="real"):
        variance_report(hermite_sys, np.ones(hermite_sys.n) * 1j)
    with pytest.raises(ValueError, match="shape"):
        variance_report(hermite_sys, np.ones(3))


def test_variance_report_singular_operator_is_a_defect():
    # a skew perturbation of a positive definite operator is never singular,
    # so a singular solve can only mean the invariants were violated
    sys = DiscretizedSystem(
        n=3, pi_weights=np.full(3, 1.0 / 3.0),
        l_matrix=np.zeros((3, 3)), a_matrix=np.zeros((3, 3)),
        mean_zero_basis=_basis_for_uniform(3), backend=TorusGrid(1, 3, 1.0),
        const_vec=np.ones(3),
    )
    with pytest.raises(DiscretizationDefectError, match="singular"):
        variance_report(sys, np.array([1.0, -2.0, 1.0]))


def test_asymptotic_variances_match_report(torus_sys):
    rng = np.random.default_rng(11)
    f = rng.standard_normal(torus_sys.n)
    rep = variance_report(torus_sys, f)
    rev, irr = asymptotic_variances(torus_sys, f)
    assert rev == pytest.approx(rep.sigma2_rev, rel=1e-12)
    assert irr == pytest.approx(rep.sigma2_irr, rel=1e-12)


def test_generator_gaps_ou():
    sys = discretize_gaussian_linear(ROT, dim=2, degree=5)
    gap_l, min_real = generator_gaps(sys)
    assert gap_l == pytest.approx(1.0, abs=1e-12)
    # L and the drift commute here, so the real parts are exactly the degrees
    assert min_real == pytest.approx(1.0, abs=1e-10)


def test_generator_gaps_torus_hwang_inequality(torus_sys):
    gap_l, min_real = generator_gaps(torus_sys)
    assert gap_l > 0.0
    assert min_real >= gap_l - 1e-10


def test_mesh_consistency_1d():
    # second-order convergence: successive sigma2 differences shrink ~4x
    u = torus_cosine(1, 1.0)
    c = exp_u_field_1d()

    def sigma_at(m):
        sys = discretize_torus(u, c, m)
        f = np.cos(sys.points[:, 0])
        return asymptotic_variances(sys, f)

    values = {m: sigma_at(m) for m in (16, 32, 64)}
    for route in (0, 1):
        d1 = values[16][route] - values[32][route]
        d2 = values[32][route] - values[64][route]
        assert 3.0 <= d1 / d2 <= 5.0
