import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from vascperf.linalg import (
    conjugate_gradient,
    extreme_eigenvalues,
    generalized_symmetric_eig,
    minres,
    spmv,
)


def interval_matrices(n):
    """Uniform 1D P1 mass/stiffness on [0,1] with n elements."""
    h = 1.0 / n
    main_m = np.full(n + 1, 4 * h / 6)
    main_m[[0, -1]] = 2 * h / 6
    off_m = np.full(n, h / 6)
    mass = sp.diags([off_m, main_m, off_m], [-1, 0, 1]).tocsr()
    main_a = np.full(n + 1, 2 / h)
    main_a[[0, -1]] = 1 / h
    off_a = np.full(n, -1 / h)
    stiff = sp.diags([off_a, main_a, off_a], [-1, 0, 1]).tocsr()
    return mass, stiff


class TestSpmv:
    def test_identity(self):
        assert np.array_equal(spmv(sp.eye(3, format="csr"), np.array([1.0, 2, 3])),
                              [1.0, 2, 3])

    def test_zero_matrix(self):
        out = spmv(sp.csr_matrix((3, 3)), np.array([4.0, 5, 6]))
        assert np.array_equal(out, np.zeros(3))

    def test_hand_computed(self):
        a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(spmv(a, np.ones(2)), [3.0, 3.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            spmv(sp.eye(3, format="csr"), np.ones(4))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=2**31),
           st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, n, seed, a, b):
        rng = np.random.default_rng(seed)
        mat = sp.random(n, n, density=0.4, random_state=np.random.RandomState(seed)).tocsr()
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        lhs = spmv(mat, a * x + b * y)
        rhs = a * spmv(mat, x) + b * spmv(mat, y)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale


class TestConjugateGradient:
    def test_identity_one_iteration(self):
        b = np.array([3.0, -1.0, 2.0])
        x, report = conjugate_gradient(sp.eye(3, format="csr"), b)
        assert report.converged and report.iterations == 1
        assert np.allclose(x, b)

    def test_manufactured_solution(self):
        mass, stiff = interval_matrices(10)
        a = (stiff + mass).tocsr()
        b = a @ np.ones(11)
        x, report = conjugate_gradient(a, b, rtol=1e-12)
        assert report.converged
        assert np.abs(x - 1.0).max() < 1e-10

    def test_diagonal_inverse_oracle(self):
        a = sp.diags([1.0, 2, 3, 4, 5]).tocsr()
        x, report = conjugate_gradient(a, np.ones(5), rtol=1e-14)
        assert np.allclose(x, [1, 1 / 2, 1 / 3, 1 / 4, 1 / 5], atol=1e-13)

    def test_nonconvergence_flag(self):
        mass, stiff = interval_matrices(60)
        a = (stiff + mass).tocsr()
        b = np.sin(np.linspace(0, 3, 61))
        x, report = conjugate_gradient(a, b, rtol=1e-14, maxiter=2)
        assert not report.converged
        assert report.iterations == 2

    def test_report_invariants(self):
        a = sp.diags([1.0, 2, 3]).tocsr()
        _, report = conjugate_gradient(a, np.array([1.0, 1, 1]))
        assert len(report.residual_history) == report.iterations + 1
        assert report.final_residual_norm == report.residual_history[-1]

    def test_nan_input_raises(self):
        a = sp.csr_matrix(np.array([[1.0, np.nan], [np.nan, 1.0]]))
        with pytest.raises(FloatingPointError):
            conjugate_gradient(a, np.ones(2))


class TestMinres:
    def test_identity_one_iteration(self):
        b = np.array([1.0, 2.0, -1.0])
        x, report = minres(sp.eye(3, format="csr"), sp.eye(3, format="csr"), b)
        assert report.converged and report.iterations == 1
        assert np.allclose(x, b, atol=1e-12)

    def test_indefinite_direct_oracle(self):
        op = sp.diags([1.0, -1.0, 2.0]).tocsr()
        b = np.array([1.0, 1.0, 2.0])
        x, report = minres(op, sp.eye(3, format="csr"), b, atol=1e-12)
        assert report.converged
        assert np.allclose(x, [1.0, -1.0, 1.0], atol=1e-10)

    def test_residual_history_nonincreasing(self):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
        op = sp.csr_matrix(q @ np.diag(np.linspace(-2, 5, 30)) @ q.T)
        b = rng.standard_normal(30)
        _, report = minres(op, sp.eye(30, format="csr"), b, atol=1e-10, maxiter=100)
        hist = np.array(report.residual_history)
        assert np.all(np.diff(hist) <= 1e-12 * hist[0])

    def test_agrees_with_cg_on_spd(self):
        mass, stiff = interval_matrices(20)
        a = (stiff + mass).tocsr()
        b = np.cos(np.linspace(0, 2, 21))
        rtol = 1e-11
        x_cg, _ = conjugate_gradient(a, b, rtol=rtol)
        x_mr, _ = minres(a, sp.eye(21, format="csr"), b, atol=rtol * np.linalg.norm(b))
        assert np.linalg.norm(x_cg - x_mr) <= 10 * rtol * np.linalg.norm(x_cg) + 1e-12

    def test_weighted_stopping_norm(self):
        # the tracked eta must equal sqrt(r' B r) of the true residual
        rng = np.random.default_rng(5)
        d = np.abs(rng.standard_normal(25)) + 0.5
        op_mat = rng.standard_normal((25, 25))
        op_mat = sp.csr_matrix(op_mat + op_mat.T)
        precond = sp.diags(1.0 / d).tocsr()
        b = rng.standard_normal(25)
        x, report = minres(op_mat, precond, b, atol=1e-8, maxiter=24)
        r = b - op_mat @ x
        weighted = np.sqrt(r @ (precond @ r))
        assert abs(weighted - report.final_residual_norm) <= 1e-6 * report.residual_history[0]

    def test_maxiter_exhaustion(self):
        rng = np.random.default_rng(11)
        q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
        op = sp.csr_matrix(q @ np.diag(np.linspace(0.01, 3, 40)) @ q.T)
        _, report = minres(op, sp.eye(40, format="csr"), rng.standard_normal(40),
                           atol=1e-14, maxiter=3)
        assert not report.converged and report.iterations == 3


class TestGeneralizedEig:
    def test_identity_pencil(self):
        dec = generalized_symmetric_eig(np.eye(4), np.eye(4))
        assert np.allclose(dec.eigenvalues, 1.0)
        assert np.allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(4), atol=1e-12)

    def test_diagonal_pencil(self):
        dec = generalized_symmetric_eig(np.diag([1.0, 4.0]), np.eye(2))
        assert np.allclose(dec.eigenvalues, [1.0, 4.0])

    def test_brute_force_similarity_oracle(self):
        mass, stiff = interval_matrices(16)
        a = (stiff + mass).toarray()
        m = mass.toarray()
        dec = generalized_symmetric_eig(a, m)
        brute = np.sort(np.real(np.linalg.eigvals(np.linalg.solve(m, a))))
        assert np.abs(dec.eigenvalues - brute).max() <= 1e-10 * np.abs(brute).max()

    def test_m_orthonormality_and_residual(self):
        mass, stiff = interval_matrices(12)
        dec = generalized_symmetric_eig((stiff + mass).toarray(), mass.toarray())
        u, lam, m = dec.eigenvectors, dec.eigenvalues, mass.toarray()
        assert np.abs(u.T @ m @ u - np.eye(len(lam))).max() < 1e-8
        resid = (stiff + mass).toarray() @ u - m @ u @ np.diag(lam)
        assert np.abs(resid).max() <= 1e-8 * np.abs(lam).max()

    def test_reconstruction_identity(self):
        mass, stiff = interval_matrices(10)
        a = (stiff + mass).toarray()
        m = mass.toarray()
        dec = generalized_symmetric_eig(a, m)
        rebuilt = m @ dec.eigenvectors @ np.diag(dec.eigenvalues) @ dec.eigenvectors.T @ m
        assert np.linalg.norm(rebuilt - a) <= 1e-8 * np.linalg.norm(a)

    def test_non_spd_mass_reports_pivot(self):
        with pytest.raises(sla.LinAlgError, match="not positive definite"):
            generalized_symmetric_eig(np.eye(2), np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            generalized_symmetric_eig(np.eye(3), np.eye(2))


class TestExtremeEigenvalues:
    def test_diagonal(self):
        op = sp.diags([1.0, 2.0, 3.0]).tocsr()
        lo, hi = extreme_eigenvalues(op, sp.eye(3, format="csr"), 3, tol=1e-10)
        assert abs(lo - 1.0) < 1e-8 and abs(hi - 3.0) < 1e-8

    def test_saddle_characteristic_oracle(self):
        # eigenvalues of [[1,1],[1,0]] are (1 +- sqrt(5))/2
        op = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
        lo, hi = extreme_eigenvalues(op, sp.eye(2, format="csr"), 2, tol=1e-12)
        golden = (np.sqrt(5.0) - 1.0) / 2.0
        assert abs(lo - golden) < 1e-9
        assert abs(hi - (golden + 1.0)) < 1e-9

    def test_shift_invert_finds_interior_minimum(self):
        # spectrum {-3, 0.05, 1, 2}: smallest magnitude is interior
        diag = np.array([-3.0, 0.05, 1.0, 2.0])
        op = sp.diags(diag).tocsr()
        eye = sp.eye(4, format="csr")
        dense = op.toarray()
        lo, hi = extreme_eigenvalues(
            op, eye, 4, tol=1e-10,
            op_solve=lambda v: np.linalg.solve(dense, v), b_apply=eye,
        )
        assert abs(hi - 3.0) < 1e-8
        assert abs(lo - 0.05) < 1e-9
