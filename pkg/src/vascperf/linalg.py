"""Sparse/dense linear algebra kernels: CG, preconditioned MinRes, a dense
symmetric-definite generalized eigensolver, and Lanczos extreme-eigenvalue
estimation for large symmetric pencils.

Operators are passed either as scipy sparse matrices or as apply-callbacks,
so block systems never need to be materialized.  MinRes follows the classical
preconditioned recurrence and stops on the preconditioner-weighted residual
norm sqrt(r' B r), which the Givens recursion tracks exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

Operator = Union[sp.spmatrix, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class SolverReport:
    iterations: int
    converged: bool
    final_residual_norm: float
    residual_history: list[float] = field(default_factory=list)


@dataclass
class SpectralDecomposition:
    """M-orthonormal eigenpairs of a symmetric pencil A U = M U Lambda."""

    eigenvalues: np.ndarray     # ascending
    eigenvectors: np.ndarray    # columns, U' M U = I
    mass: sp.csr_matrix


def as_operator(op: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if callable(op):
        return op
    if sp.issparse(op):
        mat = op.tocsr()
        return lambda x: mat @ x
    mat = np.asarray(op)
    return lambda x: mat @ x


def spmv(matrix: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product with an explicit dimension check."""
    x = np.asarray(x, dtype=float)
    if matrix.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {matrix.shape}, vector has length {x.shape[0]}"
        )
    return matrix @ x


def conjugate_gradient(
    matrix: Operator,
    b: np.ndarray,
    rtol: float = 1e-12,
    maxiter: int = 10000,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """CG for SPD systems; stops when ||b - Ax|| <= rtol * ||b||."""
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    apply_a = as_operator(matrix)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else x0.astype(float).copy()
    r = b - apply_a(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, True, 0.0, [0.0])
    history = [float(np.linalg.norm(r))]
    if history[-1] <= rtol * bnorm:
        return x, SolverReport(0, True, history[-1], history)
    p = r.copy()
    rr = r @ r
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        alpha = rr / (p @ ap)
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = r @ r
        if not np.isfinite(rr_new):
            raise FloatingPointError("conjugate gradient produced non-finite iterate")
        history.append(float(np.sqrt(rr_new)))
        if history[-1] <= rtol * bnorm:
            return x, SolverReport(it, True, history[-1], history)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, SolverReport(maxiter, False, history[-1], history)


def minres(
    op: Operator,
    precond: Operator,
    b: np.ndarray,
    atol: float = 1e-10,
    maxiter: int = 500,
) -> tuple[np.ndarray, SolverReport]:
    """Preconditioned MinRes for symmetric (possibly indefinite) systems.

    `precond` must be SPD.  The Lanczos process runs on the preconditioned
    operator; the scalar eta in the Givens recursion equals the residual norm
    sqrt(r' B r), so iterations stop once |eta| < atol.  A zero Lanczos beta
    signals that the Krylov space is exhausted: that is convergence if the
    residual is already below atol and an error otherwise.
    """
    apply_a = as_operator(op)
    apply_b = as_operator(precond)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]

    x = np.zeros(n)
    v_old = np.zeros(n)
    v = b.copy()
    z = apply_b(v)
    gamma2 = z @ v
    if gamma2 < 0:
        raise ValueError("preconditioner is not positive definite")
    gamma = np.sqrt(gamma2)
    history = [float(gamma)]
    if gamma < atol:
        return x, SolverReport(0, True, float(gamma), history)

    gamma_old = 1.0
    eta = gamma
    s_old = s_cur = 0.0
    c_old = c_cur = 1.0
    w = np.zeros(n)
    w_old = np.zeros(n)

    for it in range(1, maxiter + 1):
        zj = z / gamma
        az = apply_a(zj)
        delta = zj @ az
        v_new = az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = apply_b(v_new)
        gamma_new2 = z_new @ v_new
        if gamma_new2 < -1e-13 * max(1.0, float(v_new @ v_new)):
            raise ValueError("preconditioner is not positive definite")
        gamma_new = np.sqrt(max(gamma_new2, 0.0))

        a0 = c_cur * delta - c_old * s_cur * gamma
        a1 = np.hypot(a0, gamma_new)
        a2 = s_cur * delta + c_old * c_cur * gamma
        a3 = s_old * gamma
        c_new = a0 / a1
        s_new = gamma_new / a1
        w_new = (zj - a3 * w_old - a2 * w) / a1
        x = x + (c_new * eta) * w_new
        eta = -s_new * eta
        history.append(abs(float(eta)))
        if not np.isfinite(eta):
            raise FloatingPointError("minres produced non-finite residual estimate")

        if abs(eta) < atol:
            return x, SolverReport(it, True, abs(float(eta)), history)
        if gamma_new == 0.0:
            raise RuntimeError(
                f"minres Lanczos breakdown at iteration {it} with residual {abs(eta):.3e} > atol"
            )
        v_old, v = v, v_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c_cur = c_cur, c_new
        s_old, s_cur = s_cur, s_new
        w_old, w = w, w_new

    return x, SolverReport(maxiter, False, abs(float(eta)), history)


def generalized_symmetric_eig(a: Operator, m: Operator) -> SpectralDecomposition:
    """Dense solve of A U = M U Lambda with U' M U = I, eigenvalues ascending.

    Intended for curve-sized problems (n up to a few thousand); sparse inputs
    are densified.  M must be SPD: the underlying Cholesky reduction reports
    the failing pivot otherwise.
    """
    a_dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    m_dense = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)
    if a_dense.shape != m_dense.shape or a_dense.shape[0] != a_dense.shape[1]:
        raise ValueError(f"pencil shapes differ: {a_dense.shape} vs {m_dense.shape}")
    try:
        eigenvalues, vectors = sla.eigh(a_dense, m_dense)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(
            f"mass matrix is not positive definite (Cholesky failure: {exc})"
        ) from exc
    mass = m.tocsr() if sp.issparse(m) else sp.csr_matrix(m_dense)
    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=vectors, mass=mass)


def _lanczos_extremes(
    apply_op: Callable[[np.ndarray], np.ndarray],
    apply_ip: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float,
    maxiter: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Extreme Ritz values of a self-adjoint operator in the inner product
    <x, y> = x' (apply_ip y), with full reorthogonalization.

    apply_op maps u -> F u; apply_ip realizes the inner-product matrix.
    Returns (most negative, most positive) converged Ritz values.
    """
    u = rng.standard_normal(n)
    z = apply_ip(u)
    beta = np.sqrt(u @ z)
    basis_u = [u / beta]
    basis_z = [z / beta]
    alphas: list[float] = []
    betas: list[float] = []
    prev = None
    for j in range(maxiter):
        fu = apply_op(basis_u[-1])
        alpha = basis_z[-1] @ fu
        alphas.append(float(alpha))
        r = fu - alpha * basis_u[-1]
        if j > 0:
            r -= betas[-1] * basis_u[-2]
        # full reorthogonalization in the ip-inner product, twice for stability
        for _ in range(2):
            coeffs = np.array([zb @ r for zb in basis_z])
            for c, ub in zip(coeffs, basis_u):
                r -= c * ub
        zr = apply_ip(r)
        beta2 = r @ zr
        beta = np.sqrt(max(beta2, 0.0))
        if len(alphas) == 1:
            tri = np.array(alphas)
        else:
            tri = sla.eigh_tridiagonal(alphas, betas, eigvals_only=True)
        if beta < 1e-14 or j == maxiter - 1 or len(alphas) == n:
            return float(tri[0]), float(tri[-1])
        betas.append(float(beta))
        basis_u.append(r / beta)
        basis_z.append(zr / beta)
        if prev is not None and len(tri) >= 2:
            lo_ok = abs(tri[0] - prev[0]) <= tol * max(abs(tri[0]), 1e-30)
            hi_ok = abs(tri[-1] - prev[-1]) <= tol * max(abs(tri[-1]), 1e-30)
            if lo_ok and hi_ok and j >= 10:
                return float(tri[0]), float(tri[-1])
        prev = (tri[0], tri[-1])
    return float(tri[0]), float(tri[-1])


def extreme_eigenvalues(
    op: Operator,
    binv: Operator,
    n: int,
    tol: float = 1e-6,
    op_solve: Callable[[np.ndarray], np.ndarray] | None = None,
    b_apply: Operator | None = None,
    maxiter: int = 300,
    seed: int = 7,
) -> tuple[float, float]:
    """Extreme |lambda| of the symmetric pencil L x = lambda B x.

    `op` applies L and `binv` applies B^{-1}.  The largest magnitude comes
    from Lanczos on L B^{-1} in the B^{-1} inner product.  The smallest
    magnitude is interior for indefinite pencils, so it is computed by
    shift-invert at zero (Lanczos on L^{-1} B in the B inner product), which
    needs the extra callbacks `op_solve` (solve with L) and `b_apply`
    (multiply by B).  Without them only the forward extremes are available,
    which is correct when the spectrum's smallest magnitude is an endpoint.
    """
    rng = np.random.default_rng(seed)
    apply_l = as_operator(op)
    apply_binv = as_operator(binv)

    def forward(u: np.ndarray) -> np.ndarray:
        return apply_l(apply_binv(u))

    lo, hi = _lanczos_extremes(forward, apply_binv, n, tol, maxiter, rng)
    lambda_max = max(abs(lo), abs(hi))

    if op_solve is None or b_apply is None:
        lambda_min = min(abs(lo), abs(hi))
        return lambda_min, lambda_max

    apply_bmat = as_operator(b_apply)

    def inverted(u: np.ndarray) -> np.ndarray:
        return op_solve(apply_bmat(u))

    lo_inv, hi_inv = _lanczos_extremes(inverted, apply_bmat, n, tol, maxiter, rng)
    mu_max = max(abs(lo_inv), abs(hi_inv))
    if mu_max <= 0:
        raise RuntimeError("shift-invert Lanczos failed to find a nonzero eigenvalue")
    return 1.0 / mu_max, lambda_max
