"""Block-diagonal preconditioner for the coupled time-step system.

The two parabolic blocks are inverted to high accuracy with CG, which makes
the preconditioner exact in effect while staying matrix-free.  The multiplier
block applies S = S1^{-1} + S2^{-1}: S1 is a rescaled curve mass matrix via
the spectral equivalence of Pi Pi' with h^{-1} I, and S2^{-1} has the closed
spectral form built from the M-orthonormal eigendecomposition of the curve
operator (stiffness + mass), which also provides arbitrary fractional powers
H_s = M U Lambda^s U' M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FunctionSpace, assemble_mass, assemble_stiffness
from .linalg import SpectralDecomposition, conjugate_gradient, generalized_symmetric_eig


@dataclass(frozen=True)
class ProblemParameters:
    """Scalar coefficients of the coupled system and its preconditioner."""

    d_omega: float = 1.0     # bulk conductivity
    d_gamma: float = 1.0     # curve conductivity
    beta: float = 1.0        # membrane permeability (coupling strength)
    k: float = 1.0           # time step
    gamma: float = 1.0       # multiplier weight
    radius: float = 0.02     # averaging radius
    exponent_s: float = -0.5 # fractional exponent in the Schur approximation

    def __post_init__(self):
        if min(self.d_omega, self.d_gamma, self.beta, self.k) <= 0:
            raise ValueError("d_omega, d_gamma, beta and k must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not -1.0 <= self.exponent_s <= 0.0:
            raise ValueError("fractional exponent must lie in [-1, 0]")


def default_exponent(dim: int) -> float:
    """Dimension-specific fractional exponent: -1/2 in 2D, -0.55 in 3D."""
    return -0.5 if dim == 2 else -0.55


class FractionalOperator:
    """Fractional powers of (curve stiffness + mass) through its eigenpairs."""

    def __init__(self, decomposition: SpectralDecomposition):
        self.decomposition = decomposition
        self._mu = decomposition.mass @ decomposition.eigenvectors

    def power_matrix(self, s: float) -> np.ndarray:
        """Dense H_s = M U Lambda^s U' M."""
        lam = self.decomposition.eigenvalues
        return self._mu @ ((lam**s)[:, None] * self._mu.T)

    def apply(self, s: float, v: np.ndarray) -> np.ndarray:
        """H_s v without materializing the matrix."""
        lam = self.decomposition.eigenvalues
        return self._mu @ ((lam**s) * (self._mu.T @ v))

    def apply_inverse(self, s: float, v: np.ndarray) -> np.ndarray:
        """H_s^{-1} v = U Lambda^{-s} U' v."""
        u = self.decomposition.eigenvectors
        lam = self.decomposition.eigenvalues
        return u @ (lam ** (-s) * (u.T @ v))


def build_fractional(gamma_space: FunctionSpace) -> FractionalOperator:
    """Eigendecomposition of the pencil (stiffness + mass, mass) on the curve."""
    mass = assemble_mass(gamma_space)
    stiff = assemble_stiffness(gamma_space)
    decomposition = generalized_symmetric_eig(stiff + mass, mass)
    return FractionalOperator(decomposition)


@dataclass
class SchurApprox:
    """Sum-of-inverses approximation of the multiplier Schur complement."""

    s1_scale: float
    mass_gamma: sp.csr_matrix
    s2_diagonal: np.ndarray      # the inverted spectral diagonal of S2
    eigenvectors: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.apply_s1_inverse(v) + self.apply_s2_inverse(v)

    def apply_s1_inverse(self, v: np.ndarray) -> np.ndarray:
        x, report = conjugate_gradient(self.mass_gamma, v, rtol=1e-13, maxiter=2000)
        if not report.converged:
            raise RuntimeError("curve mass solve in S1 failed to converge")
        return x / self.s1_scale

    def apply_s2_inverse(self, v: np.ndarray) -> np.ndarray:
        u = self.eigenvectors
        return u @ (self.s2_diagonal * (u.T @ v))


def schur_apply(schur: SchurApprox, v: np.ndarray) -> np.ndarray:
    """S v = S1^{-1} v + S2^{-1} v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != schur.mass_gamma.shape[0]:
        raise ValueError("vector length does not match the curve dof count")
    return schur.apply(v)


def build_schur(
    fractional: FractionalOperator,
    mass_gamma: sp.csr_matrix,
    params: ProblemParameters,
    h: float,
) -> SchurApprox:
    """Assemble the Schur approximation for one parameter set.

    S1 = (gamma + (k beta)^2 (1 + 1/h)) M and S2^{-1} is the closed spectral
    form with the configured fractional exponent in the bulk term.
    """
    kb2 = (params.k * params.beta) ** 2
    s1_scale = params.gamma + kb2 * (1.0 + 1.0 / h)
    lam = fractional.decomposition.eigenvalues
    d2 = params.gamma + kb2 / (params.k * params.d_omega) * lam**params.exponent_s \
        + kb2 / (params.k * params.d_gamma) / lam
    return SchurApprox(
        s1_scale=s1_scale,
        mass_gamma=mass_gamma,
        s2_diagonal=1.0 / d2,
        eigenvectors=fractional.decomposition.eigenvectors,
    )


class BlockPreconditioner:
    """Diagonal Riesz-map preconditioner: two parabolic solves and the Schur map.

    The leading blocks are (M + k D A)^{-1} realized by CG to rtol 1e-12; the
    third block applies the SchurApprox.  The operator is symmetric positive
    definite and reentrant (no state is mutated during application).
    """

    def __init__(
        self,
        block_omega: sp.csr_matrix,
        block_gamma: sp.csr_matrix,
        schur: SchurApprox,
        parameters: ProblemParameters,
        cg_rtol: float = 1e-12,
        cg_maxiter: int = 20000,
    ):
        self.block_omega = block_omega
        self.block_gamma = block_gamma
        self.schur = schur
        self.parameters = parameters
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        self.n_omega = block_omega.shape[0]
        self.n_gamma = block_gamma.shape[0]

    @property
    def total_size(self) -> int:
        return self.n_omega + 2 * self.n_gamma

    def _solve(self, matrix: sp.csr_matrix, rhs: np.ndarray, name: str) -> np.ndarray:
        x, report = conjugate_gradient(matrix, rhs, rtol=self.cg_rtol, maxiter=self.cg_maxiter)
        if not report.converged:
            raise RuntimeError(
                f"inner CG on the {name} block stalled at residual "
                f"{report.final_residual_norm:.3e}"
            )
        return x

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.total_size:
            raise ValueError(
                f"residual length {r.shape[0]} does not match block sizes "
                f"({self.n_omega}, {self.n_gamma}, {self.n_gamma})"
            )
        n, m = self.n_omega, self.n_gamma
        out = np.empty_like(r)
        out[:n] = self._solve(self.block_omega, r[:n], "bulk")
        out[n:n + m] = self._solve(self.block_gamma, r[n:n + m], "curve")
        out[n + m:] = self.schur.apply(r[n + m:])
        return out

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.apply(r)


def apply_preconditioner(precond: BlockPreconditioner, r: np.ndarray) -> np.ndarray:
    return precond.apply(r)


def build_preconditioner(
    omega_space: FunctionSpace,
    gamma_space: FunctionSpace,
    params: ProblemParameters,
    fractional: FractionalOperator | None = None,
    matrices: dict | None = None,
) -> BlockPreconditioner:
    """Construct the preconditioner from spaces and parameters.

    Pre-assembled matrices (keys m_omega, a_omega, m_gamma, a_gamma) and a
    fractional operator can be supplied to share work across parameter sets.
    """
    mats = matrices or {}
    m_omega = mats.get("m_omega")
    if m_omega is None:
        m_omega = assemble_mass(omega_space)
    a_omega = mats.get("a_omega")
    if a_omega is None:
        a_omega = assemble_stiffness(omega_space)
    m_gamma = mats.get("m_gamma")
    if m_gamma is None:
        m_gamma = assemble_mass(gamma_space)
    a_gamma = mats.get("a_gamma")
    if a_gamma is None:
        a_gamma = assemble_stiffness(gamma_space)
    if fractional is None:
        fractional = FractionalOperator(generalized_symmetric_eig(a_gamma + m_gamma, m_gamma))
    h = omega_space.mesh.h
    block_omega = (m_omega + params.k * params.d_omega * a_omega).tocsr()
    block_gamma = (m_gamma + params.k * params.d_gamma * a_gamma).tocsr()
    schur = build_schur(fractional, m_gamma, params, h)
    return BlockPreconditioner(block_omega, block_gamma, schur, params)


def scalar_model_matrices(
    alpha1: float, alpha2: float, beta1: float, beta2: float, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """The 3x3 system matrix and its diagonal preconditioner."""
    a = np.array([
        [1.0 + alpha1, 0.0, beta1],
        [0.0, 1.0 + alpha2, beta2],
        [beta1, beta2, -gamma],
    ])
    s = 1.0 / (gamma + beta1**2 + beta2**2) \
        + 1.0 / (gamma + beta1**2 / alpha1 + beta2**2 / alpha2)
    b = np.diag([1.0 / (1.0 + alpha1), 1.0 / (1.0 + alpha2), s])
    return a, b


def scalar_model_condition(
    alpha1: float, alpha2: float, beta1: float, beta2: float, gamma: float
) -> float:
    """Spectral condition number of the preconditioned 3x3 model.

    Computed as the SVD condition of the symmetrized product B^{1/2} A B^{1/2},
    whose singular values are the eigenvalue magnitudes of B A.  The raw
    nonsymmetric product has the same spectrum but its singular values are
    polluted by the diagonal scaling of B, so they are not the robustness
    metric.
    """
    if min(alpha1, alpha2, beta1, beta2, gamma) <= 0:
        raise ValueError("all scalar-model parameters must be positive")
    a, b = scalar_model_matrices(alpha1, alpha2, beta1, beta2, gamma)
    b_half = np.sqrt(b)
    sv = np.linalg.svd(b_half @ a @ b_half, compute_uv=False)
    return float(sv[0] / sv[-1])
