"""Backward-Euler block system for the coupled bulk/curve diffusion problem.

One implicit step solves the symmetric saddle-point system

    [ M + k D_o A          0         -k b Pi' ] [u ]   [ M u_old  + k f_o ]
    [      0          M_g + k D_g A_g  k b M_g ] [uh] = [ M_g uh_old + k f_g ]
    [ -k b Pi           k b M_g      -g k M_g ] [lm]   [        0          ]

whose multiplier row enforces the membrane flux law g*lm = b*(uh - avg(u))
weakly.  With homogeneous Neumann walls and no inlet condition the sum of
bulk and curve mass is conserved exactly: testing the first two rows with
constants telescopes because the coupling operator reproduces constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coupling import CouplingOperator
from .fem import FemVector, FunctionSpace, assemble_mass, assemble_stiffness
from .linalg import SolverReport, minres
from .preconditioning import BlockPreconditioner, ProblemParameters

DENSE_DOF_LIMIT = 3000


@dataclass
class BlockSystem:
    """Assembled 3x3 block operator with its stored blocks."""

    a_omega_block: sp.csr_matrix    # M + k D_o A on the bulk
    a_gamma_block: sp.csr_matrix    # M_g + k D_g A_g on the curve
    pi: sp.csr_matrix
    mass_gamma: sp.csr_matrix
    mass_omega: sp.csr_matrix
    parameters: ProblemParameters

    @property
    def n_omega(self) -> int:
        return self.a_omega_block.shape[0]

    @property
    def n_gamma(self) -> int:
        return self.a_gamma_block.shape[0]

    @property
    def offsets(self) -> tuple[int, int, int]:
        n, m = self.n_omega, self.n_gamma
        return (0, n, n + m)

    @property
    def total_size(self) -> int:
        return self.n_omega + 2 * self.n_gamma

    def coupling_scale(self) -> float:
        return self.parameters.k * self.parameters.beta

    def apply(self, x: np.ndarray) -> np.ndarray:
        n, m = self.n_omega, self.n_gamma
        kb = self.coupling_scale()
        gk = self.parameters.gamma * self.parameters.k
        u, uh, lm = x[:n], x[n:n + m], x[n + m:]
        r1 = self.a_omega_block @ u - kb * (self.pi.T @ lm)
        r2 = self.a_gamma_block @ uh + kb * (self.mass_gamma @ lm)
        r3 = -kb * (self.pi @ u) + kb * (self.mass_gamma @ uh) - gk * (self.mass_gamma @ lm)
        return np.concatenate([r1, r2, r3])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def to_sparse(self) -> sp.csr_matrix:
        kb = self.coupling_scale()
        gk = self.parameters.gamma * self.parameters.k
        return sp.bmat(
            [
                [self.a_omega_block, None, -kb * self.pi.T],
                [None, self.a_gamma_block, kb * self.mass_gamma],
                [-kb * self.pi, kb * self.mass_gamma, -gk * self.mass_gamma],
            ],
            format="csr",
        )


@dataclass
class State:
    u: FemVector
    u_hat: FemVector
    lam: FemVector
    time: float = 0.0


@dataclass
class TimeStepProblem:
    system: BlockSystem
    rhs: np.ndarray
    dirichlet: dict[int, float] = field(default_factory=dict)  # curve dof -> value for u_hat


def assemble_system(
    omega_space: FunctionSpace,
    gamma_space: FunctionSpace,
    coupling: CouplingOperator,
    params: ProblemParameters,
    matrices: dict | None = None,
) -> BlockSystem:
    """Build the time-step operator from assembled pieces."""
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
    if coupling.pi.shape != (gamma_space.dof_count, omega_space.dof_count):
        raise ValueError("coupling operator shape does not match the spaces")
    return BlockSystem(
        a_omega_block=(m_omega + params.k * params.d_omega * a_omega).tocsr(),
        a_gamma_block=(m_gamma + params.k * params.d_gamma * a_gamma).tocsr(),
        pi=coupling.pi,
        mass_gamma=m_gamma.tocsr(),
        mass_omega=m_omega.tocsr(),
        parameters=params,
    )


def step_rhs(system: BlockSystem, u_old: np.ndarray, uh_old: np.ndarray,
             f_omega: np.ndarray | None = None, f_gamma: np.ndarray | None = None) -> np.ndarray:
    """Right-hand side carrying the previous state and optional weak sources."""
    b1 = system.mass_omega @ u_old
    b2 = system.mass_gamma @ uh_old
    if f_omega is not None:
        b1 = b1 + system.parameters.k * (system.mass_omega @ f_omega)
    if f_gamma is not None:
        b2 = b2 + system.parameters.k * (system.mass_gamma @ f_gamma)
    return np.concatenate([b1, b2, np.zeros(system.n_gamma)])


def _apply_dirichlet(matrix: sp.csr_matrix, rhs: np.ndarray,
                     rows: np.ndarray, values: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric row/column elimination keeping unit diagonals on constraints."""
    lifted = np.zeros(matrix.shape[0])
    lifted[rows] = values
    rhs = rhs - matrix @ lifted
    rhs[rows] = values
    keep = np.ones(matrix.shape[0])
    keep[rows] = 0.0
    d_keep = sp.diags(keep)
    pinned = sp.diags(1.0 - keep)
    matrix = d_keep @ matrix @ d_keep + pinned
    return matrix.tocsr(), rhs


class _DenseStepSolver:
    """LU factorization of the (Dirichlet-reduced) system, reused across steps."""

    def __init__(self, system: BlockSystem, dirichlet_rows: np.ndarray):
        self.system = system
        self.dirichlet_rows = dirichlet_rows
        self.full = system.to_sparse()
        matrix = self.full
        if dirichlet_rows.size:
            # values enter through the rhs each step; the matrix reduction is fixed
            matrix, _ = _apply_dirichlet(matrix, np.zeros(system.total_size),
                                         dirichlet_rows, np.zeros(dirichlet_rows.size))
        self.matrix = matrix
        self.lu = sla.lu_factor(matrix.toarray())

    def solve(self, rhs: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, SolverReport]:
        if self.dirichlet_rows.size:
            lifted = np.zeros(self.full.shape[0])
            lifted[self.dirichlet_rows] = values
            rhs = rhs - self.full @ lifted
            rhs[self.dirichlet_rows] = values
        x = sla.lu_solve(self.lu, rhs)
        residual = float(np.linalg.norm(self.matrix @ x - rhs))
        return x, SolverReport(1, True, residual, [residual])


def step(
    problem: TimeStepProblem,
    precond: BlockPreconditioner | None = None,
    atol: float = 1e-12,
    maxiter: int = 500,
    dense_solver: _DenseStepSolver | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """Solve one implicit step; dense LU below DENSE_DOF_LIMIT, else MinRes."""
    system = problem.system
    rows = np.array(sorted(problem.dirichlet), dtype=int) + system.n_omega
    values = np.array([problem.dirichlet[k] for k in sorted(problem.dirichlet)])
    if dense_solver is not None:
        return dense_solver.solve(problem.rhs.copy(), values)
    if precond is None and system.total_size <= DENSE_DOF_LIMIT:
        solver = _DenseStepSolver(system, rows)
        return solver.solve(problem.rhs.copy(), values)
    if precond is None:
        raise ValueError("a preconditioner is required above the dense size limit")
    matrix = system.to_sparse()
    rhs = problem.rhs.copy()
    if rows.size:
        matrix, rhs = _apply_dirichlet(matrix, rhs, rows, values)
    x, report = minres(matrix, precond, rhs, atol=atol, maxiter=maxiter)
    if not report.converged:
        raise RuntimeError(
            f"time step solve did not converge: residual {report.final_residual_norm:.3e}"
        ) from None
    return x, report


@dataclass
class TransientHistory:
    times: np.ndarray
    bulk_mass: np.ndarray
    curve_mass: np.ndarray
    c_t: np.ndarray
    c_v: np.ndarray
    final_state: State
    reports: list[SolverReport]


def run_transient(
    omega_space: FunctionSpace,
    gamma_space: FunctionSpace,
    system: BlockSystem,
    initial: State,
    n_steps: int,
    inlet_schedule: Callable[[int], float | None] | None = None,
    inlet_dofs: np.ndarray | None = None,
    weights_omega: np.ndarray | None = None,
    weights_gamma: np.ndarray | None = None,
    precond: BlockPreconditioner | None = None,
    atol: float = 1e-12,
) -> TransientHistory:
    """March the backward-Euler scheme, recording masses and mean concentrations.

    inlet_schedule maps the step index (1-based) to the inlet value for u_hat,
    or None for an unconstrained step.  c_t is the bulk average of u; c_v is
    the cross-section weighted curve average of u_hat (weights_gamma defaults
    to the plain curve volume weights).
    """
    n, m = system.n_omega, system.n_gamma
    ones_n, ones_m = np.ones(n), np.ones(m)
    w_omega = weights_omega if weights_omega is not None else system.mass_omega @ ones_n
    w_gamma = weights_gamma if weights_gamma is not None else system.mass_gamma @ ones_m
    vol_omega = float(w_omega @ ones_n)
    vol_gamma = float(w_gamma @ ones_m)

    u = initial.u.coefficients.copy()
    uh = initial.u_hat.coefficients.copy()
    k = system.parameters.k

    dense_solver = None
    use_dense = precond is None and system.total_size <= DENSE_DOF_LIMIT
    times = [initial.time]
    bulk_mass = [float((system.mass_omega @ u) @ ones_n)]
    curve_mass = [float((system.mass_gamma @ uh) @ ones_m)]
    c_t = [float(w_omega @ u) / vol_omega]
    c_v = [float(w_gamma @ uh) / vol_gamma]
    reports: list[SolverReport] = []
    lam = np.zeros(m)

    constrained = inlet_dofs if inlet_dofs is not None else np.array([], dtype=int)
    for it in range(1, n_steps + 1):
        dirichlet: dict[int, float] = {}
        if inlet_schedule is not None:
            value = inlet_schedule(it)
            if value is not None:
                dirichlet = {int(d): float(value) for d in constrained}
        problem = TimeStepProblem(system, step_rhs(system, u, uh), dirichlet)
        if use_dense:
            if dense_solver is None or set(dirichlet) != set(getattr(dense_solver, "_keys", [])):
                rows = np.array(sorted(dirichlet), dtype=int) + n
                dense_solver = _DenseStepSolver(system, rows)
                dense_solver._keys = sorted(dirichlet)
            x, report = step(problem, dense_solver=dense_solver)
        else:
            x, report = step(problem, precond=precond, atol=atol)
        u, uh, lam = x[:n], x[n:n + m], x[n + m:]
        reports.append(report)
        times.append(initial.time + it * k)
        bulk_mass.append(float((system.mass_omega @ u) @ ones_n))
        curve_mass.append(float((system.mass_gamma @ uh) @ ones_m))
        c_t.append(float(w_omega @ u) / vol_omega)
        c_v.append(float(w_gamma @ uh) / vol_gamma)

    final = State(
        u=FemVector(omega_space, u),
        u_hat=FemVector(gamma_space, uh),
        lam=FemVector(gamma_space, lam),
        time=times[-1],
    )
    return TransientHistory(
        times=np.array(times),
        bulk_mass=np.array(bulk_mass),
        curve_mass=np.array(curve_mass),
        c_t=np.array(c_t),
        c_v=np.array(c_v),
        final_state=final,
        reports=reports,
    )
