"""Condition-number studies of the coupling pencils on the branching geometry.

Two symmetric pencils are examined.  The mass pencil tests the spectral
equivalence of Pi Pi' with h^{-1} I:

    [ M   Pi' ] x = lambda diag(M, h^{-1} M_g) x
    [ Pi  0   ]

The energy pencil tests the fractional curve operator H_s against the
coupled Dirichlet energy:

    [ A   Pi' ] x = lambda diag(A + M, H_s) x
    [ Pi  0   ]

Both right-hand sides are SPD, so the spectra are real; the reported number
is kappa = max|lambda| / min|lambda|.  Problems up to DENSE_LIMIT total dofs
go through the dense generalized eigensolver; larger ones use Lanczos for
the largest magnitude plus shift-invert (sparse LU on the left-hand side)
for the smallest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import assemble_averaging, assemble_trace
from .fem import FunctionSpace, assemble_mass, assemble_stiffness
from .linalg import extreme_eigenvalues, generalized_symmetric_eig
from .meshing import embedded_curve, unit_cube_mesh, unit_square_mesh
from .preconditioning import FractionalOperator, build_fractional

DENSE_LIMIT = 5000

PencilKind = Literal["mass_coupling", "energy_coupling"]


@dataclass(frozen=True)
class PencilSpec:
    kind: PencilKind
    dimension: int
    n: int
    s: float | None = None      # energy pencil only
    radius: float = 0.02

    def __post_init__(self):
        if self.kind not in ("mass_coupling", "energy_coupling"):
            raise ValueError(f"unknown pencil kind {self.kind!r}")
        if self.kind == "energy_coupling" and self.s is None:
            raise ValueError("the energy pencil needs a fractional exponent")
        if self.kind == "mass_coupling" and self.s is not None:
            raise ValueError("the mass pencil carries no exponent")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")


@dataclass(frozen=True)
class ConditionResult:
    kappa: float
    lambda_min_abs: float
    lambda_max_abs: float
    method: Literal["dense", "lanczos"]


@dataclass
class _PencilOperators:
    lhs: sp.csr_matrix
    rhs_blocks: tuple
    n_omega: int
    n_gamma: int
    fractional: FractionalOperator | None
    s: float | None

    def rhs_dense(self) -> np.ndarray:
        top, bottom = self.rhs_blocks
        top = top.toarray() if sp.issparse(top) else top
        bottom = bottom.toarray() if sp.issparse(bottom) else bottom
        n, m = self.n_omega, self.n_gamma
        out = np.zeros((n + m, n + m))
        out[:n, :n] = top
        out[n:, n:] = bottom
        return out

    def rhs_apply(self, x: np.ndarray) -> np.ndarray:
        top, bottom = self.rhs_blocks
        n = self.n_omega
        out = np.empty_like(x)
        out[:n] = top @ x[:n]
        out[n:] = bottom @ x[n:]
        return out


def _study_spaces(spec: PencilSpec):
    mesh = unit_square_mesh(spec.n) if spec.dimension == 2 else unit_cube_mesh(spec.n)
    curve = embedded_curve(mesh, radius=spec.radius)
    omega_space = FunctionSpace(mesh)
    gamma_space = FunctionSpace(curve)
    if spec.dimension == 2:
        coupling = assemble_trace(omega_space, gamma_space, curve)
    else:
        coupling = assemble_averaging(omega_space, gamma_space, curve, radius=spec.radius)
    return mesh, omega_space, gamma_space, coupling


def build_pencil(spec: PencilSpec, omega_space: FunctionSpace,
                 gamma_space: FunctionSpace, coupling) -> _PencilOperators:
    m_omega = assemble_mass(omega_space)
    m_gamma = assemble_mass(gamma_space)
    pi = coupling.pi
    n, m = omega_space.dof_count, gamma_space.dof_count
    zero = sp.csr_matrix((m, m))
    if spec.kind == "mass_coupling":
        lhs = sp.bmat([[m_omega, pi.T], [pi, zero]], format="csr")
        h = omega_space.mesh.h
        rhs_blocks = (m_omega.tocsr(), ((1.0 / h) * m_gamma).tocsr())
        return _PencilOperators(lhs, rhs_blocks, n, m, None, None)
    a_omega = assemble_stiffness(omega_space)
    fractional = build_fractional(gamma_space)
    h_s = fractional.power_matrix(spec.s)
    lhs = sp.bmat([[a_omega, pi.T], [pi, zero]], format="csr")
    rhs_blocks = ((a_omega + m_omega).tocsr(), h_s)
    return _PencilOperators(lhs, rhs_blocks, n, m, fractional, spec.s)


def _condition_dense(ops: _PencilOperators) -> ConditionResult:
    dec = generalized_symmetric_eig(ops.lhs, ops.rhs_dense())
    eigenvalues = dec.eigenvalues
    magnitudes = np.abs(eigenvalues)
    lo, hi = float(magnitudes.min()), float(magnitudes.max())
    if lo < 1e-12 * hi:
        raise RuntimeError(
            "pencil has a numerically zero eigenvalue; coupling lost full row rank"
        )
    return ConditionResult(kappa=hi / lo, lambda_min_abs=lo, lambda_max_abs=hi,
                           method="dense")


def _condition_lanczos(ops: _PencilOperators, tol: float) -> ConditionResult:
    top, bottom = ops.rhs_blocks
    n, m = ops.n_omega, ops.n_gamma
    size = n + m
    top_solve = spla.factorized(top.tocsc())
    if ops.fractional is not None:
        frac, s = ops.fractional, ops.s
        bottom_solve = lambda v: frac.apply_inverse(s, v)
    else:
        bottom_factor = spla.factorized(bottom.tocsc())
        bottom_solve = bottom_factor

    def binv(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        out[:n] = top_solve(x[:n])
        out[n:] = bottom_solve(x[n:])
        return out

    lhs_solve = spla.factorized(ops.lhs.tocsc())
    lo, hi = extreme_eigenvalues(
        op=ops.lhs, binv=binv, n=size, tol=tol,
        op_solve=lambda v: lhs_solve(v), b_apply=ops.rhs_apply,
    )
    return ConditionResult(kappa=hi / lo, lambda_min_abs=lo, lambda_max_abs=hi,
                           method="lanczos")


def condition_number(spec: PencilSpec, tol: float = 1e-6) -> ConditionResult:
    """Spectral condition number of the pencil on the study geometry."""
    _, omega_space, gamma_space, coupling = _study_spaces(spec)
    ops = build_pencil(spec, omega_space, gamma_space, coupling)
    total = ops.n_omega + ops.n_gamma
    if total <= DENSE_LIMIT:
        return _condition_dense(ops)
    return _condition_lanczos(ops, tol)


def exponent_sweep(dimension: int, resolutions: list[int],
                   s_values: list[float]) -> dict:
    """kappa of the energy pencil per exponent and resolution.

    Returns the table plus the exponent whose kappa varies least across the
    resolutions (relative spread of the kappa column).
    """
    if any(not -1.0 <= s <= 0.0 for s in s_values):
        raise ValueError("exponents must lie in [-1, 0]")
    table: dict[float, list[float]] = {}
    for s in s_values:
        kappas = []
        for n in resolutions:
            spec = PencilSpec(kind="energy_coupling", dimension=dimension, n=n, s=s)
            kappas.append(condition_number(spec).kappa)
        table[s] = kappas
    spreads = {
        s: (max(v) - min(v)) / min(v) if min(v) > 0 else np.inf
        for s, v in table.items()
    }
    best = min(spreads, key=lambda s: spreads[s])
    return {"table": table, "spreads": spreads, "most_stable_exponent": best}
