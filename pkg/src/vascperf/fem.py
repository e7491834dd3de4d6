"""P1 Lagrange spaces and exact mass/stiffness assembly on bulk and curve meshes.

Element integrals of products of linear basis functions are evaluated with
the closed simplex formulas, so the assembled matrices carry no quadrature
error.  Degrees of freedom coincide with mesh vertices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .meshing import CurveMesh, Mesh


@dataclass(frozen=True)
class FunctionSpace:
    """Continuous piecewise-linear space; one dof per mesh vertex."""

    mesh: Union[Mesh, CurveMesh]

    @property
    def dof_count(self) -> int:
        return self.mesh.vertices.shape[0]

    @property
    def dof_coords(self) -> np.ndarray:
        return self.mesh.vertices

    @property
    def is_curve(self) -> bool:
        return isinstance(self.mesh, CurveMesh)


@dataclass
class FemVector:
    """Coefficient vector attached to its function space."""

    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient length {self.coefficients.shape} does not match "
                f"dof count {self.space.dof_count}"
            )


def _cells_and_coords(space: FunctionSpace) -> tuple[np.ndarray, np.ndarray]:
    mesh = space.mesh
    if isinstance(mesh, CurveMesh):
        return mesh.segments, mesh.vertices
    return mesh.cells, mesh.vertices


def _simplex_geometry(coords: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell measure and P1 basis gradients.

    Returns (measures, gradients) with gradients shaped (nc, nloc, dim).
    Curve segments are handled by arclength parametrization.
    """
    verts = coords[cells]
    nloc = cells.shape[1]
    if nloc == 2:
        tang = verts[:, 1, :] - verts[:, 0, :]
        length = np.linalg.norm(tang, axis=1)
        if np.any(length <= 0):
            bad = int(np.argmin(length))
            raise ValueError(f"degenerate segment at cell {bad}")
        unit = tang / length[:, None]
        grads = np.stack([-unit / length[:, None], unit / length[:, None]], axis=1)
        return length, grads

    edges = verts[:, 1:, :] - verts[:, :1, :]
    det = np.linalg.det(edges)
    factor = 2.0 if nloc == 3 else 6.0
    measure = np.abs(det) / factor
    if np.any(measure <= 0):
        bad = int(np.argmin(measure))
        raise ValueError(f"degenerate cell at index {bad}")
    inv = np.linalg.inv(edges)
    # gradients of barycentric coordinates: rows of inv give grads of lambda_1..,
    # lambda_0 gradient closes the partition of unity
    grads_rest = np.transpose(inv, (0, 2, 1))
    grad0 = -grads_rest.sum(axis=1, keepdims=True)
    grads = np.concatenate([grad0, grads_rest], axis=1)
    return measure, grads


def _scatter(cells: np.ndarray, local: np.ndarray, ndof: int) -> sp.csr_matrix:
    nloc = cells.shape[1]
    rows = np.repeat(cells, nloc, axis=1).ravel()
    cols = np.tile(cells, (1, nloc)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(ndof, ndof))
    out = mat.tocsr()
    out.sum_duplicates()
    return out


def assemble_mass(space: FunctionSpace) -> sp.csr_matrix:
    """Mass matrix, entries int(phi_i phi_j); SPD by construction."""
    cells, coords = _cells_and_coords(space)
    measure, _ = _simplex_geometry(coords, cells)
    nloc = cells.shape[1]
    # exact P1 product integral: |T| (1 + delta_ij) / ((d+1)(d+2))
    base = (np.ones((nloc, nloc)) + np.eye(nloc)) / (nloc * (nloc + 1))
    local = measure[:, None, None] * base[None, :, :]
    return _scatter(cells, local, space.dof_count)


def assemble_stiffness(space: FunctionSpace) -> sp.csr_matrix:
    """Stiffness matrix, entries int(grad phi_i . grad phi_j); constants in kernel."""
    cells, coords = _cells_and_coords(space)
    measure, grads = _simplex_geometry(coords, cells)
    local = measure[:, None, None] * np.einsum("cid,cjd->cij", grads, grads)
    return _scatter(cells, local, space.dof_count)


def interpolate(space: FunctionSpace, f: Callable[[np.ndarray], float]) -> FemVector:
    """Vertex interpolant: coefficient i is f evaluated at dof i."""
    values = np.array([f(x) for x in space.dof_coords], dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"function returned non-finite value at dof {bad}")
    return FemVector(space, values)
