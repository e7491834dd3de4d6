"""Bulk-to-curve coupling operators.

The rectangular matrix Pi has one row per curve dof and one column per bulk
dof; entry (q, i) is the curve integral of psi_q times the reduced bulk basis
function phi_i.  In 2D the reduction is the trace along the curve; in 3D it
is the average of phi_i over a circle of radius R centered on the curve in
the plane orthogonal to the local segment tangent.  Rows are assembled
segment by segment with 2-point Gauss quadrature in arclength, so the branch
vertex simply accumulates contributions from its incident segments and no
tangent needs to be defined there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FunctionSpace
from .meshing import CurveMesh, Mesh

# 2-point Gauss positions on the unit interval; exact through cubics
_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True)
class CouplingOperator:
    """Sparse weak-form coupling matrix with its geometric metadata."""

    pi: sp.csr_matrix            # (curve dofs, bulk dofs)
    radius_field: np.ndarray     # radius per curve vertex (zeros for trace)
    quadrature_points_per_circle: int


def _locate_p1_square(point: np.ndarray, n: int, lo: float, scale: float):
    """P1 vertex ids and basis values at a point of the structured 2D mesh."""
    p = (np.clip(point, lo, lo + scale) - lo) / scale * n
    cell = np.minimum(p.astype(int), n - 1)
    xi, eta = p - cell
    i, j = int(cell[0]), int(cell[1])
    v00 = i * (n + 1) + j
    v10 = v00 + (n + 1)
    v01 = v00 + 1
    v11 = v10 + 1
    if eta <= xi:  # lower right triangle (v00, v10, v11)
        return (v00, v10, v11), np.array([1.0 - xi, xi - eta, eta])
    return (v00, v11, v01), np.array([1.0 - eta, xi, eta - xi])


def _locate_p1_cube(point: np.ndarray, n: int, lo: float, scale: float):
    """P1 vertex ids and basis values at a point of the Kuhn-triangulated cube."""
    p = (np.clip(point, lo, lo + scale) - lo) / scale * n
    cell = np.minimum(p.astype(int), n - 1)
    loc = p - cell
    order = np.argsort(-loc, kind="stable")
    s = loc[order]
    weights = np.array([1.0 - s[0], s[0] - s[1], s[1] - s[2], s[2]])
    ids = []
    cur = cell.copy()
    ids.append(((cur[0] * (n + 1) + cur[1]) * (n + 1) + cur[2]))
    for axis in order:
        cur = cur.copy()
        cur[axis] += 1
        ids.append(((cur[0] * (n + 1) + cur[1]) * (n + 1) + cur[2]))
    return tuple(int(v) for v in ids), weights


def _bulk_locator(mesh: Mesh):
    lo = float(mesh.vertices.min())
    hi = float(mesh.vertices.max())
    scale = hi - lo
    n = int(round(scale / mesh.h))
    if mesh.dim == 2:
        return lambda p: _locate_p1_square(p, n, lo, scale)
    return lambda p: _locate_p1_cube(p, n, lo, scale)


def _tangent_frame(tangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(tangent[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(tangent, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(tangent, e1)
    return e1, e2


def assemble_trace(
    omega_space: FunctionSpace, gamma_space: FunctionSpace, curve: CurveMesh
) -> CouplingOperator:
    """2D coupling: entries (psi_q, phi_i|_curve) by exact segment integration.

    Curve vertices must be bulk vertices; the bulk trace restricted to a
    segment is again P1 in arclength, so 2-point Gauss is exact.
    """
    mesh = omega_space.mesh
    if mesh.dim != 2:
        raise ValueError("trace coupling is the 2D reduction; use assemble_averaging in 3D")
    locate = _bulk_locator(mesh)
    bulk_ids = set(range(omega_space.dof_count))
    for p in curve.parent_vertex:
        if int(p) not in bulk_ids:
            raise ValueError(f"curve vertex parent {p} is not a bulk vertex")

    rows, cols, vals = [], [], []
    for a, b in curve.segments:
        xa, xb = curve.vertices[a], curve.vertices[b]
        length = float(np.linalg.norm(xb - xa))
        for g in _GAUSS2:
            x = xa + g * (xb - xa)
            weight = length / 2.0
            ids, phis = locate(x)
            for q, psi in ((int(a), 1.0 - g), (int(b), g)):
                for i, phi in zip(ids, phis):
                    if phi != 0.0:
                        rows.append(q)
                        cols.append(i)
                        vals.append(psi * weight * phi)
    pi = sp.coo_matrix(
        (vals, (rows, cols)), shape=(gamma_space.dof_count, omega_space.dof_count)
    ).tocsr()
    pi.sum_duplicates()
    return CouplingOperator(pi=pi, radius_field=np.zeros(curve.num_vertices),
                            quadrature_points_per_circle=0)


def assemble_averaging(
    omega_space: FunctionSpace,
    gamma_space: FunctionSpace,
    curve: CurveMesh,
    radius: float | np.ndarray | None = None,
    nq: int = 16,
    refine_tol: float | None = 1e-9,
) -> CouplingOperator:
    """3D coupling: psi_q weighted circle averages of the bulk basis.

    At each of the two Gauss points per segment, the bulk basis is averaged
    over nq equispaced points on the circle of the local radius centered at
    the Gauss point in the plane orthogonal to the segment tangent (trapezoid
    rule, spectrally accurate for smooth integrands).  When refine_tol is
    set, nq is doubled until the operator entries change by less than the
    tolerance.  Circle points are clamped componentwise into the mesh box;
    only circles near domain corners/edges can protrude and the partition of
    unity keeps constants exact either way.
    """
    mesh = omega_space.mesh
    if mesh.dim != 3:
        raise ValueError("circle averaging requires a 3D bulk mesh")
    if radius is None:
        radii = curve.radii.astype(float)
    elif np.isscalar(radius):
        if radius <= 0:
            raise ValueError("averaging radius must be positive")
        radii = np.full(curve.num_vertices, float(radius))
    else:
        radii = np.asarray(radius, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("averaging radius must be positive")

    def build(points_per_circle: int) -> sp.csr_matrix:
        locate = _bulk_locator(mesh)
        thetas = 2.0 * np.pi * np.arange(points_per_circle) / points_per_circle
        cth, sth = np.cos(thetas), np.sin(thetas)
        rows, cols, vals = [], [], []
        for a, b in curve.segments:
            xa, xb = curve.vertices[a], curve.vertices[b]
            length = float(np.linalg.norm(xb - xa))
            tangent = (xb - xa) / length
            e1, e2 = _tangent_frame(tangent)
            for g in _GAUSS2:
                x = xa + g * (xb - xa)
                r_here = (1.0 - g) * radii[a] + g * radii[b]
                weight = length / 2.0
                circle = x[None, :] + r_here * (cth[:, None] * e1 + sth[:, None] * e2)
                acc: dict[int, float] = {}
                for y in circle:
                    ids, phis = locate(y)
                    for i, phi in zip(ids, phis):
                        acc[i] = acc.get(i, 0.0) + phi / points_per_circle
                for q, psi in ((int(a), 1.0 - g), (int(b), g)):
                    for i, avg in acc.items():
                        rows.append(q)
                        cols.append(i)
                        vals.append(psi * weight * avg)
        pi = sp.coo_matrix(
            (vals, (rows, cols)), shape=(gamma_space.dof_count, omega_space.dof_count)
        ).tocsr()
        pi.sum_duplicates()
        return pi

    pi = build(nq)
    used = nq
    if refine_tol is not None:
        while used < 512:
            finer = build(2 * used)
            if abs(finer - pi).max() < refine_tol:
                pi = finer
                used *= 2
                break
            pi = finer
            used *= 2
    return CouplingOperator(pi=pi, radius_field=radii, quadrature_points_per_circle=used)


def apply_adjoint(op: CouplingOperator, mu: np.ndarray) -> np.ndarray:
    """Transpose product Pi' mu: the curve load smeared onto bulk dofs."""
    mu = np.asarray(mu, dtype=float)
    if op.pi.shape[0] != mu.shape[0]:
        raise ValueError(
            f"dimension mismatch: operator has {op.pi.shape[0]} curve dofs, "
            f"vector has {mu.shape[0]}"
        )
    return op.pi.T @ mu
