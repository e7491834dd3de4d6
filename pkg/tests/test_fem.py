import numpy as np
import pytest

from vascperf.fem import FemVector, FunctionSpace, assemble_mass, assemble_stiffness, interpolate
from vascperf.meshing import CurveMesh, embedded_curve, unit_cube_mesh, unit_square_mesh


def interval_curve(n):
    """Unit interval as a curve embedded along the x-axis of a 2D box."""
    xs = np.linspace(0.0, 1.0, n + 1)
    vertices = np.column_stack([xs, np.zeros(n + 1)])
    segments = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return CurveMesh(vertices=vertices, segments=segments,
                     parent_vertex=np.arange(n + 1), radii=np.ones(n + 1))


class TestMass:
    def test_interval_hand_integration(self):
        space = FunctionSpace(interval_curve(2))
        m = assemble_mass(space).toarray()
        h = 0.5
        expected = h / 6 * np.array([[2.0, 1, 0], [1, 4, 1], [0, 1, 2]])
        assert np.abs(m - expected).max() < 1e-14

    @pytest.mark.parametrize("build,measure", [
        (lambda: FunctionSpace(unit_square_mesh(8)), 1.0),
        (lambda: FunctionSpace(unit_cube_mesh(4)), 1.0),
        (lambda: FunctionSpace(embedded_curve(unit_square_mesh(8))), 1.25),
        (lambda: FunctionSpace(embedded_curve(unit_cube_mesh(4))), 1.25),
    ])
    def test_partition_of_unity(self, build, measure):
        space = build()
        m = assemble_mass(space)
        ones = np.ones(space.dof_count)
        assert abs(ones @ (m @ ones) - measure) < 1e-12

    def test_symmetry(self):
        m = assemble_mass(FunctionSpace(unit_square_mesh(4)))
        assert abs(m - m.T).max() == 0.0

    def test_spd(self):
        m = assemble_mass(FunctionSpace(unit_square_mesh(4))).toarray()
        eigenvalues = np.linalg.eigvalsh(m)
        assert eigenvalues.min() > 0


class TestStiffness:
    def test_interval_hand_integration(self):
        space = FunctionSpace(interval_curve(2))
        a = assemble_stiffness(space).toarray()
        h = 0.5
        expected = 1 / h * np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])
        assert np.abs(a - expected).max() < 1e-13

    @pytest.mark.parametrize("space", [
        FunctionSpace(unit_square_mesh(4)),
        FunctionSpace(unit_cube_mesh(2)),
    ])
    def test_constants_in_kernel(self, space):
        a = assemble_stiffness(space)
        assert np.abs(a @ np.ones(space.dof_count)).max() < 1e-12

    def test_five_point_stencil_equivalence(self):
        # interior vertex of the n=2 square carries the classic diagonal 4
        space = FunctionSpace(unit_square_mesh(2))
        a = assemble_stiffness(space).toarray()
        center = 1 * 3 + 1
        assert abs(a[center, center] - 4.0) < 1e-13

    def test_positive_semidefinite_random_probes(self):
        space = FunctionSpace(unit_square_mesh(6))
        a = assemble_stiffness(space)
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.standard_normal(space.dof_count)
            assert x @ (a @ x) >= -1e-12

    def test_energy_zero_only_for_constants(self):
        space = FunctionSpace(unit_square_mesh(4))
        a = assemble_stiffness(space).toarray()
        eigenvalues = np.linalg.eigvalsh(a)
        assert eigenvalues[0] < 1e-12      # the constant mode
        assert eigenvalues[1] > 1e-8       # connected mesh: 1D kernel only

    @pytest.mark.parametrize("make_mesh,grad2", [
        (lambda: unit_square_mesh(4), 13.0),   # f = 2x + 3y - 1
        (lambda: unit_cube_mesh(2), 14.0),     # f = 1x + 2y + 3z
    ])
    def test_galerkin_linear_consistency(self, make_mesh, grad2):
        space = FunctionSpace(make_mesh())
        a = assemble_stiffness(space)
        if space.mesh.dim == 2:
            f = interpolate(space, lambda x: 2 * x[0] + 3 * x[1] - 1.0)
        else:
            f = interpolate(space, lambda x: x[0] + 2 * x[1] + 3 * x[2])
        energy = f.coefficients @ (a @ f.coefficients)
        assert abs(energy - grad2) < 1e-12


class TestInterpolate:
    def test_constant(self):
        space = FunctionSpace(unit_square_mesh(4))
        vec = interpolate(space, lambda x: 1.0)
        assert np.array_equal(vec.coefficients, np.ones(space.dof_count))

    def test_coordinate(self):
        space = FunctionSpace(interval_curve(4))
        vec = interpolate(space, lambda x: x[0])
        assert np.allclose(vec.coefficients, space.dof_coords[:, 0])

    def test_nonfinite_raises(self):
        space = FunctionSpace(unit_square_mesh(4))
        with pytest.raises(ValueError, match="non-finite"):
            interpolate(space, lambda x: np.inf)

    def test_interpolation_error_decreases_with_h(self):
        # L2 mass of the interpolant of sin(pi x) sin(pi y) approaches 1/4
        errors = []
        for n in (4, 8, 16):
            space = FunctionSpace(unit_square_mesh(n))
            vec = interpolate(space, lambda x: np.sin(np.pi * x[0]) * np.sin(np.pi * x[1]))
            m = assemble_mass(space)
            errors.append(abs(vec.coefficients @ (m @ vec.coefficients) - 0.25))
        assert errors[0] > errors[1] > errors[2]

    def test_vector_length_validation(self):
        space = FunctionSpace(unit_square_mesh(4))
        with pytest.raises(ValueError):
            FemVector(space, np.zeros(3))
