"""Tests for DOF layouts, boundary constraints, and local bases."""

import numpy as np
import pytest

from morleyfem.mesh import build_connectivity, uniform_unit_square
from morleyfem.spaces import (
    BCVariant,
    DiscreteField,
    SpaceKind,
    SpaceTag,
    cr_vector_local_basis,
    dof_duality_matrix,
    dof_space,
    edge_bary_in_cell,
    edge_gauss_bary,
    interpolate,
    lagrange_local_basis,
    morley_local_basis,
    physical_points,
    random_field,
)

GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def reference_triangle():
    return build_connectivity(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
    )


def test_raw_dof_counts():
    mesh = uniform_unit_square(4)
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    assert dof_space(mesh, SpaceTag.LAGRANGE_P1).n_raw == nv
    assert dof_space(mesh, SpaceTag.LAGRANGE_P2).n_raw == nv + ne
    assert dof_space(mesh, SpaceTag.MORLEY).n_raw == nv + ne
    assert dof_space(mesh, SpaceTag.CR_VECTOR).n_raw == 2 * ne
    assert dof_space(mesh, SpaceTag.P0_MEAN_ZERO).n_raw == nc


def test_free_dof_counts_two_by_two():
    # n=2: 9 vertices (8 on the boundary), 16 edges (8 on the boundary)
    mesh = uniform_unit_square(2)
    assert dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH).n_dofs == 17
    assert dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0).n_dofs == 9
    assert dof_space(mesh, SpaceTag.LAGRANGE_P1, BCVariant.LAGRANGE_ZERO).n_dofs == 1
    assert dof_space(mesh, SpaceTag.LAGRANGE_P2, BCVariant.LAGRANGE_ZERO).n_dofs == 9
    assert dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO).n_dofs == 24
    assert dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_FULL_ZERO).n_dofs == 16


def test_free_index_roundtrip():
    mesh = uniform_unit_square(3)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    assert np.array_equal(space.free_index[space.free_dofs], np.arange(space.n_dofs))
    assert np.all(space.free_index[space.constrained] == -1)
    assert space.n_raw - space.n_dofs == int(space.constrained.sum())


def test_incompatible_bc_rejected():
    with pytest.raises(ValueError):
        SpaceKind(SpaceTag.LAGRANGE_P1, BCVariant.VH0)
    with pytest.raises(ValueError):
        SpaceKind(SpaceTag.CR_VECTOR, BCVariant.LAGRANGE_ZERO)


@pytest.mark.parametrize(
    "tag,bc",
    [
        (SpaceTag.LAGRANGE_P1, BCVariant.NONE),
        (SpaceTag.LAGRANGE_P2, BCVariant.NONE),
        (SpaceTag.MORLEY, BCVariant.NONE),
        (SpaceTag.MORLEY, BCVariant.VH0),
        (SpaceTag.CR_VECTOR, BCVariant.NONE),
        (SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO),
        (SpaceTag.P0_MEAN_ZERO, BCVariant.NONE),
    ],
)
def test_dof_duality_identity(tag, bc):
    mesh = uniform_unit_square(3)
    space = dof_space(mesh, tag, bc)
    for cell in range(mesh.n_cells):
        D = dof_duality_matrix(space, cell)
        assert np.abs(D - np.eye(len(D))).max() < 1e-10


def test_local_basis_constructors_dual():
    mesh = uniform_unit_square(2)
    checks = [
        (morley_local_basis(mesh, 3).space, 3),
        (cr_vector_local_basis(mesh, 5).space, 5),
        (lagrange_local_basis(mesh, 0, 1).space, 0),
        (lagrange_local_basis(mesh, 7, 2).space, 7),
    ]
    for space, cell in checks:
        D = dof_duality_matrix(space, cell)
        assert np.abs(D - np.eye(len(D))).max() < 1e-10
    with pytest.raises(ValueError):
        lagrange_local_basis(mesh, 0, 3)


def test_morley_hypotenuse_shape_function_value():
    # Independent oracle: assemble the 6x6 DOF matrix over raw monomials
    # {1, x, y, x^2, xy, y^2} by hand and solve for the shape function of
    # the hypotenuse normal-derivative DOF, then evaluate it at the origin.
    mesh = reference_triangle()
    s = np.sqrt(2.0) / 2.0
    D = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],  # value at (0,0)
            [1.0, 1.0, 0.0, 1.0, 0.0, 0.0],  # value at (1,0)
            [1.0, 0.0, 1.0, 0.0, 0.0, 1.0],  # value at (0,1)
            [0.0, 0.0, -1.0, 0.0, -0.5, 0.0],  # mean of -d/dy on y=0
            [0.0, -1.0, 0.0, 0.0, -0.5, 0.0],  # mean of -d/dx on x=0
            [0.0, s, s, s, s, s],  # mean of (d/dx+d/dy)/sqrt(2) on x+y=1
        ]
    )
    # local edge k is opposite vertex k: local edge 0 is the hypotenuse
    coeff = np.linalg.solve(D, np.eye(6)[3 + 2])
    hyp_edge = int(np.flatnonzero((mesh.edges == [1, 2]).all(axis=1))[0])
    local = int(np.flatnonzero(mesh.cell_edges[0] == hyp_edge)[0])
    basis = morley_local_basis(mesh, 0)
    val = basis.values(np.eye(3)[:1])[0, 3 + local]
    assert val == pytest.approx(coeff[0], abs=1e-12)


def test_cr_scalar_closed_form():
    # each scalar CR function is 1 at its own midpoint and -1 at the vertex
    # opposite its edge
    mesh = reference_triangle()
    basis = cr_vector_local_basis(mesh, 0)
    mid_bary = 0.5 * (np.eye(3)[[1, 2, 0]] + np.eye(3)[[2, 0, 1]])
    vals = basis.values(np.vstack([mid_bary, np.eye(3)]))
    for k in range(3):
        for a in range(2):
            col = np.zeros(2)
            col[a] = 1.0
            assert np.allclose(vals[k, 2 * k + a], col, atol=1e-12)
            assert np.allclose(vals[3 + k, 2 * k + a], -col, atol=1e-12)


def test_p2_partition_of_unity():
    mesh = uniform_unit_square(3)
    rng = np.random.default_rng(7)
    bary = rng.dirichlet(np.ones(3), size=5)
    basis = lagrange_local_basis(mesh, 2, 2)
    assert np.allclose(basis.values(bary).sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(basis.gradients(bary).sum(axis=1), 0.0, atol=1e-12)


def test_interpolate_linear_exact():
    mesh = uniform_unit_square(3)
    f = lambda x: 2.0 * x[..., 0] - 3.0 * x[..., 1] + 1.0
    g = lambda x: np.broadcast_to([2.0, -3.0], x.shape)
    bary = np.array([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]])
    pts = physical_points(mesh, bary)
    for tag in (SpaceTag.LAGRANGE_P1, SpaceTag.LAGRANGE_P2):
        u = interpolate(dof_space(mesh, tag), f)
        assert np.abs(u.values(bary) - f(pts)).max() < 1e-12
    u = interpolate(dof_space(mesh, SpaceTag.MORLEY), f, g)
    assert np.abs(u.values(bary) - f(pts)).max() < 1e-12


def test_interpolate_quadratic_morley_exact():
    mesh = uniform_unit_square(3)
    f = lambda x: x[..., 0] ** 2 + 0.5 * x[..., 0] * x[..., 1] - x[..., 1] ** 2
    g = lambda x: np.stack(
        [2.0 * x[..., 0] + 0.5 * x[..., 1], 0.5 * x[..., 0] - 2.0 * x[..., 1]], axis=-1
    )
    space = dof_space(mesh, SpaceTag.MORLEY)
    u = interpolate(space, f, g)
    bary = np.array([[0.2, 0.3, 0.5], [1 / 3, 1 / 3, 1 / 3], [0.9, 0.05, 0.05]])
    pts = physical_points(mesh, bary)
    assert np.abs(u.values(bary) - f(pts)).max() < 1e-10
    hess = np.array([[2.0, 0.5], [0.5, -2.0]])
    assert np.abs(u.hessians(bary) - hess).max() < 1e-9


def test_interpolate_constant_vector_cr():
    mesh = uniform_unit_square(2)
    const = np.array([0.4, -1.3])
    f = lambda x: np.broadcast_to(const, x.shape)
    for bc in (BCVariant.NONE,):
        space = dof_space(mesh, SpaceTag.CR_VECTOR, bc)
        u = interpolate(space, f)
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        assert np.abs(u.values(bary) - const).max() < 1e-12


def test_cr_boundary_frames():
    mesh = uniform_unit_square(2)
    space = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO)
    be = np.flatnonzero(mesh.boundary_edge)
    assert np.allclose(space.cr_frames[be, :, 0], mesh.n_F[be])
    assert np.allclose(space.cr_frames[be, :, 1], mesh.t_F[be])
    interior = np.flatnonzero(~mesh.boundary_edge)
    assert np.allclose(space.cr_frames[interior], np.eye(2))


def edge_means_of_jump(mesh, field, deriv):
    """Mean over each interior edge of the two-sided jump of a field quantity.

    deriv=0 jumps values, deriv=1 jumps gradients (returning (ne_int, 2)).
    """
    interior = np.flatnonzero(~mesh.boundary_edge)
    c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
    b0 = edge_bary_in_cell(mesh, interior, c0, GAUSS2)
    b1 = edge_bary_in_cell(mesh, interior, c1, GAUSS2)
    f = field.values if deriv == 0 else field.gradients
    jump = f(b0, cells=c0) - f(b1, cells=c1)
    return jump.mean(axis=1)


def test_weak_continuity_random_morley():
    # interior edges: value jumps vanish at endpoints, normal-derivative
    # jumps have zero mean
    mesh = uniform_unit_square(4)
    rng = np.random.default_rng(42)
    space = dof_space(mesh, SpaceTag.MORLEY)
    for _ in range(5):
        u = random_field(space, rng)
        interior = np.flatnonzero(~mesh.boundary_edge)
        c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
        ends = np.array([-1.0, 1.0])
        b0 = edge_bary_in_cell(mesh, interior, c0, ends)
        b1 = edge_bary_in_cell(mesh, interior, c1, ends)
        vjump = u.values(b0, cells=c0) - u.values(b1, cells=c1)
        assert np.abs(vjump).max() < 1e-10
        gjump = edge_means_of_jump(mesh, u, 1)
        normal_jump = np.einsum("eX,eX->e", gjump, mesh.n_F[interior])
        assert np.abs(normal_jump).max() < 1e-10


def test_weak_continuity_fails_with_cell_normals():
    # redefining edge DOFs against per-cell outward normals flips the sign
    # seen from one side of every interior edge, breaking weak continuity
    mesh = uniform_unit_square(2)
    rng = np.random.default_rng(3)
    space = dof_space(mesh, SpaceTag.MORLEY, cell_normals=True)
    for cell in range(mesh.n_cells):
        D = dof_duality_matrix(space, cell)
        assert np.abs(D - np.eye(6)).max() < 1e-10
    u = random_field(space, rng)
    interior = np.flatnonzero(~mesh.boundary_edge)
    gjump = edge_means_of_jump(mesh, u, 1)
    normal_jump = np.einsum("eX,eX->e", gjump, mesh.n_F[interior])
    assert np.abs(normal_jump).max() > 1e-3


def test_vh0_boundary_traces():
    # Vh0 fields vanish at boundary vertices and have zero mean normal
    # derivative on boundary edges
    mesh = uniform_unit_square(4)
    rng = np.random.default_rng(11)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    u = random_field(space, rng)
    bnd = np.flatnonzero(mesh.boundary_edge)
    cells = mesh.edge_cells[bnd, 0]
    b = edge_bary_in_cell(mesh, bnd, cells, GAUSS2)
    grads = u.gradients(b, cells=cells)
    dn_mean = np.einsum("epX,eX->e", grads, mesh.n_F[bnd]) / 2.0
    assert np.abs(dn_mean).max() < 1e-10
    ends = np.array([-1.0, 1.0])
    b = edge_bary_in_cell(mesh, bnd, cells, ends)
    assert np.abs(u.values(b, cells=cells)).max() < 1e-10


@pytest.mark.parametrize(
    "bc,cr_bc",
    [
        (BCVariant.VH, BCVariant.CR_NORMAL_ZERO),
        (BCVariant.VH0, BCVariant.CR_FULL_ZERO),
    ],
)
def test_curl_of_morley_is_cr_conforming(bc, cr_bc):
    # the rotated gradient of any Morley field is continuous at interior edge
    # midpoints; boundary vertex constraints null its normal midpoint trace,
    # full constraints null the tangential one too
    mesh = uniform_unit_square(4)
    rng = np.random.default_rng(5)
    space = dof_space(mesh, SpaceTag.MORLEY, bc)
    mid = np.array([0.0])
    for _ in range(3):
        u = random_field(space, rng)
        interior = np.flatnonzero(~mesh.boundary_edge)
        c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
        b0 = edge_bary_in_cell(mesh, interior, c0, mid)
        b1 = edge_bary_in_cell(mesh, interior, c1, mid)
        g0 = u.gradients(b0, cells=c0)[:, 0]
        g1 = u.gradients(b1, cells=c1)[:, 0]
        curl_jump = np.stack([g0[:, 1] - g1[:, 1], g1[:, 0] - g0[:, 0]], axis=-1)
        assert np.abs(curl_jump).max() < 1e-10

        bnd = np.flatnonzero(mesh.boundary_edge)
        cb = mesh.edge_cells[bnd, 0]
        gb = u.gradients(edge_bary_in_cell(mesh, bnd, cb, mid), cells=cb)[:, 0]
        curl_b = np.stack([gb[:, 1], -gb[:, 0]], axis=-1)
        n_trace = np.einsum("eX,eX->e", curl_b, mesh.n_F[bnd])
        assert np.abs(n_trace).max() < 1e-10
        if cr_bc is BCVariant.CR_FULL_ZERO:
            t_trace = np.einsum("eX,eX->e", curl_b, mesh.t_F[bnd])
            assert np.abs(t_trace).max() < 1e-10


def test_edge_points_match_between_sides():
    mesh = uniform_unit_square(3)
    interior = np.flatnonzero(~mesh.boundary_edge)
    c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
    params = np.array([-0.7, 0.1, 0.9])
    b0 = edge_bary_in_cell(mesh, interior, c0, params)
    b1 = edge_bary_in_cell(mesh, interior, c1, params)
    p0 = np.einsum("cpk,ckX->cpX", b0, mesh.cell_vertices(c0))
    p1 = np.einsum("cpk,ckX->cpX", b1, mesh.cell_vertices(c1))
    assert np.abs(p0 - p1).max() < 1e-14


def test_edge_gauss_bary_parametrization():
    bary = edge_gauss_bary(0, np.array([-1.0, 0.0, 1.0]))
    assert np.allclose(bary[:, 0], 0.0)
    assert np.allclose(bary[0], [0.0, 1.0, 0.0])
    assert np.allclose(bary[1], [0.0, 0.5, 0.5])
    assert np.allclose(bary[2], [0.0, 0.0, 1.0])


def test_discrete_field_validation():
    mesh = uniform_unit_square(2)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    with pytest.raises(ValueError):
        DiscreteField(space, np.zeros(space.n_dofs + 1))
    z = space.zeros()
    assert z.coeffs.shape == (space.n_dofs,)
    raw = z.raw()
    assert raw.shape == (space.n_raw,)
    assert np.all(raw == 0.0)


def test_morley_interpolation_needs_gradient():
    mesh = uniform_unit_square(2)
    space = dof_space(mesh, SpaceTag.MORLEY)
    with pytest.raises(ValueError):
        interpolate(space, lambda x: x[..., 0])


def test_p0_interpolation():
    mesh = uniform_unit_square(2)
    space = dof_space(mesh, SpaceTag.P0_MEAN_ZERO)
    u = interpolate(space, lambda x: x[..., 0] + x[..., 1])
    centers = mesh.cell_vertices().mean(axis=1)
    assert np.allclose(u.coeffs, centers.sum(axis=1))
