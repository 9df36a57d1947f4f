"""Tests for quadrature rules and form assembly."""

import math

import numpy as np
import pytest

from morleyfem.assembly import (
    assemble_ah,
    assemble_bh,
    assemble_boundary_penalty,
    assemble_ch,
    assemble_curl_coupling,
    assemble_div,
    assemble_load,
    assemble_mass,
    assemble_nitsche_ah,
    assemble_vector_load,
    edge_rule,
    triangle_rule,
)
from morleyfem.mesh import uniform_unit_square
from morleyfem.spaces import (
    BCVariant,
    SpaceTag,
    dof_space,
    interpolate,
    random_field,
)


def tri_monomial_integral(a, b):
    # integral of x^a y^b over the unit reference triangle
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)
    # triangle (0,0),(1,0),(0,1): x = lambda_1, y = lambda_2, area 1/2
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(rule.weights * x**a * y**b)
            assert abs(approx - tri_monomial_integral(a, b)) < 1e-14


@pytest.mark.parametrize("npts,exact_deg", [(2, 3), (4, 7)])
def test_edge_rule_exactness(npts, exact_deg):
    rule = edge_rule(npts)
    assert abs(rule.weights.sum() - 2.0) < 1e-14
    for d in range(exact_deg + 1):
        approx = np.sum(rule.weights * rule.points**d)
        exact = (1.0 - (-1.0) ** (d + 1)) / (d + 1)
        assert abs(approx - exact) < 1e-14


def test_rule_degree_bounds():
    with pytest.raises(ValueError):
        triangle_rule(7)
    with pytest.raises(ValueError):
        edge_rule(3)


def morley_interp(mesh, f, g, bc=BCVariant.NONE):
    space = dof_space(mesh, SpaceTag.MORLEY, bc)
    return space, interpolate(space, f, g)


def test_ah_kills_linears():
    mesh = uniform_unit_square(3)
    space, u = morley_interp(
        mesh,
        lambda x: 2.0 * x[..., 0] - x[..., 1] + 0.5,
        lambda x: np.broadcast_to([2.0, -1.0], x.shape),
    )
    A = assemble_ah(space)
    assert abs(u.coeffs @ (A @ u.coeffs)) < 1e-12


def test_ah_quadratic_energy():
    # for u = x^2 the Hessian is diag(2, 0), so the energy is 4 |Omega| = 4
    mesh = uniform_unit_square(4)
    space, u = morley_interp(
        mesh,
        lambda x: x[..., 0] ** 2,
        lambda x: np.stack([2.0 * x[..., 0], np.zeros_like(x[..., 1])], axis=-1),
    )
    A = assemble_ah(space)
    assert u.coeffs @ (A @ u.coeffs) == pytest.approx(4.0, abs=1e-12)


def test_ah_matches_per_cell_resummation():
    # independent path: evaluate the discrete Hessian per cell and integrate
    mesh = uniform_unit_square(3)
    rng = np.random.default_rng(9)
    space = dof_space(mesh, SpaceTag.MORLEY)
    A = assemble_ah(space)
    rule = triangle_rule(2)
    for _ in range(3):
        u = random_field(space, rng)
        H = u.hessians(rule.points)
        direct = float(
            np.einsum("p,cpXY,cpXY,c->", rule.weights, H, H, mesh.areas)
        )
        quad = float(u.coeffs @ (A @ u.coeffs))
        assert quad == pytest.approx(direct, rel=1e-12)


def test_bh_p1_interior_diagonal():
    # on the n=2 uniform mesh the single interior vertex has stiffness 4
    mesh = uniform_unit_square(2)
    space = dof_space(mesh, SpaceTag.LAGRANGE_P1, BCVariant.LAGRANGE_ZERO)
    B = assemble_bh(space)
    assert B.shape == (1, 1)
    assert B.to_dense()[0, 0] == pytest.approx(4.0, abs=1e-13)


def test_bh_morley_linear_energy():
    mesh = uniform_unit_square(3)
    space, u = morley_interp(
        mesh,
        lambda x: x[..., 0],
        lambda x: np.broadcast_to([1.0, 0.0], x.shape),
    )
    B = assemble_bh(space)
    assert u.coeffs @ (B @ u.coeffs) == pytest.approx(1.0, abs=1e-12)


def test_bh_mixed_lagrange_morley():
    mesh = uniform_unit_square(3)
    morley = dof_space(mesh, SpaceTag.MORLEY)
    p1 = dof_space(mesh, SpaceTag.LAGRANGE_P1)
    f = lambda x: x[..., 0]
    g = lambda x: np.broadcast_to([1.0, 0.0], x.shape)
    v = interpolate(morley, f, g)
    w = interpolate(p1, f)
    B = assemble_bh(morley, p1)
    assert B.shape == (morley.n_dofs, p1.n_dofs)
    assert v.coeffs @ (B @ w.coeffs) == pytest.approx(1.0, abs=1e-12)


def test_nitsche_ah_positive_definite():
    mesh = uniform_unit_square(4)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
    A = assemble_nitsche_ah(space, sigma=5.0)
    evals = np.linalg.eigvalsh(A.to_dense())
    assert evals.min() > 0.0
    assert np.abs(A.to_dense() - A.to_dense().T).max() < 1e-12
    with pytest.raises(ValueError):
        assemble_nitsche_ah(space, sigma=0.0)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_nitsche_coercivity_generalized_eigenvalues(n):
    # smallest lambda of  a~(u, v) = lambda * N(u, v)  stays positive, where
    # N adds the h^-1-weighted boundary normal-derivative penalty to a_h
    mesh = uniform_unit_square(n)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
    A = assemble_nitsche_ah(space, sigma=5.0).to_dense()
    N = assemble_ah(space).add(assemble_boundary_penalty(space)).to_dense()
    L = np.linalg.cholesky(N)
    Linv = np.linalg.inv(L)
    evals = np.linalg.eigvalsh(Linv @ A @ Linv.T)
    assert evals.min() > 0.0


def test_boundary_penalty_linear_field():
    # for u = x only the 2n vertical boundary edges contribute h^-1 * h * 1
    n = 4
    mesh = uniform_unit_square(n)
    space, u = morley_interp(
        mesh,
        lambda x: x[..., 0],
        lambda x: np.broadcast_to([1.0, 0.0], x.shape),
    )
    P = assemble_boundary_penalty(space)
    assert u.coeffs @ (P @ u.coeffs) == pytest.approx(2.0 * n, abs=1e-12)


def test_ch_constant_tangential_field():
    # a constant field (0, 1) has zero gradient; only the tangential penalty
    # on the two vertical boundary sides survives, giving 2 n sigma
    n, sigma, eps = 4, 5.0, 0.3
    mesh = uniform_unit_square(n)
    space = dof_space(mesh, SpaceTag.CR_VECTOR)
    const = np.array([0.0, 1.0])
    u = interpolate(space, lambda x: np.broadcast_to(const, x.shape))
    C = assemble_ch(space, sigma, eps)
    M = assemble_mass(space)
    quad = u.coeffs @ (C @ u.coeffs)
    mass = u.coeffs @ (M @ u.coeffs)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert (quad - mass) / eps**2 == pytest.approx(2.0 * n * sigma, abs=1e-10)


def test_ch_zero_eps_is_mass():
    mesh = uniform_unit_square(3)
    space = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO)
    C = assemble_ch(space, sigma=5.0, eps=0.0)
    M = assemble_mass(space)
    assert np.abs(C.to_dense() - M.to_dense()).max() == 0.0
    with pytest.raises(ValueError):
        assemble_ch(space, sigma=5.0, eps=-1.0)
    with pytest.raises(ValueError):
        assemble_ch(space, sigma=-2.0, eps=0.1)


def test_div_coupling():
    mesh = uniform_unit_square(3)
    cr = dof_space(mesh, SpaceTag.CR_VECTOR)
    p0 = dof_space(mesh, SpaceTag.P0_MEAN_ZERO)
    D = assemble_div(cr, p0)
    assert D.shape == (p0.n_dofs, cr.n_dofs)
    const = interpolate(cr, lambda x: np.broadcast_to([1.0, -2.0], x.shape))
    assert np.abs(D @ const.coeffs).max() < 1e-13
    linear = interpolate(cr, lambda x: x)
    assert np.abs(D @ linear.coeffs - 2.0 * mesh.areas).max() < 1e-13


def test_curl_coupling_matches_vector_load():
    # (psi, curl v) assembled as a matrix agrees with the load vector of the
    # exact rotated gradient of the interpolated quadratic
    mesh = uniform_unit_square(3)
    cr = dof_space(mesh, SpaceTag.CR_VECTOR)
    morley = dof_space(mesh, SpaceTag.MORLEY)
    f = lambda x: x[..., 0] ** 2 + x[..., 0] * x[..., 1]
    g = lambda x: np.stack(
        [2.0 * x[..., 0] + x[..., 1], x[..., 0] + np.zeros_like(x[..., 1])], axis=-1
    )
    curl = lambda x: np.stack(
        [x[..., 0] + np.zeros_like(x[..., 1]), -(2.0 * x[..., 0] + x[..., 1])], axis=-1
    )
    v = interpolate(morley, f, g)
    C = assemble_curl_coupling(cr, morley)
    assert C.shape == (cr.n_dofs, morley.n_dofs)
    load = assemble_vector_load(cr, curl)
    assert np.abs(C @ v.coeffs - load).max() < 1e-12


def test_load_constant_p1():
    mesh = uniform_unit_square(3)
    space = dof_space(mesh, SpaceTag.LAGRANGE_P1)
    load = assemble_load(space, lambda x: np.ones(x.shape[:-1]))
    assert load.sum() == pytest.approx(1.0, abs=1e-13)
    # each vertex receives one third of its incident cell areas
    incident = np.zeros(mesh.n_vertices)
    np.add.at(incident, mesh.cells.ravel(), np.repeat(mesh.areas, 3))
    assert np.abs(load - incident / 3.0).max() < 1e-14


def test_load_smooth_integral():
    mesh = uniform_unit_square(8)
    space = dof_space(mesh, SpaceTag.LAGRANGE_P1)
    f = lambda x: 2.0 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
    load = assemble_load(space, f)
    assert load.sum() == pytest.approx(8.0, abs=1e-8)


def test_load_quadrature_degree_stability():
    mesh = uniform_unit_square(3)
    space = dof_space(mesh, SpaceTag.MORLEY)
    f = lambda x: x[..., 0] ** 2 - 3.0 * x[..., 1]
    l4 = assemble_load(space, f, degree=4)
    l6 = assemble_load(space, f, degree=6)
    assert np.abs(l4 - l6).max() < 1e-12


def test_mass_quadrature_degree_stability():
    mesh = uniform_unit_square(2)
    for tag in (SpaceTag.MORLEY, SpaceTag.CR_VECTOR, SpaceTag.LAGRANGE_P2):
        space = dof_space(mesh, tag)
        M4 = assemble_mass(space, degree=4)
        M6 = assemble_mass(space, degree=6)
        assert np.abs(M4.to_dense() - M6.to_dense()).max() < 1e-12


def test_combined_operator_spd():
    mesh = uniform_unit_square(4)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    eps = 0.1
    K = assemble_ah(space).scale(eps**2).add(assemble_bh(space))
    dense = K.to_dense()
    assert np.abs(dense - dense.T).max() < 1e-12
    assert np.linalg.eigvalsh(dense).min() > 0.0


def test_mixed_mesh_rejected():
    mesh_a = uniform_unit_square(2)
    mesh_b = uniform_unit_square(2)
    with pytest.raises(ValueError):
        assemble_bh(dof_space(mesh_a, SpaceTag.MORLEY), dof_space(mesh_b, SpaceTag.MORLEY))
