"""Quadrature rules and assembly of the bilinear/linear forms.

All assembled matrices live over the free DOFs of their spaces (constrained
pairs are dropped) and are built from deterministic, sorted triplet streams.
Volume terms use symmetric triangle rules of the stated polynomial degree;
boundary terms use Gauss rules along edges.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix
from .spaces import basis_tables, edge_bary_in_cell, physical_points

# symmetric triangle rules: barycentric orbits of (1-2a, a, a) and full
# permutation orbits of (a, b, 1-a-b); weights sum to 1
_TRI_DEG2 = (
    np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]),
    np.full(3, 1.0 / 3.0),
)

_D4_A1, _D4_W1 = 0.445948490915965, 0.223381589678011
_D4_A2, _D4_W2 = 0.091576213509771, 0.109951743655322

_D6_A1, _D6_W1 = 0.063089014491502, 0.050844906370207
_D6_A2, _D6_W2 = 0.249286745170910, 0.116786275726379
_D6_A3, _D6_B3, _D6_W3 = 0.310352451033785, 0.053145049844816, 0.082851075618374


def _orbit3(a):
    b = 1.0 - 2.0 * a
    return [[b, a, a], [a, b, a], [a, a, b]]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]


_TRI_DEG4 = (
    np.array(_orbit3(_D4_A1) + _orbit3(_D4_A2)),
    np.array([_D4_W1] * 3 + [_D4_W2] * 3),
)

_TRI_DEG6 = (
    np.array(_orbit3(_D6_A1) + _orbit3(_D6_A2) + _orbit6(_D6_A3, _D6_B3)),
    np.array([_D6_W1] * 3 + [_D6_W2] * 3 + [_D6_W3] * 6),
)

_EDGE_2 = (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0]))
_EDGE_4 = (
    np.array(
        [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
    ),
    np.array(
        [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538]
    ),
)


@dataclass(frozen=True)
class QuadratureRule:
    """Integration points and weights.

    Triangle rules: barycentric points, weights summing to one (multiply by
    the cell area). Edge rules: parameters in [-1, 1], weights summing to two
    (multiply by half the edge length).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def triangle_rule(degree):
    """Symmetric triangle rule exact at least to the requested degree."""
    if degree <= 2:
        return QuadratureRule(*_TRI_DEG2, 2)
    if degree <= 4:
        return QuadratureRule(*_TRI_DEG4, 4)
    if degree <= 6:
        return QuadratureRule(*_TRI_DEG6, 6)
    raise ValueError(f"no triangle rule of degree {degree}")


def edge_rule(npts):
    """Gauss rule with the given number of points along an edge."""
    if npts == 2:
        return QuadratureRule(*_EDGE_2, 3)
    if npts == 4:
        return QuadratureRule(*_EDGE_4, 7)
    raise ValueError(f"no edge rule with {npts} points")


# ---------------------------------------------------------------------------
# generic assembly


def assemble_bilinear(row_space, col_space, local, cells=None):
    """Scatter per-cell local matrices (nc, n_row_loc, n_col_loc) into a
    sparse matrix over the free DOFs of both spaces."""
    rd = row_space.free_index[row_space.cell_dofs]
    cd = col_space.free_index[col_space.cell_dofs]
    if cells is not None:
        rd, cd = rd[cells], cd[cells]
    rows = np.broadcast_to(rd[:, :, None], local.shape)
    cols = np.broadcast_to(cd[:, None, :], local.shape)
    mask = (rows >= 0) & (cols >= 0)
    return SparseMatrix.from_triplets(
        rows[mask], cols[mask], local[mask], (row_space.n_dofs, col_space.n_dofs)
    )


def _flat_tables(space, key, rule, cells=None):
    """Basis tables reshaped to (nc, npts, nloc, flat) with trailing axes
    (components and derivatives) flattened, broadcast over rule points."""
    tab = basis_tables(space, rule.points, cells=cells, derivs=({"val": 0, "grad": 1, "hess": 2}[key],))[key]
    nc = space.mesh.n_cells if cells is None else len(cells)
    nloc = tab.shape[2]
    tab = np.broadcast_to(tab, (nc, len(rule.points)) + tab.shape[2:])
    return tab.reshape(nc, len(rule.points), nloc, -1)


def _volume_local(row_space, col_space, key_row, key_col, rule):
    tr = _flat_tables(row_space, key_row, rule)
    tc = _flat_tables(col_space, key_col, rule)
    areas = row_space.mesh.areas
    return np.einsum("p,cplf,cpmf,c->clm", rule.weights, tr, tc, areas)


def assemble_ah(space):
    """Piecewise Hessian inner product sum_K (D^2 u, D^2 v)_K."""
    local = _volume_local(space, space, "hess", "hess", triangle_rule(2))
    return assemble_bilinear(space, space, local)


def assemble_bh(row_space, col_space=None):
    """Piecewise gradient inner product sum_K (grad u, grad v)_K.

    Mixed pairs are allowed (matching meshes); rows/columns may come from
    different spaces, e.g. testing a Lagrange field against a nonconforming
    space.
    """
    if col_space is None:
        col_space = row_space
    if row_space.mesh is not col_space.mesh:
        raise ValueError("row and column spaces must share a mesh")
    local = _volume_local(row_space, col_space, "grad", "grad", triangle_rule(2))
    return assemble_bilinear(row_space, col_space, local)


def assemble_mass(space, degree=4):
    """L2 inner product (u, v)."""
    local = _volume_local(space, space, "val", "val", triangle_rule(degree))
    return assemble_bilinear(space, space, local)


def _boundary_edge_tables(space, npts=2):
    """Basis values/gradients/hessians of the owner cell at Gauss points of
    each boundary edge, plus geometry arrays."""
    mesh = space.mesh
    bnd = np.flatnonzero(mesh.boundary_edge)
    owners = mesh.edge_cells[bnd, 0]
    rule = edge_rule(npts)
    bary = edge_bary_in_cell(mesh, bnd, owners, rule.points)
    tabs = basis_tables(space, bary, cells=owners)
    return bnd, owners, rule, tabs


def assemble_boundary_penalty(space):
    """Boundary penalty sum_F h_F^-1 (dn u, dn v)_F over boundary edges
    (scalar spaces)."""
    mesh = space.mesh
    bnd, owners, rule, tabs = _boundary_edge_tables(space)
    n = mesh.n_F[bnd]
    grad = np.broadcast_to(
        tabs["grad"], (len(bnd), len(rule.points)) + tabs["grad"].shape[2:]
    )
    dn = np.einsum("epLX,eX->epL", grad, n)
    # (h_F/2) sum_g w_g dn dn, then the 1/h_F weight
    local = 0.5 * np.einsum("p,epL,epM->eLM", rule.weights, dn, dn)
    return assemble_bilinear(space, space, local, cells=owners)


def assemble_nitsche_ah(space, sigma):
    """Hessian form with symmetric boundary consistency terms and penalty.

    a_h(u, v) - sum_F [(dnn u, dn v)_F + (dn u, dnn v)_F]
    + sigma sum_F h_F^-1 (dn u, dn v)_F, all over boundary edges.
    """
    if sigma <= 0.0:
        raise ValueError("penalty parameter must be positive")
    mesh = space.mesh
    bnd, owners, rule, tabs = _boundary_edge_tables(space)
    n = mesh.n_F[bnd]
    h = mesh.h_F[bnd]
    grad = np.broadcast_to(
        tabs["grad"], (len(bnd), len(rule.points)) + tabs["grad"].shape[2:]
    )
    dn = np.einsum("epLX,eX->epL", grad, n)
    dnn = np.einsum("eLXY,eX,eY->eL", tabs["hess"][:, 0], n, n)
    dn_int = 0.5 * h[:, None] * np.einsum("p,epL->eL", rule.weights, dn)
    local = -(dnn[:, :, None] * dn_int[:, None, :] + dn_int[:, :, None] * dnn[:, None, :])
    local += sigma * 0.5 * np.einsum("p,epL,epM->eLM", rule.weights, dn, dn)
    boundary = assemble_bilinear(space, space, local, cells=owners)
    return assemble_ah(space).add(boundary)


def assemble_ch(space, sigma, eps):
    """Velocity block of the penalized vector problem:

    (phi, psi) + eps^2 [ (grad phi, grad psi)
      - sum_F ((dn(phi.t), psi.t)_F + (phi.t, dn(psi.t))_F)
      + sigma sum_F h_F^-1 (phi.t, psi.t)_F ]   over boundary edges.

    eps = 0 reduces to the plain mass matrix.
    """
    if sigma <= 0.0:
        raise ValueError("penalty parameter must be positive")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    mesh = space.mesh
    mass = assemble_mass(space)
    if eps == 0.0:
        return mass
    bnd, owners, rule, tabs = _boundary_edge_tables(space)
    t = mesh.t_F[bnd]
    n = mesh.n_F[bnd]
    h = mesh.h_F[bnd]
    val = np.broadcast_to(tabs["val"], (len(bnd), len(rule.points)) + tabs["val"].shape[2:])
    vt = np.einsum("epLi,ei->epL", val, t)
    # dn(phi.t) is constant per cell for piecewise-linear fields
    dnt = np.einsum("eLiX,ei,eX->eL", tabs["grad"][:, 0], t, n)
    vt_int = 0.5 * h[:, None] * np.einsum("p,epL->eL", rule.weights, vt)
    local = -(dnt[:, :, None] * vt_int[:, None, :] + vt_int[:, :, None] * dnt[:, None, :])
    local += sigma * 0.5 * np.einsum("p,epL,epM->eLM", rule.weights, vt, vt)
    boundary = assemble_bilinear(space, space, local, cells=owners)
    return mass.add(assemble_bh(space).add(boundary), alpha=eps**2)


def assemble_div(vector_space, pressure_space):
    """Divergence coupling (div psi, q): rows over pressure DOFs, columns over
    vector DOFs."""
    if vector_space.mesh is not pressure_space.mesh:
        raise ValueError("spaces must share a mesh")
    mesh = vector_space.mesh
    grad = basis_tables(vector_space, np.full((1, 3), 1.0 / 3.0), derivs=(1,))["grad"]
    div = grad[:, 0, :, 0, 0] + grad[:, 0, :, 1, 1]
    local = (mesh.areas[:, None] * div)[:, None, :]
    return assemble_bilinear(pressure_space, vector_space, local)


def assemble_curl_coupling(vector_space, scalar_space):
    """Rotated-gradient coupling (psi, curl v) with curl v = (dy v, -dx v):
    rows over vector DOFs, columns over the scalar (nonconforming) DOFs."""
    if vector_space.mesh is not scalar_space.mesh:
        raise ValueError("spaces must share a mesh")
    mesh = vector_space.mesh
    rule = triangle_rule(2)
    val = _flat_tables(vector_space, "val", rule)  # (nc, p, 6, 2)
    g = basis_tables(scalar_space, rule.points, derivs=(1,))["grad"]
    g = np.broadcast_to(g, (val.shape[0], len(rule.points)) + g.shape[2:])
    curl = np.stack([g[..., 1], -g[..., 0]], axis=-1)
    local = np.einsum("p,cpli,cpmi,c->clm", rule.weights, val, curl, mesh.areas)
    return assemble_bilinear(vector_space, scalar_space, local)


def assemble_load(space, f, degree=6):
    """Load vector (f, v) over the free DOFs of a scalar space."""
    mesh = space.mesh
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule.points)
    fvals = np.asarray(f(pts))
    val = _flat_tables(space, "val", rule)[..., 0]
    local = np.einsum("p,cp,cpl,c->cl", rule.weights, fvals, val, mesh.areas)
    out = np.zeros(space.n_dofs)
    idx = space.free_index[space.cell_dofs]
    mask = idx >= 0
    np.add.at(out, idx[mask], local[mask])
    return out


def assemble_vector_load(space, f, degree=4):
    """Load vector (f, psi) for a vector-valued space."""
    mesh = space.mesh
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule.points)
    fvals = np.asarray(f(pts))
    val = basis_tables(space, rule.points, derivs=(0,))["val"]
    val = np.broadcast_to(val, (mesh.n_cells, len(rule.points)) + val.shape[2:])
    local = np.einsum("p,cpi,cpli,c->cl", rule.weights, fvals, val, mesh.areas)
    out = np.zeros(space.n_dofs)
    idx = space.free_index[space.cell_dofs]
    mask = idx >= 0
    np.add.at(out, idx[mask], local[mask])
    return out
