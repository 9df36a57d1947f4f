"""Discrete spaces: Lagrange P1/P2, Morley, vector Crouzeix-Raviart, P0.

Global DOF layout per space (raw numbering, before boundary constraints):

- LagrangeP1: one value per vertex.
- LagrangeP2: vertex values, then one midpoint value per edge.
- Morley: vertex values, then one mean normal derivative per edge, taken
  against the mesh-wide edge normal ``n_F``.
- CRVector: two midpoint components per edge (dofs 2e, 2e+1). Interior edges
  use Cartesian components; on boundary edges of the constrained variants the
  components are taken in the (n_F, t_F) frame, so normal/full midpoint
  constraints are plain masks.
- P0MeanZero: one value per cell; the zero-mean constraint is enforced by the
  solver layer, not by elimination.

Local bases are computed on the physical element. The Morley basis comes from
inverting the 6x6 DOF-evaluation matrix over scaled monomials, because Morley
functions do not transform affinely from a reference element.

Evaluation points are barycentric, either shared across cells (shape (P, 3))
or per cell (shape (C, P, 3), C matching the evaluated cells). Returned tables
may carry broadcastable length-1 cell or point axes where the quantity is
constant.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


class SpaceTag(enum.Enum):
    LAGRANGE_P1 = "LagrangeP1"
    LAGRANGE_P2 = "LagrangeP2"
    MORLEY = "Morley"
    CR_VECTOR = "CRVector"
    P0_MEAN_ZERO = "P0MeanZero"


class BCVariant(enum.Enum):
    NONE = "None"
    VH = "Vh"
    VH0 = "Vh0"
    CR_NORMAL_ZERO = "CRNormalZero"
    CR_FULL_ZERO = "CRFullZero"
    LAGRANGE_ZERO = "LagrangeZero"


_COMPATIBLE = {
    SpaceTag.LAGRANGE_P1: {BCVariant.NONE, BCVariant.LAGRANGE_ZERO},
    SpaceTag.LAGRANGE_P2: {BCVariant.NONE, BCVariant.LAGRANGE_ZERO},
    SpaceTag.MORLEY: {BCVariant.NONE, BCVariant.VH, BCVariant.VH0},
    SpaceTag.CR_VECTOR: {BCVariant.NONE, BCVariant.CR_NORMAL_ZERO, BCVariant.CR_FULL_ZERO},
    SpaceTag.P0_MEAN_ZERO: {BCVariant.NONE},
}


@dataclass(frozen=True, eq=False)
class SpaceKind:
    """Space family plus boundary-constraint variant."""

    tag: SpaceTag
    bc_variant: BCVariant = BCVariant.NONE

    def __post_init__(self):
        if self.bc_variant not in _COMPATIBLE[self.tag]:
            raise ValueError(f"bc variant {self.bc_variant} incompatible with {self.tag}")


@dataclass(frozen=True, eq=False)
class DofSpace:
    """Global DOF numbering for one space on one mesh.

    ``cell_dofs`` indexes raw DOFs; ``constrained`` masks raw DOFs removed by
    the boundary-condition variant; ``free_index`` maps raw DOF -> position in
    the free numbering (-1 when constrained); ``free_dofs`` is the inverse.
    ``n_dofs`` counts free DOFs. ``cr_frames`` holds the per-edge DOF frame of
    CRVector spaces (columns = frame vectors). ``cell_normals=True`` redefines
    Morley edge DOFs against each cell's outward normal instead of the global
    ``n_F`` (fault injection: breaks cross-edge consistency on purpose).
    """

    kind: SpaceKind
    mesh: Mesh
    n_raw: int
    n_dofs: int
    cell_dofs: np.ndarray
    constrained: np.ndarray
    free_index: np.ndarray
    free_dofs: np.ndarray
    cr_frames: np.ndarray | None = None
    cell_normals: bool = False

    @property
    def tag(self):
        return self.kind.tag

    def zeros(self):
        return DiscreteField(self, np.zeros(self.n_dofs))


def _raw_layout(mesh, tag):
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    if tag is SpaceTag.LAGRANGE_P1:
        return nv, np.array(mesh.cells)
    if tag in (SpaceTag.LAGRANGE_P2, SpaceTag.MORLEY):
        return nv + ne, np.hstack([mesh.cells, nv + mesh.cell_edges])
    if tag is SpaceTag.CR_VECTOR:
        base = 2 * mesh.cell_edges
        cell_dofs = np.empty((nc, 6), dtype=np.int64)
        cell_dofs[:, 0::2] = base
        cell_dofs[:, 1::2] = base + 1
        return 2 * ne, cell_dofs
    if tag is SpaceTag.P0_MEAN_ZERO:
        return nc, np.arange(nc, dtype=np.int64)[:, None]
    raise ValueError(f"unknown space tag {tag}")


def _constrained_mask(mesh, kind, n_raw):
    tag, bc = kind.tag, kind.bc_variant
    mask = np.zeros(n_raw, dtype=bool)
    if bc is BCVariant.NONE:
        return mask
    nv = mesh.n_vertices
    if bc is BCVariant.LAGRANGE_ZERO:
        mask[:nv][mesh.boundary_vertex] = True
        if tag is SpaceTag.LAGRANGE_P2:
            mask[nv:][mesh.boundary_edge] = True
    elif bc is BCVariant.VH:
        mask[:nv][mesh.boundary_vertex] = True
    elif bc is BCVariant.VH0:
        mask[:nv][mesh.boundary_vertex] = True
        mask[nv:][mesh.boundary_edge] = True
    elif bc is BCVariant.CR_NORMAL_ZERO:
        mask[0::2][mesh.boundary_edge] = True
    elif bc is BCVariant.CR_FULL_ZERO:
        mask[0::2][mesh.boundary_edge] = True
        mask[1::2][mesh.boundary_edge] = True
    return mask


def apply_bc(space):
    """Reduced numbering for a built space.

    Returns (constrained mask over raw DOFs, raw->free index map with -1 at
    constrained DOFs, free->raw index array).
    """
    constrained = _constrained_mask(space.mesh, space.kind, space.n_raw)
    free_index = np.full(space.n_raw, -1, dtype=np.int64)
    free_dofs = np.flatnonzero(~constrained)
    free_index[free_dofs] = np.arange(len(free_dofs))
    return constrained, free_index, free_dofs


def dof_space(mesh, tag, bc=BCVariant.NONE, cell_normals=False):
    """Build a :class:`DofSpace` for the given space family and BC variant."""
    kind = SpaceKind(tag, bc)
    n_raw, cell_dofs = _raw_layout(mesh, tag)
    frames = None
    if tag is SpaceTag.CR_VECTOR:
        frames = np.broadcast_to(np.eye(2), (mesh.n_edges, 2, 2)).copy()
        if bc in (BCVariant.CR_NORMAL_ZERO, BCVariant.CR_FULL_ZERO):
            frames[mesh.boundary_edge, :, 0] = mesh.n_F[mesh.boundary_edge]
            frames[mesh.boundary_edge, :, 1] = mesh.t_F[mesh.boundary_edge]
        frames.flags.writeable = False
    space = DofSpace(
        kind=kind,
        mesh=mesh,
        n_raw=n_raw,
        n_dofs=0,
        cell_dofs=cell_dofs,
        constrained=np.zeros(n_raw, dtype=bool),
        free_index=np.empty(0, dtype=np.int64),
        free_dofs=np.empty(0, dtype=np.int64),
        cr_frames=frames,
        cell_normals=cell_normals,
    )
    constrained, free_index, free_dofs = apply_bc(space)
    for arr in (cell_dofs, constrained, free_index, free_dofs):
        arr.flags.writeable = False
    return DofSpace(
        kind=kind,
        mesh=mesh,
        n_raw=n_raw,
        n_dofs=len(free_dofs),
        cell_dofs=cell_dofs,
        constrained=constrained,
        free_index=free_index,
        free_dofs=free_dofs,
        cr_frames=frames,
        cell_normals=cell_normals,
    )


# ---------------------------------------------------------------------------
# geometry helpers


def _grad_lambda(mesh, cells):
    """Gradients of the three barycentric coordinates, shape (nc, 3, 2)."""
    verts = mesh.cell_vertices(cells)
    v0, v1, v2 = verts[:, 0], verts[:, 1], verts[:, 2]
    det = (2.0 * mesh.areas) if cells is None else (2.0 * mesh.areas[cells])
    grads = np.empty((len(verts), 3, 2))
    for k, (pa, pb) in enumerate(((v1, v2), (v2, v0), (v0, v1))):
        # grad(lambda_k) is normal to the opposite edge, scaled by 1/(2A)
        d = pb - pa
        grads[:, k, 0] = -d[:, 1] / det
        grads[:, k, 1] = d[:, 0] / det
    return grads


def _bary3(bary):
    """Normalize barycentric points to shape (C, P, 3) with C possibly 1."""
    bary = np.asarray(bary, dtype=np.float64)
    if bary.ndim == 1:
        bary = bary[None, :]
    if bary.ndim == 2:
        bary = bary[None, :, :]
    return bary


def physical_points(mesh, bary, cells=None):
    """Map barycentric points to physical coordinates (nc, npts, 2)."""
    verts = mesh.cell_vertices(cells)
    b3 = np.broadcast_to(_bary3(bary), (len(verts),) + _bary3(bary).shape[1:])
    return np.einsum("cpk,ckX->cpX", b3, verts)


def edge_gauss_bary(local_edge, params):
    """Barycentric coordinates of points on a local edge.

    ``local_edge`` is the edge opposite that local vertex; ``params`` run in
    [-1, 1] from local vertex ``local_edge+1`` to ``local_edge+2``.
    """
    params = np.asarray(params, dtype=np.float64)
    bary = np.zeros((len(params), 3))
    bary[:, (local_edge + 1) % 3] = 0.5 * (1.0 - params)
    bary[:, (local_edge + 2) % 3] = 0.5 * (1.0 + params)
    return bary


def edge_bary_in_cell(mesh, edge_ids, cells, params):
    """Per-cell barycentric coordinates of edge points.

    For each (edge, incident cell) pair, returns (m, npts, 3) barycentric
    coordinates of the points at ``params`` in [-1, 1] along the edge,
    parametrized from the lower-numbered to the higher-numbered global vertex
    regardless of the cell, so two cells sharing the edge see identical
    physical points.
    """
    params = np.asarray(params, dtype=np.float64)
    cell_verts = mesh.cells[cells]
    a = mesh.edges[edge_ids, 0][:, None]
    b = mesh.edges[edge_ids, 1][:, None]
    onehot_a = (cell_verts == a).astype(np.float64)
    onehot_b = (cell_verts == b).astype(np.float64)
    wa = 0.5 * (1.0 - params)
    wb = 0.5 * (1.0 + params)
    return onehot_a[:, None, :] * wa[None, :, None] + onehot_b[:, None, :] * wb[None, :, None]


# ---------------------------------------------------------------------------
# local bases (physical-element construction)


def _monomial_tables(X, Y, scale, derivs):
    """Scaled-monomial basis {1, X, Y, X^2, XY, Y^2} and derivatives.

    X, Y have shape (...,), scale broadcasts against them; returns a dict
    with requested entries 'val' (..., 6), 'grad' (..., 6, 2),
    'hess' (..., 6, 2, 2) in physical derivatives.
    """
    one = np.ones_like(X)
    zero = np.zeros_like(X)
    out = {}
    if 0 in derivs:
        out["val"] = np.stack([one, X, Y, X * X, X * Y, Y * Y], axis=-1)
    if 1 in derivs:
        dx = np.stack([zero, one, zero, 2.0 * X, Y, zero], axis=-1)
        dy = np.stack([zero, zero, one, zero, X, 2.0 * Y], axis=-1)
        out["grad"] = np.stack([dx, dy], axis=-1) / scale[..., None, None]
    if 2 in derivs:
        s2 = (scale * scale)[..., None]
        hxx = np.stack([zero, zero, zero, 2.0 * one, zero, zero], axis=-1) / s2
        hxy = np.stack([zero, zero, zero, zero, one, zero], axis=-1) / s2
        hyy = np.stack([zero, zero, zero, zero, zero, 2.0 * one], axis=-1) / s2
        out["hess"] = np.stack(
            [np.stack([hxx, hxy], axis=-1), np.stack([hxy, hyy], axis=-1)], axis=-2
        )
    return out


def _morley_dof_matrix(mesh, cells, cell_normals=False):
    """6x6 DOF-evaluation matrices over scaled monomials, shape (nc, 6, 6).

    Row i applies DOF functional i (vertex values, then edge means of the
    normal derivative) to monomial j. Uses cell barycenter/diameter scaling
    for conditioning.
    """
    if cells is None:
        cells = np.arange(mesh.n_cells)
    cells = np.asarray(cells)
    verts = mesh.cell_vertices(cells)
    centers = verts.mean(axis=1)
    scales = mesh.h_K[cells]

    D = np.empty((len(cells), 6, 6))
    Xv = (verts - centers[:, None, :]) / scales[:, None, None]
    D[:, :3, :] = _monomial_tables(Xv[..., 0], Xv[..., 1], scales[:, None], (0,))["val"]

    edge_ids = mesh.cell_edges[cells]
    normals = mesh.n_F[edge_ids]
    if cell_normals:
        normals = normals * mesh.cell_edge_signs[cells][..., None]
    for k in range(3):
        bary = edge_gauss_bary(k, _GAUSS2)
        pts = np.einsum("pk,ckX->cpX", bary, verts)
        Xg = (pts - centers[:, None, :]) / scales[:, None, None]
        grad = _monomial_tables(Xg[..., 0], Xg[..., 1], scales[:, None], (1,))["grad"]
        dn = np.einsum("cpjX,cX->cpj", grad, normals[:, k])
        D[:, 3 + k, :] = dn.mean(axis=1)
    return D


def _morley_coefficients(mesh, cells=None, cell_normals=False):
    """Coefficient tensors C (nc, 6, 6): shape function k = sum_j C[c,j,k] m_j."""
    D = _morley_dof_matrix(mesh, cells, cell_normals)
    dets = np.linalg.det(D)
    bad = np.flatnonzero(np.abs(dets) < 1e-12)
    if len(bad):
        which = bad[0] if cells is None else np.asarray(cells)[bad[0]]
        raise ValueError(f"singular Morley DOF matrix on cell {int(which)}")
    return np.linalg.inv(D)


def _lagrange_tables(ell, bary3, grad_lam, derivs):
    """P1/P2 tables at per-cell barycentric points bary3 of shape (C, P, 3)."""
    nc = len(grad_lam)
    npts = bary3.shape[1]
    lam = np.broadcast_to(bary3, (nc, npts, 3))
    out = {}
    if ell == 1:
        if 0 in derivs:
            out["val"] = bary3
        if 1 in derivs:
            out["grad"] = np.broadcast_to(grad_lam[:, None, :, :], (nc, 1, 3, 2))
        if 2 in derivs:
            out["hess"] = np.zeros((nc, 1, 3, 2, 2))
        return out
    if 0 in derivs:
        vert = bary3 * (2.0 * bary3 - 1.0)
        edge = 4.0 * bary3[..., [1, 2, 0]] * bary3[..., [2, 0, 1]]
        out["val"] = np.concatenate([vert, edge], axis=-1)
    if 1 in derivs:
        dphi = np.zeros((nc, npts, 6, 3))
        for k in range(3):
            dphi[:, :, k, k] = 4.0 * lam[:, :, k] - 1.0
            dphi[:, :, 3 + k, (k + 1) % 3] = 4.0 * lam[:, :, (k + 2) % 3]
            dphi[:, :, 3 + k, (k + 2) % 3] = 4.0 * lam[:, :, (k + 1) % 3]
        out["grad"] = np.einsum("cplk,ckX->cplX", dphi, grad_lam)
    if 2 in derivs:
        # d2(phi)/d(lam)2 is constant: vertex k -> 4 e_k e_k^T,
        # edge k -> 4 (e_{k+1} e_{k+2}^T + e_{k+2} e_{k+1}^T)
        d2 = np.zeros((6, 3, 3))
        for k in range(3):
            d2[k, k, k] = 4.0
            d2[3 + k, (k + 1) % 3, (k + 2) % 3] = 4.0
            d2[3 + k, (k + 2) % 3, (k + 1) % 3] = 4.0
        out["hess"] = np.einsum("lkm,ckX,cmY->clXY", d2, grad_lam, grad_lam)[:, None]
    return out


def basis_tables(space, bary, cells=None, derivs=(0, 1, 2)):
    """Batched shape-function tables at barycentric points.

    Returns a dict with keys among 'val', 'grad', 'hess'. Scalar spaces:
    val (nc|1, npts, nloc), grad (nc, npts|1, nloc, 2),
    hess (nc, npts|1, nloc, 2, 2). The vector space (CRVector) inserts a
    component axis after nloc. Length-1 cell/point axes are broadcastable
    stand-ins for constant tables.
    """
    mesh = space.mesh
    tag = space.tag
    bary3 = _bary3(bary)
    npts = bary3.shape[1]
    if tag is SpaceTag.P0_MEAN_ZERO:
        nc = mesh.n_cells if cells is None else len(cells)
        out = {}
        if 0 in derivs:
            out["val"] = np.ones((1, npts, 1))
        if 1 in derivs:
            out["grad"] = np.zeros((nc, 1, 1, 2))
        if 2 in derivs:
            out["hess"] = np.zeros((nc, 1, 1, 2, 2))
        return out
    if tag in (SpaceTag.LAGRANGE_P1, SpaceTag.LAGRANGE_P2):
        grad_lam = _grad_lambda(mesh, cells)
        return _lagrange_tables(1 if tag is SpaceTag.LAGRANGE_P1 else 2, bary3, grad_lam, derivs)
    if tag is SpaceTag.CR_VECTOR:
        edge_ids = mesh.cell_edges if cells is None else mesh.cell_edges[cells]
        nc = len(edge_ids)
        frames = space.cr_frames[edge_ids] if space.cr_frames is not None else np.broadcast_to(
            np.eye(2), (nc, 3, 2, 2)
        )
        out = {}
        if 0 in derivs:
            # dof (k, a) -> field psi_k * frame column a
            scal = np.broadcast_to(1.0 - 2.0 * bary3, (nc, npts, 3))
            out["val"] = np.einsum("cpk,ckia->cpkai", scal, frames).reshape(nc, npts, 6, 2)
        if 1 in derivs:
            g = -2.0 * _grad_lambda(mesh, cells)[:, None, :, :]
            out["grad"] = np.einsum("cpkX,ckia->cpkaiX", g, frames).reshape(nc, 1, 6, 2, 2)
        if 2 in derivs:
            out["hess"] = np.zeros((nc, 1, 6, 2, 2, 2))
        return out
    if tag is SpaceTag.MORLEY:
        coeff = _morley_coefficients(mesh, cells, space.cell_normals)
        verts = mesh.cell_vertices(cells)
        nc = len(verts)
        centers = verts.mean(axis=1)
        scales = mesh.h_K if cells is None else mesh.h_K[cells]
        b3 = np.broadcast_to(bary3, (nc, npts, 3))
        pts = np.einsum("cpk,ckX->cpX", b3, verts)
        Xs = (pts - centers[:, None, :]) / scales[:, None, None]
        out = {}
        low = tuple(set(derivs) & {0, 1})
        if low:
            mono = _monomial_tables(Xs[..., 0], Xs[..., 1], scales[:, None], low)
            if 0 in derivs:
                out["val"] = np.einsum("cpj,cjl->cpl", mono["val"], coeff)
            if 1 in derivs:
                out["grad"] = np.einsum("cpjX,cjl->cplX", mono["grad"], coeff)
        if 2 in derivs:
            hess_mono = _monomial_tables(
                Xs[:, :1, 0], Xs[:, :1, 1], scales[:, None], (2,)
            )["hess"]
            out["hess"] = np.einsum("cpjXY,cjl->cplXY", hess_mono, coeff)
        return out
    raise ValueError(f"unknown space tag {tag}")


@dataclass(frozen=True, eq=False)
class LocalBasis:
    """Shape functions of one cell, evaluable at barycentric points.

    ``values``/``gradients``/``hessians`` return (npts, nloc, ...) arrays
    ([component,] then derivative axes). Applying the owning space's DOF
    functionals to these functions gives the identity matrix.
    """

    space: DofSpace
    cell: int

    def _tables(self, bary, deriv):
        bary3 = _bary3(bary)
        tabs = basis_tables(self.space, bary3, cells=np.array([self.cell]), derivs=(deriv,))
        key = {0: "val", 1: "grad", 2: "hess"}[deriv]
        arr = tabs[key]
        arr = np.broadcast_to(arr, (1, bary3.shape[1]) + arr.shape[2:])
        return arr[0]

    def values(self, bary):
        return self._tables(bary, 0)

    def gradients(self, bary):
        return self._tables(bary, 1)

    def hessians(self, bary):
        return self._tables(bary, 2)


def morley_local_basis(mesh, cell, cell_normals=False):
    """Morley basis of one cell: vertex values + edge-mean normal derivatives
    against the global edge normals. Duality with the DOF functionals holds to
    1e-10."""
    space = dof_space(mesh, SpaceTag.MORLEY, cell_normals=cell_normals)
    return LocalBasis(space, int(cell))


def cr_vector_local_basis(mesh, cell):
    """Vector Crouzeix-Raviart basis of one cell: DOFs are the Cartesian
    components of edge-midpoint values."""
    space = dof_space(mesh, SpaceTag.CR_VECTOR)
    return LocalBasis(space, int(cell))


def lagrange_local_basis(mesh, cell, ell):
    """Nodal P1/P2 basis of one cell."""
    if ell == 1:
        space = dof_space(mesh, SpaceTag.LAGRANGE_P1)
    elif ell == 2:
        space = dof_space(mesh, SpaceTag.LAGRANGE_P2)
    else:
        raise ValueError("ell must be 1 or 2")
    return LocalBasis(space, int(cell))


def dof_duality_matrix(space, cell):
    """Apply the cell's DOF functionals to its own shape functions.

    Returns an (nloc, nloc) matrix; exact duality gives the identity.
    """
    mesh = space.mesh
    basis = LocalBasis(space, int(cell))
    tag = space.tag
    vert_bary = np.eye(3)
    mid_bary = 0.5 * (np.eye(3)[[1, 2, 0]] + np.eye(3)[[2, 0, 1]])
    if tag is SpaceTag.LAGRANGE_P1:
        return basis.values(vert_bary)
    if tag is SpaceTag.LAGRANGE_P2:
        return basis.values(np.vstack([vert_bary, mid_bary]))
    if tag is SpaceTag.P0_MEAN_ZERO:
        return basis.values(np.full((1, 3), 1.0 / 3.0))
    if tag is SpaceTag.CR_VECTOR:
        vals = basis.values(mid_bary)  # (3, 6, 2)
        edge_ids = mesh.cell_edges[cell]
        frames = (
            space.cr_frames[edge_ids]
            if space.cr_frames is not None
            else np.broadcast_to(np.eye(2), (3, 2, 2))
        )
        return np.einsum("kli,kia->kal", vals, frames).reshape(6, 6)
    if tag is SpaceTag.MORLEY:
        D = np.empty((6, 6))
        D[:3] = basis.values(vert_bary)
        edge_ids = mesh.cell_edges[cell]
        normals = mesh.n_F[edge_ids]
        if space.cell_normals:
            normals = normals * mesh.cell_edge_signs[cell][:, None]
        for k in range(3):
            grads = basis.gradients(edge_gauss_bary(k, _GAUSS2))  # (2, 6, 2)
            D[3 + k] = np.einsum("plX,X->l", grads, normals[k]) / 2.0
        return D
    raise ValueError(f"unknown space tag {tag}")


# ---------------------------------------------------------------------------
# discrete fields and interpolation


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Coefficient vector over the free DOFs of a space; constrained DOFs are
    homogeneous zeros."""

    space: DofSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.space.n_dofs:
            raise ValueError("coefficient length does not match free DOF count")

    def raw(self):
        """Coefficients over raw DOFs (zeros at constrained positions)."""
        full = np.zeros(self.space.n_raw)
        full[self.space.free_dofs] = self.coeffs
        return full

    def cell_coeffs(self, cells=None):
        dofs = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        return self.raw()[dofs]

    def _evaluate(self, bary, cells, deriv):
        key = {0: "val", 1: "grad", 2: "hess"}[deriv]
        tab = basis_tables(self.space, bary, cells, derivs=(deriv,))[key]
        dofs = self.cell_coeffs(cells)
        nc = len(dofs)
        npts = _bary3(bary).shape[1]
        tab = np.broadcast_to(tab, (nc, tab.shape[1]) + tab.shape[2:])
        out = np.einsum("cpl...,cl->cp...", tab, dofs)
        if out.shape[1] == 1 and npts > 1:
            out = np.broadcast_to(out, (nc, npts) + out.shape[2:])
        return out

    def values(self, bary, cells=None):
        return self._evaluate(bary, cells, 0)

    def gradients(self, bary, cells=None):
        return self._evaluate(bary, cells, 1)

    def hessians(self, bary, cells=None):
        return self._evaluate(bary, cells, 2)


def interpolate(space, f, grad=None):
    """Canonical interpolation onto a space.

    ``f`` maps an (..., 2) array of points to values (scalars, or (..., 2)
    vectors for CRVector). Morley additionally needs ``grad`` (same calling
    convention, returning (..., 2)) for its edge-mean normal derivative DOFs,
    computed by 2-point Gauss quadrature.
    """
    mesh = space.mesh
    tag = space.tag
    raw = np.zeros(space.n_raw)
    if tag is SpaceTag.LAGRANGE_P1:
        raw[:] = f(mesh.vertices)
    elif tag is SpaceTag.LAGRANGE_P2:
        raw[: mesh.n_vertices] = f(mesh.vertices)
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        raw[mesh.n_vertices:] = f(mids)
    elif tag is SpaceTag.MORLEY:
        if grad is None:
            raise ValueError("Morley interpolation needs the gradient callable")
        raw[: mesh.n_vertices] = f(mesh.vertices)
        a, b = mesh.vertices[mesh.edges[:, 0]], mesh.vertices[mesh.edges[:, 1]]
        acc = np.zeros(mesh.n_edges)
        for s in _GAUSS2:
            pts = 0.5 * (1.0 - s) * a + 0.5 * (1.0 + s) * b
            acc += 0.5 * np.einsum("eX,eX->e", np.asarray(grad(pts)), mesh.n_F)
        raw[mesh.n_vertices:] = acc
    elif tag is SpaceTag.CR_VECTOR:
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        vals = np.asarray(f(mids))
        frames = space.cr_frames if space.cr_frames is not None else np.broadcast_to(
            np.eye(2), (mesh.n_edges, 2, 2)
        )
        comps = np.einsum("ei,eia->ea", vals, frames)
        raw[0::2] = comps[:, 0]
        raw[1::2] = comps[:, 1]
    elif tag is SpaceTag.P0_MEAN_ZERO:
        centers = mesh.cell_vertices().mean(axis=1)
        raw[:] = f(centers)
    else:
        raise ValueError(f"unknown space tag {tag}")
    return DiscreteField(space, raw[space.free_dofs])


def random_field(space, rng, scale=1.0):
    """Random coefficients over the free DOFs (property-test helper)."""
    return DiscreteField(space, scale * rng.standard_normal(space.n_dofs))
