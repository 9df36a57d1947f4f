"""Executable property checks behind the ``check`` subcommand.

Every check returns a :class:`CheckResult`; :func:`run_all` runs the whole
battery on small meshes and is what both the CLI and the test suite call.
The ``sigma`` and ``cell_normals`` arguments exist to demonstrate failure
modes (insufficient penalty, per-cell instead of global edge normals).
"""

from dataclasses import dataclass

import numpy as np

from . import assembly, linalg
from .mesh import uniform_unit_square
from .methods import SolverOptions, h1_projection, solve
from .spaces import (
    BCVariant,
    SpaceTag,
    dof_duality_matrix,
    dof_space,
    edge_bary_in_cell,
    random_field,
)

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass(frozen=True)
class CheckResult:
    """One named pass/fail verdict with the measured worst case."""

    name: str
    ok: bool
    detail: str


def _forcing(p):
    x, y = p[..., 0], p[..., 1]
    return np.sin(np.pi * x) * np.sin(np.pi * y) * (1.0 + x - y**2)


def check_dof_duality(ns=(2, 4, 8), tol=1e-10):
    """Each local basis evaluates to the identity under its own DOFs."""
    worst = 0.0
    tags = [
        (SpaceTag.MORLEY, BCVariant.NONE),
        (SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO),
        (SpaceTag.CR_VECTOR, BCVariant.CR_FULL_ZERO),
        (SpaceTag.LAGRANGE_P1, BCVariant.NONE),
        (SpaceTag.LAGRANGE_P2, BCVariant.NONE),
    ]
    for n in ns:
        mesh = uniform_unit_square(n)
        for tag, bc in tags:
            space = dof_space(mesh, tag, bc)
            size = space.cell_dofs.shape[1]
            for cell in range(mesh.n_cells):
                D = dof_duality_matrix(space, cell)
                worst = max(worst, float(np.abs(D - np.eye(size)).max()))
    return CheckResult("dof-duality", worst <= tol, f"max deviation {worst:.2e}")


def check_weak_continuity(ns=(2, 4, 8), tol=1e-10, cell_normals=False):
    """Quadratic nonconforming fields are continuous at edge endpoints and
    have edge-mean-continuous normal derivatives."""
    rng = np.random.default_rng(2026)
    worst = 0.0
    ends = np.array([-1.0, 1.0])
    for n in ns:
        mesh = uniform_unit_square(n)
        space = dof_space(mesh, SpaceTag.MORLEY, cell_normals=cell_normals)
        interior = np.flatnonzero(~mesh.boundary_edge)
        c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
        be0 = edge_bary_in_cell(mesh, interior, c0, ends)
        be1 = edge_bary_in_cell(mesh, interior, c1, ends)
        bg0 = edge_bary_in_cell(mesh, interior, c0, _GAUSS2)
        bg1 = edge_bary_in_cell(mesh, interior, c1, _GAUSS2)
        for _ in range(3):
            u = random_field(space, rng)
            vjump = u.values(be0, cells=c0) - u.values(be1, cells=c1)
            gjump = (u.gradients(bg0, cells=c0) - u.gradients(bg1, cells=c1)).mean(axis=1)
            njump = np.einsum("eX,eX->e", gjump, mesh.n_F[interior])
            worst = max(worst, float(np.abs(vjump).max()), float(np.abs(njump).max()))
    return CheckResult("weak-continuity", worst <= tol, f"max jump {worst:.2e}")


def check_curl_membership(ns=(2, 4, 8), tol=1e-10):
    """Rotated broken gradients of Morley fields are single-valued at edge
    midpoints and satisfy the matching boundary trace conditions."""
    rng = np.random.default_rng(7)
    worst = 0.0
    mid = np.array([0.0])
    for n in ns:
        mesh = uniform_unit_square(n)
        interior = np.flatnonzero(~mesh.boundary_edge)
        bnd = np.flatnonzero(mesh.boundary_edge)
        c0, c1 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
        cb = mesh.edge_cells[bnd, 0]
        b0 = edge_bary_in_cell(mesh, interior, c0, mid)
        b1 = edge_bary_in_cell(mesh, interior, c1, mid)
        bb = edge_bary_in_cell(mesh, bnd, cb, mid)
        for bc in (BCVariant.VH, BCVariant.VH0):
            space = dof_space(mesh, SpaceTag.MORLEY, bc)
            u = random_field(space, rng)
            g0 = u.gradients(b0, cells=c0)[:, 0]
            g1 = u.gradients(b1, cells=c1)[:, 0]
            jump = np.stack([g0[:, 1] - g1[:, 1], g1[:, 0] - g0[:, 0]], axis=-1)
            worst = max(worst, float(np.abs(jump).max()))
            gb = u.gradients(bb, cells=cb)[:, 0]
            curl_b = np.stack([gb[:, 1], -gb[:, 0]], axis=-1)
            worst = max(worst, float(np.abs(np.einsum("eX,eX->e", curl_b, mesh.n_F[bnd])).max()))
            if bc is BCVariant.VH0:
                worst = max(worst, float(np.abs(np.einsum("eX,eX->e", curl_b, mesh.t_F[bnd])).max()))
    return CheckResult("curl-membership", worst <= tol, f"max trace {worst:.2e}")


def check_spd(ns=(2, 4, 8), eps_values=(1.0, 1e-4)):
    """The fourth-order system matrix admits a Cholesky factorization."""
    for n in ns:
        space = dof_space(uniform_unit_square(n), SpaceTag.MORLEY, BCVariant.VH0)
        A = assembly.assemble_ah(space)
        B = assembly.assemble_bh(space)
        for eps in eps_values:
            K = A.scale(eps**2).add(B).to_dense()
            try:
                np.linalg.cholesky(K)
            except np.linalg.LinAlgError:
                return CheckResult("spd", False, f"not SPD at n={n}, eps={eps:g}")
    return CheckResult("spd", True, "Cholesky succeeded on all meshes")


def check_coercivity(ns=(2, 4, 8), sigma=5.0):
    """The penalized Hessian form is positive definite at the given sigma."""
    worst = np.inf
    for n in ns:
        space = dof_space(uniform_unit_square(n), SpaceTag.MORLEY, BCVariant.VH)
        A = assembly.assemble_nitsche_ah(space, sigma).to_dense()
        worst = min(worst, float(np.linalg.eigvalsh(A)[0]))
    return CheckResult(
        "nitsche-coercivity", worst > 0.0, f"min eigenvalue {worst:.2e} at sigma={sigma:g}"
    )


def check_projection_identity(n=4, tol=1e-9):
    """(grad w, grad_h v) = (f, Pv) for the Poisson stage solution w and
    random nonconforming fields v, with P computed by an explicit solve."""
    mesh = uniform_unit_square(n)
    res = solve(mesh, 1.0, _forcing, method="direct", options=SolverOptions(tol=1e-12))
    vh0 = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    mixed = assembly.assemble_bh(vh0, res.w.space)
    load = assembly.assemble_load(res.w.space, _forcing)
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(20):
        v = random_field(vh0, rng)
        lhs = res.w.coeffs @ (mixed.transpose() @ v.coeffs)
        rhs = load @ h1_projection(v).coeffs
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    return CheckResult("projection-identity", worst <= tol, f"max relative gap {worst:.2e}")


def check_pressure_mean(n=4, tol=1e-10):
    """Recovered pressures have zero area-weighted mean."""
    mesh = uniform_unit_square(n)
    worst = 0.0
    for method in ("decoupled", "decoupled-penalized"):
        res = solve(mesh, 0.5, _forcing, method=method, options=SolverOptions(tol=1e-10))
        mean = abs(np.dot(mesh.areas, res.p))
        worst = max(worst, mean / max(np.abs(res.p).max(), 1.0))
    return CheckResult("pressure-mean", worst <= tol, f"max weighted mean {worst:.2e}")


def _dense_stages(mesh, eps, method):
    """Dense replication of every linear solve of the given method."""
    penalized = method.endswith("penalized")
    wspace = dof_space(mesh, SpaceTag.LAGRANGE_P1, BCVariant.LAGRANGE_ZERO)
    w = linalg.dense_solve(assembly.assemble_bh(wspace),
                           assembly.assemble_load(wspace, _forcing))
    stages = {"poisson": w}
    if method.startswith("direct"):
        if penalized:
            space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
            hess = assembly.assemble_nitsche_ah(space, 5.0)
        else:
            space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
            hess = assembly.assemble_ah(space)
        K = hess.scale(eps**2).add(assembly.assemble_bh(space))
        stages["main"] = linalg.dense_solve(K, assembly.assemble_bh(space, wspace) @ w)
        return stages

    vh = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
    B = assembly.assemble_bh(vh)
    z = linalg.dense_solve(B, assembly.assemble_bh(vh, wspace) @ w)
    stages["potential"] = z
    if penalized:
        cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO)
        A = assembly.assemble_ch(cr, 5.0, eps)
    else:
        cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_FULL_ZERO)
        A = assembly.assemble_mass(cr).add(assembly.assemble_bh(cr), alpha=eps**2)
    D = assembly.assemble_div(cr, dof_space(mesh, SpaceTag.P0_MEAN_ZERO))
    C = assembly.assemble_curl_coupling(cr, vh)
    saddle = linalg.block_matrix([[A, D.transpose()], [D, None]]).to_dense()
    rhs = np.concatenate([C @ z, np.zeros(mesh.n_cells)])
    x = np.linalg.lstsq(saddle, rhs, rcond=None)[0]
    stages["brinkman"] = (
        x[: cr.n_dofs],
        linalg.weighted_zero_mean(x[cr.n_dofs:], mesh.areas),
    )
    stages["solution"] = linalg.dense_solve(B, C.transpose() @ x[: cr.n_dofs])
    return stages


def check_dense_oracle(ns=(2, 4), eps=0.5, tol=1e-8):
    """Every iterative stage solution agrees with a dense solve of the same
    system on small meshes."""
    from .methods import METHODS

    worst = 0.0
    for n in ns:
        mesh = uniform_unit_square(n)
        for method in METHODS:
            res = solve(mesh, eps, _forcing, method=method, options=SolverOptions(tol=1e-11))
            dense = _dense_stages(mesh, eps, method)
            pairs = [(res.w.coeffs, dense["poisson"])]
            if method.startswith("direct"):
                pairs.append((res.u.coeffs, dense["main"]))
            else:
                phi, p = dense["brinkman"]
                u = dense["solution"]
                pairs += [(res.z.coeffs, dense["potential"]),
                          (res.phi.coeffs, phi), (res.p, p)]
                u_res = res.u.coeffs if method.endswith("penalized") else res.u.raw()[
                    dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH).free_dofs]
                pairs.append((u_res, u))
            for got, ref in pairs:
                worst = max(worst, float(np.linalg.norm(got - ref))
                            / max(float(np.linalg.norm(ref)), 1e-30))
    return CheckResult("dense-oracle", worst <= tol, f"max relative gap {worst:.2e}")


def run_all(sigma=5.0, cell_normals=False):
    """The full battery, in deterministic order."""
    return [
        check_dof_duality(),
        check_weak_continuity(cell_normals=cell_normals),
        check_curl_membership(),
        check_spd(),
        check_coercivity(sigma=sigma),
        check_projection_identity(),
        check_pressure_mean(),
        check_dense_oracle(),
    ]
