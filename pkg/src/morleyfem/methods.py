"""Solution methods for the singularly perturbed fourth-order problem

    eps^2 biharmonic(u) - laplacian(u) = f   on the unit square,
    u = du/dn = 0                            on the boundary.

Two discretizations, each with a direct (monolithic) and a decoupled solver:

- strong: nonconforming quadratic space with both vertex values and boundary
  edge-mean normal derivatives constrained (``Vh0``);
- penalized: only vertex values constrained (``Vh``), the normal-derivative
  boundary condition imposed weakly through symmetric boundary terms with
  penalty ``sigma``.

The direct drivers first solve the Poisson part in a conforming Lagrange
space of order ``ell``, then the fourth-order system with the Poisson
gradient as load. The decoupled drivers replace the fourth-order solve by a
potential solve, a divergence-constrained vector (Brinkman-type) saddle
problem, and a recovery solve, which reproduces the direct solution exactly
in exact arithmetic.
"""

from dataclasses import dataclass, field

import numpy as np

from . import assembly, linalg
from .spaces import BCVariant, DiscreteField, SpaceTag, dof_space

METHODS = ("direct", "decoupled", "direct-penalized", "decoupled-penalized")


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls shared by all drivers."""

    tol: float = 1e-8
    maxit_cg: int = 1000
    maxit_gmres: int = 500
    restart: int = 20
    alpha: float = 2.0
    sigma: float = 5.0
    theta: float = 0.08

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")


@dataclass
class MethodResult:
    """Solution fields and per-stage solver reports."""

    method: str
    eps: float
    u: DiscreteField
    w: DiscreteField
    reports: dict = field(default_factory=dict)
    z: DiscreteField | None = None
    phi: DiscreteField | None = None
    p: np.ndarray | None = None
    boundary_dof_drop: float | None = None

    @property
    def iterations(self):
        return {name: r.iterations for name, r in self.reports.items()}


def _check_eps(eps):
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")


def _check_sigma(sigma):
    if sigma < 1.0:
        raise ValueError("penalty parameter must be at least 1")


def _lagrange_space(mesh, ell):
    if ell == 1:
        return dof_space(mesh, SpaceTag.LAGRANGE_P1, BCVariant.LAGRANGE_ZERO)
    if ell == 2:
        return dof_space(mesh, SpaceTag.LAGRANGE_P2, BCVariant.LAGRANGE_ZERO)
    raise ValueError("ell must be 1 or 2")


def _amg_cg(K, rhs, options, reports, name, nullspace=None):
    hierarchy = linalg.amg_setup(K, theta=options.theta, nullspace=nullspace)
    x, report = linalg.cg(K, rhs, M=hierarchy, tol=options.tol, maxit=options.maxit_cg)
    reports[name] = report
    return x


def _morley_nullspace(space):
    """Near-nullspace of gradient-dominated Morley operators: constants have
    unit vertex values and zero edge-mean normal derivatives."""
    null = np.zeros(space.n_dofs)
    idx = space.free_index[: space.mesh.n_vertices]
    null[idx[idx >= 0]] = 1.0
    return null


def _solve_poisson(mesh, f, ell, options, reports):
    """Conforming Poisson solve -laplacian(w) = f with zero boundary values."""
    space = _lagrange_space(mesh, ell)
    K = assembly.assemble_bh(space)
    rhs = assembly.assemble_load(space, f)
    w = _amg_cg(K, rhs, options, reports, "poisson")
    return DiscreteField(space, w)


def solve_direct(mesh, eps, f, ell=1, options=SolverOptions()):
    """Monolithic solve in the strongly constrained space.

    Solves the Poisson stage, then eps^2 a_h(u, v) + b_h(u, v) =
    (grad w, grad_h v) over ``Vh0`` with multigrid-preconditioned conjugate
    gradients.
    """
    _check_eps(eps)
    reports = {}
    w = _solve_poisson(mesh, f, ell, options, reports)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
    K = assembly.assemble_ah(space).scale(eps**2).add(assembly.assemble_bh(space))
    rhs = assembly.assemble_bh(space, w.space) @ w.coeffs
    u = _amg_cg(K, rhs, options, reports, "main", nullspace=_morley_nullspace(space))
    return MethodResult("direct", eps, DiscreteField(space, u), w, reports)


def solve_direct_penalized(mesh, eps, f, ell=1, options=SolverOptions()):
    """Monolithic solve in the vertex-constrained space with the penalized
    Hessian form (sigma >= 1)."""
    _check_eps(eps)
    _check_sigma(options.sigma)
    reports = {}
    w = _solve_poisson(mesh, f, ell, options, reports)
    space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
    K = assembly.assemble_nitsche_ah(space, options.sigma).scale(eps**2).add(
        assembly.assemble_bh(space)
    )
    rhs = assembly.assemble_bh(space, w.space) @ w.coeffs
    u = _amg_cg(K, rhs, options, reports, "main", nullspace=_morley_nullspace(space))
    return MethodResult("direct-penalized", eps, DiscreteField(space, u), w, reports)


def embed_in_vh(field):
    """Inclusion ``Vh0`` -> ``Vh`` (same raw DOFs, more of them free)."""
    vh = dof_space(field.space.mesh, SpaceTag.MORLEY, BCVariant.VH)
    return DiscreteField(vh, field.raw()[vh.free_dofs])


def project_to_vh0(field):
    """DOF projection ``Vh`` -> ``Vh0`` zeroing boundary edge DOFs.

    Returns (projected field, largest dropped DOF value). The identity on
    fields already in ``Vh0`` holds exactly.
    """
    vh0 = dof_space(field.space.mesh, SpaceTag.MORLEY, BCVariant.VH0)
    raw = field.raw()
    dropped = raw[vh0.constrained & ~field.space.constrained]
    drop = float(np.abs(dropped).max()) if len(dropped) else 0.0
    return DiscreteField(vh0, raw[vh0.free_dofs]), drop


def h1_projection(field, ell=1, tol=1e-12):
    """Gradient-orthogonal projection onto the conforming Lagrange space.

    Solves b_h(Pv, w) = b_h(v, w) against all Lagrange test functions w.
    Fields interpolated from the Lagrange space project back to themselves.
    """
    space = _lagrange_space(field.space.mesh, ell)
    K = assembly.assemble_bh(space)
    rhs = assembly.assemble_bh(space, field.space) @ field.coeffs
    x, report = linalg.cg(K, rhs, M=linalg.amg_setup(K), tol=tol, maxit=2000)
    if not report.converged:
        raise RuntimeError("projection solve did not converge")
    return DiscreteField(space, x)


def _decoupled_cascade(mesh, eps, f, ell, options, penalized):
    """Common four-stage driver behind both decoupled methods."""
    if eps <= 0.0:
        raise ValueError("the decoupled solvers need a positive eps")
    reports = {}
    w = _solve_poisson(mesh, f, ell, options, reports)

    # potential stage: b_h(z, v) = (grad w, grad_h v) over Vh
    vh = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
    B = assembly.assemble_bh(vh)
    rhs = assembly.assemble_bh(vh, w.space) @ w.coeffs
    null = _morley_nullspace(vh)
    z = DiscreteField(vh, _amg_cg(B, rhs, options, reports, "potential", nullspace=null))

    # Brinkman stage: divergence-constrained vector solve for phi
    if penalized:
        cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO)
        A = assembly.assemble_ch(cr, options.sigma, eps)
    else:
        cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_FULL_ZERO)
        A = assembly.assemble_mass(cr).add(assembly.assemble_bh(cr), alpha=eps**2)
    p0 = dof_space(mesh, SpaceTag.P0_MEAN_ZERO)
    D = assembly.assemble_div(cr, p0)
    C = assembly.assemble_curl_coupling(cr, vh)
    saddle = linalg.block_matrix([[A, D.transpose()], [D, None]])
    rhs_saddle = np.concatenate([C @ z.coeffs, np.zeros(p0.n_dofs)])
    precond = linalg.block_factorization_precond(
        A, D, mesh.areas, eps, alpha=options.alpha,
        inner=linalg.amg_setup(A, theta=options.theta),
    )
    x, report = linalg.gmres(
        saddle, rhs_saddle, M=precond, tol=options.tol,
        maxit=options.maxit_gmres, restart=options.restart,
    )
    reports["brinkman"] = report
    phi = DiscreteField(cr, x[: cr.n_dofs])
    p = linalg.weighted_zero_mean(x[cr.n_dofs:], mesh.areas)

    # recovery stage: b_h(u, chi) = (phi, curl chi) over Vh
    rhs = C.transpose() @ phi.coeffs
    u = DiscreteField(vh, _amg_cg(B, rhs, options, reports, "solution", nullspace=null))
    return w, z, phi, p, u, reports


def solve_decoupled(mesh, eps, f, ell=1, options=SolverOptions()):
    """Decoupled solve of the strongly constrained method.

    The recovered solution lies in ``Vh0`` up to solver tolerance; it is
    returned projected there, with the largest dropped boundary DOF recorded
    in ``boundary_dof_drop``.
    """
    _check_eps(eps)
    w, z, phi, p, u, reports = _decoupled_cascade(mesh, eps, f, ell, options, penalized=False)
    u0, drop = project_to_vh0(u)
    return MethodResult(
        "decoupled", eps, u0, w, reports, z=z, phi=phi, p=p, boundary_dof_drop=drop
    )


def solve_decoupled_penalized(mesh, eps, f, ell=1, options=SolverOptions()):
    """Decoupled solve of the penalized method (solution in ``Vh``)."""
    _check_eps(eps)
    _check_sigma(options.sigma)
    w, z, phi, p, u, reports = _decoupled_cascade(mesh, eps, f, ell, options, penalized=True)
    return MethodResult("decoupled-penalized", eps, u, w, reports, z=z, phi=phi, p=p)


def system_matrix(mesh, eps, method, options=SolverOptions()):
    """Main-stage system matrix of a method: the fourth-order operator for
    the direct drivers, the saddle system for the decoupled ones."""
    _check_eps(eps)
    if method == "direct":
        space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH0)
        return assembly.assemble_ah(space).scale(eps**2).add(assembly.assemble_bh(space))
    if method == "direct-penalized":
        _check_sigma(options.sigma)
        space = dof_space(mesh, SpaceTag.MORLEY, BCVariant.VH)
        hess = assembly.assemble_nitsche_ah(space, options.sigma)
        return hess.scale(eps**2).add(assembly.assemble_bh(space))
    if method in ("decoupled", "decoupled-penalized"):
        if method.endswith("penalized"):
            _check_sigma(options.sigma)
            cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_NORMAL_ZERO)
            A = assembly.assemble_ch(cr, options.sigma, eps)
        else:
            cr = dof_space(mesh, SpaceTag.CR_VECTOR, BCVariant.CR_FULL_ZERO)
            A = assembly.assemble_mass(cr).add(assembly.assemble_bh(cr), alpha=eps**2)
        D = assembly.assemble_div(cr, dof_space(mesh, SpaceTag.P0_MEAN_ZERO))
        return linalg.block_matrix([[A, D.transpose()], [D, None]])
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")


def solve(mesh, eps, f, method="direct", ell=1, options=SolverOptions()):
    """Dispatch on the method name (one of :data:`METHODS`)."""
    drivers = {
        "direct": solve_direct,
        "decoupled": solve_decoupled,
        "direct-penalized": solve_direct_penalized,
        "decoupled-penalized": solve_decoupled_penalized,
    }
    if method not in drivers:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    return drivers[method](mesh, eps, f, ell=ell, options=options)
