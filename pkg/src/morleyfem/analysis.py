"""Manufactured solutions, discrete error norms, and convergence rates.

The two built-in problems on the unit square:

- :func:`example1`: u = sin^2(pi x) sin^2(pi y), a smooth solution without
  boundary layers, with the forcing eps^2 biharmonic(u) - laplacian(u);
- :func:`example2`: forcing 2 pi^2 sin(pi x) sin(pi y), whose solution
  develops boundary layers as eps -> 0. Its closed form is unknown, so all
  errors are measured against the limit solution u0 = sin(pi x) sin(pi y)
  of the Poisson problem -laplacian(u0) = f.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import edge_rule, triangle_rule
from .spaces import edge_bary_in_cell, physical_points


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form reference solution with derivatives and forcing.

    All callables map an (..., 2) array of points to values: scalars for
    ``value`` and ``forcing``, (..., 2) for ``gradient``, (..., 2, 2) for
    ``hessian``, and (..., 2, 2, 2) for ``third``.
    """

    name: str
    value: callable
    gradient: callable
    hessian: callable
    third: callable
    forcing: callable


def _sym3(dxxx, dxxy, dxyy, dyyy):
    """Pack the four distinct third derivatives into an (..., 2, 2, 2) tensor."""
    out = np.empty(dxxx.shape + (2, 2, 2))
    out[..., 0, 0, 0] = dxxx
    out[..., 0, 0, 1] = out[..., 0, 1, 0] = out[..., 1, 0, 0] = dxxy
    out[..., 0, 1, 1] = out[..., 1, 0, 1] = out[..., 1, 1, 0] = dxyy
    out[..., 1, 1, 1] = dyyy
    return out


def example1(eps):
    """Smooth problem with exact solution sin^2(pi x) sin^2(pi y)."""
    pi = np.pi

    def value(p):
        return np.sin(pi * p[..., 0]) ** 2 * np.sin(pi * p[..., 1]) ** 2

    def gradient(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack(
            [
                pi * np.sin(2 * pi * x) * np.sin(pi * y) ** 2,
                pi * np.sin(pi * x) ** 2 * np.sin(2 * pi * y),
            ],
            axis=-1,
        )

    def hessian(p):
        x, y = p[..., 0], p[..., 1]
        out = np.empty(x.shape + (2, 2))
        out[..., 0, 0] = 2 * pi**2 * np.cos(2 * pi * x) * np.sin(pi * y) ** 2
        out[..., 0, 1] = out[..., 1, 0] = pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y)
        out[..., 1, 1] = 2 * pi**2 * np.sin(pi * x) ** 2 * np.cos(2 * pi * y)
        return out

    def third(p):
        x, y = p[..., 0], p[..., 1]
        return _sym3(
            -4 * pi**3 * np.sin(2 * pi * x) * np.sin(pi * y) ** 2,
            2 * pi**3 * np.cos(2 * pi * x) * np.sin(2 * pi * y),
            2 * pi**3 * np.sin(2 * pi * x) * np.cos(2 * pi * y),
            -4 * pi**3 * np.sin(pi * x) ** 2 * np.sin(2 * pi * y),
        )

    def forcing(p):
        x, y = p[..., 0], p[..., 1]
        cx, cy = np.cos(2 * pi * x), np.cos(2 * pi * y)
        sx, sy = np.sin(pi * x) ** 2, np.sin(pi * y) ** 2
        lap = 2 * pi**2 * (cx * sy + sx * cy)
        bih = -8 * pi**4 * (cx * sy + sx * cy - cx * cy)
        return eps**2 * bih - lap

    return ExactSolution(f"example1(eps={eps:g})", value, gradient, hessian, third, forcing)


def example2():
    """Boundary-layer problem; reference is the limit solution u0."""
    pi = np.pi

    def value(p):
        return np.sin(pi * p[..., 0]) * np.sin(pi * p[..., 1])

    def gradient(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack(
            [
                pi * np.cos(pi * x) * np.sin(pi * y),
                pi * np.sin(pi * x) * np.cos(pi * y),
            ],
            axis=-1,
        )

    def hessian(p):
        x, y = p[..., 0], p[..., 1]
        out = np.empty(x.shape + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = -pi**2 * np.sin(pi * x) * np.sin(pi * y)
        out[..., 0, 1] = out[..., 1, 0] = pi**2 * np.cos(pi * x) * np.cos(pi * y)
        return out

    def third(p):
        x, y = p[..., 0], p[..., 1]
        return _sym3(
            -(pi**3) * np.cos(pi * x) * np.sin(pi * y),
            -(pi**3) * np.sin(pi * x) * np.cos(pi * y),
            -(pi**3) * np.cos(pi * x) * np.sin(pi * y),
            -(pi**3) * np.sin(pi * x) * np.cos(pi * y),
        )

    def forcing(p):
        return 2 * pi**2 * np.sin(pi * p[..., 0]) * np.sin(pi * p[..., 1])

    return ExactSolution("example2", value, gradient, hessian, third, forcing)


@dataclass(frozen=True)
class ErrorReport:
    """The six discrete error norms of one solve.

    ``h2_bnd`` and ``energy_bnd`` add the boundary normal-derivative penalty
    sum_F h_F^{-1} |d_n v|_{0,F}^2 to the broken H2 seminorm before combining.
    """

    l2: float
    h1: float
    h2: float
    energy: float
    h2_bnd: float
    energy_bnd: float

    def as_dict(self):
        return {
            "l2": self.l2,
            "h1": self.h1,
            "h2": self.h2,
            "energy": self.energy,
            "h2_bnd": self.h2_bnd,
            "energy_bnd": self.energy_bnd,
        }

    NAMES = ("l2", "h1", "h2", "energy", "h2_bnd", "energy_bnd")


# parent barycentric coordinates of the four midpoint-subdivision children
_CHILDREN = np.array(
    [
        [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
        [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
        [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    ]
)


def _subdivide_triangle(points, weights):
    return (
        np.concatenate([points @ s for s in _CHILDREN]),
        np.concatenate([weights / 4.0] * 4),
    )


def _subdivide_edge(params, weights):
    return (
        np.concatenate([(params - 1.0) / 2.0, (params + 1.0) / 2.0]),
        np.concatenate([weights / 2.0] * 2),
    )


def error_norms(exact, u_h, eps, volume_degree=6, edge_points=4, subdivisions=0):
    """Discrete norms of the difference between ``exact`` and ``u_h``.

    Volume terms use elementwise quadrature of the stated degree; the
    boundary penalty uses Gauss quadrature with ``edge_points`` points per
    edge, with the exact normal derivative evaluated pointwise. Positive
    ``subdivisions`` applies that many composite refinements to both rules
    (a convergence check for the quadrature itself).
    """
    mesh = u_h.space.mesh
    rule = triangle_rule(volume_degree)
    tpts, tw = rule.points, rule.weights
    erule = edge_rule(edge_points)
    eparams, ew = erule.points, erule.weights
    for _ in range(subdivisions):
        tpts, tw = _subdivide_triangle(tpts, tw)
        eparams, ew = _subdivide_edge(eparams, ew)

    pts = physical_points(mesh, tpts)
    wq = mesh.areas[:, None] * tw[None, :]

    dv = u_h.values(tpts) - exact.value(pts)
    dg = u_h.gradients(tpts) - exact.gradient(pts)
    dh = u_h.hessians(tpts) - exact.hessian(pts)
    l2 = float(np.sum(wq * dv**2))
    h1 = float(np.sum(wq[..., None] * dg**2))
    h2 = float(np.sum(wq[..., None, None] * dh**2))

    bnd = np.flatnonzero(mesh.boundary_edge)
    cells = mesh.edge_cells[bnd, 0]
    bary = edge_bary_in_cell(mesh, bnd, cells, eparams)
    epts = physical_points(mesh, bary, cells=cells)
    dn = np.einsum(
        "epX,eX->ep",
        u_h.gradients(bary, cells=cells) - exact.gradient(epts),
        mesh.n_F[bnd],
    )
    penalty = float(0.5 * np.sum(ew[None, :] * dn**2))

    return ErrorReport(
        l2=np.sqrt(l2),
        h1=np.sqrt(h1),
        h2=np.sqrt(h2),
        energy=np.sqrt(eps**2 * h2 + h1),
        h2_bnd=np.sqrt(h2 + penalty),
        energy_bnd=np.sqrt(eps**2 * (h2 + penalty) + h1),
    )


def rate_table(errors):
    """Observed convergence rates log2(e_{k-1}/e_k) across uniform halving.

    The first entry (and any entry next to an exact zero) is NaN.
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        raise ValueError("rates need at least two levels")
    rates = np.full(len(e), np.nan)
    ok = (e[:-1] > 0) & (e[1:] > 0)
    rates[1:][ok] = np.log2(e[:-1][ok] / e[1:][ok])
    return rates
