"""Triangle meshes of the unit square with oriented edge data.

Edges are undirected sorted vertex pairs numbered lexicographically, so
matrices assembled on a given mesh are reproducible. Every edge carries a
fixed unit normal ``n_F`` (the 90-degree counterclockwise rotation of the
lower-to-higher-vertex direction, flipped outward on boundary edges) and the
tangent ``t_F`` = 90-degree counterclockwise rotation of ``n_F``. Edge-based
degrees of freedom defined against ``n_F`` then have a mesh-wide sign.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D simplicial mesh with vertex/edge/cell incidence.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise vertex triples
    edges : (ne, 2) int array, sorted vertex pairs in lexicographic order
    cell_edges : (nc, 3) int array, edge k is opposite local vertex k
    cell_edge_signs : (nc, 3) float array, +1 where n_F is outward for the cell
    edge_cells : (ne, 2) int array, incident cells (-1 when boundary)
    boundary_edge : (ne,) bool array
    boundary_vertex : (nv,) bool array
    h_K : (nc,) cell diameters; h_F : (ne,) edge lengths
    n_F : (ne, 2) unit normals; t_F : (ne, 2) unit tangents
    areas : (nc,) positive cell areas
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    edge_cells: np.ndarray
    boundary_edge: np.ndarray
    boundary_vertex: np.ndarray
    h_K: np.ndarray
    h_F: np.ndarray
    n_F: np.ndarray
    t_F: np.ndarray
    areas: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    def cell_vertices(self, cells=None):
        """Vertex coordinates per cell, shape (nc, 3, 2)."""
        if cells is None:
            return self.vertices[self.cells]
        return self.vertices[self.cells[cells]]


def build_connectivity(vertices, cells):
    """Build a :class:`Mesh` from raw vertex coordinates and cell triples.

    Parameters
    ----------
    vertices : array-like of shape (nv, 2)
    cells : array-like of shape (nc, 3), each a triple of vertex indices with
        positive (counterclockwise) orientation.

    Raises
    ------
    ValueError
        On out-of-range vertex indices, duplicate cells, non-positive cell
        areas, or a non-manifold edge (three or more incident cells).
    """
    vertices = np.array(vertices, dtype=np.float64, order="C")
    cells = np.array(cells, dtype=np.int64, order="C")
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise ValueError("vertices must have shape (nv, 2)")
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise ValueError("cells must have shape (nc, 3)")
    nv = len(vertices)
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise ValueError("cell refers to a vertex index out of range")
    canon = np.sort(cells, axis=1)
    if len(np.unique(canon, axis=0)) != len(cells):
        raise ValueError("duplicate cells")

    v0, v1, v2 = (vertices[cells[:, k]] for k in range(3))
    d1, d2 = v1 - v0, v2 - v0
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(signed <= 0.0):
        bad = int(np.argmax(signed <= 0.0))
        raise ValueError(f"cell {bad} has non-positive area {signed[bad]:.3e}")

    # local edge k joins the two vertices opposite local vertex k
    pairs = cells[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
    pairs_sorted = np.sort(pairs, axis=1)
    edges, inverse = np.unique(pairs_sorted, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(-1, 3)

    ne = len(edges)
    counts = np.bincount(inverse, minlength=ne)
    if np.any(counts > 2):
        bad = int(np.argmax(counts > 2))
        raise ValueError(f"non-manifold edge {tuple(edges[bad])} with {counts[bad]} cells")
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    owner = order // 3
    slot_starts = np.concatenate(([0], np.cumsum(counts)))
    edge_cells[counts >= 1, 0] = owner[slot_starts[:-1][counts >= 1]]
    edge_cells[counts == 2, 1] = owner[slot_starts[:-1][counts == 2] + 1]
    boundary_edge = counts == 1
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True

    tang = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    h_F = np.linalg.norm(tang, axis=1)
    tang /= h_F[:, None]
    n_F = np.column_stack([-tang[:, 1], tang[:, 0]])

    # outward-pointing test per (cell, local edge): normal vs. barycenter-to-midpoint
    cv = vertices[cells]
    barycenters = cv.mean(axis=1)
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    outv = midpoints[cell_edges] - barycenters[:, None, :]
    signs = np.sign(np.einsum("ceX,ceX->ce", outv, n_F[cell_edges]))

    first_cell = edge_cells[boundary_edge, 0]
    local = np.argmax(cell_edges[first_cell] == np.flatnonzero(boundary_edge)[:, None], axis=1)
    flip = signs[first_cell, local] < 0
    to_flip = np.flatnonzero(boundary_edge)[flip]
    n_F[to_flip] *= -1.0
    signs[:, :] = np.where(np.isin(cell_edges, to_flip), -signs, signs)

    t_F = np.column_stack([-n_F[:, 1], n_F[:, 0]])

    edge_vec = vertices[cells[:, [2, 0, 1]]] - vertices[cells[:, [1, 2, 0]]]
    h_K = np.linalg.norm(edge_vec, axis=2).max(axis=1)

    for arr in (vertices, cells, edges, cell_edges, signs, edge_cells,
                boundary_edge, boundary_vertex, h_K, h_F, n_F, t_F, signed):
        arr.flags.writeable = False

    return Mesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        cell_edges=cell_edges,
        cell_edge_signs=signs,
        edge_cells=edge_cells,
        boundary_edge=boundary_edge,
        boundary_vertex=boundary_vertex,
        h_K=h_K,
        h_F=h_F,
        n_F=n_F,
        t_F=t_F,
        areas=signed,
    )


def uniform_unit_square(n):
    """Uniform triangulation of (0,1)^2: n x n squares, each split along its
    bottom-left-to-top-right diagonal. Mesh size h = sqrt(2)/n."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError("n must be a positive integer")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return build_connectivity(vertices, cells)


def load_mesh(path):
    """Read a mesh from the plain-text format: lines `v x y` and `c i j k`."""
    vertices = []
    cells = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag, rest = parts[0], parts[1:]
            if tag == "v" and len(rest) == 2:
                vertices.append([float(rest[0]), float(rest[1])])
            elif tag == "c" and len(rest) == 3:
                cells.append([int(rest[0]), int(rest[1]), int(rest[2])])
            else:
                raise ValueError(f"{path}:{lineno}: expected 'v x y' or 'c i j k'")
    return build_connectivity(np.array(vertices, dtype=np.float64).reshape(-1, 2),
                              np.array(cells, dtype=np.int64).reshape(-1, 3))


def save_mesh(mesh, path):
    """Write a mesh in the plain-text format read by :func:`load_mesh`."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.cells:
            fh.write(f"c {a} {b} {c}\n")
