"""Sparse matrices, Krylov solvers, algebraic multigrid, block preconditioner.

Matrices are CSR with sorted, duplicate-free, zero-free rows. Solvers accept a
:class:`SparseMatrix` or a matvec callable plus length. The multigrid is
smoothed aggregation with symmetric Gauss-Seidel V(1,1) cycles, so one V-cycle
is a symmetric positive operator and safe inside conjugate gradients.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


def _multi_arange(starts, counts):
    """Concatenated ranges [starts[i], starts[i]+counts[i])."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    idx = np.arange(total, dtype=np.int64)
    return np.repeat(starts, counts) + idx - np.repeat(ends - counts, counts)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix with canonical storage (sorted columns, summed duplicates,
    no explicit zeros)."""

    shape: tuple
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape):
        """Build from COO triplets; duplicates are summed, zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays must have equal length")
        n, m = int(shape[0]), int(shape[1])
        if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise ValueError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.empty(len(rows), dtype=bool)
            new[0] = True
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            rows, cols = rows[starts], cols[starts]
            vals = np.add.reduceat(vals, starts)
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls((n, m), indptr, cols, vals)

    @classmethod
    def eye(cls, n, value=1.0):
        idx = np.arange(n, dtype=np.int64)
        return cls((n, n), np.arange(n + 1, dtype=np.int64), idx, np.full(n, float(value)))

    @classmethod
    def from_diagonal(cls, diag):
        diag = np.asarray(diag, dtype=np.float64)
        n = len(diag)
        return cls.from_triplets(np.arange(n), np.arange(n), diag, (n, n))

    @property
    def nnz(self):
        return len(self.data)

    def matvec(self, x, out=None):
        x = np.asarray(x, dtype=np.float64)
        if out is None:
            out = np.empty(self.shape[0])
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x, out)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return self.matmat(other)
        other = np.asarray(other)
        if other.ndim == 1:
            return self.matvec(other)
        return np.stack([self.matvec(col) for col in other.T], axis=1)

    def matmat(self, other):
        if self.shape[1] != other.shape[0]:
            raise ValueError("incompatible shapes for matrix product")
        row_of = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        counts = other.indptr[self.indices + 1] - other.indptr[self.indices]
        offs = _multi_arange(other.indptr[self.indices], counts)
        rows = np.repeat(row_of, counts)
        cols = other.indices[offs]
        vals = np.repeat(self.data, counts) * other.data[offs]
        return SparseMatrix.from_triplets(rows, cols, vals, (self.shape[0], other.shape[1]))

    def transpose(self):
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        return SparseMatrix.from_triplets(
            self.indices, rows, self.data, (self.shape[1], self.shape[0])
        )

    def add(self, other, alpha=1.0):
        """self + alpha * other."""
        if self.shape != other.shape:
            raise ValueError("incompatible shapes for matrix sum")
        rows_a = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        rows_b = np.repeat(np.arange(other.shape[0], dtype=np.int64), np.diff(other.indptr))
        return SparseMatrix.from_triplets(
            np.concatenate([rows_a, rows_b]),
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.data, alpha * other.data]),
            self.shape,
        )

    def scale(self, alpha):
        return SparseMatrix(self.shape, self.indptr, self.indices, float(alpha) * self.data)

    def diagonal(self):
        diag = np.zeros(min(self.shape))
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        on_diag = rows == self.indices
        diag[rows[on_diag]] = self.data[on_diag]
        return diag

    def to_dense(self):
        dense = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        dense[rows, self.indices] = self.data
        return dense


def block_matrix(blocks):
    """Assemble a sparse matrix from a 2D list of blocks (None = zero)."""
    row_sizes = [None] * len(blocks)
    col_sizes = [None] * len(blocks[0])
    for i, brow in enumerate(blocks):
        for j, blk in enumerate(brow):
            if blk is None:
                continue
            if row_sizes[i] is None:
                row_sizes[i] = blk.shape[0]
            elif row_sizes[i] != blk.shape[0]:
                raise ValueError("inconsistent block row sizes")
            if col_sizes[j] is None:
                col_sizes[j] = blk.shape[1]
            elif col_sizes[j] != blk.shape[1]:
                raise ValueError("inconsistent block column sizes")
    if any(s is None for s in row_sizes) or any(s is None for s in col_sizes):
        raise ValueError("every block row/column needs at least one block")
    row_off = np.concatenate([[0], np.cumsum(row_sizes)])
    col_off = np.concatenate([[0], np.cumsum(col_sizes)])
    rows, cols, vals = [], [], []
    for i, brow in enumerate(blocks):
        for j, blk in enumerate(brow):
            if blk is None:
                continue
            r = np.repeat(np.arange(blk.shape[0], dtype=np.int64), np.diff(blk.indptr))
            rows.append(r + row_off[i])
            cols.append(blk.indices + col_off[j])
            vals.append(blk.data)
    return SparseMatrix.from_triplets(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (int(row_off[-1]), int(col_off[-1])),
    )


# ---------------------------------------------------------------------------
# MatrixMarket I/O


def save_matrix_market(path, matrix):
    """Write a sparse matrix in MatrixMarket coordinate format (1-based)."""
    rows = np.repeat(np.arange(matrix.shape[0], dtype=np.int64), np.diff(matrix.indptr))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]} {matrix.nnz}\n")
        for r, c, v in zip(rows, matrix.indices, matrix.data):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def load_matrix_market(path):
    """Read a MatrixMarket coordinate file written by :func:`save_matrix_market`."""
    with open(path) as fh:
        header = fh.readline().split()
        if header[:4] != ["%%MatrixMarket", "matrix", "coordinate", "real"]:
            raise ValueError("unsupported MatrixMarket header")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n, m, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            r, c, v = fh.readline().split()
            rows[k], cols[k], vals[k] = int(r) - 1, int(c) - 1, float(v)
    return SparseMatrix.from_triplets(rows, cols, vals, (n, m))


# ---------------------------------------------------------------------------
# direct and iterative solvers


def dense_solve(A, b, max_size=2000):
    """Direct solve through a dense factorization (small systems only)."""
    if isinstance(A, SparseMatrix):
        A = A.to_dense()
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] > max_size:
        raise ValueError(f"dense solve limited to {max_size} unknowns, got {A.shape[0]}")
    return np.linalg.solve(A, np.asarray(b, dtype=np.float64))


@dataclass
class SolveReport:
    """Outcome of an iterative solve."""

    converged: bool
    iterations: int
    residual: float
    reason: str = ""
    history: list = field(default_factory=list)


def _as_matvec(A):
    if isinstance(A, SparseMatrix):
        return A.matvec
    if callable(A):
        return A
    raise TypeError("operator must be a SparseMatrix or a callable")


def cg(A, b, M=None, tol=1e-8, maxit=1000):
    """Preconditioned conjugate gradients from a zero initial guess.

    Converges when ||b - A x|| / ||b|| <= tol. Raises on an indefinite
    operator (p^T A p <= 0). Returns (x, SolveReport); the report counts
    matrix applications after the initial residual.
    """
    matvec = _as_matvec(A)
    b = np.asarray(b, dtype=np.float64)
    norm_b = np.linalg.norm(b)
    x = np.zeros_like(b)
    if norm_b == 0.0:
        return x, SolveReport(True, 0, 0.0)
    r = b.copy()
    z = M(r) if M is not None else r
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]
    for it in range(1, maxit + 1):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise RuntimeError("conjugate gradients hit an indefinite operator")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / norm_b
        history.append(rel)
        if rel <= tol:
            return x, SolveReport(True, it, rel, history=history)
        z = M(r) if M is not None else r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return x, SolveReport(False, maxit, history[-1], reason="maxit", history=history)


def gmres(A, b, M=None, tol=1e-8, maxit=1000, restart=20):
    """Right-preconditioned restarted GMRES from a zero initial guess.

    Modified Gram-Schmidt Arnoldi with Givens rotations; the iteration count
    is the total number of inner steps across restarts. Declares stagnation
    when three consecutive restart cycles fail to reduce the residual by at
    least 0.1 percent.
    """
    matvec = _as_matvec(A)
    apply_M = M if M is not None else (lambda v: v)
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    norm_b = np.linalg.norm(b)
    x = np.zeros(n)
    if norm_b == 0.0:
        return x, SolveReport(True, 0, 0.0)
    total = 0
    history = [1.0]
    stalls = 0
    prev_cycle_res = 1.0
    while total < maxit:
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        rel0 = beta / norm_b
        if rel0 <= tol:
            return x, SolveReport(True, total, rel0, history=history)
        m = min(restart, maxit - total)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(apply_M(V[j]))
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            hnorm = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], hnorm)
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, hnorm / denom
            H[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            rel = abs(g[j + 1]) / norm_b
            history.append(rel)
            if rel <= tol or hnorm == 0.0:
                break
            V[j + 1] = w / hnorm
        y = np.linalg.solve(H[:j_done, :j_done], g[:j_done]) if j_done else np.zeros(0)
        x = x + apply_M(V[:j_done].T @ y)
        rel = np.linalg.norm(b - matvec(x)) / norm_b
        history[-1] = rel
        if rel <= tol:
            return x, SolveReport(True, total, rel, history=history)
        if rel > prev_cycle_res * (1.0 - 1e-3):
            stalls += 1
            if stalls >= 3:
                return x, SolveReport(False, total, rel, reason="stagnation", history=history)
        else:
            stalls = 0
        prev_cycle_res = rel
    return x, SolveReport(False, total, history[-1], reason="maxit", history=history)


# ---------------------------------------------------------------------------
# smoothed-aggregation algebraic multigrid


def _strength_graph(A, theta):
    """Strong-connection mask over stored entries: |a_ij| >= theta*sqrt(a_ii a_jj)."""
    diag = A.diagonal()
    rows = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(A.indptr))
    scale = np.sqrt(np.abs(diag[rows] * diag[A.indices]))
    strong = (np.abs(A.data) >= theta * scale) & (rows != A.indices)
    return rows, strong


def _aggregate(A, theta):
    """Greedy aggregation over the strength graph; returns aggregate ids.

    Pass 1 seeds aggregates at nodes whose strong neighborhood is untouched,
    pass 2 attaches leftovers to a strongly connected aggregate, pass 3
    attaches weakly connected leftovers through their largest off-diagonal
    entry; only truly isolated rows become singletons.
    """
    n = A.shape[0]
    rows, strong = _strength_graph(A, theta)
    nbr_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[strong], minlength=n), out=nbr_indptr[1:])
    nbrs = A.indices[strong]
    agg = np.full(n, -1, dtype=np.int64)
    n_agg = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        nb = nbrs[nbr_indptr[i]: nbr_indptr[i + 1]]
        if len(nb) and np.all(agg[nb] < 0):
            agg[i] = n_agg
            agg[nb] = n_agg
            n_agg += 1
    for i in range(n):
        if agg[i] >= 0:
            continue
        nb = nbrs[nbr_indptr[i]: nbr_indptr[i + 1]]
        joined = nb[agg[nb] >= 0]
        if len(joined):
            agg[i] = agg[joined[0]]
    for i in range(n):
        if agg[i] >= 0:
            continue
        cols = A.indices[A.indptr[i]: A.indptr[i + 1]]
        vals = A.data[A.indptr[i]: A.indptr[i + 1]]
        off = (cols != i) & (agg[cols] >= 0)
        if np.any(off):
            agg[i] = agg[cols[off][np.argmax(np.abs(vals[off]))]]
        else:
            agg[i] = n_agg
            n_agg += 1
    return agg, n_agg


def _tentative_prolongator(agg, n_agg, null):
    """Tentative prolongator carrying the near-nullspace vector.

    Column j equals ``null`` restricted to aggregate j; aggregates where the
    vector vanishes identically are dropped. Returns (T, n_columns).
    """
    n = len(agg)
    support = np.abs(null) > 0.0
    col_mass = np.bincount(agg[support], minlength=n_agg)
    keep = col_mass > 0
    remap = np.full(n_agg, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    rows = np.flatnonzero(support)
    T = SparseMatrix.from_triplets(
        rows, remap[agg[rows]], null[rows], (n, int(keep.sum()))
    )
    return T, int(keep.sum())


def _smoothed_prolongator(A, T, omega=2.0 / 3.0):
    """P = (I - omega D^-1 A) T."""
    AT = A.matmat(T)
    dinv = 1.0 / A.diagonal()
    rows = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(AT.indptr))
    scaled = SparseMatrix(AT.shape, AT.indptr, AT.indices, AT.data * dinv[rows])
    return T.add(scaled, alpha=-omega)


@dataclass(frozen=True, eq=False)
class AMGHierarchy:
    """Smoothed-aggregation hierarchy applying one V(1,1) cycle per call.

    Pre-smoothing is one forward Gauss-Seidel sweep from a zero guess and
    post-smoothing one backward sweep, so the cycle operator is symmetric.
    """

    matrices: tuple
    prolongators: tuple
    restrictions: tuple
    coarse_inverse: np.ndarray

    @property
    def n_levels(self):
        return len(self.matrices)

    def vcycle(self, b, level=0):
        A = self.matrices[level]
        if level == self.n_levels - 1:
            return self.coarse_inverse @ b
        x = np.zeros_like(b)
        _kernels.gauss_seidel_forward(A.indptr, A.indices, A.data, b, x)
        r = b - A.matvec(x)
        x += self.prolongators[level] @ self.vcycle(self.restrictions[level] @ r, level + 1)
        _kernels.gauss_seidel_backward(A.indptr, A.indices, A.data, b, x)
        return x

    def __call__(self, r):
        return self.vcycle(r)


def amg_setup(A, theta=0.08, coarse_size=64, max_levels=25, nullspace=None):
    """Build a smoothed-aggregation hierarchy for an SPD matrix.

    ``nullspace`` is the near-nullspace vector carried by the tentative
    prolongator (default: constant vector). Coarsening stops at
    ``coarse_size`` unknowns, after ``max_levels`` levels, or when a level
    shrinks by less than a factor 1.2; the coarsest level is inverted
    densely.
    """
    matrices = [A]
    prolongators = []
    restrictions = []
    null = np.ones(A.shape[0]) if nullspace is None else np.asarray(nullspace, dtype=np.float64)
    if not np.any(null):
        raise ValueError("near-nullspace vector must not vanish identically")
    while matrices[-1].shape[0] > coarse_size and len(matrices) < max_levels:
        Ak = matrices[-1]
        agg, n_agg = _aggregate(Ak, theta)
        T, n_cols = _tentative_prolongator(agg, n_agg, null)
        if n_cols * 1.2 > Ak.shape[0]:
            break
        P = _smoothed_prolongator(Ak, T)
        R = P.transpose()
        matrices.append(R.matmat(Ak.matmat(P)))
        prolongators.append(P)
        restrictions.append(R)
        null = np.ones(n_cols)
    n_coarse = matrices[-1].shape[0]
    if n_coarse > 2000:
        raise RuntimeError(f"multigrid coarsening stalled at {n_coarse} unknowns")
    coarse_inverse = np.linalg.inv(matrices[-1].to_dense())
    return AMGHierarchy(tuple(matrices), tuple(prolongators), tuple(restrictions), coarse_inverse)


# ---------------------------------------------------------------------------
# block preconditioner for the saddle system [[A, B^T], [B, 0]]


def weighted_zero_mean(p, weights):
    """Project to sum(weights * p) = 0."""
    return p - (weights @ p) / weights.sum() * np.ones_like(p)


def block_factorization_precond(A, B, cell_areas, eps, alpha=2.0, inner=None):
    """Approximate block-factorization preconditioner for the saddle system.

    Factors [[A, B^T], [B, 0]] as an upper-triangular solve with the pressure
    Schur complement replaced by the scaled pressure mass matrix
    Mt = (alpha/eps^2) diag(|K|), followed by the lower-triangular update:
    y_p = Mt^-1 r_p; y_u ~ A^-1 (r_u + B^T y_p); z_p = Mt^-1 B y_u - y_p.
    ``inner`` approximates A^-1 (default: one multigrid V-cycle). The output
    pressure is projected to weighted zero mean.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    cell_areas = np.asarray(cell_areas, dtype=np.float64)
    if inner is None:
        inner = amg_setup(A)
    mt = (alpha / eps**2) * cell_areas
    BT = B.transpose()
    n_u = A.shape[0]

    def apply(r):
        r_u, r_p = r[:n_u], r[n_u:]
        y_p = r_p / mt
        y_u = inner(r_u + BT @ y_p)
        z_p = (B @ y_u) / mt - y_p
        return np.concatenate([y_u, weighted_zero_mean(z_p, cell_areas)])

    return apply
