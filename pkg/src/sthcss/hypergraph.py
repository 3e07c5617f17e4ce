"""KNN hypergraph over sensor nodes and its spectral operators.

Each node ``v_j`` anchors one hyperedge ``e_j`` holding ``v_j`` and its
``k - 1`` nearest other nodes (ties go to the lower index). Incident pairs get
the Gaussian weight ``exp(-dist**2 / delta)`` where ``delta`` is the mean
distance over all ordered pairs of distinct nodes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import (DegenerateGraphError, DegenerateScaleError, DimensionError,
                         InvalidArgumentError, NumericalError)


@dataclass(frozen=True)
class Hypergraph:
    """Incidence ``H`` and per-(node, edge) weights ``W``, both |V| x |E|."""

    H: np.ndarray
    W: np.ndarray
    k: int
    delta: float = float("nan")

    @property
    def n_nodes(self) -> int:
        return self.H.shape[0]

    @property
    def n_edges(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class SpectralOperators:
    N: np.ndarray
    L: np.ndarray
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None

    def with_eigendecomposition(self) -> "SpectralOperators":
        if self.eigvals is not None:
            return self
        vals, vecs = laplacian_eigh(self.L)
        return SpectralOperators(self.N, self.L, vals, vecs)


def pairwise_distances(node_features) -> np.ndarray:
    """Euclidean distances between the rows of ``node_features``."""
    X = np.asarray(node_features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError(f"need a non-empty |V| x F feature matrix, got shape {X.shape}")
    if X.shape[1] == 0:
        raise InvalidArgumentError("node features must have at least one column")
    # exact differences rather than the Gram trick: keeps the diagonal at 0
    # and the matrix exactly symmetric
    D = np.empty((X.shape[0], X.shape[0]))
    for i in range(X.shape[0]):
        D[i] = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
    return np.maximum(D, D.T)


def knn_members(dist: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nodes forming each anchor's hyperedge.

    Row ``j`` starts with ``j`` itself, followed by the nearest other nodes
    ordered by (distance, index).
    """
    n = dist.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    idx = np.arange(n)
    for j in range(n):
        others = idx[idx != j]
        order = others[np.lexsort((others, dist[j, others]))]
        out[j, 0] = j
        out[j, 1:] = order[:k - 1]
    return out


def build_hypergraph(node_features, k: int) -> Hypergraph:
    X = np.asarray(node_features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("node features contain NaN or Inf")
    n = X.shape[0]
    if int(k) != k or not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be an integer in [1, {n}], got {k}")
    k = int(k)
    dist = pairwise_distances(X)
    if n > 1:
        delta = dist.sum() / (n * (n - 1))
        if delta <= 0.0:
            raise DegenerateScaleError("all node features are identical; mean pairwise distance is 0")
    else:
        delta = float("nan")

    H = np.zeros((n, n))
    W = np.zeros((n, n))
    members = knn_members(dist, k)
    for j in range(n):
        for i in members[j]:
            H[i, j] = 1.0
            W[i, j] = 1.0 if i == j else np.exp(-dist[i, j] ** 2 / delta)
    if np.any((W > 0) != (H > 0)):
        # a weight underflowed to 0 for a member; keep W > 0 <=> H = 1
        W = np.where(H > 0, np.maximum(W, np.finfo(np.float64).tiny), 0.0)
    return Hypergraph(H=H, W=W, k=k, delta=float(delta))


def degree_matrices(hg: Hypergraph, weighted: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Vertex and hyperedge degree matrices (diagonal).

    By default these are plain incidence counts. ``weighted=True`` uses
    the row sums of ``W`` for the vertex degrees instead.
    """
    dv = hg.W.sum(axis=1) if weighted else hg.H.sum(axis=1)
    de = hg.H.sum(axis=0)
    return np.diag(dv), np.diag(de)


def edge_weights(hg: Hypergraph) -> np.ndarray:
    """Scalar weight per hyperedge: mean of its members' weights."""
    counts = hg.H.sum(axis=0)
    return np.divide(hg.W.sum(axis=0), counts, out=np.zeros(hg.n_edges), where=counts > 0)


def normalized_adjacency(hg: Hypergraph, weighted_degree: bool = False) -> SpectralOperators:
    """``N = Dv^-1/2 H diag(w) De^-1 H^T Dv^-1/2`` and ``L = I - N``."""
    Dv, De = degree_matrices(hg, weighted=weighted_degree)
    dv, de = np.diag(Dv), np.diag(De)
    if np.any(dv <= 0):
        raise DegenerateGraphError(f"vertices with zero degree: {np.flatnonzero(dv <= 0).tolist()}")
    de_inv = np.divide(1.0, de, out=np.zeros_like(de), where=de > 0)
    # N = M M^T with M = Dv^-1/2 H (diag(w) De^-1)^1/2, symmetric PSD by construction
    M = (hg.H / np.sqrt(dv)[:, None]) * np.sqrt(edge_weights(hg) * de_inv)[None, :]
    N = M @ M.T
    N = 0.5 * (N + N.T)
    L = np.eye(N.shape[0]) - N
    return SpectralOperators(N=N, L=L)


def laplacian_eigh(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed ({exc}); condition number {np.linalg.cond(L):.3e}") from exc


def spectral_filter(x, g, ops: SpectralOperators) -> np.ndarray:
    """Filter a node signal in the Laplacian eigenbasis: ``Phi g(Lambda) Phi^T x``.

    ``g`` maps an array of eigenvalues to filter responses. ``x`` may be a
    vector of length |V| or a |V| x C matrix (filtered column by column).
    """
    ops = ops.with_eigendecomposition()
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != ops.N.shape[0]:
        raise DimensionError(f"signal has {x.shape[0]} rows but graph has {ops.N.shape[0]} nodes")
    resp = np.broadcast_to(np.asarray(g(ops.eigvals), dtype=np.float64), ops.eigvals.shape)
    Phi = ops.eigvecs
    coeff = Phi.T @ x
    coeff = coeff * (resp[:, None] if x.ndim == 2 else resp)
    return Phi @ coeff


def abs_correlation(series) -> np.ndarray:
    """Absolute Pearson correlation between rows; constant rows correlate 0."""
    X = np.asarray(series, dtype=np.float64)
    Xc = X - X.mean(axis=1, keepdims=True)
    norms = np.sqrt((Xc ** 2).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    C = (Xc @ Xc.T) / np.outer(safe, safe)
    C[norms == 0, :] = 0.0
    C[:, norms == 0] = 0.0
    np.fill_diagonal(C, 1.0)
    return np.abs(np.clip(C, -1.0, 1.0))


def alignment_score(N: np.ndarray, C: np.ndarray) -> float | None:
    """Pearson correlation between the off-diagonal entries of two matrices.

    Returns ``None`` when either set of off-diagonal entries is constant.
    """
    mask = ~np.eye(N.shape[0], dtype=bool)
    a, b = N[mask], C[mask]
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


# --------------------------------------------------------------------------
# export


def write_matrix_csv(M, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    lines = [",".join(_fmt(v) for v in row) for row in M]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


def _fmt(v: float) -> str:
    s = f"{v:.17g}"
    return "0" if s == "-0" else s


def write_pgm(M, path) -> None:
    """Plain (P2) 8-bit grayscale image, linearly scaled from [min, max]."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    lo, hi = float(M.min()), float(M.max())
    if hi > lo:
        pix = np.rint((M - lo) / (hi - lo) * 255).astype(int)
    else:
        pix = np.full(M.shape, 128, dtype=int)
    rows, cols = M.shape
    with open(path, "w", newline="") as fh:
        fh.write(f"P2 {cols} {rows} 255\n")
        for row in pix:
            fh.write(" ".join(str(v) for v in row))
            fh.write("\n")


def read_pgm(path) -> np.ndarray:
    with open(path) as fh:
        tokens = fh.read().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    cols, rows = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[4:4 + rows * cols]]).reshape(rows, cols)


def export_adjacency(ops: SpectralOperators, path, correlation=None) -> list[str]:
    """Write ``N`` (and optionally a correlation matrix) as CSV + PGM.

    ``path`` is a file stem; ``.csv`` / ``.pgm`` are appended. The correlation
    matrix goes to ``<stem>_correlation.*``. Returns the written paths.
    """
    stem = os.fspath(path)
    for ext in (".csv", ".pgm"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    written = []
    targets = [(stem, ops.N)]
    if correlation is not None:
        targets.append((stem + "_correlation", correlation))
    for base, M in targets:
        write_matrix_csv(M, base + ".csv")
        write_pgm(M, base + ".pgm")
        written += [base + ".csv", base + ".pgm"]
    return written
