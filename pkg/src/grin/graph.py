"""Sensor-graph construction and normalization.

Builders return a :class:`GraphSpec` (weighted directed edge list without
self-loops); :func:`transition_matrices` derives the out-degree and
in-degree normalized operators used by diffusion convolutions.
"""

import csv
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IngestionError, ParameterError, ValidationError
from .tensor import SparseMatrix


@dataclass
class GraphSpec:
    """Node count plus weighted directed edge list.

    Invariants: indices in ``[0, n_nodes)``, finite nonnegative weights,
    no duplicate (source, target) pairs, no self-loops.  Undirected graphs
    store both orientations explicitly and set ``directed=False``.
    """

    n_nodes: int
    edges: list
    directed: bool = True
    node_ids: list = None

    def __post_init__(self):
        if self.n_nodes <= 0:
            raise ValidationError("graph needs at least one node")
        seen = set()
        for s, t, w in self.edges:
            if not (0 <= s < self.n_nodes and 0 <= t < self.n_nodes):
                raise ValidationError(f"edge ({s}, {t}) references a missing node")
            if s == t:
                raise ValidationError(f"self-loop on node {s} is not allowed")
            if not np.isfinite(w) or w < 0:
                raise ValidationError(f"edge ({s}, {t}) has invalid weight {w!r}")
            if (s, t) in seen:
                raise ValidationError(f"duplicate edge ({s}, {t})")
            seen.add((s, t))
        if self.node_ids is not None and len(self.node_ids) != self.n_nodes:
            raise ValidationError("node_ids length must match n_nodes")

    def adjacency(self):
        """Dense adjacency matrix W with W[source, target] = weight."""
        w = np.zeros((self.n_nodes, self.n_nodes))
        for s, t, v in self.edges:
            w[s, t] = v
        return w

    def fingerprint(self):
        """Stable hash of (n_nodes, edge list) for checkpoint compatibility."""
        h = hashlib.sha256()
        h.update(struct.pack("<q", self.n_nodes))
        for s, t, w in sorted(self.edges):
            h.update(struct.pack("<qqd", s, t, float(w)))
        return h.hexdigest()


@dataclass
class TransitionMatrices:
    """Row-normalized diffusion operators.

    ``forward`` is W with each row divided by its out-weight sum, ``backward``
    the same normalization of W transposed; rows with no edges stay zero.
    """

    forward: SparseMatrix
    backward: SparseMatrix
    max_hops: int = field(default=1)


def _row_normalize(w):
    sums = w.sum(axis=1, keepdims=True)
    out = np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)
    return out


def transition_matrices(g: GraphSpec, max_hops: int = 1) -> TransitionMatrices:
    """Build forward/backward transition matrices for up to ``max_hops`` hops."""
    if max_hops < 1:
        raise ParameterError(f"max_hops must be >= 1, got {max_hops}")
    w = g.adjacency()
    return TransitionMatrices(
        forward=SparseMatrix(_row_normalize(w)),
        backward=SparseMatrix(_row_normalize(w.T)),
        max_hops=max_hops,
    )


def gaussian_kernel_adjacency(dist, gamma: float, delta: float) -> GraphSpec:
    """Thresholded Gaussian kernel graph from a pairwise distance matrix.

    Nodes i, j are connected with weight ``exp(-dist[i,j]**2 / gamma)``
    whenever ``dist[i,j] <= delta``; the diagonal is excluded and the output
    is undirected.
    """
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimensionError(f"distance matrix must be square, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValidationError("distance matrix contains non-finite entries")
    if np.any(d < 0):
        raise ValidationError("distance matrix contains negative entries")
    if not np.allclose(d, d.T, rtol=0.0, atol=1e-9):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")

    n = d.shape[0]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] <= delta:
                w = float(np.exp(-(d[i, j] ** 2) / gamma))
                edges.append((i, j, w))
                edges.append((j, i, w))
    return GraphSpec(n_nodes=n, edges=edges, directed=False)


def correntropy_matrix(series, sigma=None, segment_len=None, mask=None):
    """Pairwise correntropy of the columns of a (T, N) series.

    ``s[i, j]`` is the Gaussian kernel ``exp(-(x_i - x_j)**2 / (2 sigma**2))``
    averaged over aligned samples, segment-wise: the series is cut into
    consecutive windows of ``segment_len`` (a trailing partial window is
    dropped), each segment contributes its own mean and segments are averaged.
    With a mask, samples where either side is missing are skipped.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"series must be (T, N), got {x.shape}")
    t_total, n = x.shape
    if mask is None:
        if not np.all(np.isfinite(x)):
            raise ValidationError(
                "series contains non-finite values; pass a mask to skip them"
            )
        valid = np.ones_like(x, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != x.shape:
            raise DimensionError("mask shape must match series shape")

    if segment_len is None or segment_len >= t_total:
        segment_len = t_total
    if segment_len < 1:
        raise ParameterError(f"segment_len must be >= 1, got {segment_len}")

    if sigma is None:
        sigma = _pairwise_diff_std(x, valid)
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")

    n_segments = t_total // segment_len
    seg_sum = np.zeros((n, n))
    seg_cnt = np.zeros((n, n))
    for s in range(n_segments):
        xs = x[s * segment_len:(s + 1) * segment_len]
        vs = valid[s * segment_len:(s + 1) * segment_len]
        diff = xs[:, :, None] - xs[:, None, :]
        k = np.exp(-(diff ** 2) / (2.0 * sigma * sigma))
        pair_ok = vs[:, :, None] & vs[:, None, :]
        cnt = pair_ok.sum(axis=0)
        with np.errstate(invalid="ignore"):
            seg_mean = np.where(cnt > 0, (k * pair_ok).sum(axis=0) / np.maximum(cnt, 1), 0.0)
        seg_sum += seg_mean
        seg_cnt += (cnt > 0)
    sim = np.divide(seg_sum, seg_cnt, out=np.zeros((n, n)), where=seg_cnt > 0)
    np.fill_diagonal(sim, 1.0)
    return sim


def _pairwise_diff_std(x, valid):
    t_total, n = x.shape
    diffs = []
    for i in range(n):
        for j in range(i + 1, n):
            ok = valid[:, i] & valid[:, j]
            if ok.any():
                diffs.append(x[ok, i] - x[ok, j])
    if not diffs:
        raise ValidationError("no jointly observed samples to estimate sigma")
    std = float(np.concatenate(diffs).std())
    if std == 0.0:
        std = 1.0
    return std


def correntropy_knn_graph(series, k: int, sigma=None, segment_len=None,
                          mask=None) -> GraphSpec:
    """Directed k-nearest-neighbor graph from pairwise correntropy.

    Each node keeps edges to its ``k`` most similar other nodes, weighted by
    the similarity; ties break toward the smaller node index.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[1]
    if k >= n:
        raise ParameterError(f"k must be smaller than the node count, got k={k}, N={n}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    sim = correntropy_matrix(x, sigma=sigma, segment_len=segment_len, mask=mask)

    edges = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (-sim[i, j], j))
        for j in others[:k]:
            edges.append((i, j, float(sim[i, j])))
    return GraphSpec(n_nodes=n, edges=edges, directed=True)


def save_edge_list(g: GraphSpec, path):
    """Write the edge list as CSV with header ``source,target,weight``."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["source", "target", "weight"])
        for s, t, w in g.edges:
            writer.writerow([s, t, repr(float(w))])


def load_edge_list(path, n_nodes=None) -> GraphSpec:
    """Read an edge-list CSV; node count defaults to 1 + max index."""
    edges = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["source", "target", "weight"]:
            raise IngestionError(f"{path}: expected header 'source,target,weight'")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestionError(f"{path}, row {row_no}: expected 3 columns")
            try:
                edges.append((int(row[0]), int(row[1]), float(row[2])))
            except ValueError as exc:
                raise IngestionError(f"{path}, row {row_no}: {exc}") from None
    if n_nodes is None:
        n_nodes = 1 + max((max(s, t) for s, t, _ in edges), default=-1)
        if n_nodes <= 0:
            raise IngestionError(f"{path}: empty edge list needs an explicit node count")
    return GraphSpec(n_nodes=n_nodes, edges=edges)


def load_dense_matrix(path):
    """Read an N x N dense CSV matrix (no header)."""
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    return m


def fully_connected_graph(n_nodes: int, weight: float = 1.0) -> GraphSpec:
    """All ordered pairs except self-loops, constant weight."""
    edges = [
        (i, j, weight) for i in range(n_nodes) for j in range(n_nodes) if i != j
    ]
    return GraphSpec(n_nodes=n_nodes, edges=edges, directed=False)
