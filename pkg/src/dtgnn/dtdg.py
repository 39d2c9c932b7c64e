"""Discrete-time dynamic graph data model, ingestion, smoothing and features.

A dynamic graph is a sequence of T sparse N x N snapshots over a fixed
vertex set; features are a matching sequence of dense N x F frames.
Timesteps are 1-indexed in the text format and in formula comments, but
stored 0-indexed; the conversion is confined to this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SparseMatrix, sparse_weighted_sum
from .errors import EdgeListParseError, InputError

__all__ = [
    "DynamicGraph",
    "FeatureSequence",
    "MMatrix",
    "load_edge_list",
    "read_edge_list",
    "write_edge_list",
    "normalize_laplacian",
    "apply_edge_life",
    "build_m_matrix",
    "m_transform_features",
    "m_transform_graph",
    "degree_features",
    "generate_random_dtdg",
]


@dataclass(frozen=True)
class DynamicGraph:
    """A sequence of sparse adjacency snapshots over a fixed vertex set."""

    num_vertices: int
    snapshots: list

    def __post_init__(self):
        if len(self.snapshots) < 1:
            raise InputError("a dynamic graph needs at least one snapshot")
        for i, s in enumerate(self.snapshots):
            if s.dim != self.num_vertices:
                raise InputError(
                    f"snapshot {i} has dim {s.dim}, expected {self.num_vertices}"
                )

    @property
    def num_timesteps(self) -> int:
        return len(self.snapshots)

    def total_nnz(self) -> int:
        return sum(s.nnz for s in self.snapshots)


@dataclass(frozen=True)
class FeatureSequence:
    """A sequence of dense N x F frames, one per timestep."""

    frames: list

    def __post_init__(self):
        if len(self.frames) < 1:
            raise InputError("a feature sequence needs at least one frame")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise InputError(f"frame {i} has shape {f.shape}, expected {shape}")

    @property
    def num_timesteps(self) -> int:
        return len(self.frames)

    @property
    def num_vertices(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]


@dataclass(frozen=True)
class MMatrix:
    """Lower-triangular banded averaging matrix for the temporal M-transform.

    Row t (1-indexed) holds 1/min(w, t) on columns max(1, t-w+1)..t and 0
    elsewhere, so each row is an average over the trailing window and sums
    to 1.
    """

    size: int
    window: int
    matrix: np.ndarray


def load_edge_list(stream) -> DynamicGraph:
    """Parse timestamped edge records into a dynamic graph.

    Format: first non-comment line is the header ``N T``; every following
    record is ``u v t [weight]`` with 0-indexed vertex ids and 1-indexed
    timestep.  ``#``-prefixed lines are comments.  Duplicate (u, v, t)
    records sum their weights.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [line.rstrip("\n") for line in stream]

    header = None
    per_step = None
    n = t_count = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise EdgeListParseError(lineno, f"expected header 'N T', got {raw!r}")
            try:
                n, t_count = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(lineno, f"non-integer header {raw!r}") from None
            if n < 1 or t_count < 1:
                raise EdgeListParseError(lineno, f"header values must be positive: {raw!r}")
            header = (n, t_count)
            per_step = [([], [], []) for _ in range(t_count)]
            continue
        if len(parts) not in (3, 4):
            raise EdgeListParseError(lineno, f"expected 'u v t [weight]', got {raw!r}")
        try:
            u, v, t = int(parts[0]), int(parts[1]), int(parts[2])
            w = float(parts[3]) if len(parts) == 4 else 1.0
        except ValueError:
            raise EdgeListParseError(lineno, f"malformed record {raw!r}") from None
        if not (0 <= u < n) or not (0 <= v < n):
            raise EdgeListParseError(lineno, f"vertex id out of range [0, {n}): {raw!r}")
        if not (1 <= t <= t_count):
            raise EdgeListParseError(lineno, f"timestep out of range [1, {t_count}]: {raw!r}")
        if not math.isfinite(w):
            raise EdgeListParseError(lineno, f"non-finite weight: {raw!r}")
        rows, cols, vals = per_step[t - 1]
        rows.append(u)
        cols.append(v)
        vals.append(w)

    if header is None:
        raise EdgeListParseError(1, "missing 'N T' header")
    snapshots = [
        SparseMatrix.from_entries(n, rows, cols, vals) for rows, cols, vals in per_step
    ]
    return DynamicGraph(num_vertices=n, snapshots=snapshots)


def read_edge_list(path) -> DynamicGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_edge_list(fh)


def write_edge_list(g: DynamicGraph, path) -> None:
    """Write a graph in the edge-list text format (weight omitted when 1.0)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.num_vertices} {g.num_timesteps}\n")
        for t0, snap in enumerate(g.snapshots):
            t = t0 + 1
            for u, v, w in zip(snap.rows, snap.cols, snap.vals):
                if w == 1.0:
                    fh.write(f"{u} {v} {t}\n")
                else:
                    fh.write(f"{u} {v} {t} {w!r}\n")


def normalize_laplacian(a: SparseMatrix) -> SparseMatrix:
    """Degree-normalized adjacency D^{-1/2} (A + I) D^{-1/2}.

    D[u, u] = 1 + deg(u) where deg(u) is the number of structural entries
    in row u (out-degree; one fixed convention for directed snapshots).
    """
    deg = a.row_counts()
    inv_sqrt = 1.0 / np.sqrt(1.0 + deg.astype(np.float64))
    eye = np.arange(a.dim, dtype=np.int64)
    rows = np.concatenate([a.rows, eye])
    cols = np.concatenate([a.cols, eye])
    vals = np.concatenate([a.vals, np.ones(a.dim)])
    scaled = vals * inv_sqrt[rows] * inv_sqrt[cols]
    return SparseMatrix.from_entries(a.dim, rows, cols, scaled)


def apply_edge_life(g: DynamicGraph, life: int) -> DynamicGraph:
    """Carry each snapshot's edges into the following life-1 snapshots.

    Snapshot t becomes A_t + sum of A_i for i in [max(1, t-life+1), t-1]
    (1-indexed).  life=1 is the identity transform.
    """
    if life < 1:
        raise InputError(f"edge life must be >= 1, got {life}")
    out = []
    for t0 in range(g.num_timesteps):
        lo = max(0, t0 - life + 1)
        out.append(
            sparse_weighted_sum([(1.0, g.snapshots[k]) for k in range(lo, t0 + 1)])
        )
    return DynamicGraph(g.num_vertices, out)


def build_m_matrix(num_timesteps: int, window: int) -> MMatrix:
    """Construct the banded lower-triangular averaging matrix."""
    if num_timesteps < 1:
        raise InputError(f"timestep count must be >= 1, got {num_timesteps}")
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    m = np.zeros((num_timesteps, num_timesteps), dtype=np.float64)
    for t in range(1, num_timesteps + 1):
        lo = max(1, t - window + 1)
        m[t - 1, lo - 1 : t] = 1.0 / min(window, t)
    return MMatrix(size=num_timesteps, window=window, matrix=m)


def m_transform_features(x: FeatureSequence, m: MMatrix) -> FeatureSequence:
    """First-mode product of the feature tensor with the averaging matrix."""
    if x.num_timesteps != m.size:
        raise InputError(
            f"feature sequence has {x.num_timesteps} frames, M-matrix expects {m.size}"
        )
    frames = []
    for t in range(m.size):
        acc = np.zeros_like(x.frames[0])
        for k in range(max(0, t - m.window + 1), t + 1):
            acc += m.matrix[t, k] * x.frames[k]
        frames.append(acc)
    return FeatureSequence(frames)


def m_transform_graph(g: DynamicGraph, m: MMatrix) -> DynamicGraph:
    """First-mode product applied to the adjacency tensor (sparse output)."""
    if g.num_timesteps != m.size:
        raise InputError(
            f"graph has {g.num_timesteps} snapshots, M-matrix expects {m.size}"
        )
    out = []
    for t in range(m.size):
        terms = [
            (m.matrix[t, k], g.snapshots[k])
            for k in range(max(0, t - m.window + 1), t + 1)
        ]
        out.append(sparse_weighted_sum(terms))
    return DynamicGraph(g.num_vertices, out)


def degree_features(g: DynamicGraph) -> FeatureSequence:
    """Per-timestep N x 2 frames: column 0 out-degree, column 1 in-degree.

    Degrees are structural entry counts; a self-loop counts in both.
    """
    frames = []
    for snap in g.snapshots:
        f = np.zeros((g.num_vertices, 2), dtype=np.float64)
        f[:, 0] = snap.row_counts()
        f[:, 1] = snap.col_counts()
        frames.append(f)
    return FeatureSequence(frames)


def _sample_distinct(rng: np.random.Generator, space: int, count: int) -> np.ndarray:
    """Draw `count` distinct integers uniformly from [0, space), seed-determined."""
    if count > space // 2:
        # dense regime: a permutation is cheaper than rejection
        return rng.permutation(space)[:count]
    chosen = []
    seen = set()
    while len(chosen) < count:
        batch = rng.integers(0, space, size=max(64, 2 * (count - len(chosen))))
        for key in batch:
            k = int(key)
            if k not in seen:
                seen.add(k)
                chosen.append(k)
                if len(chosen) == count:
                    break
    return np.asarray(chosen, dtype=np.int64)


def generate_random_dtdg(num_timesteps: int, num_vertices: int, density: float, seed: int) -> DynamicGraph:
    """Random dynamic graph: each snapshot independently holds m = round(N*f)
    distinct uniformly sampled (u, v) pairs with value 1.0.

    Self-loops are allowed; pairs are distinct within a snapshot so entry
    counts are exact.  Fully determined by the seed.
    """
    if num_timesteps < 1 or num_vertices < 1:
        raise InputError("T and N must be positive")
    if density <= 0:
        raise InputError(f"edge density must be positive, got {density}")
    m = int(round(num_vertices * density))
    space = num_vertices * num_vertices
    if m > space:
        raise InputError(f"density {density} asks for {m} edges but only {space} pairs exist")
    rng = np.random.default_rng(seed)
    snapshots = []
    for _ in range(num_timesteps):
        keys = _sample_distinct(rng, space, m)
        snapshots.append(
            SparseMatrix.from_entries(num_vertices, keys // num_vertices, keys % num_vertices)
        )
    return DynamicGraph(num_vertices, snapshots)
