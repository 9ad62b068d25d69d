"""Meta-path views: commuting-matrix chains and PathSim proximity series.

A view is the homogeneous proximity network induced by one meta-path. For
each snapshot t the chain of typed adjacencies along the path is multiplied
out (entry (i, j) counts path instances from i to j at t) and normalized
with the symmetric PathSim measure. The (view x time-step) grid of builds is
embarrassingly parallel; ``build_views`` accepts a worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DataError
from .graph import Schema, SnapshotSeries, SparseMatrix, spmm

MAX_PATH_NODE_TYPES = 5  # at most four steps

# Views denser than this are materialized densely; encoders consume dense
# rows either way.
DENSE_FALLBACK_DENSITY = 0.25


@dataclass(frozen=True)
class PathStep:
    """One hop along a meta-path: a declared edge type, possibly reversed."""

    edge_type: str
    reverse: bool


@dataclass(frozen=True)
class MetaPath:
    node_types: tuple[str, ...]
    steps: tuple[PathStep, ...]

    @property
    def anchor_type(self) -> str:
        return self.node_types[0]

    @property
    def spec(self) -> str:
        return "-".join(self.node_types)

    @property
    def is_palindromic(self) -> bool:
        return self.node_types == tuple(reversed(self.node_types))

    def __str__(self) -> str:
        return self.spec


def parse_metapath(spec: str, schema: Schema) -> MetaPath:
    """Validate a meta-path spec like ``"U-M-G-M-U"`` against the schema.

    Each consecutive type pair must be joined by a declared edge type, used
    forward or reversed. When several edge types connect a pair, the first
    declared forward match wins, then the first declared reverse match.
    """
    names = tuple(s.strip() for s in spec.split("-"))
    if len(names) < 2:
        raise DataError(f"meta-path {spec!r} needs at least two node types")
    if len(names) > MAX_PATH_NODE_TYPES:
        raise DataError(
            f"meta-path {spec!r} has {len(names)} node types; the cap is {MAX_PATH_NODE_TYPES}"
        )
    for name in names:
        if not schema.has_node_type(name):
            raise DataError(f"meta-path {spec!r}: unknown node type {name!r}")
    steps = []
    for a, b in zip(names, names[1:]):
        forward = next((e for e in schema.edge_types if (e.src, e.dst) == (a, b)), None)
        if forward is not None:
            steps.append(PathStep(forward.name, reverse=False))
            continue
        backward = next((e for e in schema.edge_types if (e.src, e.dst) == (b, a)), None)
        if backward is not None:
            steps.append(PathStep(backward.name, reverse=True))
            continue
        raise DataError(f"meta-path {spec!r}: no edge type connects {a!r} to {b!r}")
    return MetaPath(names, tuple(steps))


def _chain_order(dims: list[tuple[int, int]]) -> list[list[int]]:
    """Classic matrix-chain-order split table for the planner."""
    n = len(dims)
    cost = [[0.0] * n for _ in range(n)]
    split = [[0] * n for _ in range(n)]
    for span in range(1, n):
        for i in range(n - span):
            j = i + span
            best = None
            for k in range(i, j):
                c = cost[i][k] + cost[k + 1][j] + dims[i][0] * dims[k][1] * dims[j][1]
                if best is None or c < best:
                    best = c
                    split[i][j] = k
            cost[i][j] = best
    return split


def _multiply_chain(mats: list[SparseMatrix]) -> SparseMatrix:
    # Result is order-invariant (associativity); the planner only picks a
    # cheap bracketing based on operand dimensions.
    if len(mats) == 1:
        return mats[0]
    split = _chain_order([(m.n_rows, m.n_cols) for m in mats])

    def product(i: int, j: int) -> SparseMatrix:
        if i == j:
            return mats[i]
        k = split[i][j]
        return spmm(product(i, k), product(k + 1, j))

    return product(0, len(mats) - 1)


def commuting_matrix(series: SnapshotSeries, path: MetaPath, t: int) -> SparseMatrix:
    """Path-instance counts along ``path`` at snapshot ``t``.

    Entry (i, j) is the number of path instances from anchor node i to node j
    (duplicate parallel edges contribute multiplicatively through their
    stored counts).
    """
    mats = []
    for step in path.steps:
        adj = series.adjacency(t, step.edge_type)
        mats.append(adj.transpose() if step.reverse else adj)
    return _multiply_chain(mats)


def pathsim(counts: SparseMatrix) -> SparseMatrix:
    """Symmetric path similarity 2*M(i,j) / (M(i,i) + M(j,j)), with 0/0 -> 0."""
    diag = counts.diagonal()
    rows, cols, vals = counts.entry_arrays()
    denom = diag[rows] + diag[cols]
    keep = denom > 0
    sim = 2.0 * vals[keep] / denom[keep]
    return SparseMatrix.from_entries(
        counts.n_rows, counts.n_cols, rows[keep], cols[keep], sim
    )


ProximityMatrix = Union[SparseMatrix, np.ndarray]


@dataclass(frozen=True)
class ViewSeries:
    """Time series of anchor-type proximity matrices for one meta-path."""

    view_id: str
    meta_path: MetaPath
    matrices: tuple[ProximityMatrix, ...]

    @property
    def n_steps(self) -> int:
        return len(self.matrices)

    @property
    def n_nodes(self) -> int:
        m = self.matrices[0]
        return m.shape[0] if isinstance(m, np.ndarray) else m.n_rows

    @property
    def anchor_type(self) -> str:
        return self.meta_path.anchor_type

    def dense(self, t: int) -> np.ndarray:
        m = self.matrices[t - 1]
        return m if isinstance(m, np.ndarray) else m.to_dense()

    def input_rows(self, t: int, node_indices: Sequence[int]) -> np.ndarray:
        """Dense proximity rows at snapshot t for the given anchor nodes."""
        m = self.matrices[t - 1]
        idx = np.asarray(node_indices, dtype=np.int64)
        return m[idx] if isinstance(m, np.ndarray) else m.rows_dense(idx)

    def truncate_to_last(self, n_steps: int) -> "ViewSeries":
        if not 1 <= n_steps <= self.n_steps:
            raise ValueError(f"cannot truncate to {n_steps} of {self.n_steps} steps")
        return ViewSeries(self.view_id, self.meta_path, self.matrices[self.n_steps - n_steps :])


def _proximity_at(series: SnapshotSeries, path: MetaPath, t: int) -> ProximityMatrix:
    sim = pathsim(commuting_matrix(series, path, t))
    if sim.density > DENSE_FALLBACK_DENSITY:
        return sim.to_dense()
    return sim


def pathsim_series(
    series: SnapshotSeries, path: MetaPath, workers: int = 1
) -> ViewSeries:
    """PathSim proximity matrices for every snapshot of a palindromic path."""
    if not path.is_palindromic:
        raise DataError(f"meta-path {path.spec!r} is not palindromic")
    steps = range(1, series.n_steps + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(lambda t: _proximity_at(series, path, t), steps))
    else:
        mats = [_proximity_at(series, path, t) for t in steps]
    return ViewSeries(path.spec, path, tuple(mats))


def build_views(
    series: SnapshotSeries, specs: Sequence[str], workers: int = 1
) -> list[ViewSeries]:
    """One ViewSeries per meta-path spec, order preserved."""
    if not specs:
        raise DataError("at least one meta-path spec is required")
    paths = [parse_metapath(s, series.schema) for s in specs]
    if workers > 1:
        # Parallelize across the (view, t) grid: each path already fans its
        # snapshots out, so give every path the full pool.
        return [pathsim_series(series, p, workers=workers) for p in paths]
    return [pathsim_series(series, p) for p in paths]
