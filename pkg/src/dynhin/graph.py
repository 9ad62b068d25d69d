"""Typed snapshot graphs: schemas, node universes, and sparse adjacency series.

Everything here is immutable after construction and safe to share across
threads. The sparse representation is a thin wrapper over a canonical CSR
matrix (sorted indices, no duplicates, no explicit zeros) so that products
of adjacency chains stay exact for integer-valued inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: str
    dst: str


@dataclass(frozen=True)
class Schema:
    """Allowed node and edge types, in declaration order."""

    node_types: tuple[str, ...]
    edge_types: tuple[EdgeType, ...]

    def __post_init__(self) -> None:
        if not self.node_types:
            raise DataError("no node types declared")
        if len(set(self.node_types)) != len(self.node_types):
            raise DataError("duplicate node type name")
        names = [e.name for e in self.edge_types]
        if len(set(names)) != len(names):
            raise DataError("duplicate edge type name")
        declared = set(self.node_types)
        for e in self.edge_types:
            for endpoint in (e.src, e.dst):
                if endpoint not in declared:
                    raise DataError(
                        f"edge type {e.name!r} references undeclared node type {endpoint!r}"
                    )

    def edge_type(self, name: str) -> EdgeType:
        for e in self.edge_types:
            if e.name == name:
                return e
        raise DataError(f"unknown edge type {name!r}")

    def has_node_type(self, name: str) -> bool:
        return name in self.node_types


def load_schema(path: str) -> Schema:
    """Parse a line-oriented schema file.

    Records are ``node <name>`` and ``edge <name> <src> <dst>``; ``#`` starts
    a comment. Declaration order is preserved.
    """
    node_types: list[str] = []
    edge_types: list[EdgeType] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "node" and len(parts) == 2:
                node_types.append(parts[1])
            elif parts[0] == "edge" and len(parts) == 4:
                edge_types.append(EdgeType(parts[1], parts[2], parts[3]))
            else:
                raise DataError(f"{path}:{lineno}: unrecognized schema record {line!r}")
    if not node_types:
        raise DataError(f"{path}: no node types")
    return Schema(tuple(node_types), tuple(edge_types))


class NodeUniverse:
    """Bijective external-id <-> dense-index mapping per node type.

    The mapping is fixed once built (constant node set across snapshots);
    ids keep their first-appearance order so reloading the same files yields
    identical indices.
    """

    def __init__(self, ids_by_type: Mapping[str, Sequence[str]]):
        self._ids = {t: tuple(ids) for t, ids in ids_by_type.items()}
        self._index = {}
        for t, ids in self._ids.items():
            lookup = {node_id: i for i, node_id in enumerate(ids)}
            if len(lookup) != len(ids):
                raise DataError(f"duplicate node id within type {t!r}")
            self._index[t] = lookup

    def size(self, node_type: str) -> int:
        return len(self._ids.get(node_type, ()))

    def ids(self, node_type: str) -> tuple[str, ...]:
        return self._ids.get(node_type, ())

    def index(self, node_type: str, node_id: str) -> int:
        return self._index[node_type][node_id]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NodeUniverse) and self._ids == other._ids


class SparseMatrix:
    """Immutable non-negative sparse matrix in canonical row-ordered form."""

    __slots__ = ("_csr",)

    def __init__(self, csr: sp.csr_matrix, _trusted: bool = False):
        if not _trusted:
            csr = sp.csr_matrix(csr, dtype=np.float64)
            csr.sum_duplicates()
            csr.eliminate_zeros()
            csr.sort_indices()
            if csr.nnz and csr.data.min() < 0:
                raise ValueError("negative entry in sparse matrix")
        self._csr = csr

    @classmethod
    def from_entries(
        cls,
        n_rows: int,
        n_cols: int,
        rows: Sequence[int],
        cols: Sequence[int],
        values: Sequence[float],
    ) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
            if values.min() < 0:
                raise ValueError("negative entry in sparse matrix")
        mat = sp.csr_matrix((values, (rows, cols)), shape=(n_rows, n_cols))
        return cls(mat)

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(sp.csr_matrix((n_rows, n_cols), dtype=np.float64))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(sp.identity(n, dtype=np.float64, format="csr"))

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        return cls(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def density(self) -> float:
        cells = self.n_rows * self.n_cols
        return self.nnz / cells if cells else 0.0

    def entries(self) -> Iterator[tuple[int, int, float]]:
        """Yield (row, col, value) in row-major, column-sorted order."""
        coo = self._csr.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            yield int(r), int(c), float(v)

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self._csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def transpose(self) -> "SparseMatrix":
        t = self._csr.transpose().tocsr()
        t.sort_indices()
        return SparseMatrix(t, _trusted=True)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def rows_dense(self, indices: Sequence[int]) -> np.ndarray:
        return self._csr[np.asarray(indices, dtype=np.int64)].toarray()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if self._csr.shape != other._csr.shape or self._csr.nnz != other._csr.nnz:
            return False
        return (
            np.array_equal(self._csr.indptr, other._csr.indptr)
            and np.array_equal(self._csr.indices, other._csr.indices)
            and np.array_equal(self._csr.data, other._csr.data)
        )

    def __repr__(self) -> str:
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def spmm(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    """Exact sparse product; zero-valued results are dropped.

    Pure function, safe to call concurrently.
    """
    if a.n_cols != b.n_rows:
        raise ValueError(
            f"dimension mismatch: ({a.n_rows}x{a.n_cols}) @ ({b.n_rows}x{b.n_cols})"
        )
    out = (a._csr @ b._csr).tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return SparseMatrix(out, _trusted=True)


@dataclass(frozen=True)
class SnapshotSeries:
    """Per-time-step, per-edge-type adjacency over a fixed node universe.

    ``matrices[t - 1][edge_type_name]`` holds the snapshot-t adjacency, with
    a (possibly empty) matrix present for every declared edge type at every t.
    """

    schema: Schema
    universe: NodeUniverse
    n_steps: int
    matrices: tuple[Mapping[str, SparseMatrix], ...] = field(repr=False)

    def adjacency(self, t: int, edge_type: str) -> SparseMatrix:
        if not 1 <= t <= self.n_steps:
            raise ValueError(f"snapshot index {t} outside 1..{self.n_steps}")
        return self.matrices[t - 1][edge_type]

    def truncate_to_last(self, n_steps: int) -> "SnapshotSeries":
        """Keep only the trailing ``n_steps`` snapshots (same universe)."""
        if not 1 <= n_steps <= self.n_steps:
            raise ValueError(f"cannot truncate to {n_steps} of {self.n_steps} steps")
        return SnapshotSeries(
            self.schema, self.universe, n_steps, self.matrices[self.n_steps - n_steps :]
        )


def load_snapshots(schema: Schema, edges_path: str) -> SnapshotSeries:
    """Load a tab-separated edge file into a SnapshotSeries.

    Columns: ``snapshot_index  edge_type_name  src_id  dst_id`` with 1-based
    contiguous snapshot indices. The node universe is the union of all ids
    seen anywhere in the file; duplicate edges within one snapshot collapse
    into a single entry whose value is the occurrence count.
    """
    edge_lookup = {e.name: e for e in schema.edge_types}
    ids_by_type: dict[str, list[str]] = {t: [] for t in schema.node_types}
    seen: dict[str, set[str]] = {t: set() for t in schema.node_types}
    rows: list[tuple[int, str, str, str]] = []
    max_t = 0
    with open(edges_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{edges_path}:{lineno}: expected 4 tab-separated columns")
            t_str, etype, src_id, dst_id = parts
            try:
                t = int(t_str)
            except ValueError:
                raise DataError(f"{edges_path}:{lineno}: bad snapshot index {t_str!r}") from None
            if t < 1:
                raise DataError(f"{edges_path}:{lineno}: snapshot index must be >= 1")
            e = edge_lookup.get(etype)
            if e is None:
                raise DataError(f"{edges_path}:{lineno}: unknown edge type {etype!r}")
            if src_id not in seen[e.src]:
                seen[e.src].add(src_id)
                ids_by_type[e.src].append(src_id)
            if dst_id not in seen[e.dst]:
                seen[e.dst].add(dst_id)
                ids_by_type[e.dst].append(dst_id)
            rows.append((t, etype, src_id, dst_id))
            max_t = max(max_t, t)

    if max_t == 0:
        raise DataError(f"{edges_path}: no snapshots")

    universe = NodeUniverse(ids_by_type)
    present = {t for t, _, _, _ in rows}
    missing = sorted(set(range(1, max_t + 1)) - present)
    if missing:
        raise DataError(f"{edges_path}: snapshot index gap at {missing[0]} (max index {max_t})")

    counts: dict[tuple[int, str], dict[tuple[int, int], int]] = {}
    for t, etype, src_id, dst_id in rows:
        e = edge_lookup[etype]
        key = (universe.index(e.src, src_id), universe.index(e.dst, dst_id))
        bucket = counts.setdefault((t, etype), {})
        bucket[key] = bucket.get(key, 0) + 1

    snapshots = []
    for t in range(1, max_t + 1):
        per_type = {}
        for e in schema.edge_types:
            shape = (universe.size(e.src), universe.size(e.dst))
            bucket = counts.get((t, e.name))
            if not bucket:
                per_type[e.name] = SparseMatrix.empty(*shape)
            else:
                rws = [r for r, _ in bucket]
                cls_ = [c for _, c in bucket]
                vals = [float(v) for v in bucket.values()]
                per_type[e.name] = SparseMatrix.from_entries(shape[0], shape[1], rws, cls_, vals)
        snapshots.append(per_type)
    return SnapshotSeries(schema, universe, max_t, tuple(snapshots))
