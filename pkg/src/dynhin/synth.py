"""Synthetic dynamic heterogeneous networks with planted communities.

The generated graph has user (U), item (I), and attractor (R) node types.
Community co-membership drives the U-I "interact" edges (dense within a
community, sparse across), while edges to R nodes are uniform noise. Each
step, nodes re-assign their community with probability ``drift`` and the
edges incident to re-assigned nodes are resampled, so drift 0 freezes the
network. Meta-paths through I are informative about communities; meta-paths
through R are not.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

SCHEMA_TEXT = """# synthetic planted-community network
node U
node I
node R
edge interact U I
edge unoise U R
edge inoise I R
"""

INFORMATIVE_USER_VIEW = "U-I-U"
NOISE_USER_VIEW = "U-R-U"
INFORMATIVE_ITEM_VIEW = "I-U-I"
NOISE_ITEM_VIEW = "I-R-I"


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 120
    n_items: int = 60
    n_attractors: int = 20
    n_steps: int = 4
    n_communities: int = 2
    drift: float = 0.1
    p_within: float = 0.3
    p_across: float = 0.02
    p_noise: float = 0.08
    seed: int = 0

    def validate(self) -> None:
        if self.n_communities < 2:
            raise DataError("need at least 2 communities")
        if self.n_communities > min(self.n_users, self.n_items):
            raise DataError(
                f"{self.n_communities} communities exceed the "
                f"{min(self.n_users, self.n_items)} nodes available per type"
            )
        if not 0.0 <= self.drift <= 1.0:
            raise DataError("drift must be in [0, 1]")
        for name in ("p_within", "p_across", "p_noise"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{name} must be a probability")
        if self.n_steps < 1 or self.n_users < 1 or self.n_items < 1 or self.n_attractors < 1:
            raise DataError("node counts and steps must be positive")


@dataclass(frozen=True)
class SyntheticData:
    spec: SyntheticSpec
    schema_text: str
    edge_rows: tuple[tuple[int, str, str, str], ...]  # (t, edge_type, src, dst)
    labels: tuple[tuple[str, int], ...]  # (user id, community at final step)
    user_communities: np.ndarray  # (T, n_users)
    item_communities: np.ndarray  # (T, n_items)


def _uid(i: int) -> str:
    return f"u{i}"


def _iid(i: int) -> str:
    return f"i{i}"


def _rid(i: int) -> str:
    return f"r{i}"


def _bernoulli_pairs(
    rng: np.random.Generator, n_a: int, n_b: int, prob
) -> set[tuple[int, int]]:
    draws = rng.random((n_a, n_b))
    a_idx, b_idx = np.nonzero(draws < prob)
    return set(zip(a_idx.tolist(), b_idx.tolist()))


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Build the full edge-event list plus per-step ground-truth communities."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    user_comm = np.arange(spec.n_users) % spec.n_communities
    item_comm = np.arange(spec.n_items) % spec.n_communities

    def interact_probs(uc: np.ndarray, ic: np.ndarray) -> np.ndarray:
        same = uc[:, None] == ic[None, :]
        return np.where(same, spec.p_within, spec.p_across)

    edges_ui = _bernoulli_pairs(rng, spec.n_users, spec.n_items, interact_probs(user_comm, item_comm))
    edges_ur = _bernoulli_pairs(rng, spec.n_users, spec.n_attractors, spec.p_noise)
    edges_ir = _bernoulli_pairs(rng, spec.n_items, spec.n_attractors, spec.p_noise)

    # Every node must appear somewhere in the edge file or it has no index;
    # give isolated first-step nodes one deterministic noise edge.
    connected_u = {u for u, _ in edges_ui} | {u for u, _ in edges_ur}
    for u in range(spec.n_users):
        if u not in connected_u:
            edges_ur.add((u, u % spec.n_attractors))
    connected_i = {i for _, i in edges_ui} | {i for i, _ in edges_ir}
    for i in range(spec.n_items):
        if i not in connected_i:
            edges_ir.add((i, i % spec.n_attractors))
    connected_r = {r for _, r in edges_ur} | {r for _, r in edges_ir}
    for r in range(spec.n_attractors):
        if r not in connected_r:
            edges_ur.add((r % spec.n_users, r))

    user_hist = [user_comm.copy()]
    item_hist = [item_comm.copy()]
    rows: list[tuple[int, str, str, str]] = []

    def emit(t: int, ui, ur, ir) -> None:
        for u, i in sorted(ui):
            rows.append((t, "interact", _uid(u), _iid(i)))
        for u, r in sorted(ur):
            rows.append((t, "unoise", _uid(u), _rid(r)))
        for i, r in sorted(ir):
            rows.append((t, "inoise", _iid(i), _rid(r)))

    emit(1, edges_ui, edges_ur, edges_ir)

    for t in range(2, spec.n_steps + 1):
        flip_u = np.flatnonzero(rng.random(spec.n_users) < spec.drift)
        flip_i = np.flatnonzero(rng.random(spec.n_items) < spec.drift)
        for u in flip_u:
            user_comm[u] = rng.integers(spec.n_communities)
        for i in flip_i:
            item_comm[i] = rng.integers(spec.n_communities)

        flip_u_set, flip_i_set = set(flip_u.tolist()), set(flip_i.tolist())
        probs = interact_probs(user_comm, item_comm)
        resampled = _bernoulli_pairs(rng, spec.n_users, spec.n_items, probs)
        edges_ui = {
            (u, i)
            for u in range(spec.n_users)
            for i in range(spec.n_items)
            if (
                (u, i) in resampled
                if (u in flip_u_set or i in flip_i_set)
                else (u, i) in edges_ui
            )
        }
        res_ur = _bernoulli_pairs(rng, spec.n_users, spec.n_attractors, spec.p_noise)
        edges_ur = {
            (u, r)
            for u in range(spec.n_users)
            for r in range(spec.n_attractors)
            if ((u, r) in res_ur if u in flip_u_set else (u, r) in edges_ur)
        }
        res_ir = _bernoulli_pairs(rng, spec.n_items, spec.n_attractors, spec.p_noise)
        edges_ir = {
            (i, r)
            for i in range(spec.n_items)
            for r in range(spec.n_attractors)
            if ((i, r) in res_ir if i in flip_i_set else (i, r) in edges_ir)
        }
        emit(t, edges_ui, edges_ur, edges_ir)
        user_hist.append(user_comm.copy())
        item_hist.append(item_comm.copy())

    labels = tuple((_uid(u), int(user_comm[u])) for u in range(spec.n_users))
    return SyntheticData(
        spec=spec,
        schema_text=SCHEMA_TEXT,
        edge_rows=tuple(rows),
        labels=labels,
        user_communities=np.stack(user_hist),
        item_communities=np.stack(item_hist),
    )


def write_files(data: SyntheticData, out_dir: str) -> dict[str, str]:
    """Write schema/edge/label files; byte-identical for identical specs."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "schema": os.path.join(out_dir, "schema.txt"),
        "edges": os.path.join(out_dir, "edges.tsv"),
        "labels": os.path.join(out_dir, "labels.tsv"),
    }
    with open(paths["schema"], "w", encoding="utf-8") as fh:
        fh.write(data.schema_text)
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        for t, etype, src, dst in data.edge_rows:
            fh.write(f"{t}\t{etype}\t{src}\t{dst}\n")
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        for node_id, community in data.labels:
            fh.write(f"{node_id}\t{community}\n")
    return paths
