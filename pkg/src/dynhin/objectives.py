"""Loss terms, sparsity penalty, label containers, and negative sampling.

The combined objective is structure_loss + beta * task_loss, where the task
loss is either softmax cross-entropy over labeled nodes (classification) or
point-wise binary cross-entropy over positive and sampled negative links
(recommendation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError
from .graph import SnapshotSeries, SparseMatrix
from .optim import xavier_init


def normalize_target_rows(rows: np.ndarray) -> np.ndarray:
    """Renormalize proximity rows to the simplex; all-zero rows stay zero."""
    sums = rows.sum(axis=1, keepdims=True)
    out = np.divide(rows, sums, out=np.zeros_like(rows), where=sums > 0)
    return out


def penalty_weights(target: np.ndarray, alpha: float) -> np.ndarray:
    """Sparsity penalty mask: alpha on the support of the target, 1 elsewhere."""
    if alpha <= 1.0:
        if alpha == 1.0:
            return np.ones_like(target)
        raise ValueError("penalty factor alpha must be > 1 (or exactly 1 to disable)")
    return np.where(target > 0, alpha, 1.0)


def structure_loss_view(recon_logits: Tensor, target_rows: np.ndarray, alpha: float) -> Tensor:
    """Penalized cross-entropy between decoded rows and observed proximity rows.

    Targets are renormalized per row; the decoder side goes through a fused
    log-softmax so zero reconstruction probabilities cannot produce NaN.
    Zero target rows contribute nothing (0 * log x == 0).
    """
    if recon_logits.data.shape != target_rows.shape:
        raise ValueError(
            f"reconstruction shape {recon_logits.data.shape} does not match "
            f"target shape {target_rows.shape}"
        )
    tnorm = normalize_target_rows(target_rows)
    weights = penalty_weights(target_rows, alpha) * tnorm
    log_recon = ad.log_softmax_row(recon_logits)
    return ad.neg(ad.tensor_sum(ad.hadamard(ad.constant(weights), log_recon)))


def structure_loss_total(view_losses: Sequence[Tensor]) -> Tensor:
    """Plain sum of the per-view structure losses."""
    if not view_losses:
        raise ValueError("no view losses to sum")
    out = view_losses[0]
    for loss in view_losses[1:]:
        out = ad.add(out, loss)
    return out


@dataclass
class ClassifierHead:
    """Affine map from embedding dim to class logits (softmax applied in loss)."""

    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, dim: int, n_classes: int, rng: np.random.Generator) -> "ClassifierHead":
        return cls(W=ad.parameter(xavier_init((dim, n_classes), rng)), b=ad.parameter(np.zeros(n_classes)))

    def named(self) -> list[tuple[str, Tensor]]:
        return [("W", self.W), ("b", self.b)]

    @property
    def n_classes(self) -> int:
        return self.W.data.shape[1]

    def logits(self, embeddings: Tensor) -> Tensor:
        return ad.add(ad.matmul(embeddings, self.W), self.b)


def classification_loss(head: ClassifierHead, embeddings: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of the head's predictions over labeled nodes."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty label set")
    if labels.min() < 0 or labels.max() >= head.n_classes:
        raise ValueError("label outside class range")
    onehot = np.zeros((labels.size, head.n_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    log_probs = ad.log_softmax_row(head.logits(embeddings))
    picked = ad.tensor_sum(ad.hadamard(ad.constant(onehot), log_probs))
    return ad.neg(ad.scale(picked, 1.0 / labels.size))


def interaction_logits(z_u: Tensor, z_v: Tensor) -> Tensor:
    """Row-wise dot products, shape (batch, 1)."""
    if z_u.data.shape != z_v.data.shape:
        raise ValueError(f"embedding shapes differ: {z_u.data.shape} vs {z_v.data.shape}")
    return ad.tensor_sum(ad.hadamard(z_u, z_v), axis=1)


def interaction_score(z_u: Tensor, z_v: Tensor) -> Tensor:
    """Interaction probability sigmoid(z_u . z_v) per row, in (0, 1)."""
    return ad.sigmoid(interaction_logits(z_u, z_v))


def recommendation_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over positive (1) and negative (0) instances.

    Works on pre-sigmoid scores through log-sigmoid for stability:
    -[y log s + (1 - y) log (1 - s)] with s = sigmoid(logit).
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if y.size == 0:
        raise ValueError("empty instance set")
    if logits.data.shape != y.shape:
        raise ValueError(f"logit shape {logits.data.shape} does not match labels {y.shape}")
    pos_term = ad.hadamard(ad.constant(y), ad.log_sigmoid(logits))
    neg_term = ad.hadamard(ad.constant(1.0 - y), ad.log_sigmoid(ad.neg(logits)))
    return ad.neg(ad.scale(ad.tensor_sum(ad.add(pos_term, neg_term)), 1.0 / y.size))


def total_loss(structure: Tensor, attention_task: Tensor | None, beta: float) -> Tensor:
    """Weighted combination of structure and task objectives."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if attention_task is None or beta == 0.0:
        return structure
    return ad.add(structure, ad.scale(attention_task, beta))


@dataclass(frozen=True)
class ClassificationLabels:
    """Labeled subset of one anchor type; class ids index ``class_names``."""

    node_type: str
    class_names: tuple[str, ...]
    node_indices: np.ndarray
    class_ids: np.ndarray

    def __post_init__(self):
        if self.node_indices.shape != self.class_ids.shape:
            raise DataError("label arrays misaligned")
        if self.class_ids.size and (
            self.class_ids.min() < 0 or self.class_ids.max() >= len(self.class_names)
        ):
            raise DataError("class id outside declared class range")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def load_labels(path: str, node_type: str, universe) -> ClassificationLabels:
    """Read a tab-separated label file with columns ``node_id  label``.

    Unknown node ids (never seen in the edge file) are rejected; class names
    are assigned ids in first-appearance order.
    """
    nodes, names = [], []
    class_ids: dict[str, int] = {}
    ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 tab-separated columns")
            node_id, label = parts
            try:
                idx = universe.index(node_type, node_id)
            except KeyError:
                raise DataError(
                    f"{path}:{lineno}: node id {node_id!r} not present in type {node_type!r}"
                ) from None
            if label not in class_ids:
                class_ids[label] = len(names)
                names.append(label)
            nodes.append(idx)
            ids.append(class_ids[label])
    return ClassificationLabels(
        node_type,
        tuple(names),
        np.asarray(nodes, dtype=np.int64),
        np.asarray(ids, dtype=np.int64),
    )


def derive_majority_labels(series: SnapshotSeries, path_spec: str) -> ClassificationLabels:
    """Label each anchor node by its most-linked endpoint along a meta-path.

    Link counts are summed over every snapshot; ties break toward the lower
    endpoint index and nodes with no path instances are left unlabeled. The
    endpoint ids become the class names (e.g. venues labeling authors via an
    author-paper-venue chain).
    """
    from .views import commuting_matrix, parse_metapath

    path = parse_metapath(path_spec, series.schema)
    anchor, target = path.node_types[0], path.node_types[-1]
    if anchor == target:
        raise DataError("majority labeling needs a path between two distinct types")
    n_anchor = series.universe.size(anchor)
    n_target = series.universe.size(target)
    counts = np.zeros((n_anchor, n_target))
    for t in range(1, series.n_steps + 1):
        counts += commuting_matrix(series, path, t).to_dense()
    labeled = np.flatnonzero(counts.sum(axis=1) > 0)
    class_ids = counts[labeled].argmax(axis=1)
    return ClassificationLabels(
        anchor,
        tuple(series.universe.ids(target)),
        labeled.astype(np.int64),
        class_ids.astype(np.int64),
    )


@dataclass(frozen=True)
class InteractionSplit:
    """Leave-one-out split of user-item interactions.

    Per user the last interaction (ordered by snapshot, then item index)
    becomes the test positive and the second-to-last the validation positive;
    everything else stays in training. ``train_series`` has the held-out
    events removed from their snapshots.
    """

    user_type: str
    item_type: str
    n_users: int
    n_items: int
    train_pairs: np.ndarray  # (n, 2) user, item
    val_pairs: np.ndarray  # (m, 2) at most one row per user
    test_pairs: np.ndarray
    train_items_by_user: Mapping[int, frozenset[int]]
    known_items_by_user: Mapping[int, frozenset[int]]


def leave_one_out_split(
    series: SnapshotSeries, interaction_edge_type: str
) -> tuple[InteractionSplit, SnapshotSeries]:
    """Split interactions and return the training series with holdouts removed."""
    edge = series.schema.edge_type(interaction_edge_type)
    n_users = series.universe.size(edge.src)
    n_items = series.universe.size(edge.dst)

    events_by_user: dict[int, list[tuple[int, int]]] = {}
    for t in range(1, series.n_steps + 1):
        for u, i, v in series.adjacency(t, interaction_edge_type).entries():
            events_by_user.setdefault(u, []).extend([(t, i)] * int(round(v)))

    removed: dict[int, list[tuple[int, int]]] = {t: [] for t in range(1, series.n_steps + 1)}
    train_pairs, val_pairs, test_pairs = [], [], []
    train_items: dict[int, set[int]] = {}
    known_items: dict[int, set[int]] = {}
    for u in sorted(events_by_user):
        events = sorted(events_by_user[u])
        known_items[u] = {i for _, i in events}
        holdout = []
        if len(events) >= 2:
            holdout.append(("test", events[-1]))
        if len(events) >= 3:
            holdout.append(("val", events[-2]))
        kept = events[: len(events) - len(holdout)]
        for kind, (t, i) in holdout:
            removed[t].append((u, i))
            (test_pairs if kind == "test" else val_pairs).append((u, i))
        train_items[u] = {i for _, i in kept}
        for _, i in kept:
            train_pairs.append((u, i))

    # Rebuild the interaction adjacency with one count removed per held-out event.
    new_snapshots = []
    for t in range(1, series.n_steps + 1):
        per_type = dict(series.matrices[t - 1])
        if removed[t]:
            counts = {(r, c): v for r, c, v in per_type[interaction_edge_type].entries()}
            for key in removed[t]:
                counts[key] -= 1.0
                if counts[key] <= 0:
                    del counts[key]
            rows = [r for r, _ in counts]
            cols = [c for _, c in counts]
            vals = list(counts.values())
            per_type[interaction_edge_type] = SparseMatrix.from_entries(
                n_users, n_items, rows, cols, vals
            )
        new_snapshots.append(per_type)
    train_series = SnapshotSeries(
        series.schema, series.universe, series.n_steps, tuple(new_snapshots)
    )

    def as_array(pairs: list[tuple[int, int]]) -> np.ndarray:
        return np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 2)

    # Deduplicate repeated (user, item) events in training.
    uniq_train = sorted(set(map(tuple, train_pairs)))
    split = InteractionSplit(
        user_type=edge.src,
        item_type=edge.dst,
        n_users=n_users,
        n_items=n_items,
        train_pairs=as_array(uniq_train),
        val_pairs=as_array(val_pairs),
        test_pairs=as_array(test_pairs),
        train_items_by_user={u: frozenset(s) for u, s in train_items.items()},
        known_items_by_user={u: frozenset(s) for u, s in known_items.items()},
    )
    return split, train_series


# Stream tag separating the shared evaluation negatives from training draws.
_EVAL_NEGATIVE_STREAM = 915237


def eval_negative_sets(
    split: InteractionSplit, n_per_pos: int, seed: int
) -> dict[str, np.ndarray]:
    """Shared candidate sets for validation and test ranking.

    Drawn from a dedicated seed-derived stream so that training, evaluation,
    and re-runs all rank against identical negatives. Held-out items are
    excluded via each user's full known-interaction set.
    """
    rng = np.random.default_rng([seed, _EVAL_NEGATIVE_STREAM])
    return {
        "val": sample_negatives(
            split.val_pairs, n_per_pos, split.n_items, split.known_items_by_user, rng
        ),
        "test": sample_negatives(
            split.test_pairs, n_per_pos, split.n_items, split.known_items_by_user, rng
        ),
    }


def sample_negatives(
    positives: np.ndarray,
    n_per_pos: int,
    n_items: int,
    exclude_by_user: Mapping[int, frozenset[int]],
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform negatives without replacement for each positive pair.

    The candidate space per user is every item outside that user's exclusion
    set; sampling is deterministic for a given rng state. Raises when a user
    has interacted with too many items to supply ``n_per_pos`` negatives.
    """
    out = np.empty((positives.shape[0], n_per_pos), dtype=np.int64)
    candidates_cache: dict[int, np.ndarray] = {}
    for k, (u, _) in enumerate(positives):
        u = int(u)
        cands = candidates_cache.get(u)
        if cands is None:
            banned = exclude_by_user.get(u, frozenset())
            cands = np.array([i for i in range(n_items) if i not in banned], dtype=np.int64)
            candidates_cache[u] = cands
        if cands.size < n_per_pos:
            raise DataError(
                f"user {u} has only {cands.size} candidate negatives, "
                f"{n_per_pos} requested"
            )
        out[k] = cands[rng.choice(cands.size, size=n_per_pos, replace=False)]
    return out
