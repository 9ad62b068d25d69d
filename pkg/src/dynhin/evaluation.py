"""Task evaluation: node-classification F1 and leave-one-out top-K ranking.

Classification trains a multinomial logistic head on frozen embeddings over
10 random splits and reports averaged Micro/Macro-F1 with per-class
precision/recall. Ranking places each held-out positive among its shared
negatives by interaction score (descending, ties broken by ascending item
index) and reports HR@K and NDCG@K.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import autodiff as ad
from .errors import DataError
from .objectives import ClassifierHead, classification_loss
from .optim import Adam

RANK_CUTOFFS = (5, 10, 15, 20)


class LogisticHead(BaseEstimator, ClassifierMixin):
    """Multinomial logistic regression on fixed features.

    Deliberately dependency-free (built on the package's own optimizer) so
    reported numbers do not move with external library versions.
    """

    def __init__(self, learning_rate: float = 0.1, n_iter: int = 300, seed: int = 0):
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        class_index = {c: i for i, c in enumerate(self.classes_)}
        y_idx = np.array([class_index[c] for c in y], dtype=np.int64)
        rng = np.random.default_rng(self.seed)
        head = ClassifierHead.init(X.shape[1], len(self.classes_), rng)
        optimizer = Adam([head.W, head.b], lr=self.learning_rate)
        features = ad.constant(X)
        for _ in range(self.n_iter):
            with ad.Tape() as tape:
                loss = classification_loss(head, features, y_idx)
                tape.backward(loss)
            optimizer.step()
            optimizer.zero_grad()
        self.coef_ = head.W.data.copy()
        self.intercept_ = head.b.data.copy()
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]


@dataclass
class ClassificationReport:
    train_fraction: float
    micro_f1: float
    macro_f1: float
    class_names: tuple[str, ...]
    precision: np.ndarray = field(repr=False)
    recall: np.ndarray = field(repr=False)
    n_repetitions: int = 10
    classifier: str = "logistic"
    seed: int = 0

    def rows(self) -> list[dict]:
        out = [
            {
                "metric": "micro_f1",
                "value": self.micro_f1,
                "train_fraction": self.train_fraction,
            },
            {
                "metric": "macro_f1",
                "value": self.macro_f1,
                "train_fraction": self.train_fraction,
            },
        ]
        for i, name in enumerate(self.class_names):
            out.append(
                {
                    "metric": f"precision[{name}]",
                    "value": float(self.precision[i]),
                    "train_fraction": self.train_fraction,
                }
            )
            out.append(
                {
                    "metric": f"recall[{name}]",
                    "value": float(self.recall[i]),
                    "train_fraction": self.train_fraction,
                }
            )
        return out


@dataclass
class RankingReport:
    cutoffs: tuple[int, ...]
    hr: dict[int, float]
    ndcg: dict[int, float]
    n_users: int

    def rows(self) -> list[dict]:
        row = {}
        for k in self.cutoffs:
            row[f"HR@{k}"] = self.hr[k]
        for k in self.cutoffs:
            row[f"NDCG@{k}"] = self.ndcg[k]
        row["n_users"] = self.n_users
        return [row]


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


def f1_scores(cm: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
    """(micro_f1, macro_f1, per-class precision, per-class recall)."""
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        per_class_f1 = np.where(
            precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0
        )
    total = cm.sum()
    micro = float(tp.sum() / total) if total else 0.0
    macro = float(per_class_f1.mean()) if cm.shape[0] else 0.0
    return micro, macro, precision, recall


def classify_eval(
    embeddings: np.ndarray,
    node_indices: np.ndarray,
    class_ids: np.ndarray,
    class_names: Sequence[str],
    train_fraction: float,
    seed: int,
    n_repetitions: int = 10,
) -> ClassificationReport:
    """Average F1 of the logistic head over random train/test splits."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    classes_present = np.unique(class_ids)
    if classes_present.size < 2:
        raise DataError("classification evaluation needs at least 2 classes present")
    n = class_ids.size
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    X = embeddings[node_indices]
    rng = np.random.default_rng(seed)
    n_classes = len(class_names)
    cm_total = np.zeros((n_classes, n_classes), dtype=np.int64)
    for _ in range(n_repetitions):
        for _attempt in range(100):
            perm = rng.permutation(n)
            train_idx, test_idx = perm[:n_train], perm[n_train:]
            if np.array_equal(
                np.unique(class_ids[train_idx]), classes_present
            ) and np.unique(class_ids[test_idx]).size >= 1:
                break
            warnings.warn("a class was absent from the train split; resampling")
        else:
            raise DataError("could not draw a train split covering every class")
        head = LogisticHead(seed=seed).fit(X[train_idx], class_ids[train_idx])
        pred = head.predict(X[test_idx])
        cm_total += confusion_matrix(class_ids[test_idx], pred, n_classes)
    micro, macro, precision, recall = f1_scores(cm_total)
    return ClassificationReport(
        train_fraction=train_fraction,
        micro_f1=micro,
        macro_f1=macro,
        class_names=tuple(class_names),
        precision=precision,
        recall=recall,
        n_repetitions=n_repetitions,
        seed=seed,
    )


def rank_position(scores: np.ndarray, item_ids: np.ndarray, positive_pos: int) -> int:
    """1-based rank of the positive: descending score, ascending id tie-break."""
    s = scores[positive_pos]
    pos_id = item_ids[positive_pos]
    better = np.sum(scores > s)
    tied_ahead = np.sum((scores == s) & (item_ids < pos_id))
    return int(better + tied_ahead + 1)


def rank_eval(
    user_embeddings: np.ndarray,
    item_embeddings: np.ndarray,
    test_positives: np.ndarray,
    shared_negatives: np.ndarray,
    cutoffs: Sequence[int] = RANK_CUTOFFS,
) -> RankingReport:
    """Leave-one-out ranking of each user's positive among shared negatives."""
    n_users = test_positives.shape[0]
    if shared_negatives.shape[0] != n_users:
        raise ValueError("one negative list per test user is required")
    cutoffs = tuple(cutoffs)
    hits = {k: 0.0 for k in cutoffs}
    gains = {k: 0.0 for k in cutoffs}
    for row in range(n_users):
        u, pos_item = test_positives[row]
        if u >= user_embeddings.shape[0]:
            raise DataError(f"user index {u} missing from embeddings")
        candidates = np.concatenate(([pos_item], shared_negatives[row]))
        logits = item_embeddings[candidates] @ user_embeddings[u]
        scores = 1.0 / (1.0 + np.exp(-logits))
        rank = rank_position(scores, candidates, 0)
        for k in cutoffs:
            if rank <= k:
                hits[k] += 1.0
                gains[k] += 1.0 / math.log2(rank + 1)
    hr = {k: (hits[k] / n_users if n_users else 0.0) for k in cutoffs}
    ndcg = {k: (gains[k] / n_users if n_users else 0.0) for k in cutoffs}
    return RankingReport(cutoffs=cutoffs, hr=hr, ndcg=ndcg, n_users=n_users)


SWEEP_AXES = ("dimension", "history", "views", "view_count")


def sweep(
    config,
    axis: str,
    values: Sequence,
    runner: Callable[[object], dict[str, float]],
) -> list[dict]:
    """Retrain per value with everything else fixed; one table row per value.

    ``runner`` receives a config copy with the axis applied and returns the
    metric columns for that run.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        row = {"axis": axis, "value": value}
        row.update(runner(apply_sweep_axis(config, axis, value)))
        rows.append(row)
    return rows


def apply_sweep_axis(config, axis: str, value):
    """Return a config copy with one swept knob changed."""
    import copy

    cfg = copy.deepcopy(config)
    if axis == "dimension":
        cfg.hyper.dim = int(value)
    elif axis == "history":
        # value counts historical snapshots; the window includes the present.
        cfg.hyper.window = int(value) + 1
    elif axis == "views":
        specs = [s.strip() for s in str(value).split(",") if s.strip()]
        if not specs:
            raise ValueError(f"views value {value!r} names no meta-paths")
        cfg.views = specs
    elif axis == "view_count":
        count = int(value)
        if not 1 <= count <= len(cfg.views):
            raise ValueError(f"view_count {count} outside 1..{len(cfg.views)}")
        cfg.views = cfg.views[:count]
    return cfg
