"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .objectives import ClassificationLabels, InteractionSplit
from .views import ViewSeries


def check_views(X) -> list[ViewSeries]:
    """Validate a view list: non-empty, aligned window, per-anchor sizes."""
    if isinstance(X, ViewSeries):
        X = [X]
    views = list(X)
    if not views:
        raise ValueError("at least one view is required")
    for v in views:
        if not isinstance(v, ViewSeries):
            raise TypeError(f"expected ViewSeries, got {type(v).__name__}")
    steps = {v.n_steps for v in views}
    if len(steps) != 1:
        raise ValueError(f"views have inconsistent snapshot counts: {sorted(steps)}")
    sizes: dict[str, int] = {}
    for v in views:
        n = sizes.setdefault(v.anchor_type, v.n_nodes)
        if n != v.n_nodes:
            raise ValueError(
                f"views anchored at {v.anchor_type!r} disagree on node count "
                f"({n} vs {v.n_nodes})"
            )
    return views


def check_labels(y, views: Sequence[ViewSeries]):
    """Normalize the estimator's y into a task container (or None).

    Accepted forms: None (structure-only), a ClassificationLabels or
    InteractionSplit instance, or a 1-d array of per-node class ids aligned
    with the anchor node set where negative entries mean unlabeled.
    """
    if y is None or isinstance(y, (ClassificationLabels, InteractionSplit)):
        return y
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"label array must be 1-d, got shape {arr.shape}")
    anchors = {v.anchor_type for v in views}
    if len(anchors) != 1:
        raise ValueError("array labels need a single anchor type across views")
    n = views[0].n_nodes
    if arr.shape[0] != n:
        raise ValueError(f"label array length {arr.shape[0]} != node count {n}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("label array must contain integer class ids")
    labeled = np.flatnonzero(arr >= 0)
    if labeled.size == 0:
        raise ValueError("label array marks every node unlabeled")
    class_ids = arr[labeled]
    names = tuple(str(c) for c in range(int(class_ids.max()) + 1))
    return ClassificationLabels(
        views[0].anchor_type, names, labeled.astype(np.int64), class_ids.astype(np.int64)
    )
