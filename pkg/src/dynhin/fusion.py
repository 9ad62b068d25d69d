"""Attention-weighted fusion of per-view hidden states into one embedding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import xavier_init


@dataclass
class FusionParams:
    """Shared scoring parameters: weight matrix W, bias b, query vector h."""

    W: Tensor  # (dim, att_dim)
    b: Tensor  # (att_dim,)
    h: Tensor  # (att_dim, 1)

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, att_dim: int | None = None) -> "FusionParams":
        att_dim = dim if att_dim is None else att_dim
        return cls(
            W=ad.parameter(xavier_init((dim, att_dim), rng)),
            b=ad.parameter(np.zeros(att_dim)),
            h=ad.parameter(xavier_init((att_dim, 1), rng)),
        )

    def named(self) -> list[tuple[str, Tensor]]:
        return [("W", self.W), ("b", self.b), ("h", self.h)]


def attention_scores(params: FusionParams, view_vectors: Sequence[Tensor]) -> Tensor:
    """Per-node softmax weights over views.

    Raw score for view k is h . tanh(W v_k + b); the K scores of a node are
    softmax-normalized, so each row is non-negative and sums to one.
    """
    if not view_vectors:
        raise ValueError("attention needs at least one view vector")
    dim = params.W.data.shape[0]
    for v in view_vectors:
        if v.data.ndim != 2 or v.data.shape[1] != dim:
            raise ValueError(
                f"view vector shape {v.data.shape} incompatible with attention dim {dim}"
            )
    raw = [
        ad.matmul(ad.tanh(ad.add(ad.matmul(v, params.W), params.b)), params.h)
        for v in view_vectors
    ]
    return ad.softmax_row(ad.concat(raw, axis=1))


def fuse(weights: Tensor, view_vectors: Sequence[Tensor]) -> Tensor:
    """Convex combination z_i = sum_k att_{i,k} * v_k(i)."""
    if weights.data.shape[1] != len(view_vectors):
        raise ValueError(
            f"{weights.data.shape[1]} weight columns for {len(view_vectors)} views"
        )
    parts = []
    for k, v in enumerate(view_vectors):
        parts.append(ad.hadamard(ad.slice_cols(weights, k, k + 1), v))
    out = parts[0]
    for p in parts[1:]:
        out = ad.add(out, p)
    return out


def fuse_uniform(view_vectors: Sequence[Tensor]) -> Tensor:
    """Plain average of the view vectors (the fixed-weight fusion variant)."""
    if not view_vectors:
        raise ValueError("cannot fuse an empty view list")
    out = view_vectors[0]
    for v in view_vectors[1:]:
        out = ad.add(out, v)
    return ad.scale(out, 1.0 / len(view_vectors))
