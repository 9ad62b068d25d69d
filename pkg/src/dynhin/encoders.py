"""Per-view recurrent encoders (GRU or LSTM) plus the reconstruction decoder.

Each view owns one parameter set; the chain feeds the node's proximity rows
for snapshots 1..T through T cell applications and decodes the final hidden
state into a probability row over the view's node set. Rows of a batch are
independent; hidden and cell states start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import xavier_init
from .views import ViewSeries

CELL_KINDS = ("gru", "lstm")


@dataclass
class GruParams:
    """Update/reset/candidate weights; no biases in this gate formulation."""

    W_z: Tensor
    U_z: Tensor
    W_r: Tensor
    U_r: Tensor
    W: Tensor
    U: Tensor

    @classmethod
    def init(cls, n_in: int, dim: int, rng: np.random.Generator) -> "GruParams":
        def w():
            return ad.parameter(xavier_init((n_in, dim), rng))

        def u():
            return ad.parameter(xavier_init((dim, dim), rng))

        return cls(W_z=w(), U_z=u(), W_r=w(), U_r=u(), W=w(), U=u())

    def named(self) -> list[tuple[str, Tensor]]:
        return [
            ("W_z", self.W_z),
            ("U_z", self.U_z),
            ("W_r", self.W_r),
            ("U_r", self.U_r),
            ("W", self.W),
            ("U", self.U),
        ]


@dataclass
class LstmParams:
    """Gate weights acting on concat[h_prev, x]; one bias per gate."""

    W_f: Tensor
    W_i: Tensor
    W_o: Tensor
    W_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    @classmethod
    def init(cls, n_in: int, dim: int, rng: np.random.Generator) -> "LstmParams":
        def w():
            return ad.parameter(xavier_init((dim + n_in, dim), rng))

        def b():
            return ad.parameter(np.zeros(dim))

        return cls(W_f=w(), W_i=w(), W_o=w(), W_c=w(), b_f=b(), b_i=b(), b_o=b(), b_c=b())

    def named(self) -> list[tuple[str, Tensor]]:
        return [
            ("W_f", self.W_f),
            ("W_i", self.W_i),
            ("W_o", self.W_o),
            ("W_c", self.W_c),
            ("b_f", self.b_f),
            ("b_i", self.b_i),
            ("b_o", self.b_o),
            ("b_c", self.b_c),
        ]


@dataclass
class DecoderParams:
    """Affine map from hidden dim back to the view's node count."""

    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, dim: int, n_out: int, rng: np.random.Generator) -> "DecoderParams":
        return cls(W=ad.parameter(xavier_init((dim, n_out), rng)), b=ad.parameter(np.zeros(n_out)))

    def named(self) -> list[tuple[str, Tensor]]:
        return [("W", self.W), ("b", self.b)]


def gru_cell(params: GruParams, x_t: Tensor, h_prev: Tensor) -> Tensor:
    """One gated update: h_t = (1 - z) * h_prev + z * h_tilde."""
    z = ad.sigmoid(ad.add(ad.matmul(x_t, params.W_z), ad.matmul(h_prev, params.U_z)))
    r = ad.sigmoid(ad.add(ad.matmul(x_t, params.W_r), ad.matmul(h_prev, params.U_r)))
    h_tilde = ad.tanh(
        ad.add(ad.matmul(x_t, params.W), ad.matmul(ad.hadamard(r, h_prev), params.U))
    )
    ones = ad.constant(np.ones_like(z.data))
    return ad.add(
        ad.hadamard(ad.sub(ones, z), h_prev),
        ad.hadamard(z, h_tilde),
    )


def lstm_cell(
    params: LstmParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor
) -> tuple[Tensor, Tensor]:
    """One LSTM update; the candidate passes through tanh before gating."""
    cat = ad.concat([h_prev, x_t], axis=1)
    f = ad.sigmoid(ad.add(ad.matmul(cat, params.W_f), params.b_f))
    i = ad.sigmoid(ad.add(ad.matmul(cat, params.W_i), params.b_i))
    o = ad.sigmoid(ad.add(ad.matmul(cat, params.W_o), params.b_o))
    candidate = ad.tanh(ad.add(ad.matmul(cat, params.W_c), params.b_c))
    c_t = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, candidate))
    h_t = ad.hadamard(o, ad.tanh(c_t))
    return h_t, c_t


@dataclass
class ViewEncoder:
    """Recurrent cell + decoder owning one view's parameters."""

    cell_kind: str
    cell: GruParams | LstmParams
    decoder: DecoderParams
    n_in: int
    dim: int

    @classmethod
    def init(cls, cell_kind: str, n_in: int, dim: int, rng: np.random.Generator) -> "ViewEncoder":
        if cell_kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {cell_kind!r}; expected one of {CELL_KINDS}")
        if cell_kind == "gru":
            cell = GruParams.init(n_in, dim, rng)
        else:
            cell = LstmParams.init(n_in, dim, rng)
        decoder = DecoderParams.init(dim, n_in, rng)
        return cls(cell_kind, cell, decoder, n_in, dim)

    def named(self) -> list[tuple[str, Tensor]]:
        out = [(f"{self.cell_kind}.{k}", v) for k, v in self.cell.named()]
        out += [(f"decoder.{k}", v) for k, v in self.decoder.named()]
        return out


@dataclass
class EncoderOutput:
    """Final hidden states and decoded reconstruction for a node batch."""

    hidden: Tensor  # (batch, dim)
    recon_logits: Tensor  # (batch, n_nodes)

    @property
    def reconstruction(self) -> np.ndarray:
        """Probability rows over the view's node set (each sums to 1)."""
        logits = self.recon_logits.data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


def encode_sequence(
    encoder: ViewEncoder, inputs: Sequence[np.ndarray]
) -> EncoderOutput:
    """Run the cell chain over T input batches of shape (batch, n_in)."""
    if not inputs:
        raise ValueError("encoder needs at least one time step")
    batch = inputs[0].shape[0]
    h = ad.constant(np.zeros((batch, encoder.dim)))
    c = ad.constant(np.zeros((batch, encoder.dim)))
    for x_np in inputs:
        x = ad.constant(x_np)
        if encoder.cell_kind == "gru":
            h = gru_cell(encoder.cell, x, h)
        else:
            h, c = lstm_cell(encoder.cell, x, h, c)
    logits = ad.add(ad.matmul(h, encoder.decoder.W), encoder.decoder.b)
    return EncoderOutput(hidden=h, recon_logits=logits)


def encode_view(
    encoder: ViewEncoder,
    view: ViewSeries,
    node_indices: Optional[Sequence[int]] = None,
) -> EncoderOutput:
    """Feed a view's proximity rows S^1(i,:) .. S^T(i,:) through the chain."""
    if view.n_steps < 1:
        raise ValueError("view has no snapshots")
    if node_indices is None:
        node_indices = np.arange(view.n_nodes)
    inputs = [view.input_rows(t, node_indices) for t in range(1, view.n_steps + 1)]
    return encode_sequence(encoder, inputs)


def batch_encode(
    encoders: Sequence[ViewEncoder],
    views: Sequence[ViewSeries],
    node_batch: Sequence[int],
) -> list[EncoderOutput]:
    """Independent per-view encodings for one node batch, order preserved."""
    if len(encoders) != len(views):
        raise ValueError("one encoder per view is required")
    idx = np.asarray(node_batch, dtype=np.int64)
    for view in views:
        if idx.size and (idx.min() < 0 or idx.max() >= view.n_nodes):
            raise ValueError("node batch index out of range")
    return [encode_view(enc, view, idx) for enc, view in zip(encoders, views)]
