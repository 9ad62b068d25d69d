import numpy as np
import pytest

from dynhin import autodiff as ad
from dynhin.autodiff import Tape
from dynhin.encoders import (
    DecoderParams,
    GruParams,
    LstmParams,
    ViewEncoder,
    batch_encode,
    encode_sequence,
    encode_view,
    gru_cell,
    lstm_cell,
)
from dynhin.views import build_views

from conftest import make_series, random_series
from oracles import (
    finite_difference_gradients,
    gradient_close,
    scalar_gru_cell,
    scalar_lstm_cell,
)


def zero_gru(n, d):
    z = lambda shape: ad.parameter(np.zeros(shape))
    return GruParams(z((n, d)), z((d, d)), z((n, d)), z((d, d)), z((n, d)), z((d, d)))


def zero_lstm(n, d):
    w = lambda: ad.parameter(np.zeros((d + n, d)))
    b = lambda: ad.parameter(np.zeros(d))
    return LstmParams(w(), w(), w(), w(), b(), b(), b(), b())


def random_gru(n, d, rng):
    return GruParams(*[ad.parameter(rng.normal(size=s)) for s in
                       [(n, d), (d, d), (n, d), (d, d), (n, d), (d, d)]])


def random_lstm(n, d, rng):
    ws = [ad.parameter(rng.normal(size=(d + n, d))) for _ in range(4)]
    bs = [ad.parameter(rng.normal(size=d)) for _ in range(4)]
    return LstmParams(*ws, *bs)


class TestGruCell:
    def test_zero_params_halfway_update(self):
        # z = r = 0.5 and h_tilde = 0 pull the state halfway to zero
        params = zero_gru(2, 2)
        h = gru_cell(params, ad.constant(np.zeros((1, 2))), ad.constant(np.ones((1, 2))))
        assert np.allclose(h.data, [[0.5, 0.5]])

    def test_zero_state_fixed_point(self):
        params = zero_gru(3, 2)
        h = gru_cell(params, ad.constant(np.zeros((1, 3))), ad.constant(np.zeros((1, 2))))
        assert np.array_equal(h.data, np.zeros((1, 2)))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n, d = rng.integers(1, 5, size=2)
            params = random_gru(n, d, rng)
            x = rng.normal(size=n)
            h = rng.normal(size=d)
            got = gru_cell(
                params, ad.constant(x.reshape(1, -1)), ad.constant(h.reshape(1, -1))
            ).data[0]
            want = scalar_gru_cell(params, list(x), list(h))
            assert np.allclose(got, want, atol=1e-12)

    def test_convexity_between_prev_and_candidate(self):
        rng = np.random.default_rng(8)
        n, d = 4, 3
        params = random_gru(n, d, rng)
        x = ad.constant(rng.normal(size=(6, n)))
        h_prev = ad.constant(rng.normal(size=(6, d)))
        z = ad.sigmoid(ad.add(ad.matmul(x, params.W_z), ad.matmul(h_prev, params.U_z)))
        r = ad.sigmoid(ad.add(ad.matmul(x, params.W_r), ad.matmul(h_prev, params.U_r)))
        h_tilde = ad.tanh(
            ad.add(ad.matmul(x, params.W), ad.matmul(ad.hadamard(r, h_prev), params.U))
        )
        h = gru_cell(params, x, h_prev)
        lo = np.minimum(h_prev.data, h_tilde.data)
        hi = np.maximum(h_prev.data, h_tilde.data)
        assert np.all(h.data >= lo - 1e-12) and np.all(h.data <= hi + 1e-12)


class TestLstmCell:
    def test_zero_params_zero_state(self):
        params = zero_lstm(2, 2)
        h, c = lstm_cell(
            params,
            ad.constant(np.zeros((1, 2))),
            ad.constant(np.zeros((1, 2))),
            ad.constant(np.zeros((1, 2))),
        )
        assert np.array_equal(h.data, np.zeros((1, 2)))
        assert np.array_equal(c.data, np.zeros((1, 2)))

    def test_carried_cell_hand_value(self):
        # zero weights, c_prev = 2: gates are 0.5, candidate 0, so
        # c_t = 1 and h_t = 0.5 * tanh(1)
        params = zero_lstm(1, 1)
        h, c = lstm_cell(
            params,
            ad.constant(np.zeros((1, 1))),
            ad.constant(np.zeros((1, 1))),
            ad.constant(np.array([[2.0]])),
        )
        assert c.data[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert h.data[0, 0] == pytest.approx(0.3807970779778824, abs=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            n, d = rng.integers(1, 5, size=2)
            params = random_lstm(n, d, rng)
            x, h, c = rng.normal(size=n), rng.normal(size=d), rng.normal(size=d)
            h_t, c_t = lstm_cell(
                params,
                ad.constant(x.reshape(1, -1)),
                ad.constant(h.reshape(1, -1)),
                ad.constant(c.reshape(1, -1)),
            )
            want_h, want_c = scalar_lstm_cell(params, list(x), list(h), list(c))
            assert np.allclose(h_t.data[0], want_h, atol=1e-12)
            assert np.allclose(c_t.data[0], want_c, atol=1e-12)

    def test_hidden_bounded_by_one(self):
        rng = np.random.default_rng(20)
        params = random_lstm(3, 4, rng)
        h, _ = lstm_cell(
            params,
            ad.constant(rng.normal(size=(5, 3)) * 10),
            ad.constant(rng.normal(size=(5, 4))),
            ad.constant(rng.normal(size=(5, 4)) * 10),
        )
        assert np.all(np.abs(h.data) < 1.0)


class TestEncodeView:
    def _view(self, movie_schema, rng, n_steps=3):
        series = random_series(movie_schema, rng, max_nodes=7, n_steps=n_steps)
        return build_views(series, ["U-M-U"])[0]

    def test_single_step_equals_one_cell(self, movie_schema):
        rng = np.random.default_rng(30)
        view = self._view(movie_schema, rng, n_steps=1)
        enc = ViewEncoder.init("gru", view.n_nodes, 4, np.random.default_rng(0))
        out = encode_view(enc, view)
        x = ad.constant(view.dense(1))
        h = gru_cell(enc.cell, x, ad.constant(np.zeros((view.n_nodes, 4))))
        assert np.allclose(out.hidden.data, h.data)

    def test_isolated_nodes_share_hidden_state(self, movie_schema):
        series = make_series(
            movie_schema,
            {"U": 4, "M": 3, "G": 1, "A": 1},
            [{"rates": [(0, 0, 1.0)]}, {"rates": [(0, 1, 1.0)]}],
        )
        view = build_views(series, ["U-M-U"])[0]
        enc = ViewEncoder.init("lstm", 4, 3, np.random.default_rng(1))
        out = encode_view(enc, view)
        # users 1..3 have all-zero inputs at every step
        assert np.allclose(out.hidden.data[1], out.hidden.data[2])
        assert np.allclose(out.hidden.data[2], out.hidden.data[3])

    def test_reconstruction_rows_on_simplex(self, movie_schema):
        rng = np.random.default_rng(31)
        view = self._view(movie_schema, rng)
        enc = ViewEncoder.init("gru", view.n_nodes, 5, np.random.default_rng(2))
        recon = encode_view(enc, view).reconstruction
        assert np.all(recon >= 0)
        assert np.allclose(recon.sum(axis=1), 1.0, atol=1e-9)

    def test_frozen_params_pure_function(self, movie_schema):
        rng = np.random.default_rng(32)
        view = self._view(movie_schema, rng)
        enc = ViewEncoder.init("gru", view.n_nodes, 4, np.random.default_rng(3))
        a = encode_view(enc, view).hidden.data
        b = encode_view(enc, view).hidden.data
        assert np.array_equal(a, b)

    def test_six_node_scripted_trace(self):
        # full scripted oracle: feed 2 steps through scalar cells step by step
        rng = np.random.default_rng(33)
        n, d = 6, 3
        enc = ViewEncoder.init("gru", n, d, np.random.default_rng(4))
        inputs = [rng.random((n, n)) for _ in range(2)]
        out = encode_sequence(enc, inputs)
        h = np.zeros((n, d))
        for x in inputs:
            h = np.array(
                [scalar_gru_cell(enc.cell, list(x[i]), list(h[i])) for i in range(n)]
            )
        assert np.allclose(out.hidden.data, h, atol=1e-12)
        logits = h @ enc.decoder.W.data + enc.decoder.b.data
        want = np.exp(logits - logits.max(axis=1, keepdims=True))
        want /= want.sum(axis=1, keepdims=True)
        assert np.allclose(out.reconstruction, want, atol=1e-12)

    def test_gradients_flow_through_chain(self):
        rng = np.random.default_rng(34)
        n, d = 4, 3
        for kind, make in (("gru", random_gru), ("lstm", random_lstm)):
            cell = make(n, d, rng)
            dec = DecoderParams(
                ad.parameter(rng.normal(size=(d, n))), ad.parameter(rng.normal(size=n))
            )
            enc = ViewEncoder(kind, cell, dec, n, d)
            inputs = [rng.random((2, n)) for _ in range(3)]
            params = [t for _, t in enc.named()]

            def loss_fn() -> float:
                out = encode_sequence(enc, inputs)
                return (
                    ad.tensor_sum(ad.tanh(out.recon_logits)).item()
                    + ad.tensor_sum(out.hidden).item()
                )

            with Tape() as tape:
                out = encode_sequence(enc, inputs)
                loss = ad.add(
                    ad.tensor_sum(ad.tanh(out.recon_logits)), ad.tensor_sum(out.hidden)
                )
                tape.backward(loss)
            numeric = finite_difference_gradients(loss_fn, params)
            for p, num in zip(params, numeric):
                assert gradient_close(p.grad, num), kind


class TestBatchEncode:
    def test_one_output_per_view(self, movie_schema):
        rng = np.random.default_rng(35)
        series = random_series(movie_schema, rng, max_nodes=6, n_steps=2)
        views = build_views(series, ["U-M-U", "U-M-G-M-U"])
        encs = [
            ViewEncoder.init("gru", v.n_nodes, 4, np.random.default_rng(k))
            for k, v in enumerate(views)
        ]
        outs = batch_encode(encs, views, [0, 1])
        assert len(outs) == 2
        assert outs[0].hidden.data.shape == (2, 4)

    def test_singleton_view(self, movie_schema):
        rng = np.random.default_rng(36)
        series = random_series(movie_schema, rng, max_nodes=6, n_steps=2)
        views = build_views(series, ["U-M-U"])
        encs = [ViewEncoder.init("gru", views[0].n_nodes, 4, np.random.default_rng(0))]
        assert len(batch_encode(encs, views, [0])) == 1

    def test_permutation_equivariance(self, movie_schema):
        rng = np.random.default_rng(37)
        series = random_series(movie_schema, rng, max_nodes=6, n_steps=2)
        views = build_views(series, ["U-M-U"])
        enc = [ViewEncoder.init("lstm", views[0].n_nodes, 4, np.random.default_rng(0))]
        batch = np.arange(views[0].n_nodes)
        perm = np.random.default_rng(1).permutation(batch.size)
        straight = batch_encode(enc, views, batch)[0].hidden.data
        shuffled = batch_encode(enc, views, batch[perm])[0].hidden.data
        assert np.allclose(shuffled, straight[perm])

    def test_out_of_range_batch(self, movie_schema):
        rng = np.random.default_rng(38)
        series = random_series(movie_schema, rng, max_nodes=6, n_steps=1)
        views = build_views(series, ["U-M-U"])
        enc = [ViewEncoder.init("gru", views[0].n_nodes, 4, np.random.default_rng(0))]
        with pytest.raises(ValueError, match="out of range"):
            batch_encode(enc, views, [views[0].n_nodes])
