import numpy as np
import pytest

from dynhin import autodiff as ad
from dynhin.errors import DataError
from dynhin.optim import (
    Adam,
    load_checkpoint,
    restore_params,
    save_checkpoint,
    xavier_init,
)


class TestXavierInit:
    def test_same_seed_identical(self):
        a = xavier_init((4, 4), np.random.default_rng(7))
        b = xavier_init((4, 4), np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_single_cell_bound(self):
        # fan_in = fan_out = 1 -> uniform in +-sqrt(3)
        for seed in range(20):
            v = xavier_init((1, 1), np.random.default_rng(seed))[0, 0]
            assert abs(v) <= np.sqrt(3.0)

    def test_empirical_variance(self):
        # statistical oracle: var of U(-b, b) is b^2/3 = 2/(fan_in+fan_out)
        rng = np.random.default_rng(0)
        draws = np.concatenate(
            [xavier_init((100, 10), rng).ravel() for _ in range(100)]
        )
        expected = 2.0 / (100 + 10)
        assert draws.size == 100_000
        assert abs(draws.var() - expected) / expected < 0.05

    def test_bounds_respected(self):
        vals = xavier_init((30, 50), np.random.default_rng(1))
        bound = np.sqrt(6.0 / 80.0)
        assert np.all(np.abs(vals) <= bound)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = ad.parameter(np.array([[1.0, -2.0]]))
        opt = Adam([p], lr=0.1)
        p.grad = np.zeros_like(p.data)
        before = p.data.copy()
        opt.step()
        assert np.array_equal(p.data, before)

    def test_one_step_is_minus_lr_sign(self):
        # hand-computed: m_hat/sqrt(v_hat) = g/|g| after bias correction
        p = ad.parameter(np.array([[1.0, 1.0]]))
        opt = Adam([p], lr=0.005)
        p.grad = np.array([[0.5, -2.0]])
        opt.step()
        expected = np.array([[1.0 - 0.004999999900000001, 1.0 + 0.004999999975]])
        assert np.allclose(p.data, expected, atol=1e-12)

    def test_step_counter_increments(self):
        p = ad.parameter(np.zeros((1, 1)))
        opt = Adam([p])
        for want in (1, 2, 3):
            p.grad = np.ones((1, 1))
            opt.step()
            assert opt.step_count == want

    def test_shape_mismatch_rejected(self):
        p = ad.parameter(np.zeros((2, 2)))
        opt = Adam([p])
        p.grad = np.zeros((1, 2))
        with pytest.raises(ValueError, match="shape"):
            opt.step()

    def test_moments_track_parameter_shapes(self):
        p1 = ad.parameter(np.zeros((2, 3)))
        p2 = ad.parameter(np.zeros(4))
        opt = Adam([p1, p2])
        assert opt._m[0].shape == (2, 3)
        assert opt._v[1].shape == (4,)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        named = [
            ("b.weight", ad.parameter(rng.normal(size=(3, 2)))),
            ("a.bias", ad.parameter(rng.normal(size=4))),
        ]
        path = str(tmp_path / "model.dhck")
        save_checkpoint(path, named, {"cell": "gru"})
        meta, arrays = load_checkpoint(path)
        assert meta == {"cell": "gru"}
        assert set(arrays) == {"b.weight", "a.bias"}
        fresh = [
            ("b.weight", ad.parameter(np.zeros((3, 2)))),
            ("a.bias", ad.parameter(np.zeros(4))),
        ]
        restore_params(fresh, arrays)
        for (_, orig), (_, back) in zip(named, fresh):
            assert np.array_equal(orig.data, back.data)

    def test_deterministic_bytes(self, tmp_path):
        named = [("w", ad.parameter(np.arange(6.0).reshape(2, 3)))]
        p1, p2 = str(tmp_path / "a.dhck"), str(tmp_path / "b.dhck")
        save_checkpoint(p1, named, {"seed": 1})
        save_checkpoint(p2, named, {"seed": 1})
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_shape_mismatch_message_names_both(self, tmp_path):
        path = str(tmp_path / "m.dhck")
        save_checkpoint(path, [("w", ad.parameter(np.zeros((2, 2))))], {})
        _, arrays = load_checkpoint(path)
        with pytest.raises(DataError, match=r"\(2, 2\).*\(3, 3\)"):
            restore_params([("w", ad.parameter(np.zeros((3, 3))))], arrays)

    def test_missing_parameter(self, tmp_path):
        path = str(tmp_path / "m.dhck")
        save_checkpoint(path, [("w", ad.parameter(np.zeros(2)))], {})
        _, arrays = load_checkpoint(path)
        with pytest.raises(DataError, match="missing parameter 'v'"):
            restore_params([("v", ad.parameter(np.zeros(2)))], arrays)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.dhck"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataError, match="bad magic"):
            load_checkpoint(str(path))
