"""Parameter initialization, the Adam optimizer, and checkpoint files."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ._binio import read_container, write_container
from .autodiff import Tensor
from .errors import DataError

CHECKPOINT_MAGIC = b"DHCK"
CHECKPOINT_VERSION = 1


def xavier_init(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Uniform Xavier/Glorot draw in +-sqrt(6 / (fan_in + fan_out))."""
    shape = tuple(shape)
    if len(shape) > 2:
        raise ValueError("xavier_init supports rank <= 2 only")
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in = fan_out = 1
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    Moments are shaped like their parameters; the shared step count increases
    by exactly one per ``step`` call.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 0.005,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Apply one update in place, reading each parameter's ``.grad``."""
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter shape {p.data.shape}"
                )
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / bias1
            v_hat = self._v[i] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def save_checkpoint(path: str, named_params: Sequence[tuple[str, Tensor]], meta: dict) -> None:
    """Write a name -> shape -> values table; entries sorted by name."""
    names = [name for name, _ in named_params]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter name in checkpoint")
    arrays = sorted(((name, p.data) for name, p in named_params), key=lambda kv: kv[0])
    write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, {"meta": meta}, arrays)


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    header, arrays = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    return header.get("meta", {}), arrays


def restore_params(named_params: Sequence[tuple[str, Tensor]], arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into live parameters, validating shapes."""
    for name, p in named_params:
        if name not in arrays:
            raise DataError(f"checkpoint missing parameter {name!r}")
        arr = arrays[name]
        if arr.shape != p.data.shape:
            raise DataError(
                f"checkpoint shape mismatch for {name!r}: "
                f"checkpoint has {arr.shape}, model expects {p.data.shape}"
            )
        p.data[...] = arr
