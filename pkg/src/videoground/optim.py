"""Parameter update rules: plain gradient descent and Adam."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NumericError


def _validate_grads(params: list[tuple[str, Tensor]]):
    # Reject the whole step before touching any parameter.
    for name, p in params:
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")


class Sgd:
    """θ ← θ − lr·g. Parameters with no accumulated gradient stay put."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float = 1e-2):
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self):
        _validate_grads(self.params)
        for _, p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad
        self.step_count += 1

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {"step_count": self.step_count, "slots": {}}

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step_count"])


class Adam:
    """Bias-corrected first/second-moment adaptive updates."""

    def __init__(
        self,
        params: list[tuple[str, Tensor]],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self):
        _validate_grads(self.params)
        self.step_count += 1
        t = self.step_count
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        slots = {}
        for name, _ in self.params:
            slots[f"m/{name}"] = self.m[name].copy()
            slots[f"v/{name}"] = self.v[name].copy()
        return {"step_count": self.step_count, "slots": slots}

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step_count"])
        for name, p in self.params:
            m = np.asarray(state["slots"][f"m/{name}"], dtype=p.data.dtype)
            v = np.asarray(state["slots"][f"v/{name}"], dtype=p.data.dtype)
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise NumericError(f"optimizer slot shape mismatch for {name!r}")
            self.m[name] = m.reshape(p.data.shape)
            self.v[name] = v.reshape(p.data.shape)


def make_optimizer(kind: str, params: list[tuple[str, Tensor]], lr: float):
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return Sgd(params, lr=lr)
    raise ValueError(f"unknown optimizer kind {kind!r}")
