"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor


class Adam:
    """Standard Adam with bias correction.

    Parameters are a name -> Tensor mapping; gradients are read from each
    tensor's ``.grad`` buffer. ``step(scale=...)`` lets the caller average
    accumulated gradients over a batch without mutating the buffers first.
    ``weight_decay`` is decoupled (applied to the weights directly, not the
    gradients), so it composes with the adaptive step the usual way.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, scale: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            m, v = self.m[name], self.v[name]
            if m.shape != p.data.shape:
                raise ShapeError(
                    f"adam: moment shape {m.shape} != param shape {p.data.shape} for '{name}'")
            g = p.grad * scale if scale != 1.0 else p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "m": self.m,
            "v": self.v,
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.weight_decay = float(state.get("weight_decay", 0.0))
        for name in self.params:
            self.m[name] = np.array(state["m"][name], dtype=np.float64)
            self.v[name] = np.array(state["v"][name], dtype=np.float64)
