"""First-order optimizers on flat parameter vectors."""

from typing import Any, Dict

import numpy as np

from ..utils.errors import ConfigurationError


class SGD:
    """Plain stochastic gradient descent."""

    def __init__(self, lr: float):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.step_count = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        """Update params in place."""
        params -= self.lr * grad
        self.step_count += 1

    def state_dict(self) -> Dict[str, Any]:
        return {"name": "sgd", "lr": self.lr, "step_count": self.step_count}

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.step_count = int(state["step_count"])


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigurationError(f"Adam betas must lie in [0, 1), got {beta1}, {beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: np.ndarray = np.zeros(0)
        self.v: np.ndarray = np.zeros(0)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        """Update params in place."""
        if self.m.shape != params.shape:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.v / (1.0 - self.beta2 ** self.step_count)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "name": "adam",
            "lr": self.lr,
            "betas": (self.beta1, self.beta2),
            "eps": self.eps,
            "step_count": self.step_count,
            "m": self.m.copy(),
            "v": self.v.copy(),
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.step_count = int(state["step_count"])
        self.m = np.asarray(state["m"], dtype=float).copy()
        self.v = np.asarray(state["v"], dtype=float).copy()


def make_optimizer(name: str, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Build an optimizer by name ("sgd" or "adam")."""
    name = name.lower()
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr, beta1, beta2, eps)
    raise ConfigurationError(f"unknown optimizer {name!r} (expected 'sgd' or 'adam')")
