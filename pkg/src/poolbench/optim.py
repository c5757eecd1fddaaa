"""Adam with bias correction, plus the simplex re-projection hook."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import ParameterError, project_to_simplex

__all__ = ["OptimConfig", "Adam", "ADAM_EPSILON"]

ADAM_EPSILON = 1e-8


@dataclass(frozen=True)
class OptimConfig:
    """Training hyperparameters; defaults follow the benchmark protocol."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 10
    batch_size: int = 10
    seed: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {b}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")


class Adam:
    """Standard Adam update, in place on a named parameter dict.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    Parameters named in ``simplex_names`` are re-projected onto the
    probability simplex immediately after every update.
    """

    def __init__(self, params: dict[str, np.ndarray], config: OptimConfig, simplex_names=()):
        self.params = params
        self.config = config
        self.simplex_names = tuple(simplex_names)
        unknown = set(self.simplex_names) - set(params)
        if unknown:
            raise ParameterError(f"simplex constraint on unknown parameters: {sorted(unknown)}")
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        lr, b1, b2 = self.config.lr, self.config.beta1, self.config.beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPSILON)
        for name in self.simplex_names:
            self.params[name][...] = project_to_simplex(self.params[name])
