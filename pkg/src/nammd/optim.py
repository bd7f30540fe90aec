"""Adam optimizer state and its configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nammd.errors import ConfigError

GRADIENT_MODES = ("analytic", "central-difference")


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.05
    iterations: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epsilon_stabilizer: float = 1e-8
    gradient_mode: str = "analytic"
    fd_step: float = 1e-5

    def __post_init__(self):
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if not (isinstance(self.iterations, (int, np.integer)) and self.iterations >= 0):
            raise ConfigError(f"iterations must be a nonnegative integer, got {self.iterations!r}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {b}")
        if not self.epsilon_stabilizer > 0:
            raise ConfigError("epsilon_stabilizer must be positive")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if not self.fd_step > 0:
            raise ConfigError("fd_step must be positive")


class Adam:
    """Bias-corrected Adam. ``step`` moves *down* the supplied gradient."""

    def __init__(self, shape, config: OptimizerConfig):
        self.cfg = config
        self.lr = config.step_size
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad):
        c = self.cfg
        self.t += 1
        self.m = c.adam_beta1 * self.m + (1 - c.adam_beta1) * grad
        self.v = c.adam_beta2 * self.v + (1 - c.adam_beta2) * grad * grad
        mhat = self.m / (1 - c.adam_beta1**self.t)
        vhat = self.v / (1 - c.adam_beta2**self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + c.epsilon_stabilizer)


def central_difference(f, theta, h):
    """Gradient of scalar ``f`` at ``theta`` by central differences."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    flat, gflat = theta.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = h
        gflat[k] = (f((flat + e).reshape(theta.shape)) - f((flat - e).reshape(theta.shape))) / (2 * h)
    return g
