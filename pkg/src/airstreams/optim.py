"""Minibatch SGD with classical momentum."""

import numpy as np

from .errors import UsageError


class SGD:
    """p <- p - lr * v with v <- momentum * v + grad; grads cleared by step.

    Velocities persist across steps; every parameter must carry a populated
    grad when step() runs (callers zero-fill parameters a loss never reached).
    """

    def __init__(self, params, lr, momentum=0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else float(lr)
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                raise UsageError(
                    f"sgd step: parameter {p.name or '<unnamed>'} has no grad"
                )
            v *= self.momentum
            v += p.grad
            p.data -= lr * v
            p.grad = None


def sgd_step(params, lr, momentum=0.0, velocities=None):
    """One functional SGD update; returns the velocity list for chaining."""
    params = list(params)
    if velocities is None:
        velocities = [np.zeros_like(p.data) for p in params]
    for p, v in zip(params, velocities):
        if p.grad is None:
            raise UsageError(f"sgd step: parameter {p.name or '<unnamed>'} has no grad")
        v *= momentum
        v += p.grad
        p.data -= lr * v
        p.grad = None
    return velocities


def zero_fill_missing_grads(params):
    """Give a zero grad to parameters the backward pass never reached."""
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def cosine_lr(base_lr, step, total_steps):
    """Cosine decay from base_lr to 0 over total_steps."""
    frac = min(max(step, 0), total_steps) / max(total_steps, 1)
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * frac))
