"""Complex sign-gradient attacks under a per-pixel L-infinity bound.

One configurable iteration covers the four families cfgsm / cffgsm /
cifgsm / cmifgsm (single-step, random-start single-step, iterative,
momentum iterative): starting from Z0 = X (+ a uniform draw from the
epsilon-disk per pixel when random_start), each step moves by
alpha * sign(g + M) where g is the Wirtinger gradient of the loss,
sign(z) = exp(i*phase(z)), and M accumulates beta * sign(g); the iterate is
then projected back onto the epsilon-ball around the original X. Setting
beta = 0 collapses cmifgsm to cifgsm bit for bit; m = 1 with alpha =
epsilon collapses further to cffgsm, and disabling the random start to
cfgsm.

The momentum update direction sign(g + M) is not the classical
normalized-gradient accumulation; ``classical_momentum`` switches to
M = beta * M + g / ||g||_1 with step direction sign(M) for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._seeding import as_generator
from .autodiff import complex_sign

FAMILIES = ("cfgsm", "cffgsm", "cifgsm", "cmifgsm")


@dataclass
class AttackConfig:
    epsilon: float
    alpha: float
    beta: float = 0.0
    steps: int = 1
    random_start: bool = False
    family: str = "cfgsm"
    classical_momentum: bool = False

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown attack family {self.family!r}, expected one of {FAMILIES}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be > 0")
        if not (0 < self.alpha <= self.epsilon):
            raise ValueError("alpha must be in (0, epsilon]")
        if not (0 <= self.beta <= 1):
            raise ValueError("beta must be in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.family == "cfgsm":
            if self.steps != 1 or self.random_start or self.beta != 0 or self.alpha != self.epsilon:
                raise ValueError("cfgsm requires steps=1, no random start, beta=0, alpha=epsilon")
        elif self.family == "cffgsm":
            # random_start defaults on; disabling it is allowed so the
            # reduction to cfgsm can be exercised directly
            if self.steps != 1 or self.beta != 0 or self.alpha != self.epsilon:
                raise ValueError("cffgsm requires steps=1, beta=0, alpha=epsilon")
        elif self.family == "cifgsm":
            if self.beta != 0:
                raise ValueError("cifgsm requires beta=0")

    @classmethod
    def for_family(cls, family, epsilon, steps=10, beta=0.9, alpha=None):
        """Canonical configuration for a family; iterative alpha defaults to epsilon/4."""
        if family in ("cfgsm", "cffgsm"):
            return cls(
                epsilon=epsilon,
                alpha=epsilon,
                beta=0.0,
                steps=1,
                random_start=family == "cffgsm",
                family=family,
            )
        if family == "cifgsm":
            return cls(
                epsilon=epsilon,
                alpha=epsilon / 4 if alpha is None else alpha,
                beta=0.0,
                steps=steps,
                random_start=True,
                family=family,
            )
        if family == "cmifgsm":
            return cls(
                epsilon=epsilon,
                alpha=epsilon / 4 if alpha is None else alpha,
                beta=beta,
                steps=steps,
                random_start=True,
                family=family,
            )
        raise ValueError(f"unknown attack family {family!r}, expected one of {FAMILIES}")

    def without_random_start(self):
        return replace(self, random_start=False)


def linf_norm(z) -> float:
    """max_j |z_j| over all elements."""
    arr = np.asarray(z)
    if arr.size == 0:
        raise ValueError("linf_norm of an empty tensor")
    return float(np.abs(arr).max())


def project_linf_ball(z, center, epsilon):
    """Per-element radial projection of z onto {|z - center| <= epsilon}.

    Elements already inside pass through unchanged (bitwise).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    z = np.asarray(z, dtype=np.complex128)
    center = np.asarray(center, dtype=np.complex128)
    if z.shape != center.shape:
        raise ValueError(f"project_linf_ball: shapes {z.shape} and {center.shape} differ")
    d = z - center
    r = np.abs(d)
    unit = np.divide(d, r, out=np.zeros_like(d), where=r > 0)
    return np.where(r > epsilon, center + epsilon * unit, z)


def sample_uniform_ball(shape, epsilon, rng=None):
    """I.i.d. per element, uniform over the complex disk of radius epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    rng = as_generator(rng)
    r = epsilon * np.sqrt(rng.random(shape))
    theta = rng.uniform(-np.pi, np.pi, shape)
    return r * np.exp(1j * theta)


def momentum_direction(g, M, cfg: AttackConfig):
    """Updated momentum and unit step direction for one attack iteration."""
    if cfg.classical_momentum:
        flat = np.abs(g).reshape(g.shape[0], -1).sum(axis=1) if g.ndim > 1 else np.abs(g)
        norm = flat.reshape((-1,) + (1,) * (g.ndim - 1)) if g.ndim > 1 else flat
        M = cfg.beta * M + g / np.maximum(norm, 1e-300)
        return M, complex_sign(M)
    M = M + cfg.beta * complex_sign(g)
    return M, complex_sign(g + M)


def run_gradient_attack(model, X, Y, cfg: AttackConfig, rng=None):
    """Run the configured attack; returns Z with ||Z - X||_inf <= epsilon.

    ``model`` needs ``loss_and_grad(X, Y, reduce=...)``; gradients are taken
    with sum reduction so every sample is attacked as if alone.
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.complex128)
    rng = as_generator(rng)
    if cfg.random_start:
        Z = X + sample_uniform_ball(X.shape, cfg.epsilon, rng)
    else:
        Z = X.copy()
    M = np.zeros_like(X)
    for _ in range(cfg.steps):
        _, g = model.loss_and_grad(Z, Y, reduce="sum")
        M, direction = momentum_direction(g, M, cfg)
        Z = project_linf_ball(Z + cfg.alpha * direction, X, cfg.epsilon)
    return Z
