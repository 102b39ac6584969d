"""Magnitude-preserving phase attacks and phase-preserving magnitude attacks.

A phase attack keeps every pixel's magnitude fixed while staying inside the
complex L-infinity epsilon-ball. On the circle |z| = |X| that constraint is
an angular band: pixels with 2|X| <= epsilon may rotate freely
(UNRESTRICTED), all others are limited to a phase deviation of
2*arcsin(epsilon / (2|X|)) around the original phase. One optimization step
distinguishes three cases, driven by the Wirtinger gradient g:

- unrestricted, g pointing outward (Re(g * conj(Z)) >= 0): take the plain
  gradient step and project it back onto the circle,
  Z -> sign(Z + g) * |X|;
- unrestricted, g pointing inward: cross the circle along the gradient
  direction, Z -> Z + a * exp(i*phase(g)) with the closed form
  a = -2|X| * cos(phase(g) - phase(Z)) > 0;
- restricted: rotate by the full per-step angle 2*arcsin(step / (2|X|)),
  increasing the phase iff Im(g * conj(Z)) >= 0.

Multi-step variants (p-prefixed analogues of the sign-gradient families)
apply the step with a per-iteration budget alpha and clamp the cumulative
deviation of restricted pixels to the total band each iteration;
unrestricted pixels are never clamped. The magnitude attack is the polar
opposite: the phase stays fixed and the per-pixel magnitude moves by the
sign of the radial gradient component, clamped to
[max(0, |X| - epsilon), |X| + epsilon] so the phase can never flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import as_generator
from .attacks_gradient import AttackConfig, momentum_direction
from .autodiff import complex_sign

PHASE_FAMILIES = ("pfgsm", "pffgsm", "pifgsm", "pmifgsm")
MAGNITUDE_FAMILIES = ("fgsm-mag", "ffgsm-mag", "ifgsm-mag", "mifgsm-mag")


@dataclass
class PhaseBudget:
    """Per-pixel feasible band on the constant-magnitude circle."""

    unrestricted: np.ndarray  # bool: 2|X| <= epsilon, phase free
    theta_max: np.ndarray  # max |phase deviation| (pi where unrestricted)


def wrap_angle(phi):
    """Map angles to [-pi, pi)."""
    return np.mod(np.asarray(phi) + np.pi, 2 * np.pi) - np.pi


def phase_budget(X, epsilon) -> PhaseBudget:
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    mag = np.abs(np.asarray(X, dtype=np.complex128))
    unrestricted = 2.0 * mag <= epsilon
    ratio = np.divide(epsilon, 2.0 * mag, out=np.ones_like(mag), where=~unrestricted)
    theta = np.where(unrestricted, np.pi, 2.0 * np.arcsin(np.clip(ratio, 0.0, 1.0)))
    return PhaseBudget(unrestricted=unrestricted, theta_max=theta)


def inward_crossing_alpha(X, g):
    """Closed-form step length a > 0 with |X + a*exp(i*phase(g))| = |X|.

    Valid when g points inward (Re(g * conj(X)) < 0).
    """
    X = np.asarray(X, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    return -2.0 * np.abs(X) * np.cos(np.angle(g) - np.angle(X))


def _phase_step_arrays(Z, g, mag, unrestricted, theta_step):
    """One magnitude-preserving step at the current iterate Z (|Z| = mag)."""
    out = Z.copy()
    active = np.abs(g) > 0
    radial = np.real(g * np.conj(Z))
    tangential = np.imag(g * np.conj(Z))

    m_out = unrestricted & active & (radial >= 0)
    if np.any(m_out):
        out[m_out] = (complex_sign(Z + g) * mag)[m_out]

    m_in = unrestricted & active & (radial < 0)
    if np.any(m_in):
        alpha = -2.0 * mag * np.cos(np.angle(g) - np.angle(Z))
        out[m_in] = (Z + alpha * np.exp(1j * np.angle(g)))[m_in]

    m_rot = (~unrestricted) & active
    if np.any(m_rot):
        direction = np.where(tangential >= 0, 1.0, -1.0)  # tie rotates upward
        out[m_rot] = (mag * np.exp(1j * (np.angle(Z) + direction * theta_step)))[m_rot]
    return out


def phase_step(X, g, budget: PhaseBudget, step_budget):
    """Single phase-attack step at pixel values X; |result| = |X| per pixel."""
    X = np.asarray(X, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    scalar = X.ndim == 0
    X = np.atleast_1d(X)
    g = np.broadcast_to(np.atleast_1d(g), X.shape)
    unrestricted = np.broadcast_to(np.atleast_1d(budget.unrestricted), X.shape)
    mag = np.abs(X)
    ratio = np.divide(step_budget, 2.0 * mag, out=np.ones_like(mag), where=mag > 0)
    theta_step = np.where(2.0 * mag <= step_budget, np.pi, 2.0 * np.arcsin(np.clip(ratio, 0.0, 1.0)))
    out = _phase_step_arrays(X, g, mag, unrestricted, theta_step)
    return out[0] if scalar else out


def run_phase_attack(model, X, Y, cfg: AttackConfig, rng=None):
    """Phase attack with the family structure of the sign-gradient attacks.

    The output preserves |X| per pixel and satisfies both the angular band
    constraint and ||Z - X||_inf <= epsilon. Random starts draw the phase
    uniformly within the per-pixel allowed band.
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.complex128)
    rng = as_generator(rng)
    mag = np.abs(X)
    phi0 = np.angle(X)
    budget = phase_budget(X, cfg.epsilon)
    unres = budget.unrestricted
    step = min(cfg.alpha, cfg.epsilon)
    ratio = np.divide(step, 2.0 * mag, out=np.ones_like(mag), where=mag > 0)
    theta_step = np.where(2.0 * mag <= step, np.pi, 2.0 * np.arcsin(np.clip(ratio, 0.0, 1.0)))

    if cfg.random_start:
        dphi = rng.uniform(-1.0, 1.0, X.shape) * budget.theta_max
        Z = mag * np.exp(1j * (phi0 + dphi))
    else:
        Z = X.copy()
    M = np.zeros_like(X)
    for _ in range(cfg.steps):
        _, g = model.loss_and_grad(Z, Y, reduce="sum")
        M, _ = momentum_direction(g, M, cfg)
        ge = M if cfg.classical_momentum else g + M
        Z = _phase_step_arrays(Z, ge, mag, unres, theta_step)
        # clamp restricted pixels to the total band, re-polarize everywhere
        dphi = wrap_angle(np.angle(Z) - phi0)
        dphi = np.where(unres, dphi, np.clip(dphi, -budget.theta_max, budget.theta_max))
        Z = mag * np.exp(1j * (phi0 + dphi))
    return Z


def magnitude_step(X, g, epsilon):
    """Single magnitude-attack step; the phase is preserved (or the pixel zeroed)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    X = np.asarray(X, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    s = np.sign(np.real(g * np.conj(X)))
    new_mag = np.maximum(0.0, np.abs(X) + epsilon * s)
    out = new_mag * np.exp(1j * np.angle(X))
    return out if out.ndim else out[()]


def run_magnitude_attack(model, X, Y, cfg: AttackConfig, rng=None):
    """Magnitude attack with the family structure of the sign-gradient attacks.

    Per pixel the phase of X is preserved exactly (pixels clamped at zero
    magnitude stay zero) and the magnitude stays inside
    [max(0, |X| - epsilon), |X| + epsilon].
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.complex128)
    rng = as_generator(rng)
    mag = np.abs(X)
    unit = np.exp(1j * np.angle(X))
    lo = np.maximum(0.0, mag - cfg.epsilon)
    hi = mag + cfg.epsilon

    if cfg.random_start:
        Z = rng.uniform(lo, hi) * unit
    else:
        Z = X.copy()
    M = np.zeros_like(X)
    for _ in range(cfg.steps):
        _, g = model.loss_and_grad(Z, Y, reduce="sum")
        M, _ = momentum_direction(g, M, cfg)
        ge = M if cfg.classical_momentum else g + M
        s = np.sign(np.real(ge * np.conj(X)))
        Z = np.clip(np.abs(Z) + cfg.alpha * s, lo, hi) * unit
    return Z
