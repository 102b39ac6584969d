"""Independent oracles: finite-difference Wirtinger gradients, Monte-Carlo
constraint-set equivalence, and brute-force grid-search attack optima.

Nothing here reuses the reverse-mode engine's backward pass; gradients are
checked against central differences on the real and imaginary components,
the circle/band set identity is checked by random membership sampling, and
attack outputs are refereed against exhaustive grids over the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import models
from ._seeding import rng_for
from .attacks_gradient import AttackConfig, run_gradient_attack
from .attacks_phase import phase_budget, run_phase_attack, wrap_angle


@dataclass
class OracleReport:
    suite: str
    checks: int
    max_abs_err: float
    max_rel_err: float
    violations: int

    @property
    def passed(self):
        return self.violations == 0

    def line(self):
        return (
            f"suite={self.suite} checks={self.checks} violations={self.violations} "
            f"max_abs_err={self.max_abs_err:.3e} max_rel_err={self.max_rel_err:.3e} "
            f"{'PASS' if self.passed else 'FAIL'}"
        )


def finite_diff_wirtinger(f, x, h=1e-5):
    """Central differences on re and im, assembled as (g_re + i*g_im) / 2.

    ``f`` maps a complex array to a real scalar.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    x = np.asarray(x, dtype=np.complex128)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    base = x.copy().reshape(-1)
    for j in range(base.size):
        for unit, writer in ((1.0, "re"), (1j, "im")):
            saved = base[j]
            base[j] = saved + unit * h
            fp = f(base.reshape(x.shape))
            base[j] = saved - unit * h
            fm = f(base.reshape(x.shape))
            base[j] = saved
            d = (fp - fm) / (2 * h)
            flat[j] += 0.5 * d if writer == "re" else 0.5j * d
    return grad


# ---------------------------------------------------------------------------
# gradient checking

_KINK_MARGIN = 1e-3  # samples closer than this to a relu/abs/phase kink are rejected


def _graph_cases(rng):
    """Random small composites over the primitive set, as (n, build) pairs
    where build(x_array) returns the scalar real loss node."""
    n = int(rng.integers(4, 17))
    w = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    s = rng.normal(scale=0.3) + 1j * rng.normal(scale=0.3)

    def linear(x):
        return ad.sum_all(ad.real_part(ad.mul(ad.CTensor(w), ad.conj(x))))

    def quadratic(x):
        return ad.sum_all(ad.real_part(ad.mul(x, ad.conj(x))))

    def abs_sum(x):
        return ad.sum_all(ad.magnitude(x))

    def relu_net(x):
        h = ad.split_relu(ad.add(ad.matmul(ad.reshape(x, (1, n)), ad.CTensor(a)), ad.CTensor(b[None, :])))
        return ad.mean_all(ad.magnitude(h))

    def exp_probe(x):
        return ad.sum_all(ad.real_part(ad.cexp(ad.mul(x, ad.CTensor(np.full(n, s))))))

    def phase_probe(x):
        return ad.sum_all(ad.mul(ad.phase(x), ad.phase(x)))

    def softmax_probe(x):
        logits = ad.magnitude(ad.matmul(ad.reshape(x, (1, n)), ad.CTensor(a)))
        return ad.cross_entropy(logits, np.array([n // 2]), reduce="mean")

    builders = [linear, quadratic, abs_sum, relu_net, exp_probe, phase_probe, softmax_probe]
    return n, builders[int(rng.integers(len(builders)))]


def _model_case(rng):
    cfg = models.ModelConfig(
        kind=str(rng.choice(["cvnn", "rvnn"])),
        input_shape=(1, 4, 4),
        hidden_widths=(int(rng.integers(2, 5)), int(rng.integers(3, 7))),
        conv_stages=1,
        classes=3,
        seed=int(rng.integers(2**31)),
        encoding=str(rng.choice(["reim", "magphase"])),
        input_norm=float(rng.choice([0.0, 0.2])),
    )
    model = models.build_model(cfg)
    y = np.array([int(rng.integers(3))])

    def build(x):
        return ad.cross_entropy(model._logits_node(x, model.param_leaves()), y, reduce="mean")

    return 16, build, (1, 1, 4, 4)


def check_gradients(trials=100, seed=0, h=1e-5, tol=1e-4, include_models=True):
    """Compare engine Wirtinger gradients against the finite-difference oracle.

    Relative error metric per element: |ad - fd| / (1 + |fd|).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    max_abs = 0.0
    max_rel = 0.0
    violations = 0
    done = 0
    case = 0
    while done < trials:
        rng = rng_for(seed, "gradcheck", case)
        case += 1
        use_model = include_models and case % 3 == 0
        if use_model:
            n, build, shape = _model_case(rng)
        else:
            n, build = _graph_cases(rng)
            shape = (n,)
        for _ in range(50):
            x0 = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * 0.9
            node = ad.CTensor(x0)
            loss = build(node)
            if ad.kink_margin(loss) > _KINK_MARGIN:
                break
        else:
            continue  # could not find a point clear of kinks, draw a new case
        got = ad.wirtinger_backward(loss, [node])[node]

        def f(xv):
            return float(build(ad.CTensor(xv)).value.real)

        want = finite_diff_wirtinger(f, x0, h=h)
        abs_err = np.abs(got - want)
        rel_err = abs_err / (1.0 + np.abs(want))
        max_abs = max(max_abs, float(abs_err.max()))
        max_rel = max(max_rel, float(rel_err.max()))
        if float(rel_err.max()) >= tol:
            violations += 1
        done += 1
    return OracleReport("gradients", done, max_abs, max_rel, violations)


# ---------------------------------------------------------------------------
# constraint-set equivalence

_BOUNDARY_SLACK = 1e-12


def check_set_equivalence(epsilon, trials, seed=0):
    """Monte-Carlo check that, on the circle |z| = |x|, membership in the
    epsilon-ball around x coincides with the angular-band condition
    2|x| <= epsilon or |wrap(phase_x - phase_z)| <= 2*arcsin(epsilon/(2|x|)).

    Disagreements within 1e-12 of either boundary are absorbed as
    floating-point ties; anything beyond counts as a violation.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    rng = rng_for(seed, "sets", f"{epsilon:.17g}")
    violations = 0
    max_abs = 0.0
    remaining = trials
    while remaining > 0:
        n = min(remaining, 1 << 19)
        remaining -= n
        u = rng.random(n)
        mag = np.where(
            u < 0.45,
            rng.uniform(0.0, epsilon / 2, n),
            epsilon / 2 * (1.0 + 3.0 * rng.random(n)),
        )
        # a sliver of exact boundary cases 2|x| == epsilon
        mag[u > 0.98] = epsilon * 0.5
        phi_x = rng.uniform(-np.pi, np.pi, n)
        phi_z = rng.uniform(-np.pi, np.pi, n)
        x = mag * np.exp(1j * phi_x)
        z = mag * np.exp(1j * phi_z)

        chord = np.abs(z - x)
        in_ball = chord <= epsilon
        free = 2.0 * mag <= epsilon
        ratio = np.divide(epsilon, 2.0 * mag, out=np.ones_like(mag), where=~free)
        theta_max = 2.0 * np.arcsin(np.clip(ratio, 0.0, 1.0))
        dphi = np.abs(wrap_angle(phi_x - phi_z))
        in_band = free | (dphi <= theta_max)

        near = np.abs(chord - epsilon) <= _BOUNDARY_SLACK * max(1.0, epsilon)
        near |= (~free) & (np.abs(dphi - theta_max) <= _BOUNDARY_SLACK)
        bad = (in_ball != in_band) & ~near
        violations += int(bad.sum())
        # chord identity |z - x| = 2|x| |sin(dphi/2)| doubles as an error track
        max_abs = max(max_abs, float(np.abs(chord - 2.0 * mag * np.abs(np.sin(dphi / 2))).max()))
    return OracleReport("sets", trials, max_abs, 0.0, violations)


# ---------------------------------------------------------------------------
# brute-force grid search

CONSTRAINTS = ("ball", "circle", "ray")


class LinearProbe:
    """Linear objective on complex inputs: per-sample loss sum Re(w * conj(z)).

    Wirtinger gradient w/2 everywhere; serves as the analytically solvable
    model for optimality checks.
    """

    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.complex128)

    def per_sample_loss(self, X, Y=None):
        X = np.asarray(X, dtype=np.complex128)
        prod = np.real(self.w * np.conj(X))
        return prod.reshape(X.shape[0], -1).sum(axis=1)

    def loss_and_grad(self, X, Y=None, reduce="sum"):
        X = np.asarray(X, dtype=np.complex128)
        per = self.per_sample_loss(X)
        loss = per.sum() if reduce == "sum" else per.mean()
        grad = np.broadcast_to(self.w / 2.0, X.shape).copy()
        if reduce == "mean":
            grad = grad / X.shape[0]
        return float(loss), grad


def _element_grids(x0, epsilon, constraint, resolution):
    mag = abs(x0)
    phi = np.angle(x0)
    if constraint == "ball":
        nr = max(2, resolution // 4)
        radii = epsilon * np.arange(nr + 1) / nr
        angles = -np.pi + 2 * np.pi * np.arange(resolution) / resolution
        return (x0 + radii[:, None] * np.exp(1j * angles[None, :])).reshape(-1)
    if constraint == "circle":
        if 2 * mag <= epsilon:
            angles = phi + 2 * np.pi * np.arange(resolution) / resolution
        else:
            theta = 2.0 * np.arcsin(min(1.0, epsilon / (2 * mag)))
            angles = phi + theta * (2 * np.arange(resolution + 1) / resolution - 1.0)
        return mag * np.exp(1j * angles)
    if constraint == "ray":
        lo = max(0.0, mag - epsilon)
        hi = mag + epsilon
        mags = lo + (hi - lo) * np.arange(resolution + 1) / resolution
        return mags * np.exp(1j * phi)
    raise ValueError(f"unknown constraint {constraint!r}, expected one of {CONSTRAINTS}")


def grid_search_attack(model, X, Y, epsilon, constraint="ball", resolution=64):
    """Exhaustive grid over the feasible set of a 1- or 2-element input.

    Grids are nested under resolution doubling, so the best loss is
    non-decreasing as the resolution doubles. Returns (best input array,
    best loss).
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim < 1 or X.shape[0] != 1:
        raise ValueError("grid search expects a single-sample batch")
    inner = X.shape[1:]
    flat = X.reshape(-1)
    if flat.size > 2:
        raise ValueError("grid search supports at most 2 complex elements")
    grids = [_element_grids(z, epsilon, constraint, resolution) for z in flat]
    if len(grids) == 1:
        candidates = grids[0][:, None]
    else:
        a, b = np.meshgrid(grids[0], grids[1], indexing="ij")
        candidates = np.stack([a.reshape(-1), b.reshape(-1)], axis=1)

    best_loss = -np.inf
    best = None
    y = np.asarray(Y) if Y is not None else None
    for start in range(0, candidates.shape[0], 65536):
        chunk = candidates[start : start + 65536]
        Z = chunk.reshape((chunk.shape[0],) + inner)
        yy = np.repeat(y, chunk.shape[0]) if y is not None else None
        losses = model.per_sample_loss(Z, yy)
        j = int(losses.argmax())
        if losses[j] > best_loss:
            best_loss = float(losses[j])
            best = Z[j : j + 1].copy()
    return best, best_loss


def check_linear_optimality(trials=1000, seed=0, resolution=512):
    """Single-step attacks on random 1-pixel linear objectives versus grid search.

    Sampled in the restricted regime (epsilon well below 2|X|), where both
    the ball-constrained sign step and the banded phase rotation are
    near-optimal by construction. A trial passes when the attack reaches
    99 percent of the grid optimum (or matches it to within 1e-9 absolute,
    which covers optima that sit at zero or below).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    violations = 0
    worst = 0.0
    for t in range(trials):
        rng = rng_for(seed, "optimality", t)
        w = rng.uniform(0.3, 2.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
        x0 = rng.uniform(0.3, 2.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
        epsilon = abs(x0) * rng.uniform(0.02, 0.1)
        probe = LinearProbe(np.array([w]))
        X = np.array([[x0]])
        scale = abs(w) * (abs(x0) + epsilon)

        cfg = AttackConfig.for_family("cfgsm", epsilon)
        z = run_gradient_attack(probe, X, None, cfg)
        got = float(probe.per_sample_loss(z)[0])
        _, best = grid_search_attack(probe, X, None, epsilon, "ball", resolution)
        gap = best - got
        worst = max(worst, gap / scale)
        if got < 0.99 * best and gap > 1e-9 * scale:
            violations += 1

        cfg = AttackConfig.for_family("cfgsm", epsilon)  # pfgsm shares the parameters
        z = run_phase_attack(probe, X, None, cfg)
        got = float(probe.per_sample_loss(z)[0])
        _, best = grid_search_attack(probe, X, None, epsilon, "circle", resolution)
        gap = best - got
        worst = max(worst, gap / scale)
        if got < 0.99 * best and gap > 1e-9 * scale:
            violations += 1
    return OracleReport("optimality", 2 * trials, worst, worst, violations)


def check_inward_crossing(trials=100000, seed=0):
    """Property check of the closed-form circle crossing: for random inward
    gradients, alpha > 0 and |X + alpha * exp(i*phase(g))| = |X| to 1e-9."""
    rng = rng_for(seed, "inward")
    mag = rng.uniform(0.05, 3.0, trials)
    phi = rng.uniform(-np.pi, np.pi, trials)
    X = mag * np.exp(1j * phi)
    # inward means the angle between g and X lies in (pi/2, 3pi/2)
    rel = rng.uniform(np.pi / 2 + 1e-6, 3 * np.pi / 2 - 1e-6, trials)
    g = rng.uniform(0.01, 5.0, trials) * np.exp(1j * (phi + rel))
    from .attacks_phase import inward_crossing_alpha

    alpha = inward_crossing_alpha(X, g)
    Z = X + alpha * np.exp(1j * np.angle(g))
    err = np.abs(np.abs(Z) - np.abs(X))
    violations = int((alpha <= 0).sum() + (err >= 1e-9).sum())
    return OracleReport("inward", trials, float(err.max()), 0.0, violations)


def feasibility_stats(X, Z):
    """Constraint diagnostics for an attacked batch against its source."""
    X = np.asarray(X)
    Z = np.asarray(Z)
    d = np.abs(Z - X)
    mag_dev = np.abs(np.abs(Z) - np.abs(X))
    nz = np.abs(Z) > 0
    phase_dev = np.zeros_like(mag_dev)
    phase_dev[nz] = np.abs(wrap_angle(np.angle(Z[nz]) - np.angle(X[nz])))
    return {
        "pixels": int(X.size),
        "max_linf": float(d.max()),
        "max_mag_dev": float(mag_dev.max()),
        "max_phase_dev": float(phase_dev.max()) if nz.any() else 0.0,
    }
