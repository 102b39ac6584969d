"""Training (clean and adversarial), epsilon-sweep robustness evaluation,
normalized curves, and the pinned desk-scale experiment protocol.

Scores are classification accuracy; each curve is normalized by the model's
clean accuracy so every curve starts at exactly 1.0. Sweep results are
written as CSV (`model,attack,epsilon,raw_score,normalized_score,seed`,
floats with 17 significant digits) and are byte-identical across reruns
with the same seeds.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from ._seeding import rng_for, thread_count
from .attacks_gradient import AttackConfig, run_gradient_attack
from .attacks_phase import (
    MAGNITUDE_FAMILIES,
    PHASE_FAMILIES,
    run_magnitude_attack,
    run_phase_attack,
)
from .data import DatasetConfig, LabeledBatch, generate_synthetic
from .models import Model, ModelConfig, build_model
from .verify import feasibility_stats

GRADIENT_FAMILIES = ("cfgsm", "cffgsm", "cifgsm", "cmifgsm")
ATTACK_NAMES = GRADIENT_FAMILIES + PHASE_FAMILIES + MAGNITUDE_FAMILIES

DEFAULT_EPS_GRID = (0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2)

CSV_HEADER = ("model", "attack", "epsilon", "raw_score", "normalized_score", "seed")


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"  # adam | sgd
    adversarial: AttackConfig | None = None
    seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ValueError("lr must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be adam or sgd")
        if self.adversarial is not None:
            self.adversarial.validate()


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros(p.shape) for p in params]
        self.w = [np.zeros(p.shape) for p in params]

    def step(self, params, grads):
        # grads pack dL/d(re) + 1j*dL/d(im); Adam runs per real component
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g.real**2
            self.w[i] = self.b2 * self.w[i] + (1 - self.b2) * g.imag**2
            mh = self.m[i] / c1
            upd = mh.real / (np.sqrt(self.v[i] / c2) + self.eps) + 1j * (
                mh.imag / (np.sqrt(self.w[i] / c2) + self.eps)
            )
            p -= self.lr * upd


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(model: Model, data: LabeledBatch, cfg: TrainConfig):
    """Train in place; returns (model, per-epoch mean loss history).

    With ``cfg.adversarial`` set, every batch is replaced by its attacked
    version before the parameter step.
    """
    cfg.validate()
    n = len(data)
    opt_cls = _Adam if cfg.optimizer == "adam" else _SGD
    opt = opt_cls(model.params, cfg.lr)
    shuffle_rng = rng_for(cfg.seed, "shuffle")
    history = []
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            Xb = data.images[idx]
            Yb = data.labels[idx]
            if cfg.adversarial is not None:
                Xb = run_gradient_attack(
                    model, Xb, Yb, cfg.adversarial, rng_for(cfg.seed, "advstart", epoch, bi)
                )
            leaves = model.param_leaves()
            x = ad.CTensor(Xb)
            try:
                loss = ad.cross_entropy(model._logits_node(x, leaves), Yb, reduce="mean")
            except ad.NumericsError as exc:
                raise TrainingDiverged(f"epoch {epoch} batch {bi}: {exc}") from exc
            value = float(loss.value.real)
            if not np.isfinite(value):
                raise TrainingDiverged(f"epoch {epoch} batch {bi}: loss={value}")
            comps = ad.backward_components(loss, leaves)
            grads = [comps[leaf] for leaf in leaves]
            for g, real in zip(grads, model.param_real):
                if real:
                    g.imag = 0.0
            opt.step(model.params, grads)
            for p, real in zip(model.params, model.param_real):
                if real:
                    p.imag = 0.0
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
    return model, history


# ---------------------------------------------------------------------------
# attacks by name

def attack_kind(name):
    if name in GRADIENT_FAMILIES:
        return "gradient"
    if name in PHASE_FAMILIES:
        return "phase"
    if name in MAGNITUDE_FAMILIES:
        return "magnitude"
    raise ValueError(f"unknown attack {name!r}; valid: {', '.join(ATTACK_NAMES)}")


def _base_family(name):
    kind = attack_kind(name)
    if kind == "gradient":
        return name
    if kind == "phase":
        return "c" + name[1:]
    return "c" + name.replace("-mag", "")


def run_attack(name, model, X, Y, epsilon, rng=None, steps=10, beta=0.9):
    """Dispatch one named attack at the given budget."""
    kind = attack_kind(name)
    cfg = AttackConfig.for_family(_base_family(name), epsilon, steps=steps, beta=beta)
    if kind == "gradient":
        return run_gradient_attack(model, X, Y, cfg, rng)
    if kind == "phase":
        return run_phase_attack(model, X, Y, cfg, rng)
    return run_magnitude_attack(model, X, Y, cfg, rng)


@dataclass
class RobustnessCurve:
    model_id: str
    attack: str
    epsilons: tuple
    raw: tuple
    normalized: tuple
    feasibility: dict = field(default_factory=dict)

    @property
    def points(self):
        return list(zip(self.epsilons, self.raw, self.normalized))


def evaluate_robustness(
    model, test: LabeledBatch, attack, eps_grid, model_id="model", seed=0, steps=10, beta=0.9
):
    """Accuracy of the attacked test set over the epsilon grid.

    The epsilon = 0 entry is the clean accuracy and normalizes the curve.
    Also aggregates feasibility diagnostics (worst-case L-infinity excess,
    magnitude deviation, phase deviation) over all attacked pixels.
    """
    attack_kind(attack)
    clean = model.accuracy(test.images, test.labels)
    if clean <= 0:
        raise ValueError("clean accuracy must be positive to normalize a curve")
    eps_grid = tuple(float(e) for e in eps_grid)

    def run_one(eps):
        if eps == 0.0:
            return clean, None
        rng = rng_for(seed, "attack", model_id, attack, f"{eps:.17g}")
        Z = run_attack(attack, model, test.images, test.labels, eps, rng, steps=steps, beta=beta)
        stats = feasibility_stats(test.images, Z)
        stats["epsilon"] = eps
        return model.accuracy(Z, test.labels), stats

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        results = list(pool.map(run_one, eps_grid))

    raw = tuple(acc for acc, _ in results)
    normalized = tuple(acc / clean for acc in raw)
    feas = {
        "pixels": sum(s["pixels"] for _, s in results if s),
        "max_linf_excess": max((s["max_linf"] - s["epsilon"] for _, s in results if s), default=0.0),
        "max_mag_dev": max((s["max_mag_dev"] for _, s in results if s), default=0.0),
        "max_phase_dev": max((s["max_phase_dev"] for _, s in results if s), default=0.0),
    }
    return RobustnessCurve(model_id, attack, eps_grid, raw, normalized, feas)


@dataclass
class CurveComparison:
    epsilons: tuple
    ranking: list  # per epsilon: [(label, normalized)] sorted best first
    lines: list

    def to_text(self):
        out = []
        for eps, ranked in zip(self.epsilons, self.ranking):
            row = ", ".join(f"{label}={score:.3f}" for label, score in ranked)
            out.append(f"eps={eps:g}: {row}")
        out.extend(self.lines)
        return "\n".join(out)


def compare_curves(curves):
    """Rank attacks per epsilon and summarize the three standard contrasts:
    rvnn vs cvnn, phase vs unrestricted vs magnitude, adversarially trained
    vs clean."""
    if not curves:
        raise ValueError("no curves to compare")
    grid = curves[0].epsilons
    for c in curves:
        if c.epsilons != grid:
            raise ValueError(f"mismatched epsilon grids: {c.epsilons} vs {grid}")
    ranking = []
    for i, _ in enumerate(grid):
        scored = sorted(
            ((f"{c.model_id}:{c.attack}", c.normalized[i]) for c in curves),
            key=lambda t: (-t[1], t[0]),
        )
        ranking.append(scored)

    lines = []

    def mean_over(pred):
        vals = [np.mean(c.normalized[1:]) for c in curves if pred(c)]
        return float(np.mean(vals)) if vals else None

    by_kind = {
        "rvnn": mean_over(lambda c: c.model_id.startswith("rvnn")),
        "cvnn": mean_over(lambda c: c.model_id.startswith("cvnn")),
    }
    if None not in by_kind.values():
        hi = max(by_kind, key=by_kind.get)
        lines.append(
            "model robustness (mean normalized score under attack): "
            f"cvnn={by_kind['cvnn']:.3f} rvnn={by_kind['rvnn']:.3f} -> {hi} more robust"
        )
    by_attack = {
        "unrestricted": mean_over(lambda c: attack_kind(c.attack) == "gradient"),
        "phase": mean_over(lambda c: attack_kind(c.attack) == "phase"),
        "magnitude": mean_over(lambda c: attack_kind(c.attack) == "magnitude"),
    }
    present = {k: v for k, v in by_attack.items() if v is not None}
    if len(present) > 1:
        order = sorted(present, key=present.get)
        lines.append(
            "attack strength (lower score = stronger): "
            + " ".join(f"{k}={present[k]:.3f}" for k in present)
            + f" -> strongest: {order[0]}"
        )
    adv = mean_over(lambda c: c.model_id.endswith("-adv"))
    clean = mean_over(lambda c: c.model_id.endswith("-clean"))
    if adv is not None and clean is not None:
        lines.append(
            f"adversarial training: mean normalized score {clean:.3f} -> {adv:.3f} "
            f"({'helps' if adv > clean else 'does not help'})"
        )
    return CurveComparison(grid, ranking, lines)


# ---------------------------------------------------------------------------
# CSV / SVG output

def _fmt(x):
    return format(float(x), ".17g")


def curves_to_csv(curves, seed):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in sorted(curves, key=lambda c: (c.model_id, c.attack)):
        for eps, raw, norm in c.points:
            writer.writerow([c.model_id, c.attack, _fmt(eps), _fmt(raw), _fmt(norm), seed])
    return buf.getvalue()


def write_curves_csv(path, curves, seed):
    text = curves_to_csv(curves, seed)
    with open(path, "w", newline="") as f:
        f.write(text)
    return text


def plot_curves_svg(path, curves, title):
    """One line per attack, normalized score against epsilon on a log axis.

    The epsilon = 0 point is drawn one decade below the smallest nonzero
    epsilon and ticked as 0.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axis = plt.subplots(figsize=(7, 4.5))
    nonzero = sorted({e for c in curves for e in c.epsilons if e > 0})
    zero_pos = nonzero[0] / 10 if nonzero else 1e-5
    for c in sorted(curves, key=lambda c: c.attack):
        xs = [zero_pos if e == 0 else e for e in c.epsilons]
        axis.plot(xs, c.normalized, marker="o", markersize=3, linewidth=1.2, label=c.attack)
    axis.set_xscale("log")
    ticks = [zero_pos] + nonzero
    axis.set_xticks(ticks)
    axis.set_xticklabels(["0"] + [f"{e:g}" for e in nonzero], rotation=45, fontsize=8)
    axis.set_xlabel("epsilon")
    axis.set_ylabel("normalized accuracy")
    axis.set_title(title)
    axis.grid(True, alpha=0.3)
    axis.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# desk-scale experiment protocol (pinned)

@dataclass(frozen=True)
class DeskProtocol:
    """Pinned configuration reproducing the qualitative robustness contrasts
    on synthetic phase-informative data at desk scale."""

    seed: int = 11
    dataset: DatasetConfig = field(
        default_factory=lambda: DatasetConfig(
            classes=3,
            samples_per_class=150,
            image_shape=(1, 8, 8),
            information="phase",
            noise=3e-6,
            seed=11,
            magnitude_low=3e-2,
            magnitude_high=1e-1,
            fine_fraction=0.3,
            fine_magnitude=3.5e-5,
            fine_presence=0.8,
            fine_blackout=0.12,
            coarse_jitter=0.6,
        )
    )
    hidden_widths: tuple = (10, 10, 48)
    conv_stages: int = 2
    input_gain: float = 1.0
    input_norm: float = 1e-5
    epochs: int = 12
    batch_size: int = 60
    lr: float = 3e-3
    adv_epsilon: float = 5e-3
    adv_steps: int = 5
    eps_grid: tuple = DEFAULT_EPS_GRID
    attacks: tuple = ATTACK_NAMES
    attack_steps: int = 10
    beta: float = 0.9


@dataclass
class DeskResults:
    protocol: DeskProtocol
    train_data: LabeledBatch
    test_data: LabeledBatch
    models: dict
    curves: list
    clean_accuracy: dict

    def curve(self, model_id, attack):
        for c in self.curves:
            if c.model_id == model_id and c.attack == attack:
                return c
        raise KeyError((model_id, attack))


def desk_models(protocol: DeskProtocol, train_data: LabeledBatch):
    """Train the four models of the protocol: {cvnn, rvnn} x {clean, adv}."""
    trained = {}
    for kind in ("cvnn", "rvnn"):
        mc = ModelConfig(
            kind=kind,
            input_shape=protocol.dataset.image_shape,
            hidden_widths=protocol.hidden_widths,
            conv_stages=protocol.conv_stages,
            classes=protocol.dataset.classes,
            seed=int(rng_for(protocol.seed, "model", kind).integers(2**63)),
            input_gain=protocol.input_gain,
            input_norm=protocol.input_norm,
        )
        for regime in ("clean", "adv"):
            model = build_model(mc)
            adv_cfg = None
            if regime == "adv":
                adv_cfg = AttackConfig.for_family(
                    "cifgsm", protocol.adv_epsilon, steps=protocol.adv_steps
                )
            tc = TrainConfig(
                epochs=protocol.epochs,
                batch_size=protocol.batch_size,
                lr=protocol.lr,
                optimizer="adam",
                adversarial=adv_cfg,
                seed=int(rng_for(protocol.seed, "train", kind, regime).integers(2**63)),
            )
            train(model, train_data, tc)
            trained[f"{kind}-{regime}"] = model
    return trained


def desk_sweep(protocol: DeskProtocol, trained, test_data: LabeledBatch):
    curves = []
    for model_id, model in trained.items():
        for attack in protocol.attacks:
            curves.append(
                evaluate_robustness(
                    model,
                    test_data,
                    attack,
                    protocol.eps_grid,
                    model_id=model_id,
                    seed=protocol.seed,
                    steps=protocol.attack_steps,
                    beta=protocol.beta,
                )
            )
    return curves


def desk_experiment(protocol: DeskProtocol | None = None, out_dir=None) -> DeskResults:
    """Full pinned pipeline: data, four trained models, all-attack sweep."""
    protocol = protocol or DeskProtocol()
    train_data, test_data = generate_synthetic(protocol.dataset)
    trained = desk_models(protocol, train_data)
    curves = desk_sweep(protocol, trained, test_data)
    clean = {mid: m.accuracy(test_data.images, test_data.labels) for mid, m in trained.items()}
    results = DeskResults(protocol, train_data, test_data, trained, curves, clean)
    if out_dir is not None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_curves_csv(out / "results.csv", curves, protocol.seed)
        for model_id in trained:
            model_curves = [c for c in curves if c.model_id == model_id]
            plot_curves_svg(out / f"robustness_{model_id}.svg", model_curves, model_id)
    return results
