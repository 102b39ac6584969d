"""Command-line entry point: dataset generation, training, robustness
sweeps, and oracle verification.

Every command writes a JSON run manifest next to its outputs (command,
resolved configuration, seeds, toolkit version, input/output paths,
wall-clock seconds), so any artifact can be reproduced from its manifest
alone. Exit codes: 0 success, 1 runtime/check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, data, harness, models, verify
from ._seeding import rng_for


def _write_manifest(path, command, config, seed, inputs, outputs, wall_clock):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "toolkit_version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": wall_clock,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_ints(text):
    return tuple(int(t) for t in text.split(","))


def _parse_floats(text):
    return tuple(float(t) for t in text.split(","))


def cmd_gen(args):
    t0 = time.monotonic()
    cfg = data.DatasetConfig(
        classes=args.classes,
        samples_per_class=args.per_class,
        image_shape=_parse_ints(args.shape),
        information=args.info,
        noise=args.noise,
        seed=args.seed,
        magnitude_low=args.mag_low,
        magnitude_high=args.mag_high,
    )
    try:
        train_b, test_b = data.generate_synthetic(cfg)
    except data.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    test_path = out.with_suffix(".test" + out.suffix) if out.suffix else Path(str(out) + ".test")
    data.save_dataset(out, train_b)
    data.save_dataset(test_path, test_b)
    _write_manifest(
        str(out) + ".manifest.json",
        "gen",
        asdict(cfg),
        args.seed,
        [],
        [out, test_path],
        time.monotonic() - t0,
    )
    print(f"wrote {out} ({len(train_b)} samples) and {test_path} ({len(test_b)} samples)")
    return 0


def cmd_train(args):
    t0 = time.monotonic()
    try:
        train_b = data.load_dataset(args.data)
    except (OSError, data.DatasetFormatError) as exc:
        print(f"error: cannot read {args.data}: {exc}", file=sys.stderr)
        return 1
    classes = int(train_b.labels.max()) + 1 if len(train_b) else 2
    mc = models.ModelConfig(
        kind=args.model,
        input_shape=train_b.images.shape[1:],
        hidden_widths=_parse_ints(args.widths),
        conv_stages=args.conv_stages,
        classes=classes,
        seed=int(rng_for(args.seed, "model", args.model).integers(2**63)),
        encoding=args.encoding,
        input_gain=args.input_gain,
    )
    adv_cfg = None
    if args.adv_eps is not None:
        from .attacks_gradient import AttackConfig

        adv_cfg = AttackConfig.for_family("cifgsm", args.adv_eps, steps=args.adv_steps)
    tc = harness.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        optimizer=args.optimizer,
        adversarial=adv_cfg,
        seed=int(rng_for(args.seed, "train").integers(2**63)),
    )
    try:
        model = models.build_model(mc)
        _, history = harness.train(model, train_b, tc)
    except (models.ConfigError, harness.TrainingDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    models.save_model(args.out, model)
    config = {
        "model": asdict(mc),
        "train": {**asdict(tc), "adversarial": None if adv_cfg is None else asdict(adv_cfg)},
        "final_loss": history[-1] if history else None,
    }
    _write_manifest(
        str(args.out) + ".manifest.json",
        "train",
        config,
        args.seed,
        [args.data],
        [args.out],
        time.monotonic() - t0,
    )
    acc = model.accuracy(train_b.images, train_b.labels)
    print(f"wrote {args.out} (train accuracy {acc:.3f})")
    return 0


def cmd_sweep(args):
    t0 = time.monotonic()
    try:
        model = models.load_model(args.model)
        test_b = data.load_dataset(args.data)
    except (OSError, data.DatasetFormatError, models.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    model_id = Path(args.model).stem
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = _parse_floats(args.eps_grid)
    curves = []
    try:
        for attack in args.attacks.split(","):
            curves.append(
                harness.evaluate_robustness(
                    model,
                    test_b,
                    attack,
                    grid,
                    model_id=model_id,
                    seed=args.seed,
                    steps=args.steps,
                    beta=args.beta,
                )
            )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    csv_path = out / "results.csv"
    svg_path = out / f"robustness_{model_id}.svg"
    harness.write_curves_csv(csv_path, curves, args.seed)
    harness.plot_curves_svg(svg_path, curves, model_id)
    print(harness.compare_curves(curves).to_text())
    _write_manifest(
        out / "manifest.json",
        "sweep",
        {
            "attacks": args.attacks.split(","),
            "eps_grid": list(grid),
            "steps": args.steps,
            "beta": args.beta,
            "model_id": model_id,
        },
        args.seed,
        [args.model, args.data],
        [csv_path, svg_path],
        time.monotonic() - t0,
    )
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_verify(args):
    reports = []
    if args.suite == "gradients":
        reports.append(verify.check_gradients(trials=args.trials, seed=args.seed))
    elif args.suite == "sets":
        for eps in _parse_floats(args.epsilons):
            reports.append(verify.check_set_equivalence(eps, args.trials, seed=args.seed))
    else:
        reports.append(verify.check_linear_optimality(trials=args.trials, seed=args.seed))
        reports.append(verify.check_inward_crossing(trials=args.trials, seed=args.seed))
    for rep in reports:
        if args.json:
            print(json.dumps(asdict(rep), sort_keys=True))
        else:
            print(rep.line())
    return 0 if all(r.passed for r in reports) else 1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cvak",
        description="Adversarial attacks on complex-valued inputs: data, training, sweeps, verification.",
    )
    parser.add_argument("--version", action="version", version=f"cvak {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset (train + .test sibling)")
    p.add_argument("--classes", type=_positive_int, default=3)
    p.add_argument("--per-class", type=_positive_int, default=150)
    p.add_argument("--shape", default="1,8,8", help="channels,height,width")
    p.add_argument("--info", choices=data.INFORMATION_CHANNELS, default="phase")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--mag-low", type=float, default=1.0)
    p.add_argument("--mag-high", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--model", choices=models.KINDS, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--widths", default="12,12,48")
    p.add_argument("--conv-stages", type=int, default=2)
    p.add_argument("--encoding", choices=models.ENCODINGS, default="reim")
    p.add_argument("--input-gain", type=float, default=1.0)
    p.add_argument("--adv-eps", type=float, default=None, help="enable adversarial training at this bound")
    p.add_argument("--adv-steps", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="robustness sweep: CSV + SVG per model")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="test dataset path")
    p.add_argument("--attacks", default=",".join(harness.ATTACK_NAMES))
    p.add_argument("--eps-grid", default=",".join(f"{e:g}" for e in harness.DEFAULT_EPS_GRID))
    p.add_argument("--steps", type=_positive_int, default=10)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run an independent oracle suite")
    p.add_argument("--suite", choices=("gradients", "sets", "optimality"), required=True)
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--epsilons", default="0.01,0.7,2.5", help="epsilon list for the sets suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="one JSON line per sub-check")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep":
        valid = set(harness.ATTACK_NAMES)
        unknown = [a for a in args.attacks.split(",") if a not in valid]
        if unknown:
            parser.error(
                f"unknown attack(s) {', '.join(unknown)}; valid: {', '.join(harness.ATTACK_NAMES)}"
            )
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
