"""Command-line surface: data generation, training, probing, theory checks.

Every command writes a ``resolved-config.json`` from which the run can be
reproduced exactly, plus delimited outputs (CSV/JSONL/JSON) and, unless
disabled, rendered figures next to them. Exit codes: 0 success, 1 runtime
failure, 2 usage/config error.
"""

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation, figures, theory
from . import model as model_mod
from . import train as train_mod
from .errors import ConfigError, DietLabError, TrainingDivergedError


def _from_dict(cls, payload: dict):
    """Build a config dataclass, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _write_resolved(cfg, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dataclasses.asdict(cfg)
    (out_dir / "resolved-config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class GenDataConfig:
    command: str = "gen-data"
    classes: int = 8
    per_class: int = 125
    test_per_class: int = 125
    dim: int = 32
    spread: float = 0.1
    seed: int = 0
    centroid_scale: float = 0.5
    out: str = "data"

    def __post_init__(self):
        if self.command != "gen-data":
            raise ConfigError(f"config is for {self.command!r}, not gen-data")
        if self.classes < 1 or self.per_class < 1 or self.dim < 1:
            raise ConfigError("classes, per_class and dim must be >= 1")
        if self.spread < 0:
            raise ConfigError("spread must be >= 0")


def cmd_gen_data(cfg: GenDataConfig) -> int:
    out = Path(cfg.out)
    _write_resolved(cfg, out)
    train_ds = data_mod.gen_blobs(cfg.classes, cfg.per_class, cfg.dim, cfg.spread,
                                  cfg.seed, split="train",
                                  centroid_scale=cfg.centroid_scale)
    test_ds = data_mod.gen_blobs(cfg.classes, cfg.test_per_class, cfg.dim,
                                 cfg.spread, cfg.seed, split="test",
                                 centroid_scale=cfg.centroid_scale)
    data_mod.save_csv(out / "blobs.csv", train_ds)
    data_mod.save_csv(out / "blobs_test.csv", test_ds)
    manifest = dataclasses.asdict(cfg)
    manifest["files"] = {"train": "blobs.csv", "test": "blobs_test.csv"}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'blobs.csv'} ({len(train_ds)} samples), "
          f"{out / 'blobs_test.csv'} ({len(test_ds)} samples)")
    return 0


@dataclass
class TrainCliConfig:
    command: str = "train"
    data: str = ""
    data_labels: str = ""  # IDX label file, when data is an IDX image file
    test_data: str = ""
    test_data_labels: str = ""
    mode: str = "diet"
    backbone: str = "mlp:64"
    feature_dim: int = 4
    epochs: int = 200
    batch_size: int = 256
    lr: float = 0.001
    weight_decay: float = 0.05
    label_smoothing: float = -1.0  # -1 means mode default (0.8 diet, 0 supervised)
    warmup_epochs: int = 10
    seed: int = 0
    scale_lr_by_batch: bool = True
    augment_strength: int = 0
    crop_size: int = 0  # 0 keeps the input size (images only)
    out: str = "runs/run"
    render_figures: bool = True

    def __post_init__(self):
        if self.command != "train":
            raise ConfigError(f"config is for {self.command!r}, not train")
        if not self.data:
            raise ConfigError("--data is required")
        if self.mode not in ("diet", "supervised"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.augment_strength not in (0, 1, 2, 3):
            raise ConfigError("augment strength must be 0 (off), 1, 2 or 3")
        if self.label_smoothing == -1.0:
            self.label_smoothing = 0.8 if self.mode == "diet" else 0.0

    def resolved_smoothing(self) -> float:
        return self.label_smoothing


def _parse_backbone(spec: str, in_dim: int, feature_dim: int):
    if spec == "linear":
        return model_mod.init_backbone("linear", [in_dim, feature_dim])
    if spec.startswith("mlp:"):
        try:
            hidden = [int(h) for h in spec[4:].split(",") if h]
        except ValueError as exc:
            raise ConfigError(f"bad backbone spec {spec!r}") from exc
        if not hidden:
            raise ConfigError(f"bad backbone spec {spec!r}")
        return ("mlp", hidden)
    raise ConfigError(f"unknown backbone {spec!r} (use 'linear' or 'mlp:H1[,H2]')")


def _load_dataset(path: str, labels_path: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"dataset not found: {p}")
    if p.suffix == ".csv":
        return data_mod.load_csv(p)
    return data_mod.load_idx(p, labels_path or None)


def cmd_train(cfg: TrainCliConfig) -> int:
    out = Path(cfg.out)
    _write_resolved(cfg, out)
    ds = _load_dataset(cfg.data, cfg.data_labels)
    test_ds = None
    if cfg.test_data:
        test_ds = _load_dataset(cfg.test_data, cfg.test_data_labels)

    pipeline = None
    samples_are_images = ds.samples.ndim == 4
    if cfg.augment_strength > 0:
        if not samples_are_images:
            raise ConfigError("augmentation requires image (IDX) data")
        h, w = ds.samples.shape[2], ds.samples.shape[3]
        size = (cfg.crop_size or h, cfg.crop_size or w)
        from . import augment as augment_mod
        pipeline = augment_mod.build_pipeline(cfg.augment_strength, size)

    in_dim = ds.feature_dim
    parsed = _parse_backbone(cfg.backbone, in_dim, cfg.feature_dim)
    if isinstance(parsed, tuple):
        _, hidden = parsed
        backbone = model_mod.init_backbone(
            "mlp", [in_dim] + hidden + [cfg.feature_dim], seed=cfg.seed)
    else:
        backbone = model_mod.init_backbone(
            "linear", [in_dim, cfg.feature_dim], seed=cfg.seed)

    tcfg = train_mod.TrainConfig(
        lr=cfg.lr, weight_decay=cfg.weight_decay,
        label_smoothing=cfg.resolved_smoothing(),
        warmup_epochs=cfg.warmup_epochs, epochs=cfg.epochs,
        batch_size=cfg.batch_size, seed=cfg.seed,
        scale_lr_by_batch=cfg.scale_lr_by_batch)

    probe_fn = None
    if test_ds is not None and ds.labels is not None and test_ds.labels is not None:
        def probe_fn(mdl):
            tr = evaluation.extract_features(mdl, ds, "train")
            te = evaluation.extract_features(mdl, test_ds, "test")
            return evaluation.linear_probe(tr, te).test_acc

    try:
        if cfg.mode == "diet":
            mdl, metrics = train_mod.train_diet(ds, backbone, tcfg,
                                                pipeline=pipeline,
                                                probe_fn=probe_fn)
        else:
            mdl, metrics = train_mod.train_supervised(ds, backbone, tcfg,
                                                      pipeline=pipeline,
                                                      probe_fn=probe_fn)
    except TrainingDivergedError as exc:
        _write_train_outputs(exc.metrics or [], exc.model, cfg, out, diverged=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1

    _write_train_outputs(metrics, mdl, cfg, out)
    peak = (train_mod.scale_lr(cfg.lr, cfg.batch_size)
            if cfg.scale_lr_by_batch else cfg.lr)
    print(f"trained {cfg.mode} model for {cfg.epochs} epochs "
          f"(peak lr {peak:g}); outputs in {out}")
    return 0


def _write_train_outputs(metrics, mdl, cfg: TrainCliConfig, out: Path,
                         diverged: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w") as f:
        for r in metrics:
            f.write(json.dumps(r.to_jsonl_dict(), sort_keys=True) + "\n")
    with open(out / "timings.jsonl", "w") as f:
        for r in metrics:
            f.write(json.dumps({"epoch": r.epoch, "seconds": r.seconds}) + "\n")
    if mdl is not None:
        model_mod.save_checkpoint(out / "checkpoint", mdl, seed=cfg.seed)
    if cfg.render_figures and metrics:
        figures.save_training_curves(metrics, out / "training_curves.png")
        if sum(r.probe_acc is not None for r in metrics) >= 2:
            figures.save_loss_accuracy_scatter(metrics, out / "loss_vs_accuracy.png")
    if diverged:
        (out / "DIVERGED").write_text("training aborted on non-finite loss\n")


@dataclass
class ProbeCliConfig:
    command: str = "probe"
    checkpoint: str = ""
    train_data: str = ""
    train_data_labels: str = ""
    test_data: str = ""
    test_data_labels: str = ""
    probe_lr: float = 0.1
    probe_weight_decay: float = 1e-4
    probe_max_steps: int = 2000
    probe_grad_tol: float = 1e-6
    standardize: bool = True
    out: str = ""

    def __post_init__(self):
        if self.command != "probe":
            raise ConfigError(f"config is for {self.command!r}, not probe")
        for name in ("checkpoint", "train_data", "test_data"):
            if not getattr(self, name):
                raise ConfigError(f"--{name.replace('_', '-')} is required")


def cmd_probe(cfg: ProbeCliConfig) -> int:
    ckpt = Path(cfg.checkpoint)
    if not ckpt.with_suffix(".json").exists():
        raise ConfigError(f"checkpoint not found: {ckpt}.json")
    mdl, manifest = model_mod.load_checkpoint(ckpt)
    train_ds = _load_dataset(cfg.train_data, cfg.train_data_labels)
    test_ds = _load_dataset(cfg.test_data, cfg.test_data_labels)
    if train_ds.labels is None or test_ds.labels is None:
        raise ConfigError("probe datasets must carry labels")
    if train_ds.feature_dim != mdl.backbone.in_dim:
        raise ConfigError(
            f"dataset dimension {train_ds.feature_dim} does not match "
            f"checkpoint input width {mdl.backbone.in_dim}")
    pcfg = evaluation.ProbeConfig(
        lr=cfg.probe_lr, weight_decay=cfg.probe_weight_decay,
        max_steps=cfg.probe_max_steps, grad_tol=cfg.probe_grad_tol,
        standardize=cfg.standardize)
    tr = evaluation.extract_features(mdl, train_ds, "train")
    te = evaluation.extract_features(mdl, test_ds, "test")
    result = evaluation.linear_probe(tr, te, pcfg)
    report = {
        "checkpoint": str(ckpt),
        "backbone": {"kind": manifest["kind"], "widths": manifest["widths"]},
        "train_acc": result.train_acc,
        "test_acc": result.test_acc,
        "probe_steps": result.steps,
        "probe_grad_norm": result.grad_norm,
        "probe_config": dataclasses.asdict(pcfg),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if cfg.out:
        out = Path(cfg.out)
        _write_resolved(cfg, out)
        (out / "probe_report.json").write_text(text + "\n")
    return 0


@dataclass
class TheoryCliConfig:
    command: str = "theory"
    k: int = 4
    reps: int = 4
    dim: int = 8
    kappa: float = 400.0
    tol: float = 1e-6
    seed: int = 0
    demo_steps: int = 20000
    demo_lr: float = 0.01
    out: str = "theory-out"
    render_figures: bool = True

    def __post_init__(self):
        if self.command != "theory":
            raise ConfigError(f"config is for {self.command!r}, not theory")
        if self.k < 1 or self.reps < 1:
            raise ConfigError("k and reps must be >= 1")
        if self.dim < self.k:
            raise ConfigError("dim must be >= k for orthogonal centroids")
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")


def cmd_theory(cfg: TheoryCliConfig) -> int:
    out = Path(cfg.out)
    _write_resolved(cfg, out)
    spec = theory.orthogonal_clusters(cfg.k, cfg.reps, cfg.dim, seed=cfg.seed)
    report = theory.verify_optimality(spec, cfg.kappa, cfg.tol)

    x = theory.make_clustered_data(spec)
    optimal = report.optimal_loss
    v, w, losses = theory.fit_linear_diet(
        x, steps=cfg.demo_steps, lr=cfg.demo_lr, seed=cfg.seed,
        stop_gap=None, optimal_loss=optimal)
    demo = {
        "steps": int(losses.size),
        "final_loss": float(losses[-1]),
        "final_gap": float(abs(losses[-1] - optimal)),
        "reached_1e-5": bool(np.min(np.abs(losses - optimal)) < 1e-5),
    }

    payload = report.to_dict()
    payload["convergence_demo"] = demo
    (out / "theory_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with open(out / "loss_curve.csv", "w") as f:
        f.write("step,loss,optimal_loss\n")
        for i, val in enumerate(losses):
            f.write(f"{i},{val!r},{optimal!r}\n")

    if cfg.render_figures:
        figures.save_convergence_curve(losses, optimal, out / "convergence.png")
        sol = theory.closed_form_params(x, cfg.kappa)
        a_num = theory.a_matrix_numeric(x, sol.v, sol.w)
        figures.save_matrix_heatmap(a_num, out / "a_matrix.png",
                                    title="softmax residual at closed form")

    status = "pass" if report.passed else "FAIL"
    print(f"theory check [{status}]: grad norms ({report.grad_w_norm:.3e}, "
          f"{report.grad_v_norm:.3e}), A deviation {report.a_max_deviation:.3e}, "
          f"loss gap {report.loss_gap:.3e}; report in {out}")
    return 0


CONFIG_TYPES = {
    "gen-data": GenDataConfig,
    "train": TrainCliConfig,
    "probe": ProbeCliConfig,
    "theory": TheoryCliConfig,
}

COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "probe": cmd_probe,
    "theory": cmd_theory,
}


def _add_bool_flag(parser, name: str, default: bool, dest: str, help_on: str):
    group = parser.add_mutually_exclusive_group()
    group.add_argument(f"--{name}", dest=dest, action="store_true",
                       default=default, help=help_on)
    group.add_argument(f"--no-{name}", dest=dest, action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diet-lab",
        description="Index-target self-supervised training, linear probing, "
                    "and closed-form optimality checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a seeded blob dataset")
    g.add_argument("--config", help="JSON config replacing all other flags")
    g.add_argument("--classes", type=int, default=8)
    g.add_argument("--per-class", type=int, default=125)
    g.add_argument("--test-per-class", type=int, default=125)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--spread", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--centroid-scale", type=float, default=0.5)
    g.add_argument("-o", "--out", default="data")

    t = sub.add_parser("train", help="train an index-target or supervised model")
    t.add_argument("--config", help="JSON config replacing all other flags")
    t.add_argument("--data", default="")
    t.add_argument("--data-labels", default="")
    t.add_argument("--test-data", default="")
    t.add_argument("--test-data-labels", default="")
    t.add_argument("--mode", choices=("diet", "supervised"), default="diet")
    t.add_argument("--backbone", default="mlp:64")
    t.add_argument("--feature-dim", type=int, default=4)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--weight-decay", type=float, default=0.05)
    t.add_argument("--label-smoothing", type=float, default=-1.0,
                   help="-1 selects the mode default (0.8 diet, 0 supervised)")
    t.add_argument("--warmup-epochs", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    _add_bool_flag(t, "lr-scaling", True, "scale_lr_by_batch",
                   "scale lr by batch_size/256")
    t.add_argument("--augment-strength", type=int, default=0)
    t.add_argument("--crop-size", type=int, default=0)
    t.add_argument("-o", "--out", default="runs/run")
    _add_bool_flag(t, "figures", True, "render_figures", "render PNG figures")

    p = sub.add_parser("probe", help="linear-probe a saved checkpoint")
    p.add_argument("--config", help="JSON config replacing all other flags")
    p.add_argument("--checkpoint", default="")
    p.add_argument("--train-data", default="")
    p.add_argument("--train-data-labels", default="")
    p.add_argument("--test-data", default="")
    p.add_argument("--test-data-labels", default="")
    p.add_argument("--probe-lr", type=float, default=0.1)
    p.add_argument("--probe-weight-decay", type=float, default=1e-4)
    p.add_argument("--probe-max-steps", type=int, default=2000)
    p.add_argument("--probe-grad-tol", type=float, default=1e-6)
    _add_bool_flag(p, "standardize", True, "standardize",
                   "standardize features with train statistics")
    p.add_argument("-o", "--out", default="")

    th = sub.add_parser("theory", help="verify the closed-form optimality claims")
    th.add_argument("--config", help="JSON config replacing all other flags")
    th.add_argument("--k", type=int, default=4)
    th.add_argument("--reps", type=int, default=4)
    th.add_argument("--dim", type=int, default=8)
    th.add_argument("--kappa", type=float, default=400.0)
    th.add_argument("--tol", type=float, default=1e-6)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--demo-steps", type=int, default=20000)
    th.add_argument("--demo-lr", type=float, default=0.01)
    th.add_argument("-o", "--out", default="theory-out")
    _add_bool_flag(th, "figures", True, "render_figures", "render PNG figures")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    cls = CONFIG_TYPES[command]
    try:
        if getattr(args, "config", None):
            payload = json.loads(Path(args.config).read_text())
            cfg = _from_dict(cls, payload)
            if cfg.command != command:
                raise ConfigError(
                    f"config file is for {cfg.command!r}, not {command!r}")
        else:
            payload = {f.name: getattr(args, f.name)
                       for f in dataclasses.fields(cls)
                       if hasattr(args, f.name)}
            payload["command"] = command
            cfg = _from_dict(cls, payload)
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DietLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
