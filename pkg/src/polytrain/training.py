"""Training loop, run configuration and per-epoch reporting."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import data as datamod
from .errors import ParameterError
from .layers import Model, Tag, build_mlp, save_checkpoint
from .losses import boundary_loss, cross_entropy
from .numeric import RNG_ALGORITHM, SeededRng
from .optim import (
    AdamW,
    MilestoneScheduler,
    PlateauScheduler,
    clip_all,
    global_norm,
    make_groups,
    selective_clip,
)
from .polyfit import fit_activation

CLIP_MODES = ("selective", "all", "none")
DIVERGENCE_THRESHOLD = 1e6


def _default_dataset():
    return {"kind": "blobs", "n": 2000, "classes": 4, "scale": 1.0, "dim": 10, "separation": 6.0}


@dataclass
class TrainingConfig:
    # model
    hidden: list = field(default_factory=lambda: [32, 32, 32])
    activation: str = "poly"
    degree: int = 2
    bound: float = 12.0
    alpha: float = 1.0
    fit_target: str = "relu"
    fit_samples: int = 200
    scaled_coeffs: bool = True
    batchnorm: bool = True
    bn_position: str = "pre"
    dropout: float = 0.0
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    # objective and clipping
    boundary_loss: bool = True
    lam: float = 1000.0
    clip_mode: str = "selective"
    clip: float = 1.0
    # optimizer and schedule
    lr: float = 1e-3
    poly_lr_ratio: float = 0.1
    weight_decay: float = 0.01
    betas: list = field(default_factory=lambda: [0.9, 0.999])
    adam_eps: float = 1e-8
    scheduler: str = "plateau"
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    plateau_min_delta: float = 1e-4
    min_lr: float = 1e-6
    milestones: list = field(default_factory=list)
    # loop
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    divergence_threshold: float = DIVERGENCE_THRESHOLD
    # ablation success criterion
    success_floor: float | None = None
    floor_ratio: float = 0.8
    dataset: dict = field(default_factory=_default_dataset)

    def __post_init__(self):
        if self.clip_mode not in CLIP_MODES:
            raise ParameterError(f"clip_mode must be one of {CLIP_MODES}, got {self.clip_mode!r}")
        if self.activation not in ("poly", "relu"):
            raise ParameterError(f"activation must be 'poly' or 'relu', got {self.activation!r}")
        if self.scheduler not in ("plateau", "milestone", "none"):
            raise ParameterError(f"unknown scheduler {self.scheduler!r}")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be at least 2")
        if self.lam < 0:
            raise ParameterError("lam must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainingConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_arm(self, boundary: bool, clip_mode: str) -> "TrainingConfig":
        return replace(self, boundary_loss=boundary, clip_mode=clip_mode)

    def relu_reference(self) -> "TrainingConfig":
        """Same network and schedule with ReLU and none of the PNN-specific machinery."""
        return replace(self, activation="relu", boundary_loss=False, clip_mode="none")


def detect_divergence(losses, preactivations=(), params=None, threshold=DIVERGENCE_THRESHOLD) -> bool:
    """True if any loss or parameter is non-finite, or any |preactivation| exceeds ``threshold``."""
    for v in np.atleast_1d(np.asarray(losses, dtype=np.float64)):
        if not math.isfinite(v):
            return True
    for p in preactivations:
        p = np.asarray(p)
        if p.size and not np.all(np.abs(p) <= threshold):
            return True
    if params is not None:
        for p in params.values():
            if not np.all(np.isfinite(p.value)):
                return True
    return False


def build_model(config: TrainingConfig, in_features: int, n_classes: int, rng: SeededRng) -> Model:
    poly = None
    if config.activation == "poly":
        poly = fit_activation(config.fit_target, config.degree, config.bound, config.alpha, config.fit_samples)
    return build_mlp(
        in_features,
        config.hidden,
        n_classes,
        rng,
        activation=config.activation,
        poly=poly,
        batchnorm=config.batchnorm,
        dropout=config.dropout,
        bn_eps=config.bn_eps,
        bn_momentum=config.bn_momentum,
        scaled_coeffs=config.scaled_coeffs,
        bn_position=config.bn_position,
    )


def load_dataset(source: dict, seed: int) -> datamod.Splits:
    source = dict(source)
    kind = source.pop("kind")
    data_seed = source.pop("seed", None)
    data_seed = seed if data_seed is None else data_seed
    if kind in ("blobs", "rings"):
        return datamod.synth_dataset(kind, seed=data_seed, **source)
    if kind == "csv":
        label = source.get("label_column", "label")
        train = datamod.load_csv(source["train"], label)
        test = datamod.load_csv(source["test"], label) if "test" in source else None
        if "val" in source:
            val = datamod.load_csv(source["val"], label)
            return datamod.Splits(train, val, test if test is not None else val)
        if test is None:
            return datamod.split(train, SeededRng(data_seed))
        parts = datamod.split(train, SeededRng(data_seed), val_frac=0.15, test_frac=0.0)
        return datamod.Splits(parts.train, parts.val, test)
    if kind == "ucihar":
        return datamod.load_ucihar(source["root"], SeededRng(data_seed))
    if kind == "idx":
        train = datamod.load_idx(source["train_images"], source["train_labels"])
        test = datamod.load_idx(source["test_images"], source["test_labels"])
        parts = datamod.split(train, SeededRng(data_seed), val_frac=0.15, test_frac=0.0)
        return datamod.Splits(parts.train, parts.val, test)
    raise ParameterError(f"unknown dataset kind {kind!r}")


def evaluate(model: Model, ds: datamod.Dataset, config: TrainingConfig | None = None):
    """Eval-mode CE loss, accuracy, and (if ``config`` is given) boundary terms and preactivations."""
    logits, pre = model.forward(ds.x, "eval")
    if not np.all(np.isfinite(logits)):
        return math.nan, float(np.mean(np.argmax(np.nan_to_num(logits), 1) == ds.y)), [], pre
    ce, _ = cross_entropy(logits, ds.y)
    acc = float(np.mean(np.argmax(logits, axis=1) == ds.y))
    bnd = []
    if config is not None and config.activation == "poly":
        bnd = [boundary_loss(p, config.bound, config.alpha)[0] for p in pre]
    return ce, acc, bnd, pre


def _batches(order, size):
    chunks = [order[i : i + size] for i in range(0, len(order), size)]
    # batchnorm cannot train on a single sample
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


@dataclass
class RunReport:
    config: dict
    epochs: list = field(default_factory=list)
    diverged: bool = False
    divergence_epoch: int | None = None
    final_val_accuracy: float | None = None
    test_accuracy: float | None = None
    n_activation_layers: int = 0
    rng: str = RNG_ALGORITHM
    optimizer: dict = field(default_factory=dict)

    def csv_header(self):
        pre = [f"max_abs_preact_l{i + 1}" for i in range(self.n_activation_layers)]
        return [
            "epoch",
            "train_total_loss",
            "train_ce_loss",
            "train_boundary_loss_weighted",
            "val_loss",
            "val_accuracy",
            "lr",
            "grad_norm_preclip",
            *pre,
            "diverged",
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        for row in self.epochs:
            w.writerow(
                [row["epoch"]]
                + [repr(float(row[k])) for k in self.csv_header()[1:-1] if not k.startswith("max_abs")]
                + [repr(float(v)) for v in row["max_abs_preact"]]
                + [int(row["diverged"])]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> dict:
        d = self.to_dict()
        d.pop("epochs")
        d["epochs_completed"] = len(self.epochs)
        return d


def train(config: TrainingConfig, splits: datamod.Splits | None = None):
    """Train one model; returns ``(RunReport, model)``.

    Divergence ends the run early with ``report.diverged`` set instead of
    raising.
    """
    # overflow is expected near divergence and is detected explicitly
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(config, splits)


def _train(config, splits):
    if splits is None:
        splits = load_dataset(config.dataset, config.seed)
    init_rng, shuffle_rng, dropout_rng = SeededRng(config.seed).spawn(3)
    n_classes = splits.n_classes
    model = build_model(config, splits.train.n_features, n_classes, init_rng)
    params = model.parameters()
    groups = make_groups(config.lr, config.weight_decay, config.poly_lr_ratio)
    opt = AdamW(params, groups, tuple(config.betas), config.adam_eps)
    if config.scheduler == "plateau":
        sched = PlateauScheduler(
            config.plateau_factor, config.plateau_patience, config.plateau_min_delta, config.min_lr
        )
    elif config.scheduler == "milestone":
        sched = MilestoneScheduler(config.milestones, config.plateau_factor, config.min_lr)
    else:
        sched = None

    n_act = len(model.activation_layers)
    use_boundary = config.boundary_loss and config.activation == "poly"
    report = RunReport(config=config.to_dict(), n_activation_layers=n_act, optimizer=opt.hyperparameters())
    thr = config.divergence_threshold
    train_x, train_y = splits.train.x, splits.train.y

    for epoch in range(1, config.epochs + 1):
        lr = groups[Tag.STANDARD].lr
        ce_sum = bnd_sum = 0.0
        nb = 0
        grad_norm_max = 0.0
        max_pre = np.zeros(n_act)
        diverged = False
        for idx in _batches(shuffle_rng.permutation(len(train_y)), config.batch_size):
            logits, pre = model.forward(train_x[idx], "train", dropout_rng)
            ce, g_logits = cross_entropy(logits, train_y[idx])
            for i, p in enumerate(pre):
                m = float(np.max(np.abs(p)))
                max_pre[i] = m if not (m <= max_pre[i]) else max_pre[i]
            b_grads = None
            weighted = 0.0
            if use_boundary:
                terms = [boundary_loss(p, config.bound, config.alpha) for p in pre]
                weighted = config.lam * float(sum(t[0] for t in terms))
                b_grads = [config.lam * t[1] for t in terms]
            total = ce + weighted
            ce_sum += ce
            bnd_sum += weighted
            nb += 1
            if detect_divergence([total], pre, threshold=thr):
                diverged = True
                break
            grads = model.backward(g_logits, b_grads)
            grad_norm_max = max(grad_norm_max, global_norm(grads))
            if config.clip_mode == "selective":
                grads = selective_clip(grads, config.clip)
            elif config.clip_mode == "all":
                grads = clip_all(grads, config.clip)
            opt.step(grads)
            if detect_divergence([], params=params):
                diverged = True
                break

        row = {
            "epoch": epoch,
            "train_ce_loss": ce_sum / nb,
            "train_boundary_loss_weighted": bnd_sum / nb,
            "lr": lr,
            "grad_norm_preclip": grad_norm_max,
            "max_abs_preact": list(max_pre),
        }
        row["train_total_loss"] = row["train_ce_loss"] + row["train_boundary_loss_weighted"]
        if not diverged:
            val_loss, val_acc, val_bnd, val_pre = evaluate(model, splits.val, config)
            if detect_divergence([val_loss], val_pre, threshold=thr):
                diverged = True
            row.update(val_loss=val_loss, val_accuracy=val_acc, val_boundary=val_bnd)
        else:
            row.update(val_loss=math.nan, val_accuracy=math.nan, val_boundary=[])
        row["diverged"] = diverged
        report.epochs.append(row)
        if diverged:
            report.diverged = True
            report.divergence_epoch = epoch
            break
        report.final_val_accuracy = row["val_accuracy"]
        if sched is not None:
            sched.step(row["val_loss"], groups)

    if not report.diverged:
        _, report.test_accuracy, _, _ = evaluate(model, splits.test)
    else:
        report.final_val_accuracy = None
    return report, model


def write_run(report: RunReport, model: Model, out_dir, figures: bool = True) -> None:
    """Persist ``epochs.csv``, ``summary.json``, ``model.json`` and optional figures."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "epochs.csv"), "w") as fh:
        fh.write(report.to_csv())
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(report.summary(), fh, indent=2, default=_json_default)
    save_checkpoint(model, os.path.join(out_dir, "model.json"))
    if figures:
        from .plotting import plot_training_curves

        plot_training_curves(report, os.path.join(out_dir, "training.png"))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
