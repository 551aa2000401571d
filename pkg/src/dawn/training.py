"""Composite loss, SGD with momentum, learning-rate schedule and the
train/evaluate loops."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ops
from .checkpoint import export_checkpoint
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

HISTORY_COLUMNS = (
    "epoch",
    "lr",
    "loss_total",
    "loss_ce",
    "loss_huber",
    "loss_mean",
    "train_acc",
    "test_acc",
    "wall_seconds",
)

RECIPES = {
    "cifar": {"epochs": 300, "decay_epochs": [150, 255], "batch_size": 64, "augment_pad": 4, "augment_mirror": True},
    "kth": {"epochs": 90, "decay_epochs": [30, 60], "batch_size": 16, "augment_pad": 0, "augment_mirror": True},
}


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.03
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 10
    decay_epochs: list = field(default_factory=list)
    decay_factor: float = 0.1
    lambda1: float = 0.1
    lambda2: float = 0.1
    huber_delta: float = 1.0
    seed: int = 0
    augment_pad: int = 0
    augment_mirror: bool = False
    clip_grad: Optional[float] = None
    record_wall_time: bool = False

    def validate(self) -> "TrainConfig":
        d = list(self.decay_epochs)
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"decay_epochs must be strictly increasing, got {d}")
        if d and (d[0] < 1 or d[-1] > self.epochs):
            raise ValueError(f"decay_epochs must lie in [1, {self.epochs}], got {d}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        return self

    @classmethod
    def from_recipe(cls, name: str, **overrides) -> "TrainConfig":
        try:
            preset = dict(RECIPES[name])
        except KeyError:
            raise ValueError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None
        preset.update(overrides)
        return cls(**preset)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    total: float
    cross_entropy: float
    huber_reg: float
    mean_reg: float
    huber_levels: list = field(default_factory=list)
    mean_levels: list = field(default_factory=list)
    loss: Optional[Tensor] = field(default=None, repr=False, compare=False)


def huber_sum(details: Tensor, delta: float = 1.0) -> Tensor:
    return ops.huber_sum(details, delta)


def mean_reg_term(level_input: Tensor, level_ll: Tensor) -> Tensor:
    """Squared difference between the means of a level's input and its LL band."""
    diff = level_input.mean() - level_ll.mean()
    return diff * diff


def cross_entropy(log_probs: Tensor, labels) -> Tensor:
    return ops.nll_loss(log_probs, labels)


def _guard(name: str, fn):
    try:
        return fn()
    except FloatingPointError as exc:
        raise NonFiniteLossError(f"non-finite value in loss term {name!r}: {exc}") from None


def composite_loss(log_probs: Tensor, levels_out, labels, config: TrainConfig) -> LossBreakdown:
    """Cross-entropy plus weighted Huber and mean-preservation penalties.

    The Huber penalty of level ``l`` is averaged over every coefficient of the
    concatenated LH, HL and HH bands in the batch; the mean term compares the
    mean of the level's input with the mean of its LL band.
    """
    batch = log_probs.shape[0]
    ce = _guard("cross_entropy", lambda: cross_entropy(log_probs, labels))
    total = ce
    huber_vals, mean_vals = [], []
    for t, lv in enumerate(levels_out):

        def level_huber(lv=lv):
            flat = ops.concat([b.reshape(batch, -1) for b in lv.details], axis=1)
            return huber_sum(flat, config.huber_delta) * (1.0 / flat.size)

        hub = _guard(f"huber[level{t}]", level_huber)
        mr = _guard(f"mean[level{t}]", lambda lv=lv: mean_reg_term(lv.input, lv.LL))
        huber_vals.append(hub)
        mean_vals.append(mr)
        if config.lambda1:
            total = _guard(f"lambda1*huber[level{t}]", lambda total=total, hub=hub: total + config.lambda1 * hub)
        if config.lambda2:
            total = _guard(f"lambda2*mean[level{t}]", lambda total=total, mr=mr: total + config.lambda2 * mr)
    hv = [h.item() for h in huber_vals]
    mv = [m.item() for m in mean_vals]
    return LossBreakdown(
        total=total.item(),
        cross_entropy=ce.item(),
        huber_reg=float(sum(hv)),
        mean_reg=float(sum(mv)),
        huber_levels=hv,
        mean_levels=mv,
        loss=total,
    )


def sgd_momentum_step(params, grads, velocities, lr: float, momentum: float):
    """Classical momentum: ``v <- momentum*v + g``, ``p <- p - lr*v``.

    Arrays are updated in place and returned.
    """
    for p, g, v in zip(params, grads, velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch in SGD step: {p.shape}, {g.shape}, {v.shape}")
        v *= momentum
        v += g
        p -= lr * v
    return params, velocities


class SGD:
    def __init__(self, params, lr: float = 0.03, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        sgd_momentum_step(
            [p.data for p in self.params], [p.grad for p in self.params], self.velocities, self.lr, self.momentum
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 1-based epoch: one decay per milestone reached."""
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    drops = sum(1 for e in config.decay_epochs if e <= epoch)
    return config.lr * config.decay_factor**drops


def clip_grad_norm(params, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            p.grad *= scale
    return norm


def predict(model, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    was_training = model.training
    model.eval()
    preds = []
    try:
        with no_grad():
            for i in range(0, len(images), batch_size):
                log_probs, _ = model(Tensor(images[i : i + batch_size]))
                preds.append(log_probs.data.argmax(axis=1))
    finally:
        model.train(was_training)
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model, dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in eval mode."""
    preds = predict(model, dataset.images, batch_size)
    return float(np.mean(preds == dataset.labels)) if len(preds) else float("nan")


def per_class_accuracy(model, dataset, batch_size: int = 256) -> dict:
    preds = predict(model, dataset.images, batch_size)
    out = {}
    for c in range(len(dataset.class_names)):
        mask = dataset.labels == c
        out[c] = (float(np.mean(preds[mask] == c)) if mask.any() else float("nan"), int(mask.sum()))
    return out


@dataclass
class History:
    rows: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in HISTORY_COLUMNS})


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def train(
    model,
    train_set,
    config: TrainConfig,
    test_set=None,
    out_dir=None,
    on_step=None,
    on_epoch=None,
) -> History:
    """Train ``model`` in place and return the per-epoch history.

    With ``out_dir`` set, ``history.csv``, ``final.ckpt`` and ``best.ckpt``
    (best test accuracy, or train accuracy without a test set) are written
    there. ``on_step(epoch, batch_index, breakdown)`` is called after every
    optimizer step; ``on_epoch(epoch, row)`` after every epoch, and training
    stops early when it returns True.
    """
    from .data import AugmentPolicy, augment

    config.validate()
    if len(train_set) == 0:
        raise ValueError("empty training set")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    opt = SGD(params, lr=config.lr, momentum=config.momentum)
    policy = AugmentPolicy(pad=config.augment_pad, random_crop=config.augment_pad > 0, mirror=config.augment_mirror)
    history = History()
    best = -1.0
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        opt.lr = lr_at(epoch, config)
        model.train()
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        sums = np.zeros(4)
        correct = 0
        for b, i in enumerate(range(0, n, config.batch_size)):
            idx = order[i : i + config.batch_size]
            images = train_set.images[idx]
            if policy.active:
                images = augment(images, policy, np.random.default_rng([config.seed, epoch, b]))
            labels = train_set.labels[idx]
            try:
                log_probs, levels_out = model(Tensor(images))
            except FloatingPointError as exc:
                raise NonFiniteLossError(f"non-finite value in the forward pass (epoch {epoch}, batch {b}): {exc}") from None
            br = composite_loss(log_probs, levels_out, labels, config)
            opt.zero_grad()
            br.loss.backward()
            if config.clip_grad is not None:
                clip_grad_norm(params, config.clip_grad)
            opt.step()
            k = len(idx)
            sums += k * np.array([br.total, br.cross_entropy, br.huber_reg, br.mean_reg])
            correct += int(np.sum(log_probs.data.argmax(axis=1) == labels))
            if on_step is not None:
                on_step(epoch, b, br)
        train_acc = correct / n
        test_acc = evaluate(model, test_set) if test_set is not None and len(test_set) else None
        avg = sums / n
        row = {
            "epoch": epoch,
            "lr": opt.lr,
            "loss_total": float(avg[0]),
            "loss_ce": float(avg[1]),
            "loss_huber": float(avg[2]),
            "loss_mean": float(avg[3]),
            "train_acc": float(train_acc),
            "test_acc": test_acc,
            "wall_seconds": round(time.perf_counter() - start, 3) if config.record_wall_time else None,
        }
        history.append(row)
        log.info(
            "epoch %d lr %.4g loss %.4f ce %.4f train %.3f test %s",
            epoch,
            opt.lr,
            row["loss_total"],
            row["loss_ce"],
            train_acc,
            "-" if test_acc is None else f"{test_acc:.3f}",
        )
        if out is not None:
            score = test_acc if test_acc is not None else train_acc
            if score > best:
                best = score
                export_checkpoint(model, out / "best.ckpt", {"epoch": epoch, "score": score})
            history.write_csv(out / "history.csv")
        if on_epoch is not None and on_epoch(epoch, row):
            break
    if out is not None:
        export_checkpoint(model, out / "final.ckpt", {"epoch": len(history)})
        history.write_csv(out / "history.csv")
    return history
