"""Command-line interface: ``dawn train | eval | params | decompose | gradcheck``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from . import checks, data
from .checkpoint import CheckpointError, import_checkpoint
from .model import DawnConfig, DawnModel, param_count, published_count
from .training import RECIPES, TrainConfig, per_class_accuracy, train
from .visualize import decompose, save_decomposition

DATA_ENV = "DAWN_DATA_DIR"

# flag dest -> (section, key)
MODEL_FLAGS = {
    "init_channels": "init_channels",
    "levels": "levels",
    "kernel_size": "kernel_size",
    "hidden_layers": "hidden_layers",
    "input_size": "input_size",
}
TRAIN_FLAGS = (
    "lr",
    "momentum",
    "batch_size",
    "epochs",
    "decay_epochs",
    "decay_factor",
    "lambda1",
    "lambda2",
    "huber_delta",
    "seed",
    "augment_pad",
    "augment_mirror",
    "clip_grad",
)
DATA_DEFAULTS = {
    "dataset": "synth",
    "data_dir": "",
    "synth_per_class": 50,
    "synth_test_per_class": 20,
    "synth_seed": 7,
    "train_limit": 0,
    "test_limit": 0,
    "normalize": False,
}


def _levels(value: str):
    return value if value == "auto" else int(value)


def _int_list(value: str) -> list:
    return [int(v) for v in value.split(",") if v.strip()]


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--init-channels", "--init", dest="init_channels", type=int)
    g.add_argument("--levels", type=_levels, help="number of lifting levels or 'auto'")
    g.add_argument("--kernel-size", "--k", dest="kernel_size", type=int)
    g.add_argument("--hidden-layers", "--h", dest="hidden_layers", type=int)
    g.add_argument("--input-size", dest="input_size", type=int)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--dataset", help="synth, cifar10, cifar100, or a class-per-folder image directory")
    g.add_argument("--data-dir", dest="data_dir", help=f"CIFAR directory (default: ${DATA_ENV})")
    g.add_argument("--synth-per-class", dest="synth_per_class", type=int)
    g.add_argument("--synth-test-per-class", dest="synth_test_per_class", type=int)
    g.add_argument("--synth-seed", dest="synth_seed", type=int)
    g.add_argument("--train-limit", dest="train_limit", type=int, help="use only the first N training images")
    g.add_argument("--test-limit", dest="test_limit", type=int)
    g.add_argument("--normalize", action="store_true", default=None, help="per-channel standardization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dawn", description="Deep adaptive wavelet network tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", type=Path, help="TOML file; explicit flags take precedence")
    p.add_argument("--recipe", choices=sorted(RECIPES))
    p.add_argument("--out", type=Path, default=None, help="output directory (default runs/latest)")
    _add_model_flags(p)
    _add_data_flags(p)
    g = p.add_argument_group("optimization")
    g.add_argument("--lr", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--decay-epochs", dest="decay_epochs", type=_int_list, help="comma separated")
    g.add_argument("--decay-factor", dest="decay_factor", type=float)
    g.add_argument("--lambda1", type=float)
    g.add_argument("--lambda2", type=float)
    g.add_argument("--huber-delta", dest="huber_delta", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--augment-pad", dest="augment_pad", type=int)
    g.add_argument("--mirror", dest="augment_mirror", action="store_true", default=None)
    g.add_argument("--clip-grad", dest="clip_grad", type=float)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    _add_data_flags(p)

    p = sub.add_parser("params", help="count parameters")
    _add_model_flags(p)
    p.add_argument("--classes", type=int, default=100)
    p.add_argument("--input-channels", dest="input_channels", type=int, default=3)
    p.add_argument("--describe", action="store_true", help="list every parameter")

    p = sub.add_parser("decompose", help="write sub-band images for one input image")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--levels", type=int)
    p.add_argument("--detail-scale", dest="detail_scale", type=float, default=10.0)
    p.add_argument("--mode", choices=("luma", "channels"), default="luma")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gradcheck", help="run gradient and reconstruction self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shapes", type=int, default=20)
    return parser


# -- configuration -------------------------------------------------------------


def resolve_train_config(args) -> dict:
    """Merge defaults, recipe, config file and explicit flags (in that order)."""
    model = DawnConfig().to_dict()
    model["init_channels"] = 16
    trn = TrainConfig().to_dict()
    dat = dict(DATA_DEFAULTS)
    run = {}
    file_cfg = {}
    if args.config is not None:
        with open(args.config, "rb") as fh:
            file_cfg = tomli.load(fh)
    recipe = args.recipe or file_cfg.get("run", {}).get("recipe")
    if recipe:
        trn.update(RECIPES[recipe])
        run["recipe"] = recipe
    model.update(file_cfg.get("model", {}))
    trn.update(file_cfg.get("train", {}))
    dat.update(file_cfg.get("data", {}))
    run.update(file_cfg.get("run", {}))
    for dest, key in MODEL_FLAGS.items():
        if getattr(args, dest, None) is not None:
            model[key] = getattr(args, dest)
    for key in TRAIN_FLAGS:
        if getattr(args, key, None) is not None:
            trn[key] = getattr(args, key)
    for key in DATA_DEFAULTS:
        if getattr(args, key, None) is not None:
            dat[key] = getattr(args, key)
    if args.out is not None:
        run["out"] = str(args.out)
    run.setdefault("out", "runs/latest")
    return {"model": model, "train": trn, "data": dat, "run": run}


def _toml_ready(cfg: dict) -> dict:
    return {sec: {k: v for k, v in vals.items() if v is not None} for sec, vals in cfg.items()}


def load_datasets(dat: dict, input_size: Optional[int] = None):
    name = dat["dataset"]
    if name == "synth":
        size = input_size or 32
        train_set, test_set = data.synth_textures(
            4, int(dat["synth_per_class"]), size, int(dat["synth_seed"]), int(dat["synth_test_per_class"])
        )
    elif name in ("cifar10", "cifar100"):
        directory = dat.get("data_dir") or os.environ.get(DATA_ENV)
        if not directory:
            raise FileNotFoundError(f"--data-dir not given and ${DATA_ENV} not set")
        train_set, test_set = data.load_cifar(directory, 10 if name == "cifar10" else 100)
    else:
        root = Path(name)
        size = input_size or 224
        if (root / "train").is_dir() and (root / "test").is_dir():
            train_set = data.load_image_folder(root / "train", size, split="train")
            test_set = data.load_image_folder(root / "test", size, split="test")
        else:
            train_set = data.load_image_folder(root, size, split="train")
            test_set = None
    if int(dat.get("train_limit") or 0):
        train_set = train_set.subset(slice(0, int(dat["train_limit"])))
    if test_set is not None and int(dat.get("test_limit") or 0):
        test_set = test_set.subset(slice(0, int(dat["test_limit"])))
    if dat.get("normalize"):
        mean = train_set.images.mean(axis=(0, 2, 3))
        std = train_set.images.std(axis=(0, 2, 3))
        train_set = data.normalize(train_set, mean, std)
        if test_set is not None:
            test_set = data.normalize(test_set, mean, std)
    return train_set, test_set


# -- commands ------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    dat = cfg["data"]
    size_hint = cfg["model"].get("input_size") if dat["dataset"] not in ("cifar10", "cifar100") else 32
    train_set, test_set = load_datasets(dat, size_hint)
    cfg["model"]["input_size"] = int(train_set.images.shape[-1])
    cfg["model"]["input_channels"] = int(train_set.images.shape[1])
    cfg["model"]["num_classes"] = train_set.num_classes
    model_cfg = DawnConfig.from_dict(cfg["model"]).validate()
    train_cfg = TrainConfig(**cfg["train"]).validate()
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.toml", "wb") as fh:
        tomli_w.dump(_toml_ready(cfg), fh)
    model = DawnModel(model_cfg, seed=train_cfg.seed)
    history = train(model, train_set, train_cfg, test_set=test_set, out_dir=out)
    last = history[-1] if len(history) else {}
    print(f"trained {len(history)} epochs; final train acc {last.get('train_acc')}, test acc {last.get('test_acc')}")
    print(f"outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint.exists():
        print(f"error: checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 1
    try:
        model = import_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    dat = dict(DATA_DEFAULTS)
    cfg_path = args.checkpoint.parent / "config.toml"
    if cfg_path.exists():
        with open(cfg_path, "rb") as fh:
            dat.update(tomli.load(fh).get("data", {}))
    for key in DATA_DEFAULTS:
        if getattr(args, key, None) is not None:
            dat[key] = getattr(args, key)
    train_set, test_set = load_datasets(dat, model.config.input_size)
    dataset = test_set if test_set is not None else train_set
    if dataset.images.shape[1:] != (model.config.input_channels, model.config.input_size, model.config.input_size):
        print(f"error: dataset images {dataset.images.shape[1:]} do not fit checkpoint config", file=sys.stderr)
        return 1
    if dataset.num_classes != model.config.num_classes:
        print(
            f"error: dataset has {dataset.num_classes} classes, checkpoint {model.config.num_classes}",
            file=sys.stderr,
        )
        return 1
    table = per_class_accuracy(model, dataset)
    correct = sum(acc * n for acc, n in table.values() if n)
    print(f"top-1 accuracy: {correct / len(dataset):.6f} ({dataset.split} split, {len(dataset)} images)")
    print("class\tname\taccuracy\tcount")
    for c, (acc, n) in table.items():
        print(f"{c}\t{dataset.class_names[c]}\t{acc:.6f}\t{n}")
    return 0


def cmd_params(args) -> int:
    cfg = DawnConfig(
        input_channels=args.input_channels,
        input_size=args.input_size or 32,
        init_channels=64 if args.init_channels is None else args.init_channels,
        levels="auto" if args.levels is None else args.levels,
        kernel_size=args.kernel_size or 3,
        hidden_layers=args.hidden_layers or 1,
        num_classes=args.classes,
    )
    try:
        count = param_count(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"config: init={cfg.init_channels} k={cfg.kernel_size} h={cfg.hidden_layers} "
        f"l={cfg.num_levels} classes={cfg.num_classes} input={cfg.input_channels}x{cfg.input_size}x{cfg.input_size}"
    )
    for name, n in count.breakdown.items():
        print(f"{name}\t{n:,}")
    print(f"total\t{count.total:,}")
    ref = published_count(cfg)
    if ref is not None:
        print(f"reference\t{ref:,}\tdeviation {100.0 * (count.total - ref) / ref:+.2f}%")
    if args.describe:
        print(DawnModel(cfg).describe())
    return 0


def cmd_decompose(args) -> int:
    from PIL import Image

    try:
        model = import_checkpoint(args.checkpoint)
    except (FileNotFoundError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    channels = model.config.input_channels
    with Image.open(args.input) as im:
        arr = np.asarray(im.convert("L" if channels == 1 else "RGB"), dtype=np.float32) / 255.0
    image = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    if image.shape[0] != channels:
        image = np.repeat(image.mean(axis=0, keepdims=True), channels, axis=0)
    try:
        dec = decompose(model, image, args.levels)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    written = save_decomposition(dec, args.out, args.detail_scale, args.mode)
    print(f"wrote {len(written)} images to {args.out}")
    print(f"reconstruction max abs error: {dec.max_error:.3e}")
    return 0


def cmd_gradcheck(args) -> int:
    results = checks.run_all(seed=args.seed, n_shapes=args.shapes)
    for r in results:
        print(r)
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "params": cmd_params,
    "decompose": cmd_decompose,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, data.DataFormatError, CheckpointError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
