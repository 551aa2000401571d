"""Datasets: CIFAR binary batches, labelled image folders, synthetic textures,
and the random-crop / mirror augmentation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CIFAR10_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR10_TEST_FILES = ("test_batch.bin",)
CIFAR100_TRAIN_FILES = ("train.bin",)
CIFAR100_TEST_FILES = ("test.bin",)
CIFAR_PIXELS = 3 * 32 * 32
CIFAR_COUNTS = {10: (50_000, 10_000), 100: (50_000, 10_000)}
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".jpg", ".jpeg", ".bmp")
SYNTH_CLASSES = ("horizontal_grating", "vertical_grating", "checkerboard", "noise")


@dataclass
class Dataset:
    images: np.ndarray  # float32 [N, C, H, W] in [0, 1]
    labels: np.ndarray  # int64 [N]
    class_names: list = field(default_factory=list)
    split: str = "train"

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ValueError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label outside the class list")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, index) -> "Dataset":
        return Dataset(self.images[index], self.labels[index], list(self.class_names), self.split)


class DataFormatError(ValueError):
    pass


# -- CIFAR --------------------------------------------------------------------


def _find_cifar_dir(root: Path, names) -> Path:
    for cand in (root, *sorted(p for p in root.iterdir() if p.is_dir())):
        if all((cand / n).exists() for n in names):
            return cand
    missing = [n for n in names if not (root / n).exists()]
    raise FileNotFoundError(f"CIFAR files {missing} not found under {root}")


def read_cifar_file(path, variant: int) -> tuple[np.ndarray, np.ndarray]:
    """Parse one binary batch into ``uint8 [N,3,32,32]`` pixels and labels.

    CIFAR-10 records are 1 label byte + 3072 pixel bytes (R, G, B planes);
    CIFAR-100 records carry a coarse and a fine label byte, and the fine one
    is returned.
    """
    if variant not in (10, 100):
        raise ValueError("variant must be 10 or 100")
    path = Path(path)
    nlab = 1 if variant == 10 else 2
    rec = nlab + CIFAR_PIXELS
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise DataFormatError(f"{path}: empty file")
    if raw.size % rec:
        full = raw.size // rec
        raise DataFormatError(
            f"{path}: truncated record {full} at byte offset {full * rec} "
            f"({raw.size - full * rec} of {rec} bytes present)"
        )
    recs = raw.reshape(-1, rec)
    labels = recs[:, nlab - 1].astype(np.int64)
    if labels.max() >= variant:
        bad = int(np.argmax(labels >= variant))
        raise DataFormatError(f"{path}: label {labels[bad]} out of range at byte offset {bad * rec}")
    return recs[:, nlab:].reshape(-1, 3, 32, 32), labels


def load_cifar(directory, variant: int = 10, check_counts: bool = True) -> tuple[Dataset, Dataset]:
    root = Path(directory)
    if variant == 10:
        train_files, test_files = CIFAR10_TRAIN_FILES, CIFAR10_TEST_FILES
    elif variant == 100:
        train_files, test_files = CIFAR100_TRAIN_FILES, CIFAR100_TEST_FILES
    else:
        raise ValueError("variant must be 10 or 100")
    base = _find_cifar_dir(root, train_files + test_files)
    names = [str(i) for i in range(variant)]
    meta = base / ("batches.meta.txt" if variant == 10 else "fine_label_names.txt")
    if meta.exists():
        listed = [ln.strip() for ln in meta.read_text().splitlines() if ln.strip()]
        if len(listed) == variant:
            names = listed
    out = []
    for split, files, expected in zip(("train", "test"), (train_files, test_files), CIFAR_COUNTS[variant]):
        parts = [read_cifar_file(base / f, variant) for f in files]
        pix = np.concatenate([p for p, _ in parts])
        lab = np.concatenate([lab for _, lab in parts])
        if check_counts and len(lab) != expected:
            raise DataFormatError(f"{base}: {split} split has {len(lab)} records, expected {expected}")
        out.append(Dataset(pix.astype(np.float32) / 255.0, lab, names, split))
    return out[0], out[1]


def write_cifar_file(path, pixels: np.ndarray, labels: np.ndarray, variant: int = 10, coarse=None) -> None:
    """Write records in the CIFAR binary layout (used for fixtures and export)."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), CIFAR_PIXELS)
    cols = [np.asarray(labels, dtype=np.uint8)[:, None], pixels]
    if variant == 100:
        c = np.zeros(len(labels), np.uint8) if coarse is None else np.asarray(coarse, np.uint8)
        cols.insert(0, c[:, None])
    np.concatenate(cols, axis=1).tofile(path)


# -- image folders ------------------------------------------------------------


def _read_image(path: Path, channels: int) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DataFormatError(f"cannot read image {path}: {exc}") from None
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return arr


def center_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Centre-crop to a square, then resize to ``size`` x ``size`` (bilinear)."""
    from PIL import Image

    C, H, W = img.shape
    s = min(H, W)
    top, left = (H - s) // 2, (W - s) // 2
    img = img[:, top : top + s, left : left + s]
    if s == size:
        return img
    out = np.empty((C, size, size), dtype=np.float32)
    for c in range(C):
        out[c] = np.asarray(Image.fromarray(img[c], mode="F").resize((size, size), Image.BILINEAR))
    return np.clip(out, 0.0, 1.0)


def load_image_folder(directory, size: int = 224, channels: int = 3, split: str = "train") -> Dataset:
    """Load ``directory/<class>/<image>``; classes are sorted by name."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"image folder not found: {root}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DataFormatError(f"{root}: no class directories")
    images, labels = [], []
    for label, name in enumerate(classes):
        files = sorted(p for p in (root / name).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataFormatError(f"{root / name}: empty class directory")
        for f in files:
            images.append(center_resize(_read_image(f, channels), size))
            labels.append(label)
    return Dataset(np.stack(images), np.asarray(labels), classes, split)


# -- synthetic textures ------------------------------------------------------


def _grating(rng: np.random.Generator, size: int, vertical: bool) -> np.ndarray:
    period = rng.uniform(3.0, size / 2)
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(size)
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * t / period + phase)
    return np.tile(wave[None, :], (size, 1)) if vertical else np.tile(wave[:, None], (1, size))


def _checkerboard(rng: np.random.Generator, size: int) -> np.ndarray:
    period = int(rng.integers(1, max(2, size // 4) + 1))
    oy, ox = rng.integers(0, 2 * period, size=2)
    lo, hi = rng.uniform(0.0, 0.3), rng.uniform(0.7, 1.0)
    y = (np.arange(size) + oy) // period
    x = (np.arange(size) + ox) // period
    return np.where((y[:, None] + x[None, :]) % 2 == 1, hi, lo)


def _noise(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.clip(rng.normal(0.5, rng.uniform(0.1, 0.3), size=(size, size)), 0.0, 1.0)


def _texture(rng: np.random.Generator, cls: int, size: int) -> np.ndarray:
    if cls == 0:
        return _grating(rng, size, vertical=False)
    if cls == 1:
        return _grating(rng, size, vertical=True)
    if cls == 2:
        return _checkerboard(rng, size)
    return _noise(rng, size)


def synth_textures(
    classes: int = 4,
    per_class: int = 50,
    size: int = 32,
    seed: int = 7,
    test_per_class: int = 20,
    channels: int = 3,
) -> tuple[Dataset, Dataset]:
    """Four texture classes for quick experiments.

    0: horizontal gratings (constant along each row), 1: vertical gratings,
    2: checkerboards, 3: clamped Gaussian noise. Frequencies, phases, periods
    and checkerboard levels are random per image. ``per_class`` images per
    class go to the training split and ``test_per_class`` to the test split,
    drawn from independent streams of ``seed``; no test image repeats a
    training image. Grayscale textures are replicated to ``channels``
    channels.
    """
    if not 1 <= classes <= len(SYNTH_CLASSES):
        raise ValueError(f"classes must be in 1..{len(SYNTH_CLASSES)}")
    if size < 8 or size % 2:
        raise ValueError("size must be even and >= 8")
    names = list(SYNTH_CLASSES[:classes])
    splits = []
    seen = set()
    for split, count, stream in (("train", per_class, 0), ("test", test_per_class, 1)):
        rng = np.random.default_rng([seed, stream])
        imgs, labs = [], []
        for i in range(count):
            for c in range(classes):
                img = _texture(rng, c, size).astype(np.float32)
                # keep the test split disjoint from the training split
                while split == "test" and img.tobytes() in seen:
                    img = _texture(rng, c, size).astype(np.float32)
                if split == "train":
                    seen.add(img.tobytes())
                imgs.append(img)
                labs.append(c)
        arr = np.asarray(imgs, dtype=np.float32)[:, None] if imgs else np.zeros((0, 1, size, size), np.float32)
        splits.append(Dataset(np.repeat(arr, channels, axis=1), np.asarray(labs), names, split))
    return splits[0], splits[1]


def random_images(n: int, size: int, num_classes: int, seed: int = 0, channels: int = 3) -> Dataset:
    """Uniform-noise images with random labels (capacity checks)."""
    rng = np.random.default_rng(seed)
    imgs = rng.uniform(0, 1, size=(n, channels, size, size))
    return Dataset(imgs, rng.integers(0, num_classes, size=n), [str(i) for i in range(num_classes)], "train")


def export_pgm(dataset: Dataset, directory) -> list:
    """Write every image as an 8-bit PGM (luma) under ``directory/<class>/``."""
    from PIL import Image

    root = Path(directory)
    paths = []
    for i, (img, lab) in enumerate(zip(dataset.images, dataset.labels)):
        d = root / dataset.class_names[lab]
        d.mkdir(parents=True, exist_ok=True)
        p = d / f"{dataset.split}_{i:05d}.pgm"
        Image.fromarray(np.round(img.mean(axis=0) * 255).astype(np.uint8), mode="L").save(p)
        paths.append(p)
    return paths


# -- augmentation -------------------------------------------------------------


@dataclass
class AugmentPolicy:
    pad: int = 4
    random_crop: bool = True
    mirror: bool = True

    @property
    def active(self) -> bool:
        return (self.random_crop and self.pad > 0) or self.mirror


def augment(
    batch: np.ndarray,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    flips: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Zero-pad and randomly crop back to size, then mirror with probability 1/2.

    ``flips`` forces the mirror decision per image.
    """
    batch = np.asarray(batch, dtype=np.float32)
    B, C, H, W = batch.shape
    out = batch
    if policy.random_crop and policy.pad > 0:
        p = policy.pad
        padded = np.pad(batch, ((0, 0), (0, 0), (p, p), (p, p)))
        oy = rng.integers(0, 2 * p + 1, size=B)
        ox = rng.integers(0, 2 * p + 1, size=B)
        out = np.stack([padded[i, :, oy[i] : oy[i] + H, ox[i] : ox[i] + W] for i in range(B)])
    if policy.mirror:
        if flips is None:
            flips = rng.random(B) < 0.5
        out = np.where(np.asarray(flips, dtype=bool)[:, None, None, None], out[..., ::-1], out)
    return np.ascontiguousarray(out, dtype=np.float32)


def normalize(dataset: Dataset, mean=None, std=None) -> Dataset:
    """Per-channel standardization (off by default in the training recipes)."""
    mean = dataset.images.mean(axis=(0, 2, 3)) if mean is None else np.asarray(mean)
    std = dataset.images.std(axis=(0, 2, 3)) if std is None else np.asarray(std)
    imgs = (dataset.images - mean[None, :, None, None]) / std[None, :, None, None]
    return Dataset(imgs, dataset.labels, list(dataset.class_names), dataset.split)
