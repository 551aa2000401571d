"""Sub-band images of a trained lifting stack."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lifting import forward_stack, inverse_stack
from .tensor import Tensor, no_grad

BANDS = ("LL", "LH", "HL", "HH")


@dataclass
class Decomposition:
    source: np.ndarray  # [C,H,W] input to the lifting stack
    bands: list  # per level: dict band -> [C,h,w]
    reconstruction: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.reconstruction.astype(np.float64) - self.source)))


def decompose(model, image: np.ndarray, levels: int = None) -> Decomposition:
    """Run ``image`` [C,H,W] through the initial block (if any) and the first
    ``levels`` lifting levels, then invert the lifting part."""
    levels = len(model.levels) if levels is None else levels
    if not 0 < levels <= len(model.levels):
        raise ValueError(f"levels must be in 1..{len(model.levels)}, got {levels}")
    cfg = model.config
    expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
    if tuple(image.shape) != expected:
        raise ValueError(f"image shape {tuple(image.shape)} does not match the model input {expected}")
    stack = model.levels[:levels]
    model.eval()
    with no_grad():
        src = model.features(Tensor(image[None]))
        out = forward_stack(stack, src)
        rec = inverse_stack(stack, out)
    bands = [{name: b.data[0] for name, b in zip(BANDS, level)} for level in out]
    return Decomposition(src.data[0], bands, rec.data[0])


def to_gray(band: np.ndarray, mode: str = "luma") -> list:
    """Collapse [C,h,w] into 2D planes: one mean plane, or one per channel."""
    if mode == "luma":
        return [band.mean(axis=0)]
    if mode == "channels":
        return list(band)
    raise ValueError(f"unknown mode {mode!r}")


def approximation_to_uint8(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    scaled = (plane - lo) / (hi - lo) if hi > lo else np.full_like(plane, 0.5)
    return np.round(scaled * 255).astype(np.uint8)


def detail_to_uint8(plane: np.ndarray, scale: float = 10.0) -> np.ndarray:
    """Mid-gray for zero, ``0.5 + scale * value`` clamped to [0, 1]."""
    return np.round(np.clip(0.5 + scale * plane, 0.0, 1.0) * 255).astype(np.uint8)


def save_decomposition(dec: Decomposition, out_dir, detail_scale: float = 10.0, mode: str = "luma") -> list:
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t, level in enumerate(dec.bands):
        for name in BANDS:
            planes = to_gray(level[name], mode)
            for c, plane in enumerate(planes):
                img = approximation_to_uint8(plane) if name == "LL" else detail_to_uint8(plane, detail_scale)
                suffix = "" if mode == "luma" else f"_c{c}"
                path = out / f"level{t}_{name}{suffix}.png"
                Image.fromarray(img, mode="L").save(path)
                written.append(path)
    for c, plane in enumerate(to_gray(dec.reconstruction, mode)):
        suffix = "" if mode == "luma" else f"_c{c}"
        path = out / f"reconstruction{suffix}.png"
        Image.fromarray(approximation_to_uint8(plane), mode="L").save(path)
        written.append(path)
    (out / "reconstruction_error.txt").write_text(f"{dec.max_error:.9e}\n")
    return written
