"""The DAWN classifier: initial Conv-BN-ReLU block, stacked 2D lifting levels,
pooled sub-band head and a linear classifier."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from . import ops
from .lifting import Lifting2D
from .nn import BatchNorm2d, Conv2d, Dense, Module
from .tensor import Tensor

MIN_FEATURE_SIZE = 4

# Published parameter counts for 64 initial filters, CIFAR-100 (100 classes,
# 32x32 RGB inputs), keyed by (kernel_size, hidden_layers, levels).
PUBLISHED_COUNTS = {
    (3, 1, 3): 734_628,
    (1, 1, 3): 439_716,
    (2, 1, 3): 587_172,
    (4, 1, 3): 882_084,
    (3, 2, 3): 918_564,
    (3, 3, 3): 1_140_900,
    (3, 4, 3): 1_363_236,
    (3, 1, 0): 45_348,
    (3, 1, 1): 275_108,
    (3, 1, 2): 504_868,
}


def compute_levels(input_size: int) -> int:
    """Number of levels that keeps the last feature map at least 4 x 4."""
    if input_size < 2 * MIN_FEATURE_SIZE:
        raise ValueError(f"input size {input_size} leaves no room for a lifting level (need >= 8)")
    return int(math.floor(math.log2(input_size) - math.log2(MIN_FEATURE_SIZE)))


@dataclass
class DawnConfig:
    input_channels: int = 3
    input_size: int = 32
    init_channels: int = 16
    levels: Union[int, str] = "auto"
    kernel_size: int = 3
    hidden_layers: int = 1
    num_classes: int = 10
    linear_lifting: bool = False  # identity activations inside predictors/updaters

    @property
    def num_levels(self) -> int:
        if self.levels == "auto":
            return compute_levels(self.input_size)
        return int(self.levels)

    @property
    def lifting_channels(self) -> int:
        return self.init_channels if self.init_channels > 0 else self.input_channels

    @property
    def head_width(self) -> int:
        return 3 * self.num_levels * self.lifting_channels + self.lifting_channels

    def validate(self) -> "DawnConfig":
        for name in ("input_channels", "input_size", "kernel_size", "hidden_layers", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.init_channels < 0:
            raise ValueError("init_channels must be >= 0")
        if self.levels != "auto":
            if not isinstance(self.levels, (int, np.integer)) or self.levels < 0:
                raise ValueError(f"levels must be 'auto' or a non-negative int, got {self.levels!r}")
            if self.levels > 0 and self.levels > compute_levels(self.input_size):
                raise ValueError(
                    f"{self.levels} levels exceed the maximum {compute_levels(self.input_size)} "
                    f"for input size {self.input_size}"
                )
        m = self.num_levels
        if self.input_size % (2**m):
            raise ValueError(f"input size {self.input_size} not divisible by 2^{m}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DawnConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


class InitialBlock(Module):
    """Two 3x3 Conv-BN-ReLU layers at the same depth; convolutions carry no
    bias because batch norm supplies the shift."""

    def __init__(self, in_channels: int, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(in_channels, channels, 3, bias=False, rng=rng)
        self.bn1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, bias=False, rng=rng)
        self.bn2 = BatchNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        # 3x3 convolutions keep the spatial size through one reflected border row/column
        x = ops.relu(self.bn1(self.conv1(ops.reflect_pad(x, (1, 1, 1, 1)))))
        return ops.relu(self.bn2(self.conv2(ops.reflect_pad(x, (1, 1, 1, 1)))))


@dataclass
class LevelOutput:
    input: Tensor
    LL: Tensor
    LH: Tensor
    HL: Tensor
    HH: Tensor

    @property
    def details(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.LH, self.HL, self.HH


class DawnModel(Module):
    def __init__(self, config: DawnConfig, seed: int = 0):
        config.validate()
        self._config = config
        rng = np.random.default_rng(seed)
        C = config.lifting_channels
        if config.init_channels > 0:
            self.initial = InitialBlock(config.input_channels, config.init_channels, rng)
        levels = []
        for t in range(config.num_levels):
            level = Lifting2D(C, config.kernel_size, config.hidden_layers, config.linear_lifting, rng=rng)
            setattr(self, f"level{t}", level)
            levels.append(level)
        self._levels = tuple(levels)
        self.classifier = Dense(config.head_width, config.num_classes, rng=rng)
        self.assign_names()
        self.train()

    @property
    def config(self) -> DawnConfig:
        return self._config

    @property
    def levels(self) -> tuple[Lifting2D, ...]:
        return self._levels

    def features(self, x: Tensor) -> Tensor:
        """Output of the initial block (the lifting stack's input)."""
        return self.initial(x) if self._config.init_channels > 0 else x

    def forward(self, x) -> tuple[Tensor, list[LevelOutput]]:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        cfg = self._config
        expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ValueError(f"expected input [B, {expected[0]}, {expected[1]}, {expected[2]}], got {x.shape}")
        h = self.features(x)
        pooled = []
        outs = []
        for level in self._levels:
            ll, lh, hl, hh = level(h)
            outs.append(LevelOutput(h, ll, lh, hl, hh))
            pooled.extend(ops.global_avg_pool(b) for b in (lh, hl, hh))
            h = ll
        pooled.append(ops.global_avg_pool(h))
        logits = self.classifier(ops.concat(pooled, axis=1))
        return ops.log_softmax(logits), outs

    def describe(self) -> str:
        """One line per parameter: name, shape, count."""
        lines = []
        for name, p in self.named_parameters():
            shape = "x".join(str(s) for s in p.shape)
            lines.append(f"{name}\t{shape}\t{p.size}")
        lines.append(f"total\t-\t{self.num_parameters()}")
        return "\n".join(lines)


def build(config: DawnConfig, seed: int = 0) -> DawnModel:
    return DawnModel(config, seed=seed)


@dataclass
class ParamCount:
    total: int
    breakdown: dict = field(default_factory=dict)

    def reference(self, config: DawnConfig) -> Optional[int]:
        return published_count(config)


def _conv_params(cin: int, cout: int, taps: int, bias: bool) -> int:
    return cout * cin * taps + (cout if bias else 0)


def param_count(config: DawnConfig) -> ParamCount:
    """Closed-form count of trainable scalars, broken down by module."""
    config.validate()
    C = config.lifting_channels
    k, h = config.kernel_size, config.hidden_layers
    breakdown = {}
    if config.init_channels > 0:
        ci = config.init_channels
        breakdown["initial"] = (
            _conv_params(config.input_channels, ci, 9, False) + 2 * ci + _conv_params(ci, ci, 9, False) + 2 * ci
        )
    pu = (h - 1) * _conv_params(C, C, k, True) + _conv_params(C, 2 * C, k, True) + _conv_params(2 * C, C, 1, True)
    for t in range(config.num_levels):
        breakdown[f"level{t}"] = 3 * 2 * pu
    breakdown["classifier"] = config.head_width * config.num_classes + config.num_classes
    return ParamCount(total=sum(breakdown.values()), breakdown=breakdown)


def published_count(config: DawnConfig) -> Optional[int]:
    """Published count for this configuration, if it is one of the tuned rows."""
    if (config.init_channels, config.input_size, config.input_channels, config.num_classes) != (64, 32, 3, 100):
        return None
    return PUBLISHED_COUNTS.get((config.kernel_size, config.hidden_layers, config.num_levels))
