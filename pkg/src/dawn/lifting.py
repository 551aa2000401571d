"""Trainable lifting steps and the 2D adaptive lifting scheme.

A lifting step splits a signal into even and odd polyphase components along
one direction, then

    c = x_even + U(x_odd)      (update)
    d = x_odd  - P(c)          (predict)

Because each stage only adds a function of the *other* branch, the ladder is
invertible for any U and P, including the nonlinear networks used here:

    x_odd  = d + P(c)
    x_even = c - U(x_odd)
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import ops
from .nn import Conv2d, Module
from .tensor import Tensor, no_grad

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
_AXIS = {HORIZONTAL: 3, VERTICAL: 2}


def _axis(direction: str) -> int:
    try:
        return _AXIS[direction]
    except KeyError:
        raise ValueError(f"direction must be 'horizontal' or 'vertical', got {direction!r}") from None


def split_even_odd(x: Tensor, direction: str) -> tuple[Tensor, Tensor]:
    """Polyphase split: samples 0, 2, 4, ... and 1, 3, 5, ... along ``direction``."""
    axis = _axis(direction)
    n = x.shape[axis]
    if n < 2 or n % 2:
        raise ValueError(f"{direction} extent must be even and >= 2, got {n}")
    idx_e = [slice(None)] * 4
    idx_o = [slice(None)] * 4
    idx_e[axis] = slice(0, None, 2)
    idx_o[axis] = slice(1, None, 2)
    return x[tuple(idx_e)], x[tuple(idx_o)]


def merge_even_odd(even: Tensor, odd: Tensor, direction: str) -> Tensor:
    return ops.interleave(even, odd, _axis(direction))


class PredictorUpdater(Module):
    """The small CNN used as a predictor or updater.

    Structure for ``hidden_layers == 1``: reflection pad, (1 x k) or (k x 1)
    convolution to ``2C`` channels, relu, 1 x 1 convolution back to ``C``
    channels, tanh. Each extra hidden layer prepends another padded
    directional convolution (``C -> C``) followed by relu. ``linear_mode``
    replaces relu and tanh by the identity.
    """

    def __init__(
        self,
        channels: int,
        direction: str,
        kernel_size: int = 3,
        hidden_layers: int = 1,
        linear_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        if hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        _axis(direction)
        rng = rng if rng is not None else np.random.default_rng()
        self._direction = direction
        self._channels = channels
        self._kernel_size = kernel_size
        self.linear_mode = linear_mode
        kshape = (1, kernel_size) if direction == HORIZONTAL else (kernel_size, 1)
        self.hidden = [Conv2d(channels, channels, kshape, rng=rng) for _ in range(hidden_layers - 1)]
        self.conv1 = Conv2d(channels, 2 * channels, kshape, rng=rng)
        self.conv_out = Conv2d(2 * channels, channels, (1, 1), rng=rng)
        k = kernel_size - 1
        lo, hi = k // 2, k - k // 2
        self._pad = (0, 0, lo, hi) if direction == HORIZONTAL else (lo, hi, 0, 0)

    @property
    def direction(self) -> str:
        return self._direction

    @property
    def channels(self) -> int:
        return self._channels

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self._channels:
            raise ValueError(f"expected {self._channels} input channels, got shape {x.shape}")
        act = ops.identity if self.linear_mode else ops.relu
        out_act = ops.identity if self.linear_mode else ops.tanh_act
        for conv in (*self.hidden, self.conv1):
            x = act(conv(ops.reflect_pad(x, self._pad)))
        return out_act(self.conv_out(x))

    def set_zero(self) -> None:
        """Make the network output exactly zero for every input."""
        for conv in (*self.hidden, self.conv1, self.conv_out):
            conv.weight.data[...] = 0.0
            conv.bias.data[...] = 0.0

    def set_center_copy(self) -> None:
        """Make the network (in linear mode) copy its input unchanged.

        Every directional convolution passes channel ``c`` through its centre
        tap; the 1 x 1 output layer selects the first ``C`` of ``2C`` channels.
        Requires an odd kernel size.
        """
        if self._kernel_size % 2 == 0:
            raise ValueError("center copy needs an odd kernel size")
        self.linear_mode = True
        centre = self._kernel_size // 2
        C = self._channels
        for conv in (*self.hidden, self.conv1):
            w = conv.weight.data
            w[...] = 0.0
            for c in range(C):
                w[c, c].reshape(-1)[centre] = 1.0
            conv.bias.data[...] = 0.0
        w = self.conv_out.weight.data
        w[...] = 0.0
        for c in range(C):
            w[c, c, 0, 0] = 1.0
        self.conv_out.bias.data[...] = 0.0


class LiftingStep(Module):
    """One directional update-then-predict pair."""

    def __init__(
        self,
        channels: int,
        direction: str,
        kernel_size: int = 3,
        hidden_layers: int = 1,
        linear_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self._direction = direction
        self.updater = PredictorUpdater(channels, direction, kernel_size, hidden_layers, linear_mode, rng)
        self.predictor = PredictorUpdater(channels, direction, kernel_size, hidden_layers, linear_mode, rng)

    @property
    def direction(self) -> str:
        return self._direction

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        even, odd = split_even_odd(x, self._direction)
        c = even + self.updater(odd)
        d = odd - self.predictor(c)
        return c, d

    def inverse(self, c: Tensor, d: Tensor) -> Tensor:
        if c.shape != d.shape:
            raise ValueError(f"approximation and detail shapes differ: {c.shape} vs {d.shape}")
        odd = d + self.predictor(c)
        even = c - self.updater(odd)
        return merge_even_odd(even, odd, self._direction)

    def diagnostic_losses(self, x: Tensor) -> tuple[float, float]:
        """Squared-error losses of the predictor and updater (metrics only).

        ``loss_P = sum (P(c) - x_odd)^2`` equals the detail energy ``sum d^2``;
        ``loss_U = sum (U(x_odd) - (x_odd - x_even))^2``.
        """
        with no_grad():
            even, odd = split_even_odd(x, self._direction)
            u = self.updater(odd)
            c = even + u
            p = self.predictor(c)
            loss_p = np.sum((p.data.astype(np.float64) - odd.data) ** 2)
            loss_u = np.sum((u.data.astype(np.float64) - (odd.data.astype(np.float64) - even.data)) ** 2)
        return float(loss_p), float(loss_u)


class Lifting2D(Module):
    """One decomposition level: a horizontal step, then independent vertical
    steps on its approximation and detail outputs.

    Returns ``(LL, LH, HL, HH)``; the first letter refers to the horizontal
    analysis and the second to the vertical one.
    """

    def __init__(
        self,
        channels: int,
        kernel_size: int = 3,
        hidden_layers: int = 1,
        linear_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        args = (kernel_size, hidden_layers, linear_mode, rng)
        self.horizontal = LiftingStep(channels, HORIZONTAL, *args)
        self.vertical_low = LiftingStep(channels, VERTICAL, *args)
        self.vertical_high = LiftingStep(channels, VERTICAL, *args)

    def steps(self) -> tuple[LiftingStep, LiftingStep, LiftingStep]:
        return self.horizontal, self.vertical_low, self.vertical_high

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        H, W = x.shape[2], x.shape[3]
        if H % 2 or W % 2:
            raise ValueError(f"2D lifting needs even spatial extents, got {H}x{W}")
        low, high = self.horizontal(x)
        ll, lh = self.vertical_low(low)
        hl, hh = self.vertical_high(high)
        return ll, lh, hl, hh

    def inverse(self, ll: Tensor, lh: Tensor, hl: Tensor, hh: Tensor) -> Tensor:
        shapes = {ll.shape, lh.shape, hl.shape, hh.shape}
        if len(shapes) != 1:
            raise ValueError(f"sub-band shapes differ: {[t.shape for t in (ll, lh, hl, hh)]}")
        low = self.vertical_low.inverse(ll, lh)
        high = self.vertical_high.inverse(hl, hh)
        return self.horizontal.inverse(low, high)


def forward_stack(levels, x: Tensor) -> list[tuple[Tensor, Tensor, Tensor, Tensor]]:
    """Apply levels successively, each one to the previous LL band."""
    out = []
    for level in levels:
        bands = level(x)
        out.append(bands)
        x = bands[0]
    return out


def inverse_stack(levels, bands: list) -> Tensor:
    """Invert :func:`forward_stack` given every level's four sub-bands.

    Only the last level's LL is used; earlier LL bands are reconstructed.
    """
    ll = bands[-1][0]
    for level, (_, lh, hl, hh) in zip(reversed(list(levels)), reversed(bands)):
        ll = level.inverse(ll, lh, hl, hh)
    return ll
