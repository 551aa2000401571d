"""Self-checks shared by the test suite and ``dawn gradcheck``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .lifting import Lifting2D, LiftingStep, forward_stack, inverse_stack
from .model import DawnConfig, DawnModel
from .tensor import Tensor, no_grad
from .training import TrainConfig, composite_loss


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.value < self.threshold

    def __str__(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (< {self.threshold:.0e})"


def _leaf(rng, shape, positive=False):
    data = rng.uniform(0.1, 1.0, size=shape) if positive else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def op_cases(rng: np.random.Generator):
    """One randomly shaped grad-check case per differentiable op.

    Each item is ``(name, f, leaves)`` where ``f()`` is a scalar function of
    ``leaves`` (weighted by a fixed random projection so every output
    coordinate matters).
    """
    def proj(t: Tensor, w: np.ndarray) -> Tensor:
        return (t * Tensor(w)).sum()

    B, C = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    H, W = 2 * int(rng.integers(2, 4)), 2 * int(rng.integers(2, 4))
    F, kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    x = _leaf(rng, (B, C, H, W))
    w = _leaf(rng, (F, C, kh, kw))
    b = _leaf(rng, (F,))
    Ho, Wo = (H - kh) // stride[0] + 1, (W - kw) // stride[1] + 1
    pw = rng.normal(size=(B, F, Ho, Wo))
    yield "conv2d", lambda: proj(ops.conv2d(x, w, b, stride), pw), [x, w, b]

    pad = tuple(int(v) for v in rng.integers(0, 2, size=4))
    xp = _leaf(rng, (B, C, H, W))
    ppw = rng.normal(size=(B, C, H + pad[0] + pad[1], W + pad[2] + pad[3]))
    yield "reflect_pad", lambda: proj(ops.reflect_pad(xp, pad), ppw), [xp]

    xa = _leaf(rng, (B, C, H, W))
    apw = rng.normal(size=(B, C, H // 2, W // 2))
    yield "avg_pool", lambda: proj(ops.avg_pool(xa, 2), apw), [xa]

    xb = _leaf(rng, (B + 1, C, H, W))
    gamma = _leaf(rng, (C,), positive=True)
    beta = _leaf(rng, (C,))
    rm, rv = np.zeros(C), np.ones(C)
    bpw = rng.normal(size=xb.shape)
    yield "batch_norm", lambda: proj(ops.batch_norm(xb, gamma, beta, rm.copy(), rv.copy(), True), bpw), [
        xb,
        gamma,
        beta,
    ]
    yield "batch_norm_eval", lambda: proj(
        ops.batch_norm(xb, gamma, beta, np.full(C, 0.3), np.full(C, 1.7), False), bpw
    ), [xb, gamma, beta]

    # keep relu inputs away from the kink
    xr_data = rng.normal(size=(B, C, H, W))
    xr_data += np.sign(xr_data) * 0.05
    xr = Tensor(xr_data, requires_grad=True)
    rpw = rng.normal(size=xr.shape)
    yield "relu", lambda: proj(ops.relu(xr), rpw), [xr]
    xt = _leaf(rng, (B, C, H, W))
    yield "tanh", lambda: proj(ops.tanh_act(xt), rpw), [xt]

    xg = _leaf(rng, (B, C, H, W))
    gpw = rng.normal(size=(B, C))
    yield "global_avg_pool", lambda: proj(ops.global_avg_pool(xg), gpw), [xg]

    N, P = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    xd, wd, bd = _leaf(rng, (B, N)), _leaf(rng, (P, N)), _leaf(rng, (P,))
    dpw = rng.normal(size=(B, P))
    yield "dense", lambda: proj(ops.dense(xd, wd, bd), dpw), [xd, wd, bd]

    xl = _leaf(rng, (B, P))
    yield "log_softmax", lambda: proj(ops.log_softmax(xl), dpw), [xl]

    xc1, xc2 = _leaf(rng, (B, N)), _leaf(rng, (B, P))
    cpw = rng.normal(size=(B, N + P))
    yield "concat", lambda: proj(ops.concat([xc1, xc2], axis=1), cpw), [xc1, xc2]

    xe, xo = _leaf(rng, (B, C, H, W)), _leaf(rng, (B, C, H, W))
    ipw = rng.normal(size=(B, C, H, 2 * W))
    yield "interleave", lambda: proj(ops.interleave(xe, xo, 3), ipw), [xe, xo]

    xh_data = rng.normal(scale=2.0, size=(B, C, H, W))
    near = np.abs(np.abs(xh_data) - 1.0) < 0.05
    xh_data[near] += 0.1 * np.sign(xh_data[near])
    xh = Tensor(xh_data, requires_grad=True)
    yield "huber_sum", lambda: ops.huber_sum(xh, 1.0), [xh]

    xn = _leaf(rng, (B, P))
    labels = rng.integers(0, P, size=B)
    yield "nll_loss", lambda: ops.nll_loss(ops.log_softmax(xn), labels), [xn]

    xs = _leaf(rng, (B, C, H, W))
    spw = rng.normal(size=(B, C, H // 2, W // 2))
    yield "getitem", lambda: proj(xs[:, :, ::2, 1::2], spw), [xs]


def op_gradchecks(n_shapes: int = 20, seed: int = 0, tolerance: float = 1e-3) -> dict:
    """Grad-check every op on ``n_shapes`` random shapes; worst error per op."""
    worst: dict = {}
    for s in range(n_shapes):
        rng = np.random.default_rng([seed, s])
        for name, f, leaves in op_cases(rng):
            rep = grad_check(f, leaves, epsilon=1e-6, tolerance=tolerance)
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_error)
    return worst


def model_gradcheck(n_samples: int = 200, seed: int = 0, tolerance: float = 1e-3) -> GradCheckReport:
    """Composite loss of a 2-level toy model on a [2,3,16,16] batch."""
    cfg = DawnConfig(input_channels=3, input_size=16, init_channels=4, levels=2, num_classes=5)
    model = DawnModel(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    images = rng.uniform(0, 1, size=(2, 3, 16, 16))
    labels = np.array([1, 3])
    tc = TrainConfig()

    def f():
        log_probs, levels = model(Tensor(images))
        return composite_loss(log_probs, levels, labels, tc).loss

    return grad_check(f, model.parameters(), epsilon=1e-6, tolerance=tolerance, n_samples=n_samples, seed=seed)


def reconstruction_errors(trials: int = 100, seed: int = 0) -> dict:
    """Worst inverse-of-forward error for a step, a level and a 3-level stack,
    each with fresh random nonlinear parameters per trial."""
    worst = {"step": 0.0, "level": 0.0, "stack3": 0.0}
    with no_grad():
        for t in range(trials):
            rng = np.random.default_rng([seed, t])
            B, C = int(rng.integers(1, 3)), int(rng.integers(1, 4))
            k = int(rng.integers(1, 5))
            direction = "horizontal" if t % 2 else "vertical"
            x = Tensor(rng.normal(size=(B, C, 16, 16)))
            step = LiftingStep(C, direction, kernel_size=k, rng=rng)
            _randomize_biases(step, rng)
            c, d = step(x)
            worst["step"] = max(worst["step"], _maxerr(step.inverse(c, d), x))
            level = Lifting2D(C, kernel_size=k, rng=rng)
            _randomize_biases(level, rng)
            bands = level(x)
            worst["level"] = max(worst["level"], _maxerr(level.inverse(*bands), x))
            x32 = Tensor(rng.normal(size=(B, C, 32, 32)))
            stack = [Lifting2D(C, kernel_size=k, rng=rng) for _ in range(3)]
            for lv in stack:
                _randomize_biases(lv, rng)
            out = forward_stack(stack, x32)
            worst["stack3"] = max(worst["stack3"], _maxerr(inverse_stack(stack, out), x32))
    return worst


def _randomize_biases(module, rng):
    for name, p in module.named_parameters():
        if name.endswith("bias"):
            p.data[...] = rng.normal(scale=0.1, size=p.shape)


def _maxerr(a: Tensor, b: Tensor) -> float:
    return float(np.max(np.abs(a.data.astype(np.float64) - b.data)))


def run_all(seed: int = 0, n_shapes: int = 20) -> list:
    results = []
    for name, err in op_gradchecks(n_shapes=n_shapes, seed=seed).items():
        results.append(CheckResult(f"grad[{name}]", err, 1e-3))
    rep = model_gradcheck(seed=seed)
    results.append(CheckResult("grad[composite loss, 2-level model]", rep.max_rel_error, 1e-3))
    for name, err in reconstruction_errors(seed=seed).items():
        results.append(CheckResult(f"reconstruction[{name}]", err, 1e-5))
    return results
