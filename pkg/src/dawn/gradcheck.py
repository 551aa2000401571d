"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, precision


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    n_checked: int
    tolerance: float
    worst: Optional[tuple] = None  # (tensor label, flat index, analytic, numeric)
    errors: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: max rel err {self.max_rel_error:.3e} over {self.n_checked} coordinates "
            f"(tol {self.tolerance:.0e})"
        )


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-6,
    tolerance: float = 1e-3,
    n_samples: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f()`` with central differences.

    The check runs in 64-bit: ``params`` are temporarily upcast and restored
    afterwards, and ``f`` should create any other tensors it needs inside the
    call so they pick up the 64-bit default. ``n_samples`` coordinates are
    drawn without replacement across all params (all of them when None).

    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``;
    the floor keeps near-zero gradients from amplifying rounding noise.
    """
    params = list(params)
    saved = [(p.data, p.grad, p.requires_grad) for p in params]
    try:
        with precision(np.float64):
            for p in params:
                p.data = p.data.astype(np.float64)
                p.grad = np.zeros_like(p.data)
                p.requires_grad = True

            out = f()
            if out.size != 1:
                raise ValueError("grad_check needs a scalar-valued function")
            out.backward()
            analytic = [p.grad.copy() for p in params]

            coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
            if n_samples is not None and n_samples < len(coords):
                rng = np.random.default_rng(seed)
                picked = rng.choice(len(coords), size=n_samples, replace=False)
                coords = [coords[k] for k in np.sort(picked)]

            errors = []
            worst = None
            worst_err = -1.0
            for i, j in coords:
                flat = params[i].data.reshape(-1)
                orig = flat[j]
                flat[j] = orig + epsilon
                fp = _probe(f)
                flat[j] = orig - epsilon
                fm = _probe(f)
                flat[j] = orig
                numeric = (fp - fm) / (2.0 * epsilon)
                a = float(analytic[i].reshape(-1)[j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                errors.append(err)
                if err > worst_err:
                    worst_err = err
                    label = getattr(params[i], "name", "") or f"param[{i}]"
                    worst = (label, j, a, numeric)
    finally:
        for p, (data, grad, tracked) in zip(params, saved):
            p.data = data
            p.grad = grad
            p.requires_grad = tracked

    errs = np.asarray(errors) if errors else np.zeros(1)
    return GradCheckReport(
        max_rel_error=float(errs.max()),
        mean_rel_error=float(errs.mean()),
        n_checked=len(errors),
        tolerance=tolerance,
        worst=worst,
        errors=errors,
    )


def _probe(f: Callable[[], Tensor]) -> float:
    val = f().item()
    if not np.isfinite(val):
        raise FloatingPointError("non-finite value while probing finite differences")
    return val
