"""Any predictor/updater pair gives an invertible transform.

Random, untrained, nonlinear lifting levels are stacked three deep and
inverted. The error stays at float32 rounding level whatever the weights.
"""

import numpy as np

from dawn import Lifting2D, Tensor, no_grad
from dawn.lifting import forward_stack, inverse_stack

rng = np.random.default_rng(0)
levels = [Lifting2D(4, kernel_size=3, hidden_layers=1, rng=rng) for _ in range(3)]
x = Tensor(rng.normal(size=(8, 4, 32, 32)))

with no_grad():
    bands = forward_stack(levels, x)
    back = inverse_stack(levels, bands)

for t, (ll, lh, hl, hh) in enumerate(bands):
    print(f"level {t}: LL {ll.shape}, detail energy "
          f"{sum(float(np.square(b.data).mean()) for b in (lh, hl, hh)):.4f}")

print("max |x - inverse(forward(x))| =", float(np.abs(back.data - x.data).max()))

