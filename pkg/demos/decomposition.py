"""Sub-bands of a fixed linear lifting scheme (lazy update, averaging
predictor) on an image with horizontal and vertical edges.

A horizontal stripe lights up one detail band and a vertical stripe the
other; the flat background maps to mid-gray.
"""

import numpy as np

from dawn import DawnConfig, build
from dawn.visualize import decompose

cfg = DawnConfig(1, 32, 0, 2, 3, 1, 2, linear_lifting=True)
model = build(cfg)
for level in model.levels:
    for step in level.steps():
        step.updater.set_zero()
        step.predictor.set_center_copy()

img = np.full((1, 32, 32), 0.2, np.float32)
img[:, 9, :] = 1.0   # horizontal line
img[:, :, 21] = 1.0  # vertical line

dec = decompose(model, img)
for t, bands in enumerate(dec.bands):
    energy = {name: float(np.abs(b).sum()) for name, b in bands.items() if name != "LL"}
    print(f"level {t}:", ", ".join(f"{k} {v:.2f}" for k, v in energy.items()))
print("reconstruction error:", dec.max_error)

# save_decomposition(dec, "bands/") writes one PNG per band
