"""Closed-form parameter counts for the k/h/l sweep at 64 initial channels
and 100 classes, next to the published reference totals."""

from dawn import DawnConfig, param_count
from dawn.model import PUBLISHED_COUNTS

print(f"{'k':>2} {'h':>2} {'l':>2} {'ours':>10} {'reference':>10} {'dev':>8}")
for (k, h, l), ref in sorted(PUBLISHED_COUNTS.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0])):
    ours = param_count(DawnConfig(3, 32, 64, l, k, h, 100)).total
    print(f"{k:>2} {h:>2} {l:>2} {ours:>10,} {ref:>10,} {100 * (ours - ref) / ref:>+7.2f}%")

# where the parameters live for the default configuration
pc = param_count(DawnConfig(3, 32, 64, 3, 3, 1, 100))
for name, n in pc.breakdown.items():
    print(f"  {name:<10} {n:>9,}")
