"""Train a small DAWN on the synthetic texture task.

Four classes: horizontal gratings, vertical gratings, checkerboards and
noise. A few epochs with 8 initial channels are enough to separate them.
Run time is a few minutes on one core.
"""

from dawn import DawnConfig, TrainConfig, build, train
from dawn.data import synth_textures

train_set, test_set = synth_textures(4, 50, 32, seed=7, test_per_class=20)
model = build(DawnConfig(3, 32, 8, 3, 3, 1, 4), seed=0)
config = TrainConfig(lr=0.03, momentum=0.9, batch_size=16, epochs=60, seed=0)


def report(epoch, row):
    print(f"epoch {epoch:>2}  loss {row['loss_total']:.4f}  "
          f"ce {row['loss_ce']:.4f}  test acc {row['test_acc']:.3f}")
    return row["test_acc"] >= 0.95


history = train(model, train_set, config, test_set=test_set, on_epoch=report)
print(f"stopped after {len(history)} epochs")
