import csv

import numpy as np
import pytest

from dawn import ops
from dawn.data import Dataset, random_images
from dawn.model import DawnConfig, build
from dawn.tensor import Tensor
from dawn.training import (
    HISTORY_COLUMNS,
    RECIPES,
    SGD,
    NonFiniteLossError,
    TrainConfig,
    clip_grad_norm,
    composite_loss,
    cross_entropy,
    evaluate,
    huber_sum,
    lr_at,
    mean_reg_term,
    per_class_accuracy,
    sgd_momentum_step,
    train,
)
from oracles import cross_entropy_scalar, huber_scalar, mean_scalar


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


# -- loss terms ------------------------------------------------------------------


def test_huber_examples():
    assert huber_sum(T(np.zeros(5))).item() == 0.0
    assert huber_sum(T([0.5]), 1.0).item() == pytest.approx(0.125, abs=1e-6)
    assert huber_sum(T([2.0, -3.0]), 1.0).item() == pytest.approx(4.0, abs=1e-6)


def test_huber_matches_scalar_oracle(rng):
    x = rng.normal(scale=2.0, size=200)
    for delta in (0.3, 1.0, 2.5):
        assert huber_sum(T(x), delta).item() == pytest.approx(huber_scalar(x, delta), rel=1e-6)


def test_mean_reg_examples(rng):
    a = rng.normal(size=(2, 3, 4, 4))
    assert mean_reg_term(T(a), T(a[:, :, ::2, ::2] - a[:, :, ::2, ::2].mean() + a.mean())).item() == pytest.approx(0.0, abs=1e-12)
    assert mean_reg_term(T(np.full((1, 1, 2, 2), 1.0)), T(np.full((1, 1, 1, 1), 0.5))).item() == pytest.approx(0.25, abs=1e-6)
    b = rng.normal(size=(2, 3, 2, 2))
    base = mean_reg_term(T(a), T(b)).item()
    assert mean_reg_term(T(3.0 * a), T(3.0 * b)).item() == pytest.approx(9.0 * base, rel=1e-6)


def test_cross_entropy_examples():
    lp = ops.log_softmax(T(np.zeros((4, 10))))
    assert cross_entropy(lp, [0, 1, 2, 3]).item() == pytest.approx(2.302585, abs=1e-6)
    confident = ops.log_softmax(T([[40.0, 0.0, 0.0]]))
    assert cross_entropy(confident, [0]).item() == pytest.approx(0.0, abs=1e-6)
    lp = ops.log_softmax(T([[1.0, 2.0], [0.5, -1.0]]))
    per = -lp.data[[0, 1], [1, 0]]
    assert cross_entropy(lp, [1, 0]).item() == pytest.approx(per.mean())
    with pytest.raises(ValueError):
        cross_entropy(lp, [2, 0])


@pytest.fixture
def small_forward(rng):
    model = build(DawnConfig(3, 16, 4, 2, num_classes=5), seed=3)
    for name, p in model.named_parameters():
        if name.endswith("bias"):
            p.data[...] = rng.normal(scale=0.2, size=p.shape)
    x = rng.uniform(size=(3, 3, 16, 16))
    labels = np.array([0, 4, 2])
    log_probs, levels = model(Tensor(x))
    return model, log_probs, levels, labels


def test_lambda_zero_gives_cross_entropy(small_forward):
    _, lp, levels, labels = small_forward
    br = composite_loss(lp, levels, labels, TrainConfig(lambda1=0.0, lambda2=0.0))
    assert br.total == br.cross_entropy


def test_zero_details_and_preserved_mean_give_cross_entropy(rng):
    from dawn.model import LevelOutput

    inp = T(rng.normal(size=(2, 3, 8, 8)))
    ll = T(np.full((2, 3, 4, 4), inp.data.mean()))
    z = T(np.zeros((2, 3, 4, 4)))
    lp = ops.log_softmax(T(rng.normal(size=(2, 4))))
    br = composite_loss(lp, [LevelOutput(inp, ll, z, z, z)], [1, 3], TrainConfig(lambda1=5.0, lambda2=7.0))
    assert br.total == pytest.approx(br.cross_entropy, rel=1e-6)


def test_composite_matches_independent_recomputation(small_forward):
    _, lp, levels, labels = small_forward
    cfg = TrainConfig(lambda1=0.3, lambda2=0.7, huber_delta=0.5)
    br = composite_loss(lp, levels, labels, cfg)
    logits_equiv = lp.data.astype(np.float64)  # log-probs are valid logits
    ce = cross_entropy_scalar(logits_equiv, labels)
    hub, mr = [], []
    for lv in levels:
        d = np.concatenate([b.data.reshape(-1) for b in lv.details])
        hub.append(huber_scalar(d, 0.5) / d.size)
        mr.append((mean_scalar(lv.input.data.ravel()) - mean_scalar(lv.LL.data.ravel())) ** 2)
    expected = ce + 0.3 * sum(hub) + 0.7 * sum(mr)
    assert br.cross_entropy == pytest.approx(ce, rel=1e-6)
    assert br.huber_levels == pytest.approx(hub, rel=1e-5)
    assert br.mean_levels == pytest.approx(mr, rel=1e-4, abs=1e-9)
    assert br.total == pytest.approx(expected, rel=1e-6)


def test_breakdown_additivity(small_forward):
    _, lp, levels, labels = small_forward
    cfg = TrainConfig()
    br = composite_loss(lp, levels, labels, cfg)
    assert len(br.huber_levels) == len(br.mean_levels) == 2
    assert br.total == pytest.approx(br.cross_entropy + 0.1 * br.huber_reg + 0.1 * br.mean_reg, rel=1e-6)
    assert br.loss.item() == br.total


def test_non_finite_loss_names_the_term(small_forward):
    from dawn.model import LevelOutput

    _, lp, levels, labels = small_forward
    huge = Tensor(np.full((3, 4, 4, 4), 3e38, dtype=np.float32))
    bad = [levels[0], LevelOutput(levels[1].input, levels[1].LL, huge, huge, huge)]
    with pytest.raises(NonFiniteLossError, match=r"huber\[level1\]"), np.errstate(over="ignore"):
        composite_loss(lp, bad, labels, TrainConfig())


# -- optimizer and schedule -----------------------------------------------------------


def test_plain_sgd_example():
    p, v = np.zeros(1), np.zeros(1)
    sgd_momentum_step([p], [np.ones(1)], [v], lr=0.1, momentum=0.0)
    assert p[0] == pytest.approx(-0.1)


def test_momentum_two_steps():
    p, v = np.zeros(1), np.zeros(1)
    sgd_momentum_step([p], [np.ones(1)], [v], lr=1.0, momentum=0.9)
    assert p[0] == pytest.approx(-1.0)
    sgd_momentum_step([p], [np.ones(1)], [v], lr=1.0, momentum=0.9)
    assert p[0] == pytest.approx(-2.9) and v[0] == pytest.approx(1.9)


def test_zero_gradient_decays_velocity():
    p, v = np.array([2.0]), np.array([1.0])
    sgd_momentum_step([p], [np.zeros(1)], [v], lr=0.0, momentum=0.9)
    assert p[0] == 2.0 and v[0] == pytest.approx(0.9)


def test_momentum_zero_is_gradient_descent_exactly(rng):
    p = rng.normal(size=10).astype(np.float32)
    g = rng.normal(size=10).astype(np.float32)
    expected = p - np.float32(0.03) * g
    sgd_momentum_step([p], [g], [np.zeros_like(p)], lr=0.03, momentum=0.0)
    assert np.array_equal(p, expected)


def test_sgd_shape_mismatch():
    with pytest.raises(ValueError):
        sgd_momentum_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], 0.1, 0.9)


def test_sgd_class_zeroes_and_steps():
    w = Tensor(np.ones(3), requires_grad=True)
    opt = SGD([w], lr=0.5, momentum=0.0)
    (w * w).sum().backward()
    opt.step()
    np.testing.assert_allclose(w.data, 0.0)
    opt.zero_grad()
    assert not np.any(w.grad)


def test_lr_schedule_cifar():
    cfg = TrainConfig.from_recipe("cifar")
    assert lr_at(149, cfg) == 0.03
    assert lr_at(150, cfg) == pytest.approx(0.003)
    assert lr_at(254, cfg) == pytest.approx(0.003)
    assert lr_at(255, cfg) == pytest.approx(0.0003)
    assert lr_at(300, cfg) == pytest.approx(0.0003)


def test_lr_schedule_properties():
    cfg = TrainConfig.from_recipe("kth")
    rates = [lr_at(e, cfg) for e in range(1, cfg.epochs + 1)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    drops = sum(1 for a, b in zip(rates, rates[1:]) if b < a)
    assert drops == len(cfg.decay_epochs) == 2
    assert lr_at(29, cfg) == 0.03 and lr_at(30, cfg) == pytest.approx(0.003) and lr_at(60, cfg) == pytest.approx(0.0003)
    flat = TrainConfig(epochs=5)
    assert {lr_at(e, flat) for e in range(1, 6)} == {0.03}
    with pytest.raises(ValueError):
        lr_at(0, flat)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=10, decay_epochs=[5, 5]).validate()
    with pytest.raises(ValueError):
        TrainConfig(epochs=10, decay_epochs=[11]).validate()
    with pytest.raises(ValueError):
        TrainConfig(lambda1=-1).validate()
    with pytest.raises(ValueError):
        TrainConfig.from_recipe("imagenet")
    assert RECIPES["cifar"]["batch_size"] == 64 and RECIPES["kth"]["batch_size"] == 16


def test_clip_grad_norm():
    w = Tensor(np.ones(4), requires_grad=True)
    w.grad[...] = 3.0
    assert clip_grad_norm([w], 1.0) == pytest.approx(6.0)
    assert np.linalg.norm(w.grad) == pytest.approx(1.0, rel=1e-5)


# -- loops ---------------------------------------------------------------------------


def tiny_model(classes=4, seed=0):
    return build(DawnConfig(3, 16, 4, 2, num_classes=classes), seed=seed)


def test_one_epoch_on_four_samples():
    data = random_images(4, 16, 4, seed=1)
    hist = train(tiny_model(), data, TrainConfig(epochs=1, batch_size=2))
    assert len(hist) == 1
    row = hist[0]
    for key in HISTORY_COLUMNS:
        if key in ("test_acc", "wall_seconds"):
            continue
        assert np.isfinite(row[key]), key


def test_additivity_on_every_step():
    data = random_images(12, 16, 4, seed=2)
    seen = []

    def check(epoch, b, br):
        seen.append((epoch, b))
        assert br.total == pytest.approx(br.cross_entropy + 0.2 * br.huber_reg + 0.05 * br.mean_reg, rel=1e-6)

    train(tiny_model(), data, TrainConfig(epochs=2, batch_size=5, lambda1=0.2, lambda2=0.05), on_step=check)
    assert seen == [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]


def test_outputs_and_determinism(tmp_path):
    data = random_images(16, 16, 4, seed=3)
    test = random_images(8, 16, 4, seed=4)
    cfg = TrainConfig(epochs=3, batch_size=4, seed=11, augment_pad=2, augment_mirror=True, decay_epochs=[2])
    runs = []
    for name in ("a", "b"):
        train(tiny_model(seed=5), data, cfg, test_set=test, out_dir=tmp_path / name)
        runs.append(tmp_path / name)
    for fname in ("history.csv", "final.ckpt", "best.ckpt"):
        assert (runs[0] / fname).read_bytes() == (runs[1] / fname).read_bytes(), fname
    with open(runs[0] / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(HISTORY_COLUMNS)
    assert [float(r["lr"]) for r in rows] == pytest.approx([0.03, 0.003, 0.003])


def test_different_seed_changes_the_run(tmp_path):
    data = random_images(16, 16, 4, seed=3)
    h1 = train(tiny_model(), data, TrainConfig(epochs=1, batch_size=4, seed=1))
    h2 = train(tiny_model(), data, TrainConfig(epochs=1, batch_size=4, seed=2))
    assert h1[0]["loss_total"] != h2[0]["loss_total"]


def test_memorized_set_evaluates_to_one():
    data = random_images(16, 16, 4, seed=6)
    model = tiny_model()
    train(model, data, TrainConfig(epochs=200, batch_size=8), on_epoch=lambda e, r: evaluate(model, data) == 1.0)
    assert evaluate(model, data) == 1.0


def test_per_class_accuracy_averages_to_top1(rng):
    data = random_images(20, 16, 4, seed=7)
    model = tiny_model()
    acc = evaluate(model, data)
    table = per_class_accuracy(model, data)
    weighted = sum(a * n for a, n in table.values() if n) / len(data)
    assert weighted == pytest.approx(acc)


def test_non_finite_training_aborts():
    data = random_images(8, 16, 4, seed=8)
    with pytest.raises(NonFiniteLossError, match=r"lambda1\*huber\[level0\]"), np.errstate(all="ignore"):
        train(tiny_model(), data, TrainConfig(epochs=1, batch_size=8, lambda1=1e60))


def test_non_finite_forward_aborts():
    data = random_images(8, 16, 4, seed=8)
    model = tiny_model()
    model.classifier.weight.data[...] = 3e38
    with pytest.raises(NonFiniteLossError, match="forward pass"), np.errstate(all="ignore"):
        train(model, data, TrainConfig(epochs=1, batch_size=8))


def test_empty_dataset_rejected():
    empty = Dataset(np.zeros((0, 3, 16, 16)), np.zeros(0), ["a"])
    with pytest.raises(ValueError):
        train(tiny_model(), empty, TrainConfig(epochs=1))
