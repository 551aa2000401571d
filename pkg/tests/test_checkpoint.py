import struct

import numpy as np
import pytest

from dawn.checkpoint import MAGIC, VERSION, CheckpointError, export_checkpoint, import_checkpoint, load_state, save_state
from dawn.model import DawnConfig, build
from dawn.tensor import Tensor, no_grad


@pytest.fixture
def trained_like(rng):
    model = build(DawnConfig(3, 16, 4, 2, num_classes=3), seed=2)
    for p in model.parameters():
        p.data[...] = rng.normal(size=p.shape)
    model(Tensor(rng.uniform(size=(4, 3, 16, 16))))  # moves batch-norm running stats
    return model.eval()


def test_round_trip_is_bitwise(tmp_path, trained_like, rng):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path, {"epoch": 3})
    loaded = import_checkpoint(path).eval()
    for (n, a), (m, b) in zip(trained_like.state_dict().items(), loaded.state_dict().items()):
        assert n == m and a.tobytes() == b.tobytes()
    x = Tensor(rng.uniform(size=(2, 3, 16, 16)))
    with no_grad():
        assert trained_like(x)[0].data.tobytes() == loaded(x)[0].data.tobytes()
    _, meta = load_state(path)
    assert meta["epoch"] == 3 and meta["config"]["init_channels"] == 4


def test_layout(tmp_path):
    path = tmp_path / "s.ckpt"
    save_state(path, {"a.w": np.arange(6, dtype=np.float32).reshape(2, 3)}, {"k": 1})
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    version, meta_len = struct.unpack("<II", raw[8:16])
    assert version == VERSION
    pos = 16 + meta_len
    (count,) = struct.unpack("<I", raw[pos : pos + 4])
    (name_len,) = struct.unpack("<H", raw[pos + 4 : pos + 6])
    assert count == 1 and raw[pos + 6 : pos + 6 + name_len] == b"a.w"
    pos += 6 + name_len
    assert raw[pos] == 2 and struct.unpack("<2I", raw[pos + 1 : pos + 9]) == (2, 3)
    np.testing.assert_array_equal(np.frombuffer(raw[pos + 9 :], "<f4"), np.arange(6))


def test_buffers_are_saved(tmp_path, trained_like):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path)
    state, _ = load_state(path)
    assert "initial.bn1.running_mean" in state
    names = list(state)
    n_params = len(trained_like.parameters())
    assert names[:n_params] == [n for n, _ in trained_like.named_parameters()]


def test_corrupted_magic(tmp_path, trained_like):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="magic"):
        import_checkpoint(path)


def test_wrong_version(tmp_path, trained_like):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path)
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version 99"):
        import_checkpoint(path)


def test_truncated(tmp_path, trained_like):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(CheckpointError, match="truncated"):
        load_state(path)


def test_shape_mismatch_names_parameter(tmp_path, trained_like):
    path = tmp_path / "m.ckpt"
    export_checkpoint(trained_like, path)
    with pytest.raises(CheckpointError, match=r"initial\.conv1\.weight"):
        import_checkpoint(path, DawnConfig(3, 16, 8, 2, num_classes=3))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        load_state(tmp_path / "nope.ckpt")
