"""Checkpoint persistence: bitwise round trips and corruption handling."""

import numpy as np
import pytest

from videoground.checkpoint import (checkpoint_from_model, load_checkpoint,
                                    model_from_checkpoint, restore_model,
                                    restore_optimizer, save_checkpoint)
from videoground.config import ModelConfig
from videoground.errors import CheckpointError
from videoground.model import GroundingModel
from videoground.optim import Adam


def tiny_config(**overrides):
    base = dict(video_length=16, num_layers=3, d_v=4, d_s=4, d_f=4, d_h=4,
                vocab_size=5)
    base.update(overrides)
    return ModelConfig(**base)


def test_round_trip_restores_every_array(tmp_path):
    model = GroundingModel(tiny_config(), seed=1)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model, train_step=7))
    loaded = load_checkpoint(path)
    assert loaded.train_step == 7 and loaded.mode == "scdm"
    restored = model_from_checkpoint(loaded)
    for (name, p), (_, q) in zip(model.named_parameters(),
                                 restored.named_parameters()):
        # float32 payload: restored values are the float32 rounding of the originals
        np.testing.assert_array_equal(q.data, p.data.astype(np.float32).astype(np.float64),
                                      err_msg=name)


def test_save_load_save_is_bitwise_identical(tmp_path):
    model = GroundingModel(tiny_config(mode="none"), seed=2)
    opt = Adam(model.named_parameters())
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    save_checkpoint(first, checkpoint_from_model(model, opt, train_step=3))
    loaded = load_checkpoint(first)
    save_checkpoint(second, loaded)
    assert first.read_bytes() == second.read_bytes()


def test_optimizer_state_round_trip(tmp_path):
    model = GroundingModel(tiny_config(), seed=3)
    opt = Adam(model.named_parameters(), lr=1e-2)
    rng = np.random.default_rng(4)
    for _ in range(3):
        for _, p in model.named_parameters():
            p.grad = rng.normal(size=p.data.shape)
        opt.step()
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model, opt, train_step=3))
    loaded = load_checkpoint(path)
    fresh_model = model_from_checkpoint(loaded)
    fresh_opt = Adam(fresh_model.named_parameters(), lr=1e-2)
    restore_optimizer(loaded, fresh_opt)
    assert fresh_opt.step_count == 3
    for name in fresh_opt.m:
        np.testing.assert_array_equal(
            fresh_opt.m[name], opt.m[name].astype(np.float32).astype(np.float64))


def test_mode_mismatch_refused(tmp_path):
    model = GroundingModel(tiny_config(mode="scdm"), seed=5)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model))
    other = GroundingModel(tiny_config(mode="mul"), seed=5)
    with pytest.raises(CheckpointError, match="mode"):
        restore_model(load_checkpoint(path), other)


def test_shape_mismatch_refused(tmp_path):
    model = GroundingModel(tiny_config(), seed=6)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model))
    bigger = GroundingModel(tiny_config(d_h=8, d_s=8), seed=6)
    with pytest.raises(CheckpointError, match="shape"):
        restore_model(load_checkpoint(path), bigger)


def test_truncated_file_is_a_load_error(tmp_path):
    model = GroundingModel(tiny_config(), seed=7)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model))
    blob = path.read_bytes()
    for cut in (2, 6, len(blob) // 2, len(blob) - 3):
        clipped = tmp_path / f"cut{cut}.bin"
        clipped.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(clipped)


def test_bad_magic_and_garbage_header(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)
    model = GroundingModel(tiny_config(), seed=8)
    good = tmp_path / "good.bin"
    save_checkpoint(good, checkpoint_from_model(model))
    blob = bytearray(good.read_bytes())
    blob[10] = 0xFF  # corrupt the JSON header
    bad = tmp_path / "corrupt.bin"
    bad.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_unknown_version_rejected(tmp_path):
    model = GroundingModel(tiny_config(), seed=9)
    path = tmp_path / "ckpt.bin"
    ckpt = checkpoint_from_model(model)
    ckpt.format_version = 2
    save_checkpoint(path, ckpt)
    with pytest.raises(CheckpointError, match="format_version"):
        load_checkpoint(path)


def test_batch_norm_buffers_are_persisted(tmp_path):
    model = GroundingModel(tiny_config(mode="none"), seed=10)
    for name, _ in model.buffers():
        model.conditioner.set_buffer(
            name, np.random.default_rng(11).normal(size=4))
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, checkpoint_from_model(model))
    restored = model_from_checkpoint(load_checkpoint(path))
    for (name, buf), (_, got) in zip(model.buffers(), restored.buffers()):
        np.testing.assert_array_equal(
            got, buf.astype(np.float32).astype(np.float64), err_msg=name)
