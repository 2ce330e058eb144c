"""Synthetic task generator and dataset-file round trips."""

import json

import numpy as np
import pytest

from videoground.config import SynthConfig
from videoground.errors import ConfigError, InputError
from videoground.synth import gen_synthetic, ingest, read_dataset, write_dataset


def small_config(**overrides):
    base = dict(num_prototypes=4, d_v=6, video_length=32, noise_sigma=0.05,
                seed=0, train_size=12, val_size=4, test_size=6,
                min_width=0.125, max_width=0.5)
    base.update(overrides)
    return SynthConfig(**base)


def test_same_seed_is_bitwise_identical():
    a = gen_synthetic(small_config())
    b = gen_synthetic(small_config())
    for split in ("train", "val", "test"):
        for ea, eb in zip(a[split].examples, b[split].examples):
            assert ea.id == eb.id and ea.tokens == eb.tokens
            np.testing.assert_array_equal(ea.video.clips, eb.video.clips)
            assert (ea.gt.start, ea.gt.end) == (eb.gt.start, eb.gt.end)


def test_different_seed_changes_the_data():
    a = gen_synthetic(small_config())["train"].examples[0]
    b = gen_synthetic(small_config(seed=1))["train"].examples[0]
    assert not np.array_equal(a.video.clips, b.video.clips)


def test_zero_noise_plants_the_prototype_exactly():
    splits = gen_synthetic(small_config(num_prototypes=1, noise_sigma=0.0))
    ex = splits["train"].examples[0]
    t = 32
    lo = round(ex.gt.start * t)
    hi = round(ex.gt.end * t)
    inside = ex.video.clips[lo:hi]
    assert np.array_equal(inside, np.tile(inside[0], (hi - lo, 1)))
    assert np.linalg.norm(inside[0]) == pytest.approx(1.0)
    np.testing.assert_array_equal(ex.video.clips[:lo], 0.0)
    np.testing.assert_array_equal(ex.video.clips[hi:], 0.0)


def test_widths_respect_the_configured_bounds():
    cfg = small_config(train_size=10_000, val_size=0, test_size=0,
                       min_width=0.2, max_width=0.45)
    widths = [ex.gt.end - ex.gt.start for ex in gen_synthetic(cfg)["train"].examples]
    assert len(widths) == 10_000
    assert min(widths) >= 0.2 - 1e-12
    assert max(widths) <= 0.45 + 1e-12


def test_gt_stays_inside_the_valid_span():
    for ex in gen_synthetic(small_config(train_size=100))["train"].examples:
        assert 0.0 <= ex.gt.start < ex.gt.end <= ex.video.valid_length / 32


def test_compositional_mode_places_two_prototypes():
    cfg = small_config(compositional=True, noise_sigma=0.0, train_size=50)
    for ex in gen_synthetic(cfg)["train"].examples:
        assert len(ex.tokens) == 2 and ex.tokens[0] != ex.tokens[1]
        t = 32
        lo, hi = round(ex.gt.start * t), round(ex.gt.end * t)
        rows = {tuple(r) for r in np.round(ex.video.clips[lo:hi], 12)}
        assert len(rows) == 2  # two distinct signatures inside the span


def test_infeasible_width_bounds_rejected():
    with pytest.raises(ConfigError):
        small_config(min_width=0.6, max_width=0.5)
    with pytest.raises(ConfigError):
        small_config(min_width=0.0)
    with pytest.raises(ConfigError):
        # only width-1 spans admissible but compositional needs two clips
        SynthConfig(num_prototypes=4, d_v=6, video_length=32, seed=0,
                    min_width=0.01, max_width=0.04, compositional=True)


def test_prototypes_distinguishable_or_error():
    with pytest.raises(ConfigError):
        gen_synthetic(small_config(num_prototypes=64, d_v=2, noise_sigma=0.4))


def test_dataset_file_round_trip(tmp_path):
    splits = gen_synthetic(small_config())
    path = tmp_path / "train.jsonl"
    write_dataset(path, splits["train"])
    loaded = read_dataset(path)
    assert loaded.d_v == 6
    assert loaded.vocabulary.token_to_index == splits["train"].vocabulary.token_to_index
    for orig, back in zip(splits["train"].examples, loaded.examples):
        assert orig.id == back.id and orig.tokens == back.tokens
        np.testing.assert_array_equal(orig.video.clips, back.video.clips)
        assert back.gt.start == orig.gt.start and back.gt.end == orig.gt.end


def test_read_applies_truncate_and_pad(tmp_path):
    splits = gen_synthetic(small_config())
    path = tmp_path / "train.jsonl"
    write_dataset(path, splits["train"])
    longer = read_dataset(path, video_length=64)
    for ex in longer.examples:
        assert ex.video.clips.shape[0] == 64
        assert ex.video.valid_length == 32
        np.testing.assert_array_equal(ex.video.clips[32:], 0.0)
        assert ex.gt.end <= 0.5 + 1e-12  # rescaled onto the padded timeline


def test_ingest_truncation_rescales_and_clips():
    video = np.ones((40, 3))
    seq, gt = ingest(video, gt_start=0.25, gt_end=0.5, video_length=20)
    # raw clips 10..20 -> model time (10/40)*(40/20) .. capped at 1.0
    assert seq.clips.shape == (20, 3) and seq.valid_length == 20
    assert gt.start == pytest.approx(0.5)
    assert gt.end == 1.0


def test_ingest_rejects_vanished_ground_truth():
    video = np.ones((40, 3))
    with pytest.raises(InputError):
        ingest(video, gt_start=0.9, gt_end=1.0, video_length=20)


def test_read_errors(tmp_path):
    missing = tmp_path / "nope.jsonl"
    with pytest.raises(InputError):
        read_dataset(missing)

    bad_header = tmp_path / "bad.jsonl"
    bad_header.write_text("not json\n")
    with pytest.raises(InputError):
        read_dataset(bad_header)

    wrong_version = tmp_path / "version.jsonl"
    wrong_version.write_text(json.dumps(
        {"format_version": 99, "d_v": 2, "vocabulary": {"<pad>": 0}}) + "\n")
    with pytest.raises(InputError, match="format_version"):
        read_dataset(wrong_version)

    bad_record = tmp_path / "record.jsonl"
    bad_record.write_text(
        json.dumps({"format_version": 1, "d_v": 2, "vocabulary": {"<pad>": 0}})
        + "\n" + json.dumps({"id": "x", "tokens": [1]}) + "\n")
    with pytest.raises(InputError, match="record"):
        read_dataset(bad_record)
