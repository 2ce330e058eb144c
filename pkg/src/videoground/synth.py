"""Synthetic grounding tasks and the line-delimited dataset format.

A task plants one prototype signature (or two back to back in compositional
mode) into a noisy feature sequence; the query tokens name the planted
prototypes and the ground truth is the planted span. Everything is a pure
function of the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SynthConfig
from .errors import ConfigError, InputError
from .fusion import VideoFeatureSequence
from .objective import Segment
from .text_encoder import Vocabulary

DATASET_FORMAT_VERSION = 1


@dataclass
class GroundingExample:
    id: str
    video: VideoFeatureSequence
    tokens: list[int]
    gt: Segment


@dataclass
class Dataset:
    d_v: int
    vocabulary: Vocabulary
    examples: list[GroundingExample]

    def __len__(self) -> int:
        return len(self.examples)


def _make_prototypes(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm signature vectors with pairwise distance above 4*noise_sigma.

    When the prototypes fit into the feature dimension they are drawn as a
    random orthonormal bank (pairwise distance sqrt(2), the most separable
    choice); otherwise random unit vectors are rejection-sampled."""
    required = 4.0 * cfg.noise_sigma
    if cfg.num_prototypes <= cfg.d_v:
        square = rng.normal(size=(cfg.d_v, cfg.d_v))
        q, r = np.linalg.qr(square)
        q *= np.sign(np.diag(r))  # canonical sign, deterministic per seed
        protos = q.T[:cfg.num_prototypes].copy()
        if cfg.num_prototypes == 1 or np.sqrt(2.0) > required:
            return protos
        raise ConfigError(
            f"orthonormal prototypes have pairwise distance sqrt(2) <= "
            f"4*noise_sigma = {required:.3f}; lower noise_sigma")
    for _ in range(16):
        protos = rng.normal(size=(cfg.num_prototypes, cfg.d_v))
        protos /= np.linalg.norm(protos, axis=1, keepdims=True)
        dists = np.linalg.norm(protos[:, None, :] - protos[None, :, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        if dists.min() > required:
            return protos
    raise ConfigError(
        f"could not draw {cfg.num_prototypes} prototypes with pairwise distance "
        f"> {required:.3f} in {cfg.d_v} dims; lower noise_sigma or num_prototypes"
    )


def _gen_example(cfg: SynthConfig, protos: np.ndarray, rng: np.random.Generator,
                 ident: str) -> GroundingExample:
    t = cfg.video_length
    lo, hi = cfg.width_bounds_clips()
    width = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(0, t - width + 1))
    video = cfg.noise_sigma * rng.normal(size=(t, cfg.d_v))
    if cfg.compositional:
        p1, p2 = rng.choice(cfg.num_prototypes, size=2, replace=False)
        split = int(rng.integers(1, width))  # both halves non-empty
        video[start:start + split] += protos[p1]
        video[start + split:start + width] += protos[p2]
        tokens = [int(p1) + 1, int(p2) + 1]
    else:
        p = int(rng.integers(0, cfg.num_prototypes))
        video[start:start + width] += protos[p]
        tokens = [p + 1]
    return GroundingExample(
        id=ident,
        video=VideoFeatureSequence(clips=video, valid_length=t),
        tokens=tokens,
        gt=Segment(start / t, (start + width) / t),
    )


def gen_synthetic(cfg: SynthConfig) -> dict[str, Dataset]:
    """Deterministic train/val/test datasets sharing one prototype bank."""
    root = np.random.SeedSequence(cfg.seed)
    proto_seq, train_seq, val_seq, test_seq = root.spawn(4)
    protos = _make_prototypes(cfg, np.random.default_rng(proto_seq))
    vocab = Vocabulary.for_prototypes(cfg.num_prototypes)
    splits = {}
    for name, seq, size in (("train", train_seq, cfg.train_size),
                            ("val", val_seq, cfg.val_size),
                            ("test", test_seq, cfg.test_size)):
        rng = np.random.default_rng(seq)
        examples = [_gen_example(cfg, protos, rng, f"{name}-{i:05d}") for i in range(size)]
        splits[name] = Dataset(d_v=cfg.d_v, vocabulary=vocab, examples=examples)
    return splits


# ---------------------------------------------------------------------------
# dataset files: one JSON header line, then one JSON record per example


def write_dataset(path: str | Path, dataset: Dataset):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "format_version": DATASET_FORMAT_VERSION,
            "d_v": dataset.d_v,
            "vocabulary": dataset.vocabulary.token_to_index,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in dataset.examples:
            record = {
                "id": ex.id,
                "tokens": ex.tokens,
                "video": ex.video.clips.tolist(),
                "gt": [ex.gt.start, ex.gt.end],
            }
            fh.write(json.dumps(record) + "\n")


def read_dataset(path: str | Path, video_length: int | None = None) -> Dataset:
    """Parse a dataset file; when `video_length` is given every video is
    truncated or zero-padded to it and the ground truth rescaled to match."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset file {path} does not exist")
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise InputError(f"bad dataset header in {path}: {e}") from None
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise InputError(
                f"unsupported dataset format_version {header.get('format_version')!r}")
        d_v = int(header["d_v"])
        vocab = Vocabulary({str(k): int(v) for k, v in header["vocabulary"].items()})
        examples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                example = _parse_record(rec, d_v, video_length)
            except (KeyError, ValueError, TypeError) as e:
                raise InputError(f"bad record at {path}:{lineno}: {e}") from None
            examples.append(example)
    return Dataset(d_v=d_v, vocabulary=vocab, examples=examples)


def _parse_record(rec: dict, d_v: int, video_length: int | None) -> GroundingExample:
    video = np.asarray(rec["video"], dtype=np.float64)
    if video.ndim != 2 or video.shape[1] != d_v:
        raise ValueError(f"video shape {video.shape} does not match d_v={d_v}")
    gt_start, gt_end = float(rec["gt"][0]), float(rec["gt"][1])
    if video_length is None:
        seq = VideoFeatureSequence(clips=video, valid_length=video.shape[0])
        return GroundingExample(id=str(rec["id"]), video=seq,
                                tokens=[int(t) for t in rec["tokens"]],
                                gt=Segment(gt_start, gt_end))
    seq, gt = ingest(video, gt_start, gt_end, video_length)
    return GroundingExample(id=str(rec["id"]), video=seq,
                            tokens=[int(t) for t in rec["tokens"]], gt=gt)


def ingest(video: np.ndarray, gt_start: float, gt_end: float,
           video_length: int) -> tuple[VideoFeatureSequence, Segment]:
    """Fit a raw video to the configured length: truncate long ones, zero-pad
    short ones. The stored ground truth is a fraction of the raw duration, so
    it is rescaled onto the padded timeline and clipped to what survives
    truncation."""
    t_raw = video.shape[0]
    if t_raw == 0:
        raise InputError("video has no clips")
    if t_raw >= video_length:
        clips = video[:video_length]
        valid = video_length
    else:
        clips = np.zeros((video_length, video.shape[1]), dtype=np.float64)
        clips[:t_raw] = video
        valid = t_raw
    scale = t_raw / video_length
    start = min(max(gt_start * scale, 0.0), 1.0)
    end = min(max(gt_end * scale, 0.0), 1.0)
    if end - start <= 1e-12:
        raise InputError(
            f"ground truth [{gt_start}, {gt_end}] does not survive ingestion "
            f"to length {video_length}")
    return VideoFeatureSequence(clips=clips, valid_length=valid), Segment(start, end)
