"""Dataclass configuration for the model, the synthetic tasks, and training."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError


class ConditioningMode(str, Enum):
    """How sentence information enters the temporal feature maps.

    SCDM  per-unit attention over words drives scale/shift modulation
    SCM   scale/shift generated once from the global sentence vector
    MUL   elementwise multiplication with the global sentence vector
    FC    a fully-connected fuse of each unit with the global vector
    NONE  sentence-independent batch normalization
    """

    SCDM = "scdm"
    SCM = "scm"
    MUL = "mul"
    FC = "fc"
    NONE = "none"


@dataclass
class ModelConfig:
    video_length: int = 64          # clips per ingested video (T)
    num_layers: int = 6             # temporal conv layers (K)
    d_v: int = 16                   # video clip feature dim
    d_s: int = 32                   # sentence/word state dim (must be even)
    d_f: int = 32                   # fused feature dim
    d_h: int = 32                   # conv channels
    d_a: int | None = None          # attention dim; defaults to d_h
    vocab_size: int = 8
    max_sentence_length: int = 32
    ratios: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    mode: ConditioningMode = ConditioningMode.SCDM
    alpha_c: float = 0.1            # center offset damping
    alpha_w: float = 0.1            # width offset damping
    sigma_floor: float = 1e-5       # lower bound on the normalization std
    share_scdm_params: bool = False  # one conditioning parameter set for all layers
    modulate_position: str = "after_relu"   # or "before_relu"
    bn_momentum: float = 0.1        # running-stat update rate in NONE mode

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = ConditioningMode(self.mode)
        self.ratios = tuple(float(r) for r in self.ratios)
        if self.num_layers < 2:
            raise ConfigError(
                f"num_layers must be >= 2 (first map never serves prediction), got {self.num_layers}"
            )
        if self.video_length % (2 ** self.num_layers) != 0:
            raise ConfigError(
                f"video_length {self.video_length} is not divisible by 2^{self.num_layers}"
            )
        if self.d_s % 2 != 0:
            raise ConfigError(f"d_s must be even to split across directions, got {self.d_s}")
        if not self.ratios:
            raise ConfigError("ratio set must not be empty")
        if any(not (0.0 < r <= 1.0) for r in self.ratios):
            raise ConfigError(f"ratios must lie in (0, 1], got {self.ratios}")
        if self.mode is ConditioningMode.MUL and self.d_s != self.d_h:
            raise ConfigError(
                f"MUL mode needs d_s == d_h, got d_s={self.d_s}, d_h={self.d_h}"
            )
        if self.modulate_position not in ("after_relu", "before_relu"):
            raise ConfigError(f"unknown modulate_position {self.modulate_position!r}")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must cover PAD plus at least one real token")

    @property
    def attention_dim(self) -> int:
        return self.d_h if self.d_a is None else self.d_a

    @property
    def pyramid_dims(self) -> list[int]:
        return [self.video_length // (2 ** (k + 1)) for k in range(self.num_layers)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class SynthConfig:
    num_prototypes: int = 6
    d_v: int = 16
    video_length: int = 64
    noise_sigma: float = 0.05
    seed: int = 0
    train_size: int = 512
    val_size: int = 64
    test_size: int = 128
    min_width: float = 0.15         # target width bounds as fractions of the video
    max_width: float = 0.45
    compositional: bool = False     # two-prototype queries spanning both occurrences

    def __post_init__(self):
        if self.num_prototypes < 1:
            raise ConfigError("need at least one prototype")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not (0.0 < self.min_width <= self.max_width <= 1.0):
            raise ConfigError(
                f"need 0 < min_width <= max_width <= 1, got [{self.min_width}, {self.max_width}]"
            )
        lo, hi = self.width_bounds_clips()
        if lo > hi:
            raise ConfigError(
                f"width bounds [{self.min_width}, {self.max_width}] admit no integer "
                f"clip count for video_length {self.video_length}"
            )
        if self.compositional and self.num_prototypes < 2:
            raise ConfigError("compositional queries need at least two prototypes")

    def width_bounds_clips(self) -> tuple[int, int]:
        """Smallest and largest admissible target widths, in clips."""
        import math

        lo = max(1, math.ceil(self.min_width * self.video_length - 1e-9))
        if self.compositional:
            lo = max(lo, 2)
        hi = int(math.floor(self.max_width * self.video_length + 1e-9))
        return lo, hi

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"     # or "constant"
    optimizer: str = "adam"         # or "sgd"
    seed: int = 0
    lambda_over: float = 100.0      # weight of the overlap loss
    eta_loc: float = 10.0           # weight of the location loss
    loc_loss_space: str = "offset"  # or "absolute"
    eval_interval: int = 500        # 0 disables intermediate evaluation
    eval_top_ns: tuple[int, ...] = (1, 5)
    eval_ious: tuple[float, ...] = (0.3, 0.5, 0.7)
    nms_threshold: float = 0.55
    max_keep: int = 10
    log_interval: int = 50

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.loc_loss_space not in ("offset", "absolute"):
            raise ConfigError(f"unknown loc_loss_space {self.loc_loss_space!r}")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")
        if not (0.0 < self.nms_threshold <= 1.0):
            raise ConfigError(f"nms_threshold must lie in (0, 1], got {self.nms_threshold}")
        self.eval_top_ns = tuple(int(n) for n in self.eval_top_ns)
        self.eval_ious = tuple(float(m) for m in self.eval_ious)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eval_top_ns"] = list(self.eval_top_ns)
        d["eval_ious"] = list(self.eval_ious)
        return d


# Named presets: `desk` is what the tests and defaults use; the other three keep
# the full-scale layer schedules (512-dim features, 1-second clips) on record.
PRESETS: dict[str, dict] = {
    "desk": {},
    "charades": dict(video_length=64, num_layers=6, d_v=1024, d_s=512, d_f=512, d_h=512),
    "tacos": dict(video_length=1024, num_layers=6, d_v=4096, d_s=512, d_f=512, d_h=512),
    "activitynet": dict(video_length=1024, num_layers=8, d_v=4096, d_s=512, d_f=512, d_h=512),
}


def preset_config(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name])
    kwargs.update(overrides)
    return ModelConfig(**kwargs)
