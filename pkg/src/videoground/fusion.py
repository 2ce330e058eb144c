"""Clip-wise multimodal fusion: every video clip is concatenated with the
global sentence vector and pushed through one shared ReLU projection, so the
fused row t is ReLU(W·(v_t ‖ s̄) + b).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .text_encoder import SentenceEncoding


@dataclass
class VideoFeatureSequence:
    """Fixed-length clip features; rows at or past valid_length are zero padding."""

    clips: np.ndarray     # [T, d_v]
    valid_length: int

    def __post_init__(self):
        self.clips = np.asarray(self.clips, dtype=np.float64)
        if self.clips.ndim != 2:
            raise DimensionError(f"clips must be [T, d_v], got {self.clips.shape}")
        if not (0 <= self.valid_length <= self.clips.shape[0]):
            raise DimensionError(
                f"valid_length {self.valid_length} out of range for T={self.clips.shape[0]}"
            )
        if self.valid_length < self.clips.shape[0] and np.any(self.clips[self.valid_length:]):
            raise DimensionError(
                f"rows at or past valid_length {self.valid_length} must be zero padding"
            )


class FusionLayer:
    def __init__(self, d_v: int, d_s: int, d_f: int, rng: np.random.Generator,
                 prefix: str = "fusion"):
        self.d_v = d_v
        self.d_s = d_s
        self.d_f = d_f
        # He-style limit: keeps activation variance roughly constant under ReLU
        scale = np.sqrt(6.0 / (d_v + d_s))
        self.weight = Tensor(rng.uniform(-scale, scale, (d_f, d_v + d_s)),
                             requires_grad=True, name=f"{prefix}.weight")
        self.bias = Tensor(np.zeros(d_f), requires_grad=True, name=f"{prefix}.bias")

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]

    def fuse(self, video: VideoFeatureSequence, sentence: SentenceEncoding) -> Tensor:
        """Return the fused sequence [T, d_f]; non-negative by construction."""
        t, d_v = video.clips.shape
        if d_v != self.d_v:
            raise DimensionError(f"video feature dim {d_v} != configured {self.d_v}")
        if sentence.global_state.shape != (self.d_s,):
            raise DimensionError(
                f"sentence dim {sentence.global_state.shape} != configured ({self.d_s},)"
            )
        clips = Tensor(video.clips)
        tiled = ad.broadcast_rows(sentence.global_state, t)      # [T, d_s]
        joined = ad.concat([clips, tiled], axis=1)               # [T, d_v + d_s]
        return ad.relu(ad.add(ad.matmul(joined, ad.transpose(self.weight)), self.bias))
