"""Hierarchical temporal convolution: each layer is a stride-2, kernel-3,
pad-1 convolution plus ReLU, so every map has exactly half the temporal
extent of its input. Maps after the first can be rewritten in place by a
sentence-conditioning hook before they feed the next layer and the
prediction heads.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError

KERNEL = 3
STRIDE = 2
PADDING = 1

# hook(layer_index, per-example maps) -> conditioned per-example maps
Conditioner = Callable[[int, list[Tensor]], list[Tensor]]


def pyramid_dims(video_length: int, num_layers: int) -> list[int]:
    """Temporal extents of the K maps; errors unless every layer halves cleanly."""
    if num_layers < 1:
        raise ConfigError(f"need at least one layer, got {num_layers}")
    if video_length % (2 ** num_layers) != 0:
        raise ConfigError(
            f"video_length {video_length} is not divisible by 2^{num_layers}"
        )
    return [video_length // (2 ** (k + 1)) for k in range(num_layers)]


def receptive_field(layer: int, unit: int, video_length: int) -> tuple[int, int]:
    """Inclusive input-clip range feeding `unit` of (1-based) map `layer`."""
    half = 2 ** layer - 1
    center = 2 ** layer * unit
    return max(0, center - half), min(video_length - 1, center + half)


class Backbone:
    def __init__(self, video_length: int, num_layers: int, d_f: int, d_h: int,
                 rng: np.random.Generator, prefix: str = "backbone"):
        self.dims = pyramid_dims(video_length, num_layers)
        self.video_length = video_length
        self.num_layers = num_layers
        self.filters: list[Tensor] = []
        self.biases: list[Tensor] = []
        for k in range(num_layers):
            c_in = d_f if k == 0 else d_h
            # He-style limit so channel variance survives the ReLU stack
            scale = np.sqrt(6.0 / (KERNEL * c_in))
            self.filters.append(Tensor(
                rng.uniform(-scale, scale, (KERNEL, c_in, d_h)),
                requires_grad=True, name=f"{prefix}.layer{k}.filters"))
            self.biases.append(Tensor(
                np.zeros(d_h), requires_grad=True, name=f"{prefix}.layer{k}.bias"))

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for f, b in zip(self.filters, self.biases):
            out.append((f.name, f))
            out.append((b.name, b))
        return out

    def build_pyramids(
        self,
        fused: Sequence[Tensor],
        conditioner: Conditioner | None = None,
        modulate_position: str = "after_relu",
    ) -> list[list[Tensor]]:
        """Run all examples of a batch through the stack together so a
        conditioner that needs batch statistics sees every map at once.

        Returns pyramids[example][layer]; the first map is never conditioned.
        """
        for x in fused:
            if x.shape[0] != self.video_length:
                raise ConfigError(
                    f"fused length {x.shape[0]} != configured video_length {self.video_length}"
                )
        current = list(fused)
        pyramids: list[list[Tensor]] = [[] for _ in fused]
        for k in range(self.num_layers):
            conved = [
                ad.add(ad.conv1d(x, self.filters[k], stride=STRIDE, padding=PADDING),
                       self.biases[k])
                for x in current
            ]
            if conditioner is not None and k > 0 and modulate_position == "before_relu":
                conved = conditioner(k, conved)
            maps = [ad.relu(x) for x in conved]
            if conditioner is not None and k > 0 and modulate_position == "after_relu":
                maps = conditioner(k, maps)
            for pyr, m in zip(pyramids, maps):
                pyr.append(m)
            current = maps
        return pyramids

    def build_pyramid(self, fused: Tensor, conditioner: Conditioner | None = None,
                      modulate_position: str = "after_relu") -> list[Tensor]:
        return self.build_pyramids([fused], conditioner, modulate_position)[0]
