"""Candidate spans and boundary prediction.

Every unit of every prediction-serving feature map carries one basic span of
length 1/T_k centered at (i + 0.5)/T_k, scaled by each ratio in the ratio
set. A kernel-3 convolution over the map emits (overlap logit, center offset,
width offset) per ratio; offsets refine a span as

    center = mu_c + alpha_c * mu_w * dc        width = mu_w * exp(alpha_w * dw)

so predicted widths stay positive for any finite offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class Anchor:
    center: float   # (i + 0.5) / T_k
    width: float    # ratio / T_k
    layer: int      # pyramid map index
    unit: int
    ratio: float

    @property
    def start(self) -> float:
        return self.center - self.width / 2.0

    @property
    def end(self) -> float:
        return self.center + self.width / 2.0


@dataclass
class AnchorSet:
    anchors: list[Anchor]
    ratios: tuple[float, ...]
    layer_dims: dict[int, int]   # map index -> temporal extent

    def __len__(self) -> int:
        return len(self.anchors)

    def by_layer(self, layer: int) -> list[Anchor]:
        return [a for a in self.anchors if a.layer == layer]


def generate_anchors(pyramid_dims: list[tuple[int, int]],
                     ratios: tuple[float, ...]) -> AnchorSet:
    """Enumerate anchors layer-major, unit-major, ratio-major.

    `pyramid_dims` lists (map_index, temporal_extent) for every map that
    serves prediction; each contributes exactly T_k * len(ratios) anchors.
    """
    if not ratios:
        raise ConfigError("ratio set must not be empty")
    if any(not (0.0 < r <= 1.0) for r in ratios):
        raise ConfigError(f"ratios must lie in (0, 1], got {ratios}")
    anchors = []
    for layer, t_k in pyramid_dims:
        if t_k < 1:
            raise ConfigError(f"map {layer} has non-positive extent {t_k}")
        for unit in range(t_k):
            for ratio in ratios:
                anchors.append(Anchor(
                    center=(unit + 0.5) / t_k,
                    width=ratio / t_k,
                    layer=layer,
                    unit=unit,
                    ratio=ratio,
                ))
    return AnchorSet(anchors=anchors, ratios=tuple(ratios),
                     layer_dims=dict(pyramid_dims))


def decode(anchor: Anchor, dc: float, dw: float,
           alpha_c: float = 0.1, alpha_w: float = 0.1) -> tuple[float, float]:
    """Refined (center, width); the exponential keeps width > 0. No clamping."""
    center = anchor.center + alpha_c * anchor.width * dc
    width = anchor.width * math.exp(alpha_w * dw)
    return center, width


def encode_targets(anchor: Anchor, gt_center: float, gt_width: float,
                   alpha_c: float = 0.1, alpha_w: float = 0.1) -> tuple[float, float]:
    """Offsets (dc, dw) such that decode reproduces the ground truth exactly."""
    if gt_width <= 0:
        raise InputError(f"ground-truth width must be positive, got {gt_width}")
    dc = (gt_center - anchor.center) / (alpha_c * anchor.width)
    dw = math.log(gt_width / anchor.width) / alpha_w
    return dc, dw


@dataclass
class RawPredictions:
    """Flat per-anchor outputs aligned with AnchorSet ordering.

    `p_over` is the logistic of the overlap logit clipped away from {0, 1} so
    the cross-entropy stays finite; `logits` keeps the raw pre-squash values.
    """

    logits: Tensor   # [M]
    p_over: Tensor   # [M], in (0, 1)
    dc: Tensor       # [M]
    dw: Tensor       # [M]

    def __len__(self) -> int:
        return self.logits.shape[0]


PROB_FLOOR = 1e-7


class PredictionHead:
    """Per-layer kernel-3 stride-1 convolutions emitting 3 channels per ratio."""

    def __init__(self, prediction_layers: list[int], d_h: int, num_ratios: int,
                 rng: np.random.Generator, prefix: str = "head"):
        self.prediction_layers = list(prediction_layers)
        self.num_ratios = num_ratios
        c_out = 3 * num_ratios
        self.filters: dict[int, Tensor] = {}
        self.biases: dict[int, Tensor] = {}
        scale = 1.0 / np.sqrt(3 * d_h)
        for k in self.prediction_layers:
            self.filters[k] = Tensor(rng.uniform(-scale, scale, (3, d_h, c_out)),
                                     requires_grad=True, name=f"{prefix}.layer{k}.filters")
            self.biases[k] = Tensor(np.zeros(c_out), requires_grad=True,
                                    name=f"{prefix}.layer{k}.bias")

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for k in self.prediction_layers:
            out.append((self.filters[k].name, self.filters[k]))
            out.append((self.biases[k].name, self.biases[k]))
        return out

    def predict_raw(self, pyramid: list[Tensor]) -> RawPredictions:
        """Run the prediction convolutions over every serving map and flatten
        the outputs anchor-ordered (layer-major, unit-major, ratio-major)."""
        logits_parts, dc_parts, dw_parts = [], [], []
        for k in self.prediction_layers:
            feature_map = pyramid[k]
            out = ad.add(ad.conv1d(feature_map, self.filters[k], stride=1, padding=1),
                         self.biases[k])                      # [T_k, 3R]
            t_k = out.shape[0]
            flat = ad.reshape(out, (t_k * self.num_ratios, 3))
            logits_parts.append(ad.reshape(ad.narrow(flat, 1, 0, 1), (t_k * self.num_ratios,)))
            dc_parts.append(ad.reshape(ad.narrow(flat, 1, 1, 1), (t_k * self.num_ratios,)))
            dw_parts.append(ad.reshape(ad.narrow(flat, 1, 2, 1), (t_k * self.num_ratios,)))
        logits = ad.concat(logits_parts, axis=0)
        p_over = ad.clip(ad.sigmoid(logits), PROB_FLOOR, 1.0 - PROB_FLOOR)
        return RawPredictions(
            logits=logits,
            p_over=p_over,
            dc=ad.concat(dc_parts, axis=0),
            dw=ad.concat(dw_parts, axis=0),
        )
