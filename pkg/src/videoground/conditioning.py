"""Sentence-conditioned modulation of temporal feature maps.

The full mechanism works per feature unit: the unit attends over the word
states, the attended summary is mapped through two tanh heads to a scale
vector and a shift vector, and the unit is rewritten as

    scale * (unit - channel_mean) / channel_std + shift

with the statistics taken over the temporal axis of the unit's own map.
Because the attention depends on the unit, the scale and shift evolve across
time. The remaining modes are the reduced variants used for comparison:
static scale/shift from the global sentence vector (SCM), elementwise
multiplication with it (MUL), a fully-connected fuse with it (FC), and
sentence-independent batch normalization (NONE).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ConditioningMode
from .errors import ConfigError, DimensionError
from .text_encoder import SentenceEncoding


@dataclass
class AttentionParams:
    w: Tensor     # [d_a]
    w_s: Tensor   # [d_a, d_s]
    w_a: Tensor   # [d_a, d_h]
    b: Tensor     # [d_a]

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in (self.w, self.w_s, self.w_a, self.b)]


@dataclass
class ModulatorHeads:
    w_gamma: Tensor  # [d_h, d_s]
    b_gamma: Tensor  # [d_h]
    w_beta: Tensor   # [d_h, d_s]
    b_beta: Tensor   # [d_h]

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in (self.w_gamma, self.b_gamma, self.w_beta, self.b_beta)]


@dataclass
class AttentionRecord:
    """Word-attention weights and attended summaries for one feature map."""

    layer: int
    weights: Tensor   # [T_k, N], rows sum to 1
    attended: Tensor  # [T_k, d_s]


def attend(sentence: SentenceEncoding, feature_map: Tensor,
           params: AttentionParams) -> AttentionRecord:
    """Per-unit attention over words.

    weights[i, n] = softmax_n( w . tanh(W_s s_n + W_a a_i + b) )
    attended[i]   = sum_n weights[i, n] * s_n
    """
    states = sentence.word_states
    if states.shape[1] != params.w_s.shape[1]:
        raise DimensionError(
            f"word state dim {states.shape[1]} != attention W_s dim {params.w_s.shape[1]}"
        )
    if feature_map.shape[1] != params.w_a.shape[1]:
        raise DimensionError(
            f"feature dim {feature_map.shape[1]} != attention W_a dim {params.w_a.shape[1]}"
        )
    proj_words = ad.matmul(states, ad.transpose(params.w_s))        # [N, d_a]
    proj_units = ad.matmul(feature_map, ad.transpose(params.w_a))   # [T, d_a]
    pre = ad.tanh(ad.add(ad.outer_add(proj_units, proj_words), params.b))  # [T, N, d_a]
    scores = ad.dot_last(pre, params.w)                             # [T, N]
    weights = ad.softmax(scores, axis=1)
    attended = ad.matmul(weights, states)                           # [T, d_s]
    return AttentionRecord(layer=-1, weights=weights, attended=attended)


def make_modulators(attended: Tensor, heads: ModulatorHeads) -> tuple[Tensor, Tensor]:
    """tanh heads mapping attended summaries [T, d_s] to scale/shift [T, d_h]."""
    gamma = ad.tanh(ad.add(ad.matmul(attended, ad.transpose(heads.w_gamma)), heads.b_gamma))
    beta = ad.tanh(ad.add(ad.matmul(attended, ad.transpose(heads.w_beta)), heads.b_beta))
    return gamma, beta


def make_global_modulators(global_state: Tensor, heads: ModulatorHeads) -> tuple[Tensor, Tensor]:
    """Scale/shift [d_h] from the global sentence vector, shared by all units."""
    row = ad.reshape(global_state, (1, global_state.shape[0]))
    gamma = ad.tanh(ad.add(ad.matmul(row, ad.transpose(heads.w_gamma)), heads.b_gamma))
    beta = ad.tanh(ad.add(ad.matmul(row, ad.transpose(heads.w_beta)), heads.b_beta))
    d_h = heads.b_gamma.shape[0]
    return ad.reshape(gamma, (d_h,)), ad.reshape(beta, (d_h,))


def standardize(feature_map: Tensor, sigma_floor: float) -> Tensor:
    """Per-channel zero-mean unit-std over the temporal axis of this map.

    The std is the population one and is floored at sigma_floor; flooring the
    variance at sigma_floor^2 before the square root gives the same forward
    value while keeping the adjoint bounded for constant channels.
    """
    mu = ad.mean(feature_map, axis=0)                      # [d_h]
    centered = ad.sub(feature_map, mu)
    var = ad.mean(ad.square(centered), axis=0)
    sigma = ad.sqrt(ad.maximum(var, sigma_floor * sigma_floor))
    return ad.div(centered, sigma)


def modulate(feature_map: Tensor, gamma: Tensor, beta: Tensor,
             sigma_floor: float = 1e-5) -> Tensor:
    """Scale-shift the standardized map; gamma/beta are [T, d_h] or [d_h]."""
    return ad.add(ad.mul(standardize(feature_map, sigma_floor), gamma), beta)


def _uniform(rng: np.random.Generator, shape, fan_in: int, name: str) -> Tensor:
    scale = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-scale, scale, shape), requires_grad=True, name=name)


def _make_attention(prefix: str, d_a: int, d_s: int, d_h: int,
                    rng: np.random.Generator) -> AttentionParams:
    return AttentionParams(
        w=_uniform(rng, (d_a,), d_a, f"{prefix}.w"),
        w_s=_uniform(rng, (d_a, d_s), d_s, f"{prefix}.w_s"),
        w_a=_uniform(rng, (d_a, d_h), d_h, f"{prefix}.w_a"),
        b=Tensor(np.zeros(d_a), requires_grad=True, name=f"{prefix}.b"),
    )


def _make_heads(prefix: str, d_h: int, d_s: int, rng: np.random.Generator) -> ModulatorHeads:
    return ModulatorHeads(
        w_gamma=_uniform(rng, (d_h, d_s), d_s, f"{prefix}.w_gamma"),
        b_gamma=Tensor(np.zeros(d_h), requires_grad=True, name=f"{prefix}.b_gamma"),
        w_beta=_uniform(rng, (d_h, d_s), d_s, f"{prefix}.w_beta"),
        b_beta=Tensor(np.zeros(d_h), requires_grad=True, name=f"{prefix}.b_beta"),
    )


class Conditioner:
    """Mode dispatcher owning the per-layer conditioning parameters.

    Conditioned layers are map indices 1..num_layers-1 (the first map never
    serves prediction). `apply` takes the whole batch of maps for one layer so
    the batch-normalization mode can pool statistics across examples.
    """

    def __init__(self, mode: ConditioningMode, num_layers: int, d_s: int, d_h: int,
                 d_a: int, sigma_floor: float, rng: np.random.Generator,
                 share_params: bool = False, bn_momentum: float = 0.1,
                 prefix: str = "cond"):
        self.mode = mode
        self.num_layers = num_layers
        self.sigma_floor = sigma_floor
        self.share_params = share_params
        self.bn_momentum = bn_momentum
        self.training = True
        self._capture: list[list[AttentionRecord]] | None = None

        if mode is ConditioningMode.MUL and d_s != d_h:
            raise ConfigError(f"MUL mode needs d_s == d_h, got d_s={d_s}, d_h={d_h}")

        layer_keys = ["shared"] if share_params else [
            f"layer{k}" for k in range(1, num_layers)
        ]
        self.attention: dict[str, AttentionParams] = {}
        self.heads: dict[str, ModulatorHeads] = {}
        self.fc_weight: dict[str, Tensor] = {}
        self.fc_bias: dict[str, Tensor] = {}
        self.bn_scale: dict[str, Tensor] = {}
        self.bn_shift: dict[str, Tensor] = {}
        self.bn_running_mean: dict[str, np.ndarray] = {}
        self.bn_running_var: dict[str, np.ndarray] = {}

        for key in layer_keys:
            p = f"{prefix}.{key}"
            if mode is ConditioningMode.SCDM:
                self.attention[key] = _make_attention(f"{p}.attn", d_a, d_s, d_h, rng)
                self.heads[key] = _make_heads(f"{p}.heads", d_h, d_s, rng)
            elif mode is ConditioningMode.SCM:
                self.heads[key] = _make_heads(f"{p}.heads", d_h, d_s, rng)
            elif mode is ConditioningMode.FC:
                scale = np.sqrt(6.0 / (d_h + d_s))
                self.fc_weight[key] = Tensor(
                    rng.uniform(-scale, scale, (d_h, d_h + d_s)),
                    requires_grad=True, name=f"{p}.fc_weight")
                self.fc_bias[key] = Tensor(
                    np.zeros(d_h), requires_grad=True, name=f"{p}.fc_bias")
            elif mode is ConditioningMode.NONE:
                self.bn_scale[key] = Tensor(
                    np.ones(d_h), requires_grad=True, name=f"{p}.bn_scale")
                self.bn_shift[key] = Tensor(
                    np.zeros(d_h), requires_grad=True, name=f"{p}.bn_shift")
                self.bn_running_mean[key] = np.zeros(d_h)
                self.bn_running_var[key] = np.ones(d_h)

    def _key(self, layer: int) -> str:
        return "shared" if self.share_params else f"layer{layer}"

    def parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for key in sorted(self.attention):
            out += self.attention[key].parameters()
        for key in sorted(self.heads):
            out += self.heads[key].parameters()
        for key in sorted(self.fc_weight):
            out.append((self.fc_weight[key].name, self.fc_weight[key]))
            out.append((self.fc_bias[key].name, self.fc_bias[key]))
        for key in sorted(self.bn_scale):
            out.append((self.bn_scale[key].name, self.bn_scale[key]))
            out.append((self.bn_shift[key].name, self.bn_shift[key]))
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for key in sorted(self.bn_running_mean):
            out.append((f"bn_running_mean.{key}", self.bn_running_mean[key]))
            out.append((f"bn_running_var.{key}", self.bn_running_var[key]))
        return out

    def set_buffer(self, name: str, value: np.ndarray):
        kind, key = name.split(".", 1)
        store = {"bn_running_mean": self.bn_running_mean,
                 "bn_running_var": self.bn_running_var}[kind]
        if key not in store or store[key].shape != value.shape:
            raise ConfigError(f"unknown or mismatched buffer {name!r}")
        store[key] = value.astype(np.float64)

    # -- attention capture (for exports and inspection) ---------------------

    def begin_capture(self, batch_size: int):
        self._capture = [[] for _ in range(batch_size)]

    def take_records(self) -> list[list[AttentionRecord]]:
        records, self._capture = self._capture, None
        return records if records is not None else []

    # -- application ---------------------------------------------------------

    def apply(self, layer: int, sentences: list[SentenceEncoding],
              maps: list[Tensor]) -> list[Tensor]:
        if not (1 <= layer < self.num_layers):
            raise ConfigError(f"layer {layer} is not a conditioned layer")
        if self.mode is ConditioningMode.NONE:
            return self._apply_batch_norm(layer, maps)
        if len(sentences) != len(maps):
            raise DimensionError(
                f"{len(sentences)} sentences for {len(maps)} feature maps"
            )
        return [
            self._apply_one(layer, s, m, example)
            for example, (s, m) in enumerate(zip(sentences, maps))
        ]

    def apply_single(self, layer: int, sentence: SentenceEncoding,
                     feature_map: Tensor) -> Tensor:
        return self.apply(layer, [sentence], [feature_map])[0]

    def _apply_one(self, layer: int, sentence: SentenceEncoding,
                   feature_map: Tensor, example: int) -> Tensor:
        key = self._key(layer)
        if self.mode is ConditioningMode.SCDM:
            record = attend(sentence, feature_map, self.attention[key])
            record.layer = layer
            if self._capture is not None:
                self._capture[example].append(record)
            gamma, beta = make_modulators(record.attended, self.heads[key])
            return modulate(feature_map, gamma, beta, self.sigma_floor)
        if self.mode is ConditioningMode.SCM:
            gamma, beta = make_global_modulators(sentence.global_state, self.heads[key])
            return modulate(feature_map, gamma, beta, self.sigma_floor)
        if self.mode is ConditioningMode.MUL:
            return ad.mul(feature_map, sentence.global_state)
        if self.mode is ConditioningMode.FC:
            tiled = ad.broadcast_rows(sentence.global_state, feature_map.shape[0])
            joined = ad.concat([feature_map, tiled], axis=1)
            return ad.relu(ad.add(
                ad.matmul(joined, ad.transpose(self.fc_weight[key])), self.fc_bias[key]))
        raise ConfigError(f"unhandled mode {self.mode}")

    def _apply_batch_norm(self, layer: int, maps: list[Tensor]) -> list[Tensor]:
        key = self._key(layer)
        scale, shift = self.bn_scale[key], self.bn_shift[key]
        floor = self.sigma_floor * self.sigma_floor
        if self.training:
            pooled = maps[0] if len(maps) == 1 else ad.concat(maps, axis=0)
            mu = ad.mean(pooled, axis=0)
            var = ad.mean(ad.square(ad.sub(pooled, mu)), axis=0)
            sigma = ad.sqrt(ad.maximum(var, floor))
            m = self.bn_momentum
            self.bn_running_mean[key] = (1 - m) * self.bn_running_mean[key] + m * mu.data
            self.bn_running_var[key] = (1 - m) * self.bn_running_var[key] + m * var.data
            normalized = [ad.div(ad.sub(x, mu), sigma) for x in maps]
        else:
            mu = Tensor(self.bn_running_mean[key])
            sigma = Tensor(np.sqrt(np.maximum(self.bn_running_var[key], floor)))
            normalized = [ad.div(ad.sub(x, mu), sigma) for x in maps]
        return [ad.add(ad.mul(x, scale), shift) for x in normalized]
