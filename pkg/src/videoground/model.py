"""End-to-end grounding model: encode the sentence, fuse it into every clip,
build the conditioned temporal pyramid, and emit per-anchor predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .backbone import Backbone
from .conditioning import AttentionRecord, Conditioner
from .config import ConditioningMode, ModelConfig
from .errors import DimensionError
from .fusion import FusionLayer, VideoFeatureSequence
from .head import AnchorSet, PredictionHead, RawPredictions, decode, generate_anchors
from .inference import ScoredSegment, clamp_segment, nms
from .text_encoder import SentenceEncoding, TextEncoder


@dataclass
class ModelOutput:
    raw: RawPredictions
    sentence: SentenceEncoding
    pyramid: list[Tensor]
    attention: list[AttentionRecord] | None = None


class GroundingModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        # one stream per component: swapping the conditioning mode or resizing
        # the vocabulary must not reshuffle the other components' initial values
        streams = np.random.SeedSequence(seed).spawn(5)
        text_rng, fusion_rng, backbone_rng, cond_rng, head_rng = (
            np.random.default_rng(s) for s in streams)
        self.text_encoder = TextEncoder(
            config.vocab_size, config.d_s, config.max_sentence_length, text_rng)
        self.fusion = FusionLayer(config.d_v, config.d_s, config.d_f, fusion_rng)
        self.backbone = Backbone(
            config.video_length, config.num_layers, config.d_f, config.d_h,
            backbone_rng)
        self.conditioner = Conditioner(
            config.mode, config.num_layers, config.d_s, config.d_h,
            config.attention_dim, config.sigma_floor, cond_rng,
            share_params=config.share_scdm_params, bn_momentum=config.bn_momentum)
        self.prediction_layers = list(range(1, config.num_layers))
        self.head = PredictionHead(
            self.prediction_layers, config.d_h, len(config.ratios), head_rng)
        self.anchors: AnchorSet = generate_anchors(
            [(k, self.backbone.dims[k]) for k in self.prediction_layers],
            config.ratios)

    # -- parameter plumbing --------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params = (self.text_encoder.parameters() + self.fusion.parameters()
                  + self.backbone.parameters() + self.conditioner.parameters()
                  + self.head.parameters())
        names = [n for n, _ in params]
        assert len(names) == len(set(names)), "duplicate parameter names"
        return params

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return self.conditioner.buffers()

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None

    def set_training(self, flag: bool):
        self.conditioner.training = flag

    # -- forward passes --------------------------------------------------------

    def forward_batch(self, videos: list[VideoFeatureSequence],
                      token_lists: list[list[int]],
                      collect_attention: bool = False) -> list[ModelOutput]:
        """Run a whole batch through the stack; the conditioner sees all the
        examples of one layer together (batch statistics need that)."""
        if len(videos) != len(token_lists):
            raise DimensionError(f"{len(videos)} videos for {len(token_lists)} sentences")
        sentences = [self.text_encoder.encode(tokens) for tokens in token_lists]
        fused = [self.fusion.fuse(v, s) for v, s in zip(videos, sentences)]

        capture = collect_attention and self.config.mode is ConditioningMode.SCDM
        if capture:
            self.conditioner.begin_capture(len(videos))

        def hook(layer: int, maps: list[Tensor]) -> list[Tensor]:
            return self.conditioner.apply(layer, sentences, maps)

        pyramids = self.backbone.build_pyramids(
            fused, conditioner=hook, modulate_position=self.config.modulate_position)

        records = self.conditioner.take_records() if capture else None
        outputs = []
        for i, pyramid in enumerate(pyramids):
            raw = self.head.predict_raw(pyramid)
            outputs.append(ModelOutput(
                raw=raw, sentence=sentences[i], pyramid=pyramid,
                attention=records[i] if records else None))
        return outputs

    def forward(self, video: VideoFeatureSequence, tokens: list[int],
                collect_attention: bool = False) -> ModelOutput:
        return self.forward_batch([video], [tokens], collect_attention)[0]

    # -- inference ---------------------------------------------------------------

    def decode_predictions(self, raw: RawPredictions) -> list[ScoredSegment]:
        """Decode every anchor and clamp the interval into [0, 1]."""
        scores = raw.p_over.data
        dc = raw.dc.data
        dw = raw.dw.data
        segments = []
        for i, anchor in enumerate(self.anchors.anchors):
            center, width = decode(anchor, float(dc[i]), float(dw[i]),
                                   self.config.alpha_c, self.config.alpha_w)
            start, end = clamp_segment(center - width / 2.0, center + width / 2.0)
            segments.append(ScoredSegment(start=start, end=end, score=float(scores[i])))
        return segments

    def predict(self, video: VideoFeatureSequence, tokens: list[int],
                nms_threshold: float = 0.55, max_keep: int = 10) -> list[ScoredSegment]:
        was_training = self.conditioner.training
        self.set_training(False)
        try:
            out = self.forward(video, tokens)
        finally:
            self.set_training(was_training)
        return nms(self.decode_predictions(out.raw), nms_threshold, max_keep)
