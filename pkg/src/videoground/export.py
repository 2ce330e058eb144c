"""Dump word-attention weights per conditioned layer for one example."""

from __future__ import annotations

import json
from pathlib import Path

from .config import ConditioningMode
from .errors import UnsupportedModeError
from .model import GroundingModel
from .synth import GroundingExample


def export_attention(model: GroundingModel, example: GroundingExample) -> dict:
    """One record per conditioned layer: the [T_k, N] attention matrix whose
    rows each sum to one. Only the dynamic-attention mode produces these."""
    if model.config.mode is not ConditioningMode.SCDM:
        raise UnsupportedModeError(
            f"attention export needs mode 'scdm', model is {model.config.mode.value!r}")
    was_training = model.conditioner.training
    model.set_training(False)
    try:
        out = model.forward(example.video, example.tokens, collect_attention=True)
    finally:
        model.set_training(was_training)
    layers = []
    for record in out.attention or []:
        layers.append({
            "layer": record.layer,
            "temporal_dim": record.weights.shape[0],
            "weights": record.weights.data.tolist(),
        })
    return {"id": example.id, "tokens": example.tokens, "layers": layers}


def write_attention_dump(path: str | Path, records: list[dict]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
