"""Binary checkpoints: a JSON header (config, mode, array manifest) followed
by little-endian float32 payloads in manifest order. Arrays are manifest-
sorted by name, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import CheckpointError
from .model import GroundingModel
from .optim import Adam

MAGIC = b"VGCP"
CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    mode: str
    config: dict
    arrays: dict[str, np.ndarray]
    optimizer: dict | None = None   # {"kind", "step_count"}
    train_step: int = 0
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(dict(self.config))


def _collect_arrays(model: GroundingModel, optimizer=None) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        arrays[f"param/{name}"] = p.data
    for name, buf in model.buffers():
        arrays[f"buffer/{name}"] = buf
    if optimizer is not None:
        for slot_name, value in optimizer.state_dict()["slots"].items():
            arrays[f"opt/{slot_name}"] = value
    return arrays


def checkpoint_from_model(model: GroundingModel, optimizer=None,
                          train_step: int = 0) -> Checkpoint:
    opt_meta = None
    if optimizer is not None:
        kind = "adam" if isinstance(optimizer, Adam) else "sgd"
        opt_meta = {"kind": kind, "step_count": optimizer.step_count}
    return Checkpoint(
        mode=model.config.mode.value,
        config=model.config.to_dict(),
        arrays=_collect_arrays(model, optimizer),
        optimizer=opt_meta,
        train_step=train_step,
    )


def save_checkpoint(path: str | Path, ckpt: Checkpoint):
    names = sorted(ckpt.arrays)
    manifest = []
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(arr.tobytes())
        offset += len(payloads[-1])
    header = {
        "format_version": ckpt.format_version,
        "mode": ckpt.mode,
        "config": ckpt.config,
        "arrays": manifest,
        "optimizer": ckpt.optimizer,
        "train_step": ckpt.train_step,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<I", blob[4:8])
    if 8 + header_len > len(blob):
        raise CheckpointError(f"{path} is truncated inside the header")
    try:
        header = json.loads(blob[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {e}") from None
    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})")
    payload = blob[8 + header_len:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        end = start + 4 * count
        if end > len(payload):
            raise CheckpointError(
                f"{path} is truncated: array {entry['name']!r} ends at byte {end}, "
                f"payload has {len(payload)}")
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
    return Checkpoint(
        mode=header["mode"],
        config=header["config"],
        arrays=arrays,
        optimizer=header.get("optimizer"),
        train_step=int(header.get("train_step", 0)),
        format_version=version,
    )


def restore_model(ckpt: Checkpoint, model: GroundingModel):
    """Copy checkpoint arrays into an existing model; the conditioning mode
    and every shape must match."""
    if ckpt.mode != model.config.mode.value:
        raise CheckpointError(
            f"checkpoint was trained in mode {ckpt.mode!r}; "
            f"model is configured as {model.config.mode.value!r}")
    for name, p in model.named_parameters():
        key = f"param/{name}"
        if key not in ckpt.arrays:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        value = ckpt.arrays[key]
        if value.shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {value.shape}, "
                f"model {p.data.shape}")
        p.data = value.copy()
    for name, _ in model.buffers():
        key = f"buffer/{name}"
        if key not in ckpt.arrays:
            raise CheckpointError(f"checkpoint is missing buffer {name!r}")
        model.conditioner.set_buffer(name, ckpt.arrays[key].copy())


def restore_optimizer(ckpt: Checkpoint, optimizer):
    if ckpt.optimizer is None:
        raise CheckpointError("checkpoint carries no optimizer state")
    slots = {name[len("opt/"):]: arr for name, arr in ckpt.arrays.items()
             if name.startswith("opt/")}
    optimizer.load_state_dict({"step_count": ckpt.optimizer["step_count"],
                               "slots": slots})


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> GroundingModel:
    model = GroundingModel(ckpt.model_config(), seed=seed)
    restore_model(ckpt, model)
    return model
