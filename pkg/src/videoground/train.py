"""Batched training loop with loss logging and periodic recall evaluation."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import ModelConfig, TrainConfig
from .errors import ConfigError, NumericError
from .inference import EvalReport, ScoredSegment, evaluate
from .model import GroundingModel
from .objective import MatchResult, example_loss, match_anchors
from .optim import make_optimizer
from .synth import Dataset, GroundingExample


@dataclass
class TrainResult:
    model: GroundingModel
    optimizer: object
    history: list[dict] = field(default_factory=list)
    eval_history: list[dict] = field(default_factory=list)


def evaluate_model(model: GroundingModel, examples: list[GroundingExample],
                   cfg: TrainConfig) -> EvalReport:
    results: list[list[ScoredSegment]] = []
    gts = []
    for ex in examples:
        results.append(model.predict(ex.video, ex.tokens,
                                     nms_threshold=cfg.nms_threshold,
                                     max_keep=cfg.max_keep))
        gts.append(ex.gt)
    return evaluate(results, gts, top_ns=cfg.eval_top_ns, overlaps=cfg.eval_ious)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_set: Dataset,
          val_set: Dataset | None = None, model: GroundingModel | None = None,
          quiet: bool = True) -> TrainResult:
    if train_set.d_v != model_cfg.d_v:
        raise ConfigError(
            f"dataset d_v={train_set.d_v} does not match model d_v={model_cfg.d_v}")
    if not train_set.examples:
        raise ConfigError("training split is empty")

    if model is None:
        model = GroundingModel(model_cfg, seed=train_cfg.seed)
    optimizer = make_optimizer(train_cfg.optimizer, model.named_parameters(),
                               train_cfg.learning_rate)
    rng = np.random.default_rng(train_cfg.seed)
    result = TrainResult(model=model, optimizer=optimizer)

    # matching depends only on the anchors and the ground truth, so do it once
    match_cache: dict[str, MatchResult] = {}

    def match_for(ex: GroundingExample) -> MatchResult:
        if ex.id not in match_cache:
            match_cache[ex.id] = match_anchors(
                model.anchors, ex.gt, model_cfg.alpha_c, model_cfg.alpha_w)
        return match_cache[ex.id]

    n = len(train_set.examples)
    order = rng.permutation(n)
    cursor = 0
    model.set_training(True)
    started = time.monotonic()

    def lr_at(step: int) -> float:
        if train_cfg.lr_schedule == "constant" or train_cfg.steps <= 1:
            return train_cfg.learning_rate
        # cosine decay to zero over the step budget; settles the late phase
        progress = (step - 1) / (train_cfg.steps - 1)
        return train_cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))

    for step in range(1, train_cfg.steps + 1):
        optimizer.lr = lr_at(step)
        batch: list[GroundingExample] = []
        for _ in range(train_cfg.batch_size):
            if cursor == n:
                order = rng.permutation(n)
                cursor = 0
            batch.append(train_set.examples[order[cursor]])
            cursor += 1

        model.zero_grad()
        with Tape() as tape:
            outputs = model.forward_batch([ex.video for ex in batch],
                                          [ex.tokens for ex in batch])
            over_vals, loc_vals, totals = [], [], []
            for ex, out in zip(batch, outputs):
                breakdown = example_loss(
                    match_for(ex), out.raw,
                    lambda_over=train_cfg.lambda_over, eta_loc=train_cfg.eta_loc,
                    space=train_cfg.loc_loss_space, anchors=model.anchors, gt=ex.gt,
                    alpha_c=model_cfg.alpha_c, alpha_w=model_cfg.alpha_w)
                over_vals.append(breakdown.l_over.item())
                loc_vals.append(breakdown.l_loc.item())
                totals.append(breakdown.l_all)
            mean_over = float(np.mean(over_vals))
            mean_loc = float(np.mean(loc_vals))
            if not math.isfinite(mean_over):
                raise NumericError(f"L_over became non-finite at step {step}")
            if not math.isfinite(mean_loc):
                raise NumericError(f"L_loc became non-finite at step {step}")
            batch_loss = ad.mul(totals[0] if len(totals) == 1
                                else _sum_tensors(totals), 1.0 / len(totals))
            if not math.isfinite(batch_loss.item()):
                raise NumericError(f"L_all became non-finite at step {step}")
            tape.backward(batch_loss)
        optimizer.step()

        entry = {"step": step, "l_over": mean_over, "l_loc": mean_loc,
                 "l_all": batch_loss.item()}
        result.history.append(entry)
        if not quiet and (step % train_cfg.log_interval == 0 or step == 1):
            print(f"step {step:5d}  L_all {entry['l_all']:.4f}  "
                  f"L_over {mean_over:.4f}  L_loc {mean_loc:.4f}")

        if (val_set is not None and train_cfg.eval_interval > 0
                and step % train_cfg.eval_interval == 0):
            report = evaluate_model(model, val_set.examples, train_cfg)
            eval_entry = {"step": step}
            eval_entry.update({f"R@{n_},IoU@{m:g}": v
                               for (n_, m), v in sorted(report.recalls.items())})
            result.eval_history.append(eval_entry)
            if not quiet:
                print(f"step {step:5d}  val " + "  ".join(
                    f"{k}={v:.3f}" for k, v in eval_entry.items() if k != "step"))

    if not quiet:
        print(f"trained {train_cfg.steps} steps in {time.monotonic() - started:.1f}s")
    return result


def _sum_tensors(tensors):
    acc = tensors[0]
    for t in tensors[1:]:
        acc = ad.add(acc, t)
    return acc
