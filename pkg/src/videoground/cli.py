"""Command-line interface.

Subcommands: gen-data, train, eval, predict, grad-check, export-attention.
Every error class maps to a fixed nonzero exit code (see EXIT_CODES) so
scripts can tell configuration mistakes from corrupt files or numeric blowups.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import (checkpoint_from_model, load_checkpoint,
                         model_from_checkpoint, save_checkpoint)
from .config import ConditioningMode, ModelConfig, SynthConfig, TrainConfig, preset_config
from .errors import (CheckpointError, ConfigError, DimensionError, InputError,
                     NumericError, UnsupportedModeError, VideogroundError)
from .export import export_attention, write_attention_dump
from .fusion import VideoFeatureSequence
from .gradcheck import grad_check
from .model import GroundingModel
from .objective import Segment, example_loss, match_anchors
from .synth import gen_synthetic, read_dataset, write_dataset
from .train import evaluate_model, train

EXIT_CODES: dict[type, int] = {
    ConfigError: 2,
    InputError: 3,
    DimensionError: 4,
    NumericError: 5,
    CheckpointError: 6,
    UnsupportedModeError: 7,
}


def _exit_code(err: VideogroundError) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(err, cls):
            return code
    return 1


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", default="desk", help="base config preset")
    p.add_argument("--mode", choices=[m.value for m in ConditioningMode], default=None,
                   help="sentence-conditioning variant")
    p.add_argument("--video-length", type=int, default=None)
    p.add_argument("--num-layers", type=int, default=None)
    p.add_argument("--d-s", type=int, default=None)
    p.add_argument("--d-f", type=int, default=None)
    p.add_argument("--d-h", type=int, default=None)
    p.add_argument("--d-a", type=int, default=None)
    p.add_argument("--ratios", default=None, help="comma-separated scale ratios")
    p.add_argument("--share-scdm-params", action="store_true", default=None,
                   help="share conditioning parameters across layers")
    p.add_argument("--modulate-position", choices=["after_relu", "before_relu"],
                   default=None)


def _model_config_from_args(args, d_v: int, vocab_size: int) -> ModelConfig:
    overrides: dict = {"d_v": d_v, "vocab_size": vocab_size}
    for attr, key in (("mode", "mode"), ("video_length", "video_length"),
                      ("num_layers", "num_layers"), ("d_s", "d_s"), ("d_f", "d_f"),
                      ("d_h", "d_h"), ("d_a", "d_a"),
                      ("share_scdm_params", "share_scdm_params"),
                      ("modulate_position", "modulate_position")):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    if args.ratios is not None:
        overrides["ratios"] = tuple(float(r) for r in args.ratios.split(","))
    return preset_config(args.preset, **overrides)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--lambda-over", type=float, default=100.0)
    p.add_argument("--eta-loc", type=float, default=10.0)
    p.add_argument("--loc-loss-space", choices=["offset", "absolute"], default="offset")
    p.add_argument("--eval-interval", type=int, default=500)
    p.add_argument("--nms-threshold", type=float, default=0.55)
    p.add_argument("--max-keep", type=int, default=10)
    p.add_argument("--log-interval", type=int, default=50)


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        steps=args.steps, batch_size=args.batch_size, learning_rate=args.lr,
        optimizer=args.optimizer, seed=args.seed, lambda_over=args.lambda_over,
        eta_loc=args.eta_loc, loc_loss_space=args.loc_loss_space,
        eval_interval=args.eval_interval, nms_threshold=args.nms_threshold,
        max_keep=args.max_keep, log_interval=args.log_interval)


def cmd_gen_data(args) -> int:
    cfg = SynthConfig(
        num_prototypes=args.num_prototypes, d_v=args.d_v,
        video_length=args.video_length, noise_sigma=args.noise_sigma,
        seed=args.seed, train_size=args.train_size, val_size=args.val_size,
        test_size=args.test_size, min_width=args.min_width,
        max_width=args.max_width, compositional=args.compositional)
    splits = gen_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, dataset in splits.items():
        path = out / f"{name}.jsonl"
        write_dataset(path, dataset)
        print(f"wrote {len(dataset)} examples to {path}")
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    probe = read_dataset(data_dir / "train.jsonl")
    model_cfg = _model_config_from_args(
        args, d_v=probe.d_v, vocab_size=probe.vocabulary.size)
    train_set = read_dataset(data_dir / "train.jsonl",
                             video_length=model_cfg.video_length)
    val_path = data_dir / "val.jsonl"
    val_set = (read_dataset(val_path, video_length=model_cfg.video_length)
               if val_path.exists() else None)
    train_cfg = _train_config_from_args(args)

    result = train(model_cfg, train_cfg, train_set, val_set, quiet=args.quiet)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = checkpoint_from_model(result.model, result.optimizer,
                                 train_step=train_cfg.steps)
    save_checkpoint(out / "checkpoint.bin", ckpt)
    (out / "history.json").write_text(json.dumps(
        {"train": result.history, "eval": result.eval_history}, indent=2))
    print(f"saved checkpoint to {out / 'checkpoint.bin'}")
    return 0


def _load_model_and_data(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    dataset = read_dataset(args.data, video_length=model.config.video_length)
    return model, dataset


def cmd_eval(args) -> int:
    model, dataset = _load_model_and_data(args)
    cfg = TrainConfig(nms_threshold=args.nms_threshold, max_keep=args.max_keep)
    report = evaluate_model(model, dataset.examples, cfg)
    print(report.format())
    if args.out:
        Path(args.out).write_text(json.dumps(
            {f"R@{n},IoU@{m:g}": v for (n, m), v in sorted(report.recalls.items())},
            indent=2))
    return 0


def cmd_predict(args) -> int:
    model, dataset = _load_model_and_data(args)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            ranked = model.predict(ex.video, ex.tokens,
                                   nms_threshold=args.nms_threshold,
                                   max_keep=args.max_keep)
            fh.write(json.dumps({
                "id": ex.id,
                "segments": [[s.start, s.end, s.score] for s in ranked],
            }) + "\n")
    print(f"wrote predictions for {len(dataset.examples)} queries to {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    model_cfg = ModelConfig(
        video_length=args.video_length, num_layers=args.num_layers,
        d_v=args.dim, d_s=args.dim, d_f=args.dim, d_h=args.dim,
        vocab_size=max(args.sentence_length + 1, 4), mode=args.mode)
    model = GroundingModel(model_cfg, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    video = VideoFeatureSequence(
        clips=rng.normal(size=(model_cfg.video_length, model_cfg.d_v)),
        valid_length=model_cfg.video_length)
    tokens = [int(t) for t in
              rng.integers(1, model_cfg.vocab_size, size=args.sentence_length)]
    gt = Segment(0.25, 0.75)
    match = match_anchors(model.anchors, gt, model_cfg.alpha_c, model_cfg.alpha_w)

    # The check weighs both loss terms at args.check_weight instead of the
    # training defaults: a loss of magnitude ~70 cannot resolve perturbations
    # below its own float64 ulp (~1e-14), which floors central-difference
    # quotients at ~1e-9 and drowns legitimately tiny gradients. An O(0.1)
    # loss keeps the quotient granularity far below the 1e-8 comparison floor.
    def loss_builder():
        out = model.forward(video, tokens)
        return example_loss(match, out.raw, lambda_over=args.check_weight,
                            eta_loc=args.check_weight, space="offset").l_all

    report = grad_check(loss_builder, model.named_parameters(), epsilon=args.epsilon)
    print(report.format())
    if report.max_rel_error < args.tolerance:
        print(f"grad-check PASS (max relative error {report.max_rel_error:.3e} "
              f"< {args.tolerance:g})")
        return 0
    name, err = report.worst()
    print(f"grad-check FAIL: {name} has relative error {err:.3e} >= {args.tolerance:g}")
    return 1


def cmd_export_attention(args) -> int:
    model, dataset = _load_model_and_data(args)
    examples = dataset.examples[:args.limit] if args.limit else dataset.examples
    records = [export_attention(model, ex) for ex in examples]
    write_attention_dump(args.out, records)
    print(f"wrote attention records for {len(records)} examples to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videoground",
        description="Temporal sentence grounding on synthetic feature sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic train/val/test splits")
    p.add_argument("--out", required=True)
    p.add_argument("--num-prototypes", type=int, default=6)
    p.add_argument("--d-v", type=int, default=16)
    p.add_argument("--video-length", type=int, default=64)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-size", type=int, default=512)
    p.add_argument("--val-size", type=int, default=64)
    p.add_argument("--test-size", type=int, default=128)
    p.add_argument("--min-width", type=float, default=0.15)
    p.add_argument("--max-width", type=float, default=0.45)
    p.add_argument("--compositional", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True, help="directory with train/val jsonl files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report recall metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset file to evaluate on")
    p.add_argument("--out", default=None, help="optional JSON metrics file")
    p.add_argument("--nms-threshold", type=float, default=0.55)
    p.add_argument("--max-keep", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="dump ranked segments per query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nms-threshold", type=float, default=0.55)
    p.add_argument("--max-keep", type=int, default=10)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grad-check",
                       help="verify model gradients against finite differences")
    p.add_argument("--video-length", type=int, default=16)
    p.add_argument("--num-layers", type=int, default=3)
    p.add_argument("--dim", type=int, default=8, help="d_v=d_s=d_f=d_h")
    p.add_argument("--sentence-length", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--check-weight", type=float, default=0.1,
                   help="weight on both loss terms during the check")
    p.add_argument("--mode", choices=[m.value for m in ConditioningMode],
                   default="scdm")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("export-attention",
                       help="dump per-layer word-attention weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=0, help="0 = all examples")
    p.set_defaults(func=cmd_export_attention)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VideogroundError as err:
        print(f"error: {err}", file=sys.stderr)
        return _exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
