"""Command-line surface.

Subcommands: ``train``, ``eval``, ``generate``, ``verify``, ``split``.
Exit codes: 0 success, 1 check failure, 2 usage or I/O error.  The only
environment variable read is ``SHOTVAE_LOG`` (python logging level name).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

logger = logging.getLogger("shotvae")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _setup_logging() -> None:
    level = os.environ.get("SHOTVAE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shotvae",
                                     description="Semi-supervised VAE trainer and verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop from a config file")
    p_train.add_argument("--config", required=True, help="flat key=value config file")
    p_train.add_argument("--resume", default=None, help="checkpoint to warm-start from")
    p_train.add_argument("--out", default="train_out", help="output directory")

    p_eval = sub.add_parser("eval", help="error rate of a checkpoint on a dataset")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--images", default=None, help="IDX image file")
    p_eval.add_argument("--labels", default=None, help="IDX label file")
    p_eval.add_argument("--config", default=None,
                        help="config file; evaluates on its test split instead of IDX files")

    p_gen = sub.add_parser("generate", help="class sweep images for one input")
    p_gen.add_argument("--ckpt", required=True)
    p_gen.add_argument("--input", required=True, help="source image (.pgm or .npy vector)")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)

    p_verify = sub.add_parser("verify", help="run the proposition suite")
    p_verify.add_argument("--props", default=None,
                          help="comma-separated subset of a1,b2,c3,d4,e5,e6")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out", default=None, help="directory for JSON reports")

    p_split = sub.add_parser("split", help="write a labeled/unlabeled split to disk")
    p_split.add_argument("--images", default=None, help="IDX image file")
    p_split.add_argument("--labels", default=None, help="IDX label file")
    p_split.add_argument("--config", default=None, help="config file (synthetic data)")
    p_split.add_argument("--labeled", type=int, required=True)
    p_split.add_argument("--seed", type=int, required=True)
    p_split.add_argument("--out", required=True)
    return parser


def _load_pool(args):
    """The unsplit training pool named by --config or an IDX pair."""
    from .config import TrainConfig
    from .data import load_idx, synth_train_test

    if args.config:
        config = TrainConfig.from_file(args.config)
        if config.data_kind == "synth":
            pool, _ = synth_train_test(
                config.synth_num_classes, config.synth_input_dim, config.synth_per_class,
                config.synth_test_per_class, config.synth_style_dim,
                config.synth_noise_sigma, config.synth_seed, config.synth_style_scale,
            )
            return pool
        return load_idx(config.idx_train_images, config.idx_train_labels)
    if not (args.images and args.labels):
        raise SystemExit2("need either --config or both --images and --labels")
    return load_idx(args.images, args.labels)


class SystemExit2(Exception):
    """Usage/IO failure that should exit with status 2."""


def _cmd_train(args) -> int:
    from .config import TrainConfig
    from .train import train

    config = TrainConfig.from_file(args.config)
    records = train(config, args.out, resume=args.resume)
    last = records[-1]
    print(json.dumps({"epochs": len(records), "train_error": last.train_error,
                      "test_error": last.test_error, "total": last.total}))
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .config import TrainConfig
    from .data import load_idx
    from .train import evaluate, load_checkpoint, _build_datasets

    params = load_checkpoint(args.ckpt)
    if args.config:
        config = TrainConfig.from_file(args.config)
        labeled, unlabeled, test = _build_datasets(config)
        ds = test if test is not None else labeled
    elif args.images and args.labels:
        ds = load_idx(args.images, args.labels, num_classes=params.num_classes)
    else:
        raise SystemExit2("eval: need --config or both --images and --labels")
    error = evaluate(params, ds)
    print(json.dumps({"error_rate": error, "n": len(ds)}))
    return EXIT_OK


def _read_source(path: Path) -> np.ndarray:
    from .train import read_pgm

    if path.suffix == ".npy":
        return np.asarray(np.load(path), dtype=np.float64).ravel()
    img = read_pgm(path)
    return img.astype(np.float64).ravel() / 255.0


def _cmd_generate(args) -> int:
    from .train import generate_class_sweep, load_checkpoint

    params = load_checkpoint(args.ckpt)
    source = _read_source(Path(args.input))
    if source.size != params.input_dim:
        raise SystemExit2(
            f"generate: input has {source.size} values, model expects {params.input_dim}")
    paths = generate_class_sweep(params, source, args.out, seed=args.seed)
    print(json.dumps({"written": [str(p) for p in paths]}))
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verification import PROP_IDS, run_propositions

    props = None
    if args.props:
        props = [p.strip().upper() for p in args.props.split(",") if p.strip()]
        unknown = [p for p in props if p not in PROP_IDS]
        if unknown:
            raise SystemExit2(f"verify: unknown propositions {unknown}")
    reports = run_propositions(props, seed=args.seed, out_dir=args.out)
    all_passed = True
    for pid, report in reports.items():
        print(f"{pid}: {'PASS' if report.passed else 'FAIL'} "
              f"(max_violation={report.max_violation:.3e}, samples={report.samples_checked})")
        all_passed &= report.passed
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def _cmd_split(args) -> int:
    from .data import SplitSpec, split, write_idx, Dataset

    pool = _load_pool(args)
    labeled, unlabeled = split(pool, SplitSpec(args.labeled, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(labeled, out / "labeled_images.idx", out / "labeled_labels.idx")
    from .data import diagnostics_labels
    truth = diagnostics_labels(unlabeled)
    unlabeled_with_truth = Dataset(unlabeled.inputs, truth, unlabeled.num_classes)
    write_idx(unlabeled_with_truth, out / "unlabeled_images.idx",
              out / "unlabeled_truth_labels.idx")
    manifest = {
        "labeled_count": len(labeled),
        "unlabeled_count": len(unlabeled),
        "num_classes": pool.num_classes,
        "seed": args.seed,
        "stratified": True,
        "note": "unlabeled_truth_labels.idx is diagnostics-only ground truth",
    }
    (out / "split_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest))
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "generate": _cmd_generate,
        "verify": _cmd_verify,
        "split": _cmd_split,
    }
    from .train import NonFiniteLossError

    try:
        return handlers[args.command](args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
