"""Training loop, metrics, checkpoints, and conditional generation.

The optimizer is SGD with momentum and a milestone learning-rate schedule.
Per-epoch metrics go to an append-only JSON-lines file; checkpoints are a
small little-endian binary format (magic ``SHOT``).  Every stochastic
choice is keyed by (seed, epoch, step) so a config plus its seeds pins the
whole run; ``wall_time`` is the one record field that is not reproducible.

A non-finite loss aborts the run naming the offending component: silently
skipping bad batches would hide objective bugs.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass
from itertools import cycle
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .data import (
    Batch,
    Dataset,
    SplitSpec,
    batches,
    diagnostics_labels,
    load_idx,
    rng_for,
    split,
    synth_manifest,
    synth_train_test,
)
from .distributions import PROB_FLOOR, SmoothingParams, smooth_label_matrix
from .nets import ModelParams, conditional_generate, encode
from .objectives import labeled_elbo_pair, training_step

__all__ = [
    "MetricsRecord",
    "SGDMomentum",
    "NonFiniteLossError",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointVersionError",
    "CheckpointTruncatedError",
    "fit_datasets",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "write_pgm",
    "read_pgm",
    "generate_class_sweep",
]

CHECKPOINT_MAGIC = b"SHOT"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    """A loss component left the reals; training state is not trustworthy."""


class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclass
class MetricsRecord:
    """One appended record per epoch."""

    epoch: int
    recon: float
    kl_z: float
    kl_y: float
    kl_label_fit: float
    ot: float
    w_t: float
    total: float
    train_error: float
    test_error: Optional[float]
    diag_kl_qy_vs_phat_on_DU: Optional[float]
    smooth_elbo_relative_error: Optional[float]
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class SGDMomentum:
    """v <- momentum*v + g;  p <- p - lr*v."""

    def __init__(self, params: ModelParams, momentum: float):
        self.momentum = float(momentum)
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}

    def step(self, params: ModelParams, lr: float) -> None:
        for name, t in params.tensors.items():
            if t.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += t.grad
            t.data = t.data - lr * v


def _label_prior(config: TrainConfig, labeled: Dataset) -> np.ndarray:
    if config.label_prior == "uniform":
        return np.full(labeled.num_classes, 1.0 / labeled.num_classes)
    counts = np.bincount(labeled.labels, minlength=labeled.num_classes).astype(np.float64)
    probs = np.maximum(counts / counts.sum(), PROB_FLOOR)
    return probs / probs.sum()


def _predict_probs(params: ModelParams, inputs: np.ndarray, chunk: int = 2048) -> np.ndarray:
    rows = []
    for start in range(0, inputs.shape[0], chunk):
        enc = encode(Tensor(inputs[start:start + chunk]), params)
        rows.append(enc.y_posterior.probs.data)
    return np.concatenate(rows)


def evaluate(params: ModelParams, ds: Dataset) -> float:
    """Fraction of argmax-posterior misclassifications."""
    labels = ds.labels if ds.labels is not None else diagnostics_labels(ds)
    preds = np.argmax(_predict_probs(params, ds.inputs), axis=1)
    return float(np.mean(preds != labels))


def _diag_posterior_gap(params: ModelParams, unlabeled: Dataset, eps: float) -> Optional[float]:
    """Mean KL(q(y|x) || smoothed truth) over the unlabeled pool.

    Reads ground truth only through the diagnostics accessor; never touches
    the gradient path.
    """
    try:
        truth = diagnostics_labels(unlabeled)
    except ValueError:
        return None
    q = _predict_probs(params, unlabeled.inputs)
    phat = smooth_label_matrix(truth, SmoothingParams(eps, unlabeled.num_classes))
    kl = (q * (np.log(np.maximum(q, PROB_FLOOR)) - np.log(phat))).sum(axis=1)
    return float(kl.mean())


def _relative_bound_error(params: ModelParams, labeled: Dataset, config: TrainConfig,
                          p_y: np.ndarray, rng: np.random.Generator) -> float:
    smooth, plain = labeled_elbo_pair(
        Tensor(labeled.inputs), labeled.labels, params,
        config.beta, config.epsilon, rng, p_y,
    )
    if plain == 0.0:
        return float("inf")
    return abs(smooth - plain) / abs(plain)


def _check_finite(values: dict, epoch: int, step: int) -> None:
    for name, v in values.items():
        if not np.isfinite(v):
            raise NonFiniteLossError(
                f"non-finite loss component {name}={v} at epoch {epoch}, step {step}"
            )


def fit_datasets(labeled: Dataset, unlabeled: Optional[Dataset], test: Optional[Dataset],
                 config: TrainConfig, out_dir: Optional[Path] = None,
                 init_params: Optional[ModelParams] = None) -> tuple:
    """Run the configured number of epochs; returns (params, records).

    When ``out_dir`` is given, metrics are appended to ``metrics.jsonl``
    and checkpoints are written at each LR milestone and at the end.
    """
    if len(labeled) == 0:
        raise ValueError("fit_datasets: labeled dataset is empty")
    semi = config.loss_mode != "ce_only"
    if semi and (unlabeled is None or len(unlabeled) == 0):
        raise ValueError(f"fit_datasets: mode {config.loss_mode!r} needs unlabeled data")
    if semi and config.unlabeled_batch < 2:
        raise ValueError("fit_datasets: unlabeled batch size must be >= 2")

    params = init_params
    if params is None:
        params = ModelParams.init(
            labeled.input_dim, config.z_dim, labeled.num_classes, config.hidden,
            rng_for(config.seed_model_init, 10), config.fixed_var,
        )
    p_y = _label_prior(config, labeled)
    opt = SGDMomentum(params, config.momentum)
    milestones = set(config.milestones())
    lr = config.lr

    metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("", encoding="utf-8")

    records = []
    started = time.monotonic()
    for epoch in range(1, config.epochs + 1):
        if epoch in milestones:
            lr *= config.lr_decay_factor
        if semi:
            step_batches = list(batches(unlabeled, config.unlabeled_batch, config.seed_batch, epoch))
            labeled_cycle = cycle(list(batches(labeled, config.labeled_batch, config.seed_batch, epoch)))
            pairs = [(next(labeled_cycle), ub) for ub in step_batches]
        else:
            pairs = [(lb, None) for lb in batches(labeled, config.labeled_batch, config.seed_batch, epoch)]

        sums: dict = {}
        for step_idx, (lab_batch, unlab_batch) in enumerate(pairs):
            step_rng = rng_for(config.seed_sample, epoch, step_idx)
            breakdown = training_step(lab_batch, unlab_batch, epoch, config, params, step_rng, p_y)
            values = breakdown.floats()
            _check_finite(values, epoch, step_idx)
            ad.zero_grad(params.parameters())
            ad.backward(breakdown.total)
            opt.step(params, lr)
            for key, v in values.items():
                sums[key] = sums.get(key, 0.0) + v
        n_steps = max(len(pairs), 1)
        means = {key: v / n_steps for key, v in sums.items()}

        eval_rng = rng_for(config.seed_sample, epoch, 1_000_000)
        record = MetricsRecord(
            epoch=epoch,
            recon=means.get("recon", 0.0),
            kl_z=means.get("kl_z", 0.0),
            kl_y=means.get("kl_y", 0.0),
            kl_label_fit=means.get("kl_label_fit", 0.0),
            ot=means.get("ot", 0.0),
            w_t=means.get("w_t", 0.0),
            total=means.get("total", 0.0),
            train_error=evaluate(params, labeled),
            test_error=None if test is None else evaluate(params, test),
            diag_kl_qy_vs_phat_on_DU=(
                _diag_posterior_gap(params, unlabeled, config.epsilon)
                if (config.diagnostics and unlabeled is not None) else None
            ),
            smooth_elbo_relative_error=_relative_bound_error(params, labeled, config, p_y, eval_rng),
            wall_time=time.monotonic() - started,
        )
        records.append(record)
        if metrics_path is not None:
            with open(metrics_path, "a", encoding="utf-8") as f:
                f.write(record.to_json() + "\n")
        if out_dir is not None and (epoch in milestones or epoch == config.epochs):
            save_checkpoint(params, out_dir / f"ckpt_epoch_{epoch}.bin")
    if out_dir is not None:
        save_checkpoint(params, out_dir / "ckpt.bin")
    return params, records


def _build_datasets(config: TrainConfig) -> tuple:
    if config.data_kind == "synth":
        pool, test = synth_train_test(
            config.synth_num_classes, config.synth_input_dim, config.synth_per_class,
            config.synth_test_per_class, config.synth_style_dim, config.synth_noise_sigma,
            config.synth_seed, config.synth_style_scale,
        )
    else:
        pool = load_idx(config.idx_train_images, config.idx_train_labels)
        test = None
        if config.idx_test_images:
            test = load_idx(config.idx_test_images, config.idx_test_labels,
                            num_classes=pool.num_classes)
    labeled, unlabeled = split(pool, SplitSpec(config.labeled_count, config.seed_split,
                                               config.stratified))
    return labeled, unlabeled, test


def train(config: TrainConfig, out_dir, resume: Optional[str] = None) -> list:
    """CLI-facing entry: build datasets per config, fit, write artifacts.

    ``resume`` warm-starts the weights from a checkpoint; the optimizer
    state and epoch counter start fresh.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labeled, unlabeled, test = _build_datasets(config)
    config.to_file(out_dir / "config.txt")
    if config.data_kind == "synth":
        manifest = synth_manifest(
            config.synth_num_classes, config.synth_input_dim,
            config.synth_per_class + config.synth_test_per_class,
            config.synth_style_dim, config.synth_noise_sigma,
            config.synth_seed, config.synth_style_scale,
        )
        (out_dir / "data_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    init_params = None
    if resume is not None:
        init_params = load_checkpoint(resume, fixed_var=config.fixed_var)
    _, records = fit_datasets(labeled, unlabeled, test, config, out_dir, init_params)
    return records


def save_checkpoint(params: ModelParams, path) -> None:
    """Little-endian binary: magic, u32 version, then (name, rank, dims, f64 data) per tensor."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, t in params.tensors.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", t.data.ndim))
            f.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            f.write(t.data.astype("<f8").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path, fixed_var: float = 1.0) -> ModelParams:
    """Inverse of ``save_checkpoint``; architecture dims are read off the shapes."""
    tensors = {}
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointMagicError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        version = struct.unpack("<I", _read_exact(f, 4, "version"))[0]
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint format version {version} unsupported; this build reads "
                f"version {CHECKPOINT_VERSION} (re-save the checkpoint with a matching build)"
            )
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointTruncatedError("checkpoint truncated while reading name length")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(f, name_len, "name").decode("utf-8")
            rank = struct.unpack("<I", _read_exact(f, 4, "rank"))[0]
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
            count = int(np.prod(dims)) if rank else 1
            payload = _read_exact(f, 8 * count, f"tensor {name!r}")
            data = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
            tensors[name] = Tensor(data, requires_grad=True)
    try:
        input_dim = tensors["enc.l0.w"].shape[0]
        hidden = tensors["enc.l0.w"].shape[1]
        z_dim = tensors["enc.mu.w"].shape[1]
        num_classes = tensors["enc.y.w"].shape[1]
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing required tensor: {exc}") from None
    return ModelParams(tensors, input_dim, z_dim, num_classes, hidden, fixed_var)


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"write_pgm: expected a 2-D image, got shape {img.shape}")
    img = img.astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read binary (P5) or ascii (P2) PGM into a uint8 array."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    kind, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if kind == b"P5":
        body = raw[pos + 1:pos + 1 + width * height]
        return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()
    if kind == b"P2":
        values = raw[pos:].split()
        return np.array([int(v) for v in values], dtype=np.uint8).reshape(height, width)
    raise ValueError(f"read_pgm: unsupported PGM kind {kind!r}")


def _as_image(vec: np.ndarray) -> np.ndarray:
    side = int(np.sqrt(vec.size))
    shape = (side, side) if side * side == vec.size else (1, vec.size)
    return np.rint(np.clip(vec, 0.0, 1.0) * 255.0).astype(np.uint8).reshape(shape)


def generate_class_sweep(params: ModelParams, source: np.ndarray, out_dir,
                         seed: int = 0, epsilon: float = 1e-3) -> list:
    """Decode the source's style against every class label; write PGMs.

    Returns the per-class file paths; also writes ``montage.pgm`` with the
    classes side by side.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = np.asarray(source, dtype=np.float64).reshape(1, -1)
    paths = []
    panels = []
    for k in range(params.num_classes):
        rng = rng_for(seed, 20, k)
        mean = conditional_generate(Tensor(source), k, params, rng, epsilon)[0]
        img = _as_image(mean)
        panels.append(img)
        path = out_dir / f"class_{k}.pgm"
        write_pgm(path, img)
        paths.append(path)
    write_pgm(out_dir / "montage.pgm", np.concatenate(panels, axis=1))
    return paths
