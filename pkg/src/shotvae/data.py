"""Dataset ingestion, labeled/unlabeled splits, and batching.

Two sources: big-endian IDX files (the classic u8 image/label pair) and a
seeded synthetic generator whose classes are orthogonal block templates
perturbed along a shared low-rank style basis.

Randomness policy: every stochastic routine here derives its stream from a
Philox counter-based generator keyed by ``(seed, *path)`` via numpy's
SeedSequence, so datasets, splits and batch orders reproduce bit-for-bit
across platforms.

The unlabeled half of a split keeps its ground-truth labels internally but
exposes them only through ``diagnostics_labels``; batch objects built from
it carry no labels at all.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .autodiff import Tensor

__all__ = [
    "Dataset",
    "Batch",
    "SplitSpec",
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxCountMismatchError",
    "SplitError",
    "rng_for",
    "load_idx",
    "write_idx",
    "synth_generate",
    "synth_train_test",
    "synth_manifest",
    "split",
    "batches",
    "diagnostics_labels",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    """Base class for IDX file problems."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


class SplitError(ValueError):
    """Requested split cannot be satisfied."""


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for stream ``path`` under ``seed`` (portable, counter-based)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


class Dataset:
    """Feature matrix in [0, 1] plus class labels.

    ``labels`` is None for the unlabeled side of a split; its hidden
    ground truth is only reachable via ``diagnostics_labels``.
    """

    def __init__(self, inputs: np.ndarray, labels: Optional[np.ndarray],
                 num_classes: int, _hidden_labels: Optional[np.ndarray] = None):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2:
            raise ValueError(f"Dataset: inputs must be [n, d], got {inputs.shape}")
        if np.any(inputs < 0.0) or np.any(inputs > 1.0):
            raise ValueError("Dataset: features must lie in [0, 1]")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (inputs.shape[0],):
                raise ValueError("Dataset: inputs and labels length mismatch")
            if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
                raise ValueError(f"Dataset: label out of range for K={num_classes}")
        self.inputs = inputs
        self.labels = labels
        self.num_classes = int(num_classes)
        self._hidden_labels = _hidden_labels

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def diagnostics_labels(ds: Dataset) -> np.ndarray:
    """Ground-truth labels of an unlabeled split, for metrics only.

    This is the single sanctioned path to the labels the training loss must
    never see.
    """
    if ds.labels is not None:
        return ds.labels
    if ds._hidden_labels is None:
        raise ValueError("diagnostics_labels: dataset carries no ground truth")
    return ds._hidden_labels


@dataclass(frozen=True)
class SplitSpec:
    labeled_count: int
    seed: int
    stratified: bool = True


@dataclass
class Batch:
    """Mini-batch: inputs as a [B, d] tensor, labels only for labeled streams."""

    inputs: Tensor
    labels: Optional[np.ndarray]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _read_exact(f, n: int, path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IdxTruncatedError(f"{path}: truncated while reading {what}")
    return buf


def load_idx(images_path, labels_path, num_classes: Optional[int] = None) -> Dataset:
    """Read an IDX image/label file pair; pixels scaled by 1/255."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic = struct.unpack(">I", _read_exact(f, 4, images_path, "magic"))[0]
        if magic != IMAGE_MAGIC:
            raise IdxMagicError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"
            )
        count, rows, cols = struct.unpack(">III", _read_exact(f, 12, images_path, "header"))
        payload = _read_exact(f, count * rows * cols, images_path, "pixels")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic = struct.unpack(">I", _read_exact(f, 4, labels_path, "magic"))[0]
        if magic != LABEL_MAGIC:
            raise IdxMagicError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"
            )
        lcount = struct.unpack(">I", _read_exact(f, 4, labels_path, "header"))[0]
        labels = np.frombuffer(_read_exact(f, lcount, labels_path, "labels"), dtype=np.uint8)
    if count != lcount:
        raise IdxCountMismatchError(
            f"image count {count} != label count {lcount} ({images_path}, {labels_path})"
        )
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 2
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), num_classes)


def write_idx(ds: Dataset, images_path, labels_path, rows: Optional[int] = None,
              cols: Optional[int] = None) -> None:
    """Write a dataset as an IDX pair (features quantized to u8 via round(x*255))."""
    if ds.labels is None:
        raise ValueError("write_idx: dataset has no labels")
    n, d = ds.inputs.shape
    if rows is None or cols is None:
        side = int(np.sqrt(d))
        rows, cols = (side, side) if side * side == d else (1, d)
    if rows * cols != d:
        raise ValueError(f"write_idx: {rows}x{cols} != input_dim {d}")
    pixels = np.rint(ds.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


TEMPLATE_AMPLITUDE = 0.2


def _class_templates(num_classes: int, input_dim: int) -> np.ndarray:
    """Orthogonal block-indicator templates, one per class.

    The amplitude sets the class margin relative to the style/noise scales;
    0.2 keeps the clusters identifiable while leaving the decision problem
    genuinely underdetermined by a small labeled sample.
    """
    block = input_dim // num_classes
    templates = np.zeros((num_classes, input_dim))
    for k in range(num_classes):
        templates[k, k * block:(k + 1) * block] = TEMPLATE_AMPLITUDE
    return templates


def synth_generate(num_classes: int, input_dim: int, per_class: int, style_dim: int,
                   noise_sigma: float, seed: int, style_scale: float = 0.1) -> Dataset:
    """Seeded synthetic classification data.

    Each class has a fixed orthogonal template; a sample is
    clamp(template + style_scale * S @ u + noise, 0, 1) where ``u`` is the
    per-sample style latent and ``S`` a shared unit-column basis.  The same
    seed always yields the same dataset.
    """
    if input_dim < num_classes * 4:
        raise ValueError(f"synth_generate: input_dim must be >= 4K, got {input_dim} for K={num_classes}")
    if noise_sigma < 0:
        raise ValueError(f"synth_generate: noise_sigma must be >= 0, got {noise_sigma}")
    templates = _class_templates(num_classes, input_dim)
    basis_rng = rng_for(seed, 0)
    basis = basis_rng.standard_normal((input_dim, style_dim))
    basis /= np.linalg.norm(basis, axis=0, keepdims=True)
    sample_rng = rng_for(seed, 1)
    xs, ys = [], []
    for k in range(num_classes):
        style = sample_rng.standard_normal((per_class, style_dim))
        noise = sample_rng.standard_normal((per_class, input_dim)) * noise_sigma
        x = templates[k] + style_scale * (style @ basis.T) + noise
        xs.append(np.clip(x, 0.0, 1.0))
        ys.append(np.full(per_class, k, dtype=np.int64))
    return Dataset(np.concatenate(xs), np.concatenate(ys), num_classes)


def synth_train_test(num_classes: int, input_dim: int, per_class: int, test_per_class: int,
                     style_dim: int, noise_sigma: float, seed: int,
                     style_scale: float = 0.1) -> tuple:
    """One generator call partitioned into disjoint train/test datasets.

    Both halves share the templates and style basis; the first ``per_class``
    samples of each class form the train pool.
    """
    full = synth_generate(num_classes, input_dim, per_class + test_per_class,
                          style_dim, noise_sigma, seed, style_scale)
    total = per_class + test_per_class
    train_rows, test_rows = [], []
    for k in range(num_classes):
        start = k * total
        train_rows.append(np.arange(start, start + per_class))
        test_rows.append(np.arange(start + per_class, start + total))
    tr = np.concatenate(train_rows)
    te = np.concatenate(test_rows)
    train = Dataset(full.inputs[tr], full.labels[tr], num_classes)
    test = Dataset(full.inputs[te], full.labels[te], num_classes)
    return train, test


def synth_manifest(num_classes: int, input_dim: int, per_class: int, style_dim: int,
                   noise_sigma: float, seed: int, style_scale: float = 0.1) -> dict:
    """Generator parameters as a JSON-ready record."""
    return {
        "generator": "shotvae-synth-v1",
        "prng": "numpy Philox via SeedSequence(seed, spawn_key)",
        "num_classes": num_classes,
        "input_dim": input_dim,
        "per_class": per_class,
        "style_dim": style_dim,
        "noise_sigma": noise_sigma,
        "style_scale": style_scale,
        "seed": seed,
    }


def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def split(ds: Dataset, spec: SplitSpec) -> tuple:
    """Disjoint (labeled, unlabeled) partition; unlabeled labels are firewalled."""
    if ds.labels is None:
        raise SplitError("split: dataset has no labels")
    n = len(ds)
    if spec.labeled_count > n:
        raise SplitError(f"split: labeled_count {spec.labeled_count} exceeds dataset size {n}")
    rng = rng_for(spec.seed, 2)
    if spec.stratified:
        k = ds.num_classes
        base, extra = divmod(spec.labeled_count, k)
        chosen = []
        for c in range(k):
            rows = np.flatnonzero(ds.labels == c)
            want = base + (1 if c < extra else 0)
            if want > rows.size:
                raise SplitError(
                    f"split: class {c} has {rows.size} samples, need {want} for stratification"
                )
            chosen.append(rng.permutation(rows)[:want])
        labeled_rows = np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=np.int64)
    else:
        labeled_rows = np.sort(rng.permutation(n)[:spec.labeled_count])
    mask = np.zeros(n, dtype=bool)
    mask[labeled_rows] = True
    labeled = Dataset(ds.inputs[mask], ds.labels[mask], ds.num_classes)
    unlabeled = Dataset(ds.inputs[~mask], None, ds.num_classes,
                        _hidden_labels=ds.labels[~mask].copy())
    return labeled, unlabeled


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int,
            drop_short: Optional[bool] = None) -> Iterator[Batch]:
    """Epoch-deterministic shuffled mini-batches.

    The shuffle is keyed by (seed, epoch).  For unlabeled streams a final
    batch shorter than 2 is dropped (in-batch matching needs pairs); labeled
    streams keep short batches.
    """
    if batch_size < 1:
        raise ValueError(f"batches: batch_size must be >= 1, got {batch_size}")
    if drop_short is None:
        drop_short = ds.labels is None
    order = rng_for(seed, 3, epoch).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        rows = order[start:start + batch_size]
        if drop_short and rows.size < 2:
            continue
        labels = None if ds.labels is None else ds.labels[rows]
        yield Batch(inputs=Tensor(ds.inputs[rows]), labels=labels)
