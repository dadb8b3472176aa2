"""Training configuration and its flat ``key = value`` file format.

Every hyperparameter lives in one dataclass so a run is fully described by
one config plus its seeds.  The on-disk format is deliberately flat UTF-8
text with dotted keys (one key per line, ``#`` comments); it round-trips
exactly and diffs cleanly.  Unknown keys are an error, not a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Tuple

__all__ = ["TrainConfig", "ConfigError", "LOSS_MODES"]

LOSS_MODES = ("shot", "smooth_only", "m2", "ce_only")


class ConfigError(ValueError):
    """Malformed configuration file or invalid field value."""


@dataclass
class TrainConfig:
    # loss
    loss_mode: str = "shot"
    alpha: float = 1.0            # CE weight, m2 mode only
    beta: float = 0.01            # weight on the continuous-latent KL
    epsilon: float = 0.001        # label smoothing level
    tau: float = 0.67             # categorical relaxation temperature
    gamma: float = 5.0            # warm-up sharpness
    ot_target_grad: bool = False  # let gradients flow into interpolation targets
    labeled_recon: str = "mean"   # feed the smoothed target itself ("mean") or a draw from it ("sample")
    label_prior: str = "uniform"  # "uniform" or "empirical" (labeled-set class frequencies)
    # How the labeled bound's posterior-to-prior term is applied: per sample
    # ("pointwise", the literal equation) or on the batch-average posterior
    # ("marginal", dropping the mutual-information part the pointwise form
    # adds; the pointwise form has an interior equilibrium that stops the
    # posterior short of the smoothed target on small class counts).
    label_kl: str = "pointwise"
    # train
    epochs: int = 30
    lr: float = 0.1
    momentum: float = 0.9
    lr_decay_epochs: Optional[Tuple[int, ...]] = None  # None -> {50%, 75%} of epochs
    lr_decay_factor: float = 0.1
    labeled_batch: int = 64
    unlabeled_batch: int = 512
    diagnostics: bool = True
    # model
    z_dim: int = 10
    hidden: int = 256
    fixed_var: float = 1.0
    # seeds
    seed_model_init: int = 0
    seed_split: int = 0
    seed_batch: int = 0
    seed_sample: int = 0
    # data
    data_kind: str = "synth"
    labeled_count: int = 40
    stratified: bool = True
    synth_num_classes: int = 4
    synth_input_dim: int = 64
    synth_per_class: int = 1010
    synth_test_per_class: int = 250
    synth_style_dim: int = 4
    synth_noise_sigma: float = 0.05
    synth_style_scale: float = 0.1
    synth_seed: int = 0
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss.mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.labeled_recon not in ("mean", "sample"):
            raise ConfigError(f"loss.labeled_recon must be 'mean' or 'sample', got {self.labeled_recon!r}")
        if self.label_prior not in ("uniform", "empirical"):
            raise ConfigError(f"loss.label_prior must be 'uniform' or 'empirical', got {self.label_prior!r}")
        if self.label_kl not in ("pointwise", "marginal"):
            raise ConfigError(f"loss.label_kl must be 'pointwise' or 'marginal', got {self.label_kl!r}")
        if self.data_kind not in ("synth", "idx"):
            raise ConfigError(f"data.kind must be 'synth' or 'idx', got {self.data_kind!r}")
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.beta <= 0:
            raise ConfigError(f"loss.beta must be > 0, got {self.beta}")
        if self.gamma <= 0:
            raise ConfigError(f"loss.gamma must be > 0, got {self.gamma}")

    def milestones(self) -> Tuple[int, ...]:
        """LR decay epochs; default is 50% and 75% of the budget."""
        if self.lr_decay_epochs is not None:
            return tuple(self.lr_decay_epochs)
        lo, hi = self.epochs // 2, (3 * self.epochs) // 4
        return tuple(sorted({m for m in (lo, hi) if 1 <= m <= self.epochs}))

    def to_file(self, path) -> None:
        Path(path).write_text(dumps(self), encoding="utf-8")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return loads(Path(path).read_text(encoding="utf-8"))

    def with_updates(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


# key-in-file -> (dataclass field, type tag)
_KEYS = {
    "loss.mode": ("loss_mode", "str"),
    "loss.alpha": ("alpha", "float"),
    "loss.beta": ("beta", "float"),
    "loss.epsilon": ("epsilon", "float"),
    "loss.tau": ("tau", "float"),
    "loss.gamma": ("gamma", "float"),
    "loss.ot_target_grad": ("ot_target_grad", "bool"),
    "loss.labeled_recon": ("labeled_recon", "str"),
    "loss.label_prior": ("label_prior", "str"),
    "loss.label_kl": ("label_kl", "str"),
    "train.epochs": ("epochs", "int"),
    "train.lr": ("lr", "float"),
    "train.momentum": ("momentum", "float"),
    "train.lr_decay_epochs": ("lr_decay_epochs", "int_tuple_or_auto"),
    "train.lr_decay_factor": ("lr_decay_factor", "float"),
    "train.labeled_batch": ("labeled_batch", "int"),
    "train.unlabeled_batch": ("unlabeled_batch", "int"),
    "train.diagnostics": ("diagnostics", "bool"),
    "model.z_dim": ("z_dim", "int"),
    "model.hidden": ("hidden", "int"),
    "model.fixed_var": ("fixed_var", "float"),
    "seed.model_init": ("seed_model_init", "int"),
    "seed.split": ("seed_split", "int"),
    "seed.batch": ("seed_batch", "int"),
    "seed.sample": ("seed_sample", "int"),
    "data.kind": ("data_kind", "str"),
    "data.labeled_count": ("labeled_count", "int"),
    "data.stratified": ("stratified", "bool"),
    "data.synth.num_classes": ("synth_num_classes", "int"),
    "data.synth.input_dim": ("synth_input_dim", "int"),
    "data.synth.per_class": ("synth_per_class", "int"),
    "data.synth.test_per_class": ("synth_test_per_class", "int"),
    "data.synth.style_dim": ("synth_style_dim", "int"),
    "data.synth.noise_sigma": ("synth_noise_sigma", "float"),
    "data.synth.style_scale": ("synth_style_scale", "float"),
    "data.synth.seed": ("synth_seed", "int"),
    "data.idx.train_images": ("idx_train_images", "str"),
    "data.idx.train_labels": ("idx_train_labels", "str"),
    "data.idx.test_images": ("idx_test_images", "str"),
    "data.idx.test_labels": ("idx_test_labels", "str"),
}

_FIELD_TO_KEY = {f: k for k, (f, _) in _KEYS.items()}


def _format(value, kind: str) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind == "int_tuple_or_auto":
        return "auto" if value is None else ",".join(str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def _parse(text: str, kind: str, key: str):
    text = text.strip()
    try:
        if kind == "bool":
            if text not in ("true", "false"):
                raise ValueError
            return text == "true"
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "int_tuple_or_auto":
            if text == "auto":
                return None
            if not text:
                return ()
            return tuple(int(v) for v in text.split(","))
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def dumps(config: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        key = _FIELD_TO_KEY[f.name]
        kind = _KEYS[key][1]
        lines.append(f"{key} = {_format(getattr(config, f.name), kind)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name, kind = _KEYS[key]
        if field_name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[field_name] = _parse(val, kind, key)
    return TrainConfig(**values)
