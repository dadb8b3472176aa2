"""All training objectives and their composition into one step.

The four loss modes:

* ``shot``        -- smoothed labeled bound + unlabeled bound + warm-up
                     weighted interpolation-consistency term (the full
                     per-step recipe, see ``shot_vae_step``).
* ``smooth_only`` -- same without the consistency term.
* ``m2``          -- classic semi-supervised VAE target: labeled bound with
                     a one-hot latent label plus a weighted cross-entropy.
* ``ce_only``     -- plain supervised cross-entropy on the labeled batch.

Sign conventions: ``recon`` is a log-likelihood (higher is better), every
``kl_*`` is a divergence (lower is better), and ``total`` is the loss to
minimize.  All components are means over the batch.

Per-step randomness order (mirrored by the step oracle in the tests):
mixup lambda first (shot mode only), then the labeled batch's Gaussian
noise, then the unlabeled batch's Gaussian noise and Gumbel noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor
from .config import TrainConfig
from .data import Batch
from .distributions import (
    PROB_FLOOR,
    CategoricalDist,
    DiagGaussian,
    SmoothingParams,
    kl_categorical_floored,
    kl_gaussian,
    kl_gaussian_pairwise,
    smooth_label_matrix,
)
from .nets import ModelParams, decode, encode, recon_log_likelihood
from .distributions import sample_gaussian_rt, sample_gumbel_softmax

__all__ = [
    "LossBreakdown",
    "WarmupSchedule",
    "warmup_weight",
    "elbo_unlabeled",
    "smooth_elbo_labeled",
    "m2_objective",
    "cross_entropy_objective",
    "optimal_match",
    "mixup_inputs",
    "optimal_interpolation",
    "ot_approximation",
    "shot_vae_step",
    "training_step",
    "labeled_elbo_pair",
]

_ZERO = lambda: Tensor(0.0)  # noqa: E731


@dataclass
class LossBreakdown:
    """Scalar loss components; ``total`` carries the gradient graph.

    Composition by mode (all terms batch means):
      shot/smooth_only: total = -recon + beta*kl_z + kl_y + kl_label_fit + w_t*ot
      m2:               total = -recon + beta*kl_z + kl_label_fit   (kl_label_fit = alpha*CE)
      ce_only:          total = kl_label_fit                        (kl_label_fit = CE)
    """

    recon: Tensor
    kl_z: Tensor
    kl_y: Tensor
    kl_label_fit: Tensor
    ot: Tensor
    w_t: float
    total: Tensor

    def floats(self) -> dict:
        return {
            "recon": self.recon.item(),
            "kl_z": self.kl_z.item(),
            "kl_y": self.kl_y.item(),
            "kl_label_fit": self.kl_label_fit.item(),
            "ot": self.ot.item(),
            "w_t": float(self.w_t),
            "total": self.total.item(),
        }


@dataclass(frozen=True)
class WarmupSchedule:
    """Exponential ramp for the consistency weight: w_t = exp(-gamma (1 - t/t_max)^2)."""

    gamma: float = 5.0
    t_max: int = 1

    def __post_init__(self):
        if self.gamma <= 0:
            raise DomainError(f"WarmupSchedule: gamma must be > 0, got {self.gamma}")
        if self.t_max < 1:
            raise DomainError(f"WarmupSchedule: t_max must be >= 1, got {self.t_max}")


def warmup_weight(t: int, sched: WarmupSchedule) -> float:
    if not 0 <= t <= sched.t_max:
        raise DomainError(f"warmup_weight: epoch {t} outside [0, {sched.t_max}]")
    frac = 1.0 - t / sched.t_max
    return float(np.exp(-sched.gamma * frac * frac))


def _uniform_prior(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def _prior_tensor(p_y: Optional[np.ndarray], k: int) -> Tensor:
    probs = _uniform_prior(k) if p_y is None else np.asarray(p_y, dtype=np.float64)
    if probs.shape != (k,):
        raise ShapeError(f"label prior: expected shape ({k},), got {probs.shape}")
    return Tensor(probs)


def _mean(t: Tensor) -> Tensor:
    return ad.reduce_mean(t) if t.data.ndim else t


def elbo_unlabeled(x: Tensor, params: ModelParams, beta: float,
                   rng: np.random.Generator, p_y: Optional[np.ndarray] = None,
                   tau: float = 0.67) -> LossBreakdown:
    """Negative unlabeled evidence bound with single-draw reparameterized terms.

    One Gaussian draw for z and one relaxed categorical draw for y feed the
    reconstruction; the two KL terms are closed-form.  Loss contribution is
    -recon + beta*kl_z + kl_y.
    """
    if beta <= 0:
        raise DomainError(f"elbo_unlabeled: beta must be > 0, got {beta}")
    enc = encode(x, params)
    z = sample_gaussian_rt(enc.z_posterior, rng)
    y_soft = sample_gumbel_softmax(enc.y_posterior, tau, rng)
    recon = recon_log_likelihood(x, decode(z, y_soft, params))
    kl_z = _mean(kl_gaussian(enc.z_posterior, DiagGaussian.standard(params.z_dim)))
    prior = _prior_tensor(p_y, params.num_classes)
    kl_y = _mean(kl_categorical_floored(enc.y_posterior.probs, prior))
    total = ad.add(ad.add(ad.scale(recon, -1.0), ad.scale(kl_z, beta)), kl_y)
    return LossBreakdown(recon, kl_z, kl_y, _ZERO(), _ZERO(), 0.0, total)


def _smoothed_targets(labels: np.ndarray, k: int, eps: float) -> np.ndarray:
    return smooth_label_matrix(labels, SmoothingParams(eps, k))


def smooth_elbo_labeled(x: Tensor, labels: np.ndarray, params: ModelParams, beta: float,
                        eps: float, rng: np.random.Generator,
                        p_y: Optional[np.ndarray] = None,
                        recon_mode: str = "mean",
                        label_kl: str = "pointwise") -> LossBreakdown:
    """Negative smoothed labeled bound.

    Terms: reconstruction with the smoothed target as decoder input,
    beta-weighted continuous KL, label-posterior-to-prior KL, and the
    smoothed-target-to-posterior fit KL.  The expectation of the
    reconstruction over the near-degenerate smoothed target is approximated
    by plugging in its mean (``recon_mode='mean'``); ``'sample'`` draws a
    hard label from it instead.

    ``label_kl='pointwise'`` applies the posterior-to-prior divergence per
    sample, the literal reading.  That form decomposes into mutual
    information plus a marginal divergence, and its mutual-information part
    holds the posterior at an interior balance point against the fit term;
    ``'marginal'`` keeps only the batch-marginal divergence, letting the
    posterior converge to the smoothed target.
    """
    if beta <= 0:
        raise DomainError(f"smooth_elbo_labeled: beta must be > 0, got {beta}")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, -1))
    if labels.shape[0] != x.shape[0]:
        raise ShapeError(f"smooth_elbo_labeled: {labels.shape[0]} labels for {x.shape[0]} inputs")
    k = params.num_classes
    phat = _smoothed_targets(labels, k, eps)

    enc = encode(x, params)
    z = sample_gaussian_rt(enc.z_posterior, rng)
    if recon_mode == "mean":
        y_in = Tensor(phat)
    elif recon_mode == "sample":
        drawn = np.array([rng.choice(k, p=row) for row in phat])
        y_in = Tensor(np.eye(k)[drawn])
    else:
        raise DomainError(f"smooth_elbo_labeled: unknown recon_mode {recon_mode!r}")
    recon = recon_log_likelihood(x, decode(z, y_in, params))
    kl_z = _mean(kl_gaussian(enc.z_posterior, DiagGaussian.standard(params.z_dim)))
    prior = _prior_tensor(p_y, k)
    q_probs = enc.y_posterior.probs
    if label_kl == "pointwise":
        kl_y = _mean(kl_categorical_floored(q_probs, prior))
    elif label_kl == "marginal":
        kl_y = kl_categorical_floored(ad.reduce_mean(q_probs, axis=0), prior)
    else:
        raise DomainError(f"smooth_elbo_labeled: unknown label_kl {label_kl!r}")
    # KL(phat || q): phat is a constant, q gets the probability floor.
    log_q = ad.log(ad.clip(q_probs, PROB_FLOOR, 1.0))
    fit_terms = ad.mul(Tensor(phat), ad.sub(Tensor(np.log(phat)), log_q))
    kl_fit = _mean(ad.reduce_sum(fit_terms, axis=-1))
    total = ad.add(
        ad.add(ad.add(ad.scale(recon, -1.0), ad.scale(kl_z, beta)), kl_y), kl_fit
    )
    return LossBreakdown(recon, kl_z, kl_y, kl_fit, _ZERO(), 0.0, total)


def _cross_entropy(q_probs: Tensor, labels: np.ndarray, k: int) -> Tensor:
    onehot = np.eye(k)[np.asarray(labels, dtype=np.int64)]
    log_q = ad.log(ad.clip(q_probs, PROB_FLOOR, 1.0))
    per_sample = ad.scale(ad.reduce_sum(ad.mul(Tensor(onehot), log_q), axis=-1), -1.0)
    return _mean(per_sample)


def m2_objective(x: Tensor, labels: np.ndarray, params: ModelParams, alpha: float,
                 beta: float, rng: np.random.Generator,
                 p_y: Optional[np.ndarray] = None) -> LossBreakdown:
    """Baseline labeled target: negative one-hot-label bound plus alpha-weighted CE.

    The label enters the decoder as an exact one-hot; the classification
    head only learns through the separate cross-entropy term.
    """
    if alpha < 0:
        raise DomainError(f"m2_objective: alpha must be >= 0, got {alpha}")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, -1))
    k = params.num_classes
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"m2_objective: label out of range for K={k}")
    enc = encode(x, params)
    z = sample_gaussian_rt(enc.z_posterior, rng)
    onehot = Tensor(np.eye(k)[labels])
    recon = recon_log_likelihood(x, decode(z, onehot, params))
    kl_z = _mean(kl_gaussian(enc.z_posterior, DiagGaussian.standard(params.z_dim)))
    ce = _cross_entropy(enc.y_posterior.probs, labels, k)
    weighted_ce = ad.scale(ce, alpha)
    total = ad.add(ad.add(ad.scale(recon, -1.0), ad.scale(kl_z, beta)), weighted_ce)
    return LossBreakdown(recon, kl_z, _ZERO(), weighted_ce, _ZERO(), 0.0, total)


def cross_entropy_objective(x: Tensor, labels: np.ndarray, params: ModelParams) -> LossBreakdown:
    """Labeled-only supervised baseline."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, -1))
    enc = encode(x, params)
    ce = _cross_entropy(enc.y_posterior.probs, labels, params.num_classes)
    return LossBreakdown(_ZERO(), _ZERO(), _ZERO(), ce, _ZERO(), 0.0, ce)


def optimal_match(z_posterior: DiagGaussian) -> np.ndarray:
    """In-batch nearest neighbour under KL between continuous posteriors.

    For each row i: argmin over j != i of KL(row_i || row_j); ties break to
    the lowest index.  Pure bookkeeping, no gradients.
    """
    mu = z_posterior.mu.data
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise ShapeError(f"optimal_match: need a batch of >= 2 encodings, got {mu.shape}")
    table = kl_gaussian_pairwise(mu, z_posterior.log_var.data)
    np.fill_diagonal(table, np.inf)
    return np.argmin(table, axis=1)


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def mixup_inputs(x0: Tensor, x1: Tensor, lam: float) -> Tensor:
    """Convex combination (1-lam)*x0 + lam*x1."""
    lam = _check_lambda(lam)
    if x0.shape != x1.shape:
        raise ShapeError(f"mixup_inputs: shapes {x0.shape} vs {x1.shape}")
    return ad.add(ad.scale(x0, 1.0 - lam), ad.scale(x1, lam))


def optimal_interpolation(pi0: CategoricalDist, pi1: CategoricalDist, lam: float) -> CategoricalDist:
    """KL-barycenter of two categoricals: the convex combination.

    This is the exact minimizer of
    (1-lam) KL(pi0 || p) + lam KL(pi1 || p) over the simplex.
    """
    lam = _check_lambda(lam)
    if pi0.num_classes != pi1.num_classes:
        raise ShapeError(f"optimal_interpolation: K mismatch {pi0.num_classes} vs {pi1.num_classes}")
    probs = ad.add(ad.scale(pi0.probs, 1.0 - lam), ad.scale(pi1.probs, lam))
    return CategoricalDist(probs)


def ot_approximation(x0: Tensor, x1: Tensor, lam: float, params: ModelParams,
                     target_grad: bool = False) -> Tensor:
    """Interpolation-consistency penalty for an input pair.

    KL between the posterior at the mixed input and the barycenter of the
    endpoint posteriors; the barycenter is treated as a constant target
    unless ``target_grad`` is set.
    """
    lam = _check_lambda(lam)
    pi0 = encode(x0, params).y_posterior
    pi1 = encode(x1, params).y_posterior
    x_mix = mixup_inputs(x0, x1, lam)
    q_mix = encode(x_mix, params).y_posterior
    target = optimal_interpolation(pi0, pi1, lam).probs
    if not target_grad:
        target = ad.stop_gradient(target)
    return _mean(kl_categorical_floored(q_mix.probs, target))


def shot_vae_step(labeled: Batch, unlabeled: Batch, t: int, config: TrainConfig,
                  params: ModelParams, rng: np.random.Generator,
                  p_y: Optional[np.ndarray] = None) -> LossBreakdown:
    """One full training objective: labeled bound + unlabeled bound + warm-up
    weighted consistency term over in-batch optimal matches.

    One mixup lambda is drawn per step and shared across the batch.  The
    unlabeled batch is encoded once; its matched partner view is a row
    gather of the same encoding.
    """
    if labeled.labels is None or len(labeled) == 0:
        raise DomainError("shot_vae_step: labeled batch must be non-empty and carry labels")
    if len(unlabeled) < 2:
        raise DomainError("shot_vae_step: unlabeled batch must have >= 2 samples")
    lam = float(rng.uniform())

    lab = smooth_elbo_labeled(labeled.inputs, labeled.labels, params, config.beta,
                              config.epsilon, rng, p_y, config.labeled_recon,
                              config.label_kl)

    x_u = unlabeled.inputs
    enc = encode(x_u, params)
    z = sample_gaussian_rt(enc.z_posterior, rng)
    y_soft = sample_gumbel_softmax(enc.y_posterior, config.tau, rng)
    recon_u = recon_log_likelihood(x_u, decode(z, y_soft, params))
    kl_z_u = _mean(kl_gaussian(enc.z_posterior, DiagGaussian.standard(params.z_dim)))
    prior = _prior_tensor(p_y, params.num_classes)
    kl_y_u = _mean(kl_categorical_floored(enc.y_posterior.probs, prior))

    match = optimal_match(enc.z_posterior)
    pi0 = enc.y_posterior.probs
    pi1 = ad.take_rows(pi0, match)
    x_mix = Tensor((1.0 - lam) * x_u.data + lam * x_u.data[match])
    q_mix = encode(x_mix, params).y_posterior
    target = ad.add(ad.scale(pi0, 1.0 - lam), ad.scale(pi1, lam))
    if not config.ot_target_grad:
        target = ad.stop_gradient(target)
    ot = _mean(kl_categorical_floored(q_mix.probs, target))

    w_t = warmup_weight(t, WarmupSchedule(config.gamma, config.epochs))
    unlab_total = ad.add(ad.add(ad.scale(recon_u, -1.0), ad.scale(kl_z_u, config.beta)), kl_y_u)
    total = ad.add(ad.add(lab.total, unlab_total), ad.scale(ot, w_t))
    return LossBreakdown(
        recon=ad.add(lab.recon, recon_u),
        kl_z=ad.add(lab.kl_z, kl_z_u),
        kl_y=ad.add(lab.kl_y, kl_y_u),
        kl_label_fit=lab.kl_label_fit,
        ot=ot,
        w_t=w_t,
        total=total,
    )


def training_step(labeled: Batch, unlabeled: Optional[Batch], t: int, config: TrainConfig,
                  params: ModelParams, rng: np.random.Generator,
                  p_y: Optional[np.ndarray] = None) -> LossBreakdown:
    """Dispatch one step for the configured loss mode."""
    mode = config.loss_mode
    if mode == "ce_only":
        return cross_entropy_objective(labeled.inputs, labeled.labels, params)
    if mode == "shot":
        return shot_vae_step(labeled, unlabeled, t, config, params, rng, p_y)

    if unlabeled is None or len(unlabeled) == 0:
        raise DomainError(f"training_step: mode {mode!r} needs an unlabeled batch")
    if mode == "smooth_only":
        lab = smooth_elbo_labeled(labeled.inputs, labeled.labels, params, config.beta,
                                  config.epsilon, rng, p_y, config.labeled_recon,
                                  config.label_kl)
    elif mode == "m2":
        lab = m2_objective(labeled.inputs, labeled.labels, params, config.alpha,
                           config.beta, rng, p_y)
    else:
        raise DomainError(f"training_step: unknown loss mode {mode!r}")
    unlab = elbo_unlabeled(unlabeled.inputs, params, config.beta, rng, p_y, config.tau)
    return LossBreakdown(
        recon=ad.add(lab.recon, unlab.recon),
        kl_z=ad.add(lab.kl_z, unlab.kl_z),
        kl_y=ad.add(lab.kl_y, unlab.kl_y),
        kl_label_fit=lab.kl_label_fit,
        ot=_ZERO(),
        w_t=0.0,
        total=ad.add(lab.total, unlab.total),
    )


def labeled_elbo_pair(x: Tensor, labels: np.ndarray, params: ModelParams, beta: float,
                      eps: float, rng: np.random.Generator,
                      p_y: Optional[np.ndarray] = None,
                      y_probs_override: Optional[np.ndarray] = None) -> tuple:
    """Evaluate (smoothed bound, plain labeled bound) on shared draws.

    Both bounds share the reconstruction (smoothed target as decoder input)
    and the continuous KL, so their difference reduces exactly to the three
    label-side divergences.  Value-level: used by the convergence metric and
    the proposition suite.  ``y_probs_override`` substitutes the class
    posterior rows, which lets callers place the posterior at a chosen
    sup-distance from the smoothed target.
    """
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, -1))
    k = params.num_classes
    phat = _smoothed_targets(labels, k, eps)
    prior = _uniform_prior(k) if p_y is None else np.asarray(p_y, dtype=np.float64)

    enc = encode(x, params)
    q = enc.y_posterior.probs.data if y_probs_override is None else np.asarray(y_probs_override)
    if q.shape != (x.shape[0], k):
        raise ShapeError(f"labeled_elbo_pair: posterior shape {q.shape} != ({x.shape[0]}, {k})")
    z = sample_gaussian_rt(enc.z_posterior, rng)
    recon = recon_log_likelihood(x, decode(z, Tensor(phat), params)).item()
    kl_z = _mean(kl_gaussian(enc.z_posterior, DiagGaussian.standard(params.z_dim))).item()

    kl_q_p = float(np.mean((q * (np.log(q) - np.log(prior))).sum(axis=-1)))
    kl_phat_q = float(np.mean((phat * (np.log(phat) - np.log(q))).sum(axis=-1)))
    kl_phat_p = float(np.mean((phat * (np.log(phat) - np.log(prior))).sum(axis=-1)))

    smooth = recon - beta * kl_z - kl_q_p - kl_phat_q
    plain = recon - beta * kl_z - kl_phat_p
    return smooth, plain
