"""Closed-form probability objects and divergences.

Diagonal Gaussians and categoricals are the two distribution families the
model needs: the continuous latent posterior/prior and the label
posterior/prior/smoothed target.  Both reparameterized samplers live here,
along with label smoothing and the Pinsker total-variation bound.

Two KL flavours exist on purpose.  ``kl_categorical`` is the strict,
value-level contract used by the verification suite: it honours the
0*log(0)=0 convention and raises on support violations instead of hiding
them.  ``kl_categorical_floored`` is the differentiable, graph-building
variant the losses use; it clamps probabilities at ``PROB_FLOOR`` before
any log so training stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor

__all__ = [
    "LOG_VAR_MIN",
    "LOG_VAR_MAX",
    "PROB_FLOOR",
    "DiagGaussian",
    "CategoricalDist",
    "SmoothingParams",
    "smooth_label",
    "smooth_label_matrix",
    "kl_gaussian",
    "kl_gaussian_pairwise",
    "kl_categorical",
    "kl_categorical_floored",
    "sample_gaussian_rt",
    "sample_gumbel_softmax",
    "pinsker_bound",
]

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0
PROB_FLOOR = 1e-12


class DiagGaussian:
    """Diagonal Gaussian N(mu, diag(exp(log_var))) over the last axis.

    ``log_var`` is clamped to [LOG_VAR_MIN, LOG_VAR_MAX] at construction so
    samples and KL terms stay finite for any encoder output.  Leading axes
    are batch axes.
    """

    __slots__ = ("mu", "log_var")

    def __init__(self, mu: Tensor, log_var: Tensor):
        mu = mu if isinstance(mu, Tensor) else Tensor(mu)
        log_var = log_var if isinstance(log_var, Tensor) else Tensor(log_var)
        if mu.shape != log_var.shape:
            raise ShapeError(f"DiagGaussian: mu {mu.shape} vs log_var {log_var.shape}")
        self.mu = mu
        self.log_var = ad.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX)

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    @classmethod
    def standard(cls, dim: int) -> "DiagGaussian":
        return cls(Tensor(np.zeros(dim)), Tensor(np.zeros(dim)))


class CategoricalDist:
    """Probability vector(s) over K >= 2 classes along the last axis."""

    __slots__ = ("probs",)

    def __init__(self, probs: Tensor):
        probs = probs if isinstance(probs, Tensor) else Tensor(probs)
        k = probs.shape[-1] if probs.shape else 0
        if k < 2:
            raise ShapeError(f"CategoricalDist: need K >= 2 classes, got {k}")
        p = probs.data
        if np.any(p < -1e-12):
            raise DomainError("CategoricalDist: negative probability entry")
        sums = p.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise DomainError("CategoricalDist: probabilities must sum to 1 within 1e-9")
        self.probs = probs

    @property
    def num_classes(self) -> int:
        return self.probs.shape[-1]

    @classmethod
    def uniform(cls, k: int) -> "CategoricalDist":
        return cls(Tensor(np.full(k, 1.0 / k)))


@dataclass(frozen=True)
class SmoothingParams:
    """Label-smoothing level and class count.

    The constraint epsilon < (K-1)/K keeps the true class the argmax of the
    smoothed target.
    """

    epsilon: float
    num_classes: int

    def __post_init__(self):
        k = self.num_classes
        if k < 2:
            raise DomainError(f"SmoothingParams: need K >= 2, got {k}")
        if not 0.0 < self.epsilon < (k - 1) / k:
            raise DomainError(
                f"SmoothingParams: epsilon must be in (0, {(k - 1) / k:.6g}), got {self.epsilon}"
            )


def smooth_label(y: int, params: SmoothingParams) -> CategoricalDist:
    """Smoothed one-hot target: 1-eps on the true class, eps/(K-1) elsewhere."""
    k = params.num_classes
    if not 0 <= y < k:
        raise IndexError(f"smooth_label: class {y} out of range for K={k}")
    probs = np.full(k, params.epsilon / (k - 1))
    probs[y] = 1.0 - params.epsilon
    return CategoricalDist(Tensor(probs))


def smooth_label_matrix(labels: np.ndarray, params: SmoothingParams) -> np.ndarray:
    """Row-per-sample smoothed targets as a plain array."""
    labels = np.asarray(labels, dtype=np.int64)
    k = params.num_classes
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"smooth_label_matrix: label out of range for K={k}")
    out = np.full((labels.shape[0], k), params.epsilon / (k - 1))
    out[np.arange(labels.shape[0]), labels] = 1.0 - params.epsilon
    return out


def kl_gaussian(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """KL(q || p) for diagonal Gaussians, reduced over the last axis.

    Returns a scalar for 1-D parameters and a per-sample vector for batched
    ones.  Differentiable with respect to both parameter sets.
    """
    if q.dim != p.dim:
        raise ShapeError(f"kl_gaussian: dimension mismatch {q.dim} vs {p.dim}")
    var_q = ad.exp(q.log_var)
    var_p = ad.exp(p.log_var)
    diff = ad.sub(q.mu, p.mu)
    ratio = ad.div(ad.add(var_q, ad.square(diff)), var_p)
    per_dim = ad.add(ad.sub(p.log_var, q.log_var), ratio)
    summed = ad.reduce_sum(per_dim, axis=-1)
    return ad.scale(ad.sub(summed, Tensor(float(q.dim))), 0.5)


def kl_gaussian_pairwise(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """All-pairs KL(row_i || row_j) for a batch of diagonal Gaussians.

    Value-level helper (no gradients) used by the in-batch optimal match.
    """
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.asarray(log_var, dtype=np.float64)
    var = np.exp(lv)
    # [i, j, d] broadcast of the closed form, summed over d.
    lv_term = lv[None, :, :] - lv[:, None, :]
    diff = mu[:, None, :] - mu[None, :, :]
    ratio = (var[:, None, :] + diff * diff) / var[None, :, :]
    return 0.5 * (lv_term + ratio - 1.0).sum(axis=-1)


def kl_categorical(q: CategoricalDist, p: CategoricalDist) -> Tensor:
    """Strict KL(q || p) with the 0*log(0) = 0 convention.

    Raises ``DomainError`` when q puts mass where p has none (infinite
    divergence).  Value-level: the result does not participate in the
    gradient graph; losses use ``kl_categorical_floored``.
    """
    if q.num_classes != p.num_classes:
        raise ShapeError(
            f"kl_categorical: K mismatch {q.num_classes} vs {p.num_classes}"
        )
    qd, pd = q.probs.data, p.probs.data
    qd, pd = np.broadcast_arrays(qd, pd)
    support = qd > 0.0
    if np.any(support & (pd <= 0.0)):
        raise DomainError("kl_categorical: q has mass where p is zero (infinite divergence)")
    terms = np.zeros_like(qd)
    terms[support] = qd[support] * (np.log(qd[support]) - np.log(pd[support]))
    return Tensor(terms.sum(axis=-1))


def kl_categorical_floored(q_probs: Tensor, p_probs: Tensor, floor: float = PROB_FLOOR) -> Tensor:
    """Differentiable KL(q || p) with probabilities floored before the logs.

    Reduced over the last axis.  Training-side variant: robust where the
    strict contract would raise.
    """
    qc = ad.clip(q_probs, floor, 1.0)
    pc = ad.clip(p_probs, floor, 1.0)
    terms = ad.mul(q_probs, ad.sub(ad.log(qc), ad.log(pc)))
    return ad.reduce_sum(terms, axis=-1)


def sample_gaussian_rt(q: DiagGaussian, rng: np.random.Generator) -> Tensor:
    """Reparameterized draw z = mu + sigma * noise, differentiable in (mu, log_var)."""
    noise = rng.standard_normal(q.mu.shape)
    sigma = ad.exp(ad.scale(q.log_var, 0.5))
    return ad.add(q.mu, ad.mul(sigma, Tensor(noise)))


def sample_gumbel_softmax(pi: CategoricalDist, tau: float, rng: np.random.Generator) -> Tensor:
    """Gumbel-softmax draw: softmax((log pi + g) / tau), differentiable in pi.

    Probabilities are floored at PROB_FLOOR before the log; uniform noise is
    kept inside (PROB_FLOOR, 1 - PROB_FLOOR) so the double log never sees 0.
    Soft samples only -- no straight-through hardening.
    """
    if tau <= 0.0:
        raise DomainError(f"sample_gumbel_softmax: tau must be > 0, got {tau}")
    u = rng.uniform(size=pi.probs.shape)
    u = np.clip(u, PROB_FLOOR, 1.0 - PROB_FLOOR)
    gumbel = -np.log(-np.log(u))
    logits = ad.add(ad.log(ad.clip(pi.probs, PROB_FLOOR, 1.0)), Tensor(gumbel))
    return ad.softmax(ad.scale(logits, 1.0 / tau))


def pinsker_bound(q: CategoricalDist, p: CategoricalDist) -> tuple:
    """Componentwise |p - q| bound: returns (max_abs_diff, sqrt(KL(p||q)/2))."""
    kl = kl_categorical(p, q).item()
    diff = float(np.max(np.abs(p.probs.data - q.probs.data)))
    return diff, float(np.sqrt(0.5 * kl))
