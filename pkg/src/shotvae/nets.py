"""The network: MLP encoder with Gaussian and categorical heads, MLP decoder.

Both sides are 4-layer MLPs: three shared ReLU layers plus a linear head
layer.  The encoder trunk feeds three heads (mean, log-variance, class
logits); the decoder consumes the concatenation of a continuous latent and
a probability vector over classes and emits a sigmoid-bounded mean for a
fixed-variance Gaussian likelihood.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor
from .distributions import CategoricalDist, DiagGaussian, SmoothingParams, smooth_label

__all__ = [
    "EncoderOutput",
    "DecoderLikelihood",
    "ModelParams",
    "encode",
    "decode",
    "recon_log_likelihood",
    "conditional_generate",
]

N_HIDDEN_LAYERS = 3  # trunk depth; heads/output layer make it 4 weight layers per side


class EncoderOutput:
    """Joint posterior over the continuous latent and the class label."""

    __slots__ = ("z_posterior", "y_posterior")

    def __init__(self, z_posterior: DiagGaussian, y_posterior: CategoricalDist):
        self.z_posterior = z_posterior
        self.y_posterior = y_posterior


class DecoderLikelihood:
    """Gaussian likelihood with learned mean and fixed scalar variance."""

    __slots__ = ("mean", "fixed_var")

    def __init__(self, mean: Tensor, fixed_var: float = 1.0):
        if fixed_var <= 0.0:
            raise DomainError(f"DecoderLikelihood: fixed_var must be > 0, got {fixed_var}")
        self.mean = mean
        self.fixed_var = float(fixed_var)


def _he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ModelParams:
    """Named map of weight/bias tensors plus the architecture dimensions.

    Layer names: ``enc.l{i}``, ``enc.mu``, ``enc.logvar``, ``enc.y`` on the
    encoder side and ``dec.l{i}``, ``dec.out`` on the decoder side, each
    with ``.w`` / ``.b`` entries.  All tensors require gradients.
    """

    def __init__(self, tensors: dict, input_dim: int, z_dim: int, num_classes: int,
                 hidden: int, fixed_var: float = 1.0):
        self.tensors = dict(tensors)
        self.input_dim = int(input_dim)
        self.z_dim = int(z_dim)
        self.num_classes = int(num_classes)
        self.hidden = int(hidden)
        self.fixed_var = float(fixed_var)
        for name, t in self.tensors.items():
            if not t.requires_grad:
                raise DomainError(f"ModelParams: tensor {name!r} must require gradients")

    @classmethod
    def init(cls, input_dim: int, z_dim: int, num_classes: int, hidden: int = 256,
             rng: np.random.Generator | None = None, fixed_var: float = 1.0) -> "ModelParams":
        """He-uniform weights, zero biases."""
        if num_classes < 2:
            raise DomainError(f"ModelParams: need K >= 2, got {num_classes}")
        rng = np.random.default_rng(0) if rng is None else rng
        tensors: dict = {}

        def linear(name: str, fan_in: int, fan_out: int) -> None:
            tensors[f"{name}.w"] = Tensor(_he_uniform(rng, fan_in, fan_out), requires_grad=True)
            tensors[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

        dim = input_dim
        for i in range(N_HIDDEN_LAYERS):
            linear(f"enc.l{i}", dim, hidden)
            dim = hidden
        linear("enc.mu", hidden, z_dim)
        linear("enc.logvar", hidden, z_dim)
        linear("enc.y", hidden, num_classes)

        dim = z_dim + num_classes
        for i in range(N_HIDDEN_LAYERS):
            linear(f"dec.l{i}", dim, hidden)
            dim = hidden
        linear("dec.out", hidden, input_dim)
        return cls(tensors, input_dim, z_dim, num_classes, hidden, fixed_var)

    def parameters(self) -> list:
        return list(self.tensors.values())

    def names(self) -> list:
        return list(self.tensors.keys())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]


def _affine(x: Tensor, params: ModelParams, name: str) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def _as_matrix(x: Tensor, dim: int, what: str) -> Tensor:
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, -1))
    if x.data.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what}: expected [batch, {dim}], got {x.shape}")
    return x


def encode(x: Tensor, params: ModelParams) -> EncoderOutput:
    """Posterior over (z, y) for a batch of inputs in [0, 1]."""
    x = _as_matrix(x, params.input_dim, "encode")
    if not np.all(np.isfinite(x.data)):
        raise DomainError("encode: input contains non-finite values")
    h = x
    for i in range(N_HIDDEN_LAYERS):
        h = ad.relu(_affine(h, params, f"enc.l{i}"))
    mu = _affine(h, params, "enc.mu")
    log_var = _affine(h, params, "enc.logvar")
    logits = _affine(h, params, "enc.y")
    return EncoderOutput(
        z_posterior=DiagGaussian(mu, log_var),
        y_posterior=CategoricalDist(ad.softmax(logits)),
    )


def decode(z: Tensor, y: Tensor, params: ModelParams) -> DecoderLikelihood:
    """Likelihood mean sigmoid(f(concat(z, y))); y is a probability vector."""
    z = _as_matrix(z, params.z_dim, "decode(z)")
    y = _as_matrix(y, params.num_classes, "decode(y)")
    if z.shape[0] != y.shape[0]:
        raise ShapeError(f"decode: batch mismatch {z.shape} vs {y.shape}")
    h = ad.concat(z, y, axis=-1)
    for i in range(N_HIDDEN_LAYERS):
        h = ad.relu(_affine(h, params, f"dec.l{i}"))
    mean = ad.sigmoid(_affine(h, params, "dec.out"))
    return DecoderLikelihood(mean, params.fixed_var)


def recon_log_likelihood(x: Tensor, lik: DecoderLikelihood) -> Tensor:
    """Mean over the batch of -||x - mean||^2 / (2 var).

    The additive Gaussian normalization constant is dropped; with var = 1
    this is minus half the squared reconstruction error.
    """
    x = _as_matrix(x, lik.mean.shape[-1], "recon_log_likelihood")
    if x.shape != lik.mean.shape:
        raise ShapeError(f"recon_log_likelihood: {x.shape} vs {lik.mean.shape}")
    sq = ad.reduce_sum(ad.square(ad.sub(x, lik.mean)), axis=-1)
    return ad.scale(ad.reduce_mean(sq), -0.5 / lik.fixed_var)


def conditional_generate(x: Tensor, target_class: int, params: ModelParams,
                         rng: np.random.Generator, epsilon: float = 1e-3) -> np.ndarray:
    """Style-preserving class swap: z from q(z|x), label forced to target_class.

    Returns the decoded mean as a plain array in (0, 1).
    """
    if not 0 <= target_class < params.num_classes:
        raise IndexError(
            f"conditional_generate: class {target_class} out of range for K={params.num_classes}"
        )
    from .distributions import sample_gaussian_rt  # local import avoids cycle at module load

    x = _as_matrix(x, params.input_dim, "conditional_generate")
    enc = encode(x, params)
    z = sample_gaussian_rt(enc.z_posterior, rng)
    target = smooth_label(target_class, SmoothingParams(epsilon, params.num_classes))
    y = Tensor(np.broadcast_to(target.probs.data, (x.shape[0], params.num_classes)).copy())
    return decode(z, y, params).mean.data.copy()
