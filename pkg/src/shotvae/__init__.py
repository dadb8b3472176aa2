"""Semi-supervised VAE with a smoothed labeled bound and an
interpolation-consistency regularizer, plus the numerical verification
suite for the identities and bounds the training objective relies on.
"""

from .autodiff import Tensor, backward, zero_grad
from .config import TrainConfig
from .estimator import ShotVAEClassifier

__all__ = ["Tensor", "backward", "zero_grad", "TrainConfig", "ShotVAEClassifier"]

__version__ = "0.1.0"
