"""cartoonforge: identity/pose-conditioned face cartoonisation toolkit.

A trainable MLP maps concatenated pose and identity embeddings into the
512-d latent space of a frozen pretrained face generator whose output is then
cartoonised by a frozen image-to-image network. The package ships the loss
suite, dataset synthesis, trainer, evaluation protocols, and a deterministic
toy backend for weight-free testing.
"""

from .core import LossWeights, to_unit_range, from_unit_range, validate_image

__all__ = ["LossWeights", "to_unit_range", "from_unit_range", "validate_image"]
__version__ = "0.1.0"
