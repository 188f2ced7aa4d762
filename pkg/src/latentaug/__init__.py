"""Latent-direction discovery and synthetic augmentation toolkit.

A desk-scale pipeline around a style-based GAN: adversarial training,
closed-form factorization of the style-modulation weights into semantic
edit directions, encoder+hypernetwork inversion of real images, perceptual
metrics (Frechet distance over feature embeddings, LPIPS-style pair
distance), filtered synthetic augmentation, and classifier ablation.
"""

__version__ = "0.1.0"
