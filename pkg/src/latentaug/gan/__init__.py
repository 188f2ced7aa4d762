from .latent import LatentCode, LatentSpaceError
from .networks import Discriminator, Generator, GeneratorConfig
from .checkpoint import GanCheckpoint
from .ops import map_latent, sample_grid, synthesize
from .train import (
    GanTrainHParams,
    GanTrainingError,
    discriminator_loss,
    generator_loss,
    init_gan,
    r1_penalty,
    train_gan,
)

__all__ = [
    "LatentCode",
    "LatentSpaceError",
    "Generator",
    "Discriminator",
    "GeneratorConfig",
    "GanCheckpoint",
    "map_latent",
    "synthesize",
    "sample_grid",
    "GanTrainHParams",
    "GanTrainingError",
    "train_gan",
    "init_gan",
    "generator_loss",
    "discriminator_loss",
    "r1_penalty",
]
