from .models import (
    Encoder,
    Hypernet,
    default_hypernet_layers,
    load_encoder,
    load_hypernet,
    save_model,
)
from .invert import (
    InversionDivergedError,
    InversionError,
    InversionResult,
    invert,
    optimize_latent,
    synthesize_inversion,
)
from .train import (
    InversionTrainHParams,
    InversionTrainingError,
    train_encoder,
    train_hypernet,
)

__all__ = [
    "Encoder",
    "Hypernet",
    "default_hypernet_layers",
    "save_model",
    "load_encoder",
    "load_hypernet",
    "InversionResult",
    "InversionError",
    "InversionDivergedError",
    "invert",
    "optimize_latent",
    "synthesize_inversion",
    "InversionTrainHParams",
    "InversionTrainingError",
    "train_encoder",
    "train_hypernet",
]
