from .config import LEVELS, VARIANTS, AstnConfig
from .discriminator import (
    ADVERSARIAL_OBJECTIVES,
    discriminate,
    discriminator_features,
    generator_adversarial_loss,
    loss_ja,
    loss_jd,
    pair_features,
)
from .network import (
    RepresentationBatch,
    Representations,
    classify,
    generate,
    gru_batched,
    gru_sequence,
    gru_step,
    intrinsic_encode,
    loss_jc,
    spatial_encode,
)
from .params import PARTITIONS, AstnParams, load_model, parameter_shapes, save_model

__all__ = [
    "ADVERSARIAL_OBJECTIVES", "AstnConfig", "AstnParams", "LEVELS", "PARTITIONS", "RepresentationBatch",
    "Representations", "VARIANTS", "classify", "discriminate", "discriminator_features", "generate",
    "generator_adversarial_loss", "gru_batched", "gru_sequence", "gru_step", "intrinsic_encode", "load_model",
    "loss_ja", "loss_jc", "loss_jd", "pair_features", "parameter_shapes", "save_model", "spatial_encode",
]
