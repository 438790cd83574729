from .engine import EnsembleInversionAttack, read_loss_trace, run_attack, write_loss_trace
from .losses import (
    LossBreakdown,
    adversarial_losses,
    class_loss,
    combine_losses,
    max_response_loss,
    one_hot_loss,
)
from .nets import ConditionalGenerator, Discriminator, make_discriminator, make_generator

__all__ = [
    "EnsembleInversionAttack",
    "run_attack",
    "write_loss_trace",
    "read_loss_trace",
    "LossBreakdown",
    "one_hot_loss",
    "max_response_loss",
    "class_loss",
    "adversarial_losses",
    "combine_losses",
    "ConditionalGenerator",
    "Discriminator",
    "make_generator",
    "make_discriminator",
]
