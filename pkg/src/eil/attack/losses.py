"""Generator losses for ensemble inversion.

Conventions shared by all terms: the per-model losses sum over ensemble
members (index i) and average over the batch (index j); the single division
by m happens once, in the combined generator loss.  All model outputs here
are pre-softmax activations ("logits"), with softmax applied inside the
cross-entropy terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..config import AttackConfig
from ..errors import ValidationError


def _check_logits_list(logits_per_model: list[torch.Tensor], name: str) -> int:
    if len(logits_per_model) == 0:
        raise ValidationError(f"{name}: empty model list")
    n = logits_per_model[0].shape[0]
    for t in logits_per_model:
        if t.ndim != 2:
            raise ValidationError(f"{name}: expected (batch, classes) tensors, got {tuple(t.shape)}")
        if t.shape[0] != n:
            raise ValidationError(f"{name}: inconsistent batch sizes across models")
        if t.shape[0] == 0:
            raise ValidationError(f"{name}: empty batch")
        if not torch.isfinite(t).all():
            raise ValidationError(f"{name}: non-finite logits")
    return n


def one_hot_loss(logits_per_model: list[torch.Tensor]) -> torch.Tensor:
    """Cross-entropy of each model's output against its own argmax.

    The one-hot target t is a constant: no gradient flows through the argmax,
    so the gradient w.r.t. the logits is exactly softmax(y) - t.  Summed over
    models, averaged over the batch.
    """
    n = _check_logits_list(logits_per_model, "one_hot_loss")
    total = logits_per_model[0].new_zeros(())
    for logits in logits_per_model:
        targets = logits.detach().argmax(dim=1)
        total = total + F.cross_entropy(logits, targets, reduction="sum")
    return total / n


def max_response_loss(activations_per_model: list[torch.Tensor]) -> torch.Tensor:
    """Negative batch-mean of per-sample maximum output activations, summed
    over models.  Minimizing drives outputs toward high-confidence regions."""
    n = _check_logits_list(activations_per_model, "max_response_loss")
    total = activations_per_model[0].new_zeros(())
    for acts in activations_per_model:
        total = total + acts.max(dim=1).values.sum()
    return -total / n


def class_loss(
    logits_per_model: list[torch.Tensor],
    targets: torch.Tensor,
    class_maps: list[dict[int, int]],
) -> torch.Tensor:
    """Cross-entropy toward the intended class, routed through each member's
    class map; summed over models, averaged over the batch."""
    _check_logits_list(logits_per_model, "class_loss")
    if len(class_maps) != len(logits_per_model):
        raise ValidationError(
            f"class_loss: {len(logits_per_model)} models but {len(class_maps)} class maps"
        )
    targets = targets.long().ravel()
    total = logits_per_model[0].new_zeros(())
    for logits, cmap in zip(logits_per_model, class_maps):
        missing = sorted(set(targets.tolist()) - set(cmap.keys()))
        if missing:
            raise ValidationError(f"class_loss: classes {missing} unmapped for a member")
        lut = torch.full((max(cmap.keys()) + 1,), -1, dtype=torch.long)
        for k, v in cmap.items():
            lut[k] = v
        total = total + F.cross_entropy(logits, lut[targets], reduction="mean")
    return total


def adversarial_losses(
    discriminator: torch.nn.Module | None,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating GAN losses on a single real/fake source head.

    Returns (l_adv for the generator, l_d for the discriminator); both use
    logits-based binary cross-entropy for stability.  The discriminator sees
    detached fakes; the generator loss backpropagates through D into G.
    """
    if discriminator is None:
        raise ValidationError("adversarial losses need a discriminator (auxiliary mode only)")
    if real_batch.shape[0] == 0 or fake_batch.shape[0] == 0:
        raise ValidationError("adversarial_losses: empty batch")
    d_real = discriminator(real_batch).ravel()
    d_fake_detached = discriminator(fake_batch.detach()).ravel()
    l_d = F.binary_cross_entropy_with_logits(
        d_real, torch.ones_like(d_real)
    ) + F.binary_cross_entropy_with_logits(
        d_fake_detached, torch.zeros_like(d_fake_detached)
    )
    d_fake = discriminator(fake_batch).ravel()
    l_adv = F.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))
    return l_adv, l_d


@dataclass
class LossBreakdown:
    """Per-step loss components; l_adv and l_d stay 0 in data-free mode."""

    step: int
    l_oh: float
    l_mr: float
    l_class: float
    l_adv: float
    l_g_total: float
    l_d: float = 0.0

    def reconstruct_total(self, config: AttackConfig, m: int) -> float:
        return (
            config.alpha1 * self.l_oh
            + config.alpha2 * self.l_mr
            + config.beta1 * self.l_class
        ) / m + config.beta2 * self.l_adv


def combine_losses(
    l_oh: torch.Tensor,
    l_mr: torch.Tensor,
    l_class: torch.Tensor,
    l_adv: torch.Tensor | float,
    config: AttackConfig,
    m: int,
) -> torch.Tensor:
    """Combined generator loss: per-model terms averaged by m, plus the
    adversarial term outside the ensemble average."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    return (
        config.alpha1 * l_oh + config.alpha2 * l_mr + config.beta1 * l_class
    ) / m + config.beta2 * l_adv
