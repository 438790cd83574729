"""Sample generation from trained generators, and activation-based filtering.

Filtering is the attack's automatic curation step: oversample, score every
image by the ensemble's maximum output activations, and keep only the most
confidently classified fraction, per class to preserve balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ValidationError
from .frozen import Ensemble, weight_hash
from .validation import check_fraction

SCORE_COMBINERS = ("mean", "min")


@dataclass
class SampleBatch:
    """Generated images with intended labels and optional per-MUA scores."""

    images: torch.Tensor  # (N, 1, H, W) in [-1, 1]
    labels: torch.Tensor  # (N,) canonical class indices
    scores: torch.Tensor | None = None  # (N, m) max activations, filled by scoring
    generator_hash: str = ""

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValidationError(f"images must be 4-D, got {tuple(self.images.shape)}")
        if self.labels.ndim != 1 or len(self.labels) != len(self.images):
            raise ValidationError("labels must be 1-D and match image count")
        if self.scores is not None and (
            self.scores.ndim != 2 or len(self.scores) != len(self.images)
        ):
            raise ValidationError("scores must be (N, m)")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices: torch.Tensor) -> "SampleBatch":
        return SampleBatch(
            images=self.images[indices],
            labels=self.labels[indices],
            scores=None if self.scores is None else self.scores[indices],
            generator_hash=self.generator_hash,
        )

    def to_payload(self) -> dict:
        return {
            "images": self.images,
            "labels": self.labels,
            "scores": self.scores,
            "generator_hash": self.generator_hash,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SampleBatch":
        return cls(
            images=payload["images"],
            labels=payload["labels"],
            scores=payload["scores"],
            generator_hash=payload["generator_hash"],
        )


def generate(
    generator: torch.nn.Module,
    classes: list[int],
    per_class: int,
    seed: int,
    batch_size: int = 256,
) -> SampleBatch:
    """Draw exactly ``per_class`` samples for each listed class, deterministically."""
    if per_class < 0:
        raise ValidationError(f"per_class must be >= 0, got {per_class}")
    num_classes = getattr(generator, "num_classes", None)
    if num_classes is not None and any(not 0 <= c < num_classes for c in classes):
        raise ValidationError(
            f"classes {sorted(classes)} outside generator range [0, {num_classes})"
        )
    if len(set(classes)) != len(classes):
        raise ValidationError("duplicate classes requested")
    latent_dim = generator.latent_dim
    gen = torch.Generator().manual_seed(seed)
    generator.eval()
    images, labels = [], []
    with torch.no_grad():
        for c in classes:
            done = 0
            while done < per_class:
                count = min(batch_size, per_class - done)
                z = torch.randn(count, latent_dim, generator=gen)
                y = torch.full((count,), int(c), dtype=torch.long)
                images.append(generator(z, y))
                labels.append(y)
                done += count
    if not images:
        h, w = 28, 28
        return SampleBatch(
            images=torch.empty(0, 1, h, w),
            labels=torch.empty(0, dtype=torch.long),
            generator_hash=weight_hash(generator),
        )
    return SampleBatch(
        images=torch.cat(images),
        labels=torch.cat(labels),
        generator_hash=weight_hash(generator),
    )


def score_samples(batch: SampleBatch, ensemble: Ensemble, batch_size: int = 512) -> SampleBatch:
    """Attach per-MUA maximum pre-softmax activations to every sample."""
    if len(batch) == 0:
        raise ValidationError("cannot score an empty batch")
    cols = []
    with torch.no_grad():
        for member in ensemble:
            maxes = []
            for i in range(0, len(batch), batch_size):
                logits = member.logits(batch.images[i : i + batch_size])
                maxes.append(logits.max(dim=1).values)
            cols.append(torch.cat(maxes))
    return SampleBatch(
        images=batch.images,
        labels=batch.labels,
        scores=torch.stack(cols, dim=1).float(),
        generator_hash=batch.generator_hash,
    )


def aggregate_scores(scores: torch.Tensor, combine: str = "mean") -> torch.Tensor:
    if combine not in SCORE_COMBINERS:
        raise ValidationError(f"combine must be one of {SCORE_COMBINERS}, got {combine!r}")
    return scores.mean(dim=1) if combine == "mean" else scores.min(dim=1).values


def filter_top(batch: SampleBatch, keep_fraction: float, combine: str = "mean") -> SampleBatch:
    """Keep the top fraction of samples by aggregate score, per class.

    Each class keeps ceil(keep_fraction * n_c) samples, ordered by score
    descending (ties by original position), so balanced batches stay balanced.
    """
    check_fraction(keep_fraction, "keep_fraction")
    if batch.scores is None:
        raise ValidationError("batch is unscored; run score_samples first")
    agg = aggregate_scores(batch.scores, combine=combine)
    kept = []
    for c in torch.unique(batch.labels, sorted=True):
        idx = torch.nonzero(batch.labels == c).ravel()
        n_keep = math.ceil(keep_fraction * len(idx))
        order = torch.argsort(agg[idx], descending=True, stable=True)
        kept.append(idx[order[:n_keep]])
    return batch.subset(torch.cat(kept))
