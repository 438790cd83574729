"""Input validation helpers shared by the estimator-style APIs."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ValidationError


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value <= 0:
        raise ValidationError(f"{name} must be a positive int, got {value!r}")
    return int(value)


def check_fraction(value, name: str, *, include_zero: bool = False) -> float:
    value = float(value)
    low_ok = value >= 0.0 if include_zero else value > 0.0
    if not low_ok or value > 1.0 or not np.isfinite(value):
        bound = "[0, 1]" if include_zero else "(0, 1]"
        raise ValidationError(f"{name} must lie in {bound}, got {value!r}")
    return value


def check_weight(value, name: str) -> float:
    """Loss weights must be finite and nonnegative."""
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def check_image_batch(images, name: str = "images") -> torch.Tensor:
    """Validate a float image batch of shape (N, C, H, W) in [-1, 1]."""
    if isinstance(images, np.ndarray):
        images = torch.from_numpy(images)
    if not isinstance(images, torch.Tensor):
        raise ValidationError(f"{name} must be a torch tensor or numpy array")
    if images.ndim != 4:
        raise ValidationError(f"{name} must have shape (N, C, H, W), got {tuple(images.shape)}")
    if images.numel() == 0:
        raise ValidationError(f"{name} is empty")
    if not images.dtype.is_floating_point:
        raise ValidationError(f"{name} must be floating point, got {images.dtype}")
    return images.float()


def check_labels(labels, n: int, name: str = "labels") -> torch.Tensor:
    if isinstance(labels, np.ndarray):
        labels = torch.from_numpy(labels)
    if not isinstance(labels, torch.Tensor) or labels.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D tensor")
    if len(labels) != n:
        raise ValidationError(f"{name} has length {len(labels)}, expected {n}")
    return labels.long()


def check_matching_probe(a, b) -> None:
    if a.probe_hash != b.probe_hash:
        raise ValidationError(
            "embeddings come from different probe sets "
            f"({a.probe_hash[:12]} vs {b.probe_hash[:12]}) and are not comparable"
        )
