"""Frozen classifier wrappers and ensembles of them.

A FrozenModel is the unit being attacked: a trained classifier whose weights
are fixed and content-hashed.  Gradients still flow through its forward pass
to the *input*, which is what generator training needs.  An Ensemble bundles
several frozen models with the class maps that translate a canonical shared
class index into each member's own output index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ArtifactCorruptionError, ValidationError
from .validation import check_image_batch, check_positive_int


def weight_hash(module: nn.Module) -> str:
    """Content hash of a module's parameters and buffers, order-independent."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        t = tensor.detach().cpu().contiguous()
        h.update(str(t.dtype).encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


@dataclass
class FrozenModel:
    """An immutable trained classifier with provenance metadata."""

    model_id: str
    arch_id: str
    num_classes: int
    module: nn.Module
    provenance: dict = field(default_factory=dict)
    weight_sha256: str = ""

    def __post_init__(self):
        check_positive_int(self.num_classes, "num_classes")
        self.module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        computed = weight_hash(self.module)
        if not self.weight_sha256:
            self.weight_sha256 = computed
        elif self.weight_sha256 != computed:
            raise ArtifactCorruptionError(self.model_id, self.weight_sha256, computed)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        """Pre-softmax activations; differentiable w.r.t. ``x``."""
        x = check_image_batch(x, "x")
        out = self.module(x)
        if out.shape[1] != self.num_classes:
            raise ValidationError(
                f"{self.model_id}: output width {out.shape[1]} != num_classes {self.num_classes}"
            )
        return out

    def proba(self, x: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return F.softmax(self.logits(x), dim=1)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate-layer activations, for feature-space distance metrics."""
        x = check_image_batch(x, "x")
        with torch.no_grad():
            out = self.module(x, return_features=True)
        if not (isinstance(out, tuple) and len(out) == 2):
            raise ValidationError(
                f"{self.model_id} ({self.arch_id}) exposes no feature tap"
            )
        return out[1]

    def verify_unchanged(self) -> None:
        current = weight_hash(self.module)
        if current != self.weight_sha256:
            raise ArtifactCorruptionError(self.model_id, self.weight_sha256, current)


class Ensemble:
    """Ordered frozen models plus canonical-to-member class index maps."""

    def __init__(
        self,
        members: list[FrozenModel],
        class_maps: list[dict[int, int]],
        shared_class_count: int,
    ):
        if len(members) < 1:
            raise ValidationError("ensemble needs at least one member")
        if len(class_maps) != len(members):
            raise ValidationError(
                f"{len(members)} members but {len(class_maps)} class maps"
            )
        check_positive_int(shared_class_count, "shared_class_count")
        if shared_class_count > min(m.num_classes for m in members):
            raise ValidationError(
                "shared_class_count exceeds the smallest member output width"
            )
        canonical = set(range(shared_class_count))
        for member, cmap in zip(members, class_maps):
            if set(cmap.keys()) != canonical:
                raise ValidationError(
                    f"class map for {member.model_id} must cover canonical classes "
                    f"0..{shared_class_count - 1}, got keys {sorted(cmap)}"
                )
            values = list(cmap.values())
            if len(set(values)) != len(values):
                raise ValidationError(f"class map for {member.model_id} is not injective")
            if any(not (0 <= v < member.num_classes) for v in values):
                raise ValidationError(
                    f"class map for {member.model_id} targets out-of-range outputs"
                )
        self.members = list(members)
        self.class_maps = [dict(cm) for cm in class_maps]
        self.shared_class_count = shared_class_count

    @classmethod
    def aligned(cls, members: list[FrozenModel]) -> "Ensemble":
        """All members already share one output space; identity class maps."""
        if not members:
            raise ValidationError("ensemble needs at least one member")
        widths = {m.num_classes for m in members}
        if len(widths) != 1:
            raise ValidationError(
                f"aligned ensemble requires equal num_classes, got {sorted(widths)}"
            )
        c = members[0].num_classes
        identity = {i: i for i in range(c)}
        return cls(members, [dict(identity) for _ in members], c)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.members]

    def map_targets(self, member_index: int, canonical: torch.Tensor) -> torch.Tensor:
        """Translate canonical class labels into member-local output indices."""
        cmap = self.class_maps[member_index]
        lut = torch.empty(self.shared_class_count, dtype=torch.long)
        for k, v in cmap.items():
            lut[k] = v
        if canonical.min() < 0 or canonical.max() >= self.shared_class_count:
            raise ValidationError(
                f"canonical labels out of range [0, {self.shared_class_count})"
            )
        return lut[canonical]

    def verify_unchanged(self) -> None:
        for m in self.members:
            m.verify_unchanged()
