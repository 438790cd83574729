"""Configuration dataclasses for attacks and model-zoo partitioning."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ValidationError
from .validation import check_fraction, check_positive_int, check_weight

ATTACK_MODES = ("data_free", "auxiliary")
PARTITION_STRATEGIES = ("disjoint_split", "bootstrap", "snapshots")


@dataclass
class AttackConfig:
    """Hyperparameters for one generator-inversion run.

    ``alpha1``/``alpha2`` weight the agreement and response-magnitude terms,
    ``beta1`` the class-conditioning term, ``beta2`` the adversarial term.
    In ``data_free`` mode there is no discriminator, so ``beta2`` must be 0.
    """

    alpha1: float = 200.0
    alpha2: float = 1e-4
    beta1: float = 1.0
    beta2: float = 0.0
    mode: str = "data_free"
    latent_dim: int = 100
    batch_size: int = 64
    steps: int = 2000
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    target_classes: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "AttackConfig":
        if self.mode not in ATTACK_MODES:
            raise ValidationError(f"mode must be one of {ATTACK_MODES}, got {self.mode!r}")
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            check_weight(getattr(self, name), name)
        if self.mode == "data_free" and self.beta2 != 0:
            raise ValidationError(
                f"data_free mode has no discriminator, so beta2 must be 0 (got {self.beta2})"
            )
        check_positive_int(self.latent_dim, "latent_dim")
        check_positive_int(self.batch_size, "batch_size")
        if not isinstance(self.steps, int) or self.steps < 0:
            raise ValidationError(f"steps must be a non-negative int, got {self.steps!r}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.target_classes is not None:
            self.target_classes = tuple(int(c) for c in self.target_classes)
            if len(self.target_classes) == 0:
                raise ValidationError("target_classes must be None or non-empty")
            if any(c < 0 for c in self.target_classes):
                raise ValidationError(f"target_classes must be non-negative: {self.target_classes}")
            if len(set(self.target_classes)) != len(self.target_classes):
                raise ValidationError(f"target_classes has duplicates: {self.target_classes}")
        return self

    def replace(self, **kw) -> "AttackConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["target_classes"] = list(self.target_classes) if self.target_classes else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        if d.get("target_classes") is not None:
            d["target_classes"] = tuple(d["target_classes"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown AttackConfig fields: {sorted(unknown)}")
        return cls(**d)


# Named hyperparameter presets.  The digit presets follow the grayscale-digit
# regime (strong agreement term, tiny magnitude term); the face presets follow
# the photographic regime where the adversarial term carries real weight.
ATTACK_PRESETS: dict[str, AttackConfig] = {
    "digits-datafree": AttackConfig(alpha1=200.0, alpha2=1e-4, beta1=1.0, beta2=0.0, mode="data_free"),
    "digits-auxiliary": AttackConfig(alpha1=200.0, alpha2=1e-4, beta1=1.0, beta2=1.0, mode="auxiliary"),
    "face-balanced": AttackConfig(alpha1=200.0, alpha2=0.005, beta1=0.5, beta2=0.5, mode="auxiliary"),
    "face-sharp": AttackConfig(alpha1=500.0, alpha2=0.01, beta1=0.9, beta2=0.1, mode="auxiliary"),
}


def get_preset(name: str) -> AttackConfig:
    if name not in ATTACK_PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; known: {', '.join(sorted(ATTACK_PRESETS))}"
        )
    return dataclasses.replace(ATTACK_PRESETS[name])


@dataclass
class PartitionPlan:
    """How a source corpus is carved into per-model training views.

    ``disjoint_split`` gives non-overlapping views, ``bootstrap`` draws each
    view independently without replacement (views may overlap each other),
    and ``snapshots`` trains one model and captures it at several epochs, so
    ``samples_per_model`` covers the whole (single) view.
    """

    strategy: str = "disjoint_split"
    num_models: int = 4
    samples_per_model: int | None = None
    snapshot_epochs: tuple[int, ...] = ()
    shuffle_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "PartitionPlan":
        if self.strategy not in PARTITION_STRATEGIES:
            raise ValidationError(
                f"strategy must be one of {PARTITION_STRATEGIES}, got {self.strategy!r}"
            )
        check_positive_int(self.num_models, "num_models")
        if self.samples_per_model is not None:
            check_positive_int(self.samples_per_model, "samples_per_model")
        if self.strategy == "snapshots":
            self.snapshot_epochs = tuple(int(e) for e in self.snapshot_epochs)
            if len(self.snapshot_epochs) != self.num_models:
                raise ValidationError(
                    f"snapshots needs one epoch per model: {self.num_models} models "
                    f"but epochs {self.snapshot_epochs}"
                )
            if any(e <= 0 for e in self.snapshot_epochs):
                raise ValidationError(f"snapshot epochs must be positive: {self.snapshot_epochs}")
            if list(self.snapshot_epochs) != sorted(set(self.snapshot_epochs)):
                raise ValidationError(
                    f"snapshot epochs must be strictly increasing: {self.snapshot_epochs}"
                )
        elif self.snapshot_epochs:
            raise ValidationError(f"snapshot_epochs only applies to snapshots strategy")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snapshot_epochs"] = list(self.snapshot_epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionPlan":
        d = dict(d)
        if "snapshot_epochs" in d:
            d["snapshot_epochs"] = tuple(d["snapshot_epochs"])
        return cls(**d)
