"""Leakage quantification for generated samples.

Attack accuracy comes from an evaluation classifier that never took part in
the attacked ensemble and uses a different architecture.  Feature distance
and kNN distance compare generated samples to real training images in two
penultimate-layer feature spaces: the evaluation classifier's ("eva") and a
classifier trained on unrelated data ("generic"), to rule out metric
artifacts of the evaluator itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .datasets import LabeledImages
from .errors import ValidationError
from .frozen import Ensemble, FrozenModel
from .synthesis import SampleBatch


def check_independent(eval_model: FrozenModel, ensemble: Ensemble | None) -> None:
    if ensemble is None:
        return
    if eval_model.model_id in ensemble.model_ids:
        raise ValidationError(
            f"evaluator {eval_model.model_id} is a member of the attacked ensemble"
        )
    member_archs = {m.arch_id for m in ensemble}
    if eval_model.arch_id in member_archs:
        raise ValidationError(
            f"evaluator arch {eval_model.arch_id!r} matches an attacked-ensemble arch"
        )


def attack_accuracy(
    eval_model: FrozenModel,
    batch: SampleBatch,
    ensemble: Ensemble | None = None,
    num_classes: int | None = None,
    batch_size: int = 512,
) -> tuple[float, list[float]]:
    """Fraction of samples the evaluator assigns to their intended class.

    Returns (overall, per-class accuracies).  Passing the attacked ensemble
    enforces the independence guard.
    """
    check_independent(eval_model, ensemble)
    if len(batch) == 0:
        raise ValidationError("cannot evaluate an empty batch")
    if num_classes is None:
        num_classes = int(batch.labels.max()) + 1
    preds = []
    with torch.no_grad():
        for i in range(0, len(batch), batch_size):
            preds.append(eval_model.logits(batch.images[i : i + batch_size]).argmax(dim=1))
    preds = torch.cat(preds)
    correct = preds == batch.labels
    per_class = []
    for c in range(num_classes):
        mask = batch.labels == c
        if mask.sum() == 0:
            raise ValidationError(f"class {c} absent from the evaluated batch")
        per_class.append(float(correct[mask].float().mean()))
    return float(correct.float().mean()), per_class


def extract_features(model: FrozenModel, images: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    """Penultimate-layer features, one row per image."""
    feats = []
    for i in range(0, len(images), batch_size):
        feats.append(model.features(images[i : i + batch_size]))
    return torch.cat(feats).float()


def features_by_class(
    model: FrozenModel, data: LabeledImages, batch_size: int = 512
) -> dict[int, torch.Tensor]:
    x, y = data.to_tensors()
    feats = extract_features(model, x, batch_size=batch_size)
    return {int(c): feats[y == c] for c in torch.unique(y, sorted=True)}


def feature_distance(
    recon_features: torch.Tensor,
    class_label: int,
    training_features_by_class: dict[int, torch.Tensor],
) -> float:
    """Mean L2 from reconstructed features to the same-class training centroid."""
    if class_label not in training_features_by_class:
        raise ValidationError(f"no training features for class {class_label}")
    if len(recon_features) == 0:
        raise ValidationError("no reconstructed features given")
    centroid = training_features_by_class[class_label].mean(dim=0)
    return float(torch.linalg.norm(recon_features - centroid, dim=1).mean())


def knn_distance(
    recon_features: torch.Tensor,
    class_label: int,
    training_features_by_class: dict[int, torch.Tensor],
) -> float:
    """Mean L2 from each reconstructed feature to its nearest same-class
    training feature."""
    if class_label not in training_features_by_class:
        raise ValidationError(f"no training features for class {class_label}")
    if len(recon_features) == 0:
        raise ValidationError("no reconstructed features given")
    train = training_features_by_class[class_label]
    dists = torch.cdist(recon_features, train)
    return float(dists.min(dim=1).values.mean())


def _class_mean_distance(
    metric,
    feats: torch.Tensor,
    labels: torch.Tensor,
    by_class: dict[int, torch.Tensor],
) -> float:
    # per-sample distances averaged within each class, then equal-weight
    # across classes, matching the balanced evaluation protocol
    values = []
    for c in torch.unique(labels, sorted=True):
        values.append(metric(feats[labels == c], int(c), by_class))
    return float(torch.tensor(values).mean())


@dataclass
class EvaluationReport:
    """All leakage metrics for one generated batch."""

    attack_accuracy_overall: float
    attack_accuracy_per_class: list[float]
    feature_distance_eva: float
    knn_distance_eva: float
    feature_distance_generic: float
    knn_distance_generic: float
    sample_count: int
    evaluator_hashes: dict

    def to_metrics(self) -> dict:
        return {
            "attack_accuracy": {
                "overall": self.attack_accuracy_overall,
                "per_class": list(self.attack_accuracy_per_class),
            },
            "feature_distance": {
                "eva": self.feature_distance_eva,
                "generic": self.feature_distance_generic,
            },
            "knn_distance": {
                "eva": self.knn_distance_eva,
                "generic": self.knn_distance_generic,
            },
        }

    @classmethod
    def from_metrics(cls, metrics: dict, sample_count: int = 0, evaluator_hashes: dict | None = None):
        return cls(
            attack_accuracy_overall=metrics["attack_accuracy"]["overall"],
            attack_accuracy_per_class=list(metrics["attack_accuracy"]["per_class"]),
            feature_distance_eva=metrics["feature_distance"]["eva"],
            knn_distance_eva=metrics["knn_distance"]["eva"],
            feature_distance_generic=metrics["feature_distance"]["generic"],
            knn_distance_generic=metrics["knn_distance"]["generic"],
            sample_count=sample_count,
            evaluator_hashes=evaluator_hashes or {},
        )


def build_report(
    batch: SampleBatch,
    eval_model: FrozenModel,
    generic_model: FrozenModel,
    training_set: LabeledImages,
    ensemble: Ensemble | None = None,
    num_classes: int | None = None,
) -> EvaluationReport:
    """Attack accuracy plus both distance metrics in both feature spaces."""
    overall, per_class = attack_accuracy(
        eval_model, batch, ensemble=ensemble, num_classes=num_classes
    )
    eva_train = features_by_class(eval_model, training_set)
    gen_train = features_by_class(generic_model, training_set)
    eva_feats = extract_features(eval_model, batch.images)
    gen_feats = extract_features(generic_model, batch.images)
    labels = batch.labels
    return EvaluationReport(
        attack_accuracy_overall=overall,
        attack_accuracy_per_class=per_class,
        feature_distance_eva=_class_mean_distance(feature_distance, eva_feats, labels, eva_train),
        knn_distance_eva=_class_mean_distance(knn_distance, eva_feats, labels, eva_train),
        feature_distance_generic=_class_mean_distance(feature_distance, gen_feats, labels, gen_train),
        knn_distance_generic=_class_mean_distance(knn_distance, gen_feats, labels, gen_train),
        sample_count=len(batch),
        evaluator_hashes={
            "eva": eval_model.weight_sha256,
            "generic": generic_model.weight_sha256,
        },
    )
