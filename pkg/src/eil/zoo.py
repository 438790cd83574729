"""Model zoo construction: data partitioning and classifier training.

Three diversity sources produce the models under attack: disjoint splits of
one corpus, independently drawn bootstrap subsets, and epoch snapshots of a
single training run.  Training is deliberately plain supervised learning;
everything downstream treats the resulting models as opaque frozen artifacts.
"""

from __future__ import annotations

import copy
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch
import torch.nn.functional as F

from .architectures import make_model
from .config import PartitionPlan
from .datasets import LabeledImages
from .errors import ValidationError
from .frozen import FrozenModel
from .seeding import RngContext

DEFAULT_ACCURACY_FLOOR = 0.97

_init_lock = threading.Lock()


def build_partitions(dataset: LabeledImages, plan: PartitionPlan) -> list[LabeledImages]:
    """Carve a corpus into per-model training views according to the plan."""
    plan.validate()
    n = len(dataset)
    if n == 0:
        raise ValidationError("dataset is empty")
    rng = np.random.default_rng(plan.shuffle_seed)
    order = rng.permutation(n)

    if plan.strategy == "disjoint_split":
        size = plan.samples_per_model or n // plan.num_models
        if size == 0 or size * plan.num_models > n:
            raise ValidationError(
                f"cannot cut {plan.num_models} disjoint views of {size} from {n} samples"
            )
        return [
            dataset.subset(order[i * size : (i + 1) * size], name=f"disjoint-{i}")
            for i in range(plan.num_models)
        ]

    if plan.strategy == "bootstrap":
        if plan.samples_per_model is None:
            raise ValidationError("bootstrap requires samples_per_model")
        if plan.samples_per_model > n:
            raise ValidationError(
                f"samples_per_model {plan.samples_per_model} > dataset size {n}"
            )
        views = []
        for i in range(plan.num_models):
            idx = rng.choice(n, size=plan.samples_per_model, replace=False)
            views.append(dataset.subset(idx, name=f"bootstrap-{i}"))
        return views

    # snapshots: every "model" is a checkpoint of one run on one shared view
    size = plan.samples_per_model or n
    if size > n:
        raise ValidationError(f"samples_per_model {size} > dataset size {n}")
    view = dataset.subset(order[:size], name="snapshots-0")
    return [view] * plan.num_models


def evaluate_accuracy(module: torch.nn.Module, data: LabeledImages, batch_size: int = 256) -> float:
    x, y = data.to_tensors()
    module.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            pred = module(x[i : i + batch_size]).argmax(dim=1)
            correct += (pred == y[i : i + batch_size]).sum().item()
    return correct / len(x)


def _train_loop(
    view: LabeledImages,
    arch_id: str,
    total_epochs: int,
    seed: int,
    capture: set[int],
    num_classes: int,
    lr: float,
    batch_size: int,
) -> dict[int, dict]:
    """One continuous training run; returns state-dict copies at the captured epochs."""
    ctx = RngContext(seed)
    with _init_lock:
        module = make_model(arch_id, num_classes, seed=ctx.derive("init"))
    opt = torch.optim.Adam(module.parameters(), lr=lr)
    x, y = view.to_tensors()
    n = len(x)
    shuffle_gen = ctx.torch_gen("shuffle")
    snapshots: dict[int, dict] = {}
    module.train()
    for epoch in range(1, total_epochs + 1):
        order = torch.randperm(n, generator=shuffle_gen)
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(module(x[idx]), y[idx])
            loss.backward()
            opt.step()
        if epoch in capture:
            module.eval()
            snapshots[epoch] = copy.deepcopy(module.state_dict())
            module.train()
    return snapshots


def train_classifier(
    view: LabeledImages,
    arch_id: str,
    epochs: int,
    seed: int,
    num_classes: int | None = None,
    holdout: LabeledImages | None = None,
    accuracy_floor: float = DEFAULT_ACCURACY_FLOOR,
    lr: float = 1e-3,
    batch_size: int = 64,
    model_id: str | None = None,
) -> FrozenModel:
    """Train one classifier on a view and freeze it.

    A sub-floor held-out accuracy is recorded (and warned about), not fatal:
    early epoch snapshots are legitimately weak models.
    """
    if len(view) == 0:
        raise ValidationError("training view is empty")
    if not isinstance(epochs, int) or epochs <= 0:
        raise ValidationError(f"epochs must be a positive int, got {epochs!r}")
    if num_classes is None:
        num_classes = view.num_classes
    if holdout is None:
        # Carve a fixed tail tenth for the accuracy check.
        cut = max(1, len(view) // 10)
        holdout = view.subset(np.arange(len(view) - cut, len(view)), name="holdout")
        view = view.subset(np.arange(len(view) - cut), name=view.name)

    states = _train_loop(
        view, arch_id, epochs, seed, {epochs}, num_classes, lr, batch_size
    )
    module = make_model(arch_id, num_classes)
    module.load_state_dict(states[epochs])
    module.eval()

    acc = evaluate_accuracy(module, holdout)
    provenance = {
        "partition_id": view.name,
        "epoch": epochs,
        "seed": seed,
        "holdout_accuracy": round(acc, 6),
    }
    if acc < accuracy_floor:
        provenance["below_accuracy_floor"] = True
        warnings.warn(
            f"{view.name}/{arch_id}: held-out accuracy {acc:.4f} below floor {accuracy_floor}"
        )
    return FrozenModel(
        model_id=model_id or f"{view.name}-{arch_id}-s{seed}",
        arch_id=arch_id,
        num_classes=num_classes,
        module=module,
        provenance=provenance,
    )


def snapshot_train(
    view: LabeledImages,
    arch_id: str,
    snapshot_epochs: list[int],
    seed: int,
    num_classes: int | None = None,
    holdout: LabeledImages | None = None,
    accuracy_floor: float = DEFAULT_ACCURACY_FLOOR,
    lr: float = 1e-3,
    batch_size: int = 64,
    model_id_prefix: str | None = None,
) -> list[FrozenModel]:
    """Capture several checkpoints of a single continuous training run."""
    if not snapshot_epochs:
        raise ValidationError("snapshot_epochs is empty")
    epochs = [int(e) for e in snapshot_epochs]
    if list(epochs) != sorted(set(epochs)) or epochs[0] <= 0:
        raise ValidationError(f"snapshot epochs must be strictly increasing positive ints: {epochs}")
    if len(view) == 0:
        raise ValidationError("training view is empty")
    if num_classes is None:
        num_classes = view.num_classes
    if holdout is None:
        cut = max(1, len(view) // 10)
        holdout = view.subset(np.arange(len(view) - cut, len(view)), name="holdout")
        view = view.subset(np.arange(len(view) - cut), name=view.name)

    states = _train_loop(
        view, arch_id, epochs[-1], seed, set(epochs), num_classes, lr, batch_size
    )
    prefix = model_id_prefix or f"{view.name}-{arch_id}-s{seed}"
    models = []
    for e in epochs:
        module = make_model(arch_id, num_classes)
        module.load_state_dict(states[e])
        module.eval()
        acc = evaluate_accuracy(module, holdout)
        provenance = {
            "partition_id": view.name,
            "epoch": e,
            "seed": seed,
            "holdout_accuracy": round(acc, 6),
        }
        if acc < accuracy_floor:
            provenance["below_accuracy_floor"] = True
        models.append(
            FrozenModel(
                model_id=f"{prefix}-ep{e}",
                arch_id=arch_id,
                num_classes=num_classes,
                module=module,
                provenance=provenance,
            )
        )
    return models


def train_zoo(
    views: list[LabeledImages],
    arch_id: str,
    epochs: int,
    seed: int,
    jobs: int = 1,
    **kwargs,
) -> list[FrozenModel]:
    """Train one classifier per view, optionally with a parallel-jobs limit.

    Per-model seeds are derived from the base seed by index, so results do
    not depend on scheduling order or the jobs setting.
    """
    ctx = RngContext(seed)
    seeds = [ctx.derive(f"model-{i}") for i in range(len(views))]

    def job(i: int) -> FrozenModel:
        return train_classifier(views[i], arch_id, epochs, seeds[i], **kwargs)

    if jobs <= 1:
        return [job(i) for i in range(len(views))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(job, range(len(views))))
