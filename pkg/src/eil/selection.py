"""Diverse-ensemble selection via farthest point sampling over model embeddings.

Each candidate model is represented by its concatenated prediction vectors on
one fixed probe set of random noise images.  Farthest Model Sampling greedily
picks models that maximize the minimum pairwise L2 distance in that space;
random sampling is the baseline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ValidationError
from .frozen import FrozenModel
from .validation import check_matching_probe, check_positive_int

from sklearn.base import BaseEstimator

DEFAULT_PROBE_SIZE = 10_000


@dataclass
class ProbeSet:
    """A fixed batch of uniform-noise probe images in the model input range."""

    inputs: torch.Tensor  # (N, 1, H, W) in [-1, 1]
    seed: int
    content_hash: str = ""

    def __post_init__(self):
        if self.inputs.ndim != 4:
            raise ValidationError(f"probe inputs must be 4-D, got {tuple(self.inputs.shape)}")
        if not self.content_hash:
            h = hashlib.sha256()
            h.update(str(tuple(self.inputs.shape)).encode())
            h.update(self.inputs.numpy().tobytes())
            self.content_hash = h.hexdigest()

    def __len__(self) -> int:
        return self.inputs.shape[0]


def make_probe_set(
    seed: int, size: int = DEFAULT_PROBE_SIZE, image_shape: tuple = (1, 28, 28)
) -> ProbeSet:
    check_positive_int(size, "size")
    gen = torch.Generator().manual_seed(seed)
    inputs = torch.rand((size, *image_shape), generator=gen) * 2.0 - 1.0
    return ProbeSet(inputs=inputs, seed=seed)


@dataclass
class ModelEmbedding:
    """Flattened prediction matrix of one model over one probe set."""

    model_id: str
    vector: np.ndarray  # (|probe| * num_classes,) float32
    probe_hash: str

    def __post_init__(self):
        self.vector = np.ascontiguousarray(self.vector, dtype=np.float32).ravel()


def embed_model(
    model: FrozenModel, probe: ProbeSet, use_logits: bool = False, batch_size: int = 512
) -> ModelEmbedding:
    """Predict on the probe set and flatten; probabilities by default."""
    outs = []
    with torch.no_grad():
        for i in range(0, len(probe), batch_size):
            logits = model.logits(probe.inputs[i : i + batch_size])
            outs.append(logits if use_logits else F.softmax(logits, dim=1))
    matrix = torch.cat(outs).float()
    if not use_logits:
        sums = matrix.sum(dim=1)
        if not torch.allclose(sums, torch.ones_like(sums), atol=1e-5):
            raise ValidationError(f"{model.model_id}: prediction rows do not sum to 1")
    return ModelEmbedding(
        model_id=model.model_id,
        vector=matrix.numpy().ravel(),
        probe_hash=probe.content_hash,
    )


def model_distance(a: ModelEmbedding, b: ModelEmbedding) -> float:
    check_matching_probe(a.probe_hash, b.probe_hash)
    if a.vector.shape != b.vector.shape:
        raise ValidationError(
            f"embedding lengths differ: {a.vector.shape[0]} vs {b.vector.shape[0]}"
        )
    return float(np.linalg.norm(a.vector.astype(np.float64) - b.vector.astype(np.float64)))


def _distance_matrix(embeddings: list[ModelEmbedding]) -> np.ndarray:
    vecs = np.stack([e.vector for e in embeddings]).astype(np.float64)
    sq = np.sum(vecs**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (vecs @ vecs.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.clip(d2, 0.0, None))


def _check_candidates(candidates: list[ModelEmbedding]) -> None:
    if not candidates:
        raise ValidationError("no candidate embeddings")
    for e in candidates[1:]:
        check_matching_probe(candidates[0].probe_hash, e.probe_hash)
    ids = [e.model_id for e in candidates]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate model_ids among candidates")


def fms_select(
    candidates: list[ModelEmbedding],
    k: int,
    start: str | None = None,
    start_rule: str = "centroid_farthest",
) -> list[str]:
    """Greedy farthest point sampling over model embeddings.

    The first pick is ``start`` if given, else the candidate farthest from
    the embedding centroid (``start_rule='first'`` forces index 0, which
    keeps comparisons against plain FPS oracles simple).  Every later pick
    maximizes the minimum distance to the already-picked set.  Ties break
    toward the lexicographically smallest model_id.
    """
    _check_candidates(candidates)
    if not 1 <= k <= len(candidates):
        raise ValidationError(f"k must be in [1, {len(candidates)}], got {k}")
    if start_rule not in ("centroid_farthest", "first"):
        raise ValidationError(f"unknown start_rule {start_rule!r}")

    ids = [e.model_id for e in candidates]
    dist = _distance_matrix(candidates)

    def argmax_tiebreak(scores: np.ndarray, pool: list[int]) -> int:
        # highest score wins; exact ties go to the smallest model_id
        return min(pool, key=lambda i: (-scores[i], ids[i]))

    if start is not None:
        if start not in ids:
            raise ValidationError(f"start model {start!r} not among candidates")
        first = ids.index(start)
    elif start_rule == "first":
        first = 0
    else:
        vecs = np.stack([e.vector for e in candidates]).astype(np.float64)
        centroid = vecs.mean(axis=0)
        to_centroid = np.linalg.norm(vecs - centroid, axis=1)
        first = argmax_tiebreak(to_centroid, list(range(len(ids))))

    picked = [first]
    remaining = [i for i in range(len(ids)) if i != first]
    min_dist = dist[first].copy()
    while len(picked) < k:
        nxt = argmax_tiebreak(min_dist, remaining)
        picked.append(nxt)
        remaining.remove(nxt)
        min_dist = np.minimum(min_dist, dist[nxt])
    return [ids[i] for i in picked]


def random_select(candidates: list[ModelEmbedding], k: int, seed: int) -> list[str]:
    """Uniform sample of k model_ids without replacement."""
    _check_candidates(candidates)
    if not 1 <= k <= len(candidates):
        raise ValidationError(f"k must be in [1, {len(candidates)}], got {k}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[i].model_id for i in idx]


def min_pairwise_distance(selected: list[str], candidates: list[ModelEmbedding]) -> float:
    """Smallest pairwise distance within a selection (inf for singletons)."""
    by_id = {e.model_id: e for e in candidates}
    chosen = [by_id[s] for s in selected]
    if len(chosen) < 2:
        return float("inf")
    dist = _distance_matrix(chosen)
    iu = np.triu_indices(len(chosen), k=1)
    return float(dist[iu].min())


class FarthestModelSampler(BaseEstimator):
    """Estimator-style wrapper around greedy farthest point model selection.

    Parameters
    ----------
    k : int
        Number of models to select.
    start : str, optional
        model_id of a forced first pick.
    start_rule : {'centroid_farthest', 'first'}
        First-pick rule when ``start`` is not given.
    """

    def __init__(self, k: int = 2, start: str | None = None, start_rule: str = "centroid_farthest"):
        self.k = k
        self.start = start
        self.start_rule = start_rule

    def fit(self, embeddings: list[ModelEmbedding]):
        self.selected_ids_ = fms_select(
            embeddings, self.k, start=self.start, start_rule=self.start_rule
        )
        self.min_pairwise_distance_ = min_pairwise_distance(self.selected_ids_, embeddings)
        return self

    def transform(self, embeddings: list[ModelEmbedding]) -> list[ModelEmbedding]:
        if not hasattr(self, "selected_ids_"):
            raise ValidationError("FarthestModelSampler is not fitted")
        by_id = {e.model_id: e for e in embeddings}
        missing = [s for s in self.selected_ids_ if s not in by_id]
        if missing:
            raise ValidationError(f"fitted selection not among inputs: {missing}")
        return [by_id[s] for s in self.selected_ids_]

    def fit_transform(self, embeddings: list[ModelEmbedding]) -> list[ModelEmbedding]:
        return self.fit(embeddings).transform(embeddings)
