"""Cross-model class alignment from prediction covariances.

Two classifiers trained on overlapping class sets respond coherently to the
same stimuli: when one assigns high probability to its class p, the other
raises its own index of the same underlying class.  The sample covariance
between the two prediction matrices over a probe batch therefore scores
class-index correspondence; an optimal one-to-one assignment plus a
sharedness threshold turns scores into a partial matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from .errors import ValidationError
from .frozen import Ensemble, FrozenModel
from .validation import check_image_batch

PROBE_FLOOR_FACTOR = 10  # probes per output class, stability floor


def _predictions(model: FrozenModel, probe: torch.Tensor, batch_size: int = 512) -> np.ndarray:
    outs = []
    for i in range(0, len(probe), batch_size):
        outs.append(model.proba(probe[i : i + batch_size]))
    return torch.cat(outs).numpy().astype(np.float64)


def covariance_matrix(
    model_a: FrozenModel,
    model_b: FrozenModel,
    probe_data: torch.Tensor,
    normalize: bool = False,
) -> np.ndarray:
    """C_A x C_B matrix of sample covariances between class probabilities.

    ``normalize=True`` switches to Pearson correlation, which makes scores
    comparable across model pairs with different output sharpness.
    """
    probe_data = check_image_batch(probe_data, "probe_data")
    floor = PROBE_FLOOR_FACTOR * max(model_a.num_classes, model_b.num_classes)
    if len(probe_data) < floor:
        raise ValidationError(
            f"probe too small: {len(probe_data)} inputs, need at least {floor} "
            f"({PROBE_FLOOR_FACTOR} per class for the wider model)"
        )
    pa = _predictions(model_a, probe_data)
    pb = _predictions(model_b, probe_data)
    return prediction_covariance(pa, pb, normalize=normalize)


def prediction_covariance(pa: np.ndarray, pb: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Covariance between columns of two prediction matrices (rows = stimuli)."""
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if pa.ndim != 2 or pb.ndim != 2 or pa.shape[0] != pb.shape[0]:
        raise ValidationError(
            f"prediction matrices must share the stimulus axis: {pa.shape} vs {pb.shape}"
        )
    n = pa.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 stimuli for a sample covariance")
    da = pa - pa.mean(axis=0, keepdims=True)
    db = pb - pb.mean(axis=0, keepdims=True)
    cov = da.T @ db / (n - 1)
    if normalize:
        sa = da.std(axis=0, ddof=1)
        sb = db.std(axis=0, ddof=1)
        denom = np.outer(sa, sb)
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = np.where(denom > 0, cov / denom, 0.0)
    return cov


@dataclass
class CorrespondenceResult:
    """A partial injective matching between two models' class indices."""

    pairs: list  # [(class_a, class_b, score)]
    unmatched_a: list
    unmatched_b: list
    score_matrix: np.ndarray
    threshold: float

    def __post_init__(self):
        seen_a = [a for a, _, _ in self.pairs]
        seen_b = [b for _, b, _ in self.pairs]
        if len(set(seen_a)) != len(seen_a) or len(set(seen_b)) != len(seen_b):
            raise ValidationError("matching is not injective")

    def as_map(self) -> dict[int, int]:
        return {a: b for a, b, _ in self.pairs}


def match_classes(
    score_matrix: np.ndarray, threshold: float, greedy: bool = False
) -> CorrespondenceResult:
    """Optimal one-to-one matching by total score, then threshold demotion.

    ``greedy=True`` replaces the optimal assignment with repeated picking of
    the globally best remaining entry (ablation baseline).
    """
    score = np.asarray(score_matrix, dtype=np.float64)
    if score.ndim != 2 or score.size == 0:
        raise ValidationError(f"score matrix must be 2-D and nonempty, got {score.shape}")
    if not np.isfinite(score).all():
        raise ValidationError("score matrix has non-finite entries")

    if greedy:
        avail_a = set(range(score.shape[0]))
        avail_b = set(range(score.shape[1]))
        raw_pairs = []
        while avail_a and avail_b:
            best = max(
                ((a, b) for a in avail_a for b in avail_b),
                key=lambda ab: score[ab],
            )
            raw_pairs.append(best)
            avail_a.discard(best[0])
            avail_b.discard(best[1])
    else:
        rows, cols = linear_sum_assignment(score, maximize=True)
        raw_pairs = list(zip(rows.tolist(), cols.tolist()))

    pairs = [
        (a, b, float(score[a, b])) for a, b in raw_pairs if score[a, b] >= threshold
    ]
    matched_a = {a for a, _, _ in pairs}
    matched_b = {b for _, b, _ in pairs}
    return CorrespondenceResult(
        pairs=sorted(pairs),
        unmatched_a=[a for a in range(score.shape[0]) if a not in matched_a],
        unmatched_b=[b for b in range(score.shape[1]) if b not in matched_b],
        score_matrix=score,
        threshold=float(threshold),
    )


def calibrate_shared_threshold(null_scores: np.ndarray) -> float:
    """Threshold from a null fixture: models known to share no classes.

    3x the 95th percentile of |null scores| leaves a margin over the noise
    floor while staying far below genuine same-class covariances.
    """
    null_scores = np.asarray(null_scores, dtype=np.float64).ravel()
    if null_scores.size == 0:
        raise ValidationError("null_scores is empty")
    return float(3.0 * np.percentile(np.abs(null_scores), 95))


def align_ensemble(
    models: list[FrozenModel],
    reference: FrozenModel,
    probe_data: torch.Tensor,
    threshold: float | None = None,
    normalize: bool = False,
) -> Ensemble:
    """Build an ensemble whose canonical space = reference classes shared by all.

    Canonical class c is reference class ``shared[c]``; each member's class
    map sends c to that member's matched output index.
    """
    if not models:
        raise ValidationError("no models to align")
    results = []
    for m in models:
        score = covariance_matrix(reference, m, probe_data, normalize=normalize)
        if threshold is None:
            # Conservative default: half the median matched score, computed
            # per pair from the assignment itself.
            rows, cols = linear_sum_assignment(score, maximize=True)
            thr = 0.5 * float(np.median(score[rows, cols]))
        else:
            thr = threshold
        results.append(match_classes(score, thr))

    shared = sorted(
        set.intersection(*[{a for a, _, _ in r.pairs} for r in results])
    )
    if not shared:
        counts = ", ".join(
            f"{reference.model_id}->{m.model_id}: {len(r.pairs)}"
            for m, r in zip(models, results)
        )
        raise ValidationError(f"no class shared by all members (matches per pair: {counts})")

    class_maps = []
    for r in results:
        full = r.as_map()
        class_maps.append({c: full[ref_class] for c, ref_class in enumerate(shared)})
    return Ensemble(models, class_maps, shared_class_count=len(shared))


class ClassCorrespondence(BaseEstimator):
    """Estimator wrapper: fit on two prediction matrices, expose the matching.

    Parameters
    ----------
    threshold : float or None
        Sharedness threshold on covariance scores; None matches everything
        the assignment pairs up.
    normalize : bool
        Use Pearson correlation instead of raw covariance.
    greedy : bool
        Greedy matching instead of optimal assignment.
    """

    def __init__(self, threshold: float | None = None, normalize: bool = False, greedy: bool = False):
        self.threshold = threshold
        self.normalize = normalize
        self.greedy = greedy

    def fit(self, predictions_a: np.ndarray, predictions_b: np.ndarray):
        score = prediction_covariance(predictions_a, predictions_b, normalize=self.normalize)
        thr = -np.inf if self.threshold is None else self.threshold
        self.result_ = match_classes(score, thr, greedy=self.greedy)
        self.score_matrix_ = score
        return self

    def predict(self, classes_a) -> np.ndarray:
        """Map class indices of A onto matched indices of B (-1 if unmatched)."""
        if not hasattr(self, "result_"):
            raise ValidationError("ClassCorrespondence is not fitted")
        mapping = self.result_.as_map()
        return np.array([mapping.get(int(c), -1) for c in np.asarray(classes_a).ravel()])
