"""Embedding-based room scoring.

Per-room view embeddings are reduced to K representatives with spherical
k-means; a query (instruction or label text) scores each room by the best
cosine among its representatives, and a softmax over rooms turns the raw
similarities into the probability vector the selection stage consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .segmentation import interpolated_average_precision

DEFAULT_K = 4
DEFAULT_TEMPERATURE = 100.0
_KMEANS_MAX_ITER = 100


class Embedding:
    """Unit-norm float64 vector; normalized on construction."""

    __slots__ = ("values", "dim")

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("degenerate embedding")
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("degenerate embedding")
        self.values = v / norm
        self.dim = v.size


@dataclass
class RepresentativeSet:
    room_id: str
    representatives: np.ndarray  # K x dim, unit rows

    @property
    def K(self) -> int:
        return len(self.representatives)


@dataclass
class ScoreDistribution:
    """Softmax scores over a scene's candidate rooms for one query."""

    instruction_id: str
    room_ids: list[str]
    f: np.ndarray
    raw_similarities: np.ndarray | None = None
    temperature: float | None = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if len(self.room_ids) == 0:
            raise ValueError("distribution needs at least one room")
        if len(self.room_ids) != self.f.size:
            raise ValueError("room_ids and f length mismatch")
        if abs(self.f.sum() - 1.0) > 1e-9:
            raise ValueError("scores must sum to 1")
        if np.any(self.f <= 0.0):
            raise ValueError("softmax scores must be strictly positive")

    @property
    def n(self) -> int:
        return len(self.room_ids)


@dataclass
class ClassificationReport:
    precision: float
    recall: float
    f1_weighted: float
    map: float
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Spherical k-means
# ---------------------------------------------------------------------------


def _kmeans_pp_seed(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding under cosine distance d(x, c) = 1 - x.c."""
    n = len(matrix)
    centroids = np.empty((k, matrix.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = matrix[first]
    best = 1.0 - matrix @ centroids[0]
    for j in range(1, k):
        weights = np.maximum(best, 0.0) ** 2
        total = weights.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=weights / total))
        centroids[j] = matrix[idx]
        best = np.minimum(best, 1.0 - matrix @ centroids[j])
    return centroids


def _lloyd_spherical(matrix: np.ndarray, centroids: np.ndarray):
    """Lloyd iterations on the unit sphere; yields (assignment, objective)."""
    assignment = None
    for _ in range(_KMEANS_MAX_ITER):
        sims = matrix @ centroids.T
        new_assignment = np.argmax(sims, axis=1)
        objective = float(np.sum(1.0 - sims[np.arange(len(matrix)), new_assignment]))
        yield new_assignment, objective, centroids
        if assignment is not None and np.array_equal(assignment, new_assignment):
            return
        assignment = new_assignment
        for j in range(len(centroids)):
            members = matrix[assignment == j]
            if len(members) == 0:
                continue  # empty cluster keeps its previous centroid
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                centroids[j] = mean / norm


def spherical_kmeans(matrix: np.ndarray, K: int, seed: int) -> tuple[np.ndarray, list[float]]:
    """Cluster unit rows; returns (K x dim unit centroids, objective history)."""
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seed(matrix, K, rng)
    history: list[float] = []
    for _, objective, centroids in _lloyd_spherical(matrix, centroids):
        if history and objective > history[-1] + 1e-9:
            raise AssertionError("spherical k-means objective increased")
        history.append(objective)
    return centroids, history


def _views_matrix(views: list[Embedding]) -> np.ndarray:
    if not views:
        raise ValueError("views must be non-empty")
    dim = views[0].dim
    if any(v.dim != dim for v in views):
        raise ValueError("view embeddings have mixed dimensions")
    return np.stack([v.values for v in views])


def kmeans_representatives(
    views: list[Embedding], K: int, seed: int, room_id: str = ""
) -> RepresentativeSet:
    """K representative view embeddings per room via seeded spherical k-means.

    With K >= len(views) the views themselves are returned unchanged.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    matrix = _views_matrix(views)
    if K >= len(views):
        return RepresentativeSet(room_id, matrix.copy())
    centroids, _ = spherical_kmeans(matrix, K, seed)
    return RepresentativeSet(room_id, centroids)


# ---------------------------------------------------------------------------
# Similarity and score distributions
# ---------------------------------------------------------------------------


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise ValueError("embedding dimension mismatch")
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; entries are floored at the smallest normal
    float so extreme logit gaps cannot underflow a probability to exact 0."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    exp = np.maximum(np.exp(shifted), np.finfo(np.float64).tiny)
    return exp / exp.sum()


def _raw_similarity(query: Embedding, reps: RepresentativeSet, aggregation: str) -> float:
    sims = reps.representatives @ query.values
    if aggregation == "max":
        value = sims.max()
    elif aggregation == "mean":
        value = sims.mean()
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    return float(np.clip(value, -1.0, 1.0))


def room_scores(
    text: Embedding,
    rooms: list[RepresentativeSet],
    temperature: float = DEFAULT_TEMPERATURE,
    instruction_id: str = "",
    aggregation: str = "max",
) -> ScoreDistribution:
    """Softmax score distribution of one query over a scene's rooms.

    Each room's raw similarity is the best (or, with aggregation="mean",
    the average) cosine between the query and the room's representatives.
    """
    if not rooms:
        raise ValueError("need at least one room")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    for r in rooms:
        if r.representatives.shape[1] != text.dim:
            raise ValueError("embedding dimension mismatch")
    raw = np.array([_raw_similarity(text, r, aggregation) for r in rooms])
    f = softmax(temperature * raw)
    return ScoreDistribution(
        instruction_id=instruction_id,
        room_ids=[r.room_id for r in rooms],
        f=f,
        raw_similarities=raw,
        temperature=temperature,
    )


def label_scores(
    room: RepresentativeSet,
    label_embeddings: dict[str, Embedding],
    temperature: float = DEFAULT_TEMPERATURE,
    aggregation: str = "max",
) -> ScoreDistribution:
    """Softmax distribution of one room over a set of candidate labels."""
    labels = sorted(label_embeddings)
    if not labels:
        raise ValueError("need at least one label")
    raw = np.array(
        [_raw_similarity(label_embeddings[lbl], room, aggregation) for lbl in labels]
    )
    f = softmax(temperature * raw)
    return ScoreDistribution(
        instruction_id=room.room_id,
        room_ids=labels,
        f=f,
        raw_similarities=raw,
        temperature=temperature,
    )


def top1_label(dist: ScoreDistribution, room_labels: dict[str, str]) -> str:
    """Label of the highest-f candidate; ties go to the smallest candidate id."""
    best = min(range(dist.n), key=lambda j: (-dist.f[j], dist.room_ids[j]))
    return room_labels[dist.room_ids[best]]


# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------


def classification_metrics(
    predicted: list[str],
    gt: list[str],
    label_set: list[str],
    scores: list[dict[str, float]] | None = None,
) -> ClassificationReport:
    """Precision/recall (macro over classes present in gt), weighted F1, mAP.

    mAP averages, over classes present in gt, the interpolated average
    precision of ranking samples by that class's score. When per-sample
    score maps are not supplied, the predicted labels stand in as one-hot
    scores.
    """
    if len(predicted) != len(gt):
        raise ValueError("predicted and gt must have equal length")
    if not gt:
        raise ValueError("need at least one sample")
    if scores is None:
        scores = [{p: 1.0} for p in predicted]
    elif len(scores) != len(gt):
        raise ValueError("scores and gt must have equal length")

    classes = sorted({g for g in gt})
    per_class: dict[str, dict[str, float]] = {}
    precisions, recalls = [], []
    f1_weighted = 0.0
    aps = []
    for cls in classes:
        tp = sum(1 for p, g in zip(predicted, gt) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predicted, gt) if p == cls and g != cls)
        support = sum(1 for g in gt if g == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        order = sorted(
            range(len(gt)), key=lambda i: (-scores[i].get(cls, 0.0), i)
        )
        ap = interpolated_average_precision([gt[i] == cls for i in order], support)
        per_class[cls] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "ap": ap,
            "support": support,
        }
        precisions.append(precision)
        recalls.append(recall)
        f1_weighted += f1 * support / len(gt)
        aps.append(ap)

    return ClassificationReport(
        precision=sum(precisions) / len(classes),
        recall=sum(recalls) / len(classes),
        f1_weighted=f1_weighted,
        map=sum(aps) / len(classes),
        per_class=per_class,
    )
