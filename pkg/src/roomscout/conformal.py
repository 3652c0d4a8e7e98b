"""Conformal room selection.

The adaptive variant scores a labeled example by the cumulative softmax mass
accumulated walking down the rank-sorted rooms until the true room set is
covered; the plain-conformal baseline scores it by one minus the true room's
softmax value. Either score family is calibrated to a quantile q-hat, which
then cuts test-time score distributions into prediction sets with marginal
coverage at least 1 - alpha.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .scoring import ScoreDistribution, softmax
from .segmentation import SchemaError

METHOD_ACP = "acp"
METHOD_CP = "cp"

# slack for literal decimal thresholds (e.g. f = 0.3 against q-hat = 0.7,
# where 1 - 0.7 lands one ulp above 0.3); random scores are unaffected
_THRESHOLD_SLACK = 1e-12


@dataclass
class LabeledScoreRecord:
    dist: ScoreDistribution
    true_rooms: frozenset[str]
    scene_id: str = ""

    def __post_init__(self):
        self.true_rooms = frozenset(self.true_rooms)
        if not self.true_rooms:
            raise ValueError("record needs at least one true room")
        missing = self.true_rooms - set(self.dist.room_ids)
        if missing:
            raise ValueError(
                f"record {self.dist.instruction_id!r}: true rooms not in distribution: "
                f"{sorted(missing)}"
            )


@dataclass
class RankPermutation:
    """Room indices sorted by descending f; ties broken by ascending room id."""

    order: list[int]


@dataclass
class CalibrationSet:
    scores: list[float]
    method: str

    def __post_init__(self):
        if not self.scores:
            raise ValueError("calibration set must be non-empty")
        if any(s < 0.0 or s > 1.0 for s in self.scores):
            raise ValueError("conformity scores must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.scores)


@dataclass
class PredictionSet:
    instruction_id: str
    rooms: list[str]
    k: int
    q_hat: float
    alpha: float
    method: str
    scene_id: str = ""

    def room_set(self) -> frozenset[str]:
        return frozenset(self.rooms)


def rank_rooms(dist: ScoreDistribution) -> RankPermutation:
    order = sorted(range(dist.n), key=lambda j: (-dist.f[j], dist.room_ids[j]))
    return RankPermutation(order)


def cumulative_scores(dist: ScoreDistribution, perm: RankPermutation) -> list[float]:
    """Prefix sums of f along the ranking; non-decreasing, ends at ~1."""
    return list(np.cumsum(dist.f[perm.order]))


def _covering_rank(dist: ScoreDistribution, perm: RankPermutation, true_rooms) -> int:
    """Smallest 1-based rank whose prefix contains every true room."""
    remaining = set(true_rooms)
    for rank, j in enumerate(perm.order, start=1):
        remaining.discard(dist.room_ids[j])
        if not remaining:
            return rank
    raise ValueError("true rooms not fully present in distribution")


def adaptive_conformity_score(record: LabeledScoreRecord) -> float:
    """Cumulative mass at the smallest rank prefix covering the true set.

    Clamped to 1.0: the full prefix sums to 1 mathematically, but float
    accumulation can overshoot by an ulp.
    """
    perm = rank_rooms(record.dist)
    cumulative = cumulative_scores(record.dist, perm)
    return min(cumulative[_covering_rank(record.dist, perm, record.true_rooms) - 1], 1.0)


def build_calibration_set(records: list[LabeledScoreRecord]) -> CalibrationSet:
    """One adaptive conformity score per labeled record."""
    if not records:
        raise ValueError("no calibration records")
    return CalibrationSet([adaptive_conformity_score(r) for r in records], METHOD_ACP)


def conformal_quantile(cal: CalibrationSet, alpha: float) -> float:
    """The ceil((n+1)(1-alpha))-th smallest calibration score.

    When that rank exceeds n the sentinel 1.0 is returned: every conformity
    score is bounded by 1, so the quantile degenerates to full coverage.
    The rank is computed in exact rational arithmetic to keep decimal alphas
    (0.1, 0.3, ...) from drifting across a ceiling boundary.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    n = cal.n
    rank = math.ceil(Fraction(n + 1) * (1 - Fraction(alpha)))
    if rank > n:
        return 1.0
    return sorted(cal.scores)[rank - 1]


def acp_prediction_set(
    dist: ScoreDistribution, q_hat: float, alpha: float, scene_id: str = ""
) -> PredictionSet:
    """Rank prefix whose cumulative mass first exceeds q-hat, plus one.

    k = sup{k' : s_k' <= q_hat} + 1 with sup of the empty set taken as 0, so
    the set is never empty; k is clamped to the number of rooms.
    """
    perm = rank_rooms(dist)
    cumulative = cumulative_scores(dist, perm)
    sup = 0
    for i, s in enumerate(cumulative, start=1):
        if s <= q_hat:
            sup = i
    k = min(sup + 1, dist.n)
    rooms = [dist.room_ids[j] for j in perm.order[:k]]
    return PredictionSet(
        instruction_id=dist.instruction_id,
        rooms=rooms,
        k=k,
        q_hat=q_hat,
        alpha=alpha,
        method=METHOD_ACP,
        scene_id=scene_id,
    )


def cp_conformity_score(record: LabeledScoreRecord) -> float:
    """1 - f of the highest-f true room."""
    best = max(
        (j for j in range(record.dist.n) if record.dist.room_ids[j] in record.true_rooms),
        key=lambda j: record.dist.f[j],
    )
    return 1.0 - float(record.dist.f[best])


def cp_calibration_set(records: list[LabeledScoreRecord]) -> CalibrationSet:
    if not records:
        raise ValueError("no calibration records")
    return CalibrationSet([cp_conformity_score(r) for r in records], METHOD_CP)


def cp_calibrate(records: list[LabeledScoreRecord], alpha: float) -> float:
    """Quantile of the 1 - f(true) scores at level alpha."""
    return conformal_quantile(cp_calibration_set(records), alpha)


def cp_prediction_set(
    dist: ScoreDistribution, q_hat_cp: float, alpha: float = float("nan"), scene_id: str = ""
) -> PredictionSet:
    """All rooms with f >= 1 - q-hat; falls back to top-1 when none qualify."""
    perm = rank_rooms(dist)
    threshold = 1.0 - q_hat_cp
    ranked = [dist.room_ids[j] for j in perm.order]
    rooms = [
        rid
        for rid, j in zip(ranked, perm.order)
        if dist.f[j] >= threshold - _THRESHOLD_SLACK
    ]
    if not rooms:
        rooms = ranked[:1]
    return PredictionSet(
        instruction_id=dist.instruction_id,
        rooms=rooms,
        k=len(rooms),
        q_hat=q_hat_cp,
        alpha=alpha,
        method=METHOD_CP,
        scene_id=scene_id,
    )


def set_iou(selected, true_rooms) -> float:
    selected = frozenset(selected)
    true_rooms = frozenset(true_rooms)
    union = selected | true_rooms
    if not union:
        raise ValueError("both room sets are empty")
    return len(selected & true_rooms) / len(union)


def optimize_alpha(
    validation: list[LabeledScoreRecord],
    cal: CalibrationSet,
    alpha_grid: list[float],
    method: str = METHOD_ACP,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid search for the error rate maximizing mean selection IoU.

    For each alpha the calibration quantile is recomputed and prediction sets
    are formed for every validation record; the mean Jaccard against the true
    room sets scores that alpha. Ties go to the smallest alpha. Returns
    (alpha_star, [(alpha, mean_iou), ...] in grid order).
    """
    if not alpha_grid:
        raise ValueError("alpha grid must be non-empty")
    if not validation:
        raise ValueError("validation records must be non-empty")
    table: list[tuple[float, float]] = []
    best_alpha, best_iou = None, -1.0
    for alpha in alpha_grid:
        q_hat = conformal_quantile(cal, alpha)
        if method == METHOD_ACP:
            sets = [acp_prediction_set(r.dist, q_hat, alpha) for r in validation]
        elif method == METHOD_CP:
            sets = [cp_prediction_set(r.dist, q_hat, alpha) for r in validation]
        else:
            raise ValueError(f"unknown method {method!r}")
        ious = [set_iou(s.rooms, r.true_rooms) for s, r in zip(sets, validation)]
        mean_iou = sum(ious) / len(ious)
        table.append((alpha, mean_iou))
        if mean_iou > best_iou or (mean_iou == best_iou and alpha < best_alpha):
            best_alpha, best_iou = alpha, mean_iou
    return best_alpha, table


def default_alpha_grid() -> list[float]:
    return [round(0.01 * i, 2) for i in range(1, 100)]


def rm_iou(pred_sets: list[PredictionSet], true_sets: list) -> float:
    """Mean Jaccard between selected and true room sets."""
    if len(pred_sets) != len(true_sets):
        raise ValueError("prediction and truth lists must have equal length")
    if not pred_sets:
        raise ValueError("need at least one prediction set")
    total = sum(set_iou(p.rooms, t) for p, t in zip(pred_sets, true_sets))
    return total / len(pred_sets)


# ---------------------------------------------------------------------------
# Record and prediction-set JSON schemas
# ---------------------------------------------------------------------------


def _distribution_from_scores(
    instruction_id: str, raw_scores: dict, apply_softmax: bool, temperature: float
) -> ScoreDistribution:
    room_ids = [str(r) for r in raw_scores]
    values = np.array([float(raw_scores[r]) for r in raw_scores], dtype=np.float64)
    if apply_softmax:
        f = softmax(temperature * values)
        return ScoreDistribution(instruction_id, room_ids, f, raw_similarities=values,
                                 temperature=temperature)
    total = values.sum()
    if abs(total - 1.0) > 1e-6:
        raise SchemaError(
            f"record {instruction_id!r}: scores sum to {total:.6g}, not 1 "
            "(pass raw similarities with softmax enabled instead)"
        )
    return ScoreDistribution(instruction_id, room_ids, values / total)


def _load_record_entries(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise SchemaError(f"{path}: expected an object with a 'records' list")
    return doc["records"]


def load_score_records(
    path, apply_softmax: bool = False, temperature: float = 100.0
) -> list[LabeledScoreRecord]:
    """Read the calibration/validation record schema (true_rooms required).

    Scores may be softmax values (default; must sum to 1) or raw similarities
    (apply_softmax=True).
    """
    records = []
    for i, entry in enumerate(_load_record_entries(path)):
        try:
            instruction_id = str(entry.get("instruction_id", entry.get("instruction", i)))
            dist = _distribution_from_scores(
                instruction_id, entry["scores"], apply_softmax, temperature
            )
            records.append(
                LabeledScoreRecord(
                    dist=dist,
                    true_rooms=frozenset(str(r) for r in entry["true_rooms"]),
                    scene_id=str(entry.get("scene_id", "")),
                )
            )
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: record {i}: {exc}") from exc
    return records


def load_distributions(
    path, apply_softmax: bool = False, temperature: float = 100.0
) -> list[tuple[ScoreDistribution, str]]:
    """Read the record schema as bare (distribution, scene_id) pairs.

    Truth entries, when present, are ignored; this is the selection-time
    input where ground truth may not exist yet.
    """
    pairs = []
    for i, entry in enumerate(_load_record_entries(path)):
        try:
            instruction_id = str(entry.get("instruction_id", entry.get("instruction", i)))
            dist = _distribution_from_scores(
                instruction_id, entry["scores"], apply_softmax, temperature
            )
            pairs.append((dist, str(entry.get("scene_id", ""))))
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: record {i}: {exc}") from exc
    return pairs


def write_score_records(records: list[LabeledScoreRecord], path, instructions=None) -> None:
    entries = [
        (r.dist, r.scene_id, sorted(r.true_rooms)) for r in records
    ]
    _write_record_entries(entries, path, instructions)


def write_distributions(pairs: list[tuple[ScoreDistribution, str]], path, instructions=None) -> None:
    _write_record_entries([(d, sid, None) for d, sid in pairs], path, instructions)


def _write_record_entries(entries, path, instructions=None) -> None:
    instructions = instructions or {}
    doc = {"records": []}
    for dist, scene_id, true_rooms in entries:
        entry = {
            "instruction_id": dist.instruction_id,
            "scene_id": scene_id,
            "scores": {rid: float(f) for rid, f in zip(dist.room_ids, dist.f)},
        }
        if dist.instruction_id in instructions:
            entry["instruction"] = instructions[dist.instruction_id]
        if true_rooms:
            entry["true_rooms"] = true_rooms
        doc["records"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def export_prediction_sets(sets: list[PredictionSet], path) -> None:
    entries = []
    for s in sets:
        entry = {
            "instruction_id": s.instruction_id,
            "scene_id": s.scene_id,
            "method": s.method,
            "rooms": list(s.rooms),
        }
        # imported sets may carry no usable alpha/q_hat; omit rather than
        # emit non-JSON NaN literals
        if math.isfinite(s.alpha):
            entry["alpha"] = s.alpha
        if math.isfinite(s.q_hat):
            entry["q_hat"] = s.q_hat
        entries.append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"sets": entries}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def import_prediction_sets(path, rooms_by_scene: dict[str, set] | None = None) -> list[PredictionSet]:
    """Read externally produced prediction sets; tagged method stays as stored
    unless absent, in which case it becomes "imported"."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("sets"), list):
        raise SchemaError(f"{path}: expected an object with a 'sets' list")
    sets = []
    for i, entry in enumerate(doc["sets"]):
        try:
            rooms = [str(r) for r in entry["rooms"]]
            if not rooms:
                raise SchemaError(f"{path}: set {i}: empty prediction set")
            scene_id = str(entry.get("scene_id", ""))
            if rooms_by_scene is not None:
                known = rooms_by_scene.get(scene_id, set())
                unknown = [r for r in rooms if r not in known]
                if unknown:
                    raise SchemaError(
                        f"{path}: set {i}: unknown room ids {unknown} for scene {scene_id!r}"
                    )
            sets.append(
                PredictionSet(
                    instruction_id=str(entry.get("instruction_id", i)),
                    rooms=rooms,
                    k=len(rooms),
                    q_hat=float(entry.get("q_hat", float("nan"))),
                    alpha=float(entry.get("alpha", float("nan"))),
                    method=str(entry.get("method", "imported")),
                    scene_id=scene_id,
                )
            )
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: set {i}: {exc}") from exc
    return sets
