"""Synthetic fixtures: a four-room scene with point cloud, mock embeddings,
instructions, and calibration records, plus score-distribution generators
for coverage checks and the mixed-scale selection benchmark.

Everything is seeded; mock embeddings hash their key into the RNG stream so
regenerated workspaces are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .conformal import LabeledScoreRecord, write_score_records
from .emb_io import write_emb1
from .grids import PointCloud
from .pointcloud_io import write_ply
from .scoring import Embedding, ScoreDistribution, kmeans_representatives, room_scores, softmax
from .segmentation import RoomPolygon, export_room_polygons

MOCK_DIM = 64

SCENE_LABELS = {
    "room_a": "bedroom",
    "room_b": "kitchen",
    "room_c": "bathroom",
    "room_d": "living room",
}

INSTRUCTIONS = [
    ("instr_sleep", "i want to lie down and get some rest", "bedroom"),
    ("instr_cook", "i would like to prepare dinner", "kitchen"),
    ("instr_shower", "i need to take a shower", "bathroom"),
]


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def _keyed_rng(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng((seed, _hash64(key)))


def mock_unit_vector(key: str, seed: int, dim: int = MOCK_DIM) -> np.ndarray:
    v = _keyed_rng(seed, key).standard_normal(dim)
    return v / np.linalg.norm(v)


def label_anchor(label: str, seed: int, dim: int = MOCK_DIM) -> np.ndarray:
    return mock_unit_vector(f"label-anchor:{label}", seed, dim)


def _noisy_anchor(label: str, key: str, noise: float, seed: int, dim: int) -> np.ndarray:
    v = label_anchor(label, seed, dim) + noise * _keyed_rng(seed, key).standard_normal(dim)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Four-room demo scene
# ---------------------------------------------------------------------------

_CELL = 0.1
_N = 40  # 40 x 40 cells = 4 m x 4 m
_WALL_POINTS = 30
_FLOOR_POINTS = 4
_WALL_TOP = 2.45


@dataclass
class SceneFixture:
    cloud: PointCloud
    gt_rooms: list[RoomPolygon]
    wall_mask: np.ndarray


def _wall_mask() -> np.ndarray:
    walls = np.zeros((_N, _N), dtype=bool)
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    walls[19, :] = True
    walls[:, 19] = True
    # one-cell doorways in the cross walls
    walls[19, 9] = walls[19, 29] = False
    walls[9, 19] = walls[29, 19] = False
    return walls


def _gt_polygons() -> list[RoomPolygon]:
    def rect(room_id, c0, r0, c1, r1):
        x0, y0 = c0 * _CELL, r0 * _CELL
        x1, y1 = c1 * _CELL, r1 * _CELL
        return RoomPolygon(
            room_id,
            ((x0, y0), (x1, y0), (x1, y1), (x0, y1)),
            confidence=1.0,
            label=SCENE_LABELS[room_id],
        )

    return [
        rect("room_a", 1, 1, 19, 19),
        rect("room_b", 20, 1, 39, 19),
        rect("room_c", 1, 20, 19, 39),
        rect("room_d", 20, 20, 39, 39),
    ]


def make_scene(seed: int) -> SceneFixture:
    """Four rooms behind one-cell walls: dense wall columns, sparse floor."""
    rng = np.random.default_rng((seed, _hash64("scene-points")))
    walls = _wall_mask()
    points = []
    for r in range(_N):
        for c in range(_N):
            n_pts = _WALL_POINTS if walls[r, c] else _FLOOR_POINTS
            xs = (c + rng.uniform(0.01, 0.99, n_pts)) * _CELL
            ys = (r + rng.uniform(0.01, 0.99, n_pts)) * _CELL
            if walls[r, c]:
                zs = rng.uniform(0.05, _WALL_TOP, n_pts)
            else:
                zs = rng.uniform(0.0, 0.04, n_pts)
            points.append(np.column_stack([xs, ys, zs]))
    return SceneFixture(PointCloud(np.vstack(points)), _gt_polygons(), walls)


def scene_embeddings(seed: int, n_views: int = 6, dim: int = MOCK_DIM):
    """Mock view/label/instruction embeddings aligned with the scene labels.

    Returns (view_matrix, view_ids, label_matrix, label_ids,
    instr_matrix, instr_ids). View vectors cluster around their room's
    label anchor so the scoring stage behaves like a real encoder would.
    """
    view_rows, view_ids = [], []
    for room_id, label in SCENE_LABELS.items():
        for v in range(n_views):
            view_rows.append(_noisy_anchor(label, f"view:{room_id}:{v}", 0.25, seed, dim))
            view_ids.append(f"{room_id}/{v}")
    labels = sorted(set(SCENE_LABELS.values()))
    label_rows = [_noisy_anchor(lbl, f"text:{lbl}", 0.02, seed, dim) for lbl in labels]
    instr_rows = [
        _noisy_anchor(target, f"instr:{iid}", 0.2, seed, dim) for iid, _, target in INSTRUCTIONS
    ]
    instr_ids = [iid for iid, _, _ in INSTRUCTIONS]
    return (
        np.array(view_rows, dtype="<f4"),
        view_ids,
        np.array(label_rows, dtype="<f4"),
        labels,
        np.array(instr_rows, dtype="<f4"),
        instr_ids,
    )


def synth_calibration_records(
    n_records: int,
    seed: int,
    n_rooms: int = 4,
    n_views: int = 6,
    k_reps: int = 4,
    temperature: float = 100.0,
    dim: int = MOCK_DIM,
) -> list[LabeledScoreRecord]:
    """Labeled records from fresh mini-scenes built with the same mock-embedding
    machinery as the demo scene, so calibration and demo distributions are
    exchangeable: four rooms carrying the four distinct labels, one target."""
    rng = np.random.default_rng((seed, _hash64("calibration")))
    labels = sorted(set(SCENE_LABELS.values()))
    records = []
    for i in range(n_records):
        target = labels[int(rng.integers(len(labels)))]
        room_labels = list(labels)[:n_rooms]
        rng.shuffle(room_labels)
        reps = []
        for j, lbl in enumerate(room_labels):
            views = [
                Embedding(_noisy_anchor(lbl, f"cal:{i}:room{j}:view{v}", 0.25, seed, dim))
                for v in range(n_views)
            ]
            reps.append(kmeans_representatives(views, k_reps, seed=seed + j, room_id=f"room{j}"))
        instr = Embedding(_noisy_anchor(target, f"cal:{i}:instr", 0.2, seed, dim))
        dist = room_scores(instr, reps, temperature=temperature, instruction_id=f"cal_{i:03d}")
        true = {f"room{j}" for j, lbl in enumerate(room_labels) if lbl == target}
        records.append(LabeledScoreRecord(dist, true, scene_id=f"cal_scene_{i:03d}"))
    return records


# ---------------------------------------------------------------------------
# Score-distribution generators (no embeddings involved)
# ---------------------------------------------------------------------------


def synth_coverage_records(
    n_records: int, seed: int, n_rooms: int = 8, true_range: tuple[int, int] = (1, 3)
) -> list[LabeledScoreRecord]:
    """I.i.d. instruction-conditioned score records for coverage experiments.

    Each record raises 1-3 true rooms above a noisy background and applies a
    per-record softmax sharpness, mimicking instructions of varying
    specificity. Calibration/test splits drawn from this generator with one
    RNG are exchangeable by construction.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_records):
        n_true = int(rng.integers(true_range[0], true_range[1] + 1))
        raw = rng.normal(0.25, 0.12, n_rooms)
        true_idx = rng.choice(n_rooms, size=n_true, replace=False)
        raw[true_idx] += rng.uniform(0.15, 0.5)
        sharpness = rng.uniform(4.0, 12.0)
        f = softmax(sharpness * raw)
        ids = [f"room{j}" for j in range(n_rooms)]
        dist = ScoreDistribution(f"q{i:04d}", ids, f)
        records.append(
            LabeledScoreRecord(dist, {ids[j] for j in true_idx}, scene_id=f"scene{i:04d}")
        )
    return records


def synth_scale_mismatch_records(n_scenes: int, seed: int) -> list[LabeledScoreRecord]:
    """Mixed-scale benchmark: alternating small and large scenes.

    Small scenes have two matching rooms near f = 0.4 with the rest below
    0.2; large scenes have ten matching rooms near f = 0.095 with the other
    rooms sharing mass 0.05. A single score threshold cannot fit both scene
    sizes, which is exactly the failure mode the adaptive score fixes.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_scenes):
        small = i % 2 == 0
        if small:
            base = np.array([0.4, 0.4, 0.19, 0.01])
            n_match = 2
        else:
            base = np.array([0.095] * 10 + [0.01] * 5)
            n_match = 10
        f = base * (1.0 + 0.02 * rng.standard_normal(len(base)))
        f = np.maximum(f, 1e-4)
        f /= f.sum()
        ids = [f"r{j:02d}" for j in range(len(base))]
        dist = ScoreDistribution(f"q{i:04d}", ids, f)
        records.append(LabeledScoreRecord(dist, set(ids[:n_match]), scene_id=f"scene{i:04d}"))
    return records


# ---------------------------------------------------------------------------
# Workspace writers (used by the `synth` subcommand)
# ---------------------------------------------------------------------------


def write_demo_workspace(out_dir, seed: int) -> dict:
    """Write the demo scene workspace; returns the manifest dict."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fixture = make_scene(seed)
    write_ply(fixture.cloud, out / "cloud.ply", binary=True)
    export_room_polygons(fixture.gt_rooms, out / "gt_rooms.json")

    views, view_ids, labels, label_ids, instrs, instr_ids = scene_embeddings(seed)
    write_emb1(out / "views.emb", views, view_ids)
    write_emb1(out / "labels.emb", labels, label_ids)
    write_emb1(out / "instructions.emb", instrs, instr_ids)

    # temperature 10 keeps the mock-similarity softmax informative rather
    # than saturated (mock cosine gaps are ~5x wider than real encoders')
    config = {
        "cell_size": _CELL,
        "n_slices": 10,
        "min_room_area": 1.0,
        "temperature": 10.0,
        "seed": seed,
    }
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)
        fh.write("\n")

    records = synth_calibration_records(60, seed, temperature=config["temperature"])
    write_score_records(records, out / "calibration.json")

    truth = {
        "records": [
            {
                "instruction_id": iid,
                "scene_id": "demo",
                "instruction": text,
                "true_rooms": sorted(rid for rid, lbl in SCENE_LABELS.items() if lbl == target),
            }
            for iid, text, target in INSTRUCTIONS
        ]
    }
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")

    manifest = {
        "scenes": [
            {
                "scene_id": "demo",
                "point_cloud": "cloud.ply",
                "gt_rooms": "gt_rooms.json",
                "view_embeddings": "views.emb",
                "label_embeddings": "labels.emb",
                "instruction_embeddings": "instructions.emb",
                "instructions": [
                    {
                        "id": iid,
                        "text": text,
                        "true_rooms": sorted(
                            rid for rid, lbl in SCENE_LABELS.items() if lbl == target
                        ),
                    }
                    for iid, text, target in INSTRUCTIONS
                ],
            }
        ],
        "calibration_records": "calibration.json",
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def write_benchmark_workspace(out_dir, seed: int, n_cal=100, n_val=100, n_test=200) -> None:
    """Write mixed-scale benchmark record files (calibration/validation/test)."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = synth_scale_mismatch_records(n_cal + n_val + n_test, seed)
    write_score_records(total[:n_cal], out / "benchmark_calibration.json")
    write_score_records(total[n_cal : n_cal + n_val], out / "benchmark_validation.json")
    write_score_records(total[n_cal + n_val :], out / "benchmark_test.json")
