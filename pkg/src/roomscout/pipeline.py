"""End-to-end orchestration over scene manifests.

Each scene runs map construction, segmentation, view planning, scoring, and
selection; stages whose inputs are missing from the manifest are skipped
with a recorded reason rather than failing the scene. Scene failures are
isolated: one broken scene never aborts the others.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import conformal, figures
from .config import PipelineConfig
from .emb_io import read_emb1
from .grids import GridSpec, build_combined_map, write_grid, write_pgm
from .pointcloud_io import read_point_cloud
from .scoring import (
    Embedding,
    classification_metrics,
    kmeans_representatives,
    label_scores,
    room_scores,
    top1_label,
)
from .segmentation import (
    SchemaError,
    import_room_polygons,
    segment_rooms_baseline,
    segmentation_metrics,
    export_room_polygons,
)
from .viewplan import export_poses, plan_camera_poses, room_box_from_polygon


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("scenes"), list):
        raise SchemaError(f"{path}: expected an object with a 'scenes' list")
    if not doc["scenes"]:
        raise SchemaError(f"{path}: manifest has no scenes")
    seen = set()
    for scene in doc["scenes"]:
        sid = scene.get("scene_id")
        if not sid:
            raise SchemaError(f"{path}: scene without scene_id")
        if sid in seen:
            raise SchemaError(f"{path}: duplicate scene_id {sid!r}")
        seen.add(sid)
    return doc


def _group_views(matrix, ids):
    """Group EMB1 rows by the room id before the '/' in each row id."""
    grouped: dict[str, list[np.ndarray]] = {}
    for row, vid in zip(matrix, ids):
        room_id = vid.split("/", 1)[0]
        grouped.setdefault(room_id, []).append(np.asarray(row, dtype=np.float64))
    return grouped


def room_representatives(views_path, config: PipelineConfig):
    matrix, ids = read_emb1(views_path)
    grouped = _group_views(matrix, ids)
    reps = {}
    for room_id in sorted(grouped):
        views = [Embedding(v) for v in grouped[room_id]]
        reps[room_id] = kmeans_representatives(
            views, config.k_reps, seed=config.seed, room_id=room_id
        )
    return reps


def process_scene(scene: dict, config: PipelineConfig, base_dir: Path, scene_dir: Path) -> dict:
    """Run every stage for one scene; returns the scene report block.

    Raises on unrecoverable input errors (caller isolates the failure).
    """
    scene_dir.mkdir(parents=True, exist_ok=True)
    result: dict = {"scene_id": scene["scene_id"], "status": "ok"}

    # --- map construction -------------------------------------------------
    cloud_path = base_dir / scene["point_cloud"]
    cloud = read_point_cloud(cloud_path)
    spec = GridSpec.from_cloud(cloud, config.cell_size)
    combined, density, border, selection = build_combined_map(
        cloud, spec, config.border_params()
    )
    for name, grid in (("combined", combined), ("density", density), ("border", border)):
        write_grid(grid, scene_dir / name)
    write_pgm(combined, scene_dir / "combined.pgm")
    figures.save_grid_figure(combined, scene_dir / "combined.png", title=scene["scene_id"])
    result["grid"] = {
        "width": spec.width,
        "height": spec.height,
        "cell_size": spec.cell_size,
        "n_points": len(cloud),
        "selected_slices": list(selection.selected_indices),
        "slice_occupancy": list(selection.occupied_counts),
        "reference_count": selection.reference_count,
    }

    # --- segmentation ------------------------------------------------------
    if "detections" in scene:
        pred_rooms = import_room_polygons(base_dir / scene["detections"])
    else:
        pred_rooms = segment_rooms_baseline(
            combined, config.wall_threshold, config.min_room_cells()
        )
    export_room_polygons(pred_rooms, scene_dir / "rooms.json")
    result["n_rooms_detected"] = len(pred_rooms)

    gt_rooms = None
    if "gt_rooms" in scene:
        gt_rooms = import_room_polygons(base_dir / scene["gt_rooms"])
        report = segmentation_metrics(pred_rooms, gt_rooms, spec)
        result["segmentation"] = {
            "ap50": report.ap50,
            "miou": report.miou,
            "per_room_iou": report.per_room_iou,
            "matching": [list(m) for m in report.matching],
        }
    else:
        result["segmentation"] = {"skipped": "no ground-truth rooms"}

    # --- view planning -----------------------------------------------------
    z_c = float(cloud.points[:, 2].min()) + config.eye_height
    poses_dir = scene_dir / "poses"
    poses_dir.mkdir(exist_ok=True)
    for room in pred_rooms:
        poses = plan_camera_poses(room_box_from_polygon(room, z_c), config.n_views)
        export_poses(room.room_id, poses, poses_dir / f"{room.room_id}.json")
    result["n_poses"] = len(pred_rooms) * config.n_views

    # --- scoring / classification ------------------------------------------
    reps = None
    if "view_embeddings" in scene:
        reps = room_representatives(base_dir / scene["view_embeddings"], config)

    classification_samples = None
    if reps is None:
        result["classification"] = {"skipped": "no view embeddings"}
    elif "label_embeddings" not in scene:
        result["classification"] = {"skipped": "no label embeddings"}
    elif gt_rooms is None or not any(g.label for g in gt_rooms):
        result["classification"] = {"skipped": "no ground-truth labels"}
    else:
        label_matrix, label_ids = read_emb1(base_dir / scene["label_embeddings"])
        label_embs = {lid: Embedding(row) for lid, row in zip(label_ids, label_matrix)}
        gt_labels = {g.room_id: g.label for g in gt_rooms if g.label}
        predicted, truth, scores, labeled_rooms = [], [], [], []
        for room_id in sorted(gt_labels):
            if room_id not in reps:
                continue
            dist = label_scores(
                reps[room_id], label_embs, config.temperature, config.aggregation
            )
            predicted.append(top1_label(dist, {lid: lid for lid in dist.room_ids}))
            truth.append(gt_labels[room_id])
            scores.append({lid: float(f) for lid, f in zip(dist.room_ids, dist.f)})
            labeled_rooms.append(room_id)
        if not labeled_rooms:
            result["classification"] = {"skipped": "no rooms with both labels and views"}
        else:
            result["classification"] = {
                "rooms": labeled_rooms,
                "predicted": predicted,
                "gt": truth,
                "scores": scores,
                "label_set": sorted(label_embs),
            }
            classification_samples = (predicted, truth, scores, sorted(label_embs))

    # --- instruction scoring (selection inputs) ------------------------------
    selection_records = []
    if not scene.get("instructions"):
        result["selection_inputs"] = {"skipped": "no instructions"}
    elif reps is None:
        result["selection_inputs"] = {"skipped": "no view embeddings"}
    elif "instruction_embeddings" not in scene:
        result["selection_inputs"] = {"skipped": "no instruction embeddings"}
    else:
        instr_matrix, instr_ids = read_emb1(base_dir / scene["instruction_embeddings"])
        instr_embs = {iid: Embedding(row) for iid, row in zip(instr_ids, instr_matrix)}
        rep_list = [reps[rid] for rid in sorted(reps)]
        for entry in scene["instructions"]:
            iid = entry["id"]
            if iid not in instr_embs:
                raise SchemaError(
                    f"scene {scene['scene_id']}: instruction {iid!r} missing from embeddings"
                )
            dist = room_scores(
                instr_embs[iid],
                rep_list,
                temperature=config.temperature,
                instruction_id=iid,
                aggregation=config.aggregation,
            )
            selection_records.append(
                conformal.LabeledScoreRecord(
                    dist,
                    frozenset(entry["true_rooms"]),
                    scene_id=scene["scene_id"],
                )
            )
        conformal.write_score_records(selection_records, scene_dir / "scores.json")
        result["selection_inputs"] = {"n_instructions": len(selection_records)}

    result["_classification_samples"] = classification_samples
    result["_selection_records"] = selection_records
    return result


def _selection_report(
    records: list, config: PipelineConfig, calibration_path, out_dir: Path
) -> dict:
    cal_records = conformal.load_score_records(calibration_path)
    alpha = config.alpha
    block: dict = {"alpha": alpha, "n_calibration": len(cal_records), "q_hat": {}}
    per_row: list[dict] = []
    for r in records:
        per_row.append(
            {
                "instruction_id": r.dist.instruction_id,
                "scene_id": r.scene_id,
                "gt_rooms": sorted(r.true_rooms),
                "iou": {},
            }
        )
    averages = {}
    for method in config.methods:
        if method == "acp":
            cal = conformal.build_calibration_set(cal_records)
            q_hat = conformal.conformal_quantile(cal, alpha)
            sets = [
                conformal.acp_prediction_set(r.dist, q_hat, alpha, scene_id=r.scene_id)
                for r in records
            ]
        else:
            q_hat = conformal.cp_calibrate(cal_records, alpha)
            sets = [
                conformal.cp_prediction_set(r.dist, q_hat, alpha, scene_id=r.scene_id)
                for r in records
            ]
        block["q_hat"][method] = q_hat
        conformal.export_prediction_sets(sets, out_dir / f"sets_{method}.json")
        for row, s, r in zip(per_row, sets, records):
            row["iou"][method] = conformal.set_iou(s.rooms, r.true_rooms)
            row.setdefault("sets", {})[method] = list(s.rooms)
        averages[method] = conformal.rm_iou(sets, [r.true_rooms for r in records])
    block["per_instruction"] = per_row
    block["average"] = averages
    return block


def _write_selection_csv(block: dict, path) -> None:
    methods = sorted(block["average"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instruction", "scene", "gt_rooms", *methods])
        for row in block["per_instruction"]:
            writer.writerow(
                [
                    row["instruction_id"],
                    row["scene_id"],
                    "|".join(row["gt_rooms"]),
                    *[f"{row['iou'][m]:.6f}" for m in methods],
                ]
            )
        writer.writerow(["average", "", "", *[f"{block['average'][m]:.6f}" for m in methods]])


def run_pipeline(manifest_path, out_dir, config: PipelineConfig) -> tuple[dict, int]:
    """Run every scene in the manifest; returns (report, exit_code)."""
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    base_dir = manifest_path.parent

    provenance = {
        "config": config.to_dict(),
        "inputs": {"manifest": _sha256(manifest_path)},
    }
    for scene in manifest["scenes"]:
        for key in ("point_cloud", "gt_rooms", "detections", "view_embeddings",
                    "label_embeddings", "instruction_embeddings"):
            if key in scene:
                rel = scene[key]
                target = base_dir / rel
                if target.exists():
                    provenance["inputs"][str(rel)] = _sha256(target)

    scene_blocks = []
    all_selection_records = []
    classification_pool = []
    n_failed = 0
    for scene in manifest["scenes"]:
        scene_dir = out_dir / "scenes" / scene["scene_id"]
        try:
            block = process_scene(scene, config, base_dir, scene_dir)
        except (ValueError, OSError) as exc:
            n_failed += 1
            scene_blocks.append(
                {"scene_id": scene["scene_id"], "status": "failed", "reason": str(exc)}
            )
            continue
        all_selection_records.extend(block.pop("_selection_records"))
        samples = block.pop("_classification_samples")
        if samples:
            classification_pool.append(samples)
        scene_blocks.append(block)

    report: dict = {"provenance": provenance, "scenes": scene_blocks}

    # segmentation aggregate over scenes that had ground truth
    seg_rows = [
        b["segmentation"]
        for b in scene_blocks
        if b["status"] == "ok" and "skipped" not in b.get("segmentation", {})
    ]
    if seg_rows:
        report["segmentation"] = {
            "n_scenes": len(seg_rows),
            "ap50_mean": sum(r["ap50"] for r in seg_rows) / len(seg_rows),
            "miou_mean": sum(r["miou"] for r in seg_rows) / len(seg_rows),
        }
    else:
        report["segmentation"] = {"skipped": "no scene had ground-truth rooms"}

    # classification aggregate: pool samples across scenes
    if classification_pool:
        predicted, truth, scores = [], [], []
        label_set: set[str] = set()
        for p, t, s, labels in classification_pool:
            predicted.extend(p)
            truth.extend(t)
            scores.extend(s)
            label_set.update(labels)
        cls = classification_metrics(predicted, truth, sorted(label_set), scores=scores)
        report["classification"] = {
            "n_rooms": len(predicted),
            "precision": cls.precision,
            "recall": cls.recall,
            "f1_weighted": cls.f1_weighted,
            "map": cls.map,
            "per_class": cls.per_class,
        }
    else:
        report["classification"] = {"skipped": "no scene had labels and embeddings"}

    # selection
    calibration_rel = manifest.get("calibration_records")
    if not all_selection_records:
        report["selection"] = {"skipped": "no instructions scored"}
    elif calibration_rel is None:
        report["selection"] = {"skipped": "no calibration records"}
    else:
        calibration_path = base_dir / calibration_rel
        provenance["inputs"][str(calibration_rel)] = _sha256(calibration_path)
        block = _selection_report(all_selection_records, config, calibration_path, out_dir)
        report["selection"] = block
        _write_selection_csv(block, out_dir / "selection.csv")
        figures.save_rmiou_bars(block["average"], out_dir / "rmiou_by_method.png")

    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")

    exit_code = 0 if n_failed == 0 else 1
    return report, exit_code


# ---------------------------------------------------------------------------
# Truth files for `evaluate`: record schema where only identity and the true
# room sets are required.
# ---------------------------------------------------------------------------


def load_truth(path) -> dict[tuple[str, str], frozenset[str]]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise SchemaError(f"{path}: expected an object with a 'records' list")
    truth = {}
    for i, entry in enumerate(doc["records"]):
        try:
            key = (str(entry["instruction_id"]), str(entry.get("scene_id", "")))
            rooms = frozenset(str(r) for r in entry["true_rooms"])
            if not rooms:
                raise ValueError("empty true_rooms")
            truth[key] = rooms
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: record {i}: {exc}") from exc
    return truth


def evaluate_methods(
    sets_by_method: dict[str, list], truth: dict[tuple[str, str], frozenset[str]]
) -> dict:
    """Table-style evaluation: per-instruction RmIoU per method plus averages.

    Per-instruction values average the Jaccard over every scene the
    instruction was answered in; the bottom-line average is the mean over
    all (instruction, scene) pairs.
    """
    rows: dict[str, dict] = {}
    averages: dict[str, float] = {}
    for method, sets in sets_by_method.items():
        ious = []
        for s in sets:
            key = (s.instruction_id, s.scene_id)
            if key not in truth:
                raise SchemaError(
                    f"method {method!r}: no truth entry for instruction "
                    f"{s.instruction_id!r} in scene {s.scene_id!r}"
                )
            iou = conformal.set_iou(s.rooms, truth[key])
            ious.append(iou)
            row = rows.setdefault(
                s.instruction_id, {"instruction_id": s.instruction_id, "iou": {}, "gt": {}}
            )
            row["iou"].setdefault(method, []).append(iou)
            row["gt"][s.scene_id] = sorted(truth[key])
        averages[method] = sum(ious) / len(ious) if ious else 0.0
    table = []
    for iid in sorted(rows):
        row = rows[iid]
        table.append(
            {
                "instruction_id": iid,
                "gt_rooms": sorted({r for rooms in row["gt"].values() for r in rooms}),
                "rm_iou": {
                    m: sum(vals) / len(vals) for m, vals in sorted(row["iou"].items())
                },
            }
        )
    return {"per_instruction": table, "average": averages}


def write_evaluation(result: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = sorted(result["average"])
    with open(out_dir / "evaluation.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "evaluation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instruction", "gt_rooms", *methods])
        for row in result["per_instruction"]:
            writer.writerow(
                [
                    row["instruction_id"],
                    "|".join(row["gt_rooms"]),
                    *[f"{row['rm_iou'].get(m, float('nan')):.6f}" for m in methods],
                ]
            )
        writer.writerow(["average", "", *[f"{result['average'][m]:.6f}" for m in methods]])
    figures.save_rmiou_bars(result["average"], out_dir / "rmiou_by_method.png")
