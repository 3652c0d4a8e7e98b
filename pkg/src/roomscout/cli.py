"""Command-line entry point.

Subcommands: borders, segment, plan-views, score, calibrate, select,
evaluate, pipeline, synth (plus emb-echo, a small EMB1 round-trip utility).
Exit codes: 0 success, 1 partial failure (some scenes failed), 2 invalid
input or configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, conformal, figures
from .config import PipelineConfig
from .emb_io import read_emb1, write_emb1
from .grids import GridSpec, build_combined_map, read_grid, write_grid, write_pgm
from .pipeline import (
    evaluate_methods,
    load_truth,
    room_representatives,
    run_pipeline,
    write_evaluation,
)
from .pointcloud_io import read_point_cloud
from .scoring import Embedding, room_scores
from .segmentation import (
    SchemaError,
    export_room_polygons,
    import_room_polygons,
    segment_rooms_baseline,
)
from .viewplan import export_poses, plan_camera_poses, room_box_from_polygon

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


def _parse_alpha_grid(text: str) -> list[float]:
    """Grid spec: 'default', comma-separated values, or 'start:stop:step'."""
    if text == "default":
        return conformal.default_alpha_grid()
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        values = []
        v = start
        while v <= stop + 1e-12:
            values.append(round(v, 10))
            v += step
        return values
    return [float(t) for t in text.split(",") if t.strip()]


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--cell-size", dest="cell_size", type=float)
    parser.add_argument("--n-slices", dest="n_slices", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--delta-b", dest="delta_b", type=float)
    parser.add_argument("--delta-t", dest="delta_t", type=float)
    parser.add_argument("--merge-fraction", dest="merge_fraction", type=float)
    parser.add_argument("--n-views", dest="n_views", type=int)
    parser.add_argument("--k-reps", dest="k_reps", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--alpha-grid", dest="alpha_grid", type=_parse_alpha_grid)
    parser.add_argument("--method", choices=["acp", "cp"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "cell_size", "n_slices", "gamma", "delta_b", "delta_t", "merge_fraction",
            "n_views", "k_reps", "temperature", "alpha", "alpha_grid", "seed",
        )
    }
    if getattr(args, "method", None):
        overrides["methods"] = [args.method]
    return cfg.updated(overrides, source="command line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roomscout",
        description="Room recognition pipeline: floor maps, segmentation, "
        "view planning, embedding scoring, and conformal room selection.",
    )
    parser.add_argument("--version", action="version", version=f"roomscout {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("borders", help="point cloud -> border-enhanced combined map")
    p.add_argument("--cloud", type=Path, required=True)
    _add_common_flags(p)

    p = sub.add_parser("segment", help="combined map (or cloud) -> room polygons")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", type=Path, help="grid sidecar stem (from `borders`)")
    src.add_argument("--cloud", type=Path)
    p.add_argument("--wall-threshold", dest="wall_threshold", type=float)
    p.add_argument("--min-room-area", dest="min_room_area", type=float)
    _add_common_flags(p)

    p = sub.add_parser("plan-views", help="room polygons -> elliptical camera poses")
    p.add_argument("--rooms", type=Path, required=True)
    p.add_argument("--z-center", dest="z_center", type=float, default=1.5,
                   help="camera height in meters (default 1.5)")
    _add_common_flags(p)

    p = sub.add_parser("score", help="view + instruction embeddings -> score records")
    p.add_argument("--views", type=Path, required=True, help="EMB1 view embeddings")
    p.add_argument("--texts", type=Path, required=True, help="EMB1 instruction embeddings")
    p.add_argument("--scene-id", dest="scene_id", default="")
    _add_common_flags(p)

    p = sub.add_parser("calibrate", help="labeled records -> conformal quantile artifact")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--validation", type=Path, help="validation records for the alpha grid search")
    p.add_argument("--softmax-scores", dest="softmax_scores", action="store_true",
                   help="treat record scores as raw similarities and softmax them")
    _add_common_flags(p)

    p = sub.add_parser("select", help="score records + calibration artifact -> prediction sets")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--calibration", type=Path, required=True)
    _add_common_flags(p)

    p = sub.add_parser("evaluate", help="prediction sets vs truth -> RmIoU report")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--sets", action="append", required=True, metavar="NAME=PATH",
                   help="prediction-set file per method; repeatable")
    _add_common_flags(p)

    p = sub.add_parser("pipeline", help="run the full flow over a scene manifest")
    p.add_argument("--manifest", type=Path, required=True)
    _add_common_flags(p)

    p = sub.add_parser("synth", help="generate synthetic workspaces")
    p.add_argument("--kind", choices=["demo", "benchmark"], default="demo")
    _add_common_flags(p)

    p = sub.add_parser("emb-echo", help="read an EMB1 file and re-serialize it")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_borders(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    cloud = read_point_cloud(args.cloud)
    spec = GridSpec.from_cloud(cloud, cfg.cell_size)
    combined, density, border, selection = build_combined_map(cloud, spec, cfg.border_params())
    for name, grid in (("combined", combined), ("density", density), ("border", border)):
        write_grid(grid, args.out / name)
    write_pgm(combined, args.out / "combined.pgm")
    figures.save_grid_figure(combined, args.out / "combined.png")
    summary = {
        "n_points": len(cloud),
        "width": spec.width,
        "height": spec.height,
        "selected_slices": list(selection.selected_indices),
        "reference_count": selection.reference_count,
    }
    with open(args.out / "borders.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"combined map {spec.width}x{spec.height}, "
          f"{selection.M} border slices -> {args.out}")
    return EXIT_OK


def _cmd_segment(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.grid:
        combined = read_grid(args.grid)
    else:
        cloud = read_point_cloud(args.cloud)
        spec = GridSpec.from_cloud(cloud, cfg.cell_size)
        combined, _, _, _ = build_combined_map(cloud, spec, cfg.border_params())
    wall_threshold = args.wall_threshold if args.wall_threshold is not None else cfg.wall_threshold
    if args.min_room_area is not None:
        cfg = cfg.updated({"min_room_area": args.min_room_area})
    rooms = segment_rooms_baseline(combined, wall_threshold, cfg.min_room_cells())
    export_room_polygons(rooms, args.out / "rooms.json")
    print(f"{len(rooms)} rooms -> {args.out / 'rooms.json'}")
    return EXIT_OK


def _cmd_plan_views(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    rooms = import_room_polygons(args.rooms)
    for room in rooms:
        poses = plan_camera_poses(room_box_from_polygon(room, args.z_center), cfg.n_views)
        export_poses(room.room_id, poses, args.out / f"{room.room_id}.json")
    print(f"{len(rooms)} rooms x {cfg.n_views} poses -> {args.out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    reps = room_representatives(args.views, cfg)
    rep_list = [reps[rid] for rid in sorted(reps)]
    matrix, ids = read_emb1(args.texts)
    pairs = []
    for iid, row in zip(ids, matrix):
        dist = room_scores(
            Embedding(row), rep_list, temperature=cfg.temperature,
            instruction_id=iid, aggregation=cfg.aggregation,
        )
        pairs.append((dist, args.scene_id))
    conformal.write_distributions(pairs, args.out / "scores.json")
    print(f"{len(pairs)} instructions x {len(rep_list)} rooms -> {args.out / 'scores.json'}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    method = args.method or "acp"
    records = conformal.load_score_records(
        args.records, apply_softmax=args.softmax_scores, temperature=cfg.temperature
    )
    if method == "acp":
        cal = conformal.build_calibration_set(records)
    else:
        cal = conformal.cp_calibration_set(records)

    alpha = cfg.alpha
    table = None
    if args.alpha_grid:
        if not args.validation:
            raise SchemaError("--alpha-grid requires --validation records")
        validation = conformal.load_score_records(
            args.validation, apply_softmax=args.softmax_scores, temperature=cfg.temperature
        )
        alpha, table = conformal.optimize_alpha(validation, cal, args.alpha_grid, method=method)
    q_hat = conformal.conformal_quantile(cal, alpha)

    artifact = {
        "method": method,
        "alpha": alpha,
        "q_hat": q_hat,
        "n_calibration": cal.n,
        "alpha_table": [[a, v] for a, v in table] if table else None,
    }
    with open(args.out / "calibration.json", "w", encoding="utf-8") as fh:
        json.dump(artifact, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if table:
        import csv as _csv

        with open(args.out / "alpha_sweep.csv", "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["alpha", "mean_iou"])
            for a, v in table:
                writer.writerow([a, f"{v:.6f}"])
        figures.save_alpha_sweep({method: table}, args.out / "alpha_sweep.png")
    print(f"{method}: alpha={alpha} q_hat={q_hat:.6f} (n={cal.n}) -> {args.out}")
    return EXIT_OK


def _cmd_select(args) -> int:
    cfg = _config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    if not args.calibration.exists():
        raise SchemaError(f"{args.calibration}: no calibration artifact; calibrate first")
    with open(args.calibration, encoding="utf-8") as fh:
        artifact = json.load(fh)
    method = artifact.get("method")
    if method not in ("acp", "cp"):
        raise SchemaError(f"{args.calibration}: unknown method {method!r}")
    if args.method and args.method != method:
        raise SchemaError(
            f"method mismatch: artifact is {method!r}, requested {args.method!r}"
        )
    q_hat = float(artifact["q_hat"])
    alpha = float(artifact["alpha"])
    pairs = conformal.load_distributions(args.scores)
    if method == "acp":
        sets = [conformal.acp_prediction_set(d, q_hat, alpha, scene_id=sid) for d, sid in pairs]
    else:
        sets = [conformal.cp_prediction_set(d, q_hat, alpha, scene_id=sid) for d, sid in pairs]
    out_path = args.out / f"sets_{method}.json"
    conformal.export_prediction_sets(sets, out_path)
    sizes = [s.k for s in sets]
    print(f"{len(sets)} prediction sets (mean size {sum(sizes)/len(sizes):.2f}) -> {out_path}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    truth = load_truth(args.truth)
    sets_by_method = {}
    for spec in args.sets:
        if "=" not in spec:
            raise SchemaError(f"--sets expects NAME=PATH, got {spec!r}")
        name, _, path = spec.partition("=")
        sets_by_method[name] = conformal.import_prediction_sets(path)
    result = evaluate_methods(sets_by_method, truth)
    write_evaluation(result, args.out)
    averages = " ".join(f"{m}={v:.4f}" for m, v in sorted(result["average"].items()))
    print(f"average RmIoU: {averages} -> {args.out}")
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    report, exit_code = run_pipeline(args.manifest, args.out, cfg)
    n_scenes = len(report["scenes"])
    n_failed = sum(1 for s in report["scenes"] if s["status"] == "failed")
    print(f"{n_scenes - n_failed}/{n_scenes} scenes ok -> {args.out / 'report.json'}")
    for block in report["scenes"]:
        if block["status"] == "failed":
            print(f"  scene {block['scene_id']} failed: {block['reason']}", file=sys.stderr)
    return exit_code


def _cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    from . import synth

    if args.kind == "demo":
        synth.write_demo_workspace(args.out, cfg.seed)
        print(f"demo workspace (4-room scene, mock embeddings) -> {args.out}")
    else:
        synth.write_benchmark_workspace(args.out, cfg.seed)
        print(f"mixed-scale benchmark records -> {args.out}")
    return EXIT_OK


def _cmd_emb_echo(args) -> int:
    matrix, ids = read_emb1(args.input)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_emb1(args.output, matrix, ids)
    print(f"{len(ids)} rows x {matrix.shape[1]} dims -> {args.output}")
    return EXIT_OK


_COMMANDS = {
    "borders": _cmd_borders,
    "segment": _cmd_segment,
    "plan-views": _cmd_plan_views,
    "score": _cmd_score,
    "calibrate": _cmd_calibrate,
    "select": _cmd_select,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
    "synth": _cmd_synth,
    "emb-echo": _cmd_emb_echo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
