"""Room regions from a combined floor map, plus segmentation scoring.

The geometric baseline thresholds walls on the combined map, closes one-cell
gaps, flood-fills interior free space, and traces each surviving component's
outer boundary into a polygon. External detector outputs enter through the
room-polygon JSON schema instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from shapely.geometry import Polygon as ShapelyPolygon

from .grids import GridSpec, OccupancyGrid


class SchemaError(ValueError):
    """A JSON document failed the schema it was read against."""


@dataclass
class RoomPolygon:
    room_id: str
    vertices: tuple[tuple[float, float], ...]
    confidence: float = 1.0
    label: str | None = None

    def __post_init__(self):
        self.vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(self.vertices) < 3:
            raise ValueError(f"room {self.room_id}: polygon needs at least 3 vertices")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"room {self.room_id}: confidence outside [0, 1]")
        shp = ShapelyPolygon(self.vertices)
        if not shp.is_valid or shp.area <= 0.0:
            raise ValueError(f"room {self.room_id}: polygon is self-intersecting or degenerate")


@dataclass
class RoomMask:
    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.spec.height, self.spec.width):
            raise ValueError("mask shape does not match spec")
        if not cells.any():
            raise ValueError("empty mask")
        self.cells = cells

    def area(self) -> int:
        return int(np.count_nonzero(self.cells))


@dataclass
class SegmentationReport:
    ap50: float
    miou: float
    per_room_iou: dict[str, float]
    matching: list[tuple[str, str, float]]


# ---------------------------------------------------------------------------
# Baseline segmenter
# ---------------------------------------------------------------------------


def _trace_component_boundary(mask: np.ndarray) -> list[tuple[int, int]]:
    """Outer boundary of a cell set as (col, row) corner coordinates, CCW.

    Collects each exposed cell edge as a directed segment with the interior on
    its left, then chains segments into loops; the outer loop is the one with
    the largest enclosed area. Pinch vertices (diagonal self-touches) are
    resolved by always taking the sharpest right turn.
    """
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    rows, cols = np.nonzero(mask)
    cellset = set(zip(rows.tolist(), cols.tolist()))
    for r, c in cellset:
        if (r - 1, c) not in cellset:
            add((c, r), (c + 1, r))
        if (r, c + 1) not in cellset:
            add((c + 1, r), (c + 1, r + 1))
        if (r + 1, c) not in cellset:
            add((c + 1, r + 1), (c, r + 1))
        if (r, c - 1) not in cellset:
            add((c, r + 1), (c, r))

    loops = []
    while edges:
        start = min(edges)
        loop = [start]
        prev_dir = None
        current = start
        while True:
            outgoing = edges[current]
            if len(outgoing) == 1 or prev_dir is None:
                nxt = outgoing[0]
            else:
                # sharpest right turn relative to the incoming direction
                def turn(cand):
                    dx, dy = cand[0] - current[0], cand[1] - current[1]
                    cross = prev_dir[0] * dy - prev_dir[1] * dx
                    dot = prev_dir[0] * dx + prev_dir[1] * dy
                    return (cross, -dot)

                nxt = min(outgoing, key=turn)
            outgoing.remove(nxt)
            if not outgoing:
                del edges[current]
            prev_dir = (nxt[0] - current[0], nxt[1] - current[1])
            current = nxt
            if current == start:
                break
            loop.append(current)
        loops.append(loop)

    def loop_area(loop):
        area = 0.0
        for (x1, y1), (x2, y2) in zip(loop, loop[1:] + loop[:1]):
            area += x1 * y2 - x2 * y1
        return area / 2.0

    outer = max(loops, key=loop_area)

    # drop collinear intermediate corners
    simplified = []
    n = len(outer)
    for i in range(n):
        px, py = outer[i - 1]
        cx, cy = outer[i]
        nx, ny = outer[(i + 1) % n]
        if (cx - px) * (ny - cy) != (cy - py) * (nx - cx):
            simplified.append(outer[i])
    return simplified


def segment_rooms_baseline(
    combined: OccupancyGrid, wall_threshold: float = 0.3, min_room_cells: int = 1
) -> list[RoomPolygon]:
    """Detect rooms on a combined map by flood-filling between thresholded walls.

    Components smaller than min_room_cells and the unbounded exterior (any
    free component touching the grid edge) are discarded. Returns polygons
    with confidence 1.0, ordered by their lowest cell index; no interior
    component at all yields an empty list.
    """
    if combined.kind != "combined":
        raise ValueError("expected a combined grid")
    walls = combined.cells >= wall_threshold
    # closing with an outside-counts-as-wall erosion, so edge walls survive
    structure = np.ones((3, 3), dtype=bool)
    walls = ndimage.binary_erosion(
        ndimage.binary_dilation(walls, structure), structure, border_value=1
    )
    free = ~walls
    labels, n_components = ndimage.label(free, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool))

    edge_labels = set(labels[0, :]) | set(labels[-1, :]) | set(labels[:, 0]) | set(labels[:, -1])
    spec = combined.spec
    rooms = []
    for lbl in range(1, n_components + 1):
        if lbl in edge_labels:
            continue
        mask = labels == lbl
        if np.count_nonzero(mask) < min_room_cells:
            continue
        corners = _trace_component_boundary(mask)
        vertices = tuple(
            (spec.origin[0] + cx * spec.cell_size, spec.origin[1] + cy * spec.cell_size)
            for cx, cy in corners
        )
        rooms.append((np.argmax(mask), vertices))
    rooms.sort(key=lambda item: item[0])
    return [
        RoomPolygon(room_id=f"room_{i:02d}", vertices=verts, confidence=1.0)
        for i, (_, verts) in enumerate(rooms)
    ]


# ---------------------------------------------------------------------------
# Rasterization and IoU
# ---------------------------------------------------------------------------


def _even_odd_inside(xs: np.ndarray, ys: np.ndarray, vertices) -> np.ndarray:
    """Even-odd point-in-polygon test for flat coordinate arrays."""
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        crosses = (y1 > ys) != (y2 > ys)
        if not crosses.any():
            continue
        x_at = x1 + (ys[crosses] - y1) * (x2 - x1) / (y2 - y1)
        hit = np.zeros(xs.shape, dtype=bool)
        hit[crosses] = xs[crosses] < x_at
        inside ^= hit
    return inside


def rasterize_polygon(poly: RoomPolygon, spec: GridSpec) -> RoomMask:
    """Occupy every cell whose center lies inside the polygon (even-odd rule)."""
    cols, rows = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    xs = spec.origin[0] + (cols.ravel() + 0.5) * spec.cell_size
    ys = spec.origin[1] + (rows.ravel() + 0.5) * spec.cell_size
    inside = _even_odd_inside(xs, ys, poly.vertices)
    cells = inside.reshape(spec.height, spec.width)
    if not cells.any():
        raise ValueError("empty mask")
    return RoomMask(spec, cells)


def mask_iou(a: RoomMask, b: RoomMask) -> float:
    if a.spec != b.spec:
        raise ValueError("masks must share one GridSpec")
    inter = np.count_nonzero(a.cells & b.cells)
    union = np.count_nonzero(a.cells | b.cells)
    return inter / union


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def interpolated_average_precision(tp_flags: list[bool], n_positive: int) -> float:
    """Area under the interpolated precision-recall curve of a ranked list."""
    if n_positive == 0 or not tp_flags:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    ranks = np.arange(1, len(tp_flags) + 1, dtype=np.float64)
    precision = tp / ranks
    recall = tp / n_positive
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre[1:]))


def segmentation_metrics(
    pred: list[RoomPolygon], gt: list[RoomPolygon], spec: GridSpec
) -> SegmentationReport:
    """AP50 and mIoU of predicted rooms against ground truth.

    Predictions are ranked by descending confidence (ties by ascending id)
    and each greedily takes the highest-IoU still-unmatched ground-truth
    room; only matches with IoU >= 0.5 count toward AP50, and zero-overlap
    predictions stay unmatched. mIoU averages over ground-truth rooms, with
    unmatched rooms contributing 0.
    """
    if not gt:
        raise ValueError("ground truth must be non-empty")
    gt_masks = {g.room_id: rasterize_polygon(g, spec) for g in gt}
    ranked = sorted(pred, key=lambda p: (-p.confidence, p.room_id))

    matching: list[tuple[str, str, float]] = []
    matched_gt: set[str] = set()
    tp_flags: list[bool] = []
    gt_iou = {g.room_id: 0.0 for g in gt}
    for p in ranked:
        p_mask = rasterize_polygon(p, spec)
        best_id, best_iou = None, 0.0
        for g in sorted(gt_masks):
            if g in matched_gt:
                continue
            iou = mask_iou(p_mask, gt_masks[g])
            if iou > best_iou:
                best_id, best_iou = g, iou
        if best_id is not None:
            matched_gt.add(best_id)
            matching.append((p.room_id, best_id, best_iou))
            gt_iou[best_id] = best_iou
            tp_flags.append(best_iou >= 0.5)
        else:
            tp_flags.append(False)

    ap50 = interpolated_average_precision(tp_flags, len(gt))
    miou = sum(gt_iou.values()) / len(gt)
    return SegmentationReport(ap50=ap50, miou=miou, per_room_iou=gt_iou, matching=matching)


# ---------------------------------------------------------------------------
# Room-polygon JSON schema
# ---------------------------------------------------------------------------


def export_room_polygons(rooms: list[RoomPolygon], path) -> None:
    doc = {
        "rooms": [
            {
                "id": r.room_id,
                "confidence": r.confidence,
                "vertices": [[x, y] for x, y in r.vertices],
                **({"label": r.label} if r.label is not None else {}),
            }
            for r in rooms
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def import_room_polygons(path) -> list[RoomPolygon]:
    """Read rooms from the polygon JSON schema, validating each entry."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("rooms"), list):
        raise SchemaError(f"{path}: expected an object with a 'rooms' list")
    rooms = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["rooms"]):
        room_id = str(entry.get("id", f"<index {i}>"))
        if room_id in seen:
            raise SchemaError(f"{path}: duplicate room id {room_id!r}")
        seen.add(room_id)
        try:
            rooms.append(
                RoomPolygon(
                    room_id=room_id,
                    vertices=tuple((float(x), float(y)) for x, y in entry["vertices"]),
                    confidence=float(entry.get("confidence", 1.0)),
                    label=entry.get("label"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: room {room_id!r}: {exc}") from exc
    return rooms
