import json

import numpy as np
import pytest

from roomscout.grids import GridSpec, OccupancyGrid
from roomscout.segmentation import (
    RoomMask,
    RoomPolygon,
    SchemaError,
    export_room_polygons,
    import_room_polygons,
    interpolated_average_precision,
    mask_iou,
    rasterize_polygon,
    segment_rooms_baseline,
    segmentation_metrics,
)


def combined_from_walls(walls: np.ndarray) -> OccupancyGrid:
    spec = GridSpec((0.0, 0.0), 1.0, walls.shape[1], walls.shape[0])
    return OccupancyGrid(spec, walls.astype(float), "combined")


def rect(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


class TestBaselineSegmenter:
    def test_split_grid_two_rooms(self):
        walls = np.zeros((20, 20), dtype=bool)
        walls[0, :] = walls[-1, :] = True
        walls[:, 0] = walls[:, -1] = True
        walls[:, 10] = True
        rooms = segment_rooms_baseline(combined_from_walls(walls), min_room_cells=4)
        assert len(rooms) == 2

    def test_all_zero_map_empty(self):
        walls = np.zeros((10, 10), dtype=bool)
        assert segment_rooms_baseline(combined_from_walls(walls)) == []

    def test_four_rooms_high_iou(self):
        # 21x21 map: outer ring plus a cross wall at row/col 10
        walls = np.zeros((21, 21), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        walls[10, :] = True
        walls[:, 10] = True
        combined = combined_from_walls(walls)
        rooms = segment_rooms_baseline(combined, min_room_cells=4)
        assert len(rooms) == 4
        drawn = [
            RoomPolygon("a", rect(1, 1, 10, 10)),
            RoomPolygon("b", rect(11, 1, 20, 10)),
            RoomPolygon("c", rect(1, 11, 10, 20)),
            RoomPolygon("d", rect(11, 11, 20, 20)),
        ]
        for g in drawn:
            g_mask = rasterize_polygon(g, combined.spec)
            best = max(
                mask_iou(rasterize_polygon(r, combined.spec), g_mask) for r in rooms
            )
            assert best >= 0.9

    def test_exterior_component_discarded(self):
        # enclosure placed away from the grid edge: outside free space touches
        # the edge and must not become a room
        walls = np.zeros((20, 20), dtype=bool)
        walls[3, 3:15] = walls[14, 3:15] = True
        walls[3:15, 3] = walls[3:15, 14] = True
        rooms = segment_rooms_baseline(combined_from_walls(walls), min_room_cells=4)
        assert len(rooms) == 1

    def test_one_cell_door_gap_closed(self):
        walls = np.zeros((20, 20), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        walls[:, 10] = True
        walls[9, 10] = False  # one-cell doorway
        rooms = segment_rooms_baseline(combined_from_walls(walls), min_room_cells=4)
        assert len(rooms) == 2

    def test_min_room_cells_filter(self):
        walls = np.zeros((20, 20), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        walls[:, 4] = True  # left room much smaller than right
        small = np.count_nonzero(~walls[1:-1, 1:4])
        rooms = segment_rooms_baseline(combined_from_walls(walls), min_room_cells=small + 1)
        assert len(rooms) == 1

    def test_polygon_matches_component_even_for_l_shape(self):
        walls = np.zeros((16, 16), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        # carve an L: block the upper-right quadrant entirely
        walls[8:, 8:] = True
        combined = combined_from_walls(walls)
        rooms = segment_rooms_baseline(combined, min_room_cells=4)
        assert len(rooms) == 1
        mask = rasterize_polygon(rooms[0], combined.spec)
        free_interior = ~walls
        free_interior[0, :] = free_interior[-1, :] = False
        free_interior[:, 0] = free_interior[:, -1] = False
        assert np.array_equal(mask.cells, free_interior)

    def test_interiors_pairwise_disjoint(self):
        walls = np.zeros((21, 21), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        walls[10, :] = True
        walls[:, 10] = True
        combined = combined_from_walls(walls)
        rooms = segment_rooms_baseline(combined, min_room_cells=4)
        masks = [rasterize_polygon(r, combined.spec).cells for r in rooms]
        for i in range(len(masks)):
            for j in range(i + 1, len(masks)):
                assert not np.any(masks[i] & masks[j])


class TestRasterize:
    SPEC = GridSpec((0.0, 0.0), 1.0, 4, 4)

    def test_aligned_square_exact_cells(self):
        mask = rasterize_polygon(RoomPolygon("sq", rect(1, 1, 3, 3)), self.SPEC)
        assert mask.area() == 4
        assert np.array_equal(np.argwhere(mask.cells), [[1, 1], [1, 2], [2, 1], [2, 2]])

    def test_triangle_against_point_oracle(self):
        tri = RoomPolygon("tri", ((0, 0), (3, 0), (0, 3)))
        mask = rasterize_polygon(tri, self.SPEC)

        def inside(px, py, verts):
            hit = False
            n = len(verts)
            for i in range(n):
                x1, y1 = verts[i]
                x2, y2 = verts[(i + 1) % n]
                if (y1 > py) != (y2 > py):
                    x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                    if px < x_at:
                        hit = not hit
            return hit

        for r in range(4):
            for c in range(4):
                assert mask.cells[r, c] == inside(c + 0.5, r + 0.5, tri.vertices)

    def test_sliver_raises_empty_mask(self):
        sliver = RoomPolygon("sliver", ((0.6, 0.0), (0.65, 0.0), (0.65, 4.0), (0.6, 4.0)))
        with pytest.raises(ValueError, match="empty mask"):
            rasterize_polygon(sliver, self.SPEC)

    def test_fully_outside_raises(self):
        far = RoomPolygon("far", rect(10, 10, 12, 12))
        with pytest.raises(ValueError, match="empty mask"):
            rasterize_polygon(far, self.SPEC)


class TestMaskIoU:
    SPEC = GridSpec((0.0, 0.0), 1.0, 4, 4)

    def _mask(self, cells_rc):
        cells = np.zeros((4, 4), dtype=bool)
        for r, c in cells_rc:
            cells[r, c] = True
        return RoomMask(self.SPEC, cells)

    def test_identity_and_disjoint(self):
        a = self._mask([(0, 0), (0, 1)])
        assert mask_iou(a, a) == 1.0
        b = self._mask([(3, 3)])
        assert mask_iou(a, b) == 0.0

    def test_partial_overlap(self):
        a = self._mask([(0, 0), (0, 1), (1, 0), (1, 1)])
        b = self._mask([(0, 1), (1, 1), (0, 2), (1, 2)])
        assert mask_iou(a, b) == pytest.approx(1 / 3)

    def test_symmetry_and_size_bound(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            cells_a = rng.random((4, 4)) < 0.5
            cells_b = rng.random((4, 4)) < 0.5
            if not cells_a.any() or not cells_b.any():
                continue
            a = RoomMask(self.SPEC, cells_a)
            b = RoomMask(self.SPEC, cells_b)
            iou = mask_iou(a, b)
            assert iou == mask_iou(b, a)
            assert iou <= min(a.area(), b.area()) / max(a.area(), b.area())

    def test_spec_mismatch(self):
        other = GridSpec((0.0, 0.0), 0.5, 4, 4)
        a = self._mask([(0, 0)])
        b = RoomMask(other, np.eye(4, dtype=bool))
        with pytest.raises(ValueError):
            mask_iou(a, b)


class TestSegmentationMetrics:
    SPEC = GridSpec((0.0, 0.0), 1.0, 40, 12)

    def test_perfect_predictions(self):
        gt = [RoomPolygon("g1", rect(0, 0, 10, 10)), RoomPolygon("g2", rect(20, 0, 30, 10))]
        report = segmentation_metrics(list(gt), gt, self.SPEC)
        assert report.ap50 == 1.0
        assert report.miou == 1.0

    def test_no_predictions(self):
        gt = [RoomPolygon("g1", rect(0, 0, 10, 10))]
        report = segmentation_metrics([], gt, self.SPEC)
        assert report.ap50 == 0.0 and report.miou == 0.0

    def test_hand_computed_pr_fixture(self):
        # p1 covers 60% of g1 (TP), p2 covers 30% of g2 (FP at the 0.5 bar)
        gt = [RoomPolygon("g1", rect(0, 0, 10, 10)), RoomPolygon("g2", rect(20, 0, 30, 10))]
        pred = [
            RoomPolygon("p1", rect(0, 0, 10, 6)),
            RoomPolygon("p2", rect(20, 0, 30, 3)),
        ]
        report = segmentation_metrics(pred, gt, self.SPEC)
        # ranked [p1 TP, p2 FP]: precision (1, 1/2), recall (1/2, 1/2)
        # interpolated area = 0.5 * 1.0
        assert report.ap50 == pytest.approx(0.5, abs=1e-9)
        assert report.miou == pytest.approx((0.6 + 0.3) / 2, abs=1e-9)
        assert dict((p, g) for p, g, _ in report.matching) == {"p1": "g1", "p2": "g2"}

    def test_permutation_invariance(self):
        gt = [RoomPolygon("g1", rect(0, 0, 10, 10)), RoomPolygon("g2", rect(20, 0, 30, 10))]
        pred = [
            RoomPolygon("p1", rect(0, 0, 10, 6)),
            RoomPolygon("p2", rect(20, 0, 30, 7)),
        ]
        a = segmentation_metrics(pred, gt, self.SPEC)
        b = segmentation_metrics(pred[::-1], gt[::-1], self.SPEC)
        assert a.ap50 == b.ap50 and a.miou == b.miou and a.matching == b.matching

    def test_duplicate_perfect_prediction_does_not_lower_miou(self):
        gt = [RoomPolygon("g1", rect(0, 0, 10, 10)), RoomPolygon("g2", rect(20, 0, 30, 10))]
        base = segmentation_metrics(list(gt), gt, self.SPEC)
        dup = list(gt) + [RoomPolygon("p9", rect(0, 0, 10, 10))]
        more = segmentation_metrics(dup, gt, self.SPEC)
        assert more.miou >= base.miou

    def test_empty_gt_raises(self):
        with pytest.raises(ValueError):
            segmentation_metrics([], [], self.SPEC)


def test_average_precision_bounds():
    assert interpolated_average_precision([], 3) == 0.0
    assert interpolated_average_precision([True, True], 2) == 1.0
    assert interpolated_average_precision([False, False], 2) == 0.0
    rng = np.random.default_rng(41)
    for _ in range(50):
        flags = (rng.random(8) < 0.5).tolist()
        ap = interpolated_average_precision(flags, max(1, sum(flags)))
        assert 0.0 <= ap <= 1.0


class TestPolygonJson:
    def test_round_trip(self, tmp_path):
        rooms = [
            RoomPolygon("r1", rect(0, 0, 2, 2), 0.75, label="kitchen"),
            RoomPolygon("r2", ((3, 3), (5.5, 3), (4, 6)), 1.0),
        ]
        path = tmp_path / "rooms.json"
        export_room_polygons(rooms, path)
        back = import_room_polygons(path)
        assert [r.room_id for r in back] == ["r1", "r2"]
        assert back[0].vertices == rooms[0].vertices
        assert back[1].vertices == rooms[1].vertices
        assert back[0].label == "kitchen"
        assert back[0].confidence == 0.75

    def test_two_vertices_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"rooms": [{"id": "r1", "vertices": [[0, 0], [1, 1]]}]}))
        with pytest.raises(SchemaError, match="r1"):
            import_room_polygons(path)

    def test_self_intersection_rejected(self, tmp_path):
        bowtie = [[0, 0], [2, 2], [2, 0], [0, 2]]
        path = tmp_path / "bow.json"
        path.write_text(json.dumps({"rooms": [{"id": "bow", "vertices": bowtie}]}))
        with pytest.raises(SchemaError, match="bow"):
            import_room_polygons(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError, match="malformed"):
            import_room_polygons(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "dup.json"
        room = {"id": "x", "vertices": [[0, 0], [1, 0], [0, 1]]}
        path.write_text(json.dumps({"rooms": [room, room]}))
        with pytest.raises(SchemaError, match="duplicate"):
            import_room_polygons(path)
