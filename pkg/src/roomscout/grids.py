"""Border-enhanced 2D floor maps from 3D indoor point clouds.

The map construction runs in five steps: slice the cloud into z-bands,
project each band onto a binary occupancy grid, keep only the slices whose
occupied area sits inside a wall-plausible band, merge the keepers into a
wall-consensus border map, and blend that border map with a point-density
map of the full cloud.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GRID_KINDS = ("binary_slice", "border", "density", "combined")


@dataclass(frozen=True)
class GridSpec:
    """Raster geometry: world origin (x_min, y_min), cell size in meters, cell counts."""

    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell")

    @property
    def x_max(self) -> float:
        return self.origin[0] + self.width * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin[1] + self.height * self.cell_size

    @classmethod
    def from_bounds(cls, x_min, y_min, x_max, y_max, cell_size) -> "GridSpec":
        """Smallest grid at the given resolution covering the bounding box."""
        width = max(1, int(np.ceil((x_max - x_min) / cell_size)))
        height = max(1, int(np.ceil((y_max - y_min) / cell_size)))
        # ceil() on the float ratio can land one cell short; grow until covered
        while x_min + width * cell_size < x_max:
            width += 1
        while y_min + height * cell_size < y_max:
            height += 1
        return cls((float(x_min), float(y_min)), float(cell_size), width, height)

    @classmethod
    def from_cloud(cls, cloud: "PointCloud", cell_size: float) -> "GridSpec":
        pts = cloud.points
        if len(pts) == 0:
            raise ValueError("empty point cloud")
        return cls.from_bounds(
            pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max(), cell_size
        )


class PointCloud:
    """3D point set, Nx3 float64 (meters). Colors, if any, are dropped on ingest."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be an Nx3 array")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class OccupancyGrid:
    """2D raster over the scene footprint.

    cells is a (height, width) float array; binary kinds hold {0, 1}, the
    density and combined kinds hold values in [0, 1].
    """

    spec: GridSpec
    cells: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (self.spec.height, self.spec.width):
            raise ValueError("cells shape does not match spec")
        if self.kind in ("binary_slice", "border"):
            if not np.all((cells == 0.0) | (cells == 1.0)):
                raise ValueError(f"{self.kind} grid must contain only 0/1")
        else:
            if cells.size and (cells.min() < 0.0 or cells.max() > 1.0):
                raise ValueError(f"{self.kind} grid values must lie in [0, 1]")
        self.cells = cells

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))


@dataclass(frozen=True)
class BorderParams:
    """Knobs of the border-map construction; defaults are the empirically chosen values."""

    n_slices: int = 50
    delta_b: float = 1.0 / 15.0
    delta_t: float = 1.0 / 5.0
    merge_fraction: float = 3.0 / 4.0
    gamma: float = 0.9

    def __post_init__(self):
        if self.n_slices < 1:
            raise ValueError("invalid slice count")
        if not (0.0 <= self.delta_b < self.delta_t <= 1.0):
            raise ValueError("require 0 <= delta_b < delta_t <= 1")
        if not (0.0 < self.merge_fraction <= 1.0):
            raise ValueError("merge_fraction must lie in (0, 1]")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")


@dataclass
class SliceSelection:
    """Slices whose occupied area passed the double bound, plus the raw counts."""

    selected_indices: tuple[int, ...]
    occupied_counts: tuple[int, ...]
    reference_count: int
    M: int = field(init=False)

    def __post_init__(self):
        self.M = len(self.selected_indices)


def slice_point_cloud(cloud: PointCloud, n_slices: int) -> list[np.ndarray]:
    """Partition a cloud into n_slices equal-height z-bands.

    Bands are half-open [lo, hi) except the topmost, which is closed, so the
    union of the returned subsets is exactly the input cloud.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    if n_slices < 1:
        raise ValueError("invalid slice count")
    z = cloud.points[:, 2]
    z_min, z_max = z.min(), z.max()
    span = z_max - z_min
    if span == 0.0:
        idx = np.full(len(z), n_slices - 1, dtype=np.intp)
    else:
        idx = np.floor((z - z_min) / (span / n_slices)).astype(np.intp)
        np.clip(idx, 0, n_slices - 1, out=idx)
    return [cloud.points[idx == k] for k in range(n_slices)]


def _cell_indices(points, spec: GridSpec):
    """Map x-y coordinates to (row, col); max-edge points clamp into the last cell."""
    x = points[:, 0]
    y = points[:, 1]
    ox, oy = spec.origin
    if np.any(x < ox) or np.any(y < oy) or np.any(x > spec.x_max) or np.any(y > spec.y_max):
        raise ValueError("point outside grid")
    col = np.floor((x - ox) / spec.cell_size).astype(np.intp)
    row = np.floor((y - oy) / spec.cell_size).astype(np.intp)
    np.clip(col, 0, spec.width - 1, out=col)
    np.clip(row, 0, spec.height - 1, out=row)
    return row, col


def project_occupancy(points, spec: GridSpec) -> OccupancyGrid:
    """Binary occupancy: a cell is 1 iff at least one point falls in it."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cells = np.zeros((spec.height, spec.width), dtype=np.float64)
    if len(pts):
        row, col = _cell_indices(pts, spec)
        cells[row, col] = 1.0
    return OccupancyGrid(spec, cells, "binary_slice")


def select_border_slices(
    slice_grids: list[OccupancyGrid], full_grid: OccupancyGrid, params: BorderParams
) -> SliceSelection:
    """Keep slice k iff delta_b*S < S_k < delta_t*S (both bounds strict).

    S is the occupied-cell count of the full-cloud projection and S_k the
    occupied-cell count of slice k; slices outside the band are either too
    sparse (noise) or too full (floors/ceilings) to carry wall borders.
    """
    for g in slice_grids:
        if g.spec != full_grid.spec:
            raise ValueError("slice grids and full grid must share one GridSpec")
    reference = full_grid.occupied_count()
    if reference == 0:
        raise ValueError("empty scene projection")
    counts = tuple(g.occupied_count() for g in slice_grids)
    lo = params.delta_b * reference
    hi = params.delta_t * reference
    selected = tuple(k for k, c in enumerate(counts) if lo < c < hi)
    return SliceSelection(selected, counts, reference)


def merge_border_map(
    selection: SliceSelection, slice_grids: list[OccupancyGrid], params: BorderParams
) -> OccupancyGrid:
    """Wall consensus: a cell is border iff occupied in >= merge_fraction*M kept slices."""
    if selection.M == 0:
        raise ValueError("no valid slices; relax BorderParams")
    spec = slice_grids[0].spec
    total = np.zeros((spec.height, spec.width), dtype=np.float64)
    for k in selection.selected_indices:
        total += slice_grids[k].cells
    cells = (total >= params.merge_fraction * selection.M).astype(np.float64)
    return OccupancyGrid(spec, cells, "border")


def project_density(cloud: PointCloud, spec: GridSpec) -> OccupancyGrid:
    """Per-cell point counts scaled into [0, 1] by the 99th-percentile occupied count.

    Clipping at the percentile keeps a single very dense cell from flattening
    the rest of the map.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    row, col = _cell_indices(cloud.points, spec)
    counts = np.zeros((spec.height, spec.width), dtype=np.float64)
    np.add.at(counts, (row, col), 1.0)
    occupied = counts[counts > 0]
    scale = float(np.percentile(occupied, 99, method="higher"))
    cells = np.minimum(counts / scale, 1.0)
    return OccupancyGrid(spec, cells, "density")


def combine_maps(
    density: OccupancyGrid, border: OccupancyGrid, params: BorderParams
) -> OccupancyGrid:
    """Blend density and border maps: gamma*density + (1-gamma)*border."""
    if density.spec != border.spec:
        raise ValueError("density and border grids must share one GridSpec")
    if density.kind != "density" or border.kind != "border":
        raise ValueError("expected a density grid and a border grid")
    cells = params.gamma * density.cells + (1.0 - params.gamma) * border.cells
    return OccupancyGrid(density.spec, cells, "combined")


def build_combined_map(
    cloud: PointCloud, spec: GridSpec, params: BorderParams
) -> tuple[OccupancyGrid, OccupancyGrid, OccupancyGrid, SliceSelection]:
    """Run the full map construction; returns (combined, density, border, selection)."""
    slices = slice_point_cloud(cloud, params.n_slices)
    slice_grids = [project_occupancy(s, spec) for s in slices]
    full_grid = project_occupancy(cloud.points, spec)
    selection = select_border_slices(slice_grids, full_grid, params)
    border = merge_border_map(selection, slice_grids, params)
    density = project_density(cloud, spec)
    combined = combine_maps(density, border, params)
    return combined, density, border, selection


# ---------------------------------------------------------------------------
# Grid persistence: JSON header + raw little-endian float32 sidecar, plus PGM.
# ---------------------------------------------------------------------------


def write_grid(grid: OccupancyGrid, stem) -> tuple[str, str]:
    """Write <stem>.json (header) and <stem>.bin (row-major LE float32 cells)."""
    stem = str(stem)
    header = {
        "origin": [grid.spec.origin[0], grid.spec.origin[1]],
        "cell_size": grid.spec.cell_size,
        "width": grid.spec.width,
        "height": grid.spec.height,
        "kind": grid.kind,
    }
    json_path = stem + ".json"
    bin_path = stem + ".bin"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
    grid.cells.astype("<f4").tofile(bin_path)
    return json_path, bin_path


def read_grid(stem) -> OccupancyGrid:
    stem = str(stem)
    with open(stem + ".json", encoding="utf-8") as fh:
        header = json.load(fh)
    spec = GridSpec(
        (float(header["origin"][0]), float(header["origin"][1])),
        float(header["cell_size"]),
        int(header["width"]),
        int(header["height"]),
    )
    raw = np.fromfile(stem + ".bin", dtype="<f4")
    if raw.size != spec.width * spec.height:
        raise ValueError(f"grid payload has {raw.size} cells, header says {spec.width * spec.height}")
    cells = raw.reshape(spec.height, spec.width).astype(np.float64)
    return OccupancyGrid(spec, cells, header["kind"])


def write_pgm(grid: OccupancyGrid, path) -> None:
    """Binary PGM (P5) export, values scaled to 0-255, north (y_max) at the top."""
    scaled = np.round(grid.cells * 255.0).astype(np.uint8)
    flipped = np.flipud(scaled)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.spec.width} {grid.spec.height}\n255\n".encode("ascii"))
        fh.write(flipped.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read back a P5 file as a (height, width) uint8 array (top row first)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    fields = data.split(maxsplit=4)
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    pixels = np.frombuffer(fields[4][: width * height], dtype=np.uint8)
    return pixels.reshape(height, width)
