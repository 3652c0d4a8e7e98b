"""Camera pose planning: evenly spaced poses on a room's bounding ellipse.

Pose i sits at angle theta_i = 2*pi*i/n on the ellipse with semi-axes L/2
and W/2 around the room center, at the room's reference height, looking at
the center. Poses may land inside walls for non-convex rooms; consumers are
expected to discard unusable views.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .segmentation import RoomPolygon

DEFAULT_N_VIEWS = 8
DEFAULT_EYE_HEIGHT = 1.5


@dataclass(frozen=True)
class RoomBox:
    center: tuple[float, float]
    length: float
    width: float
    z_c: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("room box must have positive length and width")


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    view_index: int
    theta: float


def plan_camera_poses(box: RoomBox, n_views: int = DEFAULT_N_VIEWS) -> list[CameraPose]:
    """Evenly spaced poses on the room's bounding ellipse, facing the center."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    xc, yc = box.center
    look_at = (xc, yc, box.z_c)
    poses = []
    for i in range(n_views):
        theta = 2.0 * math.pi * i / n_views
        x = xc + (box.length / 2.0) * math.cos(theta)
        y = yc + (box.width / 2.0) * math.sin(theta)
        poses.append(CameraPose((x, y, box.z_c), look_at, i, theta))
    return poses


def ellipse_residual(pose: CameraPose, box: RoomBox) -> float:
    """|4(x-xc)^2/L^2 + 4(y-yc)^2/W^2 - 1| for a pose; ~0 for on-ellipse poses."""
    x, y, _ = pose.position
    xc, yc = box.center
    value = (
        4.0 * (x - xc) ** 2 / box.length**2
        + 4.0 * (y - yc) ** 2 / box.width**2
    )
    return abs(value - 1.0)


def room_box_from_polygon(poly: RoomPolygon, z_c: float) -> RoomBox:
    """Axis-aligned bounding box of a room polygon at reference height z_c."""
    xs = [v[0] for v in poly.vertices]
    ys = [v[1] for v in poly.vertices]
    length = max(xs) - min(xs)
    width = max(ys) - min(ys)
    if length <= 0 or width <= 0:
        raise ValueError(f"room {poly.room_id}: degenerate polygon extent")
    center = ((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)
    return RoomBox(center, length, width, z_c)


def export_poses(room_id: str, poses: list[CameraPose], path) -> None:
    doc = {
        "room_id": room_id,
        "poses": [
            {
                "position": list(p.position),
                "look_at": list(p.look_at),
                "view_index": p.view_index,
            }
            for p in poses
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
