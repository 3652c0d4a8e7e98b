"""Pipeline configuration: one flat record of every knob, with the stock
defaults. CLI flags override config-file values, which override defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .grids import BorderParams
from .segmentation import SchemaError


@dataclass
class PipelineConfig:
    cell_size: float = 0.05
    n_slices: int = 50
    delta_b: float = 1.0 / 15.0
    delta_t: float = 1.0 / 5.0
    merge_fraction: float = 3.0 / 4.0
    gamma: float = 0.9
    wall_threshold: float = 0.3
    min_room_area: float = 1.0  # m^2; converted to cells at the active resolution
    n_views: int = 8
    eye_height: float = 1.5  # camera z above the cloud's z_min
    k_reps: int = 4
    temperature: float = 100.0
    aggregation: str = "max"
    alpha: float = 0.3
    alpha_grid: list[float] | None = None
    methods: list[str] = field(default_factory=lambda: ["acp", "cp"])
    seed: int = 0

    def border_params(self) -> BorderParams:
        return BorderParams(
            n_slices=self.n_slices,
            delta_b=self.delta_b,
            delta_t=self.delta_t,
            merge_fraction=self.merge_fraction,
            gamma=self.gamma,
        )

    def min_room_cells(self) -> int:
        return max(1, round(self.min_room_area / self.cell_size**2))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: malformed JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise SchemaError(f"{path}: config must be a JSON object")
        return cls().updated(doc, source=str(path))

    def updated(self, overrides: dict, source: str = "overrides") -> "PipelineConfig":
        """New config with the given fields replaced; unknown keys are errors."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise SchemaError(f"{source}: unknown config keys {sorted(unknown)}")
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        cfg = PipelineConfig(**merged)
        cfg.border_params()  # validate the geometric knobs eagerly
        if cfg.cell_size <= 0:
            raise SchemaError(f"{source}: cell_size must be > 0")
        if not (0.0 < cfg.alpha < 1.0):
            raise SchemaError(f"{source}: alpha must lie in (0, 1)")
        if cfg.alpha_grid is not None and not cfg.alpha_grid:
            raise SchemaError(f"{source}: alpha_grid must be non-empty when given")
        bad_methods = [m for m in cfg.methods if m not in ("acp", "cp")]
        if bad_methods:
            raise SchemaError(f"{source}: unknown methods {bad_methods}")
        return cfg
