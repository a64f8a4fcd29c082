"""Run configuration shared by every stage of the reconstruction pipeline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

SKETCH_SOURCES = ("axis", "planar", "both")


class ConfigError(ValueError):
    """Raised for invalid configuration values or unreadable config files."""


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters for sketch extraction, candidate search and assembly.

    Defaults follow the base configuration of the method; values the method
    leaves open are chosen for desk-scale runs in normalized [-1, 1]^3 units.
    """

    # candidate search
    cd_threshold: float = 0.01
    translation_step: float = 0.01
    sweep_samples: int = 64
    slope_threshold: float | None = None
    candidate_points: int = 2048
    surface_points: int = 8192
    # sketch extraction
    slice_offset: float = 0.05
    n_slices: int = 5
    sketch_source: str = "both"
    cluster_angle_deg: float = 5.0
    min_cluster_area: float = 0.01
    loop_resample_n: int = 128
    min_loop_area: float = 1e-4
    min_loop_length: float = 1e-2
    fit_tolerance: float = 0.01
    # assembly
    residual_threshold: float = 0.02
    max_residual_iters: int = 3
    iou_resolution: int = 64
    finishing: bool = True
    finishing_min_turn_deg: float = 30.0
    finishing_probe: float = 0.05
    finishing_evals: int = 20
    # prior
    prior_budget: int = 100
    prior_min_keep: int = 8
    prior_weights: tuple[float, float, float, float] = (0.5, 0.2, 0.2, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        positive = (
            "cd_threshold",
            "translation_step",
            "slice_offset",
            "residual_threshold",
            "min_loop_area",
            "min_loop_length",
            "fit_tolerance",
            "min_cluster_area",
            "cluster_angle_deg",
            "finishing_probe",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.slope_threshold is not None and not self.slope_threshold > 0:
            raise ConfigError("slope_threshold must be > 0")
        if self.sketch_source not in SKETCH_SOURCES:
            raise ConfigError(f"sketch_source must be one of {SKETCH_SOURCES}, got {self.sketch_source!r}")
        if self.max_residual_iters < 0:
            raise ConfigError("max_residual_iters must be >= 0")
        if self.n_slices < 1:
            raise ConfigError("n_slices must be >= 1")
        if self.sweep_samples < 8:
            raise ConfigError("sweep_samples must be >= 8")
        if self.iou_resolution < 16:
            raise ConfigError("iou_resolution must be >= 16")
        if self.prior_budget < 1:
            raise ConfigError("prior_budget must be >= 1")
        if self.loop_resample_n < 8:
            raise ConfigError("loop_resample_n must be >= 8")
        if len(self.prior_weights) != 4 or any(w < 0 for w in self.prior_weights):
            raise ConfigError("prior_weights must be four non-negative numbers")

    def replace(self, **changes: Any) -> "FitConfig":
        data = asdict(self)
        data.update(changes)
        return FitConfig.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["prior_weights"] = list(self.prior_weights)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "prior_weights" in kwargs:
            kwargs["prior_weights"] = tuple(float(w) for w in kwargs["prior_weights"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str) -> "FitConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(data)
