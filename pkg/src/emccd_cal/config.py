"""Run configuration for the CLI pipeline.

A run configuration is a JSON document with exactly these top-level keys
(unknown keys anywhere are rejected, so schema drift fails loudly):

    {
      "detector":       {"g", "g_sc", "p_sc", "mu", "sigma", "eta0"},
      "source":         {"modes_per_pair", "mean_per_mode", "eta1", "eta2",
                         "crosstalk", "grid": [width, height], "frames"},
      "seed":           unsigned integer,
      "regions":        {"beam1": {"x","y","width","height"},
                         "beam2": {"x","y","width","height"}},
      "threshold_grid": [T, ...],
      "output_dir":     path
    }

The default geometry pairs two centred rectangles: a centred region is
its own point reflection, so "beam1" and "beam2" may be identical rects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .estim import Region
from .exceptions import ConfigError, InvalidParameterError
from .model import EmccdParams
from .source import SourceParams

__all__ = ["RunConfig", "load_config", "parse_config"]

_TOP_KEYS = {"detector", "source", "seed", "regions", "threshold_grid", "output_dir"}
_DETECTOR_KEYS = {"g", "g_sc", "p_sc", "mu", "sigma", "eta0"}
_SOURCE_KEYS = {"modes_per_pair", "mean_per_mode", "eta1", "eta2", "crosstalk",
                "grid", "frames"}
_REGION_KEYS = {"x", "y", "width", "height"}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    detector: EmccdParams
    source: SourceParams
    seed: int
    region1: Region
    region2: Region
    threshold_grid: tuple[float, ...]
    output_dir: str


def _require_keys(obj: dict, allowed: set[str], context: str,
                  required: set[str] | None = None) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{context} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    missing = (required if required is not None else allowed) - set(obj)
    if missing:
        raise ConfigError(f"{context}: missing keys {sorted(missing)}")


def _region(obj: dict, context: str) -> Region:
    _require_keys(obj, _REGION_KEYS, context)
    try:
        return Region(x=int(obj["x"]), y=int(obj["y"]),
                      width=int(obj["width"]), height=int(obj["height"]))
    except (InvalidParameterError, ValueError, TypeError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed JSON document into a :class:`RunConfig`."""
    _require_keys(doc, _TOP_KEYS, "config")
    _require_keys(doc["detector"], _DETECTOR_KEYS, "config.detector")
    _require_keys(doc["source"], _SOURCE_KEYS, "config.source")
    _require_keys(doc["regions"], {"beam1", "beam2"}, "config.regions")

    grid = doc["source"]["grid"]
    if (not isinstance(grid, (list, tuple)) or len(grid) != 2
            or not all(isinstance(v, int) for v in grid)):
        raise ConfigError("config.source.grid must be [width, height] integers")

    try:
        detector = EmccdParams(
            g=float(doc["detector"]["g"]),
            g_sc=float(doc["detector"]["g_sc"]),
            p_sc=float(doc["detector"]["p_sc"]),
            mu=float(doc["detector"]["mu"]),
            sigma=float(doc["detector"]["sigma"]),
            eta0=float(doc["detector"]["eta0"]),
        )
        source = SourceParams(
            modes_per_pair=int(doc["source"]["modes_per_pair"]),
            mean_per_mode=float(doc["source"]["mean_per_mode"]),
            eta1=float(doc["source"]["eta1"]),
            eta2=float(doc["source"]["eta2"]),
            crosstalk=float(doc["source"]["crosstalk"]),
            width=int(grid[0]),
            height=int(grid[1]),
            frames=int(doc["source"]["frames"]),
        )
    except (InvalidParameterError, ValueError, TypeError) as exc:
        raise ConfigError(f"config: {exc}") from exc

    seed = doc["seed"]
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ConfigError("config.seed must be an unsigned 64-bit integer")

    region1 = _region(doc["regions"]["beam1"], "config.regions.beam1")
    region2 = _region(doc["regions"]["beam2"], "config.regions.beam2")
    for name, region in (("beam1", region1), ("beam2", region2)):
        if (region.x + region.width > source.width
                or region.y + region.height > source.height):
            raise ConfigError(f"config.regions.{name} extends beyond the grid")

    grid_ts = doc["threshold_grid"]
    if not isinstance(grid_ts, list) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) for t in grid_ts):
        raise ConfigError("config.threshold_grid must be a list of numbers")

    output_dir = doc["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("config.output_dir must be a non-empty string")

    return RunConfig(
        detector=detector,
        source=source,
        seed=seed,
        region1=region1,
        region2=region2,
        threshold_grid=tuple(float(t) for t in grid_ts),
        output_dir=output_dir,
    )


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON run configuration from disk."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
