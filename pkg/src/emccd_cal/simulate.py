"""End-to-end stack production for the three acquisition modes.

* dark: shutter closed, readout chain only;
* counting: the configured dim twin-beam source rendered through the EM
  chain, refused when the per-pixel photon probability reaches 0.15
  (the counting analysis assumes at most one photon per pixel);
* analog: a bright version of the twin-beam source read out in
  proportional mode.  Brightness is derived from the configuration so a
  single config drives the whole pipeline: beam 1 is set to
  ANALOG_TARGET_PE photoelectrons per pixel, raising the mode count so
  the per-mode occupancy stays at or below ANALOG_MAX_MEAN_PER_MODE
  (keeping the correlation-based cross-check in its validity regime).

Per-frame substreams are keyed by (seed, domain, frame index), so stacks
are reproducible regardless of rendering order.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import streams
from .config import RunConfig
from .exceptions import ContractViolationError
from .readout import (
    KIND_COUNTS,
    FrameStack,
    render_analog_frame,
    render_dark_stack,
    render_frame,
)
from .source import SourceParams, generate_pair

__all__ = [
    "ANALOG_TARGET_PE",
    "ANALOG_MAX_MEAN_PER_MODE",
    "COUNTING_MAX_P_PH",
    "analog_source",
    "simulate_dark",
    "simulate_counting",
    "simulate_analog",
]

ANALOG_TARGET_PE = 5.0
ANALOG_MAX_MEAN_PER_MODE = 0.01
COUNTING_MAX_P_PH = 0.15


def simulate_dark(config: RunConfig) -> FrameStack:
    """Dark stack at the configured grid size and frame count."""
    src = config.source
    return render_dark_stack(src.width, src.height, src.frames,
                             config.detector, config.seed)


def _empty_counts(source: SourceParams) -> FrameStack:
    return FrameStack(source.width, source.height, 0, KIND_COUNTS,
                      np.zeros((0, source.height, source.width), np.uint16))


def _twin_stacks(source: SourceParams, config: RunConfig,
                 renderer) -> tuple[FrameStack, FrameStack]:
    frames1, frames2 = [], []
    for i in range(source.frames):
        pair = generate_pair(source, streams.substream(config.seed,
                                                       streams.DOMAIN_SOURCE, i), i)
        frames1.append(renderer(
            pair.frame1, config.detector,
            streams.substream(config.seed, streams.DOMAIN_BEAM1, i)))
        frames2.append(renderer(
            pair.frame2, config.detector,
            streams.substream(config.seed, streams.DOMAIN_BEAM2, i)))
    if not frames1:
        return _empty_counts(source), _empty_counts(source)
    return (FrameStack.from_frames(frames1, KIND_COUNTS),
            FrameStack.from_frames(frames2, KIND_COUNTS))


def simulate_counting(config: RunConfig) -> tuple[FrameStack, FrameStack]:
    """Dim twin-beam stacks through the EM chain (photon-counting runs)."""
    src = config.source
    if src.p_ph >= COUNTING_MAX_P_PH:
        raise ContractViolationError(
            f"counting mode needs p_ph < {COUNTING_MAX_P_PH}, "
            f"configured source gives {src.p_ph:.4g}")
    return _twin_stacks(src, config, render_frame)


def analog_source(source: SourceParams) -> SourceParams:
    """Bright variant of a source for proportional-mode acquisition."""
    if source.eta1 <= 0:
        raise ContractViolationError("analog mode needs eta1 > 0")
    target_photons = ANALOG_TARGET_PE / source.eta1
    modes = max(source.modes_per_pair,
                int(math.ceil(target_photons / ANALOG_MAX_MEAN_PER_MODE)))
    return replace(source, modes_per_pair=modes,
                   mean_per_mode=target_photons / modes)


def simulate_analog(config: RunConfig) -> tuple[FrameStack, FrameStack]:
    """Bright twin-beam stacks in proportional (no-multiplication) mode."""
    bright = analog_source(config.source)
    return _twin_stacks(bright, config, render_analog_frame)
