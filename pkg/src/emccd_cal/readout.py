"""Rendering photoelectron maps into electron-count frames.

Two readout modes are modelled:

* photon-counting mode (``render_frame``): every pixel's photoelectrons
  pass through the multiplication register (Erlang draw of mean n*g),
  a spurious electron is added with probability ``p_sc`` (one exponential
  of mean ``g_sc``), and Gaussian read noise around the bias completes
  the chain;
* proportional (analog) mode (``render_analog_frame``): the camera is
  read without electron multiplication, so counts are the deterministic
  conversion ``g * n`` plus read noise only — spurious electrons carry no
  multiplication gain there and are negligible against a bright signal.

Counts are rounded to integers and clamped to the 16-bit ADC range.
Because integer counts are compared to a threshold with a strict ``>``,
the continuous model predicts a click rate at integer threshold T via the
upper tail evaluated at T + 1/2 (see ``estim``).

Stack renderers take the master seed rather than a live generator: each
frame uses the substream (seed, domain, frame index), which makes the
output independent of rendering order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .exceptions import EmptyStackError, InvalidParameterError, WrongKindError
from .model import EmccdParams, sample_em_output

__all__ = [
    "KIND_PHOTOELECTRONS",
    "KIND_COUNTS",
    "KIND_CLICKS",
    "ADC_MAX",
    "FrameStack",
    "render_frame",
    "render_analog_frame",
    "render_stack",
    "render_analog_stack",
    "render_dark_stack",
    "apply_threshold",
]

KIND_PHOTOELECTRONS = "photoelectrons"
KIND_COUNTS = "counts"
KIND_CLICKS = "clicks"

_KIND_DTYPES = {
    KIND_PHOTOELECTRONS: np.uint32,
    KIND_COUNTS: np.uint16,
    KIND_CLICKS: np.uint8,
}

ADC_MAX = 65535


@dataclass
class FrameStack:
    """A stack of 2-D pixel maps of one kind.

    ``data`` has shape (n_frames, height, width) with dtype uint32 for
    photoelectrons, uint16 for counts and uint8 for clicks (0/1 only).
    """

    width: int
    height: int
    n_frames: int
    kind: str
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in _KIND_DTYPES:
            raise InvalidParameterError(f"unknown stack kind {self.kind!r}")
        expected = (self.n_frames, self.height, self.width)
        if self.data.shape != expected:
            raise InvalidParameterError(
                f"data shape {self.data.shape} does not match declared {expected}")
        want = _KIND_DTYPES[self.kind]
        if self.data.dtype != want:
            raise InvalidParameterError(
                f"{self.kind} stacks must use dtype {np.dtype(want).name}")
        if self.kind == KIND_CLICKS and self.data.size and self.data.max() > 1:
            raise InvalidParameterError("click stacks may only contain 0/1")

    @classmethod
    def from_frames(cls, frames, kind: str) -> "FrameStack":
        data = np.stack(frames) if len(frames) else np.zeros((0, 0, 0), _KIND_DTYPES[kind])
        n, h, w = data.shape
        return cls(width=w, height=h, n_frames=n, kind=kind, data=data)


# ---------------------------------------------------------------------------
# Single-frame renderers
# ---------------------------------------------------------------------------
def render_frame(pe: np.ndarray, params: EmccdParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Render one photoelectron map through the EM readout chain.

    Per pixel: Erlang multiplication of the photoelectrons, a spurious
    electron (exponential of mean g_sc) with probability p_sc, Gaussian
    read noise, then rounding and clamping to [0, ADC_MAX].
    """
    pe = np.asarray(pe)
    if np.any(pe < 0):
        raise InvalidParameterError("photoelectron map must be non-negative")
    counts = sample_em_output(pe.astype(np.int64), params.g, rng)
    spurious = rng.random(pe.shape) < params.p_sc
    n_spur = int(spurious.sum())
    if n_spur:
        counts[spurious] += rng.exponential(params.g_sc, n_spur)
    counts += rng.normal(params.mu, params.sigma, pe.shape)
    return np.clip(np.rint(counts), 0, ADC_MAX).astype(np.uint16)


def render_analog_frame(pe: np.ndarray, params: EmccdParams,
                        rng: np.random.Generator) -> np.ndarray:
    """Render one map in proportional mode: counts = g*pe + read noise."""
    pe = np.asarray(pe)
    if np.any(pe < 0):
        raise InvalidParameterError("photoelectron map must be non-negative")
    counts = params.g * pe.astype(np.float64)
    counts += rng.normal(params.mu, params.sigma, pe.shape)
    return np.clip(np.rint(counts), 0, ADC_MAX).astype(np.uint16)


# ---------------------------------------------------------------------------
# Stack renderers
# ---------------------------------------------------------------------------
def _render_stack(pe_stack: FrameStack, params: EmccdParams, seed: int,
                  domain: int, renderer) -> FrameStack:
    if pe_stack.kind != KIND_PHOTOELECTRONS:
        raise WrongKindError("rendering requires a photoelectron stack")
    frames = [
        renderer(pe_stack.data[i], params, streams.substream(seed, domain, i))
        for i in range(pe_stack.n_frames)
    ]
    data = (np.stack(frames) if frames
            else np.zeros((0, pe_stack.height, pe_stack.width), np.uint16))
    return FrameStack(pe_stack.width, pe_stack.height, pe_stack.n_frames,
                      KIND_COUNTS, data)


def render_stack(pe_stack: FrameStack, params: EmccdParams, seed: int,
                 domain: int = streams.DOMAIN_BEAM1) -> FrameStack:
    """EM-chain rendering of a photoelectron stack, one substream per frame."""
    return _render_stack(pe_stack, params, seed, domain, render_frame)


def render_analog_stack(pe_stack: FrameStack, params: EmccdParams, seed: int,
                        domain: int = streams.DOMAIN_BEAM1) -> FrameStack:
    """Proportional-mode rendering of a photoelectron stack."""
    return _render_stack(pe_stack, params, seed, domain, render_analog_frame)


def render_dark_stack(width: int, height: int, n_frames: int,
                      params: EmccdParams, seed: int) -> FrameStack:
    """Frames acquired with the shutter closed (zero photoelectrons)."""
    if width <= 0 or height <= 0:
        raise InvalidParameterError("frame dimensions must be > 0")
    if n_frames < 0:
        raise InvalidParameterError("n_frames must be >= 0")
    zeros = np.zeros((height, width), dtype=np.uint32)
    frames = [
        render_frame(zeros, params, streams.substream(seed, streams.DOMAIN_DARK, i))
        for i in range(n_frames)
    ]
    data = np.stack(frames) if frames else np.zeros((0, height, width), np.uint16)
    return FrameStack(width, height, n_frames, KIND_COUNTS, data)


# ---------------------------------------------------------------------------
# Threshold discrimination
# ---------------------------------------------------------------------------
def apply_threshold(stack: FrameStack, threshold: float) -> FrameStack:
    """On-off discrimination: click where counts exceed the threshold.

    The comparison is strict (counts > T); a uniform frame equal to the
    threshold produces no clicks.
    """
    if stack.kind != KIND_COUNTS:
        raise WrongKindError("thresholding requires a counts stack")
    clicks = (stack.data > threshold).astype(np.uint8)
    return FrameStack(stack.width, stack.height, stack.n_frames, KIND_CLICKS, clicks)
