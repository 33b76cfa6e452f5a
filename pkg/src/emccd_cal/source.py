"""Spatially correlated twin-beam photoelectron maps.

Models a multimode parametric down-conversion source imaged in the far
field: each pixel of beam 1 shares M thermal modes with one conjugate
pixel of beam 2, located at the point reflection through the grid centre
(momentum anti-correlation).  Photons of a mode appear in both beams and
are then thinned independently by the channel efficiencies; an optional
crosstalk fraction displaces detected beam-2 photons onto a uniformly
chosen 8-neighbour pixel, realising a geometric pairing factor
A = 1 - crosstalk at the conjugate-pixel level.

The analytic moments of this process back the correlation estimators:

    <N_i>      = M mu eta_i
    Var(N_i)   = M mu eta_i (1 + eta_i mu)
    Cov(N1,N2) = A eta1 eta2 M mu (1 + mu)      (conjugate pixel pair)

which give the noise reduction factor of the balanced difference
zeta = (1 + alpha)/2 - eta1 * A with alpha = <N1>/<N2>, and the
correlation C = eta A <N1> in the low mean-per-mode limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidParameterError

__all__ = [
    "SourceParams",
    "PhotoelectronFramePair",
    "PairMoments",
    "generate_pair",
    "analytic_pair_stats",
    "theoretical_nrf",
    "theoretical_correlation",
    "conjugate_indices",
]

# 8-neighbourhood, fixed order so crosstalk draws are reproducible
_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class SourceParams:
    """Twin-beam illumination model.

    Attributes
    ----------
    modes_per_pair : int
        Number M of spatio-temporal modes shared by one conjugate pixel
        pair, >= 1.
    mean_per_mode : float
        Mean photons per mode, >= 0.  Keep well below 1 for
        photon-counting runs; the per-pixel photon mean is
        ``modes_per_pair * mean_per_mode``.
    eta1, eta2 : float
        Channel detection efficiencies (optics times sensor), in [0, 1].
    crosstalk : float
        Fraction of detected beam-2 photons displaced off their conjugate
        pixel, in [0, 1).  The pixel-pair geometric factor is
        A = 1 - crosstalk.
    width, height : int
        Size of each beam's pixel grid.
    frames : int
        Number of frames a simulation run should produce, >= 0.
    """

    modes_per_pair: int
    mean_per_mode: float
    eta1: float
    eta2: float
    crosstalk: float
    width: int
    height: int
    frames: int

    def __post_init__(self) -> None:
        if self.modes_per_pair < 1 or self.modes_per_pair != int(self.modes_per_pair):
            raise InvalidParameterError("modes_per_pair must be an integer >= 1")
        if not (math.isfinite(self.mean_per_mode) and self.mean_per_mode >= 0):
            raise InvalidParameterError("mean_per_mode must be finite and >= 0")
        for name, eta in (("eta1", self.eta1), ("eta2", self.eta2)):
            if not (math.isfinite(eta) and 0.0 <= eta <= 1.0):
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.crosstalk < 1.0:
            raise InvalidParameterError("crosstalk must lie in [0, 1)")
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("grid dimensions must be >= 1")
        if self.frames < 0:
            raise InvalidParameterError("frames must be >= 0")

    @property
    def geometric_factor(self) -> float:
        """Pixel-pair collection factor A = 1 - crosstalk."""
        return 1.0 - self.crosstalk

    @property
    def p_ph(self) -> float:
        """Mean incident photons per pixel per frame."""
        return self.modes_per_pair * self.mean_per_mode


@dataclass(frozen=True)
class PhotoelectronFramePair:
    """One frame of detected photoelectrons for both beams.

    ``frame2`` is stored in beam-2 pixel coordinates; the conjugate of
    beam-1 pixel (row, col) is ``frame2[height-1-row, width-1-col]``
    (see :func:`conjugate_indices`).
    """

    frame1: np.ndarray
    frame2: np.ndarray
    frame_index: int

    def __post_init__(self) -> None:
        if self.frame1.shape != self.frame2.shape:
            raise InvalidParameterError("beam frames must share a shape")
        if np.any(self.frame1 < 0) or np.any(self.frame2 < 0):
            raise InvalidParameterError("photoelectron counts must be >= 0")


class PairMoments(NamedTuple):
    """Analytic per-pixel moments of one conjugate pixel pair."""

    n1_mean: float
    n2_mean: float
    n1_var: float
    n2_var: float
    cov: float


def conjugate_indices(height: int, width: int):
    """Index arrays mapping each pixel to its conjugate (point reflection).

    Returns (rows, cols) such that beam-2 pixel (rows[i,j], cols[i,j])
    is the partner of beam-1 pixel (i, j).
    """
    rows = (height - 1 - np.arange(height))[:, None] * np.ones(width, dtype=np.intp)
    cols = np.ones(height, dtype=np.intp)[:, None] * (width - 1 - np.arange(width))
    return rows.astype(np.intp), cols


def generate_pair(params: SourceParams, rng: np.random.Generator,
                  frame_index: int = 0) -> PhotoelectronFramePair:
    """Draw one correlated photoelectron frame pair.

    Per conjugate pixel pair the total photon number is the sum of M
    independent thermal (geometric) modes; each photon survives channel i
    with probability eta_i, independently per channel, so the two beams
    are conditionally independent binomial thinnings of the same photon
    number.  Detected beam-2 photons are then displaced to a uniform
    8-neighbour with probability ``crosstalk`` (dropped if off-grid).
    """
    shape = (params.height, params.width)
    # sum of M geometric modes == negative binomial in the photon number
    p_mode = 1.0 / (1.0 + params.mean_per_mode)
    photons = rng.negative_binomial(params.modes_per_pair, p_mode, size=shape)
    n1 = rng.binomial(photons, params.eta1).astype(np.uint32)
    n2 = rng.binomial(photons, params.eta2)
    # move beam 2 into its own pixel frame (point reflection)
    n2 = n2[::-1, ::-1]
    if params.crosstalk > 0.0:
        n2 = _displace(n2, params.crosstalk, rng)
    return PhotoelectronFramePair(n1, n2.astype(np.uint32), frame_index)


def _displace(frame: np.ndarray, crosstalk: float, rng: np.random.Generator) -> np.ndarray:
    """Scatter a ``crosstalk`` fraction of counts onto uniform 8-neighbours."""
    kept = rng.binomial(frame, 1.0 - crosstalk)
    remaining = frame - kept
    out = kept.astype(np.int64)
    h, w = frame.shape
    for k, (dy, dx) in enumerate(_NEIGHBOURS):
        # sequential split keeps each direction an exact uniform 1/8 share
        take = rng.binomial(remaining, 1.0 / (8 - k)) if k < 7 else remaining
        remaining = remaining - take
        src_y = slice(max(0, -dy), h - max(0, dy))
        dst_y = slice(max(0, dy), h - max(0, -dy))
        src_x = slice(max(0, -dx), w - max(0, dx))
        dst_x = slice(max(0, dx), w - max(0, -dx))
        out[dst_y, dst_x] += take[src_y, src_x]
    return out


def analytic_pair_stats(params: SourceParams) -> PairMoments:
    """Exact per-pixel moments implied by :func:`generate_pair` (no crosstalk
    redistribution terms beyond the pairing factor A in the covariance)."""
    m = params.modes_per_pair * params.mean_per_mode
    mu = params.mean_per_mode
    n1_mean = m * params.eta1
    n2_mean = m * params.eta2
    n1_var = m * params.eta1 * (1.0 + params.eta1 * mu)
    n2_var = m * params.eta2 * (1.0 + params.eta2 * mu)
    cov = params.geometric_factor * params.eta1 * params.eta2 * m * (1.0 + mu)
    return PairMoments(n1_mean, n2_mean, n1_var, n2_var, cov)


def theoretical_nrf(eta: float, alpha: float, geometric_factor: float) -> float:
    """Noise reduction factor of the balanced difference: (1+alpha)/2 - eta*A."""
    if not (math.isfinite(eta) and 0.0 <= eta <= 1.0):
        raise InvalidParameterError("eta must lie in [0, 1]")
    if not (math.isfinite(alpha) and alpha > 0):
        raise InvalidParameterError("alpha must be > 0")
    if not 0.0 < geometric_factor <= 1.0:
        raise InvalidParameterError("geometric factor must lie in (0, 1]")
    return (1.0 + alpha) / 2.0 - eta * geometric_factor


def theoretical_correlation(eta: float, geometric_factor: float, n1_mean: float) -> float:
    """Beam-beam covariance in the low mean-per-mode limit: eta*A*<N1>."""
    if not (math.isfinite(eta) and 0.0 <= eta <= 1.0):
        raise InvalidParameterError("eta must lie in [0, 1]")
    if not 0.0 < geometric_factor <= 1.0:
        raise InvalidParameterError("geometric factor must lie in (0, 1]")
    if not (math.isfinite(n1_mean) and n1_mean >= 0):
        raise InvalidParameterError("n1_mean must be >= 0")
    return eta * geometric_factor * n1_mean
