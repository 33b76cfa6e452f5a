"""Closed-form probability model of the EMCCD readout chain.

The chain seen by one pixel is: photoelectrons -> electron-multiplication
register -> (possible clock-induced spurious electron through the same
register at lower gain) -> Gaussian read noise around the bias level.

The multiplication register acting on ``n`` input electrons produces an
Erlang-distributed count ``x`` with density

    x^(n-1) exp(-x/g) / (g^n (n-1)!)     for n >= 1, x >= 0

and a point mass at 0 for n = 0.  Convolving the single-electron case
(a plain exponential) with the Gaussian read noise gives an exponentially
modified Gaussian (EMG); both its density and its upper tail have stable
closed forms in terms of the scaled complementary error function, which
this module uses throughout so that threshold sweeps never need numerical
integration.

All functions are pure; samplers take a caller-supplied
``numpy.random.Generator`` and touch no other state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .exceptions import InvalidParameterError

__all__ = [
    "EmccdParams",
    "EmGainDensity",
    "em_gain_pdf",
    "read_noise_pdf",
    "noise_pdf",
    "noise_click_prob",
    "single_photon_response_pdf",
    "single_photon_tail",
    "eta_of_threshold",
    "click_prob",
    "sample_em_output",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Below this value of (r - u)/sqrt(2) the direct erfcx evaluation would
# overflow; switch to the asymptotic split exp(r^2/2 - u*r) form.
_ERFCX_SPLIT = -25.0


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EmccdParams:
    """Detector parameter vector (truth for simulation, estimate after fits).

    Attributes
    ----------
    g : float
        Mean multiplication gain of the EM register, counts per
        photoelectron (> 0).
    g_sc : float
        Mean gain seen by a spurious (clock-induced) electron, counts (> 0).
    p_sc : float
        Probability of one spurious electron per pixel per frame, in [0, 1).
        Multiple spurious electrons in one pixel are not modelled.
    mu : float
        Bias level of the readout, counts.
    sigma : float
        Read-noise standard deviation, counts (> 0).
    eta0 : float
        Analog detection efficiency, probability that an incident photon
        yields a photoelectron, in (0, 1].  Defaults to 1.0 for parameter
        sets produced by histogram fits, which cannot determine it.
    """

    g: float
    g_sc: float
    p_sc: float
    mu: float
    sigma: float
    eta0: float = 1.0

    def __post_init__(self) -> None:
        fields = (self.g, self.g_sc, self.p_sc, self.mu, self.sigma, self.eta0)
        if not all(math.isfinite(v) for v in fields):
            raise InvalidParameterError("all detector parameters must be finite")
        if self.g <= 0 or self.g_sc <= 0:
            raise InvalidParameterError("gains g and g_sc must be > 0")
        if self.sigma <= 0:
            raise InvalidParameterError("read-noise sigma must be > 0")
        if not 0.0 <= self.p_sc < 1.0:
            raise InvalidParameterError("p_sc must lie in [0, 1)")
        if not 0.0 < self.eta0 <= 1.0:
            raise InvalidParameterError("eta0 must lie in (0, 1]")


class EmGainDensity(NamedTuple):
    """Return contract of :func:`em_gain_pdf`.

    ``density`` is the absolutely continuous part; ``point_mass_at_zero``
    flags the n = 0 case where all probability sits in a delta at x = 0
    and the density is identically zero.
    """

    density: np.ndarray | float
    point_mass_at_zero: bool


# ---------------------------------------------------------------------------
# Stable EMG building blocks
# ---------------------------------------------------------------------------
def _emg_pdf(x, mu: float, sigma: float, scale: float):
    """Density of Gaussian(mu, sigma) + Exponential(scale).

    Evaluated as (1/(2*scale)) * exp(-u^2/2) * erfcx((r - u)/sqrt(2)) with
    u = (x - mu)/sigma and r = sigma/scale, which is overflow-free except
    deep in the exponential tail, where the asymptotic split is used.
    """
    x = np.asarray(x, dtype=np.float64)
    u = (x - mu) / sigma
    r = sigma / scale
    t = (r - u) / _SQRT2
    out = np.empty_like(u)

    near = t > _ERFCX_SPLIT
    if np.any(near):
        un = u[near]
        out[near] = 0.5 / scale * np.exp(-0.5 * un * un) * special.erfcx(t[near])
    if not np.all(near):
        far = ~near
        uf = u[far]
        # exp(r^2/2 - u*r) cannot overflow here: the branch requires
        # u > r + 25*sqrt(2), so the exponent is always negative.
        lead = np.exp(0.5 * r * r - uf * r)
        tiny = 0.5 * np.exp(-0.5 * uf * uf) * special.erfcx(-t[far])
        out[far] = (lead - tiny) / scale
    return out


def _emg_tail(threshold, mu: float, sigma: float, scale: float):
    """P(X >= threshold) for X = Gaussian(mu, sigma) + Exponential(scale)."""
    th = np.asarray(threshold, dtype=np.float64)
    u = (th - mu) / sigma
    r = sigma / scale
    gauss_tail = 0.5 * special.erfc(u / _SQRT2)

    term = np.empty_like(u)
    low = u <= r
    if np.any(low):
        ul = u[low]
        term[low] = 0.5 * np.exp(-0.5 * ul * ul) * special.erfcx((r - ul) / _SQRT2)
    if not np.all(low):
        hi = ~low
        uh = u[hi]
        # u > r makes the exponent negative, so this form is overflow-free.
        term[hi] = 0.5 * np.exp(0.5 * r * r - uh * r) * special.erfc((r - uh) / _SQRT2)
    return np.clip(gauss_tail + term, 0.0, 1.0)


def _as_given(value, reference):
    """Return a python float when the caller passed a scalar."""
    if np.isscalar(reference) or np.ndim(reference) == 0:
        return float(value)
    return value


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------
def em_gain_pdf(x, n: int, g: float) -> EmGainDensity:
    """Density of the multiplication-register output for ``n`` input electrons.

    Parameters
    ----------
    x : float or ndarray
        Electron counts at the register output.
    n : int
        Number of input photoelectrons, >= 0.
    g : float
        Mean multiplication gain, > 0.

    Returns
    -------
    EmGainDensity
        ``density`` is the Erlang(n, g) density (zero outside x >= 0) for
        n >= 1.  For n = 0 the distribution is a point mass at x = 0;
        ``density`` is then identically zero and ``point_mass_at_zero``
        is True.
    """
    if g <= 0 or not math.isfinite(g):
        raise InvalidParameterError("gain g must be finite and > 0")
    if n < 0 or n != int(n):
        raise InvalidParameterError("photoelectron count n must be a non-negative integer")
    n = int(n)
    xs = np.asarray(x, dtype=np.float64)
    if n == 0:
        return EmGainDensity(_as_given(np.zeros_like(xs), x), True)
    # log-space evaluation keeps large n and large x from overflowing
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = (n - 1) * np.log(xs) - xs / g - n * math.log(g) - special.gammaln(n)
    dens = np.where(xs > 0, np.exp(logpdf), 0.0)
    if n == 1:
        dens = np.where(xs == 0, 1.0 / g, dens)
    else:
        dens = np.where(xs == 0, 0.0, dens)
    return EmGainDensity(_as_given(dens, x), False)


def read_noise_pdf(x, mu: float, sigma: float):
    """Gaussian read-noise density centred on the bias level ``mu``."""
    if sigma <= 0 or not math.isfinite(sigma):
        raise InvalidParameterError("sigma must be finite and > 0")
    xs = np.asarray(x, dtype=np.float64)
    z = (xs - mu) / sigma
    return _as_given(_INV_SQRT_2PI / sigma * np.exp(-0.5 * z * z), x)


def noise_pdf(x, params: EmccdParams):
    """Electron-count density of an unilluminated pixel.

    Mixture of the bare read-noise Gaussian (weight 1 - p_sc) and the
    single-spurious-electron branch, a Gaussian convolved with an
    exponential of mean ``g_sc`` (weight p_sc).
    """
    xs = np.asarray(x, dtype=np.float64)
    gauss = read_noise_pdf(xs, params.mu, params.sigma)
    if params.p_sc == 0.0:
        return _as_given(gauss, x)
    cic = _emg_pdf(xs, params.mu, params.sigma, params.g_sc)
    return _as_given((1.0 - params.p_sc) * gauss + params.p_sc * cic, x)


def noise_click_prob(threshold, params: EmccdParams):
    """Probability that an unilluminated pixel exceeds ``threshold``.

    Upper-tail integral of :func:`noise_pdf`; monotone non-increasing in
    the threshold and bounded to [0, 1].
    """
    th = np.asarray(threshold, dtype=np.float64)
    u = (th - params.mu) / (params.sigma * _SQRT2)
    gauss_tail = 0.5 * special.erfc(u)
    if params.p_sc == 0.0:
        return _as_given(gauss_tail, threshold)
    cic_tail = _emg_tail(th, params.mu, params.sigma, params.g_sc)
    out = (1.0 - params.p_sc) * gauss_tail + params.p_sc * cic_tail
    return _as_given(np.clip(out, 0.0, 1.0), threshold)


def single_photon_response_pdf(x, params: EmccdParams):
    """Count density produced by exactly one photoelectron.

    Convolution of the single-electron exponential (mean ``g``) with the
    read-noise Gaussian: an exponentially modified Gaussian whose mean is
    ``mu + g``.
    """
    return _as_given(_emg_pdf(x, params.mu, params.sigma, params.g), x)


def single_photon_tail(threshold, params: EmccdParams):
    """P(x >= threshold) under the single-photoelectron response."""
    return _as_given(_emg_tail(threshold, params.mu, params.sigma, params.g), threshold)


def eta_of_threshold(threshold, params: EmccdParams):
    """Detection efficiency of the thresholded detector.

    The probability that a single incident photon produces a count above
    the threshold: analog efficiency times the single-photoelectron tail.
    """
    return params.eta0 * single_photon_tail(threshold, params)


def click_prob(threshold, p_ph: float, params: EmccdParams):
    """Per-pixel click probability under illumination ``p_ph`` photons/pixel.

    Valid for thresholds high enough that double events are negligible
    (threshold >= mu + 2*sigma); the photon and noise contributions then
    add: eta0 * p_ph * P1(x >= T) + Noise(T), clamped to [0, 1].
    """
    if not 0.0 <= p_ph <= 1.0 or not math.isfinite(p_ph):
        raise InvalidParameterError("p_ph must lie in [0, 1]")
    sig = params.eta0 * p_ph * np.asarray(single_photon_tail(threshold, params))
    noi = np.asarray(noise_click_prob(threshold, params))
    return _as_given(np.clip(sig + noi, 0.0, 1.0), threshold)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------
def sample_em_output(n, g: float, rng: np.random.Generator):
    """Draw register outputs for ``n`` input photoelectrons.

    ``n`` may be a scalar or an integer array; each entry draws from the
    Erlang(n, g) law (the sum of n exponentials of mean g), with n = 0
    mapping to exactly 0.  Sample mean converges to n*g and sample
    variance to n*g^2.
    """
    if g <= 0 or not math.isfinite(g):
        raise InvalidParameterError("gain g must be finite and > 0")
    ns = np.asarray(n)
    if np.any(ns < 0) or not np.issubdtype(ns.dtype, np.integer):
        if not np.all(ns == np.floor(ns)) or np.any(ns < 0):
            raise InvalidParameterError("n must contain non-negative integers")
    # numpy's gamma sampler returns exactly 0 for shape 0
    out = rng.gamma(np.asarray(ns, dtype=np.float64), g)
    return _as_given(out, n)
