"""Detector-parameter estimation and twin-beam absolute calibration.

Histogram side: the dark-frame histogram is a Gaussian read-noise core
with an exponential spurious-charge tail; an illuminated dim-frame
histogram adds the single-photoelectron exponential of slope -1/g.  The
core is fit by weighted least squares (Poisson weights), the tails by
weighted linear regression of log bin counts, which is exact for an
exponential and matches how such histograms are read on a log scale.

Correlation side: per-frame sums over conjugate regions (optionally split
into paired tiles for more samples) give the balance ratio
alpha = <N1>/<N2>, the noise reduction factor

    zeta = Var(N1 - alpha N2) / (<N1> + alpha <N2>)

and the covariance C.  For twin beams these obey
zeta = (1 + alpha)/2 - eta*A and C = eta*A*<N1>, which the estimators
invert for the detection efficiency — in the analog regime after
converting counts to photoelectron equivalents, in the counting regime
after subtracting the known noise-click contributions.

Thresholding convention: counts are integers and a click means
counts > T (strict), so the continuous model predicts the click rate at
integer T through the upper tail at T + 1/2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from . import model
from .exceptions import (
    DegenerateInputError,
    EmptyRegionError,
    EmptyStackError,
    FitFailureError,
    InvalidParameterError,
)
from .model import EmccdParams, _emg_tail
from .readout import KIND_CLICKS, KIND_COUNTS, FrameStack

logger = logging.getLogger(__name__)

__all__ = [
    "Region",
    "Histogram",
    "FitResult",
    "PairStatistics",
    "ClickCounts",
    "CalibrationCurve",
    "build_histogram",
    "fit_read_noise",
    "fit_cic",
    "fit_gain",
    "fit_detector",
    "pair_statistics",
    "count_region_clicks",
    "estimate_eta_analog",
    "estimate_eta_counting",
    "validity_limit",
    "click_tail_threshold",
]

# Default bin widths: unit bins resolve the read-noise core; the tail fits
# use wide bins so far-tail bins keep enough counts for the log regression.
CORE_BIN_WIDTH = 1
TAIL_BIN_WIDTH = 20

DEFAULT_TILE = 25
DEFAULT_BLOCKS = 20


def click_tail_threshold(threshold: float) -> float:
    """Continuous-tail abscissa matching a strict click on integer counts.

    Integer counts exceed an integer threshold T exactly when the
    underlying continuous value rounds to T+1 or more, i.e. lies at or
    above T + 1/2.
    """
    return float(threshold) + 0.5


def validity_limit(params: EmccdParams) -> float:
    """Lowest threshold at which the counting method is trusted (mu + 2 sigma)."""
    return params.mu + 2.0 * params.sigma


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel rectangle (x, y = top-left corner)."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise EmptyRegionError("region must contain at least one pixel")
        if self.x < 0 or self.y < 0:
            raise InvalidParameterError("region origin must be non-negative")

    @property
    def npixels(self) -> int:
        return self.width * self.height

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def conjugate(self, grid_width: int, grid_height: int) -> "Region":
        """Point reflection of this region through the grid centre."""
        return Region(
            x=grid_width - self.x - self.width,
            y=grid_height - self.y - self.height,
            width=self.width,
            height=self.height,
        )


def _check_region_fits(region: Region, stack: FrameStack) -> None:
    if region.x + region.width > stack.width or region.y + region.height > stack.height:
        raise InvalidParameterError("region extends beyond the frame")


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------
@dataclass
class Histogram:
    """Contiguous-bin count histogram of a frame stack."""

    bin_edges: np.ndarray
    bin_counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        if len(self.bin_edges) != len(self.bin_counts) + 1:
            raise InvalidParameterError("need len(edges) == len(counts) + 1")
        if self.total != int(self.bin_counts.sum()):
            raise InvalidParameterError("total must equal the sum of bin counts")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def quantile(self, q: float) -> float:
        """Approximate data quantile from the binned counts."""
        cum = np.cumsum(self.bin_counts)
        idx = int(np.searchsorted(cum, q * self.total))
        return float(self.centers[min(idx, len(self.bin_counts) - 1)])


def build_histogram(stack: FrameStack, bin_width: int = 1) -> Histogram:
    """Histogram all pixel values of a counts stack with integer-width bins.

    Edges sit on half-integers so that with unit bins each bin is centred
    on one integer count value — the quantisation cell [k - 1/2, k + 1/2)
    of the continuous model.
    """
    if bin_width < 1:
        raise InvalidParameterError("bin_width must be >= 1")
    if stack.n_frames == 0 or stack.data.size == 0:
        raise EmptyStackError("cannot histogram an empty stack")
    data = stack.data.ravel()
    lo = int(data.min())
    hi = int(data.max())
    edges = np.arange(lo - 0.5, hi + bin_width + 0.5, bin_width, dtype=np.float64)
    counts, edges = np.histogram(data, bins=edges)
    return Histogram(edges, counts.astype(np.int64), int(data.size))


# ---------------------------------------------------------------------------
# Fit results
# ---------------------------------------------------------------------------
@dataclass
class FitResult:
    """Named estimates with one-standard-deviation uncertainties.

    ``window`` is the fit range in counts where applicable; ``goodness``
    is the reduced chi-square of the fit residuals.
    """

    estimates: dict[str, float]
    uncertainties: dict[str, float]
    window: tuple[float, float] | None = None
    goodness: float = math.nan
    notes: dict[str, float] = field(default_factory=dict)


def _gauss_model(x: np.ndarray, amp: float, mu: float, sigma: float) -> np.ndarray:
    return amp * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def fit_read_noise(hist: Histogram, window: tuple[float, float] | None = None) -> FitResult:
    """Weighted least-squares Gaussian fit of the read-noise core.

    Bin counts are weighted by their Poisson variance (var = max(count, 1)).
    The default window is [mode - 3s, mode + 2s] with s a robust width,
    half the interquartile range divided by 0.6745; the asymmetry keeps
    the spurious-charge tail out of the fit.
    """
    centers = hist.centers
    mode = float(centers[int(np.argmax(hist.bin_counts))])
    if window is None:
        s = 0.5 * (hist.quantile(0.75) - hist.quantile(0.25)) / 0.6745
        if s <= 0:
            s = max(hist.bin_width, 1.0)
        window = (mode - 3.0 * s, mode + 2.0 * s)
    sel = (centers >= window[0]) & (centers <= window[1])
    if int(sel.sum()) < 5:
        raise FitFailureError("read-noise window holds fewer than 5 bins")
    x = centers[sel]
    y = hist.bin_counts[sel].astype(np.float64)
    sig = np.sqrt(np.maximum(y, 1.0))

    peak = float(y.max())
    width0 = max((window[1] - window[0]) / 5.0, hist.bin_width)
    p0 = np.array([peak, mode, width0])

    def residuals(p):
        return (_gauss_model(x, *p) - y) / sig

    res = optimize.least_squares(residuals, p0, max_nfev=200)
    if not res.success or res.x[2] <= 0:
        raise FitFailureError("read-noise fit did not converge")
    amp, mu_hat, sigma_hat = res.x
    sigma_hat = abs(float(sigma_hat))
    # absolute covariance: residuals are already whitened by known sigmas
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError:
        raise FitFailureError("singular covariance in read-noise fit")
    errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    dof = max(len(x) - 3, 1)
    return FitResult(
        estimates={"mu": float(mu_hat), "sigma": sigma_hat, "amplitude": float(amp)},
        uncertainties={"mu": float(errs[1]), "sigma": float(errs[2]),
                       "amplitude": float(errs[0])},
        window=(float(window[0]), float(window[1])),
        goodness=float(np.sum(res.fun ** 2) / dof),
    )


def _subtract_read_noise(hist: Histogram, mu: float, sigma: float) -> Histogram:
    """Remove the expected Gaussian read-noise counts from every bin.

    Beyond mu + 4 sigma the leakage is tiny, but it concentrates in the
    first tail bin and would tilt the log-linear slope by a few percent.
    """
    z_lo = (hist.bin_edges[:-1] - mu) / (sigma * math.sqrt(2.0))
    z_hi = (hist.bin_edges[1:] - mu) / (sigma * math.sqrt(2.0))
    masses = 0.5 * (special.erfc(z_lo) - special.erfc(z_hi))
    expected = np.rint(masses * hist.total).astype(np.int64)
    cleaned = np.maximum(hist.bin_counts - expected, 0)
    return Histogram(hist.bin_edges, cleaned, int(cleaned.sum()))


def _log_tail_fit(hist: Histogram, mu: float,
                  window: tuple[float, float]) -> tuple[float, float, np.ndarray, float, int]:
    """Weighted linear regression of log bin counts against (x - mu).

    Only bins fully contained in the window enter the fit (a straddling
    bin would mix in counts from outside).  Weights are the bin counts
    themselves (inverse variance of the log of a Poisson count).  Returns
    (intercept, slope, covariance, reduced chi-square, nbins).
    """
    centers = hist.centers
    counts = hist.bin_counts
    eps = 1e-9 * max(abs(window[0]), 1.0)
    sel = ((hist.bin_edges[:-1] >= window[0] - eps)
           & (hist.bin_edges[1:] <= window[1] + eps) & (counts > 0))
    if int(sel.sum()) < 5:
        raise FitFailureError("tail window holds fewer than 5 nonzero bins")
    x = centers[sel] - mu
    y = np.log(counts[sel].astype(np.float64))
    w = counts[sel].astype(np.float64)

    sw = w.sum()
    xb = float(np.average(x, weights=w))
    yb = float(np.average(y, weights=w))
    sxx = float(np.sum(w * (x - xb) ** 2))
    if sxx <= 0:
        raise FitFailureError("degenerate abscissa in tail fit")
    slope = float(np.sum(w * (x - xb) * (y - yb)) / sxx)
    intercept = yb - slope * xb
    # 2x2 covariance of (intercept at x=0, slope)
    var_b = 1.0 / sxx
    var_a = 1.0 / sw + xb * xb / sxx
    cov_ab = -xb / sxx
    cov = np.array([[var_a, cov_ab], [cov_ab, var_b]])
    resid = y - (intercept + slope * x)
    dof = max(len(x) - 2, 1)
    red_chi2 = float(np.sum(w * resid ** 2) / dof)
    return intercept, slope, cov, red_chi2, int(sel.sum())


def fit_cic(hist: Histogram, mu: float, sigma: float,
            window: tuple[float, float] | None = None,
            subtract_read_noise: bool = True) -> FitResult:
    """Spurious-charge tail fit of a dark histogram.

    The log of the bin counts beyond mu + 4 sigma falls linearly with
    slope -1/g_sc; the fitted amplitude, normalised against the
    single-spurious-electron branch, yields p_sc.  By default the
    expected Gaussian leakage into the window is removed first
    (``subtract_read_noise=False`` fits the raw bins, e.g. for synthetic
    pure-exponential data).
    """
    if window is None:
        window = (mu + 4.0 * sigma, float(hist.bin_edges[-1]))
    n_pixels = hist.total
    if subtract_read_noise:
        hist = _subtract_read_noise(hist, mu, sigma)
    a, b, cov, red_chi2, _ = _log_tail_fit(hist, mu, window)
    if b >= 0:
        raise FitFailureError("spurious-charge tail has non-decaying slope")
    g_sc = -1.0 / b
    sig_b = math.sqrt(cov[1, 1])
    sig_gsc = sig_b / (b * b)
    # amplitude of the tail: counts(x) = N p_sc (width/g_sc) e^{r^2/2} e^{-(x-mu)/g_sc}
    r2 = (sigma / g_sc) ** 2
    p_sc = math.exp(a) * g_sc * math.exp(-0.5 * r2) / (n_pixels * hist.bin_width)
    # delta method on log p_sc = a + log(-1/b) - sigma^2 b^2 / 2 + const
    dldb = -1.0 / b - sigma * sigma * b
    var_logp = cov[0, 0] + dldb * dldb * cov[1, 1] + 2.0 * dldb * cov[0, 1]
    sig_psc = p_sc * math.sqrt(max(var_logp, 0.0))
    return FitResult(
        estimates={"p_sc": p_sc, "g_sc": g_sc},
        uncertainties={"p_sc": sig_psc, "g_sc": sig_gsc},
        window=(float(window[0]), float(window[1])),
        goodness=red_chi2,
    )


def fit_gain(hist: Histogram, mu: float, sigma: float,
             window: tuple[float, float] | None = None,
             subtract_read_noise: bool = True) -> FitResult:
    """Multiplication-gain fit on an illuminated (dim) histogram.

    Identical tail regression to :func:`fit_cic`; under illumination the
    single-photoelectron exponential dominates the window and the slope
    estimates -1/g.
    """
    if window is None:
        window = (mu + 4.0 * sigma, float(hist.bin_edges[-1]))
    if subtract_read_noise:
        hist = _subtract_read_noise(hist, mu, sigma)
    _, b, cov, red_chi2, _ = _log_tail_fit(hist, mu, window)
    if b >= 0:
        raise FitFailureError("illuminated tail has non-decaying slope")
    g = -1.0 / b
    sig_g = math.sqrt(cov[1, 1]) / (b * b)
    return FitResult(
        estimates={"g": g},
        uncertainties={"g": sig_g},
        window=(float(window[0]), float(window[1])),
        goodness=red_chi2,
    )


# ---------------------------------------------------------------------------
# Full noise-model calibration (dark + illuminated stacks)
# ---------------------------------------------------------------------------
def _stack_frame(stack: FrameStack, i: int) -> FrameStack:
    return FrameStack(stack.width, stack.height, 1, stack.kind, stack.data[i:i + 1])


def _per_frame_spread(stack: FrameStack, fitter, bin_width: int) -> dict[str, float]:
    """Standard deviation of per-frame fit estimates (the paper-style
    uncertainty: one fit per frame, spread over the set)."""
    values: dict[str, list[float]] = {}
    failures = 0
    for i in range(stack.n_frames):
        try:
            hist = build_histogram(_stack_frame(stack, i), bin_width)
            result = fitter(hist)
        except FitFailureError:
            failures += 1
            continue
        for key, val in result.estimates.items():
            values.setdefault(key, []).append(val)
    if failures:
        logger.info("per-frame fits: %d of %d frames failed", failures, stack.n_frames)
    out = {}
    for key, vals in values.items():
        if len(vals) >= 2:
            out[key] = float(np.std(vals, ddof=1))
    return out


def _subtract_cic(hist: Histogram, mu: float, sigma: float, p_sc: float,
                  g_sc: float) -> Histogram:
    """Remove the expected spurious-charge contribution from bin counts.

    The spurious branch sits under the read-noise core at the 0.1..1 %
    level; left in place it pulls the Gaussian fit of mu and sigma up by
    a few hundredths of a count, which matters once the core is fit on
    tens of millions of pixels.
    """
    masses = p_sc * (_emg_tail(hist.bin_edges[:-1], mu, sigma, g_sc)
                     - _emg_tail(hist.bin_edges[1:], mu, sigma, g_sc))
    expected = np.rint(masses * hist.total).astype(np.int64)
    cleaned = np.maximum(hist.bin_counts - expected, 0)
    return Histogram(hist.bin_edges, cleaned, int(cleaned.sum()))


def fit_detector(dark_stack: FrameStack,
                 light_stack: FrameStack | None = None) -> dict[str, dict[str, float]]:
    """Estimate mu, sigma, p_sc, g_sc (and g, given an illuminated stack).

    Central values come from fits of the pooled histograms, with one
    refinement round: the read-noise core is refit after subtracting the
    fitted spurious-charge branch, and the spurious-charge fit is then
    repeated with the refined core parameters.  The primary uncertainty
    of each parameter is the spread of per-frame fits; the pooled-fit
    covariance uncertainty is reported as ``fit_uncertainty``.
    """
    dark_core = build_histogram(dark_stack, CORE_BIN_WIDTH)
    dark_tail = build_histogram(dark_stack, TAIL_BIN_WIDTH)
    rn = fit_read_noise(dark_core)
    cic = fit_cic(dark_tail, rn.estimates["mu"], rn.estimates["sigma"])

    cleaned = _subtract_cic(dark_core, rn.estimates["mu"], rn.estimates["sigma"],
                            cic.estimates["p_sc"], cic.estimates["g_sc"])
    rn = fit_read_noise(cleaned)
    mu, sigma = rn.estimates["mu"], rn.estimates["sigma"]
    cic = fit_cic(dark_tail, mu, sigma)

    spread_rn = _per_frame_spread(dark_stack, fit_read_noise, CORE_BIN_WIDTH)
    spread_cic = _per_frame_spread(
        dark_stack, lambda h: fit_cic(h, mu, sigma), TAIL_BIN_WIDTH)

    def entry(fit: FitResult, spread: dict[str, float], key: str) -> dict[str, float]:
        return {
            "value": fit.estimates[key],
            "uncertainty": spread.get(key, fit.uncertainties[key]),
            "fit_uncertainty": fit.uncertainties[key],
        }

    out = {
        "mu": entry(rn, spread_rn, "mu"),
        "sigma": entry(rn, spread_rn, "sigma"),
        "p_sc": entry(cic, spread_cic, "p_sc"),
        "g_sc": entry(cic, spread_cic, "g_sc"),
    }
    if light_stack is not None:
        light_tail = build_histogram(light_stack, TAIL_BIN_WIDTH)
        gain = fit_gain(light_tail, mu, sigma)
        spread_g = _per_frame_spread(
            light_stack, lambda h: fit_gain(h, mu, sigma), TAIL_BIN_WIDTH)
        out["g"] = entry(gain, spread_g, "g")
    return out


# ---------------------------------------------------------------------------
# Pair statistics
# ---------------------------------------------------------------------------
@dataclass
class PairStatistics:
    """Measured correlation quantities of two region-sum series."""

    n1_mean: float
    n2_mean: float
    alpha: float
    zeta: float
    C: float
    n_samples: int


def pair_statistics(n1_series: Sequence[float], n2_series: Sequence[float]) -> PairStatistics:
    """Balance ratio, noise reduction factor and covariance of two series.

    alpha = mean(N1)/mean(N2); zeta is the unbiased sample variance of
    N1 - alpha*N2 normalised by mean(N1) + alpha*mean(N2); C is the
    unbiased sample covariance.
    """
    n1 = np.asarray(n1_series, dtype=np.float64)
    n2 = np.asarray(n2_series, dtype=np.float64)
    if n1.shape != n2.shape:
        raise InvalidParameterError("series must have equal length")
    if n1.size < 2:
        raise DegenerateInputError("need at least 2 samples")
    m1 = float(n1.mean())
    m2 = float(n2.mean())
    if m2 == 0.0:
        raise DegenerateInputError("mean of N2 is zero; alpha undefined")
    alpha = m1 / m2
    d = n1 - alpha * n2
    zeta = float(d.var(ddof=1) / (m1 + alpha * m2))
    cov = float(np.cov(n1, n2, ddof=1)[0, 1])
    return PairStatistics(m1, m2, alpha, zeta, cov, int(n1.size))


# ---------------------------------------------------------------------------
# Click counting
# ---------------------------------------------------------------------------
class ClickCounts(NamedTuple):
    """Clicks per region per frame, expected noise clicks, and their difference."""

    n_click: float
    n_noise: float
    n_true: float


def count_region_clicks(clicks: FrameStack, region: Region, threshold: float,
                        params: EmccdParams) -> ClickCounts:
    """Noise-subtracted click count for one region of a clicks stack.

    ``n_noise`` is the model expectation for the same strict threshold;
    the difference may fluctuate below zero and is preserved unclamped to
    keep downstream statistics unbiased.
    """
    if clicks.kind != KIND_CLICKS:
        raise InvalidParameterError("count_region_clicks needs a clicks stack")
    _check_region_fits(region, clicks)
    if region.npixels == 0:
        raise EmptyRegionError("region is empty")
    ys, xs = region.slices()
    per_frame = clicks.data[:, ys, xs].sum(axis=(1, 2))
    n_click = float(per_frame.mean()) if clicks.n_frames else 0.0
    p_noise = float(model.noise_click_prob(click_tail_threshold(threshold), params))
    n_noise = region.npixels * p_noise
    return ClickCounts(n_click, n_noise, n_click - n_noise)


# ---------------------------------------------------------------------------
# Tiled region series
# ---------------------------------------------------------------------------
def _tile_layout(region1: Region, region2: Region, grid_w: int, grid_h: int,
                 tile_size: int | None) -> int | None:
    """Tile edge to use for paired sub-region samples, or None for whole regions.

    Tiling needs the two regions to be exact point reflections (so tile
    (i, j) of region 1 pairs with the mirrored tile of region 2) and the
    tile to divide both region dimensions.
    """
    if tile_size is None or tile_size < 1:
        return None
    if region1.conjugate(grid_w, grid_h) != region2:
        return None
    if region1.width % tile_size or region1.height % tile_size:
        return None
    return int(tile_size)


def _tile_sums(data: np.ndarray, region: Region, tile: int) -> np.ndarray:
    """(frames, tiles) sums of a (frames, H, W) array over a tile grid."""
    ys, xs = region.slices()
    block = data[:, ys, xs].astype(np.float64)
    f = block.shape[0]
    ty, tx = region.height // tile, region.width // tile
    return block.reshape(f, ty, tile, tx, tile).sum(axis=(2, 4))


def _paired_series(data1: np.ndarray, data2: np.ndarray, region1: Region,
                   region2: Region, grid_w: int, grid_h: int,
                   tile_size: int | None) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Per-(frame, tile) sums for both beams with conjugate tiles aligned.

    Returns (s1, s2, npix1, npix2) where s1, s2 have shape (frames, K).
    Falls back to whole-region sums when tiling is not applicable.
    """
    tile = _tile_layout(region1, region2, grid_w, grid_h, tile_size)
    if tile is None:
        ys1, xs1 = region1.slices()
        ys2, xs2 = region2.slices()
        s1 = data1[:, ys1, xs1].sum(axis=(1, 2), dtype=np.float64)[:, None]
        s2 = data2[:, ys2, xs2].sum(axis=(1, 2), dtype=np.float64)[:, None]
        return s1, s2, region1.npixels, region2.npixels
    s1 = _tile_sums(data1, region1, tile)
    s2 = _tile_sums(data2, region2, tile)
    # the conjugate of region-1 tile (i, j) is the mirrored tile of region 2
    s2 = s2[:, ::-1, ::-1]
    f = s1.shape[0]
    return s1.reshape(f, -1), s2.reshape(f, -1), tile * tile, tile * tile


# ---------------------------------------------------------------------------
# Moment machinery shared by the analog and counting estimators
# ---------------------------------------------------------------------------
class _Moments(NamedTuple):
    s1: float
    s2: float
    s11: float
    s22: float
    s12: float
    n: float


def _frame_moments(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Per-frame sums of (x1, x2, x1^2, x2^2, x1*x2, count) over tiles."""
    return np.stack([
        s1.sum(axis=1), s2.sum(axis=1),
        (s1 * s1).sum(axis=1), (s2 * s2).sum(axis=1), (s1 * s2).sum(axis=1),
        np.full(s1.shape[0], s1.shape[1], dtype=np.float64),
    ], axis=1)


def _eta_from_moments(m: _Moments, geometric_factor: float, npix1: int, npix2: int,
                      noise_var_per_pixel: float, p_noise: float) -> tuple[float, float, float, float]:
    """Invert the noise-reduction relation on moment sums.

    ``noise_var_per_pixel`` is the known per-pixel variance added by the
    conversion chain (analog mode); ``p_noise`` is the per-pixel noise
    click probability (counting mode; 0 in analog mode, where the series
    are already background-subtracted photoelectron equivalents).

    Returns (eta, eta_from_correlation, alpha, zeta).
    """
    n = m.n
    if n < 2:
        raise DegenerateInputError("need at least 2 samples")
    mean1 = m.s1 / n
    mean2 = m.s2 / n
    if mean2 <= 0 or mean1 <= 0:
        raise DegenerateInputError("non-positive mean region sum; alpha undefined")
    alpha = mean1 / mean2
    m11 = m.s11 - n * mean1 * mean1
    m22 = m.s22 - n * mean2 * mean2
    m12 = m.s12 - n * mean1 * mean2
    var_d = (m11 - 2.0 * alpha * m12 + alpha * alpha * m22) / (n - 1.0)
    cov = m12 / (n - 1.0)
    denom = mean1 + alpha * mean2

    if p_noise > 0.0:
        # noise clicks are independent Bernoulli trials: remove their
        # variance and the union overlap with signal clicks, then undo the
        # (1 - p_noise) shrinkage of means and covariance
        correction = ((npix1 + alpha * alpha * npix2) * p_noise * (1.0 - p_noise)
                      - 2.0 * p_noise * (mean1 + alpha * alpha * mean2))
        zeta = (var_d - correction) / denom
        eta = ((1.0 + alpha) / 2.0 - zeta) / (geometric_factor * (1.0 - p_noise))
        eta_c = cov / (geometric_factor * mean1 * (1.0 - p_noise))
    else:
        correction = (npix1 + alpha * alpha * npix2) * noise_var_per_pixel
        zeta = (var_d - correction) / denom
        eta = ((1.0 + alpha) / 2.0 - zeta) / geometric_factor
        eta_c = cov / (geometric_factor * mean1)
    return eta, eta_c, alpha, zeta


def _blocked_moments(s1: np.ndarray, s2: np.ndarray, n_blocks: int) -> np.ndarray:
    """(blocks, 6) moment sums over contiguous frame blocks."""
    per_frame = _frame_moments(s1, s2)
    blocks = np.array_split(per_frame, min(n_blocks, per_frame.shape[0]))
    return np.stack([b.sum(axis=0) for b in blocks])


def _jackknife(block_moments: np.ndarray, estimator) -> tuple[float, float, float]:
    """Delete-one-block jackknife of a moment-sum estimator.

    Returns (estimate, standard error of the primary value, standard
    error of the secondary value); ``estimator`` maps a _Moments to a
    tuple whose first two entries are the primary and secondary values.
    """
    total = block_moments.sum(axis=0)
    full = estimator(_Moments(*total))
    nb = block_moments.shape[0]
    if nb < 2:
        return full, math.nan, math.nan
    partials = np.array([
        estimator(_Moments(*(total - block_moments[b])))[:2] for b in range(nb)
    ])
    centred = partials - partials.mean(axis=0)
    se = np.sqrt((nb - 1) / nb * np.sum(centred ** 2, axis=0))
    return full, float(se[0]), float(se[1])


# ---------------------------------------------------------------------------
# Analog calibration
# ---------------------------------------------------------------------------
def estimate_eta_analog(stack1: FrameStack, stack2: FrameStack, region1: Region,
                        region2: Region, geometric_factor: float, params: EmccdParams,
                        tile_size: int | None = DEFAULT_TILE,
                        n_blocks: int = DEFAULT_BLOCKS) -> FitResult:
    """Absolute detection efficiency from bright proportional-mode frames.

    Counts are converted to photoelectron equivalents ((x - mu)/g) and
    summed over paired tiles; inverting the noise-reduction relation with
    the known conversion noise variance (read noise plus quantisation)
    subtracted gives eta0.  The covariance route eta0 = C/(A <N1>) is
    reported as a cross-check, and a warning is logged when the two
    disagree beyond three combined standard errors.
    """
    for stack in (stack1, stack2):
        if stack.kind != KIND_COUNTS:
            raise InvalidParameterError("analog calibration needs counts stacks")
    _check_region_fits(region1, stack1)
    _check_region_fits(region2, stack2)
    if not 0.0 < geometric_factor <= 1.0:
        raise InvalidParameterError("geometric factor must lie in (0, 1]")
    s1, s2, npix1, npix2 = _paired_series(
        stack1.data, stack2.data, region1, region2, stack1.width, stack1.height,
        tile_size)
    # photon-equivalent conversion
    s1 = (s1 - npix1 * params.mu) / params.g
    s2 = (s2 - npix2 * params.mu) / params.g
    # read noise plus ADC quantisation, per pixel, in photoelectron units
    noise_var = (params.sigma ** 2 + 1.0 / 12.0) / params.g ** 2

    def est(m: _Moments):
        return _eta_from_moments(m, geometric_factor, npix1, npix2, noise_var, 0.0)

    blocks = _blocked_moments(s1, s2, n_blocks)
    (eta, eta_c, alpha, zeta), se, se_c = _jackknife(blocks, est)

    if np.isfinite(se) and np.isfinite(se_c):
        combined = math.hypot(se, se_c)
        if combined > 0 and abs(eta - eta_c) > 3.0 * combined:
            logger.warning(
                "inconsistent efficiency estimates: zeta route %.4f, "
                "correlation route %.4f (3 combined sigma = %.4f)",
                eta, eta_c, 3.0 * combined)
    return FitResult(
        estimates={"eta0": eta, "eta0_correlation": eta_c,
                   "alpha": alpha, "zeta": zeta},
        uncertainties={"eta0": se, "eta0_correlation": se_c},
        window=None,
        goodness=math.nan,
        notes={"n_samples": float(s1.size)},
    )


# ---------------------------------------------------------------------------
# Counting calibration curve
# ---------------------------------------------------------------------------
@dataclass
class CalibrationCurve:
    """Measured and predicted efficiency and noise versus threshold."""

    thresholds: np.ndarray
    eta_measured: np.ndarray
    eta_uncert: np.ndarray
    noise_measured: np.ndarray
    noise_uncert: np.ndarray
    eta_predicted: np.ndarray
    noise_predicted: np.ndarray
    below_validity: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.thresholds)
        for name in ("eta_measured", "eta_uncert", "noise_measured", "noise_uncert",
                     "eta_predicted", "noise_predicted", "below_validity"):
            if len(getattr(self, name)) != n:
                raise InvalidParameterError(f"curve column {name} has the wrong length")

    def __len__(self) -> int:
        return len(self.thresholds)


def _dark_click_rate(dark: FrameStack, threshold: float) -> tuple[float, float]:
    """Mean click rate per pixel of a dark stack at strict threshold, with
    binomial standard error."""
    n = dark.data.size
    if n == 0:
        return math.nan, math.nan
    k = int((dark.data > threshold).sum())
    p = k / n
    return p, math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


def estimate_eta_counting(stack1: FrameStack, stack2: FrameStack, region1: Region,
                          region2: Region, thresholds: Sequence[float],
                          geometric_factor: float, params: EmccdParams,
                          dark: FrameStack | None = None,
                          tile_size: int | None = DEFAULT_TILE,
                          n_blocks: int = DEFAULT_BLOCKS) -> CalibrationCurve:
    """Threshold sweep of the photon-counting efficiency.

    For every threshold both stacks are discriminated (strict >), noise
    clicks are subtracted using the fitted model, the noise-reduction
    relation is inverted on paired tile sums, and the model prediction
    eta0 * P1 and the noise curve are filled alongside.  ``dark`` supplies
    the measured noise column.  Thresholds below mu + 2 sigma are flagged
    and logged: the method is not trusted where read noise dominates.
    """
    for stack in (stack1, stack2):
        if stack.kind != KIND_COUNTS:
            raise InvalidParameterError("counting calibration needs counts stacks")
    if len(thresholds) == 0:
        raise InvalidParameterError("threshold grid is empty")
    _check_region_fits(region1, stack1)
    _check_region_fits(region2, stack2)
    limit = validity_limit(params)

    ths = np.asarray(list(thresholds), dtype=np.float64)
    eta_m = np.full(len(ths), math.nan)
    eta_u = np.full(len(ths), math.nan)
    noise_m = np.full(len(ths), math.nan)
    noise_u = np.full(len(ths), math.nan)
    eta_p = np.empty(len(ths))
    noise_p = np.empty(len(ths))
    below = ths < limit
    if below.any():
        logger.warning("%d of %d thresholds lie below the validity limit %.1f",
                       int(below.sum()), len(ths), limit)

    for i, threshold in enumerate(ths):
        tail_at = click_tail_threshold(threshold)
        p_noise = float(model.noise_click_prob(tail_at, params))
        eta_p[i] = float(model.eta_of_threshold(tail_at, params))
        noise_p[i] = p_noise

        clicks1 = stack1.data > threshold
        clicks2 = stack2.data > threshold
        s1, s2, npix1, npix2 = _paired_series(
            clicks1, clicks2, region1, region2, stack1.width, stack1.height,
            tile_size)
        s1 = s1 - npix1 * p_noise
        s2 = s2 - npix2 * p_noise

        def est(m: _Moments, _pn=p_noise, _n1=npix1, _n2=npix2):
            return _eta_from_moments(m, geometric_factor, _n1, _n2, 0.0, _pn)

        blocks = _blocked_moments(s1, s2, n_blocks)
        (eta, _eta_c, _alpha, _zeta), se, _se_c = _jackknife(blocks, est)
        eta_m[i] = eta
        eta_u[i] = se
        if dark is not None:
            noise_m[i], noise_u[i] = _dark_click_rate(dark, threshold)

    return CalibrationCurve(ths, eta_m, eta_u, noise_m, noise_u, eta_p, noise_p, below)
