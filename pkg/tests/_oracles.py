"""Independent numerical oracles used to freeze expected test values.

Everything here deliberately avoids the closed forms under test: densities
are convolved by adaptive quadrature, tails are integrated as Gaussian
expectations of the exponential survival, and distribution checks use
generic chi-square machinery.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special, stats

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)


def gauss_pdf(y, mu, sigma):
    return np.exp(-0.5 * ((y - mu) / sigma) ** 2) / (sigma * SQRT_2PI)


def emg_pdf_quad(x: float, mu: float, sigma: float, scale: float) -> float:
    """Density of Gaussian(mu, sigma) + Exp(scale) by direct convolution."""
    f = lambda y: gauss_pdf(y, mu, sigma) * np.exp(-(x - y) / scale) / scale
    lo = mu - 14.0 * sigma
    hi = min(x, mu + 14.0 * sigma)
    if hi <= lo:
        # support of the exponential factor ends below the Gaussian peak
        lo = hi - 2.0 * sigma
    v, _ = integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=400)
    return v


def emg_tail_quad(threshold: float, mu: float, sigma: float, scale: float) -> float:
    """P(X >= threshold) as the Gaussian expectation of the exponential
    survival, split at the integrand kink y = threshold."""
    lo, hi = mu - 14.0 * sigma, mu + 14.0 * sigma
    if threshold <= lo:
        return 1.0
    f = lambda y: gauss_pdf(y, mu, sigma) * np.exp(-(threshold - y) / scale)
    below, _ = integrate.quad(f, lo, min(threshold, hi), epsabs=0, epsrel=1e-13,
                              limit=400)
    above = 0.5 * special.erfc((threshold - mu) / (sigma * SQRT2))
    return below + above


def noise_pdf_quad(x: float, mu: float, sigma: float, g_sc: float,
                   p_sc: float) -> float:
    return ((1.0 - p_sc) * float(gauss_pdf(x, mu, sigma))
            + p_sc * emg_pdf_quad(x, mu, sigma, g_sc))


def pdf_integral(pdf, lo: float, hi: float, rtol: float = 1e-12) -> float:
    """Total mass of a density over [lo, hi] by adaptive quadrature."""
    v, _ = integrate.quad(pdf, lo, hi, epsabs=0, epsrel=rtol, limit=600)
    return v


def chi_square_pvalue(observed: np.ndarray, expected: np.ndarray,
                      min_expected: float = 10.0) -> float:
    """Goodness-of-fit p-value with low-expectation bins pooled.

    Bins are merged greedily left to right until each pooled bin carries
    at least ``min_expected`` expected entries; the remainder joins the
    last pooled bin.
    """
    obs_p, exp_p = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_p.append(o_acc)
            exp_p.append(e_acc)
            o_acc = e_acc = 0.0
    if exp_p:
        obs_p[-1] += o_acc
        exp_p[-1] += e_acc
    else:
        obs_p, exp_p = [o_acc], [e_acc]
    obs_a = np.asarray(obs_p, dtype=np.float64)
    exp_a = np.asarray(exp_p, dtype=np.float64)
    # renormalise the tiny mismatch between total expectation and sample size
    exp_a *= obs_a.sum() / exp_a.sum()
    if len(obs_a) < 2:
        return 1.0
    chi2 = float(np.sum((obs_a - exp_a) ** 2 / exp_a))
    return float(stats.chi2.sf(chi2, len(obs_a) - 1))


def erlang_bin_probs(n: int, g: float, edges: np.ndarray) -> np.ndarray:
    """Erlang(n, g) probability mass in each [edges[i], edges[i+1})."""
    cdf = stats.gamma.cdf(edges, n, scale=g)
    return np.diff(cdf)
