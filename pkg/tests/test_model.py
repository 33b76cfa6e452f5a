import math

import numpy as np
import pytest
from scipy import special

import _oracles as oracle
from emccd_cal import (
    EmccdParams,
    click_prob,
    em_gain_pdf,
    eta_of_threshold,
    noise_click_prob,
    noise_pdf,
    read_noise_pdf,
    sample_em_output,
    single_photon_response_pdf,
    single_photon_tail,
)
from emccd_cal.exceptions import InvalidParameterError

# Oracle-derived constants (quadrature values, frozen after verification
# against the adaptive convolution integrals in _oracles).
P1_TAIL_560 = 0.7105213376690561          # single-photoelectron tail at T=560
ETA_560 = 0.3836815223412903              # 0.54 * P1_TAIL_560
NOISE_560 = 0.021130965052808322          # noise tail at T=560
EM_PDF_147 = 0.002502581232458791         # e^-1 / 147
RN_PEAK = 0.016034657572404853            # 1 / (24.88 sqrt(2 pi))


# ---------------------------------------------------------------------------
# parameter validation
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("bad", [
    dict(g=0.0), dict(g=-1.0), dict(g_sc=0.0), dict(sigma=0.0),
    dict(p_sc=-0.1), dict(p_sc=1.0), dict(eta0=0.0), dict(eta0=1.5),
    dict(mu=float("nan")), dict(g=float("inf")),
])
def test_params_validation(bad):
    base = dict(g=147.0, g_sc=141.0, p_sc=0.0044, mu=507.9, sigma=24.88, eta0=0.54)
    base.update(bad)
    with pytest.raises(InvalidParameterError):
        EmccdParams(**base)


# ---------------------------------------------------------------------------
# multiplication-register density
# ---------------------------------------------------------------------------
def test_em_gain_pdf_exponential_origin():
    assert em_gain_pdf(0.0, 1, 147.0).density == pytest.approx(1.0 / 147.0, rel=1e-12)


def test_em_gain_pdf_no_support_below_zero():
    res = em_gain_pdf(np.array([-5.0, -0.1]), 2, 147.0)
    assert np.all(res.density == 0.0)
    assert not res.point_mass_at_zero


def test_em_gain_pdf_at_gain():
    assert em_gain_pdf(147.0, 1, 147.0).density == pytest.approx(EM_PDF_147, rel=1e-12)


def test_em_gain_pdf_point_mass():
    res = em_gain_pdf(np.array([0.0, 5.0]), 0, 147.0)
    assert res.point_mass_at_zero
    assert np.all(res.density == 0.0)


def test_em_gain_pdf_normalises():
    for n in (1, 2, 5):
        total = oracle.pdf_integral(
            lambda x: em_gain_pdf(x, n, 147.0).density, 0.0, 147.0 * (n + 40))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_em_gain_pdf_invalid():
    with pytest.raises(InvalidParameterError):
        em_gain_pdf(1.0, 1, 0.0)
    with pytest.raises(InvalidParameterError):
        em_gain_pdf(1.0, -1, 147.0)


# ---------------------------------------------------------------------------
# read noise
# ---------------------------------------------------------------------------
def test_read_noise_peak():
    assert read_noise_pdf(10.0, 10.0, 2.0) == pytest.approx(
        1.0 / (2.0 * math.sqrt(2 * math.pi)), rel=1e-12)
    assert read_noise_pdf(507.9, 507.9, 24.88) == pytest.approx(RN_PEAK, rel=1e-12)


def test_read_noise_one_sigma():
    val = read_noise_pdf(12.0, 10.0, 2.0)
    assert val == pytest.approx(math.exp(-0.5) / (2.0 * math.sqrt(2 * math.pi)),
                                rel=1e-12)


def test_read_noise_symmetric(paper_params):
    left = read_noise_pdf(paper_params.mu - 7.3, paper_params.mu, paper_params.sigma)
    right = read_noise_pdf(paper_params.mu + 7.3, paper_params.mu, paper_params.sigma)
    assert left == right


def test_read_noise_invalid():
    with pytest.raises(InvalidParameterError):
        read_noise_pdf(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# dark-pixel density and click probability
# ---------------------------------------------------------------------------
def test_noise_pdf_degenerates_without_spurious_charge(paper_params):
    from dataclasses import replace
    params = replace(paper_params, p_sc=0.0)
    x = np.linspace(300.0, 900.0, 301)
    assert np.array_equal(noise_pdf(x, params),
                          read_noise_pdf(x, params.mu, params.sigma))


def test_noise_pdf_exponential_tail_slope(paper_params):
    # far above the bias the spurious branch dominates with decay g_sc
    x1, x2 = 850.0, 950.0
    slope = (math.log(noise_pdf(x2, paper_params))
             - math.log(noise_pdf(x1, paper_params))) / (x2 - x1)
    assert slope == pytest.approx(-1.0 / paper_params.g_sc, rel=1e-3)


def test_noise_pdf_normalises(paper_params):
    total = oracle.pdf_integral(
        lambda x: noise_pdf(x, paper_params),
        paper_params.mu - 14 * paper_params.sigma,
        paper_params.mu + 40 * paper_params.g_sc)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_noise_click_prob_limits(paper_params):
    assert noise_click_prob(-1e12, paper_params) == pytest.approx(1.0, abs=1e-12)
    assert noise_click_prob(1e12, paper_params) == 0.0


def test_noise_click_prob_gaussian_tail(paper_params):
    from dataclasses import replace
    params = replace(paper_params, p_sc=0.0)
    t = params.mu + 2.0 * params.sigma
    expected = 0.5 * special.erfc(2.0 / math.sqrt(2.0))  # (1 - erf(sqrt(2)))/2
    assert noise_click_prob(t, params) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.02275, abs=5e-6)


def test_noise_click_prob_value(paper_params):
    assert noise_click_prob(560.0, paper_params) == pytest.approx(NOISE_560, rel=1e-12)


# ---------------------------------------------------------------------------
# single-photoelectron response
# ---------------------------------------------------------------------------
def test_single_photon_pdf_sigma_to_zero(paper_params):
    from dataclasses import replace
    params = replace(paper_params, sigma=1e-6)
    x = params.mu + params.g * math.log(2.0)
    assert single_photon_response_pdf(x, params) == pytest.approx(
        0.5 / params.g, rel=1e-9)


def test_single_photon_pdf_normalises(paper_params):
    total = oracle.pdf_integral(
        lambda x: single_photon_response_pdf(x, paper_params),
        paper_params.mu - 14 * paper_params.sigma,
        paper_params.mu + 45 * paper_params.g)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_single_photon_pdf_mean(paper_params):
    mean = oracle.pdf_integral(
        lambda x: x * single_photon_response_pdf(x, paper_params),
        paper_params.mu - 14 * paper_params.sigma,
        paper_params.mu + 60 * paper_params.g, rtol=1e-11)
    assert mean == pytest.approx(paper_params.mu + paper_params.g, rel=1e-9)


def test_single_photon_tail_limits(paper_params):
    from dataclasses import replace
    assert single_photon_tail(-1e12, paper_params) == pytest.approx(1.0, abs=1e-12)
    small = replace(paper_params, sigma=1e-9)
    assert single_photon_tail(small.mu, small) == pytest.approx(1.0, rel=1e-9)


def test_single_photon_tail_at_560(paper_params):
    closed = single_photon_tail(560.0, paper_params)
    quad = oracle.emg_tail_quad(560.0, paper_params.mu, paper_params.sigma,
                                paper_params.g)
    assert closed == pytest.approx(P1_TAIL_560, rel=1e-12)
    assert closed == pytest.approx(quad, rel=1e-9)


def test_closed_forms_match_quadrature_random_params():
    rng = np.random.default_rng(42)
    for _ in range(20):
        mu = rng.uniform(-100.0, 800.0)
        sigma = rng.uniform(0.5, 80.0)
        g = rng.uniform(1.0, 400.0)
        params = EmccdParams(g=g, g_sc=g, p_sc=0.0, mu=mu, sigma=sigma, eta0=1.0)
        xs = np.linspace(mu - 6 * sigma, mu + 8 * sigma + 6 * g, 10)
        for x in xs:
            pdf = float(single_photon_response_pdf(float(x), params))
            ref = oracle.emg_pdf_quad(float(x), mu, sigma, g)
            if ref > 1e-300:
                assert pdf == pytest.approx(ref, rel=1e-9)
            tail = float(single_photon_tail(float(x), params))
            ref_t = oracle.emg_tail_quad(float(x), mu, sigma, g)
            assert tail == pytest.approx(ref_t, rel=1e-9, abs=1e-300)


def test_tails_monotone(paper_params):
    grid = np.linspace(paper_params.mu - 6 * paper_params.sigma,
                       paper_params.mu + 10 * paper_params.g, 200)
    tails = np.array([single_photon_tail(t, paper_params) for t in grid])
    noise = np.array([noise_click_prob(t, paper_params) for t in grid])
    assert np.all(np.diff(tails) <= 0)
    assert np.all(np.diff(noise) <= 0)
    assert np.all((tails >= 0) & (tails <= 1))
    assert np.all((noise >= 0) & (noise <= 1))


# ---------------------------------------------------------------------------
# thresholded efficiency and click probability
# ---------------------------------------------------------------------------
def test_eta_of_threshold(paper_params):
    assert eta_of_threshold(-1e12, paper_params) == pytest.approx(0.54, rel=1e-12)
    assert eta_of_threshold(560.0, paper_params) == pytest.approx(ETA_560, rel=1e-12)


def test_eta_equals_eta0_times_tail(paper_params):
    # definitional composition, bit for bit
    for t in (480.0, 560.0, 700.0, 901.5):
        assert eta_of_threshold(t, paper_params) == (
            paper_params.eta0 * single_photon_tail(t, paper_params))


def test_click_prob_composition(paper_params):
    t = 560.0
    expected = (0.54 * 0.1 * single_photon_tail(t, paper_params)
                + noise_click_prob(t, paper_params))
    assert click_prob(t, 0.1, paper_params) == pytest.approx(expected, rel=1e-12)
    assert click_prob(t, 0.0, paper_params) == noise_click_prob(t, paper_params)


def test_click_prob_negligible_far_tail(paper_params):
    from dataclasses import replace
    params = replace(paper_params, p_sc=0.0)
    t = params.mu + 8 * params.sigma
    assert click_prob(t, 0.0, params) < 1e-14


def test_click_prob_invalid(paper_params):
    with pytest.raises(InvalidParameterError):
        click_prob(560.0, 1.5, paper_params)
    with pytest.raises(InvalidParameterError):
        click_prob(560.0, -0.1, paper_params)


# ---------------------------------------------------------------------------
# register sampler
# ---------------------------------------------------------------------------
def test_sample_em_output_zero_is_exact(rng):
    out = sample_em_output(np.zeros(1000, dtype=np.int64), 147.0, rng)
    assert np.all(out == 0.0)
    assert sample_em_output(0, 147.0, rng) == 0.0


def test_sample_em_output_mean(rng):
    draws = sample_em_output(np.ones(1_000_000, dtype=np.int64), 147.0, rng)
    assert draws.mean() == pytest.approx(147.0, abs=0.5)


def test_sample_em_output_variance(rng):
    draws = sample_em_output(np.full(1_000_000, 3, dtype=np.int64), 100.0, rng)
    # Var(s^2) for Erlang-3 gives a standard error of ~60 here
    assert draws.var(ddof=1) == pytest.approx(3e4, abs=180.0)


def test_sample_em_output_matches_density(rng):
    for n in (1, 2, 5):
        draws = sample_em_output(np.full(200_000, n, dtype=np.int64), 147.0, rng)
        edges = np.linspace(0.0, float(draws.max()) + 1.0, 60)
        observed, _ = np.histogram(draws, bins=edges)
        expected = oracle.erlang_bin_probs(n, 147.0, edges) * draws.size
        assert oracle.chi_square_pvalue(observed, expected) > 0.001


def test_sample_em_output_invalid(rng):
    with pytest.raises(InvalidParameterError):
        sample_em_output(1, -147.0, rng)
    with pytest.raises(InvalidParameterError):
        sample_em_output(np.array([1, -2]), 147.0, rng)
