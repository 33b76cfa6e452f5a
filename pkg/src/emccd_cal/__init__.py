"""Absolute calibration toolkit for electron-multiplying CCD cameras.

Simulates twin-beam-illuminated EMCCD frames from a full readout noise
model, recovers every detector parameter from histograms, measures
quantum correlations to obtain the absolute detection efficiency in the
analog and photon-counting regimes, and verifies that the thresholded
efficiency follows eta(T) = eta0 * P1(x >= T).
"""

from .estim import (
    CalibrationCurve,
    ClickCounts,
    FitResult,
    Histogram,
    PairStatistics,
    Region,
    build_histogram,
    count_region_clicks,
    estimate_eta_analog,
    estimate_eta_counting,
    fit_cic,
    fit_detector,
    fit_gain,
    fit_read_noise,
    pair_statistics,
)
from .model import (
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
from .readout import (
    FrameStack,
    apply_threshold,
    render_analog_stack,
    render_dark_stack,
    render_frame,
    render_stack,
)
from .source import (
    PhotoelectronFramePair,
    SourceParams,
    analytic_pair_stats,
    generate_pair,
    theoretical_correlation,
    theoretical_nrf,
)

__version__ = "0.1.0"

__all__ = [
    "EmccdParams",
    "SourceParams",
    "FrameStack",
    "Region",
    "Histogram",
    "FitResult",
    "PairStatistics",
    "ClickCounts",
    "CalibrationCurve",
    "PhotoelectronFramePair",
    "em_gain_pdf",
    "read_noise_pdf",
    "noise_pdf",
    "noise_click_prob",
    "single_photon_response_pdf",
    "single_photon_tail",
    "eta_of_threshold",
    "click_prob",
    "sample_em_output",
    "generate_pair",
    "analytic_pair_stats",
    "theoretical_nrf",
    "theoretical_correlation",
    "render_frame",
    "render_stack",
    "render_analog_stack",
    "render_dark_stack",
    "apply_threshold",
    "build_histogram",
    "fit_read_noise",
    "fit_cic",
    "fit_gain",
    "fit_detector",
    "pair_statistics",
    "count_region_clicks",
    "estimate_eta_analog",
    "estimate_eta_counting",
    "__version__",
]
