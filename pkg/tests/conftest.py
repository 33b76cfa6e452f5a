import numpy as np
import pytest

from emccd_cal import EmccdParams, SourceParams

# Detector truth used throughout: the values recovered for the real camera.
PAPER_G = 147.0
PAPER_G_SC = 141.0
PAPER_P_SC = 0.0044
PAPER_MU = 507.9
PAPER_SIGMA = 24.88
PAPER_ETA0 = 0.54


@pytest.fixture(scope="session")
def paper_params() -> EmccdParams:
    return EmccdParams(g=PAPER_G, g_sc=PAPER_G_SC, p_sc=PAPER_P_SC,
                       mu=PAPER_MU, sigma=PAPER_SIGMA, eta0=PAPER_ETA0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260401)


def dim_source(eta: float = 0.54, p_ph: float = 0.04, grid: int = 64,
               frames: int = 10, crosstalk: float = 0.0,
               eta2: float | None = None) -> SourceParams:
    return SourceParams(
        modes_per_pair=50,
        mean_per_mode=p_ph / 50,
        eta1=eta,
        eta2=eta if eta2 is None else eta2,
        crosstalk=crosstalk,
        width=grid,
        height=grid,
        frames=frames,
    )
