import numpy as np
import pytest

from jkdetect.dist import NigParams, nig_sample
from jkdetect.geometry import LinearSystem
from jkdetect.overbound import (EmpiricalSample, build_pgo, fit_bgmm_em,
                                fit_gaussian_overbound, GaussianOverbound, Pgo)

NIG_DELTA0 = 0.65
NIG_SEED = 20240817
NIG_COUNT = 1_000_000


def make_spp_system(rng, n, m=4, weights=None, y=None):
    """Random well-conditioned SPP-style system: unit LOS rows plus clock."""
    while True:
        az = rng.uniform(0.0, 2.0 * np.pi, n)
        el = np.arcsin(rng.uniform(np.sin(np.radians(5.0)), 1.0, n))
        G = np.empty((n, m))
        G[:, 0] = np.cos(el) * np.cos(az)
        G[:, 1] = np.cos(el) * np.sin(az)
        G[:, 2] = np.sin(el)
        G[:, 3] = 1.0
        if np.linalg.cond(G.T @ G) < 1e6:
            break
    w = rng.uniform(0.2, 5.0, n) if weights is None else np.asarray(weights)
    y = rng.standard_normal(n) if y is None else np.asarray(y)
    return LinearSystem(y=y, G=G, w=w, x0=np.zeros(m))


@pytest.fixture(scope="session")
def nig_values():
    return nig_sample(NigParams(NIG_DELTA0), NIG_COUNT, NIG_SEED)


@pytest.fixture(scope="session")
def nig_empirical(nig_values):
    return EmpiricalSample(nig_values)


@pytest.fixture(scope="session")
def gaussian_ob_nig(nig_empirical) -> GaussianOverbound:
    return fit_gaussian_overbound(nig_empirical)


@pytest.fixture(scope="session")
def bgmm_nig(nig_empirical):
    return fit_bgmm_em(nig_empirical)


@pytest.fixture(scope="session")
def pgo_nig(bgmm_nig, nig_empirical) -> Pgo:
    return Pgo(params=build_pgo(bgmm_nig, sample=nig_empirical))
