from __future__ import annotations
from typing import Callable

import numpy as np
import pytest

from sparse_stealth import (
    ObservationModel,
    assemble_model,
    load_case,
    parse_case,
    sigma2_from_snr,
    toeplitz_state_cov,
)

TWO_BUS_CASE = """\
function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1   3   0   0;
    2   1   0   0;
];
mpc.branch = [
    1   2   0   0.5   0   0   0   0   0   0   1;
];
"""

THREE_BUS_RING = """\
function mpc = ring3
mpc.bus = [
    1   3;
    2   2;
    3   1;
];
mpc.branch = [
    1   2   0   0.1   0   0   0   0   0   0   1;
    2   3   0   0.2   0   0   0   0   0   0   1;
    3   1   0   0.25  0   0   0   0   0   0   0;
];
"""


@pytest.fixture
def scalar_model() -> ObservationModel:
    """H = [1], Sxx = [1], sigma2 = 1, hence Syy = [2]."""
    return ObservationModel(H=np.array([[1.0]]), Sigma_XX=np.array([[1.0]]), sigma2=1.0)


@pytest.fixture
def two_bus_text() -> str:
    return TWO_BUS_CASE


@pytest.fixture
def ring_text() -> str:
    return THREE_BUS_RING


@pytest.fixture
def two_bus_case():
    return parse_case(TWO_BUS_CASE)


@pytest.fixture(scope="session")
def ieee9_model() -> ObservationModel:
    return assemble_model(load_case("ieee9"), 0.9, 30.0)


def make_random_model(m: int, n: int, seed: int, *, snr_db: float = 20.0, rho: float = 0.5) -> ObservationModel:
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((m, n))
    Sigma_XX = toeplitz_state_cov(n, rho)
    return ObservationModel(H=H, Sigma_XX=Sigma_XX, sigma2=sigma2_from_snr(H, Sigma_XX, snr_db), rho=rho, snr_db=snr_db)


def random_psd(m: int, rng: np.random.Generator, *, support: list[int] | None = None, scale: float = 1.0) -> np.ndarray:
    support = list(range(m)) if support is None else support
    B = rng.standard_normal((len(support), len(support)))
    S = np.zeros((m, m))
    S[np.ix_(support, support)] = scale * (B @ B.T) / len(support)
    return S


@pytest.fixture
def random_model() -> Callable[..., ObservationModel]:
    return make_random_model


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
