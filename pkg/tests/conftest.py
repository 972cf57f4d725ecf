import math

import pytest

from stopping_game import GameSpec, LevyModel, solve_equilibrium

CASE_STUDY = dict(mu=0.31333, nu=0.2, alpha=1.0, beta=2.0, q=0.05, lam=1.0, k_c=50.0, k_p=60.0)


@pytest.fixture(scope="session")
def model():
    return LevyModel(CASE_STUDY["mu"], CASE_STUDY["nu"], CASE_STUDY["alpha"], CASE_STUDY["beta"])


@pytest.fixture(scope="session")
def bv_model():
    """Bounded-variation counterpart (no Brownian part)."""
    return LevyModel(1.0, 0.0, 1.0, 2.0)


@pytest.fixture(scope="session")
def spec():
    return GameSpec.case_study()


@pytest.fixture(scope="session")
def eq(spec):
    return solve_equilibrium(spec)


@pytest.fixture(scope="session")
def bv_spec():
    return GameSpec.case_study(nu=0.0)


@pytest.fixture(scope="session")
def bv_eq(bv_spec):
    return solve_equilibrium(bv_spec)


LOG = math.log
