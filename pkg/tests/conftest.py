import dataclasses

import numpy as np
import pytest

from diffband.levelset import get_problem
from diffband.stepper import RunConfig, Stepper
from diffband.verify import coarse_config


@pytest.fixture(scope="session")
def ex1():
    return get_problem("ex1")


@pytest.fixture(scope="session")
def coarse_ex1_state():
    """Initial state of Ex1 on a 40-cell quarter grid."""
    st = Stepper(get_problem("ex1"), coarse_config("ex1", cells=40))
    return st, st.initial_state()


@pytest.fixture(scope="session")
def coarse_ex3_states():
    st = Stepper(get_problem("ex3"), coarse_config("ex3", cells=80))
    s0 = st.initial_state()
    s1 = st.advance(s0, st.p.tau, 1)
    return st, s0, s1


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
