import numpy as np
import pytest

from stratrec import default_catalog
from stratrec.dialogue import apply_system_turn, apply_user_turn, new_session
from stratrec.features import FEATURE_DIM, FeatureVector
from stratrec.kernels import warmup


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # pay JIT compilation once, outside any timed assertions
    warmup()


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_feature_vector(rng, n_active=12, dim=FEATURE_DIM):
    idx = np.sort(rng.choice(dim, size=n_active, replace=False)).astype(np.int64)
    vals = rng.uniform(0.2, 2.0, size=n_active)
    return FeatureVector(indices=idx, values=vals)


@pytest.fixture
def mid_session_state(catalog):
    state = new_session("s1", opening_user_text="hi, looking for a movie")
    state = apply_system_turn(state, 5, "Happy to help you find something.")
    state = apply_user_turn(state, "maybe a comedy")
    state = apply_system_turn(state, 0, "Comedies are a great choice.")
    state = apply_user_turn(state, "yes something light")
    return state
