import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mtev.assembly import assemble_reduced
from mtev.mesh import build_mesh
from mtev.refraction import parse_model

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ms_cache():
    cache = {}

    def get(domain, model, n):
        key = (domain, model, n)
        if key not in cache:
            cache[key] = assemble_reduced(build_mesh(domain, n), parse_model(model))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
