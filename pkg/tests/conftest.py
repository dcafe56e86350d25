import os

import numpy as np
import pytest

# Environment overrides come from the tests themselves.
os.environ.pop("GELFAND_WORKERS", None)
os.environ.pop("GELFAND_OUTPUT_DIR", None)
os.environ.pop("GELFAND_RECORD_TIMING", None)
os.environ.pop("GELFAND_LOG_LEVEL", None)

from faddeev import FaddeevGreen
from forward import dtn_map
from geometry import build_domain
from potential import generate


@pytest.fixture(scope="module")
def small_domain():
    """Unit box [-1/2, 1/2]^3 with 10 interior points per axis."""
    return build_domain(0.5, 10)


@pytest.fixture(scope="module")
def domain12():
    return build_domain(0.5, 12)


@pytest.fixture(scope="module")
def bump(domain12):
    return generate("cosine_bump", {"amplitude": 0.3}, 0, domain12)


@pytest.fixture(scope="module")
def born_pair(domain12, bump):
    """(v1, v2) in the Born regime: v2 = v1 + a small gaussian."""
    extra = generate("gaussian_bump", {"amplitude": 0.1, "width": 0.1}, 0, domain12)
    return bump, bump + extra


@pytest.fixture(scope="module")
def green12(domain12):
    return FaddeevGreen(domain12)


@pytest.fixture(scope="module")
def born_dtn(domain12, born_pair):
    """DtN maps of the Born pair at E = 2."""
    v1, v2 = born_pair
    return dtn_map(domain12, v1, 2.0), dtn_map(domain12, v2, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
