import os

import pytest
from hypothesis import HealthCheck, settings

os.environ.setdefault("MPLBACKEND", "Agg")

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def models():
    from fujitalab.geometry import make_manifold
    return {
        "R1": make_manifold("euclidean", 1),
        "R2": make_manifold("euclidean", 2),
        "R3": make_manifold("euclidean", 3),
        "S1": make_manifold("circle", 1, 1.0),
        "S2": make_manifold("sphere", 2, 1.0),
        "S3": make_manifold("sphere", 3, 1.0),
        "H2": make_manifold("hyperbolic", 2, 1.0),
        "H3": make_manifold("hyperbolic", 3, 1.0),
    }
