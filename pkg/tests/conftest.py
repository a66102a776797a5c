import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def image_features():
    """Default 5-class image benchmark through the default toy backbone."""
    from oclbench.backbone import ToyBackbone
    from oclbench.datasets import gen_image_dataset

    ds = gen_image_dataset()
    bb = ToyBackbone()
    return bb.forward_batch(ds.train_x), ds.train_y, bb.forward_batch(ds.test_x), ds.test_y


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
