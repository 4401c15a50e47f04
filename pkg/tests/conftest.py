import numpy as np
import pytest

from cdnarec.mann import TrainConfig
from cdnarec.raster import Raster
from cdnarec.recognition import enroll


def random_gallery(k=10, seed=0, size=20):
    rng = np.random.default_rng(seed)
    return [(f"id{i:02d}", Raster(rng.uniform(size=(size, size)))) for i in range(k)]


@pytest.fixture(scope="session")
def reference_enrollment():
    """K=10 gallery of seeded uniform 20x20 matrices, default training."""
    images = random_gallery()
    net, gallery, trace = enroll(images, train_config=TrainConfig())
    return images, net, gallery, trace


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
