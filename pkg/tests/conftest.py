import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_triplane():
    from triportrait.triplane import procedural_triplane
    return procedural_triplane(11, channels=8, resolution=16)


@pytest.fixture(scope="session")
def small_mlp():
    from triportrait.triplane import random_mlp
    return random_mlp(5, in_features=8, extra_features=4)


@pytest.fixture(scope="session")
def front_camera():
    from triportrait.camera import look_at
    return look_at((0.0, 0.0, 2.7))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
