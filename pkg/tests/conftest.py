import numpy as np
import pytest

from mvkit.rotations import random_quat
from mvkit.sequence import MotionSequence
from mvkit.skeleton import default_skeleton


@pytest.fixture(scope="session")
def skel():
    return default_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sequence(seed, frames=12, joints=24, betas=True, translation=True, fps=30.0):
    rng = np.random.default_rng(seed)
    return MotionSequence(
        quats=random_quat(rng, (frames, joints)),
        fps=fps,
        name=f"rand{seed}",
        betas=rng.normal(0, 1, (frames, 10)) if betas else None,
        root_translation=rng.normal(0, 1, (frames, 3)) if translation else None,
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
