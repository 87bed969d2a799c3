import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from adaptzupt.gaitsim import GAIT_PRESETS, NoiseSpec, TrajectorySpec, imu_from_trajectory, synth_trajectory  # noqa: E402


@lru_cache(maxsize=None)
def simulated(gait="walk", laps=1, seed=0, noise="consumer"):
    """Cached (ImuSequence, GroundTruth) for a rectangle walk."""
    gt = synth_trajectory(TrajectorySpec.rectangle_preset(laps=laps), GAIT_PRESETS[gait], 100.0, seed=seed)
    spec = NoiseSpec.consumer(seed) if noise == "consumer" else NoiseSpec(seed=seed)
    return imu_from_trajectory(gt, spec), gt


@pytest.fixture(scope="session")
def walk_noisy():
    return simulated("walk", 1, 0, "consumer")


@pytest.fixture(scope="session")
def walk_clean():
    return simulated("walk", 1, 0, "none")


# one "CRITERION n: PASS|FAIL ..." line per acceptance criterion, echoed in the summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
