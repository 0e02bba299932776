import numpy as np
import pytest

from rs_selfcal.geometry import Pose, rotation_from_axis_angle

# acceptance results collected by test_acceptance.py and echoed in the summary
ACCEPTANCE = {}


def random_rotation(rng, scale=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_from_axis_angle(axis * rng.uniform(0, scale))


def random_pose(rng, rot_scale=np.pi, pos_scale=1.0):
    return Pose(random_rotation(rng, rot_scale), rng.normal(0, pos_scale, 3))


def point_in_front(rng, pose, depth=(2.0, 10.0), half_fov=0.3):
    xy = rng.uniform(-half_fov, half_fov, 2)
    z = rng.uniform(*depth)
    return pose.p + pose.R.T @ (np.array([xy[0], xy[1], 1.0]) * z)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
