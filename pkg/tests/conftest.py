"""Shared fixtures: random cameras, rigs and the bundled pose pool."""

from __future__ import annotations

import numpy as np
import pytest

from volmocap.geometry import Camera, look_at, ring_rig
from volmocap.io import load_corpus
from volmocap.synth import filter_poses


def random_camera(rng, target=None, cam_id=0, image_size=(640, 480)):
    """A camera on a random sphere shell looking near ``target``."""
    target = np.zeros(3) if target is None else np.asarray(target, dtype=float)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    position = target + direction * rng.uniform(2.0, 8.0)
    aim = target + rng.normal(scale=0.2, size=3)
    R, t = look_at(position, aim, up=(0.0, 0.0, 1.0) if abs(direction[2]) < 0.95 else (1.0, 0.0, 0.0))
    f = rng.uniform(300.0, 1500.0)
    w, h = image_size
    K = np.array([[f, rng.uniform(-1, 1), w / 2 + rng.uniform(-20, 20)],
                  [0.0, f * rng.uniform(0.95, 1.05), h / 2 + rng.uniform(-20, 20)],
                  [0.0, 0.0, 1.0]])
    return Camera(K, R, t, image_size, id=cam_id)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def rig4():
    return ring_rig(4)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def pool(corpus):
    return filter_poses(corpus)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines as one block after the run."""
    import sys

    lines = getattr(sys.modules.get("test_acceptance"), "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
