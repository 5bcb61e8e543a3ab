import numpy as np
import pytest

from tube_synopsis.core.tube_model import Tube, TubeDatabase


def make_tube(tube_id, start, length, x=0, y=0, w=10, h=10, vx=0, vy=0, object_id=None):
    records = [(start + k, x + vx * k, y + vy * k, w, h) for k in range(length)]
    return Tube.from_records(tube_id, records, object_id=object_id)


def make_db(tubes, width=200, height=200, **kwargs):
    return TubeDatabase(tuple(tubes), width, height, **kwargs)


def random_db(rng, n_tubes, horizon=200, width=160, height=120, max_length=40):
    """Random linear tubes that stay inside the scene"""
    tubes = []
    for tube_id in range(n_tubes):
        w, h = (int(v) for v in rng.integers(4, 16, size=2))
        length = int(rng.integers(1, max_length + 1))
        start = int(rng.integers(0, horizon - length + 1))
        x0, x1 = (int(v) for v in rng.integers(0, width - w + 1, size=2))
        y0, y1 = (int(v) for v in rng.integers(0, height - h + 1, size=2))
        steps = np.linspace(0.0, 1.0, length)
        records = [
            (start + k, int(round(x0 + (x1 - x0) * s)), int(round(y0 + (y1 - y0) * s)), w, h)
            for k, s in enumerate(steps)
        ]
        tubes.append(Tube.from_records(tube_id, records))
    return TubeDatabase(tuple(tubes), width, height)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tube_factory():
    return make_tube


@pytest.fixture
def db_factory():
    return make_db


@pytest.fixture
def two_tube_db():
    """Two tubes that share frames 5..9 and sit 30 px apart"""
    return make_db([make_tube(0, 0, 10, x=10, y=10), make_tube(1, 5, 10, x=40, y=10)])
