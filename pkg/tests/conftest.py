import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shaperet import shapes
from shaperet.mesh import estimate_geometry

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere3():
    return shapes.icosphere(3)


@pytest.fixture(scope="session")
def sphere4_r2():
    return shapes.icosphere(4, 2.0)


@pytest.fixture(scope="session")
def grid():
    return shapes.flat_grid(21, 2.0)


@pytest.fixture(scope="session")
def bump():
    return shapes.bump_plane()


@pytest.fixture(scope="session")
def capsule():
    return shapes.capsule()


@pytest.fixture(scope="session")
def sphere3_geometry(sphere3):
    return estimate_geometry(sphere3)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    """The bundled 18-mesh, 3-class toy dataset."""
    return shapes.write_toy_dataset(tmp_path_factory.mktemp("toy"))


@pytest.fixture(scope="session")
def toy_cache(tmp_path_factory):
    """Cache shared by every test that runs the pipeline on the toy dataset."""
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def small_toy_dir(tmp_path_factory):
    return shapes.write_toy_dataset(tmp_path_factory.mktemp("small_toy"), instances=2, seed=3)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    def skip(number, title, reason):
        lines.append(f"[SKIP] criterion {number:>2}: {title} ({reason})")
        pytest.skip(reason)

    check.skip = skip
    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
