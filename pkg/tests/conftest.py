import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sphereproj.mesh import TriangleMesh, icosphere

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("ci", deadline=None, max_examples=15)
settings.load_profile("default")


@pytest.fixture(scope="session")
def unit_sphere():
    v, t = icosphere(4)
    return TriangleMesh(v, t, "sphere")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_cube() -> TriangleMesh:
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    # outward winding on the 8-corner cube, two triangles per face
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    t = [tri for a, b, c, d in quads for tri in ((a, b, c), (a, c, d))]
    return TriangleMesh(v, t, "cube")


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str, seconds: float) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail} ({seconds:.1f}s)"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
