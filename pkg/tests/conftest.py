import numpy as np
import pytest

from ibpl import _backend
from ibpl.world_gen import WorldSpec, build_confounder_world, build_random_world

BACKENDS = ["python"] + (["compiled"] if _backend.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def confounder():
    return build_confounder_world()


def random_world(seed, n_source=5, n_pivot=7, pairs=(), concentration=1.0):
    return build_random_world(WorldSpec(n_source, n_pivot, pairs, concentration, seed))


def world_sweep(count, max_source, max_pivot, base_seed=0):
    """Seeded worlds of assorted shapes, sizes drawn from the seed itself."""
    rng = np.random.Generator(np.random.PCG64(base_seed))
    out = []
    for k in range(count):
        ns = int(rng.integers(2, max_source + 1))
        ny = int(rng.integers(2, max_pivot + 1))
        conc = float(rng.choice([0.3, 1.0, 3.0]))
        out.append(random_world(base_seed * 1000 + k, ns, ny, (), conc))
    return out


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, title, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {key:>2}. {title}: {detail}")
