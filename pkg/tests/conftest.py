import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import aces.aces as aces_loop  # noqa: E402
from aces import load_bundled, validate_flat_embedding  # noqa: E402

#: Every plan accepted by a solve during the session, with its validator verdict.
SOLVE_LOG: list = []


@pytest.fixture(autouse=True, scope="session")
def _validate_every_solve():
    """Replay every accepted solve through the validator, suite-wide."""
    original = aces_loop.solve_flat

    @functools.wraps(original)
    def checked(instance, T, budget, backend=None):
        flat, sol = original(instance, T, budget, backend)
        if flat is not None:
            report = validate_flat_embedding(instance, flat)
            SOLVE_LOG.append((instance.name, T, sol.status, len(report)))
            assert report.ok, f"{instance.name} T={T}: accepted solve rejected by validator: {list(report)[:3]}"
        return flat, sol

    aces_loop.solve_flat = checked
    yield
    aces_loop.solve_flat = original


@pytest.fixture(scope="session")
def corridor():
    return load_bundled("corridor")


@pytest.fixture(scope="session")
def toy_car():
    return load_bundled("toy_car")


@pytest.fixture(scope="session")
def open5x5():
    return load_bundled("open5x5")


@pytest.fixture(scope="session")
def ring2():
    return load_bundled("ring2")


@pytest.fixture(scope="session")
def toy_car_flat(toy_car):
    from helpers import solve_T

    flat, sol = solve_T(toy_car, 6)
    assert flat is not None
    return flat, sol
