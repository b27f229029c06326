import numpy as np
import pytest

from fractions import Fraction

from tessera import fixtures
from tessera.puzzle import make_admissible


@pytest.fixture(scope="session")
def airplane():
    return fixtures.airplane()


@pytest.fixture(scope="session")
def basilica():
    return fixtures.basilica()


@pytest.fixture(scope="session")
def rabbit():
    return fixtures.rabbit()


@pytest.fixture(scope="session")
def airplane_Z(airplane):
    return make_admissible(airplane, [(Fraction(1, 3), Fraction(2, 3))])


def newton_root(coeffs, seed, steps=80):
    """Independent Newton oracle on a polynomial with highest-first coeffs."""
    c = np.asarray(coeffs, dtype=complex)
    dc = c[:-1] * np.arange(len(c) - 1, 0, -1)
    z = complex(seed)
    for _ in range(steps):
        val = np.polyval(c, z)
        der = np.polyval(dc, z)
        if der == 0:
            break
        step = val / der
        z -= step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return z


@pytest.fixture(scope="session")
def oracle():
    return newton_root
