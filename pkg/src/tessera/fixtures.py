"""Named polynomial fixtures, resolved from their defining equations at load.

Parameters are Newton-refined roots (never hard-coded decimals): the period-3
quadratic centers are the roots of c^3 + 2c^2 + c + 1, the basilica is the
nonzero root of c(c + 1).
"""

from __future__ import annotations

import numpy as np

from .polycore import MonicPolynomial, quadratic


def _newton_poly_root(coeffs, seed: complex, steps: int = 80) -> complex:
    """Newton on the polynomial with highest-first coeffs, from seed."""
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
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            break
    return z


_P3 = (1.0, 2.0, 1.0, 1.0)  # c^3 + 2c^2 + c + 1


def basilica_c() -> complex:
    return _newton_poly_root((1.0, 1.0, 0.0), -1.0)  # c^2 + c, nonzero root


def airplane_c() -> complex:
    return _newton_poly_root(_P3, -1.75)


def rabbit_c() -> complex:
    return _newton_poly_root(_P3, -0.12 + 0.75j)


def corabbit_c() -> complex:
    return _newton_poly_root(_P3, -0.12 - 0.75j)


def basilica() -> MonicPolynomial:
    return quadratic(basilica_c())


def airplane() -> MonicPolynomial:
    return quadratic(airplane_c())


def rabbit() -> MonicPolynomial:
    return quadratic(rabbit_c())


def corabbit() -> MonicPolynomial:
    return quadratic(corabbit_c())


def power_map(d: int = 2) -> MonicPolynomial:
    return MonicPolynomial(d, (0.0,) * (d - 1))


def two_fixed_critical_cubic() -> MonicPolynomial:
    """z^3 + (3/2) z: both critical points +-i/sqrt(2) are fixed."""
    return MonicPolynomial(3, (0.0, 1.5))


NAMED = {
    "basilica": basilica,
    "airplane": airplane,
    "rabbit": rabbit,
    "corabbit": corabbit,
    "power2": lambda: power_map(2),
    "power3": lambda: power_map(3),
}


def by_name(name: str) -> MonicPolynomial:
    try:
        return NAMED[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(NAMED)}") from None
