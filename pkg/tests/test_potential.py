import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from tessera.errors import LandingUnresolved, TooDeep
from tessera.fixtures import rabbit_c
from tessera.polycore import quadratic
from tessera.potential import (
    boettcher,
    equipotential,
    green,
    land_ray,
    ray_point,
    trace_ray,
)

F = Fraction


def green_oracle(c: complex, z: complex, n: int = 60) -> float:
    """Independent oracle: log|f^k(z)| accumulated in log space via
    log|f(w)| = 2 log|w| + log|1 + c/w^2|, then divided by 2^k."""
    logmod = math.log(abs(z))
    w = complex(z)
    k = 0
    while k < n:
        u = 1 + c / (w * w)
        logmod = 2 * logmod + math.log(abs(u))
        w = w * w + c
        k += 1
        if abs(w) > 1e60:
            break
    return logmod / 2**k


def test_green_power_map_log_abs():
    assert green(quadratic(0.0), 2.0) == pytest.approx(math.log(2), rel=1e-12)
    assert green(quadratic(0.0), 0.5) == 0.0


def test_green_basilica_at_ten_matches_high_iterate_oracle():
    got = green(quadratic(-1.0), 10.0)
    want = green_oracle(-1.0, 10.0)
    assert got == pytest.approx(want, rel=1e-10)
    # the o(1) gap to log 10 at |z| = 10 is about 5e-3
    assert abs(got - math.log(10)) < 6e-3


def test_green_functional_equation_random_points():
    rng = np.random.default_rng(5)
    for c in (0.0, -1.0, 0.3 + 0.2j):
        f = quadratic(c)
        n = 0
        tried = 0
        while n < 1000 and tried < 20000:
            tried += 1
            z = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
            g = green(f, z)
            if not (1e-3 <= g <= 10):
                continue
            n += 1
            lhs = green(f, f(z))
            assert abs(lhs - 2 * g) <= 1e-9 * max(1.0, 2 * g)
        assert n == 1000


def test_boettcher_power_map_is_identity():
    assert boettcher(quadratic(0.0), 3.0) == pytest.approx(3.0, rel=1e-12)


def test_boettcher_far_asymptotics():
    for c in (-1.0, 0.25j):
        f = quadratic(c)
        z = 1e6 * cmath.exp(1.1j)
        assert abs(boettcher(f, z) - z) <= 1e-4 * abs(z)


def test_boettcher_on_zero_ray_of_basilica():
    f = quadratic(-1.0)
    z = ray_point(f, F(0), 1.0)
    w = boettcher(f, z)
    assert w == pytest.approx(cmath.exp(1), rel=1e-8)


def test_boettcher_equivariance_random_escaping():
    rng = np.random.default_rng(9)
    for c in (-1.0, rabbit_c()):
        f = quadratic(c)
        n = 0
        tried = 0
        while n < 200 and tried < 40000:
            tried += 1
            z = complex(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5))
            g = green(f, z)
            if not (1e-3 <= g <= 5):
                continue
            n += 1
            lhs = boettcher(f, f(z))
            rhs = boettcher(f, z) ** 2
            assert abs(lhs - rhs) <= 1e-8 * abs(rhs)
        assert n == 200


def test_boettcher_too_deep():
    with pytest.raises(TooDeep):
        boettcher(quadratic(-1.0), 0.01)


def test_trace_ray_power_map_radial():
    ray = trace_ray(quadratic(0.0), F(1, 3), 1e-6)
    direction = cmath.exp(2j * math.pi / 3)
    for l, z in ray.samples:
        assert abs(z - math.exp(l) * direction) < 1e-9 * max(1, abs(z))
    assert abs(ray.endpoint() - direction) < 1e-5


def test_ray_mapping_property():
    f = quadratic(-1.0)
    for t in (F(1, 3), F(1, 7), F(5, 12)):
        ray = trace_ray(f, t, 1e-5)
        up = trace_ray(f, 2 * t % 1, 1e-5)
        lookup = {round(l, 12): z for l, z in up.samples}
        for l, z in ray.samples:
            key = round(2 * l, 12)
            if key in lookup:
                assert abs(f(z) - lookup[key]) < 1e-6 * max(1.0, abs(lookup[key]))


def test_ray_samples_match_green():
    f = quadratic(rabbit_c())
    ray = trace_ray(f, F(2, 7), 1e-6)
    for l, z in ray.samples:
        assert abs(green(f, z) - l) <= 1e-6 * l


def test_land_power_map_rational():
    for t in (F(0), F(1, 3), F(1, 7), F(3, 5)):
        z = land_ray(quadratic(0.0), t, l_min=1e-9)
        assert abs(z - cmath.exp(2j * math.pi * float(t))) < 1e-9


def test_land_basilica_alpha(oracle):
    alpha = oracle([1, -1, -1], -0.6)  # z^2 - z - 1, the root inside the disk
    f = quadratic(-1.0)
    za = land_ray(f, F(1, 3), l_min=1e-8)
    zb = land_ray(f, F(2, 3), l_min=1e-8)
    assert abs(za - zb) < 1e-6
    assert abs(za - alpha) < 1e-6


def test_land_airplane_fixed_alpha(oracle):
    # rays 1/3 and 2/3 land at the alpha fixed point (root of z^2 + c - z);
    # the spec's 3/7-triple claim is a defect, see the decisions ledger
    c = oracle([1, 2, 1, 1], -1.75)
    alpha = oracle([1, -1, c], -0.9)
    f = quadratic(c)
    assert abs(2 * alpha) > 1
    for t in (F(1, 3), F(2, 3)):
        assert abs(land_ray(f, t) - alpha) < 1e-6


def test_land_airplane_period_three_pairs():
    c = -1.7548776662466927
    f = quadratic(c)
    pairs = [(F(3, 7), F(4, 7)), (F(2, 7), F(5, 7)), (F(1, 7), F(6, 7))]
    pts = []
    for a, b in pairs:
        za, zb = land_ray(f, a), land_ray(f, b)
        assert abs(za - zb) < 1e-6
        pts.append(za)
    # the three pairs land on a single period-3 orbit
    assert abs(f(pts[1]) - pts[0]) < 1e-6
    assert abs(f(pts[0]) - pts[2]) < 1e-6
    assert abs(f(pts[2]) - pts[1]) < 1e-6
    assert len({round(p.real, 4) for p in pts}) == 3


def test_land_rabbit_alpha_all_three(rabbit):
    alpha = (1 - cmath.sqrt(1 - 4 * rabbit.coefficients[0])) / 2
    for t in (F(1, 7), F(2, 7), F(4, 7)):
        assert abs(land_ray(rabbit, t, l_min=1e-8) - alpha) < 1e-6


def test_landing_cauchy_certificate_failure_surfaces():
    # at a hopeless l_min the tail cannot be certified
    f = quadratic(rabbit_c())
    with pytest.raises(LandingUnresolved):
        land_ray(f, F(1, 7), l_min=0.2)


def test_equipotential_power_map():
    eq = equipotential(quadratic(0.0), 1.0, 4)
    assert all(abs(abs(z) - math.e) < 1e-9 for z in eq.points)


def test_equipotential_green_level(basilica):
    eq = equipotential(basilica, 1.0, 64)
    for z in eq.points:
        assert abs(green(basilica, z) - 1.0) <= 1e-6


def test_equipotential_winds_once_around_rabbit(rabbit):
    eq = equipotential(rabbit, 0.5, 256)
    pts = np.array(eq.points)
    args = np.angle(pts)
    winding = np.round(np.diff(np.unwrap(args)).sum() / (2 * np.pi))
    assert winding == 1


def test_extended_precision_deep_power_ray():
    z = land_ray(quadratic(0.0), F(1, 5), l_min=1e-12, mp_dps=40)
    assert abs(z - cmath.exp(2j * math.pi / 5)) < 1e-10
