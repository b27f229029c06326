import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tessera.errors import OverflowEscape
from tessera.fixtures import airplane_c, rabbit_c, two_fixed_critical_cubic
from tessera.polycore import (
    MonicPolynomial,
    aberth_roots,
    classify,
    critical_points,
    evaluate,
    find_cycles,
    quadratic,
)


def test_evaluate_power_map():
    f = quadratic(0.0)
    assert evaluate(f, 2.0, 3) == 256


def test_evaluate_basilica_superattracting_two_cycle():
    f = quadratic(-1.0)
    assert evaluate(f, 0.0, 2) == 0


def test_evaluate_rabbit_period_three(oracle):
    c = oracle([1, 2, 1, 1], -0.1 + 0.75j)  # Im > 0 root of c^3+2c^2+c+1
    f = quadratic(c)
    assert abs(evaluate(f, 0.0, 3)) < 1e-9


def test_evaluate_overflow_reported():
    f = quadratic(0.0)
    with pytest.raises(OverflowEscape):
        evaluate(f, 3.0, 10_000)


def test_critical_points_quadratic():
    assert critical_points(quadratic(0.0)) == [(0, 1)]
    assert critical_points(quadratic(-1.0)) == [(0, 1)]


def test_critical_points_cubic():
    f = MonicPolynomial(3, (0.0, -3.0))  # z^3 - 3z, f' = 3z^2 - 3
    pts = critical_points(f)
    assert len(pts) == 2
    vals = sorted(p.real for p, _ in pts)
    assert vals == pytest.approx([-1.0, 1.0], abs=1e-9)


def test_critical_multiplicity_sums_to_degree_minus_one():
    rng = np.random.default_rng(7)
    for d in (2, 3, 4, 5):
        coeffs = tuple(rng.standard_normal() + 1j * rng.standard_normal() for _ in range(d - 1))
        f = MonicPolynomial(d, coeffs)
        assert sum(m for _, m in critical_points(f)) == d - 1


def test_find_cycles_power_map():
    cycles = find_cycles(quadratic(0.0), 1)
    kinds = {round(c.points[0].real, 6): c for c in cycles}
    assert kinds[0.0].kind == "superattracting"
    assert kinds[1.0].kind == "repelling"
    assert kinds[1.0].multiplier == pytest.approx(2.0)


def test_find_cycles_basilica_fixed_points(oracle):
    # fixed points of z^2 - 1 are the roots of z^2 - z - 1
    phi = oracle([1, -1, -1], 1.6)
    psi = oracle([1, -1, -1], -0.6)
    cycles = find_cycles(quadratic(-1.0), 1)
    pts = sorted(c.points[0].real for c in cycles)
    assert pts == pytest.approx(sorted([psi.real, phi.real]), abs=1e-9)
    assert all(c.kind == "repelling" for c in cycles)


def test_find_cycles_basilica_two_cycle():
    cycles = find_cycles(quadratic(-1.0), 2)
    two = [c for c in cycles if c.period == 2]
    assert len(two) == 1
    assert abs(two[0].multiplier) < 1e-8
    pts = sorted(round(p.real, 8) for p in two[0].points)
    assert pts == [-1.0, 0.0]


def test_cycle_points_closed_under_evaluate():
    for f in (quadratic(-1.0), quadratic(airplane_c())):
        for cyc in find_cycles(f, 3):
            for p in cyc.points:
                assert abs(evaluate(f, p, cyc.period) - p) < 1e-7 * max(1, abs(p))


def test_superattracting_cycles_contain_a_critical_point():
    for c in (-1.0, airplane_c(), rabbit_c()):
        f = quadratic(c)
        for cyc in find_cycles(f, 3):
            if cyc.kind == "superattracting":
                assert min(abs(p) for p in cyc.points) < 1e-7


def test_classify_basilica(basilica):
    dyn = classify(basilica)
    assert dyn.is_pcf and dyn.is_hyperbolic
    assert dyn.is_primitive_heuristic is False
    d = dyn.critical_orbit_data[0]
    assert (d.preperiod, d.period) == (0, 2)


def test_classify_airplane(airplane):
    dyn = classify(airplane)
    assert dyn.is_pcf and dyn.is_hyperbolic
    assert dyn.is_primitive_heuristic is True


def test_classify_escape():
    dyn = classify(quadratic(1.0))
    assert not dyn.is_pcf
    assert not dyn.is_hyperbolic
    assert dyn.critical_orbit_data[0].escapes


def test_classify_misiurewicz_not_hyperbolic():
    dyn = classify(quadratic(1j))
    assert dyn.is_pcf
    assert not dyn.is_hyperbolic
    d = dyn.critical_orbit_data[0]
    assert (d.preperiod, d.period) == (2, 2)


def test_classify_deterministic(airplane):
    a = classify(airplane, orbit_budget=1500, seed=3)
    b = classify(airplane, orbit_budget=1500, seed=3)
    assert a.is_primitive_heuristic == b.is_primitive_heuristic
    assert [d.period for d in a.critical_orbit_data] == [
        d.period for d in b.critical_orbit_data
    ]


def test_two_fixed_critical_cubic_is_pcf_hyperbolic():
    dyn = classify(two_fixed_critical_cubic())
    assert dyn.is_pcf and dyn.is_hyperbolic
    assert all(d.period == 1 and d.preperiod == 0 for d in dyn.critical_orbit_data)


def test_aberth_roots_random_polynomials():
    rng = np.random.default_rng(11)
    for deg in (3, 8, 17):
        roots_true = rng.standard_normal(deg) + 1j * rng.standard_normal(deg)
        coeffs = np.poly(roots_true)
        got = aberth_roots(coeffs, seed=1)
        got_s = sorted(got, key=lambda z: (round(z.real, 6), round(z.imag, 6)))
        want = sorted(roots_true, key=lambda z: (round(z.real, 6), round(z.imag, 6)))
        assert max(abs(a - b) for a, b in zip(got_s, want)) < 1e-7


@given(st.integers(min_value=2, max_value=5), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_escape_radius_grows_orbits(d, re, im):
    # outside R = max(2, 2 sum|a|) the modulus grows by a definite factor
    # (>= 1.4 just outside; the growth compounds, so escape is guaranteed)
    f = MonicPolynomial(d, (complex(re, im),) + (0.0,) * (d - 2))
    R = f.escape_radius()
    z = (R * 1.01) * cmath.exp(0.7j)
    w = f(z)
    assert abs(w) >= 1.4 * abs(z)
    assert abs(f(w)) >= 1.4 * abs(w)
