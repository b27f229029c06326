import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from tessera.errors import NoConvergence
from tessera.polycore import classify, quadratic
from tessera.thurston import (
    MarkedPortrait,
    PullbackState,
    portrait_from_polynomial,
    pullback_step,
    recenter_positions,
    thurston_iterate,
)

F = Fraction


def period_portrait(p, angle_cycle):
    """Unicritical period-p quadratic portrait, seeded on the unit circle at
    the given angle cycle of the critical value."""
    ids = tuple(f"x{k}" for k in range(p))
    tr = tuple((f"x{k}", f"x{(k + 1) % p}") for k in range(p))
    ld = tuple((f"x{k}", 2 if k == 0 else 1) for k in range(p))
    port = MarkedPortrait(ids, tr, ld, 2)
    seeds = {"x0": 0j}
    for k in range(1, p):
        seeds[f"x{k}"] = cmath.exp(2j * math.pi * float(angle_cycle[k - 1]))
    return port, seeds


def test_fixed_portrait_zero_displacement(basilica):
    port, pos = portrait_from_polynomial(basilica)
    state = PullbackState(0, recenter_positions(port, pos), None)
    nxt = pullback_step(state, port)
    assert nxt.displacement < 1e-12
    assert nxt.poly.coefficients[0] == pytest.approx(-1.0, abs=1e-12)


def test_rabbit_portrait_converges(oracle):
    want = oracle([1, 2, 1, 1], -0.1 + 0.75j)
    port, seeds = period_portrait(3, [F(1, 7), F(2, 7)])
    res = thurston_iterate(port, seeds)
    assert res.converged
    assert abs(res.poly.coefficients[0] - want) < 1e-8


def test_airplane_portrait_converges(oracle):
    want = oracle([1, 2, 1, 1], -1.75)
    port, seeds = period_portrait(3, [F(3, 7), F(6, 7)])
    res = thurston_iterate(port, seeds)
    assert abs(res.poly.coefficients[0] - want) < 1e-8


def test_basilica_portrait_converges():
    port, seeds = period_portrait(2, [F(1, 3)])
    res = thurston_iterate(port, seeds)
    assert abs(res.poly.coefficients[0] - (-1.0)) < 1e-10


def test_geometric_decay_certificate():
    port, seeds = period_portrait(3, [F(1, 7), F(2, 7)])
    res = thurston_iterate(port, seeds)
    assert res.decay_ratio is not None and res.decay_ratio < 1.0
    tail = res.displacements[-10:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_portrait_equations_hold_per_step():
    port, seeds = period_portrait(3, [F(1, 7), F(2, 7)])
    state = PullbackState(0, recenter_positions(port, seeds), None)
    tr = port.transition_map()
    for _ in range(12):
        nxt = pullback_step(state, port)
        scale = max(abs(v) for v in state.positions.values())
        for i in port.ids:
            err = abs(nxt.poly(nxt.positions[i]) - state.positions[tr[i]])
            assert err <= 1e-9 * max(1.0, scale)
        # monic centered: the z^{d-1} coefficient is structurally absent
        assert len(nxt.poly.coefficients) == port.degree - 1
        state = nxt


def test_result_reproduces_portrait_periods(oracle):
    port, seeds = period_portrait(3, [F(1, 7), F(2, 7)])
    res = thurston_iterate(port, seeds)
    dyn = classify(res.poly, primitivity=False)
    d = dyn.critical_orbit_data[0]
    assert (d.preperiod, d.period) == (0, 3)


def test_riemann_hurwitz_violation_rejected():
    with pytest.raises(ValueError):
        MarkedPortrait(
            ids=("a", "b"),
            transition=(("a", "b"), ("b", "a")),
            local_degree=(("a", 2), ("b", 2)),  # budget 2 > d - 1 = 1
            degree=2,
        ).validate()


def test_no_convergence_reports_history():
    # an impossible portrait: period-2 'superattracting' with both points
    # forced equal by transitions that cannot coexist for degree 2... use a
    # max_iter too small for a legitimate portrait instead
    port, seeds = period_portrait(3, [F(1, 7), F(2, 7)])
    with pytest.raises(NoConvergence) as ei:
        thurston_iterate(port, seeds, max_iter=3)
    assert len(ei.value.history) == 3


def test_misiurewicz_portrait_preperiodic(oracle):
    # z^2 + i: critical orbit 0 -> i -> i-1 -> -i -> i-1 (preperiod 2, period 2)
    ids = ("x0", "x1", "x2", "x3")
    tr = (("x0", "x1"), ("x1", "x2"), ("x2", "x3"), ("x3", "x2"))
    ld = (("x0", 2), ("x1", 1), ("x2", 1), ("x3", 1))
    port = MarkedPortrait(ids, tr, ld, 2)
    seeds = {"x0": 0j, "x1": 1j, "x2": -1 + 1j, "x3": -1j}
    res = thurston_iterate(port, seeds)
    assert abs(res.poly.coefficients[0] - 1j) < 1e-9
