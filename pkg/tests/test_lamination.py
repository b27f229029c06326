from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tessera.angles import angle_orbit, norm_angle, pairs_unlinked
from tessera.errors import InvariantViolation
from tessera.lamination import (
    contains,
    periodic_angles,
    preperiodic_angles,
    rational_lamination,
)
from tessera.polycore import quadratic

F = Fraction


def test_angle_orbit_examples():
    assert angle_orbit(F(1, 3), 2) == (0, 2, [F(1, 3), F(2, 3)])
    assert angle_orbit(F(1, 7), 2) == (0, 3, [F(1, 7), F(2, 7), F(4, 7)])
    assert angle_orbit(F(1, 6), 2) == (1, 2, [F(1, 6), F(1, 3), F(2, 3)])


@given(
    st.integers(min_value=0, max_value=400),
    st.integers(min_value=1, max_value=400),
    st.integers(min_value=2, max_value=5),
)
@settings(max_examples=200, deadline=None)
def test_angle_orbit_exact_identity(p, q, d):
    t = norm_angle(F(p, q))
    pre, per, orbit = angle_orbit(t, d)
    # d^{pre+per} t = d^{pre} t (mod 1), exactly
    assert norm_angle(t * d ** (pre + per)) == norm_angle(t * d**pre)
    assert len(orbit) == pre + per
    assert len(set(orbit)) == pre + per


def test_periodic_angle_enumeration_counts():
    # exact-period-3 angles under doubling: k/7 except 0 -> 6 angles
    assert len(periodic_angles(2, 3)) == 1 + 2 + 6
    pre = preperiodic_angles(2, 2, 1)
    assert all(angle_orbit(t, 2)[0] == 1 for t in pre)


def test_power_map_lamination_trivial():
    lam = rational_lamination(quadratic(0.0), period_bound=3)
    assert lam.classes == []


def test_basilica_lamination_contains_alpha_class(basilica):
    lam = rational_lamination(basilica, period_bound=2)
    assert frozenset({F(1, 3), F(2, 3)}) in lam.classes
    lam.check_invariants()


def test_airplane_lamination_period_three_classes(airplane):
    lam = rational_lamination(airplane, period_bound=3)
    got = set(lam.classes)
    # corrected combinatorics: three co-landing pairs on the characteristic
    # orbit plus the alpha class (see decisions ledger on the spec's triple)
    for cls in (
        {F(1, 3), F(2, 3)},
        {F(3, 7), F(4, 7)},
        {F(2, 7), F(5, 7)},
        {F(1, 7), F(6, 7)},
    ):
        assert frozenset(cls) in got
    assert frozenset({F(3, 7), F(5, 7), F(6, 7)}) not in got
    lam.check_invariants()


def test_rabbit_lamination_alpha_triple(rabbit):
    lam = rational_lamination(rabbit, period_bound=3)
    assert frozenset({F(1, 7), F(2, 7), F(4, 7)}) in lam.classes
    lam.check_invariants()


def test_lamination_monotone_in_period_bound(airplane):
    small = rational_lamination(airplane, period_bound=2, preperiod_bound=0)
    big = rational_lamination(airplane, period_bound=4, preperiod_bound=0)
    ok, witness = contains(big, small)
    assert ok, witness


def test_contains_vacuous(basilica):
    lam_b = rational_lamination(basilica, period_bound=2, preperiod_bound=0)
    lam_p = rational_lamination(quadratic(0.0), period_bound=2, preperiod_bound=0)
    ok, witness = contains(lam_b, lam_p)
    assert ok and witness is None


def test_contains_false_with_witness(airplane, basilica):
    lam_a = rational_lamination(airplane, period_bound=3, preperiod_bound=0)
    lam_b = rational_lamination(basilica, period_bound=3, preperiod_bound=0)
    ok, witness = contains(lam_b, lam_a)
    assert not ok
    assert witness is not None
    # the witness is one of the airplane's period-3 pairs, absent for the basilica
    assert witness in {
        frozenset({F(3, 7), F(4, 7)}),
        frozenset({F(2, 7), F(5, 7)}),
        frozenset({F(1, 7), F(6, 7)}),
    }


def test_contains_transitive_on_fixture_triple(airplane, basilica):
    lam_a2 = rational_lamination(airplane, period_bound=2, preperiod_bound=0)
    lam_a3 = rational_lamination(airplane, period_bound=3, preperiod_bound=0)
    lam_a4 = rational_lamination(airplane, period_bound=4, preperiod_bound=0)
    assert contains(lam_a3, lam_a2)[0]
    assert contains(lam_a4, lam_a3)[0]
    assert contains(lam_a4, lam_a2)[0]


def test_preperiodic_classes_included(basilica):
    lam = rational_lamination(basilica, period_bound=2, preperiod_bound=2)
    # preimages of the alpha class co-land pairwise at preimages of alpha
    assert any(
        cls for cls in lam.classes if all(angle_orbit(t, 2)[0] >= 1 for t in cls)
    )


def test_classes_pairwise_unlinked(airplane):
    lam = rational_lamination(airplane, period_bound=4, preperiod_bound=1)
    cls = list(lam.classes)
    for i in range(len(cls)):
        for j in range(i + 1, len(cls)):
            assert pairs_unlinked(cls[i], cls[j])


def test_forward_invariance_enforced(airplane):
    lam = rational_lamination(airplane, period_bound=3)
    for cls in lam.classes:
        img = frozenset(norm_angle(2 * t) for t in cls)
        if len(img) >= 2 and not (img & set(lam.skipped)):
            assert any(img <= other for other in lam.classes)
