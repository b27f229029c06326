"""Exact angle arithmetic in Q/Z under multiplication maps t -> d*t mod 1."""

from __future__ import annotations

from fractions import Fraction
from typing import Tuple

RationalAngle = Fraction  # angles are exact rationals in [0, 1)


def norm_angle(t) -> Fraction:
    t = Fraction(t)
    return t - (t.numerator // t.denominator)


def angle_orbit(t, d: int) -> Tuple[int, int, list]:
    """Exact (preperiod, period, orbit) of t under m_d: t -> d*t mod 1.

    The orbit list covers preperiod + period distinct angles, starting at t.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    t = norm_angle(t)
    seen = {}
    seq = []
    cur = t
    while cur not in seen:
        seen[cur] = len(seq)
        seq.append(cur)
        cur = norm_angle(d * cur)
    pre = seen[cur]
    per = len(seq) - pre
    return pre, per, seq


def is_periodic(t, d: int) -> bool:
    pre, _, _ = angle_orbit(t, d)
    return pre == 0


def circular_cmp_key(t) -> Fraction:
    return norm_angle(t)


def in_open_arc(x, a, b) -> bool:
    """Is angle x strictly inside the arc from a to b going counterclockwise?"""
    x, a, b = norm_angle(x), norm_angle(a), norm_angle(b)
    if a == b:
        return False
    if a < b:
        return a < x < b
    return x > a or x < b


def arc_length(a, b) -> Fraction:
    """Length of the counterclockwise arc from a to b."""
    a, b = norm_angle(a), norm_angle(b)
    return norm_angle(b - a) if a != b else Fraction(0)


def pairs_unlinked(p, q) -> bool:
    """Do the chords spanned by angle sets p and q avoid crossing?

    Two finite angle sets are unlinked when one lies entirely inside a single
    complementary arc of the other.
    """
    p = sorted(norm_angle(t) for t in p)
    q = [norm_angle(t) for t in q]
    if set(p) & set(q):
        return False  # sharing an angle counts as not disjointly unlinked
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        if all(in_open_arc(x, a, b) for x in q):
            return True
    return False


def digits(t, d: int, n: int) -> list:
    """First n base-d digits of t in [0,1)."""
    t = norm_angle(t)
    out = []
    for _ in range(n):
        t = d * t
        k = t.numerator // t.denominator
        out.append(int(k))
        t = t - k
    return out


def from_periodic_digits(pre: list, per: list, d: int) -> Fraction:
    """Angle with base-d expansion 0.pre(per)^infinity, exact."""
    if not per:
        raise ValueError("periodic part must be nonempty")
    p = len(pre)
    q = len(per)
    head = 0
    for e in pre:
        head = head * d + e
    body = 0
    for e in per:
        body = body * d + e
    return norm_angle(Fraction(head, d**p) + Fraction(body, d**p * (d**q - 1)))
