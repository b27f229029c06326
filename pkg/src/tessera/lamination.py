"""Rational laminations: co-landing equivalence classes of rational angles.

Classes are computed by landing rays and clustering landing points, with a
two-scale confirmation (re-landing at a deeper cutoff must reproduce the
clustering). Singleton classes are implicit and never stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .angles import RationalAngle, angle_orbit, norm_angle, pairs_unlinked
from .errors import InvariantViolation, LandingUnresolved
from .polycore import MonicPolynomial
from .potential import land_ray

TOL_CLUSTER = 1e-5


@dataclass
class RationalLamination:
    classes: list            # list of frozenset[Fraction], each of size >= 2
    period_bound: int
    preperiod_bound: int
    degree: int
    landing_points: dict = field(default_factory=dict)  # class -> complex
    skipped: list = field(default_factory=list)          # angles with unresolved landing

    def class_of(self, t) -> Optional[frozenset]:
        t = norm_angle(t)
        for cls in self.classes:
            if t in cls:
                return cls
        return None

    def check_invariants(self):
        """Pairwise disjoint, unlinked, forward invariant; raises on failure."""
        seen = set()
        for cls in self.classes:
            if seen & cls:
                raise InvariantViolation(f"classes overlap at {seen & cls}")
            seen |= cls
        for i in range(len(self.classes)):
            for j in range(i + 1, len(self.classes)):
                if not pairs_unlinked(self.classes[i], self.classes[j]):
                    raise InvariantViolation(
                        f"linked classes {sorted(self.classes[i])} / {sorted(self.classes[j])}"
                    )
        skipped = set(self.skipped)
        for cls in self.classes:
            img = frozenset(norm_angle(self.degree * t) for t in cls)
            if len(img) == 1 or img & skipped:
                continue
            if not any(img <= other for other in self.classes):
                raise InvariantViolation(f"image of {sorted(cls)} not contained in a class")


def periodic_angles(d: int, period_bound: int):
    """All angles of exact m_d-period <= period_bound."""
    out = []
    for p in range(1, period_bound + 1):
        q = d**p - 1
        for k in range(q):
            t = Fraction(k, q)
            pre, per, _ = angle_orbit(t, d)
            if pre == 0 and per == p:
                out.append(t)
    return out


def preperiodic_angles(d: int, period_bound: int, preperiod_bound: int):
    """Angles with exact preperiod in [1, preperiod_bound] over the periodic set."""
    out = []
    for p in range(1, period_bound + 1):
        q = d**p - 1
        for ell in range(1, preperiod_bound + 1):
            den = q * d**ell
            for k in range(den):
                t = Fraction(k, den)
                pre, per, _ = angle_orbit(t, d)
                if pre == ell and per <= period_bound:
                    out.append(t)
    return sorted(set(out))


def _cluster_landings(landings, tol):
    """Greedy clustering of {angle: point}; returns list of (angles, point)."""
    items = sorted(landings.items())
    clusters = []
    for t, z in items:
        for cl in clusters:
            if abs(z - cl[1]) <= tol:
                cl[0].append(t)
                cl[1] = (cl[1] * (len(cl[0]) - 1) + z) / len(cl[0])
                break
        else:
            clusters.append([[t], z])
    return clusters


def rational_lamination(
    f: MonicPolynomial,
    period_bound: int,
    preperiod_bound: int = 2,
    tol_cluster: float = TOL_CLUSTER,
    l_min: float = 1e-8,
    confirm_two_scale: bool = True,
) -> RationalLamination:
    """lambda(f) restricted to angles of period <= period_bound (plus preperiods).

    Angles whose landing fails the Cauchy certificate are excluded and listed
    in `skipped`. False merges are guarded by re-landing each nontrivial
    cluster at l_min/10 and insisting on the same grouping.
    """
    d = f.degree
    angles = periodic_angles(d, period_bound) + preperiodic_angles(
        d, period_bound, preperiod_bound
    )
    landings = {}
    skipped = []
    for t in angles:
        try:
            landings[t] = land_ray(f, t, l_min=l_min)
        except LandingUnresolved:
            skipped.append(t)
    clusters = _cluster_landings(landings, tol_cluster)
    classes = []
    points = {}
    for cl_angles, z in clusters:
        if len(cl_angles) < 2:
            continue
        if confirm_two_scale:
            deep = {}
            okset = []
            for t in cl_angles:
                try:
                    deep[t] = land_ray(f, t, l_min=l_min / 10)
                    okset.append(t)
                except LandingUnresolved:
                    skipped.append(t)
            sub = _cluster_landings({t: deep[t] for t in okset}, tol_cluster)
            for sub_angles, sz in sub:
                if len(sub_angles) >= 2:
                    key = frozenset(sub_angles)
                    classes.append(key)
                    points[key] = sz
        else:
            key = frozenset(cl_angles)
            classes.append(key)
            points[key] = z
    lam = RationalLamination(
        classes=classes,
        period_bound=period_bound,
        preperiod_bound=preperiod_bound,
        degree=d,
        landing_points=points,
        skipped=sorted(set(skipped)),
    )
    lam.check_invariants()
    return lam


def contains(big: RationalLamination, small: RationalLamination):
    """Is every class of `small` contained in a class of `big`?

    Returns (flag, witness); witness is the first violating class of `small`.
    Both laminations must be for the same degree, with small.period_bound <=
    big.period_bound.
    """
    if big.degree != small.degree:
        raise ValueError("laminations of different degrees")
    if small.period_bound > big.period_bound:
        raise ValueError("small lamination checked to a larger bound than big")
    for cls in small.classes:
        if not any(cls <= other for other in big.classes):
            return False, cls
    return True, None


__all__ = [
    "RationalAngle",
    "RationalLamination",
    "angle_orbit",
    "contains",
    "periodic_angles",
    "preperiodic_angles",
    "rational_lamination",
]
