"""Reduced mapping schemes, generalized polynomials, fiberwise rays.

A vertex is keyed by the periodic critical point whose Fatou component it
names; sigma and the return times come from first returns of the critical
orbit to critical components. Internal angle systems are exact rationals
with d^{r(v)} * theta_v = theta_{sigma(v)} (mod 1) as integer arithmetic.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .angles import angle_orbit, norm_angle
from .errors import (
    AngleSearchFailed,
    Inconclusive,
    NewtonDivergence,
    NotHyperbolicPCF,
)
from .polycore import DynClass, MonicPolynomial, classify
from .potential import ESCAPE_BIG, _Level, land_ray, _phi_far
from fractions import Fraction as _F


@dataclass(frozen=True)
class MappingScheme:
    vertices: tuple                 # vertex ids, strings
    sigma: tuple                    # tuple of (v, sigma(v)) pairs, frozen
    delta: tuple                    # tuple of (v, delta(v))
    r: tuple                        # tuple of (v, r(v))
    centers: tuple = ()             # tuple of (v, complex center)

    def sigma_map(self) -> dict:
        return dict(self.sigma)

    def delta_map(self) -> dict:
        return dict(self.delta)

    def r_map(self) -> dict:
        return dict(self.r)

    def centers_map(self) -> dict:
        return dict(self.centers)

    def structurally_equal(self, other: "MappingScheme") -> bool:
        return (
            self.vertices == other.vertices
            and dict(self.sigma) == dict(other.sigma)
            and dict(self.delta) == dict(other.delta)
            and dict(self.r) == dict(other.r)
        )

    def validate(self, source_degree: Optional[int] = None):
        sig, dlt, rr = self.sigma_map(), self.delta_map(), self.r_map()
        for v in self.vertices:
            if v not in sig or sig[v] not in self.vertices:
                raise ValueError(f"sigma not total at {v}")
            if dlt.get(v, 0) < 2:
                raise ValueError(f"delta({v}) must be >= 2")
            if rr.get(v, 0) < 1:
                raise ValueError(f"r({v}) must be >= 1")
        if source_degree is not None:
            if sum(dlt[v] - 1 for v in self.vertices) > source_degree - 1:
                raise ValueError("critical multiplicity budget exceeded")


@dataclass(frozen=True)
class GeneralizedPolynomial:
    scheme: MappingScheme
    fibers: tuple  # tuple of (vertex, MonicPolynomial)

    def fiber(self, v) -> MonicPolynomial:
        return dict(self.fibers)[v]

    def validate(self):
        dlt = self.scheme.delta_map()
        fib = dict(self.fibers)
        for v in self.scheme.vertices:
            if v not in fib:
                raise ValueError(f"missing fiber at {v}")
            if fib[v].degree != dlt[v]:
                raise ValueError(
                    f"fiber at {v} has degree {fib[v].degree}, scheme wants {dlt[v]}"
                )


def power_fibers(scheme: MappingScheme) -> GeneralizedPolynomial:
    """The generalized polynomial with every fiber z^{delta(v)}."""
    dlt = scheme.delta_map()
    fibers = tuple(
        (v, MonicPolynomial(dlt[v], (0.0,) * (dlt[v] - 1))) for v in scheme.vertices
    )
    return GeneralizedPolynomial(scheme, fibers)


@dataclass
class InternalAngleSystem:
    theta: dict                      # vertex -> Fraction
    landing_points: dict = field(default_factory=dict)  # vertex -> complex (z_v)
    partners: dict = field(default_factory=dict)         # vertex -> Fraction (other angle at z_v)

    def check_compatibility(self, scheme: MappingScheme, d: int):
        sig, rr = scheme.sigma_map(), scheme.r_map()
        for v in scheme.vertices:
            lhs = norm_angle(d ** rr[v] * self.theta[v])
            if lhs != norm_angle(self.theta[sig[v]]):
                raise ValueError(
                    f"compatibility fails at {v}: {d}^{rr[v]} * {self.theta[v]} != {self.theta[sig[v]]}"
                )


# -- scheme extraction ---------------------------------------------------------


def reduced_scheme(f0: MonicPolynomial, dyn: Optional[DynClass] = None, seed: int = 0) -> MappingScheme:
    """T(f0) for a PCF hyperbolic polynomial.

    Vertices are the periodic critical points (their components); r(v) is the
    first return time of the orbit to a critical component; delta(v) the local
    degree of f0 at the critical point.
    """
    if dyn is None:
        dyn = classify(f0, primitivity=False, seed=seed)
    if not (dyn.is_pcf and dyn.is_hyperbolic):
        raise NotHyperbolicPCF("reduced_scheme needs a PCF hyperbolic polynomial")
    periodic_crits = [
        (d.critical_point, d.multiplicity, d.period)
        for d in dyn.critical_orbit_data
        if d.preperiod == 0
    ]
    if not periodic_crits:
        raise NotHyperbolicPCF("no periodic critical points")
    # canonical vertex order: by (re, im) of the critical point
    periodic_crits.sort(key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9)))
    names = [f"v{i}" for i in range(len(periodic_crits))]
    centers = {n: c for n, (c, _, _) in zip(names, periodic_crits)}

    def vertex_of(z: complex) -> Optional[str]:
        for n in names:
            if abs(z - centers[n]) < 1e-7 * max(1.0, abs(centers[n])) + 1e-9:
                return n
        return None

    sigma, rmap, dmap = {}, {}, {}
    for n, (c, mult, period) in zip(names, periodic_crits):
        w = c
        for k in range(1, period + 1):
            w = f0(w)
            tgt = vertex_of(w)
            if tgt is not None:
                sigma[n] = tgt
                rmap[n] = k
                break
        else:
            raise NotHyperbolicPCF(
                f"critical orbit of {c:.6g} never returns to a critical component"
            )
        dmap[n] = mult + 1
    sch = MappingScheme(
        vertices=tuple(names),
        sigma=tuple(sorted(sigma.items())),
        delta=tuple(sorted(dmap.items())),
        r=tuple(sorted(rmap.items())),
        centers=tuple(sorted(centers.items())),
    )
    sch.validate(source_degree=f0.degree)
    return sch


# -- boundary membership oracle -------------------------------------------------


def converges_to_center(
    f: MonicPolynomial,
    x: complex,
    center: complex,
    cycle_period: int,
    iters: int = 200,
    tol: float = 1e-6,
) -> bool:
    """Does f^{cycle_period * m}(x) -> center (the correct phase)?"""
    w = complex(x)
    scale = max(1.0, abs(center))
    for _ in range(iters):
        for _ in range(cycle_period):
            w = f(w)
        if abs(w - center) < tol * scale:
            return True
        if abs(w) > 1e6:
            return False
    return False


_COMPONENT_MASKS: dict = {}


def _component_mask(f: MonicPolynomial, center: complex, cycle_period: int, res: int):
    from .polycore import immediate_component_mask

    key = (f, round(center.real, 9), round(center.imag, 9), res)
    hit = _COMPONENT_MASKS.get(key)
    if hit is None:
        box = f.escape_radius() * 1.05
        hit = immediate_component_mask(f, center, cycle_period, res, box)
        _COMPONENT_MASKS[key] = hit
    return hit


def _grid_dist_to_component(f, z, center, cycle_period, res) -> float:
    """Distance from z to the component mask, in pixels."""
    import numpy as np

    mask, xs = _component_mask(f, center, cycle_period, res)
    ii, jj = np.nonzero(mask)
    if len(ii) == 0:
        return math.inf
    px = xs[1] - xs[0]
    d2 = (xs[jj] - z.real) ** 2 + (xs[ii] - z.imag) ** 2
    return math.sqrt(float(d2.min())) / px


def on_component_boundary(
    f: MonicPolynomial,
    z: complex,
    center: complex,
    cycle_period: int,
    scales=(1e-3, 1e-4),
    resolutions=(256, 512),
    pixel_tol: float = 2.0,
) -> bool:
    """Heuristic test: is z on the boundary of the component of `center`?

    Two independent signals must agree: (1) points pushed from z toward the
    center at two scales converge to the center with the correct phase;
    (2) z lies within `pixel_tol` pixels of the flood-filled component mask
    at each resolution. (1) alone false-positives on points like beta of the
    basilica, where nearby preperiodic components share the phase.
    """
    dist = abs(center - z)
    if dist == 0:
        return False
    direction = (center - z) / dist
    for s in scales:
        x = z + s * dist * direction
        if not converges_to_center(f, x, center, cycle_period):
            return False
    for res in resolutions:
        if _grid_dist_to_component(f, z, center, cycle_period, res) > pixel_tol:
            return False
    return True


# -- internal angle system -------------------------------------------------------


def _cycle_decomposition(scheme: MappingScheme):
    """sigma-cycles as lists of vertices (every vertex of a reduced scheme is
    on a cycle or eventually maps into one; preperiodic tails handled too)."""
    sig = scheme.sigma_map()
    seen = set()
    cycles = []
    for v in scheme.vertices:
        if v in seen:
            continue
        path = []
        cur = v
        while cur not in path and cur not in seen:
            path.append(cur)
            cur = sig[cur]
        if cur in path:
            cyc = path[path.index(cur):]
            cycles.append(cyc)
        seen.update(path)
    return cycles


def internal_angle_system(
    f0: MonicPolynomial,
    scheme: MappingScheme,
    denominator_budget: int = 10**6,
    landing_tol: float = 1e-5,
) -> InternalAngleSystem:
    """A rational angle per vertex, landing on the component boundary, with
    exact compatibility d^{r(v)} theta_v = theta_{sigma(v)}.

    Selection: per sigma-cycle, the smallest angle t = k / (d^R - 1) whose ray
    lands at the return-fixed boundary point of the first vertex and whose
    propagated angles land on the remaining component boundaries.
    """
    d = f0.degree
    sig, rr = scheme.sigma_map(), scheme.r_map()
    centers = scheme.centers_map()
    theta: dict = {}
    z_pts: dict = {}
    partners: dict = {}

    for cyc in _cycle_decomposition(scheme):
        R = sum(rr[v] for v in cyc)
        q = d**R - 1
        if q > denominator_budget:
            raise AngleSearchFailed(f"denominator {q} over budget")
        found = False
        for k in range(q):
            t = Fraction(k, q)
            if _angles_land_on_cycle(f0, scheme, cyc, t, landing_tol, theta, z_pts):
                found = True
                break
        if not found:
            raise AngleSearchFailed(
                f"no compatible angle with denominator {q} lands on cycle {cyc}"
            )

    # partner angles at each z_v (other rays with the same landing point),
    # searched over the cycle denominator d^R - 1
    for v, t in theta.items():
        R = _component_cycle_period(scheme, v)
        q = d**R - 1
        for k in range(q):
            s = Fraction(k, q)
            if s == t:
                continue
            try:
                z = land_ray(f0, s)
            except Exception:
                continue
            if abs(z - z_pts[v]) < landing_tol:
                partners[v] = s
                break

    sys = InternalAngleSystem(theta=theta, landing_points=z_pts, partners=partners)
    sys.check_compatibility(scheme, d)
    # Lemma check: a ray landing at a repelling fixed boundary point of a fixed
    # component must itself be fixed; compatibility above enforces the general
    # d^{r} version exactly.
    return sys


def _angles_land_on_cycle(f0, scheme, cyc, t0, tol, theta_out, z_out) -> bool:
    d = f0.degree
    rr = scheme.r_map()
    centers = scheme.centers_map()
    trial_theta = {}
    trial_z = {}
    t = t0
    for v in cyc:
        trial_theta[v] = t
        t = norm_angle(d ** rr[v] * t)
    if t != t0:
        return False  # not periodic along the cycle
    for v in cyc:
        try:
            z = land_ray(f0, trial_theta[v])
        except Exception:
            return False
        period_of_component = _component_cycle_period(scheme, v)
        if not on_component_boundary(f0, z, centers[v], period_of_component):
            return False
        trial_z[v] = z
    theta_out.update(trial_theta)
    z_out.update(trial_z)
    return True


def _component_cycle_period(scheme: MappingScheme, v) -> int:
    """Point-period of the component cycle through v: sum of r around the cycle."""
    sig, rr = scheme.sigma_map(), scheme.r_map()
    total = rr[v]
    cur = sig[v]
    while cur != v:
        total += rr[cur]
        cur = sig[cur]
    return total


# -- generalized polynomial dynamics ----------------------------------------------


def gp_orbit_step(g: GeneralizedPolynomial, v, z: complex):
    return g.scheme.sigma_map()[v], g.fiber(v)(z)


def in_CT(g: GeneralizedPolynomial, budget: int = 2048) -> bool:
    """Fiberwise connectivity: every fiber critical point has bounded orbit."""
    g.validate()
    from .polycore import critical_points

    R = max(dict(g.fibers)[v].escape_radius() for v in g.scheme.vertices)
    for v in g.scheme.vertices:
        for cp, _m in critical_points(g.fiber(v)):
            cur_v, z = v, cp
            for _ in range(budget):
                cur_v, z = gp_orbit_step(g, cur_v, z)
                if abs(z) > 4 * R:
                    return False
            if abs(z) > R:
                raise Inconclusive(
                    f"fiber critical orbit at {v} hovering near escape radius after {budget}"
                )
    return True


def gp_green(g: GeneralizedPolynomial, v, z: complex, budget: int = 4096) -> float:
    """Fiberwise Green function G_g(v, z)."""
    dlt = g.scheme.delta_map()
    cur_v, w = v, complex(z)
    denom = 1
    for _ in range(budget):
        if abs(w) > ESCAPE_BIG:
            return math.log(abs(w)) / denom
        denom *= dlt[cur_v]
        cur_v, w = gp_orbit_step(g, cur_v, w)
    return 0.0


class GPRayTracer:
    """Fiberwise ray samples; same potential-doubling scheme as RayTracer,
    with targets in the image fiber: g_v(sample(v, t, l)) = sample(sigma v,
    delta_v t, delta_v l)."""

    def __init__(self, g: GeneralizedPolynomial):
        g.validate()
        self.g = g
        self.sigma = g.scheme.sigma_map()
        self.delta = g.scheme.delta_map()
        self.fib = dict(g.fibers)
        self.cache: dict = {}
        self.L_far = max(
            3.0, max(math.log(8.0 * self.fib[v].escape_radius()) for v in g.scheme.vertices)
        )

    def _phi_far_fiber(self, v, z: complex) -> complex:
        logphi = cmath.log(z)
        zk = z
        cur = v
        denom = 1
        for _ in range(64):
            if abs(zk) > 1e30:
                break
            f = self.fib[cur]
            zk1 = f(zk)
            u = zk1 / zk ** f.degree
            denom *= f.degree
            logphi += cmath.log(u) / denom
            cur = self.sigma[cur]
            zk = zk1
        return cmath.exp(logphi)

    def _far_point(self, v, t, l: float) -> complex:
        w = cmath.exp(complex(l, 2 * math.pi * float(t)))
        z = w
        for _ in range(40):
            cur = self._phi_far_fiber(v, z)
            if abs(cur - w) / abs(w) < 1e-14:
                break
            z = z * w / cur
        return z

    def point(self, v, t, level: _Level, depth: int = 0) -> complex:
        t = norm_angle(t)
        key = (v, t, level.key())
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        lv = level.value()
        if lv >= self.L_far:
            z = self._far_point(v, t, lv)
            self.cache[key] = z
            return z
        if depth > 400:
            raise NewtonDivergence("gp ray recursion too deep", level=lv)
        dv = self.delta[v]
        target = self.point(self.sigma[v], norm_angle(dv * t), level.times(dv), depth + 1)
        seed = self.point(v, t, level.times(2), depth + 1)
        f = self.fib[v]
        z = complex(seed)
        tol = 1e-13 * max(1.0, abs(target))
        ok = False
        for _ in range(80):
            val = f(z) - target
            if abs(val) < tol:
                ok = True
                break
            der = f.deriv(z)
            if der == 0:
                z += 1e-9
                continue
            z -= val / der
        if not ok:
            raise NewtonDivergence(f"gp ray {v},{t} at level {lv:.3g}", level=lv)
        self.cache[key] = z
        return z


def gp_ray(g: GeneralizedPolynomial, v, t, l_min: float):
    """Fiberwise external ray samples (potential-halving ladder down to l_min)."""
    from .potential import ExternalRay, _level_ladder

    tracer = GPRayTracer(g)
    samples = []
    failure = None
    for lv in _level_ladder(1.0, l_min):
        try:
            z = tracer.point(v, norm_angle(t), lv)
        except NewtonDivergence:
            failure = lv.value()
            break
        samples.append((lv.value(), z))
    return ExternalRay(angle=norm_angle(t), samples=samples, failure_level=failure)
