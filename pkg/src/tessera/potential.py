"""Green function, Böttcher coordinate, external rays and equipotentials.

Ray tracing uses potential-doubling Newton continuation: the sample of ray t
at level l solves f(z) = sample(d*t, d*l), Newton-seeded from sample(t, 2l);
unrolling the recursion, each sample solves f^n(z) = far-field target with
d^n * l above the safe radius, which is the standard continuation scheme.
Levels live on a two-sheet dyadic lattice so a diverging step can be bisected
in potential (factor sqrt(2)) without leaving the lattice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .angles import angle_orbit, norm_angle
from .errors import LandingUnresolved, NewtonDivergence, TooDeep
from .polycore import HUGE, MonicPolynomial

G_MIN_DEFAULT = 1e-4
ESCAPE_BIG = 1e12          # switch to d^{-n} log|z_n| once past this
CAUCHY_FACTOR = 0.9        # per the landing acceptance contract
CAUCHY_STRIDE = 4          # certificate evaluated on every 4th sample
MAX_BISECT = 8


# -- Green function -----------------------------------------------------------


def green(f: MonicPolynomial, z: complex, budget: int = 4096) -> float:
    """Escape-rate potential G_f(z); 0.0 when no escape within budget.

    After first escape the orbit is continued until |z_n| > 1e12, where
    d^{-n} log|z_n| approximates G with error O(d^{-n}/|z_n|).
    """
    g, _, _ = _green_info(f, z, budget)
    return g


def _green_info(f: MonicPolynomial, z: complex, budget: int = 4096):
    """(G, first-escape index or None, note)."""
    R = f.escape_radius()
    w = complex(z)
    first = None
    for n in range(budget):
        aw = abs(w)
        if first is None and aw > R:
            first = n
        if aw > ESCAPE_BIG:
            # one more refinement step: log|f(w)| = d log|w| + log|1 + eps|
            return math.log(aw) / f.degree**n, first, None
        if aw > HUGE:
            return math.log(aw) / f.degree**n, first, "overflow-truncated"
        w = f(w)
    if first is not None:
        # escaped the radius but did not clear ESCAPE_BIG within budget
        aw = abs(w)
        return math.log(max(aw, 1.0)) / f.degree**budget, first, "budget-limited"
    return 0.0, None, "non-escaping within budget"


# -- Böttcher coordinate ------------------------------------------------------


def _phi_far(f: MonicPolynomial, z: complex) -> complex:
    """Böttcher map via the convergent product, valid well outside the Julia set."""
    d = f.degree
    logphi = cmath.log(z)
    zk = z
    dpow = 1
    for _k in range(64):
        if abs(zk) > 1e30:
            break
        zk1 = f(zk)
        u = zk1 / zk**d
        dpow *= d
        logphi += cmath.log(u) / dpow
        zk = zk1
    return cmath.exp(logphi)


def boettcher(f: MonicPolynomial, z: complex, g_min: float = G_MIN_DEFAULT) -> complex:
    """phi_f(z), via iterated d-th roots of phi at a far iterate.

    Backward branch selection takes the d-th root closest in argument to the
    orbit point itself (the z/infinity asymptotics); modulus and equivariance
    are exact by construction regardless of the argument heuristic.
    """
    g = green(f, z)
    if g < g_min:
        raise TooDeep(f"green(z) = {g:.3g} < g_min = {g_min:.3g}")
    d = f.degree
    far = max(math.exp(_far_level(f)), 4.0 * f.escape_radius())
    pts = [complex(z)]
    while abs(pts[-1]) < far:
        pts.append(f(pts[-1]))
    w = _phi_far(f, pts[-1])
    for k in range(len(pts) - 2, -1, -1):
        target_arg = cmath.phase(pts[k])
        r = abs(w) ** (1.0 / d)
        base = cmath.phase(w) / d
        best = None
        for j in range(d):
            cand_arg = base + 2 * math.pi * j / d
            delta = (cand_arg - target_arg + math.pi) % (2 * math.pi) - math.pi
            if best is None or abs(delta) < abs(best[1]):
                best = (cand_arg, delta)
        w = r * cmath.exp(1j * best[0])
    return w


# -- ray tracing core ---------------------------------------------------------


def _far_level(f: MonicPolynomial) -> float:
    return max(3.0, math.log(8.0 * f.escape_radius()))


class _Level:
    """Level m * 2^(-h/2) with m an exact Fraction and h in {0, 1}."""

    __slots__ = ("m", "h")

    def __init__(self, m: Fraction, h: int):
        if h not in (0, 1):
            raise ValueError
        self.m = m
        self.h = h

    def value(self) -> float:
        v = float(self.m)
        return v * (0.7071067811865476 if self.h else 1.0)

    def times(self, k: int) -> "_Level":
        return _Level(self.m * k, self.h)

    def half(self) -> "_Level":
        return _Level(self.m / 2, self.h)

    def bisect(self) -> "_Level":
        # multiply by 2^{-1/2}
        if self.h == 0:
            return _Level(self.m, 1)
        return _Level(self.m / 2, 0)

    def key(self):
        return (self.m, self.h)


class RayTracer:
    """Memoized ray-sample solver for one polynomial.

    `point(t, level)` returns the point of external ray t at the given
    potential. mp_dps switches the Newton refinements to mpmath with that
    many digits (used for very deep levels).
    """

    def __init__(self, f: MonicPolynomial, mp_dps: Optional[int] = None):
        self.f = f
        self.cache: dict = {}
        self.mp_dps = mp_dps
        self.L_far = _far_level(f)

    # far-field inversion: phi(z) = e^{l + 2 pi i t}
    def _far_point(self, t: Fraction, l: float) -> complex:
        w = cmath.exp(complex(l, 2 * math.pi * float(t)))
        z = w
        for _ in range(40):
            cur = _phi_far(self.f, z)
            err = abs(cur - w) / abs(w)
            if err < 1e-14:
                break
            z = z * w / cur
        return z

    def point(self, t, level: _Level, depth: int = 0) -> complex:
        t = norm_angle(t)
        key = (t, level.key())
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        lv = level.value()
        if lv >= self.L_far:
            z = self._far_point(t, lv)
            self.cache[key] = z
            return z
        if depth > 220:
            raise NewtonDivergence("ray recursion too deep", level=lv)
        d = self.f.degree
        target = self.point(norm_angle(d * t), level.times(d), depth + 1)
        seed = self.point(t, level.times(2), depth + 1)
        z = self._newton_step_solve(seed, target)
        if z is None or not self._continuity_ok(t, level, seed, z):
            z = self._bisected(t, level, depth)
        self.cache[key] = z
        return z

    def _bisected(self, t, level: _Level, depth: int, tries: int = MAX_BISECT) -> complex:
        if tries <= 0:
            raise NewtonDivergence(
                f"ray {t} stuck at level {level.value():.3g}", level=level.value()
            )
        mid = level.bisect()  # between level and 2*level... actually level*sqrt2
        # solve the mid level first (recursion gives it a seed at 2*mid), then
        # retry the requested level seeded from the mid point.
        d = self.f.degree
        mid_up = _Level(level.m * 2, level.h).bisect()  # level * sqrt(2)
        try:
            seed = self.point(t, mid_up, depth + 1)
        except NewtonDivergence:
            seed = self.point(t, level.times(2), depth + 1)
        target = self.point(norm_angle(d * t), level.times(d), depth + 1)
        z = self._newton_step_solve(seed, target, iters=120)
        if z is None:
            return self._bisected(t, level, depth, tries - 1)
        return z

    def _newton_step_solve(self, seed: complex, target: complex, iters: int = 80):
        """Solve f(z) = target by Newton from seed (mpmath when configured)."""
        if self.mp_dps:
            return self._newton_mp(seed, target, iters)
        f = self.f
        z = complex(seed)
        tol = 1e-13 * max(1.0, abs(target))
        for _ in range(iters):
            val = f(z) - target
            if abs(val) < tol:
                return z
            der = f.deriv(z)
            if der == 0:
                z = z + 1e-9
                continue
            step = val / der
            if abs(step) > 1.0 + abs(z):
                step = step / abs(step) * (0.5 * (1 + abs(z)))
            z = z - step
        return None if abs(f(z) - target) >= 100 * tol else z

    def _newton_mp(self, seed, target, iters):
        import mpmath as mp

        with mp.workdps(self.mp_dps):
            z = mp.mpc(seed)
            tgt = mp.mpc(target)
            coeffs = self.f.full_coeffs()
            for _ in range(iters):
                val = mp.polyval([mp.mpc(c) for c in coeffs], z) - tgt
                if abs(val) < mp.mpf(10) ** (-self.mp_dps + 3) * max(1, abs(tgt)):
                    break
                der = mp.polyval(
                    [mp.mpc(c) for c in self.f.deriv_coeffs()], z
                )
                z = z - val / der
            return complex(z)

    def _continuity_ok(self, t, level: _Level, seed: complex, z: complex) -> bool:
        prev = self.cache.get((t, level.times(4).key()))
        if prev is None:
            return True
        step_prev = abs(seed - prev)
        return abs(z - seed) <= max(6.0 * step_prev, 1e-12)


_TRACERS: dict = {}


def get_tracer(f: MonicPolynomial, mp_dps: Optional[int] = None) -> RayTracer:
    key = (f, mp_dps)
    tr = _TRACERS.get(key)
    if tr is None:
        tr = RayTracer(f, mp_dps=mp_dps)
        _TRACERS[key] = tr
    return tr


# -- public ray API -----------------------------------------------------------


@dataclass
class ExternalRay:
    angle: Fraction
    samples: list  # [(potential, point)], potentials strictly decreasing
    landing: Optional[complex] = None
    failure_level: Optional[float] = None

    def endpoint(self) -> complex:
        return self.samples[-1][1]


@dataclass
class Equipotential:
    level: float
    points: list  # closed polyline (first point repeated at the end)


def _level_ladder(l0: float, l_min: float):
    """Lattice levels l0 * 2^-k down to l_min (l0, l_min exact binary floats)."""
    out = []
    lv = _Level(Fraction(l0), 0)
    while lv.value() >= l_min * (1 - 1e-12):
        out.append(lv)
        lv = lv.half()
    return out


def trace_ray(
    f: MonicPolynomial,
    t,
    l_min: float,
    l0: float = 1.0,
    mp_dps: Optional[int] = None,
) -> ExternalRay:
    """Samples of ray t at potentials l0 * 2^-k down to l_min.

    On Newton divergence the ray is returned with the samples collected so
    far and `failure_level` set.
    """
    if l_min <= 0:
        raise ValueError("l_min must be positive")
    t = norm_angle(t)
    tracer = get_tracer(f, mp_dps=mp_dps)
    samples = []
    failure = None
    for lv in _level_ladder(l0, l_min):
        try:
            z = tracer.point(t, lv)
        except NewtonDivergence:
            failure = lv.value()
            break
        samples.append((lv.value(), z))
    return ExternalRay(angle=t, samples=samples, failure_level=failure)


def _cauchy_certificate(samples, stride: int = CAUCHY_STRIDE, window: int = 8):
    """Ratio test on a stride-subsampled tail; returns (ok, ratios)."""
    pts = [z for _, z in samples][::-1]  # deepest first
    sub = pts[::stride]
    if len(sub) < 4:
        return False, []
    sub = sub[: window + 1]
    gaps = [abs(sub[i] - sub[i + 1]) for i in range(len(sub) - 1)]
    ratios = []
    for i in range(len(gaps) - 1):
        if gaps[i + 1] == 0:
            ratios.append(0.0)
        else:
            ratios.append(gaps[i] / gaps[i + 1])
    if not ratios:
        return gaps[0] == 0, []
    ok = all(r <= CAUCHY_FACTOR for r in ratios) or gaps[0] < 1e-13
    return ok, ratios


def land_ray(
    f: MonicPolynomial,
    t,
    l_min: float = 1e-8,
    mp_dps: Optional[int] = None,
    polish: bool = True,
) -> complex:
    """Landing point of the rational ray t.

    Accepts only when the subsampled Cauchy tail contracts by <= 0.9; for
    (pre)periodic t the estimate is then Newton-polished against the exact
    (pre)periodic-point equation f^{l+p}(z) = f^l(z).
    """
    t = norm_angle(t)
    ray = trace_ray(f, t, l_min, mp_dps=mp_dps)
    if ray.failure_level is not None:
        raise NewtonDivergence(
            f"ray {t} failed at level {ray.failure_level:.3g}", partial=ray
        )
    ok, ratios = _cauchy_certificate(ray.samples)
    if not ok:
        raise LandingUnresolved(
            f"ray {t}: Cauchy tail not certified at l_min={l_min:.2g} "
            f"(ratios {['%.3f' % r for r in ratios[:4]]})"
        )
    pts = [z for _, z in ray.samples]
    est = pts[-1]
    if len(pts) >= 3:
        g1, g2 = abs(pts[-1] - pts[-2]), abs(pts[-2] - pts[-3])
        if g2 > 0 and g1 / g2 < 0.95:
            rho = g1 / g2
            est = pts[-1] + (pts[-1] - pts[-2]) * (rho / (1 - rho))
    if not polish:
        return est
    pre, per, _ = angle_orbit(t, f.degree)
    polished = _polish_preperiodic(f, est, pre, per)
    tail_gap = abs(pts[-1] - pts[-2]) if len(pts) >= 2 else 1e-6
    if polished is not None and abs(polished - est) <= max(100 * tail_gap, 1e-6):
        return polished
    return est


def _polish_preperiodic(f: MonicPolynomial, z0: complex, pre: int, per: int, iters: int = 80):
    """Newton on f^{pre+per}(z) - f^{pre}(z) = 0."""
    z = complex(z0)
    for _ in range(iters):
        val_hi, der_hi = _iter_with_deriv(f, z, pre + per)
        val_lo, der_lo = _iter_with_deriv(f, z, pre)
        g = val_hi - val_lo
        dg = der_hi - der_lo
        if abs(dg) < 1e-300:
            return None
        step = g / dg
        z = z - step
        if abs(step) < 1e-14 * max(1.0, abs(z)):
            return z
    return z if abs(g) < 1e-9 else None


def _iter_with_deriv(f: MonicPolynomial, z: complex, n: int):
    val = complex(z)
    der = 1.0 + 0j
    for _ in range(n):
        der *= f.deriv(val)
        val = f(val)
    return val, der


def equipotential(f: MonicPolynomial, level: float, n_samples: int) -> Equipotential:
    """Closed polyline through phi^{-1}(e^{level + 2 pi i theta})."""
    if level <= 0:
        raise ValueError("level must be positive")
    tracer = get_tracer(f)
    lv0 = _Level(Fraction(level), 0)
    pts = []
    for j in range(n_samples):
        theta = Fraction(j, n_samples)
        pts.append(tracer.point(theta, lv0))
    pts.append(pts[0])
    return Equipotential(level=level, points=pts)


def ray_point(f: MonicPolynomial, t, level: float) -> complex:
    """Single sample of ray t at an exact-binary potential level."""
    tracer = get_tracer(f)
    return tracer.point(norm_angle(t), _Level(Fraction(level), 0))
