"""Monic centered polynomials: evaluation, critical points, cycles, classification.

A degree-d monic centered polynomial is z^d + a_{d-2} z^{d-2} + ... + a_0.
All operations are pure; the root finder's restart randomness is seeded per
call, so results are deterministic.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    Inconclusive,
    OverflowEscape,
    RootFindingFailure,
)

# Magnitude at which an orbit is reported as overflowed rather than iterated on.
HUGE = 1e140

TOL_CYCLE = 1e-9
TOL_ROOT = 1e-9        # cluster radius for root identification
RESIDUAL_TOL = 1e-12   # Aberth stopping residual (relative)
TOL_SUPER = 1e-8       # |multiplier| below this counts as superattracting


@dataclass(frozen=True)
class MonicPolynomial:
    """z^d + a[d-2] z^{d-2} + ... + a[1] z + a[0], with the z^{d-1} term absent."""

    degree: int
    coefficients: tuple  # (a_0, ..., a_{d-2}) as complex numbers

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if len(self.coefficients) != self.degree - 1:
            raise ValueError(
                f"need {self.degree - 1} coefficients a_0..a_{self.degree - 2}, "
                f"got {len(self.coefficients)}"
            )
        object.__setattr__(
            self, "coefficients", tuple(complex(c) for c in self.coefficients)
        )

    # -- evaluation ------------------------------------------------------

    def __call__(self, z: complex) -> complex:
        # Horner on z^d + a_{d-2} z^{d-2} + ... ; the z^{d-1} slot is zero.
        acc = 1.0 + 0j
        acc = acc * z  # z^1 with implicit leading 1, then the missing z^{d-1} term
        for k in range(self.degree - 2, -1, -1):
            acc = acc * z + self.coefficients[k]
        return acc

    def deriv(self, z: complex) -> complex:
        d = self.degree
        acc = d + 0j
        acc = acc * z
        for k in range(d - 2, 0, -1):
            acc = acc * z + k * self.coefficients[k]
        return acc

    def full_coeffs(self) -> np.ndarray:
        """Coefficients highest-first: [1, 0, a_{d-2}, ..., a_0]."""
        c = np.zeros(self.degree + 1, dtype=complex)
        c[0] = 1.0
        for k, a in enumerate(self.coefficients):
            c[self.degree - k] = a
        return c

    def deriv_coeffs(self) -> np.ndarray:
        c = self.full_coeffs()
        n = len(c) - 1
        return c[:-1] * np.arange(n, 0, -1)

    def escape_radius(self) -> float:
        """R with |f(z)| >= 2|z| for |z| > R; standard cheap bound."""
        s = sum(abs(a) for a in self.coefficients)
        return max(2.0, 2.0 * s)

    def label(self) -> str:
        if self.degree == 2:
            c = self.coefficients[0]
            return f"z^2 + ({c.real:+.12g}{c.imag:+.12g}j)"
        return f"deg-{self.degree} monic centered"


def quadratic(c: complex) -> MonicPolynomial:
    return MonicPolynomial(2, (complex(c),))


@dataclass(frozen=True)
class Cycle:
    points: tuple
    period: int
    multiplier: complex
    kind: str  # superattracting | attracting | repelling | indifferent


@dataclass
class CriticalOrbitData:
    critical_point: complex
    multiplicity: int
    escapes: bool
    preperiod: Optional[int] = None
    period: Optional[int] = None
    attracting_cycle: Optional[Cycle] = None


@dataclass
class DynClass:
    is_pcf: bool
    is_hyperbolic: bool
    is_primitive_heuristic: Optional[bool]  # None when not evaluated / inconclusive
    critical_orbit_data: list = field(default_factory=list)
    notes: list = field(default_factory=list)


# -- iteration --------------------------------------------------------------


def evaluate(f: MonicPolynomial, z: complex, iterates: int, max_iterates: int = 10**6) -> complex:
    """f^iterates(z); raises OverflowEscape instead of returning inf."""
    if iterates < 1:
        raise ValueError("iterates must be >= 1")
    if iterates > max_iterates:
        raise BudgetExceeded(f"iterates {iterates} > cap {max_iterates}")
    w = complex(z)
    for k in range(iterates):
        if abs(w) > HUGE:
            raise OverflowEscape(
                f"|f^{k}(z)| > {HUGE:.0e} before completing {iterates} iterates",
                steps_done=k,
            )
        w = f(w)
    if not (math.isfinite(w.real) and math.isfinite(w.imag)):
        raise OverflowEscape("iterate overflowed to non-finite", steps_done=iterates)
    return w


def orbit(f: MonicPolynomial, z: complex, n: int) -> list:
    """[z, f(z), ..., f^n(z)], stopping early (shorter list) on overflow."""
    out = [complex(z)]
    w = complex(z)
    for _ in range(n):
        if abs(w) > HUGE:
            break
        w = f(w)
        if not (math.isfinite(w.real) and math.isfinite(w.imag)):
            break
        out.append(w)
    return out


# -- Aberth–Ehrlich root finder ----------------------------------------------


def aberth_roots(
    coeffs: Sequence[complex],
    seed: int = 0,
    max_iter: int = 400,
    residual_tol: float = RESIDUAL_TOL,
    restarts: int = 4,
) -> np.ndarray:
    """All roots of the polynomial with the given highest-first coefficients.

    Simultaneous Aberth–Ehrlich iteration; on stagnation the worst points are
    re-perturbed (seeded rng) and iteration resumes. Raises RootFindingFailure
    with the residual vector if no restart converges.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    coeffs = np.trim_zeros(coeffs, "f")
    n = len(coeffs) - 1
    if n < 1:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return np.array([-coeffs[1] / coeffs[0]])
    p = coeffs / coeffs[0]
    dp = p[:-1] * np.arange(n, 0, -1)

    rng = np.random.default_rng(seed)
    radius = 1.0 + max(abs(c) for c in p[1:])
    ang = 2 * np.pi * (np.arange(n) + 0.35) / n
    x = radius * np.exp(1j * ang) * (1 + 0.05 * rng.standard_normal(n))

    last_res = None
    for _attempt in range(restarts):
        for _ in range(max_iter):
            pv = np.polyval(p, x)
            dpv = np.polyval(dp, x)
            diff = x[:, None] - x[None, :]
            np.fill_diagonal(diff, 1.0)
            s = (1.0 / diff).sum(axis=1) - 1.0  # diagonal contributes 1/1
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = pv / np.where(dpv == 0, 1e-300, dpv)
                denom = 1.0 - newton * s
                step = newton / np.where(denom == 0, 1e-300, denom)
            x = x - step
            if np.all(np.abs(step) < 1e-15 * (1 + np.abs(x))):
                break
        res = np.abs(np.polyval(p, x)) / np.maximum(1.0, np.abs(x)) ** n
        last_res = res
        if np.all(res < max(residual_tol, 1e-10)):
            return x
        bad = res >= residual_tol
        x[bad] = radius * np.exp(2j * np.pi * rng.random(int(bad.sum()))) * (
            1 + 0.2 * rng.standard_normal(int(bad.sum()))
        )
    raise RootFindingFailure(
        f"Aberth failed after {restarts} restarts (max residual {last_res.max():.2e})",
        residuals=last_res,
    )


def cluster_points(points: Sequence[complex], radius: float = TOL_ROOT):
    """Greedy clustering; returns list of (representative, count)."""
    clusters: list[list[complex]] = []
    for z in points:
        for cl in clusters:
            if abs(z - cl[0]) <= radius * max(1.0, abs(cl[0])):
                cl.append(z)
                break
        else:
            clusters.append([complex(z)])
    return [(sum(cl) / len(cl), len(cl)) for cl in clusters]


def critical_points(f: MonicPolynomial, seed: int = 0):
    """Roots of f' with multiplicity; total multiplicity is exactly d-1."""
    roots = aberth_roots(f.deriv_coeffs(), seed=seed)
    clustered = cluster_points(roots, radius=TOL_ROOT)
    total = sum(m for _, m in clustered)
    if total != f.degree - 1:
        raise RootFindingFailure(
            f"critical multiplicities sum to {total}, expected {f.degree - 1}",
            residuals=None,
        )
    clustered.sort(key=lambda pm: (round(pm[0].real, 9), round(pm[0].imag, 9)))
    return clustered


# -- cycles ------------------------------------------------------------------


def _poly_compose_self(f: MonicPolynomial, p: int) -> np.ndarray:
    """Coefficients (highest-first) of f^p as a polynomial, degree d^p."""
    base = f.full_coeffs()
    cur = base.copy()
    for _ in range(p - 1):
        # substitute cur(z) into f: f(cur) = cur^d + a_{d-2} cur^{d-2} + ...
        acc = np.array([1.0 + 0j])
        for c in base[1:]:
            acc = np.polymul(acc, cur)
            acc[-1] += c
        cur = acc
    return cur


def _classify_multiplier(lam: complex) -> str:
    m = abs(lam)
    if m < TOL_SUPER:
        return "superattracting"
    if abs(m - 1.0) <= 1e-9:
        return "indifferent"
    return "attracting" if m < 1.0 else "repelling"


def cycle_multiplier(f: MonicPolynomial, points: Sequence[complex]) -> complex:
    lam = 1.0 + 0j
    for z in points:
        lam *= f.deriv(z)
    return lam


def _exact_period(f: MonicPolynomial, z: complex, p: int, tol: float = TOL_CYCLE) -> Optional[int]:
    """Smallest q | p with |f^q(z) - z| <= tol (relative), or None."""
    divs = [q for q in range(1, p + 1) if p % q == 0]
    w = complex(z)
    traj = [w]
    for _ in range(p):
        w = f(w)
        traj.append(w)
    for q in divs:
        if abs(traj[q] - z) <= tol * max(1.0, abs(z)):
            return q
    return None


def find_cycles(
    f: MonicPolynomial,
    period: int,
    seed: int = 0,
    degree_budget: int = 20000,
) -> list:
    """All cycles of exact period <= `period`, via roots of f^p(z) - z.

    Roots whose orbit period strictly divides p are assigned to their exact
    period. Each cycle is reported once, keyed by its point of smallest
    (real, imag) lexicographic order.
    """
    if f.degree**period > degree_budget:
        raise BudgetExceeded(
            f"d^p = {f.degree ** period} exceeds budget {degree_budget}"
        )
    comp = _poly_compose_self(f, period)
    comp = comp.copy()
    comp[-2] -= 1.0  # subtract z
    roots = aberth_roots(comp, seed=seed)
    reps = [z for z, _ in cluster_points(roots, radius=TOL_ROOT)]

    cycles: dict = {}
    for z in reps:
        q = _exact_period(f, z, period)
        if q is None:
            continue
        pts = [z]
        w = z
        for _ in range(q - 1):
            w = f(w)
            pts.append(w)
        key_pt = min(pts, key=lambda u: (round(u.real, 7), round(u.imag, 7)))
        key = (q, round(key_pt.real, 7), round(key_pt.imag, 7))
        if key in cycles:
            continue
        lam = cycle_multiplier(f, pts)
        cycles[key] = Cycle(
            points=tuple(pts), period=q, multiplier=lam, kind=_classify_multiplier(lam)
        )
    return sorted(cycles.values(), key=lambda c: (c.period, round(c.points[0].real, 7), round(c.points[0].imag, 7)))


def refine_periodic_point(f: MonicPolynomial, z: complex, period: int, steps: int = 60) -> complex:
    """Newton on f^p(z) - z from z (used to polish detected cycles)."""
    w = complex(z)
    for _ in range(steps):
        val = w
        der = 1.0 + 0j
        for _ in range(period):
            der *= f.deriv(val)
            val = f(val)
        g = val - w
        dg = der - 1.0
        if abs(dg) < 1e-300:
            break
        step = g / dg
        w -= step
        if abs(step) < 1e-15 * max(1.0, abs(w)):
            break
    return w


# -- classification -----------------------------------------------------------


def _detect_orbit_cycle(f: MonicPolynomial, c: complex, budget: int):
    """Follow the orbit of c; return ('escape', k) | ('cycle', pre, per, pt) | None.

    'cycle' means an exact return within TOL_CYCLE was observed (PCF-style
    landing); convergence to an attracting cycle without exact landing is
    reported separately by the caller via multiplier inspection.
    """
    R = f.escape_radius()
    pts = [complex(c)]
    w = complex(c)
    for k in range(budget):
        w = f(w)
        if abs(w) > max(R, 1e8):
            return ("escape", k + 1)
        for j, prev in enumerate(pts):
            if abs(w - prev) <= TOL_CYCLE * max(1.0, abs(prev)):
                return ("cycle", j, len(pts) - j, prev)
        pts.append(w)
        if len(pts) > 4096:  # exact-return scan cap; fall back to tail detection
            break
    return None


def _detect_attracting_tail(f: MonicPolynomial, c: complex, budget: int, max_period: int = 64):
    """Detect convergence of orbit(c) to an attracting cycle (looser tolerance)."""
    w = complex(c)
    R = f.escape_radius()
    for _ in range(budget):
        w = f(w)
        if abs(w) > max(R, 1e8):
            return None
    tail = [w]
    for _ in range(2 * max_period):
        w = f(w)
        tail.append(w)
    for p in range(1, max_period + 1):
        if abs(tail[p] - tail[0]) < 1e-6 * max(1.0, abs(tail[0])):
            z = refine_periodic_point(f, tail[0], p)
            lam = cycle_multiplier(f, orbit(f, z, p - 1))
            if abs(lam) < 1.0:
                return (p, z, lam)
    return None


def classify(
    f: MonicPolynomial,
    orbit_budget: int = 2000,
    seed: int = 0,
    primitivity: bool = True,
    grid_resolutions: tuple = (128, 256, 512),
) -> DynClass:
    """PCF / hyperbolic flags per critical orbit, plus the primitivity heuristic.

    The primitivity answer combines a geometric separation test of periodic
    Fatou component masks at several resolutions with a combinatorial
    co-landing test; it is a heuristic and is labelled as such in `notes`.
    """
    crits = critical_points(f, seed=seed)
    data = []
    all_finite = True
    all_attracted = True
    for cp, mult in crits:
        res = _detect_orbit_cycle(f, cp, orbit_budget)
        if res is None:
            tail = _detect_attracting_tail(f, cp, orbit_budget)
            if tail is None:
                raise Inconclusive(
                    f"critical orbit of {cp:.6g} neither escaped nor settled within budget {orbit_budget}"
                )
            p, z, lam = tail
            cyc = Cycle(tuple(orbit(f, z, p - 1)), p, lam, _classify_multiplier(lam))
            data.append(
                CriticalOrbitData(cp, mult, escapes=False, preperiod=None, period=p, attracting_cycle=cyc)
            )
            all_finite = False
            continue
        if res[0] == "escape":
            data.append(CriticalOrbitData(cp, mult, escapes=True))
            all_finite = False
            all_attracted = False
            continue
        _, pre, per, landing = res
        z = refine_periodic_point(f, landing, per)
        lam = cycle_multiplier(f, orbit(f, z, per - 1))
        cyc = Cycle(tuple(orbit(f, z, per - 1)), per, lam, _classify_multiplier(lam))
        data.append(
            CriticalOrbitData(cp, mult, escapes=False, preperiod=pre, period=per, attracting_cycle=cyc)
        )
        if abs(lam) >= 1.0 - 1e-9:
            all_attracted = False  # landed on a repelling/indifferent cycle (Misiurewicz)

    is_pcf = all_finite and all(d.preperiod is not None for d in data)
    is_hyperbolic = (not any(d.escapes for d in data)) and all_attracted and all(
        d.attracting_cycle is not None and abs(d.attracting_cycle.multiplier) < 1.0
        for d in data
    )
    notes = []
    prim: Optional[bool] = None
    if primitivity and is_pcf and is_hyperbolic:
        prim, why = _primitivity_heuristic(f, data, grid_resolutions, seed=seed)
        notes.append(f"primitivity heuristic: {why}")
    elif primitivity:
        notes.append("primitivity heuristic skipped (not PCF hyperbolic)")
    return DynClass(is_pcf, is_hyperbolic, prim, data, notes)


# -- primitivity heuristic -----------------------------------------------------


def periodic_cycle_points(orbit_data: list) -> list:
    """Distinct superattracting cycle points collected over all critical orbits."""
    pts = []
    for d in orbit_data:
        if d.attracting_cycle is not None and abs(d.attracting_cycle.multiplier) < TOL_SUPER:
            pts.extend(d.attracting_cycle.points)
    out = []
    for z in pts:
        if not any(abs(z - w) < 1e-8 for w in out):
            out.append(z)
    return out


def basin_phase_grid(
    f: MonicPolynomial,
    cycle_pts: list,
    res: int,
    box: float,
    block: int = 1,
    outer_iters: int = 80,
):
    """Grid of labels: index of the cycle point the orbit converges to, else -1.

    Iterates in blocks of `block` steps (the lcm of the cycle periods), so a
    point of the immediate component of p stays near p at sampling times and
    the labels separate the phases of one cycle.
    """
    xs = np.linspace(-box, box, res)
    Z = xs[None, :] + 1j * xs[:, None]
    W = Z.copy()
    R = max(f.escape_radius(), 1e3)
    alive = np.ones(W.shape, dtype=bool)
    for _ in range(outer_iters):
        for _ in range(block):
            W[alive] = _np_apply(f, W[alive])
        alive &= np.abs(W) < R
    labels = -np.ones(W.shape, dtype=np.int32)
    for idx, p in enumerate(cycle_pts):
        labels[alive & (np.abs(W - p) < 1e-3)] = idx
    labels[~alive] = -2
    return labels, xs


def immediate_component_mask(
    f: MonicPolynomial, center: complex, cycle_period: int, res: int, box: float
):
    """Pixel mask of the Fatou component containing `center` (flood fill of the
    phase basin from the center pixel)."""
    labels, xs = basin_phase_grid(f, [center], res, box, block=cycle_period)
    i = int(np.argmin(np.abs(xs - center.imag)))
    j = int(np.argmin(np.abs(xs - center.real)))
    return _flood_component(labels, (i, j), 0), xs


def _np_apply(f: MonicPolynomial, W):
    acc = np.ones_like(W)
    acc = acc * W
    for k in range(f.degree - 2, -1, -1):
        acc = acc * W + f.coefficients[k]
    return acc


def _flood_component(labels, start_idx, label):
    """Connected component of `labels == label` containing start (4-neighbour)."""
    from collections import deque

    h, w = labels.shape
    comp = np.zeros_like(labels, dtype=bool)
    si, sj = start_idx
    if labels[si, sj] != label:
        return comp
    dq = deque([(si, sj)])
    comp[si, sj] = True
    while dq:
        i, j = dq.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if 0 <= ii < h and 0 <= jj < w and labels[ii, jj] == label and not comp[ii, jj]:
                comp[ii, jj] = True
                dq.append((ii, jj))
    return comp


def _primitivity_heuristic(f: MonicPolynomial, data, resolutions, seed: int = 0):
    """Geometric separation of periodic component masks + co-landing check.

    Components too small for a grid are replaced by their center pixel
    (point proxy); a proxy cannot witness touching, which is exactly what the
    combinatorial co-landing test covers (tangencies happen at (pre)periodic
    points with rays on both boundaries).
    """
    cyc_pts = periodic_cycle_points(data)
    if len(cyc_pts) <= 1:
        return True, "single periodic component; disjointness vacuous (geometric test)"
    box = f.escape_radius() * 1.05
    periods = [
        d.attracting_cycle.period for d in data if d.attracting_cycle is not None
    ]
    block = 1
    for p in periods:
        block = block * p // math.gcd(block, p)
    proxies_used = False
    for res in resolutions:
        labels, xs = basin_phase_grid(f, cyc_pts, res, box, block=block)
        comps = []
        for idx, p in enumerate(cyc_pts):
            ii, jj = np.nonzero(labels == idx)
            if len(ii) == 0:
                # sub-pixel component: point proxy at the center's pixel
                proxies_used = True
                comp = np.zeros_like(labels, dtype=bool)
                i = int(np.argmin(np.abs(xs - p.imag)))
                j = int(np.argmin(np.abs(xs - p.real)))
                comp[i, j] = True
                comps.append(comp)
                continue
            k = int(np.argmin((xs[jj] - p.real) ** 2 + (xs[ii] - p.imag) ** 2))
            comps.append(_flood_component(labels, (int(ii[k]), int(jj[k])), idx))
        for a in range(len(comps)):
            ia, ja = np.nonzero(comps[a])
            for b in range(a + 1, len(comps)):
                ib, jb = np.nonzero(comps[b])
                d2 = _min_sq_dist(ia, ja, ib, jb)
                if math.sqrt(d2) <= 2.0:
                    return False, f"components {a},{b} within 2px at {res}^2"
    # combinatorial side: no repelling periodic point co-lands rays on two
    # distinct periodic component boundaries.  Lazy import avoids a cycle.
    from .lamination import rational_lamination
    from .potential import land_ray
    from .scheme import on_component_boundary

    periods = sorted({d.period for d in data if d.period})
    bound = max(2, 2 * max(periods))
    try:
        lam = rational_lamination(f, period_bound=min(bound, 6), preperiod_bound=0)
    except Exception:
        return True, "geometric separation passed; combinatorial check skipped"
    for cls in lam.classes:
        t0 = sorted(cls)[0]
        z = land_ray(f, t0)
        touched = 0
        for p in cyc_pts:
            if on_component_boundary(f, z, p, cycle_period=_component_period(data, p)):
                touched += 1
        if touched >= 2:
            return False, f"class {sorted(map(str, cls))} touches {touched} periodic components"
    why = "geometric separation at all resolutions + no shared co-landing"
    if proxies_used:
        why += " (point proxies for sub-pixel components)"
    return True, why


def _component_period(data, center):
    for d in data:
        cyc = d.attracting_cycle
        if cyc is None:
            continue
        for z in cyc.points:
            if abs(z - center) < 1e-8:
                return cyc.period
    return 1


def _min_sq_dist(ia, ja, ib, jb):
    # chunked to keep memory bounded on the largest grids
    best = np.inf
    pa = np.stack([ia, ja], axis=1).astype(float)
    pb = np.stack([ib, jb], axis=1).astype(float)
    step = 4096
    for s in range(0, len(pa), step):
        d = pa[s : s + step, None, :] - pb[None, :, :]
        best = min(best, float((d * d).sum(axis=2).min()))
    return best
