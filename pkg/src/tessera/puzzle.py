"""Yoccoz puzzles: admissible sets, pieces as itineraries, nests, slices.

Pieces are combinatorial: a depth-n piece is the sequence of depth-0 regions
visited by the first n iterates, with exact boundary angles recoverable as
pulled-back co-landing pairs. Geometry enters only through a rasterized
region atlas (point location) and Monte-Carlo sampling (diameters).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .angles import norm_angle
from .errors import (
    LandingUnresolved,
    NotAdmissible,
    OnBoundary,
    RefinementFailed,
    SamplingInconclusive,
)
from .gridmask import GridMask
from .lamination import rational_lamination
from .polycore import MonicPolynomial, classify, cycle_multiplier, _np_apply, orbit
from .potential import get_tracer, land_ray, _Level, green
from .scheme import on_component_boundary

LANDING_MATCH_TOL = 1e-5


@dataclass(frozen=True)
class AdmissibleSet:
    points: tuple                    # landing points, one per angle class
    ray_classes: tuple               # per point, sorted tuple of Fractions
    forward_map: tuple               # index of f(points[i]) in points

    def classes_as_sets(self):
        return [frozenset(c) for c in self.ray_classes]

    def all_angles(self):
        return [t for cls in self.ray_classes for t in cls]


def make_admissible(
    f0: MonicPolynomial,
    angle_classes,
    tol: float = LANDING_MATCH_TOL,
    closure_budget: int = 64,
) -> AdmissibleSet:
    """Build and validate an admissible set from angle classes.

    The classes are closed under angle multiplication (new image classes are
    adjoined); each class must co-land at a single point with >= 2 rays, the
    forward map must stay inside the set, and periodic points must repel.
    """
    d = f0.degree
    classes = [tuple(sorted(norm_angle(t) for t in cls)) for cls in angle_classes]
    # close under m_d
    i = 0
    while i < len(classes):
        img = tuple(sorted({norm_angle(d * t) for t in classes[i]}))
        if not any(set(img) <= set(c) for c in classes):
            classes.append(img)
            if len(classes) > closure_budget:
                raise NotAdmissible("forward closure exceeded budget", bullet=1)
        i += 1

    points = []
    ray_classes = []
    for cls in classes:
        landings = {}
        for t in cls:
            try:
                landings[t] = land_ray(f0, t)
            except LandingUnresolved as e:
                raise NotAdmissible(f"ray {t} landing unresolved: {e}", bullet=3)
        vals = list(landings.values())
        center = sum(vals) / len(vals)
        if any(abs(v - center) > tol for v in vals):
            raise NotAdmissible(
                f"class {list(map(str, cls))} does not co-land "
                f"(spread {max(abs(v - center) for v in vals):.2e})",
                bullet=3,
            )
        if len(cls) < 2:
            raise NotAdmissible(
                f"class {list(map(str, cls))} has a single ray", bullet=3
            )
        points.append(center)
        ray_classes.append(tuple(cls))

    # merge classes landing at the same point (distinct classes may share it)
    merged_pts, merged_cls = [], []
    for p, cls in zip(points, ray_classes):
        for k, q in enumerate(merged_pts):
            if abs(p - q) <= tol:
                merged_cls[k] = tuple(sorted(set(merged_cls[k]) | set(cls)))
                break
        else:
            merged_pts.append(p)
            merged_cls.append(cls)

    fmap = []
    for p in merged_pts:
        img = f0(p)
        for k, q in enumerate(merged_pts):
            if abs(img - q) <= 10 * tol:
                fmap.append(k)
                break
        else:
            raise NotAdmissible(f"f(point {p:.6g}) leaves the set", bullet=1)

    # repelling check on cycles of the forward map
    n = len(merged_pts)
    for start in range(n):
        seen = []
        k = start
        while k not in seen:
            seen.append(k)
            k = fmap[k]
        cyc_start = seen.index(k)
        cyc = seen[cyc_start:]
        if start in cyc:
            lam = cycle_multiplier(f0, [merged_pts[j] for j in cyc])
            if abs(lam) <= 1 + 1e-9:
                raise NotAdmissible(
                    f"periodic point {merged_pts[start]:.6g} not repelling "
                    f"(|multiplier| = {abs(lam):.6g})",
                    bullet=2,
                )
    return AdmissibleSet(
        points=tuple(merged_pts),
        ray_classes=tuple(merged_cls),
        forward_map=tuple(fmap),
    )


@dataclass(frozen=True)
class PuzzlePiece:
    depth: int
    itinerary: tuple                 # depth + 1 region ids
    boundary_pairs: tuple = ()       # ((angle lo, angle hi), ...), exact Fractions

    def shifted(self) -> "PuzzlePiece":
        return PuzzlePiece(self.depth - 1, self.itinerary[1:])


# -- the puzzle object ---------------------------------------------------------


class Puzzle:
    """Depth-0 graph of an admissible set plus point-location machinery."""

    def __init__(
        self,
        f0: MonicPolynomial,
        Z: AdmissibleSet,
        l0: float = 1.0,
        resolution: int = 1024,
        ray_depth: float = 1e-6,
    ):
        self.f = f0
        self.Z = Z
        self.l0 = l0
        self.resolution = resolution
        self._ray_depth = ray_depth
        self._build_geometry()
        self._build_atlas()
        self._slice_cache: dict = {}
        self._pair_levels: list = []

    # ---- geometry -------------------------------------------------------

    def _ray_polyline(self, t) -> np.ndarray:
        tracer = get_tracer(self.f)
        pts = []
        lv = _Level(Fraction(2), 0)  # start above the l0 = 1 equipotential
        while lv.value() >= self._ray_depth:
            pts.append(tracer.point(t, lv))
            lv = lv.half()
        pts.append(land_ray(self.f, t))
        return np.array(pts)

    def _build_geometry(self):
        self.rays = {}
        for cls in self.Z.ray_classes:
            for t in cls:
                self.rays[t] = self._ray_polyline(t)
        # sectors: consecutive circular angle pairs at each point
        self.sectors = []  # (point_index, theta_minus, theta_plus)
        for i, cls in enumerate(self.Z.ray_classes):
            angles = sorted(cls)
            q = len(angles)
            for k in range(q):
                self.sectors.append((i, angles[k], angles[(k + 1) % q]))
        self._sector_image = [self._image_sector(j) for j in range(len(self.sectors))]

    def _image_sector(self, j: int) -> int:
        i, a, b = self.sectors[j]
        d = self.f.degree
        i2 = self.Z.forward_map[i]
        a2, b2 = norm_angle(d * a), norm_angle(d * b)
        for k, (ii, aa, bb) in enumerate(self.sectors):
            if ii == i2 and aa == a2 and bb == b2:
                return k
        raise NotAdmissible(
            f"image of sector {j} not a sector (classes not closed)", bullet=1
        )

    def _build_atlas(self):
        res = self.resolution
        box = max(self.f.escape_radius(), 2.0) * 1.1
        xs = np.linspace(-box, box, res)
        Zg = xs[None, :] + 1j * xs[:, None]
        self._xs = xs
        self._box = box

        # Green values on the grid (vectorized escape loop)
        G = np.zeros(Zg.shape, dtype=float)
        W = Zg.copy()
        alive = np.ones(Zg.shape, dtype=bool)
        d = self.f.degree
        for n in range(240):
            big = alive & (np.abs(W) > 1e10)
            G[big] = np.log(np.abs(W[big])) / d**n
            alive &= ~big
            if not alive.any():
                break
            W[alive] = _np_apply(self.f, W[alive])
        self._green = G

        # sector membership per Z-point via polygon tests
        from matplotlib.path import Path

        pts_flat = np.stack([Zg.real.ravel(), Zg.imag.ravel()], axis=1)
        sector_idx = np.zeros((len(self.Z.points), res * res), dtype=np.int16)
        ambiguous = np.zeros(res * res, dtype=bool)
        for i in range(len(self.Z.points)):
            local = [j for j, s in enumerate(self.sectors) if s[0] == i]
            hit_count = np.zeros(res * res, dtype=np.int8)
            for j in local:
                poly = self._sector_polygon(j)
                inside = Path(poly).contains_points(pts_flat)
                sector_idx[i][inside] = j
                hit_count += inside
            ambiguous |= hit_count != 1
        # region id = tuple of sector indices across points
        combo = sector_idx[0].astype(np.int64)
        base = len(self.sectors) + 1
        for i in range(1, len(self.Z.points)):
            combo = combo * base + sector_idx[i]
        ids, labels = np.unique(combo, return_inverse=True)
        labels = labels.astype(np.int32).reshape(res, res)
        labels[self._green >= self.l0] = -1          # escaped past the l0 equipotential
        amb = ambiguous.reshape(res, res)
        # boundary buffer: ambiguous pixels and label discontinuities
        edge = np.zeros_like(amb)
        edge[1:, :] |= labels[1:, :] != labels[:-1, :]
        edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
        edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
        edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
        self._labels = labels
        self._boundary = amb | edge
        self.n_regions = int(labels.max()) + 1

    def _sector_polygon(self, j: int) -> np.ndarray:
        i, a, b = self.sectors[j]
        p = self.Z.points[i]
        ray_a = self.rays[a]
        ray_b = self.rays[b]
        arc_r = 1.2 * max(np.abs(ray_a[0]), np.abs(ray_b[0]))
        # from far on ray a, in to the landing point, out along ray b, then an
        # arc through the sector's angular interval back to the start
        verts = list(ray_a) + [p] + list(ray_b[::-1])
        a_f, b_f = float(a), float(b)
        if b_f <= a_f:
            b_f += 1.0
        arc = [
            arc_r * cmath.exp(2j * math.pi * th)
            for th in np.linspace(b_f, a_f, 48)
        ]
        verts += arc
        return np.array([[v.real, v.imag] for v in verts])

    # ---- point location --------------------------------------------------

    def _pixel_index(self, z: complex):
        res = self.resolution
        xs = self._xs
        step = xs[1] - xs[0]
        j = int(round((z.real - xs[0]) / step))
        i = int(round((z.imag - xs[0]) / step))
        if not (0 <= i < res and 0 <= j < res):
            return None
        return i, j

    def region_of(self, z: complex, strict: bool = True) -> int:
        idx = self._pixel_index(z)
        if idx is None:
            raise OnBoundary(f"{z:.6g} outside the atlas box")
        i, j = idx
        if strict and self._boundary[i, j]:
            raise OnBoundary(f"{z:.6g} within a pixel of the depth-0 graph")
        lab = int(self._labels[i, j])
        if lab < 0:
            raise OnBoundary(f"{z:.6g} beyond the l0 equipotential")
        return lab

    def region_of_many(self, zs: np.ndarray) -> np.ndarray:
        """Vectorized region lookup; -1 escaped/outside, -2 boundary buffer."""
        xs = self._xs
        step = xs[1] - xs[0]
        res = self.resolution
        finite = (
            np.isfinite(zs.real)
            & np.isfinite(zs.imag)
            & (np.abs(zs.real) < 1e12)
            & (np.abs(zs.imag) < 1e12)
        )
        re = np.where(finite, zs.real, 0.0)
        im = np.where(finite, zs.imag, 0.0)
        jj = np.round((re - xs[0]) / step).astype(int)
        ii = np.round((im - xs[0]) / step).astype(int)
        ok = finite & (ii >= 0) & (ii < res) & (jj >= 0) & (jj < res)
        out = np.full(zs.shape, -1, dtype=np.int32)
        ii_c, jj_c = np.clip(ii, 0, res - 1), np.clip(jj, 0, res - 1)
        lab = self._labels[ii_c, jj_c]
        bnd = self._boundary[ii_c, jj_c]
        out[ok] = lab[ok]
        out[ok & bnd] = -2
        return out

    def itinerary(self, z: complex, depth: int, strict: bool = True) -> tuple:
        g = green(self.f, z)
        if g >= self.l0 / self.f.degree**depth:
            raise ValueError(
                f"point too shallow for depth {depth}: G = {g:.3g} >= "
                f"{self.l0 / self.f.degree ** depth:.3g}"
            )
        out = []
        w = complex(z)
        for _ in range(depth + 1):
            out.append(self.region_of(w, strict=strict))
            w = self.f(w)
        return tuple(out)

    def itinerary_many(self, zs: np.ndarray, depth: int) -> np.ndarray:
        """(N, depth+1) region ids; negative entries mark escape/boundary."""
        out = np.zeros(zs.shape + (depth + 1,), dtype=np.int32)
        w = zs.astype(complex)
        for k in range(depth + 1):
            out[..., k] = self.region_of_many(w)
            w = _np_apply(self.f, w)
        return out

    def piece_of(self, z: complex, depth: int, with_boundary: bool = False) -> PuzzlePiece:
        itin = self.itinerary(z, depth)
        pairs = self.enclosing_pairs(z, depth) if with_boundary else ()
        return PuzzlePiece(depth, itin, pairs)

    # ---- exact boundary pairs (pullback tree) -----------------------------

    def _pairs_at_depth(self, depth: int) -> list:
        """Co-landing boundary pairs at the given depth: dicts with exact
        angles (a, b), the landing point, and the pair's polyline."""
        while len(self._pair_levels) <= depth:
            self._extend_pairs()
        return self._pair_levels[depth]

    def _extend_pairs(self):
        d = self.f.degree
        if not self._pair_levels:
            level0 = []
            for (i, a, b) in self.sectors:
                level0.append({"a": a, "b": b, "point": self.Z.points[i]})
            self._pair_levels.append(level0)
            return
        prev = self._pair_levels[-1]
        nxt = []
        for pair in prev:
            c = self.f.full_coeffs().copy()
            c[-1] -= pair["point"]
            pre_pts = np.roots(c)
            buckets = {k: [] for k in range(len(pre_pts))}
            for t0 in (pair["a"], pair["b"]):
                for k in range(d):
                    t = norm_angle(Fraction(t0 + k, d))
                    w = self._land_to_preimage(t, pre_pts)
                    buckets[w].append(t)
            for k, angles in buckets.items():
                angles = sorted(set(angles))
                q = len(angles)
                if q < 2:
                    continue
                for m in range(q):
                    aa, bb = angles[m], angles[(m + 1) % q]
                    nxt.append({"a": aa, "b": bb, "point": complex(pre_pts[k])})
        self._pair_levels.append(nxt)

    def _land_to_preimage(self, t, pre_pts) -> int:
        z = land_ray(self.f, t, l_min=1e-7)
        return int(np.argmin(np.abs(pre_pts - z)))

    def _inside_wedge(self, z: complex, pair: dict) -> bool:
        """Is z in the region cut off by the pair on its (a, b)-arc side?"""
        a, b = pair["a"], pair["b"]
        mid = a + norm_angle(b - a) / 2 if b != a else a + Fraction(1, 2)
        far = 1.5 * self._box * cmath.exp(2j * math.pi * float(mid))
        curve = self._pair_polyline(pair)
        return _crossings(z, far, curve) % 2 == 0

    def _pair_polyline(self, pair: dict) -> np.ndarray:
        key = ("poly", pair["a"], pair["b"], round(pair["point"].real, 9), round(pair["point"].imag, 9))
        cached = self._slice_cache.get(key)
        if cached is None:
            tracer = get_tracer(self.f)
            pts = []
            lv = _Level(Fraction(4), 0)
            while lv.value() >= 1e-5:
                pts.append(tracer.point(pair["a"], lv))
                lv = lv.half()
            pts.append(pair["point"])
            lv = _Level(Fraction(4), 0)
            tail = []
            while lv.value() >= 1e-5:
                tail.append(tracer.point(pair["b"], lv))
                lv = lv.half()
            pts.extend(tail[::-1])
            cached = np.array(pts)
            self._slice_cache[key] = cached
        return cached

    def enclosing_pairs(self, z: complex, depth: int) -> tuple:
        """Innermost co-landing pair around z per depth 0..depth (exact angles)."""
        out = []
        for n in range(depth + 1):
            best = None
            for pair in self._pairs_at_depth(n):
                if self._inside_wedge(z, pair):
                    length = norm_angle(pair["b"] - pair["a"])
                    if best is None or length < best[0]:
                        best = (length, (pair["a"], pair["b"]))
            if best is not None:
                out.append(best[1])
        return tuple(out)


_PUZZLES: dict = {}


def get_puzzle(f0: MonicPolynomial, Z: AdmissibleSet, l0: float = 1.0, resolution: int = 1024) -> Puzzle:
    key = (f0, Z, l0, resolution)
    pz = _PUZZLES.get(key)
    if pz is None:
        pz = Puzzle(f0, Z, l0=l0, resolution=resolution)
        _PUZZLES[key] = pz
    return pz


def piece_of(f0: MonicPolynomial, Z: AdmissibleSet, z: complex, depth: int) -> PuzzlePiece:
    return get_puzzle(f0, Z).piece_of(z, depth)


# -- critical nest --------------------------------------------------------------


def critical_nest(
    f0: MonicPolynomial,
    Z: AdmissibleSet,
    c: complex,
    max_depth: int,
    n_samples: int = 3000,
    seed: int = 0,
) -> list:
    """Per-depth return degrees and Monte-Carlo diameters of the nest at c.

    Degrees multiply local degrees of f along the pieces f^j(Y_n(c)), with
    critical membership decided by itinerary prefixes; diameters are max
    pairwise distances over samples sharing the piece's itinerary.
    """
    pz = get_puzzle(f0, Z)
    dyn = classify(f0, primitivity=False)
    crits = [(d.critical_point, d.multiplicity) for d in dyn.critical_orbit_data]
    it_c = pz.itinerary(c, max_depth)
    crit_its = {}
    for cp, _ in crits:
        try:
            crit_its[cp] = pz.itinerary(cp, max_depth, strict=False)
        except (OnBoundary, ValueError):
            crit_its[cp] = None

    # s = first k >= 1 with f^k(c) in the full nest (itinerary prefix match)
    s = None
    w = complex(c)
    for k in range(1, max_depth):
        w = f0(w)
        try:
            it_w = pz.itinerary(w, max_depth - k, strict=False)
        except (OnBoundary, ValueError):
            continue
        if it_w == it_c[: max_depth - k + 1]:
            s = k
            break
    if s is None:
        raise SamplingInconclusive("no return of the critical orbit into its nest")

    rng = np.random.default_rng(seed)
    # initial cloud around c
    half = 0.5 * min(
        [abs(c - p) for p in Z.points]
        + [abs(c - cp) or math.inf for cp, _ in crits if abs(c - cp) > 1e-12]
        + [1.0]
    )
    cloud = c + (rng.uniform(-1, 1, n_samples) + 1j * rng.uniform(-1, 1, n_samples)) * half

    out = []
    for n in range(max_depth + 1):
        # degree of f^s : Y_n(c) -> Y_{n-s}
        deg = 1
        for j in range(s):
            local = 1
            for cp, mult in crits:
                it_cp = crit_its[cp]
                if it_cp is None:
                    continue
                lo, hi = j, n + 1
                if hi - lo <= len(it_cp) and it_cp[: hi - lo] == it_c[lo:hi]:
                    local += mult
            deg *= local
        # Monte-Carlo diameter of Y_n(c)
        its = pz.itinerary_many(cloud, n)
        target = np.array(it_c[: n + 1], dtype=np.int32)
        keep = (its == target[None, :]).all(axis=1)
        pts = cloud[keep]
        if len(pts) < 40:
            bb = pts if len(pts) else np.array([c])
            lo_r, hi_r = bb.real.min(), bb.real.max()
            lo_i, hi_i = bb.imag.min(), bb.imag.max()
            pad = 0.35 * max(hi_r - lo_r, hi_i - lo_i, 1e-6)
            fresh = (
                rng.uniform(lo_r - pad, hi_r + pad, n_samples)
                + 1j * rng.uniform(lo_i - pad, hi_i + pad, n_samples)
            )
            its_f = pz.itinerary_many(fresh, n)
            keep_f = (its_f == target[None, :]).all(axis=1)
            pts = np.concatenate([pts, fresh[keep_f]])
        pts = np.concatenate([pts, [c]])
        if len(pts) >= 10:
            link = max(
                6 * (pz._xs[1] - pz._xs[0]), 4.0 * pz._box / math.sqrt(len(pts))
            )
            pts = _connected_cluster(pts[:-1], complex(c), link)
        diameter = None
        if len(pts) >= 10:
            sub = pts[rng.choice(len(pts), min(len(pts), 800), replace=False)]
            dmat = np.abs(sub[:, None] - sub[None, :])
            diameter = float(dmat.max())
        out.append(
            {
                "depth": n,
                "return_time": s,
                "degree": deg,
                "diameter": diameter,
                "samples": int(len(pts)),
            }
        )
        cloud = pts if len(pts) >= 10 else cloud
    return out


# -- buried biaccessible search ---------------------------------------------------


def find_buried_biaccessible(
    f0: MonicPolynomial,
    period_budget: int,
    dyn=None,
    require_buried: bool = True,
):
    """First (in deterministic angle order) repelling periodic co-landing class
    none of whose orbit points lies on a periodic Fatou component boundary.

    Returns (point, angle_pair, full_class). A miss within the budget raises
    SamplingInconclusive: existence is guaranteed for primitive maps, so a
    miss only ever signals the budget, never a disproof.
    """
    if dyn is None:
        dyn = classify(f0)
    if not (dyn.is_pcf and dyn.is_hyperbolic):
        raise ValueError("precondition: f0 must be PCF hyperbolic")
    if require_buried and not dyn.is_primitive_heuristic:
        raise ValueError("precondition: f0 must be primitive (heuristic)")
    if all(abs(a) < 1e-12 for a in f0.coefficients):
        raise ValueError("precondition: f0 = z^d is excluded")
    from .polycore import periodic_cycle_points

    centers = periodic_cycle_points(dyn.critical_orbit_data)
    periods = {
        tuple(np.round([p.real, p.imag], 9)): d.attracting_cycle.period
        for d in dyn.critical_orbit_data
        if d.attracting_cycle
        for p in d.attracting_cycle.points
    }
    for p in range(1, period_budget + 1):
        lam = rational_lamination(f0, period_bound=p, preperiod_bound=0)
        classes = sorted(
            (cls for cls in lam.classes if min(_angle_period(t, f0.degree) for t in cls) == p),
            key=lambda cls: sorted(cls),
        )
        for cls in classes:
            z = lam.landing_points[cls]
            orb = orbit(f0, z, p)
            buried = True
            for w in orb:
                for center in centers:
                    per = periods[tuple(np.round([center.real, center.imag], 9))]
                    if on_component_boundary(f0, w, center, per):
                        buried = False
                        break
                if not buried:
                    break
            if buried or not require_buried:
                pair = tuple(sorted(cls))[:2]
                return z, pair, frozenset(cls)
    raise SamplingInconclusive(
        f"no {'buried ' if require_buried else ''}biaccessible class within period {period_budget}"
    )


def _angle_period(t, d):
    from .angles import angle_orbit

    pre, per, _ = angle_orbit(t, d)
    return per if pre == 0 else 10**9


# -- refinement -------------------------------------------------------------------


def refine_admissible(
    f0: MonicPolynomial,
    Z: AdmissibleSet,
    c0: complex,
    max_depth: int = 10,
    seed: int = 0,
) -> AdmissibleSet:
    """Adjoin the orbit of a biaccessible periodic point found inside the
    renormalization of the return map, transported through the angle
    substitution anchored at the nest's root pair.

    Pre: the nest at c0 must be strictly larger than the closure of c0's
    Fatou component (checked by comparing Monte-Carlo diameters).
    """
    from .scheme import _component_mask
    from .tuner import BlockSubstitution

    pz = get_puzzle(f0, Z)
    nest = critical_nest(f0, Z, c0, max_depth, seed=seed)
    diam_nest = next(
        (e["diameter"] for e in reversed(nest) if e["diameter"] is not None), None
    )
    if diam_nest is None:
        raise RefinementFailed("nest diameters unresolved")
    dyn = classify(f0, primitivity=False)
    comp_period = next(
        (d.attracting_cycle.period for d in dyn.critical_orbit_data
         if abs(d.critical_point - c0) < 1e-8 and d.attracting_cycle),
        None,
    )
    if comp_period is None:
        raise ValueError("c0 must be a periodic critical point")
    mask, xs = _component_mask(f0, c0, comp_period, 512)
    px = xs[1] - xs[0]
    comp_diam = (max(np.ptp(np.nonzero(mask)[0]), np.ptp(np.nonzero(mask)[1])) + 1) * px if mask.any() else 0.0
    if diam_nest <= comp_diam * 1.2 + 4 * px:
        raise ValueError(
            f"precondition: nest already shrinks to the component closure "
            f"(nest {diam_nest:.4g} vs component {comp_diam:.4g})"
        )

    s = nest[-1]["return_time"]
    # root pair of the renormalization: deepest enclosing pair fixed by m_d^s
    pairs = pz.enclosing_pairs(c0, min(max_depth, 8))
    d = f0.degree
    root_pair = None
    for a, b in reversed(pairs):
        if norm_angle(a * d**s) == a and norm_angle(b * d**s) == b:
            root_pair = (a, b)
            break
    if root_pair is None:
        raise RefinementFailed("no return-fixed enclosing pair found")

    # fiber period of the return map
    q = None
    w = complex(c0)
    for k in range(1, 64):
        for _ in range(s):
            w = f0(w)
        if abs(w - c0) < 1e-7:
            q = k
            break
    if q is None:
        raise RefinementFailed("return orbit of c0 did not close up")

    # straightened return map: quadratic-like of the detected period
    deg_ret = nest[-1]["degree"]
    if deg_ret != 2:
        raise RefinementFailed(f"only degree-2 returns supported (got {deg_ret})")
    from .tuner import quadratic_center_of_period

    P = quadratic_center_of_period(q, prefer_real=True)
    dynP = classify(P)
    try:
        zhat, pair, cls = find_buried_biaccessible(P, period_budget=max(2, q), dyn=dynP)
    except ValueError:
        # straightened map not primitive: fall back to a biaccessible point
        zhat, pair, cls = find_buried_biaccessible(
            P, period_budget=max(2, q), dyn=dynP, require_buried=False
        )

    sub = BlockSubstitution.single_vertex(d, s, theta=min(root_pair), partner=max(root_pair))
    new_classes = [tuple(sorted(sub.substitute(t) for t in cls))]
    all_classes = [tuple(c) for c in Z.ray_classes] + new_classes
    try:
        Zp = make_admissible(f0, all_classes)
    except NotAdmissible as e:
        raise RefinementFailed(f"transport failed: {e}")

    nest2 = critical_nest(f0, Zp, c0, max_depth, seed=seed)
    s2, deg2 = nest2[-1]["return_time"], nest2[-1]["degree"]
    if not (s2 > s or (s2 == s and deg2 < deg_ret)):
        raise RefinementFailed(
            f"no strict refinement (s {s} -> {s2}, degree {deg_ret} -> {deg2})"
        )
    return Zp


# -- first landing masks ------------------------------------------------------------


def first_landing_mask(
    f0: MonicPolynomial,
    Z: AdmissibleSet,
    n: int,
    grid_res: int = 512,
    orbit_cap: int = 512,
) -> GridMask:
    """Pixel mask of the first-landing domain of the union of critical pieces
    at depth n: points whose orbit enters some Y_n(c) within the cap."""
    pz = get_puzzle(f0, Z)
    dyn = classify(f0, primitivity=False)
    targets = []
    for dd in dyn.critical_orbit_data:
        try:
            targets.append(np.array(pz.itinerary(dd.critical_point, n, strict=False), dtype=np.int32))
        except (OnBoundary, ValueError):
            continue
    if not targets:
        raise ValueError("no critical piece resolvable at this depth")

    # membership raster on the atlas grid
    res_atlas = pz.resolution
    xs = pz._xs
    Zg = xs[None, :] + 1j * xs[:, None]
    its = pz.itinerary_many(Zg, n)
    member = np.zeros(Zg.shape, dtype=bool)
    for tgt in targets:
        member |= (its == tgt[None, None, :]).all(axis=2)

    def member_of(pts):
        step = xs[1] - xs[0]
        jj = np.round((pts.real - xs[0]) / step).astype(int)
        ii = np.round((pts.imag - xs[0]) / step).astype(int)
        ok = (ii >= 0) & (ii < res_atlas) & (jj >= 0) & (jj < res_atlas)
        out = np.zeros(pts.shape, dtype=bool)
        out[ok] = member[np.clip(ii, 0, res_atlas - 1), np.clip(jj, 0, res_atlas - 1)][ok]
        return out

    box = pz._box
    gx = np.linspace(-box, box, grid_res)
    W = (gx[None, :] + 1j * gx[:, None]).astype(complex)
    hit = member_of(W)
    alive = ~hit & (np.abs(W) < 1e6)
    cur = W.copy()
    for _ in range(orbit_cap):
        if not alive.any():
            break
        cur[alive] = _np_apply(f0, cur[alive])
        alive &= np.abs(cur) < 1e6
        newly = alive & member_of(cur)
        hit |= newly
        alive &= ~newly
    return GridMask(
        bbox=(-box, box, -box, box),
        resolution=grid_res,
        bits=hit,
        meta={
            "kind": "first-landing",
            "depth": n,
            "orbit_cap": orbit_cap,
            "under_approximation": True,
        },
    )


# -- slices ---------------------------------------------------------------------


def slice_pairs(
    f0: MonicPolynomial,
    Z: AdmissibleSet,
    j: int,
    n: int,
    n0: int = 2,
):
    """Extremal boundary angles (t_n^-, t_n^+) of the depth-n piece attached
    at the base point of sector j, and their common landing point.

    Exact arc recursion: the angle support of the attached piece pulls back
    through the sector dynamics, keeping the components attached at the
    sector's boundary angles plus their deck partners when the piece is
    critical. Co-landing of the result is verified numerically (Claim 1 of
    the slice construction); monotonicity (Claim 2) is a test-side property.
    """
    if n < n0:
        raise ValueError(f"precondition: n = {n} < n0 = {n0}")
    pz = get_puzzle(f0, Z)
    arcs = _slice_arcs(pz, j, n)
    i, tm, tp = pz.sectors[j]
    lo_arc = next((a for a in arcs if a[0] == tm), None)
    hi_arc = next((a for a in arcs if a[1] == tp), None)
    if lo_arc is None or hi_arc is None:
        raise LandingUnresolved(f"attached arcs lost at depth {n} (sector {j})")
    t_minus, t_plus = lo_arc[1], hi_arc[0]
    z_minus = land_ray(f0, t_minus)
    z_plus = land_ray(f0, t_plus)
    if abs(z_minus - z_plus) > LANDING_MATCH_TOL:
        raise LandingUnresolved(
            f"slice pair ({t_minus}, {t_plus}) does not co-land "
            f"({abs(z_minus - z_plus):.2e})"
        )
    return t_minus, t_plus, (z_minus + z_plus) / 2


def _slice_arcs(pz: Puzzle, j: int, n: int) -> list:
    key = ("arcs", j, n)
    hit = pz._slice_cache.get(key)
    if hit is not None:
        return hit
    i, tm, tp = pz.sectors[j]
    if n == 0:
        arcs = [(tm, tp)]
        pz._slice_cache[key] = arcs
        return arcs
    d = pz.f.degree
    img_arcs = _slice_arcs(pz, pz._sector_image[j], n - 1)
    pre = []
    for a, b in img_arcs:
        length = norm_angle(b - a)
        if length == 0:
            length = Fraction(1)
        for k in range(d):
            lo = norm_angle(Fraction(a + k, d))
            pre.append((lo, lo + length / d))
    kept = []
    for lo, hi in pre:
        if norm_angle(lo) == tm or norm_angle(hi) == tp:
            kept.append((lo, hi))
    if _attached_piece_is_critical(pz, j, n):
        if d != 2:
            raise NotImplementedError("critical slice recursion implemented for d = 2")
        half = Fraction(1, 2)
        partners = [
            (norm_angle(lo + half), norm_angle(lo + half) + (hi - lo)) for lo, hi in kept
        ]
        for lo, hi in partners:
            if not any(norm_angle(lo) == norm_angle(l2) for l2, _ in kept):
                kept.append((lo, hi))
    arcs = sorted(set((norm_angle(lo), norm_angle(lo) + (hi - lo)) for lo, hi in kept))
    pz._slice_cache[key] = arcs
    return arcs


def _attached_probe(pz: Puzzle, j: int) -> complex:
    """A point inside the depth-0 region adjacent to sector j's base point:
    ring search around the landing point, kept inside the sector polygon and
    clear of the atlas boundary buffer."""
    key = ("probe", j)
    hit = pz._slice_cache.get(key)
    if hit is None:
        from matplotlib.path import Path

        i, _tm, _tp = pz.sectors[j]
        p = pz.Z.points[i]
        poly = Path(pz._sector_polygon(j))
        px = pz._xs[1] - pz._xs[0]
        for rad_px in (3, 5, 8, 12, 20, 32):
            cands = [
                p + rad_px * px * cmath.exp(2j * math.pi * k / 48) for k in range(48)
            ]
            inside = poly.contains_points([[c.real, c.imag] for c in cands])
            for c, ok in zip(cands, inside):
                if not ok:
                    continue
                try:
                    pz.region_of(c)
                    hit = c
                    break
                except OnBoundary:
                    continue
            if hit is not None:
                break
        if hit is None:
            raise OnBoundary(f"no clean probe for sector {j}")
        pz._slice_cache[key] = hit
    return hit


def _attached_itinerary(pz: Puzzle, j: int, depth: int) -> tuple:
    seq = [j]
    for _ in range(depth):
        seq.append(pz._sector_image[seq[-1]])
    return tuple(pz.region_of(_attached_probe(pz, jj)) for jj in seq)


def _attached_piece_is_critical(pz: Puzzle, j: int, n: int) -> bool:
    """Does the depth-n piece attached in sector j contain a critical point?"""
    key = ("crit", j, n)
    hit = pz._slice_cache.get(key)
    if hit is not None:
        return hit
    att = _attached_itinerary(pz, j, n)
    dyn = classify(pz.f, primitivity=False)
    ans = False
    for dd in dyn.critical_orbit_data:
        try:
            it_cp = pz.itinerary(dd.critical_point, n, strict=False)
        except (OnBoundary, ValueError):
            continue
        if it_cp == att:
            ans = True
            break
    pz._slice_cache[key] = ans
    return ans


def _connected_cluster(pts: np.ndarray, base: complex, link: float) -> np.ndarray:
    """Single-linkage cluster of pts containing base (itinerary codes do not
    separate disconnected preimage pieces, proximity linking does)."""
    from scipy.spatial import cKDTree

    arr = np.concatenate([[base], pts])
    xy = np.stack([arr.real, arr.imag], axis=1)
    tree = cKDTree(xy)
    pairs = tree.query_pairs(link, output_type="ndarray")
    n = len(arr)
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    root0 = find(0)
    keep = np.array([find(k) == root0 for k in range(n)])
    return arr[keep]


def attached_piece_diameters(
    f0: MonicPolynomial,
    Z: AdmissibleSet,
    depths,
    n_samples: int = 4000,
    seed: int = 0,
) -> dict:
    """Monte-Carlo diameter of the largest depth-n piece whose closure meets Z
    (one attached piece per sector), per requested depth."""
    pz = get_puzzle(f0, Z)
    rng = np.random.default_rng(seed)
    out = {}
    max_depth = max(depths)
    clouds = {}
    for j in range(len(pz.sectors)):
        i = pz.sectors[j][0]
        p = pz.Z.points[i]
        r0 = 0.75 * min(
            [abs(p - q) for q in pz.Z.points if abs(p - q) > 1e-12] + [pz._box]
        )
        clouds[j] = p + (
            rng.uniform(-1, 1, n_samples) + 1j * rng.uniform(-1, 1, n_samples)
        ) * r0
    for n in sorted(set(depths)):
        worst = 0.0
        for j in range(len(pz.sectors)):
            att = _attached_itinerary(pz, j, n)
            target = np.array(att, dtype=np.int32)
            base = pz.Z.points[pz.sectors[j][0]]
            pts = clouds[j]
            its = pz.itinerary_many(pts, n)
            kept = pts[(its == target[None, :]).all(axis=1)]
            kept = _wedge_filter(pz, j, n, kept)
            kept = np.concatenate([kept, [base]])
            if len(kept) < 25:
                bb = kept
                pad = 0.3 * max(np.ptp(bb.real), np.ptp(bb.imag), 1e-6)
                fresh = (
                    rng.uniform(bb.real.min() - pad, bb.real.max() + pad, n_samples)
                    + 1j * rng.uniform(bb.imag.min() - pad, bb.imag.max() + pad, n_samples)
                )
                its_f = pz.itinerary_many(fresh, n)
                more = fresh[(its_f == target[None, :]).all(axis=1)]
                kept = np.concatenate([kept, _wedge_filter(pz, j, n, more)])
            sub = kept[rng.choice(len(kept), min(len(kept), 700), replace=False)]
            dmat = np.abs(sub[:, None] - sub[None, :])
            worst = max(worst, float(dmat.max()))
            clouds[j] = kept if len(kept) >= 25 else clouds[j]
        out[n] = worst
    return out


def _wedge_filter(pz: Puzzle, j: int, n: int, pts: np.ndarray) -> np.ndarray:
    """Keep only points inside the union of exact angular-arc wedges of the
    attached piece (itinerary codes alone do not separate disconnected
    preimage pieces; the pulled-back co-landing pairs do)."""
    if len(pts) == 0:
        return pts
    arcs = _slice_arcs(pz, j, n)
    keep = np.zeros(len(pts), dtype=bool)
    for lo, hi in arcs:
        a, b = norm_angle(lo), norm_angle(hi)
        try:
            pt = land_ray(pz.f, a)
        except Exception:
            continue
        pair = {"a": a, "b": b, "point": pt}
        for k in range(len(pts)):
            if not keep[k]:
                keep[k] = pz._inside_wedge(complex(pts[k]), pair)
    return pts[keep]


def _crossings(z0: complex, z1: complex, curve: np.ndarray) -> int:
    """Number of crossings of the segment [z0, z1] with a polyline."""
    p = np.array([z0.real, z0.imag])
    r = np.array([z1.real - z0.real, z1.imag - z0.imag])
    a = np.stack([curve.real[:-1], curve.imag[:-1]], axis=1)
    s = np.stack([curve.real[1:] - curve.real[:-1], curve.imag[1:] - curve.imag[:-1]], axis=1)
    denom = r[0] * s[:, 1] - r[1] * s[:, 0]
    qp = a - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / denom
    hits = (np.abs(denom) > 1e-300) & (t > 0) & (t < 1) & (u >= 0) & (u < 1)
    return int(hits.sum())


def find_sector(f0: MonicPolynomial, Z: AdmissibleSet, z: complex) -> int:
    """Index of the depth-0 sector whose region contains z."""
    pz = get_puzzle(f0, Z)
    reg = pz.region_of(z)
    for j in range(len(pz.sectors)):
        if pz.region_of(_attached_probe(pz, j)) == reg:
            return j
    raise OnBoundary(f"no sector probe shares the region of {z:.6g}")
