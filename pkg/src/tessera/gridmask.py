"""Grid masks: first-landing domains, the notched-square model, shape audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import ndimage

from .polycore import MonicPolynomial, _np_apply


@dataclass
class GridMask:
    bbox: tuple          # (xmin, xmax, ymin, ymax)
    resolution: int
    bits: np.ndarray     # bool, shape (resolution, resolution); row = imaginary axis
    meta: dict = field(default_factory=dict)

    def area_fraction(self) -> float:
        return float(self.bits.mean())

    def pixel_size(self) -> float:
        xmin, xmax, _, _ = self.bbox
        return (xmax - xmin) / self.bits.shape[1]

    def to_pgm(self, path: str):
        h, w = self.bits.shape
        with open(path, "wb") as fh:
            fh.write(f"P5 {w} {h} 255\n".encode())
            fh.write((np.flipud(self.bits).astype(np.uint8) * 255).tobytes())


def cantor_gaps(depth: int):
    """Complementary gaps of the ternary Cantor set down to level `depth`,
    as exact Fractions [(a, b)], 2^{k-1} gaps of length 3^{-k} at level k."""
    gaps = []
    level = [(Fraction(0), Fraction(1))]
    for _ in range(depth):
        nxt = []
        for a, b in level:
            third = (b - a) / 3
            gaps.append((a + third, a + 2 * third))
            nxt.append((a, a + third))
            nxt.append((a + 2 * third, b))
        level = nxt
    return gaps


def notched_square_mask(depth: int, resolution: int) -> GridMask:
    """The recursively notched square: over each Cantor gap I of (0,1), the
    closed square I x [-|I|/2, |I|/2], truncated at the given Cantor depth,
    rasterized over S = (0,1) x (-1/2, 1/2) by pixel-center membership."""
    bits = np.zeros((resolution, resolution), dtype=bool)
    xs = (np.arange(resolution) + 0.5) / resolution          # pixel centers, x in (0,1)
    ys = (np.arange(resolution) + 0.5) / resolution - 0.5    # y in (-1/2, 1/2)
    for a, b in cantor_gaps(depth):
        half = (b - a) / 2
        j0 = np.searchsorted(xs, float(a))
        j1 = np.searchsorted(xs, float(b))
        i0 = np.searchsorted(ys, -float(half))
        i1 = np.searchsorted(ys, float(half))
        bits[i0:i1, j0:j1] = True
    return GridMask(
        bbox=(0.0, 1.0, -0.5, 0.5),
        resolution=resolution,
        bits=bits,
        meta={"kind": "notched-square", "cantor_depth": depth},
    )


def _component_diameter(ii: np.ndarray, jj: np.ndarray) -> float:
    """Max pairwise pixel distance, exact for small components, two-pass
    farthest-point sweep for large ones."""
    pts = np.stack([jj, ii], axis=1).astype(float)
    if len(pts) <= 1500:
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((d * d).sum(axis=2).max()))
    c = pts.mean(axis=0)
    for _ in range(3):
        k = int(np.argmax(((pts - c) ** 2).sum(axis=1)))
        c = pts[k]
    far1 = c
    k = int(np.argmax(((pts - far1) ** 2).sum(axis=1)))
    return float(np.sqrt(((pts[k] - far1) ** 2).sum()))


def distortion_audit(mask: GridMask, landing_mask: Optional[GridMask] = None) -> dict:
    """Per-component shape statistics: diam^2/area, and when a first-entry
    mask is supplied, the fraction of each component not covered by it.

    The max of diam^2/area (and the min retained fraction) are reported as
    the empirical shape constants.
    """
    labels, n = ndimage.label(mask.bits)
    px = mask.pixel_size()
    comps = []
    for k in range(1, n + 1):
        ii, jj = np.nonzero(labels == k)
        area = len(ii) * px * px
        diam = _component_diameter(ii, jj) * px
        entry = {
            "component": k,
            "pixels": int(len(ii)),
            "area": area,
            "diameter": diam,
            "diam2_over_area": (diam * diam / area) if area > 0 else math.inf,
        }
        if landing_mask is not None:
            inside = landing_mask.bits[ii, jj]
            entry["retained_fraction"] = float(1.0 - inside.mean())
        comps.append(entry)
    report = {
        "n_components": n,
        "pixel_size": px,
        "components": comps,
        "empirical_M_shape": max((c["diam2_over_area"] for c in comps), default=None),
        "total_area_fraction": mask.area_fraction(),
        "meta": dict(mask.meta),
    }
    if landing_mask is not None and comps:
        report["min_retained_fraction"] = min(c["retained_fraction"] for c in comps)
    return report


def escape_time_grid(f: MonicPolynomial, res: int, box: float, max_iter: int = 256):
    """(smooth escape time, escaped flag) over the square grid; for rendering."""
    xs = np.linspace(-box, box, res)
    Z = xs[None, :] + 1j * xs[:, None]
    W = Z.copy()
    R = max(f.escape_radius(), 4.0)
    count = np.zeros(Z.shape, dtype=float)
    alive = np.ones(Z.shape, dtype=bool)
    for _ in range(max_iter):
        W[alive] = _np_apply(f, W[alive])
        newly = alive & (np.abs(W) > R)
        count[newly] += _smooth_count(W[newly], f.degree, R)
        alive &= ~newly
        count[alive] += 1
    return count, ~alive, xs


def _smooth_count(W, d, R):
    with np.errstate(all="ignore"):
        return -np.log(np.log(np.abs(W)) / math.log(R)) / math.log(d)
