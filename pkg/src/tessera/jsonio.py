"""JSON wire formats: polynomials, angles, schemes, portraits, reports.

Polynomial: {"d": int, "a": [re or [re, im], ...]} listing a_0..a_{d-2}.
Scheme: {"vertices": [...], "sigma": {...}, "delta": {...}, "r": {...}}.
Angles are "p/q" strings. Reports are dumped with sorted keys and repr
floats, so identical configs produce byte-identical output.
"""

from __future__ import annotations

import json
from fractions import Fraction

from .polycore import MonicPolynomial
from .scheme import GeneralizedPolynomial, MappingScheme


def num_to_json(x: complex):
    if isinstance(x, complex):
        if x.imag == 0:
            return x.real
        return [x.real, x.imag]
    return float(x)


def num_from_json(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def poly_to_json(f: MonicPolynomial) -> dict:
    return {"d": f.degree, "a": [num_to_json(a) for a in f.coefficients]}


def poly_from_json(obj) -> MonicPolynomial:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return MonicPolynomial(int(obj["d"]), tuple(num_from_json(v) for v in obj["a"]))


def angle_to_str(t: Fraction) -> str:
    return f"{t.numerator}/{t.denominator}"


def angle_from_str(s: str) -> Fraction:
    if "/" in s:
        p, q = s.split("/")
        return Fraction(int(p), int(q))
    return Fraction(int(s))


def scheme_to_json(T: MappingScheme) -> dict:
    return {
        "vertices": list(T.vertices),
        "sigma": {k: v for k, v in T.sigma},
        "delta": {k: v for k, v in T.delta},
        "r": {k: v for k, v in T.r},
        "centers": {k: num_to_json(v) for k, v in T.centers},
    }


def scheme_from_json(obj) -> MappingScheme:
    if isinstance(obj, str):
        obj = json.loads(obj)
    centers = obj.get("centers", {})
    return MappingScheme(
        vertices=tuple(obj["vertices"]),
        sigma=tuple(sorted(obj["sigma"].items())),
        delta=tuple(sorted((k, int(v)) for k, v in obj["delta"].items())),
        r=tuple(sorted((k, int(v)) for k, v in obj["r"].items())),
        centers=tuple(sorted((k, num_from_json(v)) for k, v in centers.items())),
    )


def gp_to_json(g: GeneralizedPolynomial) -> dict:
    return {
        "scheme": scheme_to_json(g.scheme),
        "fibers": {v: poly_to_json(p) for v, p in g.fibers},
    }


def gp_from_json(obj) -> GeneralizedPolynomial:
    if isinstance(obj, str):
        obj = json.loads(obj)
    T = scheme_from_json(obj["scheme"])
    fibers = tuple(sorted((v, poly_from_json(p)) for v, p in obj["fibers"].items()))
    return GeneralizedPolynomial(T, fibers)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_default)


def _default(x):
    if isinstance(x, complex):
        return num_to_json(x)
    if isinstance(x, Fraction):
        return angle_to_str(x)
    if isinstance(x, frozenset):
        return sorted(angle_to_str(t) for t in x)
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(f"not JSON-serializable: {type(x)}")
