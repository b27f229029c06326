"""Command-line surface.

Subcommands: classify | lamination | scheme | puzzle | landing-mask | audit
| thurston | tune | straighten | verify | render. Every command prints a
JSON summary to stdout; artifacts are written only after inputs validate.
Exit codes: 0 success, 1 domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import fixtures
from .errors import TesseraError, VerificationFailed
from .jsonio import (
    angle_from_str,
    angle_to_str,
    dumps,
    gp_to_json,
    poly_from_json,
    poly_to_json,
    scheme_to_json,
)
from .polycore import MonicPolynomial, classify, quadratic


def _resolve_poly(spec: str) -> MonicPolynomial:
    if spec in fixtures.NAMED:
        return fixtures.by_name(spec)
    try:
        return poly_from_json(spec)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise SystemExit(f"cannot parse polynomial {spec!r}: {e}")


def _provenance(args, **extra) -> dict:
    out = {"seed": getattr(args, "seed", 0)}
    out.update(extra)
    return out


def cmd_classify(args):
    f = _resolve_poly(args.poly)
    dyn = classify(f, orbit_budget=args.budget, seed=args.seed)
    report = {
        "poly": poly_to_json(f),
        "is_pcf": dyn.is_pcf,
        "is_hyperbolic": dyn.is_hyperbolic,
        "is_primitive_heuristic": dyn.is_primitive_heuristic,
        "primitivity_is_heuristic": True,
        "critical_orbits": [
            {
                "critical_point": d.critical_point,
                "multiplicity": d.multiplicity,
                "escapes": d.escapes,
                "preperiod": d.preperiod,
                "period": d.period,
            }
            for d in dyn.critical_orbit_data
        ],
        "notes": dyn.notes,
        "provenance": _provenance(args, orbit_budget=args.budget),
    }
    print(dumps(report))
    return 0


def cmd_lamination(args):
    from .lamination import rational_lamination

    f = _resolve_poly(args.poly)
    lam = rational_lamination(
        f, period_bound=args.period_bound, preperiod_bound=args.preperiod_bound
    )
    report = {
        "poly": poly_to_json(f),
        "period_bound": lam.period_bound,
        "preperiod_bound": lam.preperiod_bound,
        "classes": sorted(sorted(angle_to_str(t) for t in cls) for cls in lam.classes),
        "skipped": [angle_to_str(t) for t in lam.skipped],
        "provenance": _provenance(args, tol_cluster=1e-5),
    }
    print(dumps(report))
    return 0


def cmd_scheme(args):
    from .scheme import internal_angle_system, reduced_scheme

    f = _resolve_poly(args.poly)
    T = reduced_scheme(f)
    report = {"poly": poly_to_json(f), "scheme": scheme_to_json(T)}
    if args.angles:
        ang = internal_angle_system(f, T)
        report["internal_angles"] = {v: angle_to_str(t) for v, t in ang.theta.items()}
        report["marked_points"] = {v: z for v, z in ang.landing_points.items()}
    report["provenance"] = _provenance(args)
    print(dumps(report))
    return 0


def _admissible_from_args(f, args):
    from .puzzle import make_admissible

    if args.angles:
        classes = [
            tuple(angle_from_str(a) for a in cls.split(","))
            for cls in args.angles.split(";")
        ]
    else:
        from .tuner import _base_admissible_classes

        classes = _base_admissible_classes(f)
    return make_admissible(f, classes)


def cmd_puzzle(args):
    from .puzzle import critical_nest, get_puzzle, slice_pairs

    f = _resolve_poly(args.poly)
    Z = _admissible_from_args(f, args)
    pz = get_puzzle(f, Z)
    report = {
        "poly": poly_to_json(f),
        "admissible_points": list(Z.points),
        "ray_classes": [[angle_to_str(t) for t in cls] for cls in Z.ray_classes],
        "n_depth0_regions": pz.n_regions,
        "provenance": _provenance(args, depth=args.depth),
    }
    if args.nest_at is not None:
        c = complex(args.nest_at)
        nest = critical_nest(f, Z, c, args.depth, seed=args.seed)
        report["critical_nest"] = nest
    if args.slices:
        out = []
        for j in range(len(pz.sectors)):
            try:
                tm, tp, al = slice_pairs(f, Z, j, args.depth)
                out.append(
                    {"sector": j, "t_minus": angle_to_str(tm), "t_plus": angle_to_str(tp), "landing": al}
                )
            except TesseraError as e:
                out.append({"sector": j, "error": str(e)})
        report["slices"] = out
    print(dumps(report))
    return 0


def cmd_landing_mask(args):
    from .puzzle import first_landing_mask

    f = _resolve_poly(args.poly)
    Z = _admissible_from_args(f, args)
    mask = first_landing_mask(
        f, Z, args.depth, grid_res=args.resolution, orbit_cap=args.orbit_cap
    )
    if args.out:
        mask.to_pgm(args.out)
    report = {
        "poly": poly_to_json(f),
        "depth": args.depth,
        "resolution": args.resolution,
        "area_fraction": mask.area_fraction(),
        "meta": mask.meta,
        "artifact": args.out,
        "provenance": _provenance(args, orbit_cap=args.orbit_cap),
    }
    print(dumps(report))
    return 0


def cmd_audit(args):
    from .gridmask import distortion_audit, notched_square_mask
    from .puzzle import first_landing_mask

    if args.notched_depth is not None:
        mask = notched_square_mask(args.notched_depth, args.resolution)
        landing = None
    else:
        f = _resolve_poly(args.poly)
        Z = _admissible_from_args(f, args)
        mask = first_landing_mask(f, Z, args.depth, grid_res=args.resolution)
        landing = mask
    report = distortion_audit(mask, landing_mask=None)
    report["provenance"] = _provenance(args)
    print(dumps(report))
    return 0


def cmd_thurston(args):
    from .thurston import MarkedPortrait, thurston_iterate

    spec = json.loads(args.portrait)
    portrait = MarkedPortrait(
        ids=tuple(spec["ids"]),
        transition=tuple(sorted(spec["transition"].items())),
        local_degree=tuple(sorted((k, int(v)) for k, v in spec["local_degree"].items())),
        degree=int(spec["degree"]),
    )
    seeds = {k: complex(v[0], v[1]) if isinstance(v, list) else complex(v) for k, v in spec["seeds"].items()}
    res = thurston_iterate(portrait, seeds, tol=args.tol)
    report = {
        "poly": poly_to_json(res.poly),
        "certificate": res.certificate(),
        "provenance": _provenance(args, tol=args.tol),
    }
    print(dumps(report))
    return 0


def _problem_from_args(args):
    from .tuner import make_problem

    f0 = _resolve_poly(args.f0)
    g = _resolve_poly(args.g)
    return make_problem(f0, g)


def cmd_tune(args):
    from .tuner import tune

    prob = _problem_from_args(args)
    report_obj = tune(prob, lam_bound=args.lam_bound)
    report = {
        "tuned": poly_to_json(report_obj.tuned),
        "lamination_ok": report_obj.lamination_ok,
        "lamination_bound": report_obj.lamination_bound,
        "renorm_connected": report_obj.renorm_connected,
        "marking_ok": report_obj.marking_ok,
        "straighten_ok": report_obj.straighten_ok,
        "residuals": report_obj.residuals,
        "provenance": _provenance(args, lam_bound=args.lam_bound),
    }
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(report))
    print(dumps(report))
    return 0 if report_obj.all_ok() else 1


def cmd_straighten(args):
    from .scheme import power_fibers, reduced_scheme
    from .tuner import RenormalizationData, TuningProblem, straighten
    from .scheme import internal_angle_system

    f0 = _resolve_poly(args.f0)
    f = _resolve_poly(args.poly)
    T = reduced_scheme(f0)
    prob = TuningProblem(f0, T, internal_angle_system(f0, T), power_fibers(T))
    data = RenormalizationData.from_problem(prob)
    g = straighten(f, data)
    report = {
        "f0": poly_to_json(f0),
        "poly": poly_to_json(f),
        "straightened": gp_to_json(g),
        "provenance": _provenance(args),
    }
    print(dumps(report))
    return 0


def cmd_verify(args):
    from .tuner import verify_tuning

    prob = _problem_from_args(args)
    f = _resolve_poly(args.poly)
    rep = verify_tuning(f, prob, lam_bound=args.lam_bound)
    report = {
        "poly": poly_to_json(f),
        "lamination_ok": rep.lamination_ok,
        "renorm_connected": rep.renorm_connected,
        "marking_ok": rep.marking_ok,
        "straighten_ok": rep.straighten_ok,
        "residuals": rep.residuals,
        "provenance": _provenance(args, lam_bound=args.lam_bound),
    }
    print(dumps(report))
    return 0 if rep.all_ok() else 1


def cmd_render(args):
    from .gridmask import escape_time_grid

    f = _resolve_poly(args.poly)
    count, inside, xs = escape_time_grid(f, args.resolution, box=max(f.escape_radius(), 2.0) * 1.05)
    img = count.copy()
    img[inside] = img.max() if img.max() > 0 else 1.0
    img = (255 * (1 - img / max(img.max(), 1e-9))).astype(np.uint8)
    if args.what == "rays" and args.ray_angles:
        from .potential import trace_ray

        step = xs[1] - xs[0]
        for part in args.ray_angles.split(","):
            t = angle_from_str(part)
            ray = trace_ray(f, t, l_min=1e-5, l0=2.0)
            for _, z in ray.samples:
                j = int(round((z.real - xs[0]) / step))
                i = int(round((z.imag - xs[0]) / step))
                if 0 <= i < args.resolution and 0 <= j < args.resolution:
                    img[i, j] = 255
    path = args.out
    with open(path, "wb") as fh:
        fh.write(f"P5 {img.shape[1]} {img.shape[0]} 255\n".encode())
        fh.write(np.flipud(img).tobytes())
    if path.endswith(".png"):
        try:
            from PIL import Image

            Image.fromarray(np.flipud(img)).save(path)
        except ImportError:
            pass
    report = {
        "poly": poly_to_json(f),
        "artifact": path,
        "what": args.what,
        "provenance": _provenance(args, resolution=args.resolution),
    }
    print(dumps(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tessera", description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def poly_arg(p):
        p.add_argument("--poly", required=True, help="fixture name or polynomial JSON")

    p = sub.add_parser("classify")
    poly_arg(p)
    p.add_argument("--budget", type=int, default=2000)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("lamination")
    poly_arg(p)
    p.add_argument("--period-bound", type=int, default=3)
    p.add_argument("--preperiod-bound", type=int, default=0)
    p.set_defaults(func=cmd_lamination)

    p = sub.add_parser("scheme")
    poly_arg(p)
    p.add_argument("--angles", action="store_true", help="include the internal angle system")
    p.set_defaults(func=cmd_scheme)

    p = sub.add_parser("puzzle")
    poly_arg(p)
    p.add_argument("--angles", help="admissible classes 'p/q,p/q;p/q,p/q'")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--nest-at", help="complex critical point, e.g. '0'")
    p.add_argument("--slices", action="store_true")
    p.set_defaults(func=cmd_puzzle)

    p = sub.add_parser("landing-mask")
    poly_arg(p)
    p.add_argument("--angles")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--orbit-cap", type=int, default=512)
    p.add_argument("--out")
    p.set_defaults(func=cmd_landing_mask)

    p = sub.add_parser("audit")
    p.add_argument("--poly")
    p.add_argument("--angles")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--notched-depth", type=int, help="audit the notched-square fixture instead")
    p.add_argument("--resolution", type=int, default=1024)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("thurston")
    p.add_argument("--portrait", required=True, help="JSON with ids/transition/local_degree/degree/seeds")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_thurston)

    p = sub.add_parser("tune")
    p.add_argument("--f0", required=True)
    p.add_argument("--g", required=True, help="fiber fixture name or polynomial JSON")
    p.add_argument("--lam-bound", type=int, default=6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("straighten")
    p.add_argument("--f0", required=True)
    poly_arg(p)
    p.set_defaults(func=cmd_straighten)

    p = sub.add_parser("verify")
    p.add_argument("--f0", required=True)
    p.add_argument("--g", required=True)
    poly_arg(p)
    p.add_argument("--lam-bound", type=int, default=6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render")
    poly_arg(p)
    p.add_argument("--what", choices=["escape", "rays", "mask"], default="escape")
    p.add_argument("--angles", dest="ray_angles", help="comma-separated ray angles")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except SystemExit as e:
        print(str(e), file=sys.stderr)
        return 2
    except (TesseraError, ValueError) as e:
        print(dumps({"error": type(e).__name__, "message": str(e)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
