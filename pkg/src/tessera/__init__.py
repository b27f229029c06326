"""tessera: polynomial dynamics at desk scale.

External rays and Green potentials, rational laminations, reduced mapping
schemes and generalized polynomials, Yoccoz puzzles, Thurston pull-back
iteration, and the tuning / straightening operators, with a small CLI.
"""

from .polycore import MonicPolynomial, quadratic, classify, critical_points, find_cycles, evaluate
from .potential import green, boettcher, trace_ray, land_ray, equipotential
from .lamination import rational_lamination, contains, angle_orbit

__version__ = "0.1.0"

__all__ = [
    "MonicPolynomial",
    "quadratic",
    "classify",
    "critical_points",
    "find_cycles",
    "evaluate",
    "green",
    "boettcher",
    "trace_ray",
    "land_ray",
    "equipotential",
    "rational_lamination",
    "contains",
    "angle_orbit",
]
