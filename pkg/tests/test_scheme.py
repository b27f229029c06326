import math
from fractions import Fraction

import pytest

from tessera.angles import norm_angle
from tessera.errors import NotHyperbolicPCF
from tessera.fixtures import two_fixed_critical_cubic
from tessera.polycore import quadratic
from tessera.scheme import (
    GeneralizedPolynomial,
    GPRayTracer,
    gp_green,
    gp_ray,
    in_CT,
    internal_angle_system,
    power_fibers,
    reduced_scheme,
)
from tessera.potential import _Level

F = Fraction


def test_reduced_scheme_airplane(airplane):
    T = reduced_scheme(airplane)
    assert T.vertices == ("v0",)
    assert dict(T.r) == {"v0": 3}
    assert dict(T.delta) == {"v0": 2}
    assert dict(T.sigma) == {"v0": "v0"}


def test_reduced_scheme_basilica(basilica):
    T = reduced_scheme(basilica)
    assert dict(T.r) == {"v0": 2}
    assert dict(T.delta) == {"v0": 2}


def test_reduced_scheme_two_fixed_critical_cubic():
    T = reduced_scheme(two_fixed_critical_cubic())
    assert len(T.vertices) == 2
    assert all(v == 1 for _, v in T.r)
    assert all(v == 2 for _, v in T.delta)
    assert dict(T.sigma) == {"v0": "v0", "v1": "v1"}


def test_reduced_scheme_rejects_escaping():
    with pytest.raises(NotHyperbolicPCF):
        reduced_scheme(quadratic(1.0))


def test_scheme_orbit_consistency(airplane):
    # r(v) steps from the critical point arrive at sigma(v)'s critical point
    T = reduced_scheme(airplane)
    centers = T.centers_map()
    for v in T.vertices:
        w = centers[v]
        for _ in range(T.r_map()[v]):
            w = airplane(w)
        assert abs(w - centers[T.sigma_map()[v]]) < 1e-7


def test_internal_angles_basilica(basilica):
    sys = internal_angle_system(basilica, reduced_scheme(basilica))
    assert sys.theta["v0"] == F(1, 3)
    assert sys.partners["v0"] == F(2, 3)


def test_internal_angles_airplane(airplane):
    sys = internal_angle_system(airplane, reduced_scheme(airplane))
    assert sys.theta["v0"] == F(2, 7)
    assert sys.partners["v0"] == F(5, 7)
    # z_v is the root of the critical component boundary, fixed by the return
    z = sys.landing_points["v0"]
    w = z
    for _ in range(3):
        w = airplane(w)
    assert abs(w - z) < 1e-8


def test_internal_angles_exact_compatibility(airplane):
    T = reduced_scheme(airplane)
    sys = internal_angle_system(airplane, T)
    sys.check_compatibility(T, 2)  # raises on failure; exact integer arithmetic
    v = "v0"
    assert norm_angle(2 ** T.r_map()[v] * sys.theta[v]) == sys.theta[v]


def test_internal_angles_cubic_fixed_vertices():
    cub = two_fixed_critical_cubic()
    sys = internal_angle_system(cub, reduced_scheme(cub))
    for v, t in sys.theta.items():
        assert norm_angle(3 * t) == t


def test_in_CT_cases(airplane):
    T = reduced_scheme(airplane)
    assert in_CT(power_fibers(T))
    assert in_CT(GeneralizedPolynomial(T, (("v0", quadratic(-1.0)),)))
    assert not in_CT(GeneralizedPolynomial(T, (("v0", quadratic(1.0)),)))


def test_gp_ray_power_fiber_is_radial(airplane):
    T = reduced_scheme(airplane)
    g = power_fibers(T)
    ray = gp_ray(g, "v0", F(1, 3), 1e-6)
    for l, z in ray.samples:
        assert abs(abs(z) - math.exp(l)) < 1e-9 * max(1.0, abs(z))


def test_gp_green_power_fiber_log_abs(airplane):
    T = reduced_scheme(airplane)
    g = power_fibers(T)
    for z in (3.0, 2.0 + 1.0j, 0.5):
        want = max(math.log(abs(z)), 0.0)
        assert gp_green(g, "v0", z) == pytest.approx(want, abs=1e-9)


def test_gp_ray_basilica_fiber_landings(airplane, oracle):
    T = reduced_scheme(airplane)
    g = GeneralizedPolynomial(T, (("v0", quadratic(-1.0)),))
    beta = oracle([1, -1, -1], 1.6)
    alpha = oracle([1, -1, -1], -0.6)
    r0 = gp_ray(g, "v0", F(0), 1e-9)
    assert abs(r0.endpoint() - beta) < 1e-8
    r3 = gp_ray(g, "v0", F(1, 3), 1e-9)
    assert abs(r3.endpoint() - alpha) < 2e-2  # trace only; no landing polish


def test_gp_ray_mapping_property(airplane):
    T = reduced_scheme(airplane)
    g = GeneralizedPolynomial(T, (("v0", quadratic(-1.0)),))
    tracer = GPRayTracer(g)
    t = F(1, 3)
    for k in range(1, 12):
        lv = _Level(F(1, 2**k), 0)
        z = tracer.point("v0", t, lv)
        img = tracer.point("v0", norm_angle(2 * t), lv.times(2))
        assert abs(g.fiber("v0")(z) - img) < 1e-6 * max(1.0, abs(img))
