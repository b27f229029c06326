"""Thurston pull-back on marked portraits, with per-step polynomial solves.

Each step solves jointly for the monic centered Q and the new positions of
the critical marked points (Q's critical points must sit at the new critical
positions with the prescribed multiplicities, and their images must be the
current positions of the transition targets); the remaining marked points are
pulled back through Q by branch continuity from the previous step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BranchAmbiguity, NoConvergence, SolveFailure
from .polycore import MonicPolynomial

BRANCH_GUARD = 3.0   # second-nearest preimage must be this factor farther
PORTRAIT_RESIDUAL = 1e-9


@dataclass(frozen=True)
class MarkedPortrait:
    ids: tuple                       # marked point names
    transition: tuple                # ((id, image id), ...)
    local_degree: tuple              # ((id, k >= 1), ...)
    degree: int                      # degree of the target polynomial
    angles: tuple = ()               # optional ((id, (Fraction, ...)), ...)

    def transition_map(self) -> dict:
        return dict(self.transition)

    def local_degree_map(self) -> dict:
        return dict(self.local_degree)

    def critical_ids(self) -> list:
        ld = self.local_degree_map()
        return [i for i in self.ids if ld[i] >= 2]

    def validate(self):
        tr, ld = self.transition_map(), self.local_degree_map()
        for i in self.ids:
            if i not in tr or tr[i] not in self.ids:
                raise ValueError(f"transition not closed at {i}")
            if ld.get(i, 0) < 1:
                raise ValueError(f"local degree missing at {i}")
        budget = sum(ld[i] - 1 for i in self.ids)
        if budget != self.degree - 1:
            raise ValueError(
                f"Riemann-Hurwitz budget {budget} != degree - 1 = {self.degree - 1}"
            )


@dataclass
class PullbackState:
    n: int
    positions: dict                  # id -> complex
    poly: Optional[MonicPolynomial]
    displacement: float = math.inf


def _poly_derivatives_at(a: np.ndarray, d: int, z: complex, kmax: int):
    """[Q(z), Q'(z), ..., Q^{(kmax)}(z)] for Q = z^d + sum a_j z^j."""
    out = []
    for k in range(kmax + 1):
        # d-th power term
        val = (math.prod(range(d - k + 1, d + 1)) if k <= d else 0) * z ** (d - k)
        for j in range(len(a)):
            if j >= k:
                val += a[j] * math.prod(range(j - k + 1, j + 1)) * z ** (j - k)
        out.append(val)
    return out


def _solve_step_poly(
    degree: int,
    crit_ids: list,
    mults: dict,
    targets: dict,
    a_seed: np.ndarray,
    q_seed: dict,
    max_iter: int = 80,
) -> tuple:
    """Solve for (coefficients a, critical positions q) with damped Newton.

    Equations: Q^{(k)}(q_i) = 0 for k = 1..m_i and Q(q_i) = targets[i].
    """
    d = degree
    nc = len(crit_ids)
    na = d - 1
    x = np.zeros(na + nc, dtype=complex)
    x[:na] = a_seed
    for idx, i in enumerate(crit_ids):
        x[na + idx] = q_seed[i]

    def residual_and_jac(x):
        a = x[:na]
        q = x[na:]
        rows = []
        F = []
        for idx, i in enumerate(crit_ids):
            m = mults[i]
            derivs = _poly_derivatives_at(a, d, q[idx], m + 1)
            # value equation
            row = np.zeros(na + nc, dtype=complex)
            for j in range(na):
                row[j] = q[idx] ** j
            row[na + idx] = derivs[1]
            rows.append(row)
            F.append(derivs[0] - targets[i])
            # critical equations k = 1..m
            for k in range(1, m + 1):
                row = np.zeros(na + nc, dtype=complex)
                for j in range(na):
                    if j >= k:
                        row[j] = math.prod(range(j - k + 1, j + 1)) * q[idx] ** (j - k)
                row[na + idx] = derivs[k + 1]
                rows.append(row)
                F.append(derivs[k])
        return np.array(F, dtype=complex), np.array(rows, dtype=complex)

    scale = 1.0 + max(abs(v) for v in targets.values())
    F, J = residual_and_jac(x)
    norm = np.linalg.norm(F)
    for _ in range(max_iter):
        if norm < 1e-13 * scale:
            break
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, F, rcond=None)
        lam = 1.0
        for _bt in range(30):
            x_new = x - lam * step
            F_new, J_new = residual_and_jac(x_new)
            n_new = np.linalg.norm(F_new)
            if n_new < norm or n_new < 1e-13 * scale:
                x, F, J, norm = x_new, F_new, J_new, n_new
                break
            lam /= 2
        else:
            raise SolveFailure(f"solve stalled at residual {norm:.2e}")
    if norm > 1e-8 * scale:
        raise SolveFailure(f"solve did not converge (residual {norm:.2e})")
    a = x[:na]
    q = {i: x[na + idx] for idx, i in enumerate(crit_ids)}
    return a, q


def _preimage_by_continuity(
    Q: MonicPolynomial, target: complex, previous: complex, halvings: int = 8
) -> complex:
    """The Q-preimage of `target` continuing the branch at `previous`.

    Nearest preimage with a separation guard; on a guard violation the target
    is approached through intermediate points (step halving).
    """
    start = Q(previous)
    crit_vals = [Q(q) for q in np.roots(Q.deriv_coeffs())]

    def roots_of(value):
        c = Q.full_coeffs().copy()
        c[-1] -= value
        return np.roots(c)

    def near_critical_value(lo, hi):
        seg = hi - lo
        L2 = abs(seg) ** 2
        if L2 == 0:
            return False
        for cv in crit_vals:
            s = ((cv - lo).real * seg.real + (cv - lo).imag * seg.imag) / L2
            s = min(max(s, 0.0), 1.0)
            if abs(lo + s * seg - cv) < 0.05 * abs(seg):
                return True
        return False

    cur = complex(previous)
    stack = [(start, target)]
    depth = 0
    while stack:
        lo, hi = stack.pop()
        roots = roots_of(hi)
        dist = np.abs(roots - cur)
        order = np.argsort(dist)
        if len(order) == 1 or dist[order[1]] >= BRANCH_GUARD * max(dist[order[0]], 1e-300):
            cur = complex(roots[order[0]])
            continue
        depth += 1
        if depth > halvings:
            raise BranchAmbiguity(
                f"preimage tie near {cur:.6g} (d1={dist[order[0]]:.3g}, d2={dist[order[1]]:.3g})"
            )
        # halve the target step; when the segment passes near a critical value
        # of Q (where preimages collide) bow the midpoint around it
        mid = (lo + hi) / 2
        if near_critical_value(lo, hi):
            mid = mid + 0.5j * (hi - lo)
        stack.append((mid, hi))
        stack.append((lo, mid))
    return cur


def pullback_step(state: PullbackState, portrait: MarkedPortrait) -> PullbackState:
    """One Thurston step: solve Q_n, then pull marked positions back."""
    portrait.validate()
    tr = portrait.transition_map()
    ld = portrait.local_degree_map()
    crit = portrait.critical_ids()
    mults = {i: ld[i] - 1 for i in crit}
    targets = {i: state.positions[tr[i]] for i in crit}

    if state.poly is not None:
        a_seed = np.array(state.poly.coefficients, dtype=complex)
    else:
        a_seed = _coeff_seed(portrait, state.positions, mults, targets)
    q_seed = {i: state.positions[i] for i in crit}
    a, q = _solve_step_poly(portrait.degree, crit, mults, targets, a_seed, q_seed)
    Q = MonicPolynomial(portrait.degree, tuple(a))

    new_pos = {}
    for i in portrait.ids:
        if i in q:
            new_pos[i] = q[i]
        else:
            new_pos[i] = _preimage_by_continuity(
                Q, state.positions[tr[i]], state.positions[i]
            )
    disp = max(abs(new_pos[i] - state.positions[i]) for i in portrait.ids)
    return PullbackState(state.n + 1, new_pos, Q, disp)


def _coeff_seed(portrait, positions, mults, targets):
    """Initial coefficients: integrate the prescribed critical-point product."""
    d = portrait.degree
    crit = list(mults)
    # Q'(z) = d * prod (z - q_i)^{m_i}; integrate, choose constant from the
    # first critical value equation.
    prod = np.array([1.0 + 0j])
    for i in crit:
        for _ in range(mults[i]):
            prod = np.polymul(prod, np.array([1.0, -positions[i]]))
    prod = d * prod
    n = len(prod)
    integ = np.zeros(n + 1, dtype=complex)
    for k, c in enumerate(prod):
        power = n - 1 - k
        integ[k] = c / (power + 1)
    # integ is highest-first, degree d, leading coefficient 1 by construction
    C = 0.0 + 0j
    if crit:
        i0 = crit[0]
        C = targets[i0] - np.polyval(integ, positions[i0])
    integ[-1] += C
    # read off a_0..a_{d-2}; the z^{d-1} slot should be ~0 after recentering
    a = np.array([integ[d - j] for j in range(d - 1)], dtype=complex)
    return a


@dataclass
class ThurstonResult:
    poly: MonicPolynomial
    converged: bool
    displacements: list
    decay_ratio: Optional[float]
    iterations: int
    final_state: PullbackState = field(repr=False, default=None)

    def certificate(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_displacement": self.displacements[-1] if self.displacements else None,
            "geometric_decay_ratio": self.decay_ratio,
        }


def recenter_positions(portrait: MarkedPortrait, positions: dict) -> dict:
    """Translate so the multiplicity-weighted critical positions sum to zero
    (the gauge a monic centered polynomial can realize)."""
    ld = portrait.local_degree_map()
    crit = portrait.critical_ids()
    total = sum((ld[i] - 1) * positions[i] for i in crit)
    shift = total / (portrait.degree - 1)
    return {i: positions[i] - shift for i in positions}


def thurston_iterate(
    portrait: MarkedPortrait,
    seed_positions: dict,
    tol: float = 1e-10,
    max_iter: int = 400,
) -> ThurstonResult:
    """Iterate pull-back until the marked points stop moving.

    Raises NoConvergence (with the displacement history attached) when the
    budget runs out; no attempt is made to diagnose an obstruction.
    """
    portrait.validate()
    if set(seed_positions) != set(portrait.ids):
        raise ValueError("seed positions must cover exactly the marked ids")
    state = PullbackState(0, recenter_positions(portrait, dict(seed_positions)), None)
    disps = []
    for _ in range(max_iter):
        state = pullback_step(state, portrait)
        disps.append(state.displacement)
        if state.displacement < tol:
            break
    else:
        raise NoConvergence(
            f"no convergence in {max_iter} iterations (last displacement "
            f"{disps[-1]:.3e})",
            history=disps,
        )
    ratio = None
    tail = [x for x in disps[-11:] if x > 0]
    if len(tail) >= 3:
        rr = [tail[i + 1] / tail[i] for i in range(len(tail) - 1)]
        ratio = float(np.exp(np.mean(np.log(rr)))) if all(r > 0 for r in rr) else 0.0
    elif disps and disps[-1] == 0.0:
        ratio = 0.0
    return ThurstonResult(
        poly=state.poly,
        converged=True,
        displacements=disps,
        decay_ratio=ratio,
        iterations=len(disps),
        final_state=state,
    )


def portrait_from_polynomial(f: MonicPolynomial, dyn=None) -> tuple:
    """The critical-orbit portrait of a PCF polynomial plus its exact positions.

    Marked points are the distinct points of all critical orbits; returns
    (portrait, positions).
    """
    from .polycore import classify

    if dyn is None:
        dyn = classify(f, primitivity=False)
    if not dyn.is_pcf:
        raise ValueError("portrait_from_polynomial needs a PCF polynomial")
    pts = []

    def key_of(z):
        for k, w in enumerate(pts):
            if abs(w - z) < 1e-8 * max(1.0, abs(w)):
                return k
        pts.append(z)
        return len(pts) - 1

    edges = {}
    degmap = {}
    for dat in dyn.critical_orbit_data:
        orbit_pts = [dat.critical_point]
        w = dat.critical_point
        for _ in range(dat.preperiod + dat.period):
            w = f(w)
            orbit_pts.append(w)
        keys = [key_of(z) for z in orbit_pts]
        for a, b in zip(keys, keys[1:]):
            edges[a] = b
        degmap[keys[0]] = dat.multiplicity + 1
    ids = tuple(f"x{k}" for k in range(len(pts)))
    transition = tuple((f"x{a}", f"x{b}") for a, b in sorted(edges.items()))
    local_degree = tuple((f"x{k}", degmap.get(k, 1)) for k in range(len(pts)))
    portrait = MarkedPortrait(
        ids=ids,
        transition=transition,
        local_degree=local_degree,
        degree=f.degree,
    )
    positions = {f"x{k}": pts[k] for k in range(len(pts))}
    portrait.validate()
    return portrait, positions
