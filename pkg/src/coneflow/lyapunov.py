"""Orbit-monotone scalar built from the equilibrium branch.

For a state y, the branch point dominated by y with boundary contact,
q(y), is the interpolated curve state at the largest level h whose
equilibrium still sits below y in the cone order; the scalar L(y) is the
conserved quantity at q(y).  Membership below the ordered branch is
monotone in the level (dropping the level only adds a cone element to the
difference), so a bisection over the branch parameter finds the contact
level; the returned certificate is that y - q(y) classifies as cone
boundary.  L computed this way increases strictly along non-equilibrium
orbits, which check_increase_along_orbit verifies on stored trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import Membership, OrderRel, classify, order
from .equilibria import EquilibriumCurve, solve_on_levelset
from .errors import CurveTooShort, LeftDomain, NoConvergence
from .integrate import Trajectory
from .numerics import DEFAULT_TOL, Tol, as_vector
from .system import SystemSpec


@dataclass
class LyapunovEvaluator:
    """Frozen pairing of a system and a dense-enough equilibrium branch.

    Construction validates the density invariant: the midpoint of every
    curve segment must still be strictly interior-ordered against both
    endpoints, so linear interpolation cannot flip membership tests.
    """

    system: SystemSpec
    curve: EquilibriumCurve

    def __post_init__(self):
        k = self.system.cone_K
        st = self.curve.states
        for i in range(len(self.curve) - 1):
            mid = 0.5 * (st[i] + st[i + 1])
            if (order(k, st[i], mid) is not OrderRel.LL
                    or order(k, mid, st[i + 1]) is not OrderRel.LL):
                raise ValueError(
                    f"curve too coarse near h={self.curve.levels[i]}: "
                    "segment midpoint loses strict ordering")

    @property
    def h_cap(self) -> float:
        return float(self.curve.levels[-1])


def eval_Q(ev: LyapunovEvaluator, y, tol: Tol = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """Contact level and dominated branch point for y.

    Bisection over the level in [0, h_cap]: membership of y - e(h) in the
    order cone is monotone decreasing in h along the ordered branch.  The
    interpolated bracket is then polished by a secant iteration on the
    exact binding-facet margin, re-solving the branch point with the
    level-set corrector; interpolation error would otherwise leak into
    orbit-monotonicity audits at the 1e-8 scale.  Falls back to the
    bracketed value when the polish leaves its segment or loses the
    boundary certificate.  Raises CurveTooShort when y still dominates
    the last curve sample.
    """
    yv = as_vector(y, ev.system.dim)
    if classify(ev.system.cone_Y, yv, tol) is Membership.OUTSIDE:
        raise ValueError("query point outside the state cone")
    k = ev.system.cone_K

    def member(h: float) -> bool:
        return classify(k, yv - ev.curve.state_at(h), tol) is not Membership.OUTSIDE

    levels = ev.curve.levels
    if member(float(levels[-1])):
        raise CurveTooShort(
            f"point dominates the computed branch up to h={ev.h_cap}; extend the curve")
    if not member(0.0):
        # y itself must lie in K (state cone is contained in the order cone)
        raise ValueError("query point not above the origin in the order cone")
    # locate the bracketing segment by node index, then bisect inside it;
    # total budget stays under 60 membership tests
    i_lo, i_hi = 0, len(levels) - 1
    while i_hi - i_lo > 1:
        mid = (i_lo + i_hi) // 2
        if member(float(levels[mid])):
            i_lo = mid
        else:
            i_hi = mid
    lo, hi = float(levels[i_lo]), float(levels[i_hi])
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if member(mid):
            lo = mid
        else:
            hi = mid
    h_star = lo
    q = ev.curve.state_at(h_star)
    polished = _polish_contact(ev, yv, h_star, tol)
    if polished is not None:
        return polished
    return h_star, q


def _polish_contact(ev: LyapunovEvaluator, yv: np.ndarray, h_bracket: float,
                    tol: Tol) -> tuple[float, np.ndarray] | None:
    """Refine the contact level on the exact branch.

    Root-finds the minimum facet margin of y - e(h), with e(h) re-solved
    by the level-set corrector (warm-started from nearby solutions) rather
    than interpolated.  The sign bracket starts at the curve nodes
    enclosing the bisection result; those are exact branch points already.
    Secant steps safeguarded by bisection keep the bracket valid.  Returns
    None (callers fall back to the interpolated answer) when the corrector
    fails or the boundary certificate does not hold at the root.
    """
    s = ev.system
    facets = s.cone_K.facets
    levels = ev.curve.levels
    # the corrector resolves margins to ~1e-11 of scale; stopping tighter
    # than that only burns iterations
    ztol = 1e-10 * (1.0 + float(np.linalg.norm(yv)))
    cache: list[tuple[float, np.ndarray]] = []

    def exact_state(h: float) -> np.ndarray | None:
        for hc, ec in cache:
            if hc == h:
                return ec
        if cache:
            warm = min(cache, key=lambda it: abs(it[0] - h))[1]
        else:
            warm = ev.curve.state_at(min(max(h, 0.0), ev.h_cap))
        try:
            e = solve_on_levelset(s, h, warm)
        except (NoConvergence, LeftDomain):
            return None
        cache.append((h, e))
        return e

    def mu(h: float) -> float | None:
        e = exact_state(h)
        if e is None:
            return None
        return float(np.min(facets @ (yv - e)))

    i = int(np.searchsorted(levels, h_bracket))
    i_lo = max(i - 1, 0)
    i_hi = min(i, len(levels) - 1)
    for j in ((i_lo,) if i_lo == i_hi else (i_lo, i_hi)):
        cache.append((float(levels[j]), ev.curve.states[j].copy()))
    lo, hi = float(levels[i_lo]), float(levels[i_hi])
    m_lo, m_hi = mu(lo), mu(hi)
    if m_lo is None or m_hi is None:
        return None
    for _ in range(2):  # widen by a node if the sign split is not yet there
        if m_lo < -ztol and i_lo > 0:
            i_lo -= 1
            lo = float(levels[i_lo])
            cache.append((lo, ev.curve.states[i_lo].copy()))
            m_lo = mu(lo)
        if m_hi >= 0.0 and i_hi < len(levels) - 1:
            i_hi += 1
            hi = float(levels[i_hi])
            cache.append((hi, ev.curve.states[i_hi].copy()))
            m_hi = mu(hi)
        if m_lo is None or m_hi is None:
            return None
    root = None
    if abs(m_lo) <= ztol:
        root = lo
    elif abs(m_hi) <= ztol:
        root = hi
    elif m_lo < 0.0 or m_hi > 0.0:
        return None
    else:
        for it in range(60):
            if m_hi == m_lo:
                cand = 0.5 * (lo + hi)
            else:
                cand = lo - m_lo * (hi - lo) / (m_hi - m_lo)
            if it % 3 == 2 or not (lo < cand < hi):
                cand = 0.5 * (lo + hi)
            m_c = mu(cand)
            if m_c is None:
                return None
            if abs(m_c) <= ztol:
                root = cand
                break
            if m_c > 0.0:
                lo, m_lo = cand, m_c
            else:
                hi, m_hi = cand, m_c
            if hi - lo <= 1e-12 * (1.0 + hi):
                root = lo
                break
        if root is None:
            root = lo
    q = exact_state(root)
    if q is None:
        return None
    if classify(s.cone_K, yv - q, tol) is not Membership.BOUNDARY:
        return None
    return float(s.integral_at(q)), q


def eval_L(ev: LyapunovEvaluator, y, tol: Tol = DEFAULT_TOL) -> float:
    """Conserved quantity at the dominated branch point; L(y) <= H(y)."""
    _, q = eval_Q(ev, y, tol)
    val = ev.system.integral_at(q)
    hy = ev.system.integral_at(as_vector(y, ev.system.dim))
    if val > hy + 1e-7 * (1.0 + abs(hy)):
        raise AssertionError(f"L(y)={val} exceeded H(y)={hy}")
    return val


def boundary_certificate(ev: LyapunovEvaluator, y, tol: Tol = DEFAULT_TOL) -> Membership:
    """Classification of y - q(y); the contract is cone boundary."""
    _, q = eval_Q(ev, y, tol)
    return classify(ev.system.cone_K, as_vector(y, ev.system.dim) - q, tol)


@dataclass
class OrbitIncreaseReport:
    """Monotonicity audit of L along one stored trajectory."""

    n_points: int
    passed: bool
    initial_L: float
    final_L: float
    min_step_increase: float
    max_L: float
    level: float            # conserved quantity of the orbit
    violations: list[str] = field(default_factory=list)


def check_increase_along_orbit(ev: LyapunovEvaluator, traj: Trajectory,
                               slack: float = 1e-9, active_norm: float = 1e-6,
                               tol: Tol = DEFAULT_TOL) -> OrbitIncreaseReport:
    """L along the trajectory: non-decreasing, strictly so away from rest.

    Between consecutive stored states, L may not drop by more than
    ``slack`` and must strictly increase while the field norm at the
    earlier state exceeds ``active_norm``.  L must also stay below the
    orbit's conserved level until convergence.
    """
    ls = []
    fnorms = []
    for st in traj.states:
        ls.append(eval_L(ev, st, tol))
        fnorms.append(float(np.linalg.norm(ev.system.field_at(st))))
    level = traj.h0
    violations: list[str] = []
    min_inc = math.inf
    for i in range(len(ls) - 1):
        inc = ls[i + 1] - ls[i]
        if inc < -slack:
            violations.append(f"L dropped by {-inc:.3e} at t={traj.times[i+1]:.6g}")
        if fnorms[i] > active_norm:
            min_inc = min(min_inc, inc)
            if inc <= 0.0:
                violations.append(
                    f"L not strictly increasing at t={traj.times[i+1]:.6g} "
                    f"(field norm {fnorms[i]:.3e})")
    for i, lv in enumerate(ls):
        if fnorms[i] > active_norm and lv >= level + slack:
            violations.append(
                f"L={lv:.12g} reached the orbit level {level:.12g} before rest")
    return OrbitIncreaseReport(n_points=len(ls), passed=not violations,
                               initial_L=ls[0], final_L=ls[-1],
                               min_step_increase=min_inc, max_L=max(ls),
                               level=level, violations=violations)
