"""Equilibrium location on level sets and continuation of the branch.

Each level value of the conserved quantity carries at most one
equilibrium; the solver finds it by damped Gauss-Newton on the stacked
residual [F(x); H(x) - h] (n+1 equations, n unknowns; the conservation
identity makes F rank-deficient at equilibria, the level row restores a
unique least-squares direction).  Continuation walks an increasing level
grid with a secant predictor and, at every grid point, multistart restarts
that must all land on the same point: desk-scale uniqueness evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import Membership, OrderRel, classify, interior_direction, order
from .errors import DegenerateSystem, LeftDomain, NoConvergence
from .numerics import DEFAULT_TOL, Tol, as_vector, lstsq
from .system import SystemSpec


@dataclass
class EquilibriumCurve:
    """Ordered samples (h_i, e(h_i)) of the equilibrium branch.

    h values are strictly increasing, consecutive states strictly
    interior-ordered, residuals within the stated bounds; violations and
    solver failures are recorded rather than silently dropped.
    h_max_reached is the continuation frontier: a lower estimate of where
    the branch stops being reachable, never an upper claim.
    """

    levels: np.ndarray
    states: np.ndarray
    h_max_reached: float
    failures: list[tuple[float, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.levels)

    def state_at(self, h: float) -> np.ndarray:
        """Linear interpolation between bracketing samples."""
        hs = self.levels
        if h < hs[0] - 1e-12 or h > hs[-1] + 1e-12:
            raise ValueError(f"level {h} outside curve range [{hs[0]}, {hs[-1]}]")
        i = int(np.searchsorted(hs, h))
        if i == 0:
            return self.states[0].copy()
        if i >= len(hs):
            return self.states[-1].copy()
        lo, hi = hs[i - 1], hs[i]
        w = 0.0 if hi == lo else (h - lo) / (hi - lo)
        return (1.0 - w) * self.states[i - 1] + w * self.states[i]


def solve_on_levelset(s: SystemSpec, h: float, x_init,
                      tol_resid: float = 1e-11, max_iter: int = 80,
                      tol: Tol = DEFAULT_TOL) -> np.ndarray:
    """Damped Gauss-Newton for the equilibrium on one level set.

    Armijo backtracking (factor 0.5, at most 30 halvings) on the squared
    residual norm; iterates are clipped back into the state cone when the
    violation is boundary dust, and larger violations force more damping.
    Raises NoConvergence or LeftDomain.
    """
    if h < -1e-12:
        raise ValueError("level must be nonnegative")
    x = as_vector(x_init, s.dim).copy()
    clip_tol = 1e-12
    a_y = s.cone_Y.facets

    def residual(p):
        return np.concatenate([s.field_at(p), [s.integral_at(p) - h]])

    def clip(p):
        margins = a_y @ p
        worst = float(np.min(margins))
        scale = clip_tol * (1.0 + float(np.linalg.norm(p)))
        if worst < -1e-6 * (1.0 + float(np.linalg.norm(p))):
            return None  # hopeless iterate; caller damps
        if worst < 0.0:
            for i, m in enumerate(margins):
                if m < 0.0:
                    row = a_y[i]
                    p = p - row * m / float(row @ row)
        return p

    r = residual(x)
    rnorm = float(np.linalg.norm(r))
    for it in range(max_iter):
        if rnorm <= tol_resid * (1.0 + float(np.linalg.norm(x))):
            final = clip(x)
            if final is None:
                raise LeftDomain("converged iterate escaped the state cone")
            return final
        jac = np.vstack([s.jac_at(x), s.grad_at(x)])
        try:
            step = lstsq(jac, -r, tol)
        except DegenerateSystem as exc:
            raise NoConvergence(it, rnorm, f"degenerate Jacobian: {exc}") from exc
        lam = 1.0
        accepted = False
        for _ in range(30):
            cand = clip(x + lam * step)
            if cand is not None:
                rc = residual(cand)
                rcnorm = float(np.linalg.norm(rc))
                if rcnorm <= rnorm * (1.0 - 1e-4 * lam) or rcnorm < tol_resid:
                    x, r, rnorm = cand, rc, rcnorm
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            raise NoConvergence(it, rnorm, "line search stalled")
    if rnorm <= tol_resid * (1.0 + float(np.linalg.norm(x))):
        return x
    raise NoConvergence(max_iter, rnorm)


def _level_scale_bound(s: SystemSpec, h: float) -> float:
    """Coordinate box bound for sampling below one level value."""
    vals = [s.integral_at(r) for r in s.cone_Y.rays]
    vmin = min(v for v in vals if v > 0.0)
    return h / vmin


def sample_on_levelset(s: SystemSpec, h: float, n: int, rng) -> list[np.ndarray]:
    """Random points with H = h: box samples scaled along their own rays.

    H increases strictly along rays from the origin, so a bisection in the
    scale factor lands each accepted sample on the level exactly.
    """
    out: list[np.ndarray] = []
    bound = _level_scale_bound(s, h)
    a_y = s.cone_Y.facets
    guard = 0
    while len(out) < n and guard < 500 * n:
        guard += 1
        x = rng.uniform(0.0, bound, size=s.dim)
        if float(np.min(a_y @ x)) < 0.0:
            continue
        if s.integral_at(x) <= h * 1e-3:
            continue  # would need an extreme scale factor
        lo, hi = 0.0, 1.0
        while s.integral_at(hi * x) < h and hi < 1e9:
            hi *= 2.0
        if s.integral_at(hi * x) < h:
            continue
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if s.integral_at(mid * x) < h:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi) * x)
    if len(out) < n:
        raise RuntimeError("could not sample the level set")
    return out


def continue_curve(s: SystemSpec, h_grid, multistart: int = 16,
                   seed: int = 0, tol: Tol = DEFAULT_TOL) -> EquilibriumCurve:
    """Walk the equilibrium branch over an increasing level grid.

    Secant predictor from the two previous samples (first step: along the
    state cone's interior direction scaled onto the level set); corrector
    is solve_on_levelset.  At every level, ``multistart`` random restarts
    on the level set must agree with the corrector within 1e-7 or the
    disagreement is recorded.  Persistent corrector failure stops the walk
    and freezes h_max_reached at the last success.
    """
    hs = [float(v) for v in h_grid]
    if not hs or abs(hs[0]) > 1e-12:
        raise ValueError("level grid must start at 0")
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("level grid must be strictly increasing")
    rng = np.random.default_rng(seed)
    u = interior_direction(s.cone_Y)

    levels: list[float] = []
    states: list[np.ndarray] = []
    failures: list[tuple[float, str]] = []

    origin = np.zeros(s.dim)
    f0 = float(np.linalg.norm(s.field_at(origin)))
    if f0 > 1e-9:
        failures.append((0.0, f"origin field norm {f0:.3e}"))
    levels.append(0.0)
    states.append(origin)

    for h in hs[1:]:
        if len(states) >= 2:
            e1, e0 = states[-1], states[-2]
            h1, h0 = levels[-1], levels[-2]
            pred = e1 + (e1 - e0) * ((h - h1) / (h1 - h0))
        else:
            lo, hi = 0.0, 1.0
            while s.integral_at(hi * u) < h:
                hi *= 2.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if s.integral_at(mid * u) < h:
                    lo = mid
                else:
                    hi = mid
            pred = 0.5 * (lo + hi) * u
        try:
            e = solve_on_levelset(s, h, pred, tol=tol)
        except (NoConvergence, LeftDomain) as exc:
            failures.append((h, str(exc)))
            break
        agree = True
        for x0 in sample_on_levelset(s, h, multistart, rng):
            try:
                alt = solve_on_levelset(s, h, x0, tol=tol)
            except (NoConvergence, LeftDomain) as exc:
                failures.append((h, f"multistart failed: {exc}"))
                continue
            if float(np.max(np.abs(alt - e))) > 1e-7:
                agree = False
                failures.append((h, f"multistart landed elsewhere: {alt.tolist()}"))
        if not agree:
            pass  # disagreement recorded; the corrector point is still the sample
        levels.append(h)
        states.append(e)

    curve = EquilibriumCurve(levels=np.array(levels), states=np.array(states),
                             h_max_reached=levels[-1], failures=failures)
    _validate_curve(curve, s, tol)
    return curve


def _validate_curve(curve: EquilibriumCurve, s: SystemSpec, tol: Tol) -> None:
    """Machine-check the curve invariants, recording violations."""
    for i in range(len(curve) - 1):
        if order(s.cone_K, curve.states[i], curve.states[i + 1], tol) is not OrderRel.LL:
            curve.failures.append((float(curve.levels[i + 1]),
                                   "consecutive samples not strictly interior-ordered"))
    for h, e in zip(curve.levels, curve.states):
        fn = float(np.linalg.norm(s.field_at(e)))
        if fn > 1e-9 * (1.0 + float(np.linalg.norm(e))):
            curve.failures.append((float(h), f"field residual {fn:.3e}"))
        dh = abs(s.integral_at(e) - float(h))
        if dh > 1e-9 * (1.0 + float(h)):
            curve.failures.append((float(h), f"level residual {dh:.3e}"))


@dataclass
class BoundaryReport:
    passed: bool
    n_pairs: int
    violations: list[str] = field(default_factory=list)


def assert_no_boundary_equilibria(curve: EquilibriumCurve, s: SystemSpec,
                                  tol: Tol = DEFAULT_TOL) -> BoundaryReport:
    """Check that distinct curve samples are strictly interior-ordered.

    Strict ordering of every consecutive pair (never boundary-grade LT)
    is the computational face of 'no equilibria on shifted cone
    boundaries'; nonzero samples must also sit strictly inside the order
    cone relative to their predecessor.
    """
    violations: list[str] = []
    n = 0
    for i in range(len(curve) - 1):
        a, b = curve.states[i], curve.states[i + 1]
        n += 1
        rel = order(s.cone_K, a, b, tol)
        if rel is not OrderRel.LL:
            violations.append(f"pair ({curve.levels[i]}, {curve.levels[i+1]}): {rel.value}")
        if classify(s.cone_K, b - a, tol) is not Membership.INTERIOR:
            violations.append(f"difference at h={curve.levels[i+1]} not interior")
    return BoundaryReport(passed=not violations, n_pairs=n, violations=violations)
