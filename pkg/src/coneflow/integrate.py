"""Trajectory integration with invariant monitoring.

The default stepper is an embedded Dormand-Prince 5(4) pair with FSAL,
written over plain float lists (state dimensions here are tiny, so numpy
array overhead would dominate).  A fixed-step classical RK4 is available
for bitwise-reproducible runs.  Every accepted state is checked against
the state cone: violations within the clip tolerance are projected back,
anything larger raises LeftDomain.  Convergence (a vanishing field over
three consecutive accepted steps) stops the run early and freezes the
remaining requested sample times at the final state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import Membership, OrderRel, classify, order
from .errors import Diverged, LeftDomain, StepSizeUnderflow
from .system import SystemSpec
from .numerics import as_vector

# Dormand-Prince 5(4) tableau; the seventh stage equals the new state (FSAL).
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)


@dataclass
class IntegrateOptions:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    method: str = "rk45"        # or "rk4"
    fixed_step: float = 1e-3    # rk4 only
    clip_tol: float = 1e-12     # boundary dust threshold
    norm_cap: float = 1e9       # beyond this the orbit counts as diverged
    conv_tol: float = 1e-10
    conv_consecutive: int = 3
    stop_on_converged: bool = True
    max_steps: int = 5_000_000


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    h0: float
    drift: float
    converged: bool = False
    converged_at: float | None = None

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _clip_to_domain(y: list[float], rows, t: float, clip_tol: float) -> bool:
    """Project boundary dust back onto the state cone; True if y changed.

    Raises LeftDomain when any facet violation exceeds the clip tolerance.
    """
    scale = clip_tol * (1.0 + math.sqrt(sum(v * v for v in y)))
    changed = False
    for a in rows:
        m = sum(ai * yi for ai, yi in zip(a, y))
        if m < 0.0:
            if m < -scale:
                raise LeftDomain(
                    f"facet margin {m:.3e} below -{scale:.3e} at t={t:.6g}; "
                    "hypothesis failure or tolerances too loose")
            nrm2 = sum(ai * ai for ai in a)
            for j in range(len(y)):
                y[j] -= a[j] * m / nrm2
            changed = True
    return changed


def integrate(s: SystemSpec, x0, t_end: float,
              opts: IntegrateOptions | None = None,
              sample_times=None) -> Trajectory:
    """Solve the system forward from x0, recording requested sample times.

    x0 must lie in the state cone (boundary allowed); t_end > 0.  Sample
    times default to 201 equally spaced points including both endpoints.
    The convergence flag compares the field norm against the solver's own
    accuracy floor; with very sparse sample grids the steps grow large
    enough that the floor can sit above the detection threshold, in which
    case the flag stays False even though the state has settled to within
    integration tolerance.
    """
    opts = opts or IntegrateOptions()
    y0 = as_vector(x0, s.dim)
    if classify(s.cone_Y, y0) is Membership.OUTSIDE:
        raise LeftDomain("initial state outside the state cone")
    if not t_end > 0.0:
        raise ValueError("t_end must be positive")
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, 201)
    targets = sorted({float(t) for t in sample_times} | {0.0, float(t_end)})
    if targets[0] < 0.0 or targets[-1] > t_end + 1e-12:
        raise ValueError("sample times must lie in [0, t_end]")

    f = s.field_fn
    h_fn = s.integral_fn
    rows = [tuple(r) for r in s.cone_Y.facets]

    y = list(map(float, y0))
    _clip_to_domain(y, rows, 0.0, opts.clip_tol)
    rec_times: list[float] = []
    rec_states: list[list[float]] = []
    idx = 0
    if targets[0] == 0.0:
        rec_times.append(0.0)
        rec_states.append(list(y))
        idx = 1

    if opts.method == "rk4":
        result = _run_rk4(s, f, rows, y, targets, idx, rec_times, rec_states, opts)
    elif opts.method == "rk45":
        result = _run_rk45(s, f, rows, y, targets, idx, rec_times, rec_states, opts)
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    converged, converged_at = result

    times = np.array(rec_times)
    states = np.array(rec_states)
    h0 = h_fn(list(map(float, y0)))
    drift = max(abs(h_fn(list(st)) - h0) for st in rec_states)
    return Trajectory(times=times, states=states, h0=h0, drift=drift,
                      converged=converged, converged_at=converged_at)


def _run_rk45(s, f, rows, y, targets, idx, rec_times, rec_states, opts):
    n = s.dim
    atol, rtol = opts.abs_tol, opts.rel_tol
    t = 0.0
    k1 = f(y)
    fnorm = math.sqrt(sum(v * v for v in k1))
    ynorm = math.sqrt(sum(v * v for v in y))
    h_ctrl = min(0.01 * (1.0 + ynorm) / (1.0 + fnorm), targets[-1])
    conv_count = 0
    converged = False
    converged_at = None

    steps = 0
    while idx < len(targets):
        t_next = targets[idx]
        if t >= t_next - 1e-14 * max(1.0, t_next):
            rec_times.append(t_next)
            rec_states.append(list(y))
            idx += 1
            continue
        if converged and opts.stop_on_converged:
            rec_times.append(t_next)
            rec_states.append(list(y))
            idx += 1
            continue
        steps += 1
        if steps > opts.max_steps:
            raise RuntimeError("step budget exceeded")
        h = min(h_ctrl, t_next - t)

        y2 = [y[i] + h * (_A21 * k1[i]) for i in range(n)]
        k2 = f(y2)
        y3 = [y[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in range(n)]
        k3 = f(y3)
        y4 = [y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i]) for i in range(n)]
        k4 = f(y4)
        y5 = [y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
              for i in range(n)]
        k5 = f(y5)
        y6 = [y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i]
                          + _A65 * k5[i]) for i in range(n)]
        k6 = f(y6)
        ynew = [y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i]
                            + _B6 * k6[i]) for i in range(n)]
        k7 = f(ynew)

        errnorm = 0.0
        for i in range(n):
            err = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                       + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            errnorm += (err / sc) ** 2
        errnorm = math.sqrt(errnorm / n)

        if errnorm <= 1.0:
            t += h
            y = ynew
            if _clip_to_domain(y, rows, t, opts.clip_tol):
                k1 = f(y)
            else:
                k1 = k7
            ynorm = math.sqrt(sum(v * v for v in y))
            if ynorm > opts.norm_cap:
                raise Diverged(f"state norm {ynorm:.3e} exceeded cap at t={t:.6g}")
            fnorm = math.sqrt(sum(v * v for v in k1))
            if fnorm <= opts.conv_tol * (1.0 + ynorm):
                conv_count += 1
                if conv_count >= opts.conv_consecutive and not converged:
                    converged = True
                    converged_at = t
            else:
                conv_count = 0
            factor = 5.0 if errnorm == 0.0 else min(5.0, max(0.2, 0.9 * errnorm ** -0.2))
            if h < h_ctrl:
                # step was shortened only to hit a sample time; keep the pace
                h_ctrl = max(h_ctrl, h * factor)
            else:
                h_ctrl = h * factor
        else:
            h_ctrl = h * min(1.0, max(0.2, 0.9 * errnorm ** -0.2))
            if h_ctrl < 1e-14 * max(1.0, t):
                raise StepSizeUnderflow(f"step {h_ctrl:.3e} at t={t:.6g}")
    return converged, converged_at


def _run_rk4(s, f, rows, y, targets, idx, rec_times, rec_states, opts):
    n = s.dim
    t = 0.0
    conv_count = 0
    converged = False
    converged_at = None
    steps = 0
    while idx < len(targets):
        t_next = targets[idx]
        if t >= t_next - 1e-14 * max(1.0, t_next):
            rec_times.append(t_next)
            rec_states.append(list(y))
            idx += 1
            continue
        if converged and opts.stop_on_converged:
            rec_times.append(t_next)
            rec_states.append(list(y))
            idx += 1
            continue
        steps += 1
        if steps > opts.max_steps:
            raise RuntimeError("step budget exceeded")
        h = min(opts.fixed_step, t_next - t)
        k1 = f(y)
        k2 = f([y[i] + 0.5 * h * k1[i] for i in range(n)])
        k3 = f([y[i] + 0.5 * h * k2[i] for i in range(n)])
        k4 = f([y[i] + h * k3[i] for i in range(n)])
        y = [y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
             for i in range(n)]
        t += h
        _clip_to_domain(y, rows, t, opts.clip_tol)
        ynorm = math.sqrt(sum(v * v for v in y))
        if ynorm > opts.norm_cap:
            raise Diverged(f"state norm {ynorm:.3e} exceeded cap at t={t:.6g}")
        fv = f(y)
        fnorm = math.sqrt(sum(v * v for v in fv))
        if fnorm <= opts.conv_tol * (1.0 + ynorm):
            conv_count += 1
            if conv_count >= opts.conv_consecutive and not converged:
                converged = True
                converged_at = t
        else:
            conv_count = 0
    return converged, converged_at


@dataclass
class OrderTrialReport:
    """Outcome of sampled order-preservation trials."""

    n_pairs: int
    t_check: float
    worst_margin: float
    n_failures: int
    failures: list[dict] = field(default_factory=list)
    passed: bool = True


def order_preservation_trial(s: SystemSpec, n_pairs: int = 100,
                             t_check: float = 1.0, seed: int = 0,
                             opts: IntegrateOptions | None = None) -> OrderTrialReport:
    """Integrate ordered pairs and confirm strict interior ordering at t_check.

    Pairs are built as y0 = x0 + k with k a random nonnegative combination
    of the order cone's extremal rays, halved until y0 stays inside the
    state cone.  The conserved quantity necessarily splits the pair
    (H(y0) > H(x0)); the generator asserts it.  The report carries the
    worst normalized interior margin of y(t) - x(t).
    """
    rng = np.random.default_rng(seed)
    opts = opts or IntegrateOptions()
    worst = math.inf
    failures: list[dict] = []
    made = 0
    attempts = 0
    while made < n_pairs and attempts < 50 * n_pairs:
        attempts += 1
        coeff = rng.uniform(0.05, 1.5, size=len(s.cone_Y.rays))
        x0 = s.cone_Y.rays.T @ coeff
        kc = rng.uniform(0.1, 1.0, size=len(s.cone_K.rays))
        k = s.cone_K.rays.T @ kc * 0.5
        ok = False
        for _ in range(50):
            if classify(s.cone_Y, x0 + k) is not Membership.OUTSIDE:
                ok = True
                break
            k = k / 2.0
        if not ok:
            continue
        y0 = x0 + k
        if not s.integral_at(y0) > s.integral_at(x0):
            raise AssertionError("ordered pair failed to split the conserved quantity")
        made += 1
        ts = [0.0, t_check]
        tx = integrate(s, x0, t_check, opts, sample_times=ts)
        ty = integrate(s, y0, t_check, opts, sample_times=ts)
        d = ty.final_state() - tx.final_state()
        margins = s.cone_K.facets @ d
        norm_margin = float(np.min(margins)) / (1.0 + float(np.linalg.norm(d)))
        worst = min(worst, norm_margin)
        if order(s.cone_K, tx.final_state(), ty.final_state()) is not OrderRel.LL:
            failures.append({"x0": x0.tolist(), "y0": y0.tolist(),
                             "margin": norm_margin})
    if made < n_pairs:
        raise RuntimeError("could not generate enough ordered pairs inside the state cone")
    return OrderTrialReport(n_pairs=made, t_check=t_check, worst_margin=worst,
                            n_failures=len(failures), failures=failures,
                            passed=not failures)
