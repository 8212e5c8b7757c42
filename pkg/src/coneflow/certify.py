"""Sampled certification of cone invariance and irreducibility of the Jacobian.

Both checks are evidence on a finite sample, never a proof: reports say
"certified on N samples".  Cooperativity asks that at every sampled state
the Jacobian not pull extremal rays out through their active facets.
Irreducibility asks that some diagonal shift J + alpha I push every
extremal ray strictly into the cone's interior; alpha is searched by
doubling, and a closed-form alpha expression attached to the system (the
built-in network ships one) is evaluated alongside for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import Membership, classify
from .errors import AlphaCapExceeded
from .numerics import DEFAULT_TOL, Tol
from .system import SystemSpec, sample_states

ALPHA_CAP = float(2 ** 20)


@dataclass
class CertReport:
    """Certification outcome over one sample set."""

    cooperative_pass: bool
    irreducible_pass: bool
    alpha_used: float
    worst_pair: tuple[int, int, np.ndarray] | None  # (ray index, facet index, point)
    margin: float
    n_samples: int = 0
    seed: int = 0
    n_failures: int = 0
    formula_alpha_sufficient: bool | None = None
    formula_alpha_min_margin: float | None = None
    boundary_irreducible_pass: bool | None = None
    boundary_n_failures: int = 0
    notes: list[str] = field(default_factory=list)


def _active_pairs(s: SystemSpec, tol: Tol):
    """(ray index, facet index) pairs where the facet is active on the ray."""
    pairs = []
    for ri, r in enumerate(s.cone_K.rays):
        for fi, a in enumerate(s.cone_K.facets):
            if abs(float(a @ r)) <= tol.abs * 2.0:
                pairs.append((ri, fi))
    return pairs


def check_cooperative(s: SystemSpec, n_samples: int = 500, seed: int = 0,
                      tol: Tol = DEFAULT_TOL) -> CertReport:
    """Active-pair test: <a, J(x) r> >= -tol for every active (ray, facet).

    A violation means the linearized flow moves some extremal ray out
    through one of its own facets, contradicting invariance of the cone.
    """
    pts = sample_states(s, n_samples, seed)
    pairs = _active_pairs(s, tol)
    worst_margin = math.inf
    worst = None
    failures = 0
    for x in pts:
        jac = s.jac_at(x)
        for ri, fi in pairs:
            m = float(s.cone_K.facets[fi] @ (jac @ s.cone_K.rays[ri]))
            if m < worst_margin:
                worst_margin = m
                worst = (ri, fi, np.array(x))
            if m < -tol.abs:
                failures += 1
    return CertReport(cooperative_pass=failures == 0, irreducible_pass=False,
                      alpha_used=0.0, worst_pair=worst, margin=worst_margin,
                      n_samples=len(pts), seed=seed, n_failures=failures,
                      notes=[f"certified on {len(pts)} samples"])


def _rays_interior_margin(s: SystemSpec, jac: np.ndarray, alpha: float,
                          tol: Tol) -> float:
    """Worst normalized facet margin of (J + alpha I) r over extremal rays."""
    worst = math.inf
    for r in s.cone_K.rays:
        v = jac @ r + alpha * r
        margins = s.cone_K.facets @ v
        scale = 1.0 + float(np.linalg.norm(v))
        worst = min(worst, float(np.min(margins)) / scale)
    return worst


def _alpha_search(s: SystemSpec, x, tol: Tol):
    """Smallest doubling alpha pushing all rays interior, plus the worst
    (ray, facet, normalized margin) seen while failing.

    Raises AlphaCapExceeded when no shift up to the cap works at x.
    """
    jac = s.jac_at(x)
    alpha = 1.0
    worst = None
    while alpha <= ALPHA_CAP:
        ok = True
        for ri, r in enumerate(s.cone_K.rays):
            v = jac @ r + alpha * r
            if classify(s.cone_K, v, tol) is not Membership.INTERIOR:
                ok = False
                margins = s.cone_K.facets @ v
                fi = int(np.argmin(margins))
                m = float(np.min(margins)) / (1.0 + float(np.linalg.norm(v)))
                if worst is None or m < worst[2]:
                    worst = (ri, fi, m)
                break
        if ok:
            return alpha, worst
        alpha *= 2.0
    exc = AlphaCapExceeded(
        f"no shift up to {ALPHA_CAP} maps all rays interior at {np.asarray(x).tolist()}")
    exc.worst = worst
    raise exc


def check_irreducible(s: SystemSpec, n_samples: int = 500, seed: int = 0,
                      tol: Tol = DEFAULT_TOL) -> CertReport:
    """Diagonal-shift test: find alpha with (J + alpha I) r interior for all rays.

    alpha doubles from 1 until the map pushes every extremal ray strictly
    inside; a point where alpha exceeds the cap counts as a failure (the
    report records it, mirroring AlphaCapExceeded per point).  The
    headline pass uses interior samples only: on state-cone faces the
    Jacobian may legitimately degenerate (the built-in network has exactly
    zero margins where a concentration vanishes), so boundary samples are
    assessed separately and the split is reported, not judged.  When the
    system carries a closed-form alpha expression, its sufficiency and
    worst margin over the interior samples are recorded too.
    """
    pts = sample_states(s, n_samples, seed, include_boundary=False)
    boundary_pts = [p for p in sample_states(s, max(2, n_samples // 3), seed)
                    if np.min(s.cone_Y.facets @ p) <= 1e-12]
    alpha_max = 0.0
    failures = 0
    worst = None
    worst_margin = math.inf
    formula_ok: bool | None = True if s.alpha_expr is not None else None
    formula_margin = math.inf if s.alpha_expr is not None else None
    formula_fn = None
    if s.alpha_expr is not None:
        from .exprlang import compile_expr
        formula_fn = compile_expr(s.alpha_expr, s.params)

    for x in pts:
        try:
            alpha, _ = _alpha_search(s, x, tol)
            alpha_max = max(alpha_max, alpha)
        except AlphaCapExceeded as exc:
            failures += 1
            fail_info = exc.worst
            if fail_info is not None and fail_info[2] < worst_margin:
                worst_margin = fail_info[2]
                worst = (fail_info[0], fail_info[1], np.array(x))
        if formula_fn is not None:
            fa = formula_fn(x)
            fm = _rays_interior_margin(s, s.jac_at(x), fa, tol)
            formula_margin = min(formula_margin, fm)
            if fm <= tol.abs:
                formula_ok = False

    boundary_failures = 0
    for x in boundary_pts:
        try:
            _alpha_search(s, x, tol)
        except AlphaCapExceeded:
            boundary_failures += 1

    return CertReport(cooperative_pass=False, irreducible_pass=failures == 0,
                      alpha_used=alpha_max, worst_pair=worst,
                      margin=worst_margin if worst is not None else math.inf,
                      n_samples=len(pts), seed=seed, n_failures=failures,
                      formula_alpha_sufficient=formula_ok,
                      formula_alpha_min_margin=(None if formula_margin is None
                                                else float(formula_margin)),
                      boundary_irreducible_pass=(boundary_failures == 0
                                                 if boundary_pts else None),
                      boundary_n_failures=boundary_failures,
                      notes=[f"certified on {len(pts)} interior samples; "
                             f"{len(boundary_pts)} boundary samples reported separately"])


def certify_all(s: SystemSpec, n_samples: int = 500, seed: int = 0,
                tol: Tol = DEFAULT_TOL) -> CertReport:
    """Run both checks on the same seed and merge the reports.

    An interior image lies in every active half-space, so an irreducibility
    pass at a point implies the cooperativity margins there; the merged
    report asserts that consistency.
    """
    coop = check_cooperative(s, n_samples, seed, tol)
    irr = check_irreducible(s, n_samples, seed, tol)
    if irr.irreducible_pass and not coop.cooperative_pass:
        coop.notes.append("inconsistent: irreducible passed but cooperative failed")
    return CertReport(cooperative_pass=coop.cooperative_pass,
                      irreducible_pass=irr.irreducible_pass,
                      alpha_used=irr.alpha_used,
                      worst_pair=coop.worst_pair,
                      margin=coop.margin,
                      n_samples=coop.n_samples, seed=seed,
                      n_failures=coop.n_failures + irr.n_failures,
                      formula_alpha_sufficient=irr.formula_alpha_sufficient,
                      formula_alpha_min_margin=irr.formula_alpha_min_margin,
                      boundary_irreducible_pass=irr.boundary_irreducible_pass,
                      boundary_n_failures=irr.boundary_n_failures,
                      notes=coop.notes + irr.notes)
