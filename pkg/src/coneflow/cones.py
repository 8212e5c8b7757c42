"""Proper polyhedral cones, the partial orders they induce, and dual tests.

A cone is held in H-representation (inward facet normals, rows of
``facets``) with the V-representation (unit extremal rays) always derived
from it, never user-supplied.  Membership margins use the raw facet rows,
so facet normals are expected at O(1) scale; thresholds grow with
``(1 + |v|)`` to keep classification scale-invariant in the query point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NotPointed, NotSolid
from .numerics import DEFAULT_TOL, Tol, as_matrix, as_vector, feas_lp, null_space_vector, rank

# Combinatorial ray enumeration visits C(m, n-1) facet subsets.
MAX_FACETS = 32


class Membership(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


class OrderRel(Enum):
    """Cone order between two points: the strongest applicable relation.

    LL means the difference is interior, LT boundary but nonzero, LEQ
    equality-grade closeness, NONE unordered.
    """

    LEQ = "leq"
    LT = "lt"
    LL = "ll"
    NONE = "none"


@dataclass(frozen=True)
class PolyCone:
    """Pointed, solid polyhedral cone ``{x : facets @ x >= 0}``.

    ``rays`` are the unit extremal generators, one per row.  Construct via
    :func:`from_facets`, which validates pointedness and solidity.
    """

    facets: np.ndarray
    rays: np.ndarray
    dim: int
    interior_point: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "facets", as_matrix(self.facets))
        object.__setattr__(self, "rays", as_matrix(self.rays))


def from_facets(facets, tol: Tol = DEFAULT_TOL) -> PolyCone:
    """Build a cone from inward facet normals, deriving its extremal rays.

    Pointedness is rank(facets) = n; solidity is strict feasibility of the
    facet system.  Rays come from enumerating all (n-1)-subsets of facets,
    solving for the null direction, orienting it into the cone, and keeping
    directions whose active set has rank n-1 (automatic here), deduplicated
    within tolerance.

    Raises NotPointed (with a kernel certificate) or NotSolid.
    """
    a = as_matrix(facets)
    m, n = a.shape
    if m < n:
        raise ValueError(f"need at least {n} facets in dimension {n}, got {m}")
    if m > MAX_FACETS:
        raise ValueError(f"facet count {m} exceeds cap {MAX_FACETS}")
    interior = feas_lp(a, tol)
    if interior is None:
        raise NotSolid(f"no strictly feasible point for {m} facet inequalities")
    if rank(a, tol) < n:
        raise NotPointed(null_space_vector(a, tol))

    rays: list[np.ndarray] = []
    for subset in itertools.combinations(range(m), n - 1):
        sub = a[list(subset)]
        d = null_space_vector(sub, tol) if n > 1 else np.ones(1)
        if d is None:
            continue
        if rank(sub, tol) < n - 1:
            continue  # nullity > 1; handled by smaller-rank subsets elsewhere
        margins = a @ d
        if np.all(margins >= -tol.abs):
            pass
        elif np.all(-margins >= -tol.abs):
            d = -d
        else:
            continue
        if not any(np.linalg.norm(d - r) <= 1e-8 for r in rays):
            rays.append(d)
    if not rays:
        raise NotSolid("facet system admits no extremal rays")
    ray_mat = np.array(sorted(rays, key=lambda r: tuple(np.round(r, 12))))
    return PolyCone(facets=a, rays=ray_mat, dim=n, interior_point=interior)


def orthant(n: int, tol: Tol = DEFAULT_TOL) -> PolyCone:
    """The nonnegative orthant in dimension n."""
    return from_facets(np.eye(n), tol)


def classify(k: PolyCone, v, tol: Tol = DEFAULT_TOL) -> Membership:
    """Locate ``v`` relative to the cone: interior, boundary, or outside."""
    x = as_vector(v, k.dim)
    margins = k.facets @ x
    thr = tol.abs * (1.0 + float(np.linalg.norm(x)))
    if np.min(margins) > thr:
        return Membership.INTERIOR
    if np.min(margins) < -thr:
        return Membership.OUTSIDE
    return Membership.BOUNDARY


def order(k: PolyCone, x, y, tol: Tol = DEFAULT_TOL) -> OrderRel:
    """Order relation from x to y under the cone: is y - x in it, and how."""
    xv = as_vector(x, k.dim)
    yv = as_vector(y, k.dim)
    d = yv - xv
    side = classify(k, d, tol)
    if side is Membership.INTERIOR:
        return OrderRel.LL
    if side is Membership.OUTSIDE:
        return OrderRel.NONE
    scale = tol.abs * (1.0 + float(np.linalg.norm(xv)) + float(np.linalg.norm(yv)))
    return OrderRel.LT if float(np.linalg.norm(d)) > scale else OrderRel.LEQ


def dual_classify(k: PolyCone, g, tol: Tol = DEFAULT_TOL) -> Membership:
    """Locate ``g`` relative to the dual cone via products with extremal rays.

    Interior means strictly positive against every ray, i.e. strictly
    positive against every nonzero cone element.
    """
    gv = as_vector(g, k.dim)
    prods = k.rays @ gv
    thr = tol.abs * (1.0 + float(np.linalg.norm(gv)))
    if np.min(prods) > thr:
        return Membership.INTERIOR
    if np.min(prods) < -thr:
        return Membership.OUTSIDE
    return Membership.BOUNDARY


def contains_cone(outer: PolyCone, inner: PolyCone, tol: Tol = DEFAULT_TOL) -> bool:
    """True when every extremal ray of ``inner`` lies in ``outer``."""
    if outer.dim != inner.dim:
        raise ValueError("cone dimensions differ")
    return all(classify(outer, r, tol) is not Membership.OUTSIDE for r in inner.rays)


def interior_direction(k: PolyCone) -> np.ndarray:
    """Unit direction strictly inside the cone: the normalized ray sum."""
    s = k.rays.sum(axis=0)
    return s / np.linalg.norm(s)


def min_ray_product(k: PolyCone, g) -> float:
    """Smallest inner product of ``g`` with the unit extremal rays.

    When all products are nonnegative this equals the minimum of <g, y>
    over unit vectors y of the cone (triangle inequality on the ray
    decomposition), so it is the exact positivity margin of a
    dual-interior functional.
    """
    gv = as_vector(g, k.dim)
    return float(np.min(k.rays @ gv))
