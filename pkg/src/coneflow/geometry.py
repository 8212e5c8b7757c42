"""Level-set geometry: ray exits, central projections, trap construction.

All regions are intersections of affine half-spaces assembled from the
two cones and at most one plane cap, so membership and ray exits reduce
to per-facet ratio tests; no region is ever meshed.  The trap construction
sandwiches one level set of the conserved quantity between two parallel
plane slices, then the slice sampler certifies (statistically, by ray
sampling) that the level-set slice is star-shaped: every tangent ray from
the distinguished plane point crosses the level exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import Membership, PolyCone, classify, dual_classify, interior_direction, min_ray_product
from .errors import NoIntersection, NonMonotoneH, TrapFailed
from .numerics import DEFAULT_TOL, Tol, as_vector
from .system import SystemSpec


@dataclass(frozen=True)
class Region:
    """Intersection of half-spaces ``{x : normals @ x >= offsets}``."""

    normals: np.ndarray
    offsets: np.ndarray

    def margins(self, x) -> np.ndarray:
        return self.normals @ as_vector(x) - self.offsets

    def membership(self, x, tol: Tol = DEFAULT_TOL) -> Membership:
        m = self.margins(x)
        thr = tol.abs * (1.0 + float(np.linalg.norm(x)))
        if np.min(m) > thr:
            return Membership.INTERIOR
        if np.min(m) < -thr:
            return Membership.OUTSIDE
        return Membership.BOUNDARY

    def with_halfspace(self, normal, offset: float) -> "Region":
        return Region(np.vstack([self.normals, as_vector(normal)]),
                      np.append(self.offsets, float(offset)))


def upper_set_region(s: SystemSpec, c) -> Region:
    """Points of the state cone lying above ``c`` in the order cone."""
    cv = as_vector(c, s.dim)
    ak, ay = s.cone_K.facets, s.cone_Y.facets
    normals = np.vstack([ay, ak])
    offsets = np.concatenate([np.zeros(len(ay)), ak @ cv])
    return Region(normals, offsets)


def lower_set_region(s: SystemSpec, c) -> Region:
    """Points of the state cone lying below ``c`` in the order cone."""
    cv = as_vector(c, s.dim)
    ak, ay = s.cone_K.facets, s.cone_Y.facets
    normals = np.vstack([ay, -ak])
    offsets = np.concatenate([np.zeros(len(ay)), -(ak @ cv)])
    return Region(normals, offsets)


def ray_exit(region: Region, p, d, tol: Tol = DEFAULT_TOL):
    """Exit parameter and point of the ray p + t d from an affine region.

    Returns (t, point) for the smallest t >= 0 at which some inequality
    becomes active and is violated beyond it, or None when the ray never
    leaves (d lies in the recession cone of every constraint).
    """
    pv = as_vector(p)
    dv = as_vector(d, pv.size)
    if float(np.linalg.norm(dv)) == 0.0:
        raise ValueError("direction must be nonzero")
    num = region.normals @ pv - region.offsets
    den = region.normals @ dv
    t_exit = math.inf
    for i in range(len(num)):
        if den[i] < -1e-300:
            t_i = num[i] / -den[i]
            if t_i < t_exit:
                t_exit = t_i
    if not math.isfinite(t_exit):
        return None
    t_exit = max(t_exit, 0.0)
    return t_exit, pv + t_exit * dv


@dataclass(frozen=True)
class SliceSpec:
    """A plane slice of an upper or lower set.

    mode "plus" carries the part above the base point (plane offset
    r >= <g, c>), mode "minus" the part below (r < <g, c>); g is a unit
    vector strictly interior to the dual of the order cone.
    """

    c: np.ndarray
    mode: str
    g: np.ndarray
    r: float


def make_slice(s: SystemSpec, c, mode: str, r: float, g=None,
               tol: Tol = DEFAULT_TOL) -> SliceSpec:
    cv = as_vector(c, s.dim)
    gv = _reference_functional(s, cv) if g is None else as_vector(g, s.dim)
    gv = gv / np.linalg.norm(gv)
    if dual_classify(s.cone_K, gv, tol) is not Membership.INTERIOR:
        raise ValueError("g must be strictly interior to the dual cone")
    gc = float(gv @ cv)
    if mode == "plus" and r < gc:
        raise ValueError(f"plus slice needs r >= <g, c> = {gc}")
    if mode == "minus" and not (0.0 <= r < gc):
        raise ValueError(f"minus slice needs 0 <= r < <g, c> = {gc}")
    if mode not in ("plus", "minus"):
        raise ValueError(f"mode must be 'plus' or 'minus', got {mode!r}")
    return SliceSpec(c=cv, mode=mode, g=gv, r=float(r))


def project_central(c, plane: SliceSpec, y, tol: Tol = DEFAULT_TOL) -> np.ndarray:
    """Intersection of the ray from c through y with the slice's plane.

    For c = 0 this is the closed form r * y / <g, y>.  Raises
    NoIntersection when the ray is parallel to the plane or points away.
    """
    cv = as_vector(c)
    yv = as_vector(y, cv.size)
    d = yv - cv
    if float(np.linalg.norm(d)) <= tol.abs:
        raise ValueError("y must differ from c")
    gd = float(plane.g @ d)
    rest = plane.r - float(plane.g @ cv)
    if abs(gd) <= tol.abs * (1.0 + abs(rest)):
        raise NoIntersection("ray parallel to the plane")
    t = rest / gd
    if t < -tol.abs:
        raise NoIntersection("ray points away from the plane")
    return cv + max(t, 0.0) * d


@dataclass
class TrapContext:
    """Two-plane sandwich around one level value of the conserved quantity.

    In plus mode: <g, c> < k1 < k2, the sampled maximum of H over the k1
    wedge sits strictly below h, and h sits strictly below the sampled
    minimum of H over the k2 plane slice; minus mode mirrors both bounds.
    s0 is the interior apex offset, s1 and s2 its ray's unique hits on the
    two plane slices (s1 = t1 s0, s2 = t2 s0), theta the sampled positive
    pairing bound between plane-1 displacements and gradients.
    """

    mode: str
    c: np.ndarray
    g: np.ndarray
    k1: float
    k2: float
    h: float
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    t1: float
    t2: float
    theta: float
    eps: float = 0.0
    grad_max: float = 0.0
    margin_wedge: float = 0.0   # |h - worst sampled H on the k1 wedge|
    margin_plane: float = 0.0   # |worst sampled H on the k2 side - h|
    n_boundary: int = 0
    seed: int = 0


def _reference_functional(s: SystemSpec, c) -> np.ndarray:
    g = s.grad_at(c)
    n = float(np.linalg.norm(g))
    if n == 0.0:
        raise ValueError("gradient vanishes at the base point; supply g explicitly")
    return g / n


def _interior_unit(s: SystemSpec) -> np.ndarray:
    u = interior_direction(s.cone_Y)
    if classify(s.cone_K, u) is not Membership.INTERIOR:
        raise TrapFailed("state-cone interior direction is not interior to the order cone")
    return u


def _tangent_basis(g: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(np.column_stack([g, np.eye(g.size)]))
    return q[:, 1:g.size].T.copy()


def _tangent_dirs(basis: np.ndarray, n_dirs: int, rng) -> np.ndarray:
    k = basis.shape[0]
    if k == 0:
        return np.zeros((0, basis.shape[1]))
    if k == 1:
        return np.array([basis[0], -basis[0]])
    if k == 2:
        ang = 2.0 * math.pi * np.arange(n_dirs) / n_dirs
        return np.outer(np.cos(ang), basis[0]) + np.outer(np.sin(ang), basis[1])
    w = rng.normal(size=(n_dirs, k))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w @ basis


def _plane_samples(side_region: Region, anchor: np.ndarray, basis: np.ndarray,
                   n_points: int, rng) -> np.ndarray:
    """Points of a plane slice: marches from an interior anchor to the rim."""
    fracs = (0.15, 0.35, 0.55, 0.75, 0.9, 1.0)
    n_dirs = max(8, n_points // len(fracs) + 1)
    dirs = _tangent_dirs(basis, n_dirs, rng)
    pts = [anchor]
    for d in dirs:
        hit = ray_exit(side_region, anchor, d)
        if hit is None:
            continue
        t_f, _ = hit
        pts.extend(anchor + f * t_f * d for f in fracs)
    return np.array(pts)


def _wedge_samples(s: SystemSpec, region: Region, apex: np.ndarray, sign: float,
                   n_points: int, rng) -> np.ndarray:
    """Points of a capped wedge sampled on rays from its apex.

    Directions are nonnegative ray combinations of the order cone (negated
    for the lower wedge), including each pure ray, so rim vertices appear
    among the fraction-1 samples.
    """
    rays = s.cone_K.rays
    fracs = (0.2, 0.4, 0.6, 0.8, 1.0)
    n_dirs = max(len(rays), n_points // len(fracs) + 1)
    dirs = [sign * r for r in rays]
    while len(dirs) < n_dirs:
        coeff = rng.uniform(0.02, 1.0, size=len(rays))
        d = sign * (rays.T @ coeff)
        dirs.append(d / np.linalg.norm(d))
    pts = [apex]
    for d in dirs:
        hit = ray_exit(region, apex, d)
        if hit is None:
            continue
        t_f, _ = hit
        pts.extend(apex + f * t_f * d for f in fracs)
    return np.array(pts)


def sampled_diameter(pts: np.ndarray) -> float:
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(math.sqrt(np.max(d2)))


def reference_margin(cone_y: PolyCone, g) -> float:
    """Positivity margin of g over the state cone's unit vectors."""
    return min_ray_product(cone_y, g)


def build_trap(s: SystemSpec, c, mode: str = "plus", *, g=None,
               k2: float | None = None, h: float | None = None,
               n_boundary: int = 1200, seed: int = 0,
               tol: Tol = DEFAULT_TOL) -> TrapContext:
    """Construct the two-plane sandwich around a level value near H(c).

    Plus mode: pick the outer plane offset k2 (default <g, c> + 1), sample
    the plane slice to bound H from below, place h halfway between H(c)
    and that bound, then shrink the inner offset k1 from the midpoint
    toward <g, c> (halving, 40 tries) until the sampled maximum of H over
    the inner wedge sits strictly under h.  Minus mode mirrors every bound
    and requires c nonzero and strictly inside the state cone (otherwise
    the lower set may be lower-dimensional and is not supported).
    Optional k2/h override the defaults but are validated the same way.

    Raises TrapFailed when strict separation cannot be established.
    """
    rng = np.random.default_rng(seed)
    cv = as_vector(c, s.dim)
    if classify(s.cone_Y, cv, tol) is Membership.OUTSIDE:
        raise ValueError("base point must lie in the state cone")
    gv = _reference_functional(s, cv) if g is None else as_vector(g, s.dim)
    gv = gv / np.linalg.norm(gv)
    if dual_classify(s.cone_K, gv, tol) is not Membership.INTERIOR:
        raise TrapFailed("reference functional is not strictly dual-interior")
    u = _interior_unit(s)
    gc = float(gv @ cv)
    hc = s.integral_at(cv)
    basis = _tangent_basis(gv)
    req = 1e-6

    if mode == "plus":
        region_side = upper_set_region(s, cv)
        if k2 is None:
            k2 = gc + 1.0
        if not k2 > gc + 1e-12:
            raise TrapFailed(f"k2 must exceed <g, c> = {gc}")
        anchor2 = cv + ((k2 - gc) / float(gv @ u)) * u
        p2 = _plane_samples(region_side, anchor2, basis, n_boundary, rng)
        h_edge = float(min(s.integral_at(x) for x in p2))
        if h is None:
            h = 0.5 * (hc + h_edge)
        if not (hc + req < h < h_edge - req):
            raise TrapFailed(
                f"level {h} not strictly between H(c)={hc} and plane bound {h_edge}")
        k1 = 0.5 * (gc + k2)
        margin_wedge = -math.inf
        for _ in range(40):
            wedge_region = region_side.with_halfspace(-gv, -k1)
            w = _wedge_samples(s, wedge_region, cv, +1.0, n_boundary, rng)
            h_wedge = float(max(s.integral_at(x) for x in w))
            margin_wedge = h - h_wedge
            if h_wedge < h - req:
                break
            k1 = 0.5 * (gc + k1)
        else:
            raise TrapFailed(f"could not fit inner wedge under level {h} "
                             f"(last margin {margin_wedge:.3e})")
        wedge_region = region_side.with_halfspace(-gv, -k1)
        delta2_region = region_side.with_halfspace(-gv, -k2)
        anchor1 = cv + ((k1 - gc) / float(gv @ u)) * u
        p1 = _plane_samples(region_side, anchor1, basis, max(200, n_boundary // 4), rng)
        d2 = _wedge_samples(s, delta2_region, cv, +1.0, max(200, n_boundary // 4), rng)
        grads = np.array([s.grad_at(y) for y in d2])
        theta = float(np.min((p1 - cv) @ grads.T))
        grad_max = float(np.max(np.linalg.norm(grads, axis=1)))
        if theta <= 0.0:
            raise TrapFailed(f"pairing bound not positive (theta={theta:.3e})")
        eps = 0.5 * min(theta / grad_max, k1 - gc)
        s0 = cv + eps * u
        if (classify(s.cone_Y, s0, tol) is not Membership.INTERIOR
                or classify(s.cone_K, s0 - cv, tol) is not Membership.INTERIOR
                or not float(gv @ s0) < k1):
            raise TrapFailed("apex offset left the wedge interior")
        hit1 = ray_exit(wedge_region, s0, s0)
        hit2 = ray_exit(delta2_region, s0, s0)
        if hit1 is None or hit2 is None:
            raise TrapFailed("apex ray failed to exit the wedge")
        s1 = hit1[1]
        s2 = hit2[1]
        t1, t2 = 1.0 + hit1[0], 1.0 + hit2[0]
        for sx, kx in ((s1, k1), (s2, k2)):
            if abs(float(gv @ sx) - kx) > 1e-7 * (1.0 + abs(kx)):
                raise TrapFailed("apex ray exited through a cone facet, not the plane")
        margin_plane = h_edge - h
    elif mode == "minus":
        if float(np.linalg.norm(cv)) == 0.0:
            raise ValueError("minus mode requires a nonzero base point")
        if classify(s.cone_Y, cv, tol) is not Membership.INTERIOR:
            raise TrapFailed("minus mode supports base points strictly inside "
                             "the state cone only (lower set must be full-dimensional)")
        region_side = lower_set_region(s, cv)
        if k2 is None:
            k2 = max(gc - 1.0, 0.0)
        if not 0.0 <= k2 < gc - 1e-12:
            raise TrapFailed(f"k2 must lie in [0, <g, c>) = [0, {gc})")
        if k2 == 0.0:
            p2 = np.zeros((1, s.dim))
        else:
            anchor2 = (k2 / gc) * cv
            p2 = _plane_samples(region_side, anchor2, basis, n_boundary, rng)
        h_edge = float(max(s.integral_at(x) for x in p2))
        if h is None:
            h = 0.5 * (hc + h_edge)
        if not (h_edge + req < h < hc - req):
            raise TrapFailed(
                f"level {h} not strictly between plane bound {h_edge} and H(c)={hc}")
        k1 = 0.5 * (gc + k2)
        margin_wedge = -math.inf
        for _ in range(40):
            wedge_region = region_side.with_halfspace(gv, k1)
            w = _wedge_samples(s, wedge_region, cv, -1.0, n_boundary, rng)
            h_wedge = float(min(s.integral_at(x) for x in w))
            margin_wedge = h_wedge - h
            if h_wedge > h + req:
                break
            k1 = 0.5 * (gc + k1)
        else:
            raise TrapFailed(f"could not fit inner wedge above level {h} "
                             f"(last margin {margin_wedge:.3e})")
        wedge_region = region_side.with_halfspace(gv, k1)
        delta2_region = region_side.with_halfspace(gv, k2)
        anchor1 = (k1 / gc) * cv
        p1 = _plane_samples(region_side, anchor1, basis, max(200, n_boundary // 4), rng)
        d2 = _wedge_samples(s, delta2_region, cv, -1.0, max(200, n_boundary // 4), rng)
        grads = np.array([s.grad_at(y) for y in d2])
        theta = float(np.min((cv - p1) @ grads.T))
        grad_max = float(np.max(np.linalg.norm(grads, axis=1)))
        if theta <= 0.0:
            raise TrapFailed(f"pairing bound not positive (theta={theta:.3e})")
        eps = 0.5 * min(theta / grad_max, gc - k1)
        s0 = cv - eps * u
        if (classify(s.cone_Y, s0, tol) is not Membership.INTERIOR
                or classify(s.cone_K, cv - s0, tol) is not Membership.INTERIOR
                or not float(gv @ s0) > k1):
            raise TrapFailed("apex offset left the wedge interior")
        hit1 = ray_exit(wedge_region, s0, -s0)
        hit2 = ray_exit(delta2_region, s0, -s0)
        if hit1 is None or hit2 is None:
            raise TrapFailed("apex ray failed to exit the wedge")
        s1, s2 = hit1[1], hit2[1]
        t1, t2 = 1.0 - hit1[0], 1.0 - hit2[0]
        margin_plane = h - h_edge
    else:
        raise ValueError(f"mode must be 'plus' or 'minus', got {mode!r}")

    return TrapContext(mode=mode, c=cv, g=gv, k1=float(k1), k2=float(k2),
                       h=float(h), s0=s0, s1=s1, s2=s2, t1=float(t1),
                       t2=float(t2), theta=theta, eps=float(eps),
                       grad_max=grad_max, margin_wedge=float(margin_wedge),
                       margin_plane=float(margin_plane),
                       n_boundary=n_boundary, seed=seed)


@dataclass
class SliceRay:
    theta_index: int
    t_boundary: float
    point: np.ndarray
    crossings: int


@dataclass
class SliceSample:
    level: float
    rays: list[SliceRay] = field(default_factory=list)
    star_shaped: bool = True
    n_rays: int = 0


def levelset_slice_sample(s: SystemSpec, trap: TrapContext, n_rays: int = 64,
                          grid: int = 64, seed: int = 0,
                          tol: Tol = DEFAULT_TOL) -> SliceSample:
    """March tangent rays on the inner plane and locate the level crossing.

    For each tangent direction from s1, the projected level function
    t -> H(exit of the ray s0 -> s1 + t d) brackets the trap level at the
    endpoints; bisection finds the crossing, and a sign-change count over
    a grid certifies it is the only one (the star-shape evidence).  H is
    also checked to be strictly monotone along each crossing's projection
    ray; a violation raises NonMonotoneH, as does a failed bracket.
    """
    rng = np.random.default_rng(seed)
    cv, gv = trap.c, trap.g
    if trap.mode == "plus":
        side = upper_set_region(s, cv)
        delta2 = side.with_halfspace(-gv, -trap.k2)
        want_high_at_zero = True
    else:
        side = lower_set_region(s, cv)
        delta2 = side.with_halfspace(gv, trap.k2)
        want_high_at_zero = False
    basis = _tangent_basis(gv)
    dirs = _tangent_dirs(basis, n_rays, rng)

    def projected_level(p: np.ndarray) -> tuple[float, np.ndarray]:
        hit = ray_exit(delta2, trap.s0, p - trap.s0)
        if hit is None:
            raise NonMonotoneH("projection ray failed to exit the capped region")
        return s.integral_at(hit[1]), hit[1]

    out = SliceSample(level=trap.h, n_rays=len(dirs))
    for i, d in enumerate(dirs):
        hit = ray_exit(side, trap.s1, d)
        if hit is None:
            raise NonMonotoneH("tangent ray failed to exit the plane slice")
        t_f = hit[0]
        g_lo, _ = projected_level(trap.s1)
        g_hi, _ = projected_level(trap.s1 + t_f * d)
        if want_high_at_zero:
            bracket_ok = g_lo > trap.h > g_hi
        else:
            bracket_ok = g_lo < trap.h < g_hi
        if not bracket_ok:
            raise NonMonotoneH(
                f"bracket failed on ray {i}: ends {g_lo:.6g}, {g_hi:.6g} vs level {trap.h:.6g}")
        a, b = 0.0, t_f
        for _ in range(60):
            mid = 0.5 * (a + b)
            g_mid, _ = projected_level(trap.s1 + mid * d)
            if (g_mid > trap.h) == want_high_at_zero:
                a = mid
            else:
                b = mid
        t_star = 0.5 * (a + b)
        _, boundary_pt = projected_level(trap.s1 + t_star * d)

        crossings = 0
        prev = g_lo - trap.h
        for j in range(1, grid + 1):
            g_j, _ = projected_level(trap.s1 + (j / grid) * t_f * d)
            cur = g_j - trap.h
            if prev * cur < 0.0:
                crossings += 1
            if cur != 0.0:
                prev = cur
        _check_monotone_projection(s, trap, boundary_pt, want_high_at_zero)
        out.rays.append(SliceRay(theta_index=i, t_boundary=float(t_star),
                                 point=boundary_pt, crossings=crossings))
        if crossings != 1:
            out.star_shaped = False
    return out


def _check_monotone_projection(s: SystemSpec, trap: TrapContext,
                               end_pt: np.ndarray, increasing: bool,
                               n_grid: int = 16) -> None:
    """H must move one way along the segment from s0 to a projected point."""
    vals = [s.integral_at(trap.s0 + (j / n_grid) * (end_pt - trap.s0))
            for j in range(n_grid + 1)]
    diffs = [vals[j + 1] - vals[j] for j in range(n_grid)]
    good = all(d > 0.0 for d in diffs) if increasing else all(d < 0.0 for d in diffs)
    if not good:
        raise NonMonotoneH("conserved quantity not strictly monotone along projection ray")
