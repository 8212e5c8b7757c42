"""System bundles: vector field, conserved quantity, cones, parameters.

A :class:`SystemSpec` owns parsed expressions for the field F and the
conserved quantity H, the symbolic gradient and Jacobian derived from
them, the order cone K and the state cone Y, and concrete parameter
values.  H is shifted at load time so H(0) = 0.  Loaders accept TOML and
JSON files with the same keys; ``builtin_chem`` constructs the bundled
three-species example network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import exprlang
from .cones import (PolyCone, Membership, contains_cone, dual_classify,
                    from_facets, interior_direction, orthant)
from .errors import ConeflowError
from .exprlang import Expr
from .numerics import DEFAULT_TOL, Tol, as_vector

CHEM_CONE_FACETS = ((0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (1.0, 1.0, 1.0))


@dataclass
class SampleReport:
    """Outcome of a sampled hypothesis check.

    Sampling certifies non-falsification on n_samples points, not a proof;
    the worst point and violation are kept for inspection.
    """

    n_samples: int
    max_violation: float
    worst_point: np.ndarray
    passed: bool


@dataclass
class SystemSpec:
    """Immutable-after-load bundle of a system and its order structure."""

    dim: int
    field: tuple[Expr, ...]
    integral: Expr
    grad_integral: tuple[Expr, ...]
    jacobian: tuple[tuple[Expr, ...], ...]
    cone_K: PolyCone
    cone_Y: PolyCone
    params: dict[str, float]
    name: str = ""
    alpha_expr: Expr | None = dc_field(default=None)
    _fns: dict = dc_field(default_factory=dict, repr=False)

    def _fn(self, key: str, build: Callable):
        if key not in self._fns:
            self._fns[key] = build()
        return self._fns[key]

    @property
    def field_fn(self) -> Callable[[list[float]], list[float]]:
        """Compiled F: sequence of n floats to list of n floats."""
        def build():
            fns = [exprlang.compile_expr(e, self.params) for e in self.field]
            def f(x):
                return [g(x) for g in fns]
            return f
        return self._fn("field", build)

    @property
    def integral_fn(self) -> Callable[[list[float]], float]:
        def build():
            return exprlang.compile_expr(self.integral, self.params)
        return self._fn("integral", build)

    @property
    def grad_fn(self) -> Callable[[list[float]], list[float]]:
        def build():
            fns = [exprlang.compile_expr(e, self.params) for e in self.grad_integral]
            def f(x):
                return [g(x) for g in fns]
            return f
        return self._fn("grad", build)

    @property
    def jac_fn(self) -> Callable[[list[float]], np.ndarray]:
        def build():
            fns = [[exprlang.compile_expr(e, self.params) for e in row]
                   for row in self.jacobian]
            def f(x):
                return np.array([[g(x) for g in row] for row in fns])
            return f
        return self._fn("jac", build)

    def field_at(self, x) -> np.ndarray:
        return np.array(self.field_fn(as_vector(x, self.dim)))

    def integral_at(self, x) -> float:
        return self.integral_fn(as_vector(x, self.dim))

    def grad_at(self, x) -> np.ndarray:
        return np.array(self.grad_fn(as_vector(x, self.dim)))

    def jac_at(self, x) -> np.ndarray:
        return self.jac_fn(as_vector(x, self.dim))


def make_system(dim: int,
                field_src: list[str],
                integral_src: str,
                cone_k_facets,
                cone_y_facets=None,
                params: Mapping[str, float] | None = None,
                name: str = "",
                alpha_src: str | None = None,
                tol: Tol = DEFAULT_TOL) -> SystemSpec:
    """Parse sources, derive gradient/Jacobian, validate the cone pair.

    The conserved quantity is normalized by subtracting its value at the
    origin so user-supplied integrals satisfy H(0) = 0.
    """
    params = dict(params or {})
    for key in params:
        if exprlang._VAR_RE.match(key):
            raise ValueError(f"parameter name {key!r} collides with a state variable")
    if len(field_src) != dim:
        raise ValueError(f"field needs {dim} components, got {len(field_src)}")
    field_exprs = tuple(exprlang.parse(src, dim, params) for src in field_src)
    integral = exprlang.parse(integral_src, dim, params)
    h0 = exprlang.evaluate(integral, [0.0] * dim, params)
    if h0 != 0.0:
        integral = exprlang.Bin("-", integral, exprlang.Num(h0))
    grad = tuple(exprlang.diff(integral, i + 1) for i in range(dim))
    jac = tuple(tuple(exprlang.diff(f, j + 1) for j in range(dim)) for f in field_exprs)
    cone_k = cone_k_facets if isinstance(cone_k_facets, PolyCone) else from_facets(cone_k_facets, tol)
    if cone_y_facets is None:
        cone_y = orthant(dim, tol)
    else:
        cone_y = cone_y_facets if isinstance(cone_y_facets, PolyCone) else from_facets(cone_y_facets, tol)
    if cone_k.dim != dim or cone_y.dim != dim:
        raise ValueError("cone dimension does not match system dimension")
    if not contains_cone(cone_k, cone_y, tol):
        raise ValueError("order cone must contain the state cone")
    alpha = exprlang.parse(alpha_src, dim, params) if alpha_src else None
    return SystemSpec(dim=dim, field=field_exprs, integral=integral,
                      grad_integral=grad, jacobian=jac, cone_K=cone_k,
                      cone_Y=cone_y, params=params, name=name, alpha_expr=alpha)


def builtin_chem(k1f: float = 1.0, k1r: float = 1.0,
                 k2f: float = 1.0, k2r: float = 1.0) -> SystemSpec:
    """Three-species network A + B <-> C, A <-> B with mass-action rates.

    States are the concentrations of A, B, C.  The quantity
    x1 + x2 + 2 x3 is conserved; the order cone is the non-orthant
    polyhedral cone with facets x3, x1+x3, x2+x3, x1+x2+x3 >= 0.  The
    bundled alpha expression is d f1/d x1 + d f1/d x2 - d f1/d x3
    + d f2/d x1 - d f2/d x2, a diagonal shift under which J + alpha I
    should map every extremal ray of the cone strictly inward.
    """
    for name, v in (("k1f", k1f), ("k1r", k1r), ("k2f", k2f), ("k2r", k2r)):
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"rate {name} must be positive and finite, got {v}")
    f1 = "(k1f*x1*x2 - k1r*x3)"
    f2 = "(k2f*x1 - k2r*x2)"
    return make_system(
        dim=3,
        field_src=[f"-{f1} - {f2}", f"-{f1} + {f2}", f1],
        integral_src="x1 + x2 + 2*x3",
        cone_k_facets=CHEM_CONE_FACETS,
        cone_y_facets=None,
        params={"k1f": k1f, "k1r": k1r, "k2f": k2f, "k2r": k2r},
        name="chem",
        alpha_src="k1f*x2 + k1f*x1 + k1r + k2f + k2r",
    )


def sample_states(s: SystemSpec, n_samples: int, seed: int,
                  include_boundary: bool = True) -> np.ndarray:
    """Deterministic sample of states in the state cone.

    Interior points are log-uniform in [1e-3, 1e3] per coordinate direction
    (rejected against Y when Y is not the orthant); boundary points project
    interior samples onto Y's facet planes.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    a_y = s.cone_Y.facets
    pts: list[np.ndarray] = []
    guard = 0
    while len(pts) < n_samples and guard < 200 * n_samples:
        guard += 1
        x = 10.0 ** rng.uniform(-3.0, 3.0, size=s.dim)
        if np.min(a_y @ x) >= 0.0:
            pts.append(x)
    while len(pts) < n_samples:
        # fallback for exotic Y: scale the interior ray direction
        t = 10.0 ** rng.uniform(-3.0, 3.0)
        pts.append(t * interior_direction(s.cone_Y))
    if include_boundary:
        m = a_y.shape[0]
        extra = []
        for i, x in enumerate(pts[:max(1, n_samples // 3)]):
            row = a_y[i % m]
            xb = x - row * float(row @ x) / float(row @ row)
            if float(np.min(a_y @ xb)) >= -1e-12:
                extra.append(xb)
        pts.extend(extra)
    return np.array(pts)


def check_integral(s: SystemSpec, n_samples: int = 200, seed: int = 0) -> SampleReport:
    """Sampled test that the flow conserves H: <grad H, F> = 0 everywhere.

    The violation is normalized by 1 + |F||grad H|; pass means the worst
    sampled violation stays at or below 1e-10.
    """
    pts = sample_states(s, n_samples, seed)
    worst = 0.0
    worst_pt = pts[0]
    for x in pts:
        fx = np.array(s.field_fn(x))
        gx = np.array(s.grad_fn(x))
        v = abs(float(gx @ fx)) / (1.0 + float(np.linalg.norm(fx)) * float(np.linalg.norm(gx)))
        if v > worst:
            worst, worst_pt = v, x
    return SampleReport(n_samples=len(pts), max_violation=worst,
                        worst_point=worst_pt, passed=worst <= 1e-10)


def check_grad_dual(s: SystemSpec, n_samples: int = 200, seed: int = 0) -> SampleReport:
    """Sampled test that grad H stays strictly inside the dual of K.

    max_violation is the worst negated, normalized ray product; negative
    values mean a healthy interior margin at every sample.
    """
    pts = sample_states(s, n_samples, seed)
    worst = -math.inf
    worst_pt = pts[0]
    ok = True
    for x in pts:
        gx = np.array(s.grad_fn(x))
        prods = s.cone_K.rays @ gx
        viol = float(-np.min(prods)) / (1.0 + float(np.linalg.norm(gx)))
        if viol > worst:
            worst, worst_pt = viol, x
        if dual_classify(s.cone_K, gx) is not Membership.INTERIOR:
            ok = False
    return SampleReport(n_samples=len(pts), max_violation=worst,
                        worst_point=worst_pt, passed=ok)


def _build_from_dict(doc: dict, tol: Tol, name: str) -> SystemSpec:
    try:
        dim = int(doc["dim"])
        field_src = list(doc["field"])
        integral_src = str(doc["integral"])
    except KeyError as exc:
        raise ConeflowError(f"system file missing key {exc}") from exc
    cone_k = doc.get("cone_K")
    if cone_k is None:
        raise ConeflowError("system file missing key 'cone_K'")
    cone_y = doc.get("cone_Y")
    params = {str(k): float(v) for k, v in dict(doc.get("params", {})).items()}
    return make_system(dim, field_src, integral_src, cone_k, cone_y,
                       params=params, name=name, tol=tol,
                       alpha_src=doc.get("alpha"))


def load_system(path: str | Path, tol: Tol = DEFAULT_TOL) -> SystemSpec:
    """Load a system description from a TOML or JSON file."""
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix.lower() == ".json":
        doc = json.loads(raw.decode("utf-8"))
    else:
        try:
            import tomllib as toml_impl  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as toml_impl
        doc = toml_impl.loads(raw.decode("utf-8"))
    return _build_from_dict(doc, tol, name=p.stem)


def builtin_path() -> Path:
    """Location of the bundled canonical system file."""
    return Path(__file__).parent / "data" / "chem.toml"
