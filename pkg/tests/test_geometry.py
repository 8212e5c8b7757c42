import math

import numpy as np
import pytest

from coneflow.errors import NoIntersection, TrapFailed
from coneflow.geometry import (Region, build_trap, levelset_slice_sample,
                               make_slice, project_central, ray_exit,
                               reference_margin, sampled_diameter,
                               upper_set_region, _wedge_samples, _tangent_basis)
from coneflow.cones import Membership, classify

SQRT6 = math.sqrt(6.0)
G_UNIT = np.array([1.0, 1.0, 2.0]) / SQRT6


class TestRayExit:
    def test_capped_wedge_plane_exit(self, chem):
        # region {x in orthant : <(1,1,2), x> <= 2}, ray from 0 along (1,1,1)
        region = upper_set_region(chem, [0, 0, 0]).with_halfspace(
            [-1.0, -1.0, -2.0], -2.0)
        t, pt = ray_exit(region, [0, 0, 0], [1, 1, 1])
        assert t == pytest.approx(0.5)
        assert np.allclose(pt, [0.5, 0.5, 0.5])

    def test_recession_direction_never_exits(self, chem):
        region = upper_set_region(chem, [1, 1, 1])
        assert ray_exit(region, [2, 2, 2], [1, 1, 1]) is None

    def test_orthant_single_facet(self, chem):
        region = Region(np.eye(3), np.zeros(3))
        t, pt = ray_exit(region, [1, 1, 1], [-1, 0, 0])
        assert t == pytest.approx(1.0)
        assert np.allclose(pt, [0, 1, 1])


class TestProjectCentral:
    def test_closed_form_from_origin(self, chem):
        # plane <(1,1,2), x> = 2 expressed against the unit functional:
        # the ray through (1,1,1) meets it at exactly (0.5, 0.5, 0.5)
        plane = make_slice(chem, [0, 0, 0], "plus", 2.0 / SQRT6, g=[1, 1, 2])
        got = project_central([0, 0, 0], plane, [1, 1, 1])
        assert np.allclose(got, [0.5, 0.5, 0.5])
        # general closed form r*y/<g,y>
        y = np.array([0.3, 1.7, 0.4])
        got = project_central([0, 0, 0], plane, y)
        assert np.allclose(got, plane.r * y / float(plane.g @ y))

    def test_fixed_point_on_plane(self, chem):
        plane = make_slice(chem, [0, 0, 0], "plus", 1.0, g=[1, 1, 2])
        y = np.array([1.0, 1.0, 1.0])
        y = y / float(plane.g @ y)  # now <g, y> = 1
        assert np.allclose(project_central([0, 0, 0], plane, y), y)

    def test_parallel_ray_rejected(self, chem):
        plane = make_slice(chem, [0, 0, 0], "plus", 2.0, g=[1, 1, 2])
        with pytest.raises(NoIntersection):
            project_central([1, 0, 0], plane, [0, 2, -1])  # g-orthogonal move

    def test_mode_consistency_validated(self, chem):
        with pytest.raises(ValueError):
            make_slice(chem, [1, 1, 1], "minus", 3.0, g=[1, 1, 2])
        with pytest.raises(ValueError):
            make_slice(chem, [1, 1, 1], "plus", 0.5, g=[1, 1, 2])


class TestReferenceMargin:
    def test_chem_positivity_margin(self, chem):
        # minimum of <g, y> over unit vectors of the orthant is 1/sqrt(6)
        assert reference_margin(chem.cone_Y, G_UNIT) == pytest.approx(1.0 / SQRT6)

    def test_sampled_unit_vectors_respect_margin(self, chem):
        rng = np.random.default_rng(0)
        for _ in range(500):
            y = rng.uniform(0.0, 1.0, 3)
            if np.linalg.norm(y) < 1e-9:
                continue
            y /= np.linalg.norm(y)
            assert float(G_UNIT @ y) >= 1.0 / SQRT6 - 1e-9


class TestBuildTrap:
    def test_chem_unit_point_derived_values(self, chem):
        trap = build_trap(chem, [1, 1, 1], "plus", seed=0)
        gc = 4.0 / SQRT6
        assert trap.g == pytest.approx(G_UNIT)
        assert trap.k2 == pytest.approx(gc + 1.0)
        # H is proportional to <g, .>, so the plane bound is exact and the
        # level lands halfway: h = (4 + (4 + sqrt(6)))/2
        assert trap.h == pytest.approx(4.0 + SQRT6 / 2.0, abs=1e-9)
        # one halving: the midpoint k1 puts the wedge max exactly at h
        assert trap.k1 == pytest.approx(gc + 0.25, abs=1e-12)
        assert trap.margin_wedge == pytest.approx(SQRT6 / 4.0, abs=1e-9)
        assert trap.margin_plane == pytest.approx(SQRT6 / 2.0, abs=1e-9)

    def test_sandwich_and_ray_points(self, chem):
        trap = build_trap(chem, [1, 1, 1], "plus", seed=0)
        assert 4.0 / SQRT6 < trap.k1 < trap.k2
        assert trap.margin_wedge > 1e-6 and trap.margin_plane > 1e-6
        assert trap.theta > 0.0
        assert np.allclose(trap.s1, trap.t1 * trap.s0)
        assert np.allclose(trap.s2, trap.t2 * trap.s0)
        assert float(trap.g @ trap.s1) == pytest.approx(trap.k1)
        assert float(trap.g @ trap.s2) == pytest.approx(trap.k2)
        assert trap.t2 > trap.t1 > 1.0
        assert classify(chem.cone_Y, trap.s0) is Membership.INTERIOR

    def test_origin_base_point(self, chem):
        trap = build_trap(chem, [0, 0, 0], "plus", seed=0)
        assert trap.h == pytest.approx(SQRT6 / 2.0, abs=1e-9)
        assert trap.margin_wedge > 0.0

    def test_minus_mode_with_zero_outer_plane(self, chem):
        trap = build_trap(chem, [1, 1, 1], "minus", k2=0.0, seed=0)
        assert np.allclose(trap.s2, 0.0)
        assert trap.t2 == pytest.approx(0.0)
        assert 0.0 < trap.k1 < 4.0 / SQRT6
        assert 0.0 < trap.h < 4.0
        assert 0.0 < trap.t1 < 1.0

    def test_minus_mode_default_derived_values(self, chem):
        # defaults mirror the plus side: k2 = <g,c> - 1, the plane carries
        # H = 4 - sqrt(6) exactly, the level lands at 4 - sqrt(6)/2, and one
        # halving puts k1 at <g,c> - 1/4
        gc = 4.0 / SQRT6
        trap = build_trap(chem, [1, 1, 1], "minus", seed=0)
        assert trap.k2 == pytest.approx(gc - 1.0)
        assert trap.h == pytest.approx(4.0 - SQRT6 / 2.0, abs=1e-9)
        assert trap.k1 == pytest.approx(gc - 0.25, abs=1e-12)
        assert trap.margin_wedge == pytest.approx(SQRT6 / 4.0, abs=1e-9)
        assert trap.margin_plane == pytest.approx(SQRT6 / 2.0, abs=1e-9)

    def test_minus_mode_requires_interior_point(self, chem):
        with pytest.raises(TrapFailed):
            build_trap(chem, [1, 1, 0], "minus", seed=0)

    def test_infeasible_level_override(self, chem):
        with pytest.raises(TrapFailed):
            build_trap(chem, [1, 1, 1], "plus", h=100.0, seed=0)

    def test_degenerate_level_set_is_one_point(self, chem):
        # any proper cone increment strictly raises H, so {x in c+ : H = H(c)}
        # collapses to the base point
        rng = np.random.default_rng(8)
        c = np.array([1.0, 1.0, 1.0])
        for _ in range(200):
            k = chem.cone_K.rays.T @ rng.uniform(0.0, 1.0, 4)
            if np.linalg.norm(k) < 1e-9:
                continue
            assert chem.integral_at(c + k) > chem.integral_at(c)


class TestDiameterShrinkage:
    def test_wedge_diameter_bounded_by_offset(self, chem):
        c = np.array([1.0, 1.0, 1.0])
        gc = float(G_UNIT @ c)
        delta_g = reference_margin(chem.cone_Y, G_UNIT)
        rng = np.random.default_rng(0)
        prev = math.inf
        for dr in (0.5, 0.05, 0.005):
            region = upper_set_region(chem, c).with_halfspace(-G_UNIT, -(gc + dr))
            pts = _wedge_samples(chem, region, c, +1.0, 400, rng)
            diam = sampled_diameter(pts)
            assert diam <= 2.0 * dr / delta_g + 1e-9
            assert diam < prev
            prev = diam


class TestSliceSampling:
    def test_every_ray_crosses_once(self, chem):
        trap = build_trap(chem, [1, 1, 1], "plus", seed=0)
        out = levelset_slice_sample(chem, trap, n_rays=64, seed=0)
        assert out.star_shaped
        assert len(out.rays) == 64
        assert all(r.crossings == 1 for r in out.rays)
        for r in out.rays:
            assert chem.integral_at(r.point) == pytest.approx(trap.h, abs=1e-9)
        # distinct rays land on distinct boundary points (injectivity evidence)
        pts = np.array([r.point for r in out.rays])
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        assert np.min(d2) > 1e-12

    @pytest.mark.parametrize("level", [1.0, 4.0, 8.0])
    @pytest.mark.parametrize("mode", ["plus", "minus"])
    def test_traps_along_the_branch(self, chem, level, mode):
        from coneflow.equilibria import solve_on_levelset
        c = solve_on_levelset(chem, level, np.full(3, max(level / 4.0, 0.2)))
        trap = build_trap(chem, c, mode, seed=0)
        assert trap.margin_wedge > 1e-6 and trap.margin_plane > 1e-6
        out = levelset_slice_sample(chem, trap, n_rays=24, seed=0)
        assert out.star_shaped

    def test_minus_mode_slice(self, chem):
        trap = build_trap(chem, [1, 1, 1], "minus", k2=0.0, seed=0)
        out = levelset_slice_sample(chem, trap, n_rays=32, seed=0)
        assert out.star_shaped

    def test_full_level_set_triangle(self, chem):
        # S(0, 4) boundary lives on the orthant faces; its corners are
        # (4,0,0), (0,4,0), (0,0,2) from solving H = 4 on each axis
        trap = build_trap(chem, [0, 0, 0], "plus", k2=8.0 / SQRT6, seed=0)
        assert trap.h == pytest.approx(4.0, abs=1e-9)
        out = levelset_slice_sample(chem, trap, n_rays=96, seed=0)
        assert out.star_shaped
        corners = np.array([[4, 0, 0], [0, 4, 0], [0, 0, 2]], dtype=float)
        hits = set()
        for r in out.rays:
            pt = r.point
            assert chem.integral_at(pt) == pytest.approx(4.0, abs=1e-9)
            assert np.min(pt) >= -1e-9          # still inside the orthant
            assert np.min(np.abs(pt)) <= 1e-7   # and on one of its faces
            d = np.min(np.linalg.norm(corners - pt, axis=1))
            if d < 0.25:
                hits.add(int(np.argmin(np.linalg.norm(corners - pt, axis=1))))
        assert hits == {0, 1, 2}

    def test_boundary_projection_ordering(self, chem):
        # collinear tangent points whose projections both land on the cone
        # part of the rim: the nearer one carries the larger level
        trap = build_trap(chem, [1, 1, 1], "plus", seed=0)
        side = upper_set_region(chem, trap.c)
        delta2 = side.with_halfspace(-trap.g, -trap.k2)
        basis = _tangent_basis(trap.g)
        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(200):
            w = rng.normal(size=2)
            d = (w / np.linalg.norm(w)) @ basis
            exit_hit = ray_exit(side, trap.s1, d)
            t_f = exit_hit[0]
            t_a = rng.uniform(0.3, 0.6) * t_f
            t_b = rng.uniform(1.5, 1.9) * t_a
            if t_b > t_f:
                continue
            pa = ray_exit(delta2, trap.s0, (trap.s1 + t_a * d) - trap.s0)[1]
            pb = ray_exit(delta2, trap.s0, (trap.s1 + t_b * d) - trap.s0)[1]
            # keep only projections that exited through the cone boundary
            if (abs(float(trap.g @ pa) - trap.k2) < 1e-9
                    or abs(float(trap.g @ pb) - trap.k2) < 1e-9):
                continue
            checked += 1
            assert chem.integral_at(pa) > chem.integral_at(pb)
        assert checked > 20

    def test_projection_monotone_along_rays(self, chem):
        # computational content of the apex construction: H strictly
        # increases from s0 toward every projected rim point
        trap = build_trap(chem, [1, 1, 1], "plus", seed=0)
        out = levelset_slice_sample(chem, trap, n_rays=16, seed=0)
        for r in out.rays:
            vals = [chem.integral_at(trap.s0 + f * (r.point - trap.s0))
                    for f in np.linspace(0.0, 1.0, 12)]
            assert all(b > a for a, b in zip(vals, vals[1:]))
