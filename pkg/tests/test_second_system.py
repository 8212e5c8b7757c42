"""Whole-pipeline run on a second system, independent of the built-in one.

A two-species exchange x1 <-> x2 with symmetric linear kinetics on the
orthant: the total x1 + x2 is conserved and the flow is cooperative with
respect to the orthant itself.  Everything has closed forms: equilibria
are (h/2, h/2), and the branch point dominated by y touches the cone
boundary at level 2 * min(y1, y2).
"""

import numpy as np
import pytest

from coneflow.certify import certify_all
from coneflow.cones import Membership, OrderRel, classify, order
from coneflow.equilibria import assert_no_boundary_equilibria, continue_curve, solve_on_levelset
from coneflow.geometry import build_trap, levelset_slice_sample
from coneflow.integrate import integrate, order_preservation_trial
from coneflow.lyapunov import LyapunovEvaluator, check_increase_along_orbit, eval_L, eval_Q
from coneflow.system import check_grad_dual, check_integral, make_system


@pytest.fixture(scope="module")
def exchange():
    return make_system(2, ["k*(x2 - x1)", "k*(x1 - x2)"], "x1 + x2",
                       np.eye(2), None, {"k": 1.5}, "exchange")


@pytest.fixture(scope="module")
def exchange_evaluator(exchange):
    curve = continue_curve(exchange, np.linspace(0.0, 6.0, 61),
                           multistart=4, seed=0)
    return LyapunovEvaluator(exchange, curve)


def test_hypotheses_certify(exchange):
    assert check_integral(exchange, 100, 0).passed
    assert check_grad_dual(exchange, 100, 0).passed
    cert = certify_all(exchange, 200, 0)
    assert cert.cooperative_pass and cert.irreducible_pass


def test_branch_is_the_diagonal(exchange):
    curve = continue_curve(exchange, np.linspace(0.0, 6.0, 31), multistart=4, seed=1)
    for h, e in zip(curve.levels, curve.states):
        assert np.allclose(e, [h / 2.0, h / 2.0], atol=1e-9)
    assert assert_no_boundary_equilibria(curve, exchange).passed


def test_orbits_converge_to_the_diagonal(exchange):
    for x0 in ([3.0, 0.0], [0.25, 1.75], [5.0, 1.0]):
        h = sum(x0)
        traj = integrate(exchange, x0, 40.0, sample_times=[0.0, 40.0])
        assert np.max(np.abs(traj.final_state() - h / 2.0)) < 1e-8
        assert traj.drift <= 1e-10


def test_order_preserved(exchange):
    rep = order_preservation_trial(exchange, n_pairs=25, t_check=1.0, seed=3)
    assert rep.passed and rep.worst_margin > 1e-8


def test_contact_level_closed_form(exchange, exchange_evaluator):
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.uniform(0.0, 2.5, 2)
        h_star, q = eval_Q(exchange_evaluator, y)
        assert h_star == pytest.approx(2.0 * min(y), abs=1e-8)
        assert np.allclose(q, [min(y), min(y)], atol=1e-8)
        assert eval_L(exchange_evaluator, y) == pytest.approx(2.0 * min(y), abs=1e-8)


def test_orbit_monotonicity(exchange, exchange_evaluator):
    traj = integrate(exchange, [4.0, 0.0], 30.0,
                     sample_times=np.linspace(0.0, 30.0, 61))
    rep = check_increase_along_orbit(exchange_evaluator, traj)
    assert rep.passed, rep.violations[:3]
    assert rep.initial_L == pytest.approx(0.0, abs=1e-9)
    assert rep.final_L == pytest.approx(4.0, abs=1e-6)


def test_trap_and_slice_in_two_dimensions(exchange):
    c = solve_on_levelset(exchange, 2.0, [1.0, 1.0])
    for mode in ("plus", "minus"):
        trap = build_trap(exchange, c, mode, seed=0)
        assert trap.margin_wedge > 1e-6 and trap.margin_plane > 1e-6
        out = levelset_slice_sample(exchange, trap, n_rays=2, seed=0)
        assert out.star_shaped
        # a one-dimensional tangent space gives exactly the two directions
        assert out.n_rays == 2
        for r in out.rays:
            assert exchange.integral_at(r.point) == pytest.approx(trap.h, abs=1e-9)


def test_unordered_pair_stays_unordered_in_value(exchange):
    # strict monotonicity speaks to ordered pairs; unordered data should
    # still classify NONE at time zero
    assert order(exchange.cone_K, [1.0, 0.0], [0.0, 1.0]) is OrderRel.NONE
    assert classify(exchange.cone_K, [0.5, 0.5]) is Membership.INTERIOR
