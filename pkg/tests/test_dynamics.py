import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tvmdp_nav.disturbance import DisturbanceField, NoiseModel, VortexParams
from tvmdp_nav.dynamics import (AgentState, Dynamics, SfmParams, sfm_control, sfm_forces, step_robot,
                                step_uncontrollable, transition_density)
from tvmdp_nav.spaces import Box

NONE = DisturbanceField("none")
VORTEX0 = DisturbanceField("dynamic-vortex", vortex=VortexParams(0.0, 0.0, (0.0, 0.0)))

finite = st.floats(-100, 100)


def test_step_robot_examples():
    np.testing.assert_allclose(step_robot((0, 0), (1, 0), 0.0, NONE, None, 0.5), (0.5, 0.0))
    np.testing.assert_allclose(step_robot((0, 0), (0, 0), 0.0, DisturbanceField("gyre"), None, 0.5),
                               (0.0, 0.0), atol=1e-15)
    np.testing.assert_allclose(step_robot((1, 0), (0, 0), 0.0, VORTEX0, None, 0.5), (0.5, 0.0))


def test_step_uncontrollable_examples():
    a = AgentState((0.0, 0.0), (0.0, 0.0), (5.0, 5.0))
    nxt = step_uncontrollable(a, (1.0, 0.0), 0.0, NONE, None, 0.5)
    np.testing.assert_allclose(nxt.position, (0.5, 0.0))
    np.testing.assert_allclose(nxt.velocity, (1.0, 0.0))
    b = step_uncontrollable(AgentState((1.0, 0.0)), (0.0, 0.0), 0.0, VORTEX0, None, 0.5)
    np.testing.assert_allclose(b.position, (0.5, 0.0))
    c = step_uncontrollable(AgentState((0.0, 0.0)), (0.0, 0.0), 0.0, DisturbanceField("gyre"), None, 0.5)
    np.testing.assert_allclose(c.position, (0.0, 0.0), atol=1e-15)


def test_noise_requires_rng():
    with pytest.raises(ValueError):
        step_robot((0, 0), (0, 0), 0.0, NONE, NoiseModel.identity(), 0.5)


@settings(max_examples=80, deadline=None)
@given(x=st.tuples(finite, finite), c=st.tuples(finite, finite),
       u=st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5)))
def test_translation_equivariance(x, c, u):
    x, c = np.array(x), np.array(c)
    np.testing.assert_allclose(step_robot(x + c, u, 0.0, NONE, None, 0.5),
                               step_robot(x, u, 0.0, NONE, None, 0.5) + c, atol=1e-9)


def test_density_peak_and_closed_form():
    q = NoiseModel.identity()
    mean = Dynamics(NONE, 0.5)((0.0, 0.0), (1.0, 0.0), 0.0)
    assert transition_density(mean, (0, 0), (1, 0), 0.0, NONE, q, 0.5) == pytest.approx(1 / (2 * np.pi))
    off = mean + np.array([2.0, 0.0])     # Mahalanobis distance 2
    assert transition_density(off, (0, 0), (1, 0), 0.0, NONE, q, 0.5) == pytest.approx(np.exp(-2) / (2 * np.pi))


def test_density_integrates_to_one():
    q = NoiseModel(np.array([[1.0, 0.3], [0.3, 0.5]]))
    f = DisturbanceField("gyre")
    mean = Dynamics(f, 0.5)((3.0, 4.0), (1.0, -1.0), 0.0)
    sd = np.sqrt(np.diag(q.covariance))
    n = 100
    xs = [mean[i] + np.linspace(-6 * sd[i], 6 * sd[i], n + 1) for i in range(2)]
    mids = [0.5 * (v[1:] + v[:-1]) for v in xs]
    area = (xs[0][1] - xs[0][0]) * (xs[1][1] - xs[1][0])
    total = sum(transition_density((a, b), (3.0, 4.0), (1.0, -1.0), 0.0, f, q, 0.5)
                for a in mids[0] for b in mids[1]) * area
    assert total == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(x=st.tuples(st.floats(0, 30), st.floats(0, 30)), t=st.floats(0, 50),
       d=st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)).filter(lambda v: np.hypot(*v) > 1e-4))
def test_density_max_at_mean(x, t, d):
    q = NoiseModel(np.array([[0.7, 0.1], [0.1, 0.4]]))
    f = DisturbanceField("dynamic-vortex")
    mean = Dynamics(f, 0.5)(x, (0.5, 0.5), t)
    peak = transition_density(mean, x, (0.5, 0.5), t, f, q, 0.5)
    assert transition_density(mean + np.array(d), x, (0.5, 0.5), t, f, q, 0.5) < peak


def test_density_singular_noise():
    with pytest.raises(np.linalg.LinAlgError, match="deterministic"):
        transition_density((0, 0), (0, 0), (0, 0), 0.0, NONE, NoiseModel(np.zeros((2, 2))), 0.5)


def test_sfm_at_goal_is_zero():
    a = AgentState((3.0, 3.0), (0.0, 0.0), (3.0, 3.0))
    np.testing.assert_allclose(sfm_control(a, None, [], [], SfmParams()), (0.0, 0.0))


def test_sfm_pure_attraction():
    p = SfmParams(goal_gain=1.0, desired_speed=1.0, max_speed=2.0)
    a = AgentState((0.0, 0.0), (0.0, 0.0), (10.0, 0.0))
    np.testing.assert_allclose(sfm_control(a, None, [], [], p), (1.0, 0.0))


def test_sfm_pair_repulsion():
    p = SfmParams(repulsion_strength=2.0, repulsion_range=1.0)
    a = AgentState((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
    b = AgentState((0.1, 0.0), (0.0, 0.0), (0.1, 0.0))
    fa = sfm_forces(a, None, [b], [], p)
    fb = sfm_forces(b, None, [a], [], p)
    np.testing.assert_allclose(fa, (-2 * np.exp(-0.1), 0.0))
    np.testing.assert_allclose(fb, -fa)
    assert np.hypot(*fa) == pytest.approx(1.8097, abs=1e-4)


def test_sfm_robot_repels_and_coincident_rule():
    p = SfmParams(repulsion_strength=1.0, repulsion_range=1.0)
    a = AgentState((2.0, 2.0), (0.0, 0.0), (2.0, 2.0))
    f = sfm_forces(a, AgentState((2.0, 2.0)), [], [], p)
    np.testing.assert_allclose(f, (1.0, 0.0))


def test_sfm_obstacle_nearest_point():
    p = SfmParams(obstacle_strength=3.0, obstacle_range=1.0)
    a = AgentState((0.0, 1.0), (0.0, 0.0), (0.0, 1.0))
    f = sfm_forces(a, None, [], [Box(-5.0, -5.0, 5.0, 0.0)], p)
    np.testing.assert_allclose(f, (0.0, 3.0 * np.exp(-1.0)))


@settings(max_examples=80, deadline=None)
@given(pos=st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=5),
       vel=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
       goal=st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
       vmax=st.floats(0.1, 2.5))
def test_sfm_speed_clipped(pos, vel, goal, vmax):
    p = SfmParams(max_speed=vmax, repulsion_strength=50.0)
    me = AgentState(pos[0], vel, goal)
    others = [AgentState(q) for q in pos[1:]]
    u = sfm_control(me, AgentState((0.0, 0.0)), others, [Box(1.0, 1.0, 2.0, 2.0)], p)
    assert np.hypot(*u) <= vmax * (1 + 1e-12)


def test_sfm_params_positive():
    with pytest.raises(ValueError):
        SfmParams(desired_speed=0.0)
