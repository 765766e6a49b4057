import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evacnet.geometry import Exit, Scenario, sample_initial_positions
from evacnet.physics import (
    ACTION_VECTORS,
    AgentState,
    Crowd,
    IntegrationError,
    PhysicsParams,
    SingleAgentEnv,
    TRAJECTORY_HEADER,
    accelerations,
    action_unit_vector,
    agent_pair_force,
    env_step,
    leapfrog_step,
    obstacle_force,
    self_driven_force,
    total_acceleration,
    viscous_force,
    write_trajectory_csv,
)

R2 = math.sqrt(2) / 2


def test_params_defaults():
    p = PhysicsParams()
    assert (p.A, p.B, p.k, p.tau, p.dt, p.agent_diameter, p.agent_mass, p.desired_speed) == (
        100.0, 0.08, 8.0e4, 0.5, 0.1, 0.5, 80.0, 2.0)


@pytest.mark.parametrize("kw", [{"A": 0}, {"B": -1}, {"dt": 0.6}, {"desired_speed": float("nan")}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        PhysicsParams(**kw)


@pytest.mark.parametrize("a, vec", [(0, (1, 0)), (2, (0, 1)), (1, (R2, R2)), (4, (-1, 0)), (7, (R2, -R2))])
def test_action_unit_vector(a, vec):
    assert action_unit_vector(a) == pytest.approx(vec, abs=1e-15)


def test_action_out_of_range():
    with pytest.raises(ValueError):
        action_unit_vector(8)


def test_self_driven_force(phys):
    assert self_driven_force(AgentState((5, 5)), 0, phys) == pytest.approx((320, 0))
    assert self_driven_force(AgentState((5, 5), desired_speed=1.0), 2, phys) == pytest.approx((0, 160), abs=1e-12)
    assert self_driven_force(AgentState((5, 5), desired_speed=0.0), 3, phys) == (0.0, 0.0)


@pytest.mark.parametrize("v, f", [((0, 0), (0, 0)), ((2, 0), (-320, 0)), ((0, -1), (0, 160))])
def test_viscous_force(phys, v, f):
    assert viscous_force(AgentState((5, 5), v), phys) == pytest.approx(f)


def test_pair_force_touching(phys):
    f = agent_pair_force(AgentState((5.5, 5)), AgentState((5, 5)), phys)
    assert f == pytest.approx((100.0, 0.0))


def test_pair_force_avoidance_decay(phys):
    f = agent_pair_force(AgentState((5, 5.58)), AgentState((5, 5)), phys)
    assert f[1] == pytest.approx(100 * math.exp(-1), rel=1e-12)
    assert f[0] == pytest.approx(0.0, abs=1e-12)


def test_pair_force_coincident(phys):
    with pytest.raises(IntegrationError):
        agent_pair_force(AgentState((5, 5)), AgentState((5, 5)), phys)


def test_pair_force_overlap_oracle(phys):
    # overlap 0.1 m, relative tangential speed 1 m/s; hand-evaluated force law
    i = AgentState((5.4, 5), (0, 0))
    j = AgentState((5.0, 5), (0, 1))
    f = agent_pair_force(i, j, phys)
    radial = 100 * math.exp(0.1 / 0.08) + 8e4 * 0.1
    assert f == pytest.approx((radial, 8e4 * 0.1 * 1.0))


vel = st.floats(-3, 3)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), vel, vel, vel, vel)
def test_newton_third_law(dx, dy, vx1, vy1, vx2, vy2):
    if math.hypot(dx, dy) < 1e-6:
        return
    p = PhysicsParams()
    i = AgentState((5 + dx, 5 + dy), (vx1, vy1))
    j = AgentState((5, 5), (vx2, vy2))
    fij, fji = agent_pair_force(i, j, p), agent_pair_force(j, i, p)
    assert fij[0] == pytest.approx(-fji[0], abs=1e-9)
    assert fij[1] == pytest.approx(-fji[1], abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5 + 1e-9, 3), st.floats(0, 2 * math.pi), vel, vel, vel, vel)
def test_contact_terms_vanish_without_overlap(r, th, vx1, vy1, vx2, vy2):
    p = PhysicsParams()
    i = AgentState((5 + r * math.cos(th), 5 + r * math.sin(th)), (vx1, vy1))
    j = AgentState((5, 5), (vx2, vy2))
    f = np.array(agent_pair_force(i, j, p))
    diff = np.subtract(i.position, j.position)
    dist = math.hypot(*diff)
    if dist <= 0.5:
        return  # rounding of the stored position closed the gap
    expect = p.A * math.exp((0.5 - dist) / p.B) * diff / dist
    assert np.allclose(f, expect, rtol=1e-12, atol=0)


def test_obstacle_force_room_center(one_exit, phys):
    f = obstacle_force(AgentState((5, 5)), one_exit, phys)
    assert abs(f[0]) < 1e-20 and abs(f[1]) < 1e-20


def test_obstacle_force_touching_wall(one_exit, phys):
    f = obstacle_force(AgentState((5, 0.25)), one_exit, phys)
    assert f == pytest.approx((0, 100.0), abs=1e-9)


def test_wall_friction_opposes_sliding(one_exit, phys):
    # 0.05 m overlap with the bottom wall, sliding along +x
    f = obstacle_force(AgentState((5, 0.2), (1.0, 0.0)), one_exit, phys)
    assert f[0] == pytest.approx(-8e4 * 0.05 * 1.0)
    assert f[1] == pytest.approx(100 * math.exp(0.05 / 0.08) + 8e4 * 0.05)


def test_obstacle_force_inside_clamps(circle_room, phys, caplog):
    caplog.set_level("DEBUG", logger="evacnet.physics")
    f = obstacle_force(AgentState((5.5, 5)), circle_room, phys)
    assert np.all(np.isfinite(f))
    assert f[0] > 0


def test_total_acceleration_drive_only(one_exit, phys):
    crowd = Crowd.at_rest([[5, 5]], phys)
    assert total_acceleration(0, crowd, np.array([0]), one_exit, phys) == pytest.approx((4.0, 0.0), abs=1e-12)


def test_total_acceleration_terminal_velocity(one_exit, phys):
    crowd = Crowd([[5, 5]], [[0, 2.0]], 80, 0.5, 2.0)
    assert total_acceleration(0, crowd, np.array([2]), one_exit, phys) == pytest.approx((0, 0), abs=1e-12)


def test_far_pair_negligible(one_exit, phys):
    crowd = Crowd([[3, 5], [7, 5]], [[0, 2.0], [0, 2.0]], 80, 0.5, 2.0)
    acc = accelerations(crowd, np.array([2, 2]), one_exit, phys)
    # what remains is the wall term 100*exp(-2.75/0.08)/80 ~ 1e-15
    assert np.allclose(acc, 0, atol=1e-12)


def test_evacuated_agents_excluded(one_exit, phys):
    crowd = Crowd([[5, 5], [5.3, 5]], [[0, 0], [0, 0]], 80, 0.5, 2.0, [False, True])
    acc = accelerations(crowd, np.array([0, 0]), one_exit, phys)
    assert acc[0] == pytest.approx((4.0, 0.0))
    assert np.all(acc[1] == 0)


# integrator

def _free(tau=1e12, **kw):
    """Room large enough that walls exert nothing; huge tau switches off drag."""
    room = Scenario((100.0, 100.0), (Exit((50, 100), 1.0),))
    return room, PhysicsParams(tau=tau, **kw)


def test_free_streaming():
    room, p = _free()
    crowd = Crowd([[50, 50]], [[1.0, 0.0]], 80, 0.5, 2.0)
    nxt = leapfrog_step(crowd, np.zeros((1, 2)), room, p)
    assert nxt.pos[0] == pytest.approx((50.1, 50.0), abs=1e-12)
    assert nxt.vel[0] == pytest.approx((1.0, 0.0), abs=1e-12)


def test_constant_acceleration_step():
    g, tau = 3.0, 1e12
    room, p = _free(tau=tau, desired_speed=g * tau)
    crowd = Crowd.at_rest([[50, 50]], p)
    nxt = leapfrog_step(crowd, np.array([0]), room, p)
    assert nxt.pos[0, 0] - 50 == pytest.approx(g * 0.01 / 2, rel=1e-9)
    assert nxt.vel[0, 0] == pytest.approx(g * 0.1, rel=1e-9)


def _relax(p, t_end, room):
    crowd = Crowd.at_rest([[50, 5]], p)
    for _ in range(int(round(t_end / p.dt))):
        crowd = leapfrog_step(crowd, np.array([2]), room, p)
    return crowd


def test_speed_tracks_closed_form():
    room, _ = _free()
    p = PhysicsParams()
    c = _relax(p, 2.0, room)
    exact = 2.0 * (1 - math.exp(-2.0 / 0.5))
    assert abs(c.vel[0, 1] - exact) / exact < 0.02


def test_second_order_convergence():
    room, _ = _free()
    errs = []
    for dt in (0.1, 0.05):
        p = PhysicsParams(dt=dt)
        c = _relax(p, 2.0, room)
        exact = 2.0 * (2.0 - 0.5 * (1 - math.exp(-4.0)))
        errs.append(abs(c.pos[0, 1] - 5 - exact))
    assert 3 <= errs[0] / errs[1] <= 5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raises(one_exit, phys):
    crowd = Crowd([[5, 5]], [[np.inf, 0]], 80, 0.5, 2.0)
    with pytest.raises(IntegrationError):
        leapfrog_step(crowd, np.array([0]), one_exit, phys)


def test_substepping_keeps_contact_bounded(one_exit, phys):
    # agent driven straight into the bottom wall at full speed
    crowd = Crowd([[5, 0.6]], [[0, -2.0]], 80, 0.5, 2.0)
    for _ in range(30):
        crowd = leapfrog_step(crowd, np.array([6]), one_exit, phys)
        assert crowd.pos[0, 1] > 0.1
        assert np.hypot(*crowd.vel[0]) < 3.0


def test_crowd_step_deterministic(one_exit, phys):
    pos = sample_initial_positions(one_exit, 30, 4)
    acts = np.random.default_rng(0).integers(0, 8, size=(20, 30))
    runs = []
    for _ in range(2):
        c = Crowd.at_rest(pos, phys)
        for a in acts:
            c = leapfrog_step(c, a, one_exit, phys)
        runs.append(c)
    assert np.array_equal(runs[0].pos, runs[1].pos)
    assert np.array_equal(runs[0].vel, runs[1].vel)


# MDP wrapper

def test_env_step_reaches_exit(one_exit, phys):
    s = AgentState((5, 10 - 0.9), (0, 2.0))
    out = env_step(s, 2, one_exit, phys, 0)
    assert out.reward == 0.0 and out.done and out.next_state.evacuated


def test_env_step_mid_room(one_exit, phys):
    out = env_step(AgentState((5, 5)), 3, one_exit, phys, 0)
    assert out.reward == -0.1 and not out.done


def test_env_step_cap(one_exit, phys):
    out = env_step(AgentState((5, 5)), 0, one_exit, phys, 9_999)
    assert out.done and out.reward == -0.1


def test_env_step_rejects_terminal(one_exit, phys):
    with pytest.raises(ValueError):
        env_step(AgentState((5, 9.9), evacuated=True), 0, one_exit, phys, 0)


@pytest.mark.parametrize("name", ["one_exit.json", "concave_obstacle.json", "three_exits_two_obstacles.json"])
def test_scalar_env_matches_array_step(name, phys):
    from evacnet.geometry import load_scenario
    s = load_scenario(name)
    rng = np.random.default_rng(1)
    start = sample_initial_positions(s, 1, 9)[0]
    env = SingleAgentEnv(s, phys)
    env.reset(start)
    state = AgentState(start)
    for k in range(400):
        a = int(rng.integers(8)) if k % 7 else 6  # keep bumping walls
        obs, r, evac, done = env.step(a)
        out = env_step(state, a, s, phys, k)
        state = out.next_state
        assert np.allclose(obs, [*state.position, *state.velocity], rtol=0, atol=1e-10)
        assert (r, evac, done) == (out.reward, state.evacuated, out.done)
        if done:
            break


def test_episode_return_counts_steps(one_exit_wide, phys):
    env = SingleAgentEnv(one_exit_wide, phys)
    env.reset((5, 6))
    total, steps = 0.0, 0
    done = False
    while not done:
        _, r, evac, done = env.step(2)
        total += r
        steps += 1
    assert evac
    assert total == pytest.approx(-0.1 * (steps - 1), abs=1e-12)


def test_trajectory_csv(tmp_path, one_exit, phys):
    c0 = Crowd.at_rest([[2, 2], [7, 3]], phys)
    c1 = leapfrog_step(c0, np.array([0, 1]), one_exit, phys)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, [(0, c0), (1, c1)])
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == TRAJECTORY_HEADER == ("step", "agent_id", "x", "y", "vx", "vy", "evacuated")
    assert [(r[0], r[1]) for r in rows[1:]] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]
    assert float(rows[3][2]) == c1.pos[0, 0]


def test_action_vectors_readonly():
    with pytest.raises(ValueError):
        ACTION_VECTORS[0, 0] = 2.0
