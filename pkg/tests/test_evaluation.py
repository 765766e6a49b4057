import csv
import math

import numpy as np
import pytest

from evacnet.evaluation import (
    MAP_HEADER,
    RUNS_HEADER,
    LearnedGreedy,
    SocialForceBaseline,
    baseline_direction,
    baseline_directions,
    evacuate,
    force_field_map,
    fraction_toward_exit,
    map_cells,
    read_runs_csv,
    rotation_agreement,
    run_ensemble,
    speed_sweep,
    value_iteration,
    value_iteration_oracle,
    write_field_map_csv,
    write_runs_csv,
    write_sweep_csv,
)
from evacnet.geometry import Exit, Scenario, load_scenario
from evacnet.gridworld import build_grid
from evacnet.physics import ACTION_VECTORS, PhysicsParams
from evacnet.qnet import NetConfig, NetworkParams, he_init


# baseline policy

def test_baseline_direction_example(one_exit):
    assert baseline_direction((2, 2), one_exit) == pytest.approx(np.array([3, 8]) / math.sqrt(73))


def test_baseline_nearest_exit():
    s = load_scenario("four_exits.json")
    dirs = baseline_directions(np.array([[1.0, 5.0], [5.0, 9.0], [8.0, 5.0], [5.0, 1.5]]), s)
    assert dirs == pytest.approx(np.array([[-1, 0], [0, 1], [1, 0], [0, -1]], float))


def test_baseline_tie_lowest_index():
    s = Scenario((10, 10), (Exit((0, 5), 1.0), Exit((10, 5), 1.0)))
    assert baseline_direction((5, 5), s) == pytest.approx([-1, 0])


def test_baseline_on_exit_center_is_zero(one_exit):
    assert np.all(baseline_direction((5, 10), one_exit) == 0)


# evacuation runs

def test_zero_agents(one_exit, phys):
    r = evacuate(one_exit, SocialForceBaseline(), 0, phys, 0)
    assert r.total_steps == 0 and r.evacuated_count == 0


def test_single_baseline_agent(one_exit, phys):
    r = evacuate(one_exit, SocialForceBaseline(), 1, phys, 0, positions=np.array([[5.0, 5.0]]))
    # 4.25 m at up to 2 m/s with a 0.5 s relaxation time
    assert 25 <= r.total_steps <= 60
    assert r.evacuated_count == 1
    assert r.returns[0] == pytest.approx(-0.1 * (r.total_steps - 1))
    assert r.exit_steps[0] == r.total_steps


def test_step_cap_respected(one_exit):
    p = PhysicsParams(max_steps=5)
    r = evacuate(one_exit, SocialForceBaseline(), 3, p, 1)
    assert r.total_steps == 5 and r.evacuated_count == 0
    assert np.all(r.exit_steps == -1)
    assert r.returns == pytest.approx([-0.5] * 3)


def test_zero_network_walks_east(one_exit, phys):
    # all-zero Q-values: argmax picks action 0 for everyone
    pol = LearnedGreedy(NetworkParams(NetConfig((4,))))
    r = evacuate(one_exit, pol, 1, PhysicsParams(max_steps=10), 0, positions=np.array([[2.0, 5.0]]),
                 record_trajectories=True)
    last = r.trajectories[-1][1]
    assert last.pos[0, 0] > 2.0 and abs(last.pos[0, 1] - 5.0) < 1e-9


def test_learned_policy_checks_shape():
    with pytest.raises(ValueError):
        LearnedGreedy(NetworkParams(NetConfig((4,), input_size=6)))
    with pytest.raises(ValueError):
        LearnedGreedy(NetworkParams(NetConfig((4,), output_size=3)))


def test_crowd_evacuates_one_exit(one_exit, phys):
    r = evacuate(one_exit, SocialForceBaseline(), 20, phys, 3)
    assert r.evacuated_count == 20
    assert r.total_steps == r.exit_steps.max()
    assert np.all(r.exit_steps > 0)


def test_ensemble_seed_order_and_determinism(one_exit, phys):
    runs = run_ensemble(one_exit, SocialForceBaseline(), 5, phys, [4, 2])
    assert [r.seed for r in runs] == [4, 2]
    again = evacuate(one_exit, SocialForceBaseline(), 5, phys, 2)
    assert again.total_steps == runs[1].total_steps
    assert np.array_equal(again.returns, runs[1].returns)


def test_ensemble_parallel_matches_serial(one_exit, phys):
    a = run_ensemble(one_exit, SocialForceBaseline(), 4, phys, [0, 1], workers=1)
    b = run_ensemble(one_exit, SocialForceBaseline(), 4, phys, [0, 1], workers=2)
    assert [(r.total_steps, r.evacuated_count) for r in a] == [(r.total_steps, r.evacuated_count) for r in b]


def test_speed_sweep_validation(one_exit):
    with pytest.raises(ValueError):
        speed_sweep(one_exit, SocialForceBaseline(), [], 2, [0])
    with pytest.raises(ValueError):
        speed_sweep(one_exit, SocialForceBaseline(), [1.0, -1.0], 2, [0])


def test_speed_sweep_single_agent_faster(one_exit):
    table = speed_sweep(one_exit, SocialForceBaseline(), [1.0, 3.0], 1, [0, 1, 2])
    assert [s for s, _ in table] == [1.0, 3.0]
    assert table[1][1] < table[0][1]


# field maps

def test_map_cells_count_and_exclusions(one_exit, circle_room):
    assert len(map_cells(one_exit, 5.0)) == 4
    cells = map_cells(circle_room, 0.5)
    d = np.hypot(cells[:, 0] - 5, cells[:, 1] - 5)
    assert np.all(d >= 1.0 + 0.25)
    assert len(map_cells(one_exit, 0.5)) < 400


def test_map_spacing_validation(one_exit):
    with pytest.raises(ValueError):
        map_cells(one_exit, 0.0)


def test_zero_net_field_map(one_exit):
    fmap = force_field_map(NetworkParams(NetConfig((4,))), one_exit, spacing=5.0)
    assert fmap.actions.tolist() == [0, 0, 0, 0]
    assert np.all(fmap.q == 0)


def test_fraction_toward_exit_oracle(one_exit):
    fmap = force_field_map(NetworkParams(NetConfig((4,))), one_exit, spacing=0.5)
    goal = baseline_directions(fmap.xy, one_exit)
    # action 0 is east: within 90 deg exactly where the exit lies to the east
    assert fraction_toward_exit(fmap, one_exit) == pytest.approx(np.mean(goal[:, 0] > 1e-12))


def _with_actions(fmap, actions):
    return type(fmap)(fmap.spacing, fmap.xy, np.asarray(actions), fmap.q)


def test_rotation_agreement_oracles():
    s = load_scenario("four_exits.json")
    fmap = force_field_map(NetworkParams(NetConfig((4,))), s, spacing=1.0)
    rel = fmap.xy - 5.0
    # outward compass action; tan(22.5 deg) is irrational so no cell sits on a bisector
    radial = np.rint(np.degrees(np.arctan2(rel[:, 1], rel[:, 0])) / 45.0).astype(int) % 8
    assert rotation_agreement(_with_actions(fmap, radial), s) == 1.0
    assert rotation_agreement(_with_actions(fmap, np.zeros(len(rel), int)), s) == 0.0
    inward = (radial + 4) % 8
    assert fraction_toward_exit(_with_actions(fmap, inward), s) < fraction_toward_exit(_with_actions(fmap, radial), s)


def test_rotation_needs_square_room():
    s = Scenario((10, 6), (Exit((5, 6), 1.0),))
    with pytest.raises(ValueError):
        rotation_agreement(force_field_map(NetworkParams(NetConfig((4,))), s, 1.0), s)


# value iteration

def test_value_iteration_corridor():
    s = Scenario((1.0, 5.0), (Exit((0.5, 5.0), 1.0),), (), "corridor")
    grid = build_grid(s, 1.0)
    o = value_iteration(grid, gamma=0.999)
    col = o.values.reshape(grid.nx, grid.ny)[0]
    exits = grid.exit_cells[0]
    # k moves to reach the exit: V = -0.1 (1 + g + ... + g^(k-2))
    for j in range(grid.ny):
        if exits[j]:
            continue
        k = int(np.argmax(exits)) - j
        expect = -0.1 * sum(0.999 ** t for t in range(k - 1))
        assert col[j] == pytest.approx(expect, abs=1e-9)
        assert o.greedy[grid.index(0, j)] == 2  # north


def test_value_iteration_contraction(one_exit):
    o = value_iteration_oracle(one_exit, 1.0, gamma=0.9)
    diffs = [d for d in o.diffs if d > 0]
    assert all(b <= 0.9 * a + 1e-15 for a, b in zip(diffs, diffs[1:]))


def test_oracle_greedy_within_45_degrees(one_exit):
    o = value_iteration_oracle(one_exit)
    cells = o.decision_cells()
    xy = np.array([o.grid.center(c) for c in cells])
    goal = baseline_directions(xy, one_exit)
    for row, g in zip(o.optimal[cells], goal):
        best = max(ACTION_VECTORS[a] @ g for a in np.flatnonzero(row))
        assert best >= math.cos(math.radians(45)) - 1e-9


def test_unreachable_cells_marked():
    s = load_scenario("one_exit.json")
    grid = build_grid(s, 1.0)
    o = value_iteration(grid)
    assert o.reachable[grid.free_cells()].all()
    assert np.all(o.greedy[grid.terminal] == -1)
    assert np.isnan(o.values).sum() == 0


# CSV

def test_runs_csv_round_trip(tmp_path, one_exit, phys):
    runs = run_ensemble(one_exit, SocialForceBaseline(), 2, phys, [0, 1])
    f = tmp_path / "runs.csv"
    write_runs_csv(f, runs)
    rows = read_runs_csv(f)
    assert tuple(rows[0]) == RUNS_HEADER
    assert [int(r["total_steps"]) for r in rows] == [r.total_steps for r in runs]


def test_runs_csv_bad_header(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_runs_csv(f)


def test_sweep_and_map_csv(tmp_path, one_exit):
    write_sweep_csv(tmp_path / "s.csv", [(1.0, 30.0), (2.0, 25.5)])
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows == [["speed", "median_steps"], ["1.0", "30.0"], ["2.0", "25.5"]]
    fmap = force_field_map(he_init(NetConfig((4,)), 0), one_exit, spacing=5.0)
    write_field_map_csv(tmp_path / "m.csv", fmap)
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert tuple(rows[0]) == MAP_HEADER and len(rows) == 5
    assert [float(v) for v in rows[1][3:]] == fmap.q[0].tolist()
