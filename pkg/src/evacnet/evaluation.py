"""Multi-agent evacuation runs, force-field maps, speed sweeps and the
value-iteration oracle."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .geometry import Scenario, evacuated_mask, sample_initial_positions
from .gridworld import GridModel, build_grid
from .physics import (
    ACTION_VECTORS,
    EXIT_REWARD,
    MAX_STEPS,
    N_ACTIONS,
    STEP_REWARD,
    Crowd,
    PhysicsParams,
    leapfrog_step,
)
from .qnet import NetworkParams, forward, normalize_observation


@dataclass(frozen=True)
class LearnedGreedy:
    """Every agent takes the argmax action of one shared frozen network."""

    params: NetworkParams
    label: str = "learned"

    def __post_init__(self):
        cfg = self.params.config
        if cfg.input_size != 4 or cfg.output_size != N_ACTIONS:
            raise ValueError(f"network maps {cfg.input_size} -> {cfg.output_size}, expected 4 -> {N_ACTIONS}")

    def actions(self, crowd: Crowd, active: np.ndarray, scenario: Scenario, p: PhysicsParams) -> np.ndarray:
        obs = np.concatenate([crowd.pos[active], crowd.vel[active]], axis=1)
        x = normalize_observation(obs, scenario.room_size, 1.0)
        x[:, 2:] /= crowd.desired_speed[active, None]
        out = np.zeros(len(crowd), dtype=np.int64)
        out[active] = np.argmax(forward(self.params, x), axis=1)
        return out


@dataclass(frozen=True)
class SocialForceBaseline:
    """Self-driven force straight at the nearest exit center (continuous)."""

    label: str = "baseline"

    def actions(self, crowd: Crowd, active: np.ndarray, scenario: Scenario, p: PhysicsParams) -> np.ndarray:
        return baseline_directions(crowd.pos, scenario)


Policy = Union[LearnedGreedy, SocialForceBaseline]


def baseline_directions(pos: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Unit vectors (N, 2) toward each row's nearest exit center.

    Ties go to the lowest exit index; a position on an exit center gets the
    zero vector.
    """
    pos = np.asarray(pos, dtype=float).reshape(-1, 2)
    rel = scenario.exit_centers[None, :, :] - pos[:, None, :]
    dist = np.hypot(rel[..., 0], rel[..., 1])
    k = np.argmin(dist, axis=1)  # first minimum wins ties
    idx = np.arange(len(pos))
    d = dist[idx, k]
    out = np.zeros_like(pos)
    nz = d > 0
    out[nz] = rel[idx[nz], k[nz]] / d[nz, None]
    return out


def baseline_direction(position: Sequence[float], scenario: Scenario) -> np.ndarray:
    return baseline_directions(np.asarray(position, dtype=float)[None], scenario)[0]


@dataclass
class EvacRun:
    scenario: str
    policy: str
    n_agents: int
    seed: int
    total_steps: int
    evacuated_count: int
    returns: np.ndarray = field(repr=False)   # per-agent cumulative reward
    exit_steps: np.ndarray = field(repr=False)  # step at which each agent left, -1 if never
    trajectories: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.evacuated_count > self.n_agents:
            raise ValueError("evacuated_count exceeds n_agents")


def evacuate(
    scenario: Scenario,
    policy: Policy,
    n_agents: int,
    phys: PhysicsParams,
    seed: int,
    *,
    positions: np.ndarray | None = None,
    masses: np.ndarray | None = None,
    record_trajectories: bool = False,
) -> EvacRun:
    """Simulate ``n_agents`` agents stepping together until all leave or the cap.

    Initial positions are uniform and non-overlapping (drawn from ``seed``)
    unless given; agents start at rest. ``total_steps`` is the number of
    steps taken, at most ``phys.max_steps``.
    """
    if positions is None:
        positions = sample_initial_positions(scenario, n_agents, seed, phys.agent_diameter)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(positions) != n_agents:
        raise ValueError(f"got {len(positions)} positions for {n_agents} agents")
    crowd = Crowd.at_rest(positions, phys, mass=masses)
    crowd.evacuated[:] = evacuated_mask(scenario, crowd.pos, crowd.diameter)
    returns = np.zeros(n_agents)
    exit_steps = np.where(crowd.evacuated, 0, -1)
    frames = [(0, crowd.copy())] if record_trajectories else None
    step = 0
    while step < phys.max_steps and not crowd.evacuated.all():
        active = ~crowd.evacuated
        actions = policy.actions(crowd, active, scenario, phys)
        crowd = leapfrog_step(crowd, actions, scenario, phys)
        step += 1
        left = active & crowd.evacuated
        returns[active & ~left] += STEP_REWARD
        returns[left] += EXIT_REWARD
        exit_steps[left] = step
        if frames is not None:
            frames.append((step, crowd.copy()))
    return EvacRun(scenario.name, policy.label, n_agents, seed, step, int(crowd.evacuated.sum()),
                   returns, exit_steps, frames)


def _evacuate_job(args):
    scenario, policy, n_agents, phys, seed = args
    return evacuate(scenario, policy, n_agents, phys, seed)


def run_ensemble(
    scenario: Scenario,
    policy: Policy,
    n_agents: int,
    phys: PhysicsParams,
    seeds: Sequence[int],
    workers: int = 1,
) -> list[EvacRun]:
    """One :func:`evacuate` per seed, returned in seed order."""
    jobs = [(scenario, policy, n_agents, phys, int(s)) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_evacuate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evacuate_job, jobs))


def speed_sweep(
    scenario: Scenario,
    policy: Policy,
    speeds: Sequence[float],
    n_agents: int,
    seeds: Sequence[int],
    phys: PhysicsParams = PhysicsParams(),
    workers: int = 1,
) -> list[tuple[float, float]]:
    """Median ``total_steps`` over ``seeds`` for each desired speed.

    The same seeds (hence the same initial positions) are used at every speed.
    """
    if len(speeds) == 0:
        raise ValueError("speed list is empty")
    if any(s <= 0 for s in speeds):
        raise ValueError("speeds must be positive")
    table = []
    for v in speeds:
        runs = run_ensemble(scenario, policy, n_agents, replace(phys, desired_speed=float(v)), seeds, workers)
        table.append((float(v), float(np.median([r.total_steps for r in runs]))))
    return table


# force-field maps

@dataclass(frozen=True)
class FieldMap:
    spacing: float
    xy: np.ndarray       # (K, 2) cell centers
    actions: np.ndarray  # (K,) argmax action index
    q: np.ndarray        # (K, 8)


def map_cells(scenario: Scenario, spacing: float, agent_diameter: float = 0.5) -> np.ndarray:
    """Centers of the grid cells an agent could occupy.

    Cells whose center lies inside an obstacle, closer than one agent radius
    to an obstacle surface, or in an exit region are left out.
    """
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    nx = max(1, int(round(scenario.width / spacing)))
    ny = max(1, int(round(scenario.height / spacing)))
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    xy = np.stack([(ii.ravel() + 0.5) * spacing, (jj.ravel() + 0.5) * spacing], axis=1)
    keep = ~evacuated_mask(scenario, xy, agent_diameter)
    if scenario.obstacles:
        dist, _, inside = scenario.surface_contacts(xy)
        keep &= ~np.any(inside[:, 4:] | (dist[:, 4:] < agent_diameter / 2), axis=1)
    return xy[keep]


def force_field_map(params: NetworkParams, scenario: Scenario, spacing: float = 0.5,
                    desired_speed: float = 2.0) -> FieldMap:
    """Greedy action and Q-values at zero velocity for every free cell."""
    xy = map_cells(scenario, spacing)
    obs = np.concatenate([xy, np.zeros_like(xy)], axis=1)
    q = forward(params, normalize_observation(obs, scenario.room_size, desired_speed)) if len(xy) else np.zeros((0, N_ACTIONS))
    return FieldMap(float(spacing), xy, np.argmax(q, axis=1) if len(xy) else np.zeros(0, dtype=int), q)


def fraction_toward_exit(fmap: FieldMap, scenario: Scenario, max_angle_deg: float = 90.0) -> float:
    """Share of cells whose action is strictly within ``max_angle_deg`` of the
    direction to the nearest exit center."""
    if len(fmap.xy) == 0:
        return 0.0
    goal = baseline_directions(fmap.xy, scenario)
    cos = np.sum(ACTION_VECTORS[fmap.actions] * goal, axis=1)
    return float(np.mean(cos > math.cos(math.radians(max_angle_deg)) + 1e-12))


def rotation_agreement(fmap: FieldMap, scenario: Scenario) -> float:
    """Share of cells whose action, rotated 90 deg about the room center,
    equals the action of the rotated cell (square rooms only)."""
    if scenario.width != scenario.height:
        raise ValueError("rotation symmetry needs a square room")
    c = scenario.width / 2
    lookup = {tuple(np.round(p / fmap.spacing * 2).astype(int)): a for p, a in zip(fmap.xy, fmap.actions)}
    hits = total = 0
    for p, a in zip(fmap.xy, fmap.actions):
        rx, ry = c - (p[1] - c), c + (p[0] - c)  # counterclockwise by 90 deg
        key = tuple(np.round(np.array([rx, ry]) / fmap.spacing * 2).astype(int))
        if key in lookup:
            total += 1
            hits += lookup[key] == (a + 2) % N_ACTIONS
    return hits / total if total else 0.0


# value-iteration oracle

@dataclass
class OracleResult:
    grid: GridModel
    values: np.ndarray      # (n_cells,), NaN where unreachable
    q: np.ndarray           # (n_cells, 8)
    greedy: np.ndarray      # (n_cells,), -1 on exit, blocked and unreachable cells
    optimal: np.ndarray     # (n_cells, 8) bool, actions within tol of the best
    reachable: np.ndarray   # (n_cells,) bool
    diffs: list[float]      # max-norm change per sweep

    def matches(self, actions: np.ndarray) -> np.ndarray:
        """Per-cell flag that ``actions`` is optimal (decision cells only)."""
        cells = self.decision_cells()
        return self.optimal[cells, np.asarray(actions)[cells]]

    def decision_cells(self) -> np.ndarray:
        return np.flatnonzero(self.greedy >= 0)


def value_iteration(grid: GridModel, gamma: float = 0.999, tol: float = 1e-9,
                    max_iter: int = 1_000_000, opt_tol: float = 1e-6) -> OracleResult:
    """Bellman optimality sweeps until the max-norm change drops below ``tol``."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    reach = grid.reachable() & ~grid.blocked.ravel()
    term = grid.terminal
    v = np.zeros(grid.n_cells)
    cont = ~term[grid.next_cell]
    diffs = []
    for _ in range(max_iter):
        q = grid.reward + gamma * np.where(cont, v[grid.next_cell], 0.0)
        new = np.where(term | ~reach, 0.0, q.max(axis=1))
        diff = float(np.max(np.abs(new - v)))
        diffs.append(diff)
        v = new
        if diff < tol:
            break
    q = grid.reward + gamma * np.where(cont, v[grid.next_cell], 0.0)
    decide = reach & ~term
    greedy = np.where(decide, np.argmax(q, axis=1), -1)
    optimal = (q >= q.max(axis=1, keepdims=True) - opt_tol) & decide[:, None]
    values = np.where(reach, v, np.nan)
    return OracleResult(grid, values, q, greedy, optimal, reach, diffs)


def value_iteration_oracle(scenario: Scenario, grid_spacing: float = 1.0, gamma: float = 0.999) -> OracleResult:
    return value_iteration(build_grid(scenario, grid_spacing), gamma)


# CSV export

RUNS_HEADER = ("scenario", "policy", "seed", "total_steps", "evacuated_count")
SWEEP_HEADER = ("speed", "median_steps")
MAP_HEADER = ("x", "y", "action_index") + tuple(f"q{i}" for i in range(N_ACTIONS))


def write_runs_csv(path: str | Path, runs: Sequence[EvacRun]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUNS_HEADER)
        for r in runs:
            w.writerow((r.scenario, r.policy, r.seed, r.total_steps, r.evacuated_count))


def read_runs_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not set(RUNS_HEADER) <= set(rows[0]):
        raise ValueError(f"{path}: expected columns {','.join(RUNS_HEADER)}")
    return rows


def write_sweep_csv(path: str | Path, table: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        w.writerows((repr(s), repr(m)) for s, m in table)


def write_field_map_csv(path: str | Path, fmap: FieldMap) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAP_HEADER)
        for (x, y), a, q in zip(fmap.xy, fmap.actions, fmap.q):
            w.writerow([repr(float(x)), repr(float(y)), int(a)] + [repr(float(v)) for v in q])
