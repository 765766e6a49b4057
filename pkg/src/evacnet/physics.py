"""Social-force particle dynamics and the single-agent evacuation MDP.

Forces on agent i (SI units):

* self-driven      (m/tau) * v_desired * e, with e one of 8 compass unit
                   vectors (learned policy) or any unit vector (baseline)
* agent-agent      avoidance A exp((d_ij - r_ij)/B) n_ij, compression
                   k g(d_ij - r_ij) n_ij and sliding friction
                   k g(d_ij - r_ij) ((v_j - v_i).t_ij) t_ij, g(x) = max(x, 0)
* wall / obstacle  same three terms against the nearest surface point, the
                   friction opposing the agent's tangential velocity
* viscous          -(m/tau) v

Integration is kick-drift-kick leapfrog (see :func:`leapfrog_step`).
Agents that reach an exit are frozen and drop out of every force sum.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import AGENT_DIAMETER, Scenario, Vec2, evacuated_mask

log = logging.getLogger(__name__)
_inside_reports = 0


def _report_inside(points) -> None:
    # first occurrence at WARNING, the rest at DEBUG to keep crowded runs quiet
    global _inside_reports
    level = logging.WARNING if _inside_reports == 0 else logging.DEBUG
    _inside_reports += 1
    log.log(level, "agent center inside an obstacle or behind a wall at %s; clamping distance", points)

N_ACTIONS = 8
STEP_REWARD = -0.1
EXIT_REWARD = 0.0
MAX_STEPS = 10_000
INSIDE_CLAMP = 1e-6

_angles = np.arange(N_ACTIONS) * (np.pi / 4)
ACTION_VECTORS = np.stack([np.cos(_angles), np.sin(_angles)], axis=1)
ACTION_VECTORS[np.abs(ACTION_VECTORS) < 1e-15] = 0.0
ACTION_VECTORS.setflags(write=False)


class IntegrationError(FloatingPointError):
    """Raised when the state becomes non-finite or a force is undefined."""


@dataclass(frozen=True)
class PhysicsParams:
    A: float = 100.0
    B: float = 0.08
    k: float = 8.0e4
    tau: float = 0.5
    dt: float = 0.1
    agent_diameter: float = AGENT_DIAMETER
    agent_mass: float = 80.0
    desired_speed: float = 2.0
    max_steps: int = MAX_STEPS
    contact_dt: float = 0.02

    def __post_init__(self):
        for name in ("A", "B", "k", "tau", "dt", "agent_diameter", "agent_mass", "desired_speed", "contact_dt"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if self.dt > self.tau:
            raise ValueError(f"dt={self.dt} exceeds tau={self.tau}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class AgentState:
    position: Vec2
    velocity: Vec2 = Vec2(0.0, 0.0)
    mass: float = 80.0
    diameter: float = AGENT_DIAMETER
    desired_speed: float = 2.0
    evacuated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", Vec2(float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "velocity", Vec2(float(self.velocity[0]), float(self.velocity[1])))
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.diameter > 0:
            raise ValueError("diameter must be positive")
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError("position must be finite")

    @classmethod
    def at_rest(cls, position: Sequence[float], params: PhysicsParams) -> "AgentState":
        return cls(Vec2(*position), Vec2(0.0, 0.0), params.agent_mass, params.agent_diameter, params.desired_speed)


@dataclass(frozen=True)
class StepOutcome:
    next_state: AgentState
    reward: float
    done: bool


@dataclass
class Crowd:
    """Structure-of-arrays state for N agents."""

    pos: np.ndarray
    vel: np.ndarray
    mass: np.ndarray
    diameter: np.ndarray
    desired_speed: np.ndarray
    evacuated: np.ndarray = field(default=None)

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 2)
        n = len(self.pos)
        self.vel = np.asarray(self.vel, dtype=float).reshape(n, 2)
        self.mass = np.broadcast_to(np.asarray(self.mass, dtype=float), (n,)).copy()
        self.diameter = np.broadcast_to(np.asarray(self.diameter, dtype=float), (n,)).copy()
        self.desired_speed = np.broadcast_to(np.asarray(self.desired_speed, dtype=float), (n,)).copy()
        if self.evacuated is None:
            self.evacuated = np.zeros(n, dtype=bool)
        self.evacuated = np.asarray(self.evacuated, dtype=bool).reshape(n).copy()

    def __len__(self) -> int:
        return len(self.pos)

    @classmethod
    def at_rest(cls, positions: np.ndarray, params: PhysicsParams, mass=None, desired_speed=None) -> "Crowd":
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        return cls(
            positions,
            np.zeros_like(positions),
            params.agent_mass if mass is None else mass,
            params.agent_diameter,
            params.desired_speed if desired_speed is None else desired_speed,
        )

    @classmethod
    def from_agents(cls, agents: Iterable[AgentState]) -> "Crowd":
        agents = list(agents)
        return cls(
            np.array([a.position for a in agents], dtype=float).reshape(-1, 2),
            np.array([a.velocity for a in agents], dtype=float).reshape(-1, 2),
            [a.mass for a in agents],
            [a.diameter for a in agents],
            [a.desired_speed for a in agents],
            [a.evacuated for a in agents],
        )

    def agent(self, i: int) -> AgentState:
        return AgentState(
            Vec2(*self.pos[i]), Vec2(*self.vel[i]), float(self.mass[i]),
            float(self.diameter[i]), float(self.desired_speed[i]), bool(self.evacuated[i]),
        )

    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(len(self))]

    def copy(self) -> "Crowd":
        return Crowd(self.pos.copy(), self.vel.copy(), self.mass, self.diameter, self.desired_speed, self.evacuated)


def action_unit_vector(a: int) -> Vec2:
    if not 0 <= int(a) < N_ACTIONS:
        raise ValueError(f"action index must be in [0, 7], got {a}")
    return Vec2(*ACTION_VECTORS[int(a)])


def self_driven_force(agent: AgentState, a: int, p: PhysicsParams) -> Vec2:
    e = action_unit_vector(a)
    scale = agent.mass / p.tau * agent.desired_speed
    return Vec2(scale * e.x, scale * e.y)


def viscous_force(agent: AgentState, p: PhysicsParams) -> Vec2:
    c = agent.mass / p.tau
    return Vec2(-c * agent.velocity.x, -c * agent.velocity.y)


def agent_pair_force(i: AgentState, j: AgentState, p: PhysicsParams) -> Vec2:
    """Force exerted on agent ``i`` by agent ``j``."""
    diff = np.subtract(i.position, j.position)
    r = float(np.hypot(*diff))
    if r == 0.0:
        raise IntegrationError("coincident agent positions; pair direction undefined")
    n = diff / r
    t = np.array([-n[1], n[0]])
    d = (i.diameter + j.diameter) / 2
    overlap = max(d - r, 0.0)
    dv = np.subtract(j.velocity, i.velocity)
    f = (p.A * math.exp((d - r) / p.B) + p.k * overlap) * n + p.k * overlap * float(dv @ t) * t
    return Vec2(*f)


def obstacle_force(agent: AgentState, scenario: Scenario, p: PhysicsParams) -> Vec2:
    """Summed wall and obstacle force on a single agent."""
    c = _contacts(np.asarray(agent.position, float)[None], np.array([agent.diameter]), scenario, p)
    return Vec2(*(c.static + _friction(c, np.asarray(agent.velocity, float)[None]))[0])


@dataclass
class _Contacts:
    """Position-dependent part of the force field at one configuration.

    ``static`` holds the avoidance and compression forces. Friction is kept
    as per-contact coefficients k*overlap and unit tangents so that it can be
    evaluated for any velocity, or folded into the implicit closing kick.
    """

    static: np.ndarray
    pair_kov: np.ndarray | None = None
    pair_t: np.ndarray | None = None
    wall_kov: np.ndarray | None = None
    wall_t: np.ndarray | None = None

    @property
    def touching(self) -> bool:
        return self.pair_kov is not None or self.wall_kov is not None


def _contacts(pos, diameter, scenario, p) -> _Contacts:
    n = len(pos)
    radius = diameter / 2
    static = np.zeros((n, 2))
    out = _Contacts(static)
    if n > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(r, np.inf)
        if np.any(r == 0.0):
            raise IntegrationError("coincident agent positions; pair direction undefined")
        nhat = diff / r[..., None]
        dij = (diameter[:, None] + diameter[None, :]) / 2
        gap = dij - r
        overlap = np.maximum(gap, 0.0)
        mag = p.A * np.exp(gap / p.B) + p.k * overlap
        static += np.einsum("ij,ijc->ic", mag, nhat)
        if overlap.any():
            out.pair_kov = p.k * overlap
            out.pair_t = np.stack([-nhat[..., 1], nhat[..., 0]], axis=-1)

    dist, normal, inside = scenario.surface_contacts(pos)
    if inside.any():
        _report_inside(pos[np.any(inside, axis=1)].tolist())
        dist = np.where(inside, INSIDE_CLAMP, dist)
    gap = radius[:, None] - dist
    overlap = np.maximum(gap, 0.0)
    static += np.einsum("nk,nkc->nc", p.A * np.exp(gap / p.B) + p.k * overlap, normal)
    if overlap.any():
        out.wall_kov = p.k * overlap
        out.wall_t = np.stack([-normal[..., 1], normal[..., 0]], axis=-1)
    return out


def _friction(c: _Contacts, vel: np.ndarray) -> np.ndarray:
    f = np.zeros_like(vel)
    if c.pair_kov is not None:
        dv = vel[None, :, :] - vel[:, None, :]
        vt = np.einsum("ijc,ijc->ij", dv, c.pair_t)
        f += np.einsum("ij,ijc->ic", c.pair_kov * vt, c.pair_t)
    if c.wall_kov is not None:
        vt = np.einsum("nc,nkc->nk", vel, c.wall_t)
        f -= np.einsum("nk,nkc->nc", c.wall_kov * vt, c.wall_t)
    return f


def _accel(c: _Contacts, vel, drive_force, mass, tau) -> np.ndarray:
    total = drive_force + c.static + _friction(c, vel) - (mass / tau)[:, None] * vel
    return total / mass[:, None]


def _implicit_kick(c: _Contacts, v_half, drive_force, mass, tau, h) -> np.ndarray:
    """Solve v = v_half + h a(r_new, v) for v.

    Viscous drag and each agent's own friction terms are linear in its
    velocity, giving a 2x2 system per agent. The neighbour velocity in pair
    friction is taken at the half step.
    """
    rhs = drive_force + c.static
    mxx = np.full(len(mass), 1.0 / tau)
    myy = mxx.copy()
    mxy = np.zeros(len(mass))
    if c.pair_kov is not None:
        t = c.pair_t
        vt_nb = np.einsum("ijc,jc->ij", t, v_half)
        rhs = rhs + np.einsum("ij,ijc->ic", c.pair_kov * vt_nb, t)
        kov = c.pair_kov / mass[:, None]
        mxx += np.sum(kov * t[..., 0] ** 2, axis=1)
        myy += np.sum(kov * t[..., 1] ** 2, axis=1)
        mxy += np.sum(kov * t[..., 0] * t[..., 1], axis=1)
    if c.wall_kov is not None:
        t = c.wall_t
        kov = c.wall_kov / mass[:, None]
        mxx += np.sum(kov * t[..., 0] ** 2, axis=1)
        myy += np.sum(kov * t[..., 1] ** 2, axis=1)
        mxy += np.sum(kov * t[..., 0] * t[..., 1], axis=1)
    bx = v_half[:, 0] + h * rhs[:, 0] / mass
    by = v_half[:, 1] + h * rhs[:, 1] / mass
    a11, a22, a12 = 1.0 + h * mxx, 1.0 + h * myy, h * mxy
    det = a11 * a22 - a12 * a12
    return np.stack([(a22 * bx - a12 * by) / det, (a11 * by - a12 * bx) / det], axis=1)


def drive_directions(actions) -> np.ndarray:
    """Unit self-driven directions from action indices (N,) or vectors (N, 2)."""
    arr = np.asarray(actions)
    if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
        if arr.size and (arr.min() < 0 or arr.max() >= N_ACTIONS):
            raise ValueError("action index out of range")
        return ACTION_VECTORS[arr]
    return np.asarray(arr, dtype=float).reshape(-1, 2)


def accelerations(crowd: Crowd, actions, scenario: Scenario, p: PhysicsParams) -> np.ndarray:
    """Newton acceleration (N, 2) of every agent; zero for evacuated ones."""
    act = ~crowd.evacuated
    out = np.zeros_like(crowd.vel)
    if not act.any():
        return out
    dirs = drive_directions(actions)[act]
    m = crowd.mass[act]
    drive = (m / p.tau * crowd.desired_speed[act])[:, None] * dirs
    c = _contacts(crowd.pos[act], crowd.diameter[act], scenario, p)
    out[act] = _accel(c, crowd.vel[act], drive, m, p.tau)
    return out


def total_acceleration(i: int, crowd: Crowd, actions, scenario: Scenario, p: PhysicsParams) -> Vec2:
    return Vec2(*accelerations(crowd, actions, scenario, p)[i])


def _kdk(pos, vel, c0, drive, m, diam, scenario, p, dt):
    h = dt / 2
    v_half = vel + _accel(c0, vel, drive, m, p.tau) * h
    pos_new = pos + v_half * dt
    if not np.all(np.isfinite(pos_new)):
        raise IntegrationError("non-finite position after drift")
    c1 = _contacts(pos_new, diam, scenario, p)
    vel_new = _implicit_kick(c1, v_half, drive, m, p.tau, h)
    if not np.all(np.isfinite(vel_new)):
        raise IntegrationError("non-finite velocity after kick")
    return pos_new, vel_new, c1


def leapfrog_step(crowd: Crowd, actions, scenario: Scenario, p: PhysicsParams) -> Crowd:
    """Advance every active agent by one ``p.dt``; returns a new Crowd.

    ``actions`` holds one action index or one unit direction per agent (rows
    of evacuated agents are ignored).

    Kick-drift-kick: v(t+dt/2) = v + a(t) dt/2, r(t+dt) = r + v(t+dt/2) dt,
    v(t+dt) = v(t+dt/2) + a(t+dt) dt/2. The closing acceleration is taken at
    the new positions and the new velocity, which is a linear solve because
    drag and friction are linear in velocity. If any body contact (overlap)
    exists at the start or end of the step, the step is redone as
    ceil(dt / contact_dt) equal substeps to keep the stiff contact spring
    resolved.

    Agents whose new position lies inside an exit region are marked
    evacuated and frozen from then on.
    """
    out = crowd.copy()
    act = ~crowd.evacuated
    if not act.any():
        return out
    dirs = drive_directions(actions)[act]
    m = crowd.mass[act]
    diam = crowd.diameter[act]
    drive = (m / p.tau * crowd.desired_speed[act])[:, None] * dirs
    pos, vel = crowd.pos[act], crowd.vel[act]

    c0 = _contacts(pos, diam, scenario, p)
    n_sub = math.ceil(p.dt / p.contact_dt - 1e-9)
    if n_sub > 1 and c0.touching:
        c1 = None  # substeps are certain, skip the trial full step
    else:
        pos_new, vel_new, c1 = _kdk(pos, vel, c0, drive, m, diam, scenario, p, p.dt)
    if n_sub > 1 and (c1 is None or c1.touching):
        pos_new, vel_new, c = pos, vel, c0
        for _ in range(n_sub):
            pos_new, vel_new, c = _kdk(pos_new, vel_new, c, drive, m, diam, scenario, p, p.dt / n_sub)

    out.pos[act] = pos_new
    out.vel[act] = vel_new
    out.evacuated[act] = evacuated_mask(scenario, pos_new, diam)
    return out


def env_step(state: AgentState, a: int, scenario: Scenario, p: PhysicsParams, step_count: int) -> StepOutcome:
    """One MDP transition for a lone agent: -0.1 per step, 0 on reaching an exit.

    The episode ends on evacuation or when ``step_count + 1`` reaches the
    step cap.
    """
    if state.evacuated:
        raise ValueError("state is already terminal")
    if not 0 <= int(a) < N_ACTIONS:
        raise ValueError(f"action index must be in [0, 7], got {a}")
    nxt = leapfrog_step(Crowd.from_agents([state]), np.array([int(a)]), scenario, p).agent(0)
    reward = EXIT_REWARD if nxt.evacuated else STEP_REWARD
    done = nxt.evacuated or step_count + 1 >= p.max_steps
    return StepOutcome(nxt, reward, done)


class _SurfaceTable:
    """Plain-float copy of a scenario's surfaces for the scalar stepper."""

    def __init__(self, scenario: Scenario):
        segs, ids = scenario.wall_segments
        self.walls = []
        for wall in range(4):
            pieces = [tuple(map(float, segs[j].ravel())) for j in np.flatnonzero(ids == wall)]
            self.walls.append((pieces, tuple(map(float, scenario.inward_normals[wall]))))
        self.obstacles = []
        for ob in scenario.obstacles:
            if hasattr(ob, "diameter"):
                self.obstacles.append(("c", (ob.center[0], ob.center[1], ob.diameter / 2)))
            else:
                pieces = [tuple(map(float, s.ravel())) for s in ob.segments]
                self.obstacles.append(("s", (pieces, ob.thickness / 2)))


def _foot(px, py, ax, ay, bx, by):
    abx, aby = bx - ax, by - ay
    den = abx * abx + aby * aby
    t = ((px - ax) * abx + (py - ay) * aby) / den if den > 0 else 0.0
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    fx, fy = ax + t * abx, ay + t * aby
    return fx, fy, math.hypot(px - fx, py - fy)


def _nearest(x, y, pieces):
    best = None
    for seg in pieces:
        f = _foot(x, y, *seg)
        if best is None or f[2] < best[2]:
            best = f
    return best


class SingleAgentEnv:
    """Scalar single-agent environment used by the trainer.

    Same force laws and integrator as :func:`leapfrog_step` specialised to
    one agent in plain floats, roughly 7x faster than the array path for
    N = 1. Semantics match :func:`env_step`.
    """

    def __init__(self, scenario: Scenario, params: PhysicsParams):
        self.scenario = scenario
        self.params = params
        self._tab = _SurfaceTable(scenario)
        radii = (params.agent_diameter + scenario.exit_widths) / 2
        self._exits = [(float(c[0]), float(c[1]), float(r)) for c, r in zip(scenario.exit_centers, radii)]
        self._n_sub = math.ceil(params.dt / params.contact_dt - 1e-9)
        self.state = [0.0, 0.0, 0.0, 0.0]
        self.steps = 0
        self.evacuated = False

    def reset(self, position: Sequence[float], velocity: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
        self.state = [float(position[0]), float(position[1]), float(velocity[0]), float(velocity[1])]
        self.steps = 0
        self.evacuated = False
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.array(self.state)

    def _contact_terms(self, x, y):
        """Static force and [(k*overlap/m, tx, ty)] friction entries at (x, y)."""
        p = self.params
        A, B, k = p.A, p.B, p.k
        rad = p.agent_diameter / 2
        sx = sy = 0.0
        fric = []
        surfaces = []
        for pieces, (inx, iny) in self._tab.walls:
            if not pieces:
                continue
            fx, fy, d = _nearest(x, y, pieces)
            dx, dy = x - fx, y - fy
            behind = dx * inx + dy * iny < 0
            if behind or d == 0.0:
                surfaces.append((d, inx, iny, behind))
            else:
                surfaces.append((d, dx / d, dy / d, False))
        for kind, data in self._tab.obstacles:
            if kind == "c":
                cx, cy, R = data
                dx, dy = x - cx, y - cy
                rc = math.hypot(dx, dy)
                nx, ny = (dx / rc, dy / rc) if rc > 0 else (1.0, 0.0)
                surfaces.append((abs(rc - R), nx, ny, rc < R))
            else:
                pieces, half = data
                fx, fy, d = _nearest(x, y, pieces)
                nx, ny = ((x - fx) / d, (y - fy) / d) if d > 0 else (1.0, 0.0)
                surfaces.append((abs(d - half), nx, ny, d < half))
        for dist, nx, ny, inside in surfaces:
            if inside:
                _report_inside([[x, y]])
                dist = INSIDE_CLAMP
            gap = rad - dist
            ov = gap if gap > 0.0 else 0.0
            mag = A * math.exp(gap / B) + k * ov
            sx += mag * nx
            sy += mag * ny
            if ov > 0.0:
                fric.append((k * ov / p.agent_mass, -ny, nx))
        return sx, sy, fric

    def _kdk(self, x, y, vx, vy, st, dfx, dfy, dt):
        p = self.params
        m, tau = p.agent_mass, p.tau
        h = dt / 2
        sx, sy, fric = st
        ax = (dfx + sx) / m - vx / tau
        ay = (dfy + sy) / m - vy / tau
        for c, tx, ty in fric:
            vt = vx * tx + vy * ty
            ax -= c * vt * tx
            ay -= c * vt * ty
        hx, hy = vx + ax * h, vy + ay * h
        x, y = x + hx * dt, y + hy * dt
        st = self._contact_terms(x, y)
        sx, sy, fric = st
        mxx = myy = 1.0 / tau
        mxy = 0.0
        for c, tx, ty in fric:
            mxx += c * tx * tx
            myy += c * ty * ty
            mxy += c * tx * ty
        bx = hx + h * (dfx + sx) / m
        by = hy + h * (dfy + sy) / m
        a11, a22, a12 = 1.0 + h * mxx, 1.0 + h * myy, h * mxy
        det = a11 * a22 - a12 * a12
        return x, y, (a22 * bx - a12 * by) / det, (a11 * by - a12 * bx) / det, st

    def step(self, a: int) -> tuple[np.ndarray, float, bool, bool]:
        """Advance one dt under action ``a``; returns (raw state, reward, evacuated, done)."""
        if self.evacuated:
            raise ValueError("episode already terminated")
        p = self.params
        drive = p.agent_mass / p.tau * p.desired_speed
        ex, ey = ACTION_VECTORS[a]
        dfx, dfy = drive * float(ex), drive * float(ey)
        x0, y0, vx0, vy0 = self.state

        st0 = self._contact_terms(x0, y0)
        x, y, vx, vy, st1 = self._kdk(x0, y0, vx0, vy0, st0, dfx, dfy, p.dt)
        if self._n_sub > 1 and (st0[2] or st1[2]):
            x, y, vx, vy, st = x0, y0, vx0, vy0, st0
            for _ in range(self._n_sub):
                x, y, vx, vy, st = self._kdk(x, y, vx, vy, st, dfx, dfy, p.dt / self._n_sub)
        if not all(math.isfinite(v) for v in (x, y, vx, vy)):
            raise IntegrationError("non-finite single-agent state")

        self.state = [x, y, vx, vy]
        self.steps += 1
        evac = any(math.hypot(x - cx, y - cy) < r for cx, cy, r in self._exits)
        self.evacuated = evac
        done = evac or self.steps >= p.max_steps
        return self.observation(), (EXIT_REWARD if evac else STEP_REWARD), evac, done


TRAJECTORY_HEADER = ("step", "agent_id", "x", "y", "vx", "vy", "evacuated")


def trajectory_rows(step: int, crowd: Crowd):
    for i in range(len(crowd)):
        yield (step, i, repr(float(crowd.pos[i, 0])), repr(float(crowd.pos[i, 1])),
               repr(float(crowd.vel[i, 0])), repr(float(crowd.vel[i, 1])), int(crowd.evacuated[i]))


def write_trajectory_csv(path: str | Path, frames: Iterable[tuple[int, Crowd]]) -> None:
    """Write ``(step, crowd)`` frames as one row per agent per step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for step, crowd in frames:
            w.writerows(trajectory_rows(step, crowd))
