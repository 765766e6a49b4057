"""Room geometry: walls with exit gaps, obstacles, and the distance queries
used by the force laws and exit detection.

All lengths are in meters. Walls are indexed bottom, right, top, left and
that order is the tie-break for equidistant wall points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

AGENT_DIAMETER = 0.5
WALL_NAMES = ("bottom", "right", "top", "left")
_ON_WALL_TOL = 1e-9


class ScenarioError(ValueError):
    """Raised for malformed scenario files or violated scenario invariants."""


class PlacementError(RuntimeError):
    """Raised when agents cannot be placed without overlap."""


class Vec2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Exit:
    center: Vec2
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", Vec2(float(self.center[0]), float(self.center[1])))
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ScenarioError(f"exit width must be > 0, got {self.width}")


@dataclass(frozen=True)
class Circle:
    center: Vec2
    diameter: float

    def __post_init__(self):
        object.__setattr__(self, "center", Vec2(float(self.center[0]), float(self.center[1])))
        if not self.diameter > 0:
            raise ScenarioError(f"circle diameter must be > 0, got {self.diameter}")


@dataclass(frozen=True)
class SegmentChain:
    """Open polyline with a solid band of ``thickness`` around it."""

    vertices: tuple[Vec2, ...]
    thickness: float = 0.0

    def __post_init__(self):
        verts = tuple(Vec2(float(v[0]), float(v[1])) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 2:
            raise ScenarioError("segment chain needs at least 2 vertices")
        if not self.thickness >= 0:
            raise ScenarioError(f"chain thickness must be >= 0, got {self.thickness}")

    @property
    def segments(self) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=float)
        return np.stack([v[:-1], v[1:]], axis=1)


Obstacle = Circle | SegmentChain


def _project_onto_segments(p: np.ndarray, seg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Feet of perpendiculars from points ``p`` (N, 2) onto segments (S, 2, 2).

    Returns feet (N, S, 2) and distances (N, S).
    """
    a = seg[:, 0, :][None]
    ab = (seg[:, 1, :] - seg[:, 0, :])[None]
    ap = p[:, None, :] - a
    denom = np.einsum("nsk,nsk->ns", ab, ab)
    t = np.einsum("nsk,nsk->ns", ap, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    feet = a + t[..., None] * ab
    d = p[:, None, :] - feet
    return feet, np.hypot(d[..., 0], d[..., 1])


@dataclass(frozen=True, eq=False)
class Scenario:
    room_size: tuple[float, float]
    exits: tuple[Exit, ...]
    obstacles: tuple[Obstacle, ...] = ()
    name: str = "scenario"
    exit_walls: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        w, h = (float(s) for s in self.room_size)
        object.__setattr__(self, "room_size", (w, h))
        object.__setattr__(self, "exits", tuple(self.exits))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not (w > 0 and h > 0):
            raise ScenarioError(f"room_size must be positive, got {self.room_size}")
        if not self.exits:
            raise ScenarioError("scenario needs at least one exit")
        walls = []
        for k, ex in enumerate(self.exits):
            wall = _wall_of(ex.center, w, h)
            if wall is None:
                raise ScenarioError(f"exits[{k}].center {tuple(ex.center)} is not on the room boundary")
            walls.append(wall)
        object.__setattr__(self, "exit_walls", tuple(walls))
        for k, ob in enumerate(self.obstacles):
            if not _obstacle_inside(ob, w, h):
                raise ScenarioError(f"obstacles[{k}] is not strictly inside the room")

    @property
    def width(self) -> float:
        return self.room_size[0]

    @property
    def height(self) -> float:
        return self.room_size[1]

    @cached_property
    def exit_centers(self) -> np.ndarray:
        return np.array([ex.center for ex in self.exits], dtype=float)

    @cached_property
    def exit_widths(self) -> np.ndarray:
        return np.array([ex.width for ex in self.exits], dtype=float)

    @cached_property
    def wall_segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Wall pieces left after cutting out exit gaps.

        Returns segments (S, 2, 2) and the wall index of each segment.
        """
        w, h = self.room_size
        corners = [((0, 0), (w, 0)), ((w, 0), (w, h)), ((w, h), (0, h)), ((0, h), (0, 0))]
        segs, ids = [], []
        for wall, (a, b) in enumerate(corners):
            a, b = np.asarray(a, float), np.asarray(b, float)
            length = np.linalg.norm(b - a)
            u = (b - a) / length
            gaps = []
            for ex, ew in zip(self.exits, self.exit_walls):
                if ew == wall:
                    s = float(np.dot(np.asarray(ex.center) - a, u))
                    gaps.append((s - ex.width / 2, s + ex.width / 2))
            start = 0.0
            for lo, hi in sorted(gaps):
                if lo > start:
                    segs.append((a + start * u, a + lo * u))
                    ids.append(wall)
                start = max(start, hi)
            if start < length:
                segs.append((a + start * u, b))
                ids.append(wall)
        return np.array(segs, dtype=float).reshape(-1, 2, 2), np.array(ids, dtype=int)

    @cached_property
    def inward_normals(self) -> np.ndarray:
        return np.array([(0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 0.0)])

    @property
    def n_surfaces(self) -> int:
        return 4 + len(self.obstacles)

    def surface_contacts(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-surface contact geometry for agent centers ``pos`` (N, 2).

        Surfaces are the four walls followed by the obstacles. For each agent
        and surface returns the distance to the surface (N, K), the unit
        normal pointing from the surface toward the agent (N, K, 2), and a
        mask (N, K) flagging agents whose center is inside the body (or
        behind the wall line). Distances are inf for walls that are entirely
        exit gap.
        """
        pos = np.atleast_2d(np.asarray(pos, dtype=float))
        n = pos.shape[0]
        k = self.n_surfaces
        dist = np.full((n, k), np.inf)
        normal = np.zeros((n, k, 2))
        normal[..., 0] = 1.0
        inside = np.zeros((n, k), dtype=bool)

        segs, ids = self.wall_segments
        if len(segs):
            feet, d = _project_onto_segments(pos, segs)
            for wall in range(4):
                cols = np.flatnonzero(ids == wall)
                if cols.size == 0:
                    continue
                j = cols[np.argmin(d[:, cols], axis=1)]
                rows = np.arange(n)
                dw = d[rows, j]
                diff = pos - feet[rows, j]
                inward = self.inward_normals[wall]
                behind = diff @ inward < 0
                safe = np.where(dw > 0, dw, 1.0)[:, None]
                nrm = np.where((dw > 0)[:, None], diff / safe, inward)
                nrm[behind] = inward
                dist[:, wall] = dw
                normal[:, wall] = nrm
                inside[:, wall] = behind

        for m, ob in enumerate(self.obstacles):
            col = 4 + m
            if isinstance(ob, Circle):
                c = np.asarray(ob.center)
                diff = pos - c
                rc = np.hypot(diff[:, 0], diff[:, 1])
                radius = ob.diameter / 2
                safe = np.where(rc > 0, rc, 1.0)[:, None]
                nrm = np.where((rc > 0)[:, None], diff / safe, np.array([1.0, 0.0]))
                dist[:, col] = np.abs(rc - radius)
                normal[:, col] = nrm
                inside[:, col] = rc < radius
            else:
                feet, d = _project_onto_segments(pos, ob.segments)
                j = np.argmin(d, axis=1)
                rows = np.arange(n)
                dp = d[rows, j]
                diff = pos - feet[rows, j]
                safe = np.where(dp > 0, dp, 1.0)[:, None]
                nrm = np.where((dp > 0)[:, None], diff / safe, np.array([1.0, 0.0]))
                half = ob.thickness / 2
                dist[:, col] = np.abs(dp - half)
                normal[:, col] = nrm
                inside[:, col] = dp < half
        return dist, normal, inside


def _wall_of(c: Vec2, w: float, h: float) -> int | None:
    x, y = c
    if not (-_ON_WALL_TOL <= x <= w + _ON_WALL_TOL and -_ON_WALL_TOL <= y <= h + _ON_WALL_TOL):
        return None
    if abs(y) <= _ON_WALL_TOL:
        return 0
    if abs(x - w) <= _ON_WALL_TOL:
        return 1
    if abs(y - h) <= _ON_WALL_TOL:
        return 2
    if abs(x) <= _ON_WALL_TOL:
        return 3
    return None


def _obstacle_inside(ob: Obstacle, w: float, h: float) -> bool:
    if isinstance(ob, Circle):
        r = ob.diameter / 2
        x, y = ob.center
        return r < x < w - r and r < y < h - r
    half = ob.thickness / 2
    return all(half < x < w - half and half < y < h - half for x, y in ob.vertices)


def nearest_obstacle_point(obstacle: Obstacle, p: Sequence[float]) -> tuple[Vec2, float]:
    """Closest point on the obstacle surface and the distance to it.

    A point at a circle's center resolves to the boundary point in the +x
    direction.
    """
    p = np.asarray(p, dtype=float)
    if isinstance(obstacle, Circle):
        c = np.asarray(obstacle.center)
        diff = p - c
        rc = float(np.hypot(*diff))
        u = diff / rc if rc > 0 else np.array([1.0, 0.0])
        point = c + u * obstacle.diameter / 2
    else:
        feet, d = _project_onto_segments(p[None], obstacle.segments)
        j = int(np.argmin(d[0]))
        foot = feet[0, j]
        diff = p - foot
        dp = float(d[0, j])
        if dp > 0:
            u = diff / dp
        else:
            seg = obstacle.segments[j]
            t = seg[1] - seg[0]
            u = np.array([-t[1], t[0]]) / np.hypot(*t)
        point = foot + u * obstacle.thickness / 2
    return Vec2(*point), float(np.hypot(*(p - point)))


def nearest_wall_point(scenario: Scenario, p: Sequence[float]) -> tuple[Vec2, float]:
    """Closest point on any wall piece; exit gaps are not wall."""
    p = np.asarray(p, dtype=float)
    segs, _ = scenario.wall_segments
    feet, d = _project_onto_segments(p[None], segs)
    j = int(np.argmin(d[0]))
    return Vec2(*feet[0, j]), float(d[0, j])


def exit_radii(scenario: Scenario, agent_diameter: float = AGENT_DIAMETER) -> np.ndarray:
    return (agent_diameter + scenario.exit_widths) / 2


def evacuated_mask(scenario: Scenario, pos: np.ndarray, agent_diameter=AGENT_DIAMETER) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    diff = pos[:, None, :] - scenario.exit_centers[None]
    d = np.hypot(diff[..., 0], diff[..., 1])
    radii = (np.asarray(agent_diameter, dtype=float).reshape(-1, 1) + scenario.exit_widths[None]) / 2
    return np.any(d < radii, axis=1)


def is_evacuated(scenario: Scenario, p: Sequence[float], agent_diameter: float = AGENT_DIAMETER) -> bool:
    """True when the agent center is inside any exit's effective region."""
    return bool(evacuated_mask(scenario, np.asarray(p, dtype=float)[None], agent_diameter)[0])


def free_area(scenario: Scenario) -> float:
    area = scenario.width * scenario.height
    for ob in scenario.obstacles:
        if isinstance(ob, Circle):
            area -= math.pi * ob.diameter**2 / 4
        else:
            length = float(np.sum(np.linalg.norm(np.diff(np.asarray(ob.vertices), axis=0), axis=1)))
            area -= length * ob.thickness
    return area


def sample_initial_positions(
    scenario: Scenario,
    n: int,
    rng_seed: int | np.random.Generator,
    agent_diameter: float = AGENT_DIAMETER,
    max_attempts: int | None = None,
) -> np.ndarray:
    """Uniform non-overlapping agent centers by random sequential addition.

    Candidates closer than one radius to a wall or obstacle, inside an exit
    region, or closer than one diameter to an accepted agent are rejected.
    Returns an (n, 2) array.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    r = agent_diameter / 2
    if n * math.pi * r * r > free_area(scenario):
        raise PlacementError(f"insufficient space for {n} agents of diameter {agent_diameter} m")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if max_attempts is None:
        max_attempts = 2000 * max(n, 1) + 10_000
    w, h = scenario.room_size
    out = np.empty((n, 2))
    count = 0
    attempts = 0
    while count < n:
        if attempts >= max_attempts:
            raise PlacementError(f"placed only {count} of {n} agents after {attempts} attempts; insufficient space")
        attempts += 1
        c = np.array([rng.uniform(r, w - r), rng.uniform(r, h - r)])
        if count and np.min(np.hypot(*(out[:count] - c).T)) < agent_diameter:
            continue
        if evacuated_mask(scenario, c[None], agent_diameter)[0]:
            continue
        if scenario.obstacles:
            dist, _, inside = scenario.surface_contacts(c[None])
            if np.any(inside[0, 4:]) or np.any(dist[0, 4:] < r):
                continue
        out[count] = c
        count += 1
    return out


def _field(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioError(f"{where}: missing field '{key}'")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ScenarioError(f"{where}.{key}: expected {kind.__name__ if isinstance(kind, type) else kind}")
    return val


def _vec(val, where) -> Vec2:
    if not (isinstance(val, (list, tuple)) and len(val) == 2 and all(isinstance(x, (int, float)) for x in val)):
        raise ScenarioError(f"{where}: expected [x, y] numbers")
    if not all(math.isfinite(x) for x in val):
        raise ScenarioError(f"{where}: non-finite coordinate")
    return Vec2(float(val[0]), float(val[1]))


def scenario_from_dict(data: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    room = _field(data, "room", source, list)
    if len(room) != 2:
        raise ScenarioError(f"{source}: room: expected [w, h]")
    exits = []
    for k, e in enumerate(_field(data, "exits", source, list)):
        where = f"{source}: exits[{k}]"
        width = _field(e, "width", where, (int, float))
        try:
            exits.append(Exit(_vec(_field(e, "center", where), f"{where}.center"), float(width)))
        except ScenarioError as err:
            raise ScenarioError(f"{where}: {err}") from None
    obstacles: list[Obstacle] = []
    for k, o in enumerate(data.get("obstacles", [])):
        where = f"{source}: obstacles[{k}]"
        try:
            if isinstance(o, dict) and "circle" in o:
                c = o["circle"]
                obstacles.append(Circle(_vec(_field(c, "center", where), f"{where}.circle.center"),
                                        float(_field(c, "diameter", where, (int, float)))))
            elif isinstance(o, dict) and "chain" in o:
                c = o["chain"]
                verts = [_vec(v, f"{where}.chain.vertices") for v in _field(c, "vertices", where, list)]
                obstacles.append(SegmentChain(tuple(verts), float(c.get("thickness", 0.0))))
            else:
                raise ScenarioError("expected a 'circle' or 'chain' entry")
        except ScenarioError as err:
            raise ScenarioError(f"{where}: {err}") from None
    name = data.get("name", Path(source).stem)
    try:
        return Scenario((float(room[0]), float(room[1])), tuple(exits), tuple(obstacles), str(name))
    except ScenarioError as err:
        raise ScenarioError(f"{source}: {err}") from None


def scenario_to_dict(s: Scenario) -> dict:
    obstacles = []
    for ob in s.obstacles:
        if isinstance(ob, Circle):
            obstacles.append({"circle": {"center": list(ob.center), "diameter": ob.diameter}})
        else:
            obstacles.append({"chain": {"vertices": [list(v) for v in ob.vertices], "thickness": ob.thickness}})
    return {
        "name": s.name,
        "room": list(s.room_size),
        "exits": [{"center": list(e.center), "width": e.width} for e in s.exits],
        "obstacles": obstacles,
    }


def load_scenario(path: str | Path) -> Scenario:
    """Parse a scenario file. A bare name like ``one_exit.json`` that does not
    exist on disk falls back to the bundled scenarios."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("evacnet") / "scenarios" / p.name
        if p.parent == Path(".") and bundled.is_file():
            text = bundled.read_text()
        else:
            raise FileNotFoundError(f"scenario file not found: {path}")
    else:
        text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    return scenario_from_dict(data, str(path))


def bundled_scenarios() -> list[str]:
    root = resources.files("evacnet") / "scenarios"
    return sorted(f.name for f in root.iterdir() if f.name.endswith(".json"))
