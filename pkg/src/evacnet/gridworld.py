"""Discretised room used by the value-iteration oracle and tabular Dyna-Q.

Cells are squares of side ``spacing``; a move is one of the 8 compass steps
(same ordering as the continuous actions), blocked moves leave the agent in
place, every step costs -0.1 and entering an exit cell ends the episode with
reward 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import AGENT_DIAMETER, Scenario, evacuated_mask
from .physics import ACTION_VECTORS, N_ACTIONS, STEP_REWARD, EXIT_REWARD

MOVES = np.rint(ACTION_VECTORS).astype(int)


@dataclass(frozen=True)
class GridModel:
    nx: int
    ny: int
    spacing: float
    blocked: np.ndarray      # (nx, ny) bool
    exit_cells: np.ndarray   # (nx, ny) bool
    next_cell: np.ndarray    # (n_cells, 8) int, flat index i * ny + j
    reward: np.ndarray       # (n_cells, 8)
    terminal: np.ndarray     # (n_cells,) bool, exit cells

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def index(self, i: int, j: int) -> int:
        return i * self.ny + j

    def center(self, idx: int) -> tuple[float, float]:
        i, j = divmod(idx, self.ny)
        return (i + 0.5) * self.spacing, (j + 0.5) * self.spacing

    def free_cells(self) -> np.ndarray:
        """Flat indices of non-blocked, non-exit cells."""
        return np.flatnonzero(~self.blocked.ravel() & ~self.exit_cells.ravel())

    def reachable(self) -> np.ndarray:
        """Mask of cells from which some exit cell can be reached."""
        n = self.n_cells
        preds: list[list[int]] = [[] for _ in range(n)]
        for s in range(n):
            for s2 in self.next_cell[s]:
                if s2 != s:
                    preds[s2].append(s)
        seen = self.terminal.copy()
        queue = deque(np.flatnonzero(seen))
        while queue:
            s2 = queue.popleft()
            for s in preds[s2]:
                if not seen[s] and not self.blocked.ravel()[s]:
                    seen[s] = True
                    queue.append(s)
        return seen


def build_grid(scenario: Scenario, spacing: float, agent_diameter: float = AGENT_DIAMETER) -> GridModel:
    """Discretise ``scenario``.

    A cell is an exit cell when its center lies in an exit's effective
    region, and blocked when its center is inside an obstacle or within half
    a cell of its surface.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    nx = int(round(scenario.width / spacing))
    ny = int(round(scenario.height / spacing))
    if nx * ny > 10_000:
        raise ValueError(f"grid of {nx}x{ny} cells is too large to enumerate")
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    centers = np.stack([(ii.ravel() + 0.5) * spacing, (jj.ravel() + 0.5) * spacing], axis=1)
    exit_cells = evacuated_mask(scenario, centers, agent_diameter).reshape(nx, ny)
    blocked = np.zeros(nx * ny, dtype=bool)
    if scenario.obstacles:
        dist, _, inside = scenario.surface_contacts(centers)
        blocked = np.any(inside[:, 4:] | (dist[:, 4:] < spacing / 2), axis=1)
    blocked = blocked.reshape(nx, ny) & ~exit_cells

    n = nx * ny
    next_cell = np.empty((n, N_ACTIONS), dtype=int)
    reward = np.full((n, N_ACTIONS), STEP_REWARD)
    flat_exit = exit_cells.ravel()
    for s in range(n):
        i, j = divmod(s, ny)
        for a, (di, dj) in enumerate(MOVES):
            i2, j2 = i + di, j + dj
            if 0 <= i2 < nx and 0 <= j2 < ny and not blocked[i2, j2]:
                s2 = i2 * ny + j2
            else:
                s2 = s
            next_cell[s, a] = s2
            if flat_exit[s2]:
                reward[s, a] = EXIT_REWARD
    return GridModel(nx, ny, spacing, blocked, exit_cells, next_cell, reward, flat_exit.copy())
