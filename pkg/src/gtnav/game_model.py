"""Per-agent cost terms, hard constraints and goal estimation of the navigation game.

Every scalar cost function here has a vectorized twin (``*_batch``) that scores
many candidate plans at once; the solver uses the batch forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import ActionPlan, AgentState, GameConfig, Trajectory, Vec2, normalize_angles
from .errors import InputDomainError, ParseError


@dataclass(frozen=True)
class GoalEstimate:
    goal_point: Vec2


@dataclass(frozen=True)
class CostBreakdown:
    goal_term: float
    smooth_term: float
    obstacle_term: float
    saturated: bool = False

    @property
    def total(self) -> float:
        return self.goal_term + self.smooth_term + self.obstacle_term

    @classmethod
    def zero(cls) -> CostBreakdown:
        return cls(0.0, 0.0, 0.0)


class ObstacleGrid:
    """Boolean occupancy map of the static obstacle space.

    ``occupancy[iy, ix]`` is True when the cell whose lower-left corner is
    ``origin + (ix, iy) * cell_size`` is occupied. Points outside the grid
    are treated as free.
    """

    def __init__(self, occupancy, cell_size: float, origin: Vec2 = Vec2(0.0, 0.0)):
        occ = np.array(occupancy, dtype=bool)
        if occ.ndim != 2 or occ.shape[0] == 0 or occ.shape[1] == 0:
            raise InputDomainError("occupancy must be a non-empty 2-D array")
        if not cell_size > 0:
            raise InputDomainError("cell_size must be > 0")
        occ.setflags(write=False)
        self.occupancy = occ
        self.cell_size = float(cell_size)
        self.origin = origin
        iy, ix = np.nonzero(occ)
        centers = np.column_stack(
            (origin.x + (ix + 0.5) * self.cell_size, origin.y + (iy + 0.5) * self.cell_size)
        )
        self._centers = centers
        self._tree = cKDTree(centers) if len(centers) else None

    @property
    def height_cells(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width_cells(self) -> int:
        return self.occupancy.shape[1]

    @property
    def has_obstacles(self) -> bool:
        return self._tree is not None

    @property
    def occupied_centers(self) -> np.ndarray:
        return self._centers

    @property
    def bounds(self) -> tuple[Vec2, Vec2]:
        return self.origin, Vec2(
            self.origin.x + self.width_cells * self.cell_size,
            self.origin.y + self.height_cells * self.cell_size,
        )

    @classmethod
    def empty(cls, width_cells: int = 1, height_cells: int = 1, cell_size: float = 1.0,
              origin: Vec2 = Vec2(0.0, 0.0)) -> ObstacleGrid:
        return cls(np.zeros((height_cells, width_cells), dtype=bool), cell_size, origin)

    @classmethod
    def from_rectangles(cls, rects, width_cells: int, height_cells: int, cell_size: float,
                        origin: Vec2 = Vec2(0.0, 0.0)) -> ObstacleGrid:
        """Rasterize axis-aligned ``(xmin, ymin, xmax, ymax)`` boxes; a cell is
        occupied when its center lies inside a box."""
        occ = np.zeros((height_cells, width_cells), dtype=bool)
        xs = origin.x + (np.arange(width_cells) + 0.5) * cell_size
        ys = origin.y + (np.arange(height_cells) + 0.5) * cell_size
        for xmin, ymin, xmax, ymax in rects:
            cols = (xs >= xmin) & (xs <= xmax)
            rows = (ys >= ymin) & (ys <= ymax)
            occ[np.ix_(rows, cols)] = True
        return cls(occ, cell_size, origin)

    def cell_center(self, ix: int, iy: int) -> Vec2:
        return Vec2(self.origin.x + (ix + 0.5) * self.cell_size, self.origin.y + (iy + 0.5) * self.cell_size)

    def occupied_at(self, points) -> np.ndarray:
        """Occupancy for an ``(..., 2)`` array of points."""
        pts = np.asarray(points, dtype=float)
        ix = np.floor((pts[..., 0] - self.origin.x) / self.cell_size).astype(np.int64)
        iy = np.floor((pts[..., 1] - self.origin.y) / self.cell_size).astype(np.int64)
        inside = (ix >= 0) & (ix < self.width_cells) & (iy >= 0) & (iy < self.height_cells)
        out = np.zeros(ix.shape, dtype=bool)
        out[inside] = self.occupancy[iy[inside], ix[inside]]
        return out

    def nearest_distance(self, points) -> np.ndarray:
        """Distance from each point to the nearest occupied cell center (inf if none)."""
        pts = np.asarray(points, dtype=float)
        if self._tree is None:
            return np.full(pts.shape[:-1], np.inf)
        d, _ = self._tree.query(pts.reshape(-1, 2))
        return d.reshape(pts.shape[:-1])

    def centers_within(self, p: Vec2, radius: float) -> np.ndarray:
        """Occupied cell centers within ``radius`` of ``p``, in a stable order."""
        if self._tree is None:
            return np.zeros((0, 2))
        idx = sorted(self._tree.query_ball_point([p.x, p.y], radius))
        return self._centers[idx].reshape(-1, 2)

    def nearest_point(self, p: Vec2) -> Optional[Vec2]:
        if self._tree is None:
            return None
        _, k = self._tree.query([p.x, p.y])
        return Vec2.of(self._centers[k])

    # -- file format -------------------------------------------------------

    @classmethod
    def load(cls, path: Union[str, Path]) -> ObstacleGrid:
        """Read the plain-text occupancy format.

        First non-comment line: ``width height cell_size origin_x origin_y``.
        Then ``height`` rows of ``width`` 0/1 values, top row first. Values may
        be separated by whitespace or run together. ``#`` starts a comment.
        """
        path = Path(path)
        header = None
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if header is None:
                    parts = line.split()
                    if len(parts) != 5:
                        raise ParseError("grid header needs 5 fields", path, lineno)
                    try:
                        header = (int(parts[0]), int(parts[1]), float(parts[2]),
                                  float(parts[3]), float(parts[4]))
                    except ValueError as exc:
                        raise ParseError(f"bad grid header: {exc}", path, lineno) from None
                    continue
                bits = line.replace(" ", "").replace("\t", "")
                if set(bits) - {"0", "1"}:
                    raise ParseError("grid rows may only contain 0 and 1", path, lineno)
                if len(bits) != header[0]:
                    raise ParseError(f"row has {len(bits)} cells, expected {header[0]}", path, lineno)
                rows.append([c == "1" for c in bits])
        if header is None:
            raise ParseError("empty grid file", path)
        width, height, cell, ox, oy = header
        if len(rows) != height:
            raise ParseError(f"grid has {len(rows)} rows, expected {height}", path)
        occ = np.array(rows[::-1], dtype=bool).reshape(height, width)
        return cls(occ, cell, Vec2(ox, oy))

    def save(self, path: Union[str, Path]) -> None:
        lines = [
            "# width height cell_size origin_x origin_y; rows top first, 1 = occupied",
            f"{self.width_cells} {self.height_cells} {self.cell_size!r} {self.origin.x!r} {self.origin.y!r}",
        ]
        for row in self.occupancy[::-1]:
            lines.append("".join("1" if v else "0" for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- batch kernels ----------------------------------------------------------


def rollout_batch(start_xy, speed: float, headings, dt: float, speed_factors=None) -> np.ndarray:
    """Positions ``(C, T+1, 2)`` for ``C`` heading sequences of length ``T``."""
    h = np.atleast_2d(np.asarray(headings, dtype=float))
    f = np.ones_like(h) if speed_factors is None else np.atleast_2d(np.asarray(speed_factors, dtype=float))
    step = speed * dt * f
    d = np.stack((step * np.cos(h), step * np.sin(h)), axis=-1)
    out = np.empty((h.shape[0], h.shape[1] + 1, 2))
    out[:, 0, :] = start_xy
    out[:, 1:, :] = np.asarray(start_xy, dtype=float) + np.cumsum(d, axis=1)
    return out


def sample_batch(points, times: Sequence[float]) -> np.ndarray:
    """Positions at fractional step ``times`` along piecewise-linear rollouts.

    ``points`` is ``(..., T+1, 2)``; the result is ``(..., len(times), 2)``.
    """
    pts = np.asarray(points, dtype=float)
    t = np.asarray(times, dtype=float)
    k = np.clip(np.ceil(t).astype(int) - 1, 0, pts.shape[-2] - 2)
    frac = (t - k)[:, None]
    return pts[..., k, :] + frac * (pts[..., k + 1, :] - pts[..., k, :])


def goal_cost_batch(points, goal_xy, gamma) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points)[:, 1:, :] - np.asarray(goal_xy, dtype=float), axis=-1)
    return d @ np.asarray(gamma, dtype=float)


def smooth_cost_batch(headings, start_heading: float, gamma) -> np.ndarray:
    h = np.atleast_2d(np.asarray(headings, dtype=float))
    prev = np.concatenate((np.full((h.shape[0], 1), start_heading), h[:, :-1]), axis=1)
    turn = np.abs(normalize_angles(h - prev))
    return turn @ (1.0 - np.asarray(gamma, dtype=float))


def obstacle_cost_batch(points, grid: ObstacleGrid, rho: float):
    """Soft obstacle penalty per rollout and whether any denominator was clamped."""
    pts = np.asarray(points)[:, 1:, :]
    n = pts.shape[0]
    if not grid.has_obstacles or rho == 0:
        return np.zeros(n), np.zeros(n, dtype=bool)
    d = grid.nearest_distance(pts)
    floor = grid.cell_size / 2
    clamped = d < floor
    cost = (rho / np.maximum(d, floor)).sum(axis=1)
    return cost, clamped.any(axis=1)


# -- scalar API -------------------------------------------------------------


def estimate_goal(agent: AgentState, cfg: GameConfig) -> GoalEstimate:
    """Project the agent along its heading for the whole horizon."""
    reach = agent.speed * cfg.horizon_T * cfg.dt
    p = agent.position
    return GoalEstimate(Vec2(p.x + reach * math.cos(agent.heading), p.y + reach * math.sin(agent.heading)))


def _plan_points(plan: ActionPlan, start: AgentState, cfg: GameConfig) -> np.ndarray:
    plan.validate(start.heading, cfg)
    return rollout_batch(start.position.as_array(), start.speed, [plan.headings], cfg.dt,
                         [plan.speed_factors])


def phi_goal(plan: ActionPlan, start: AgentState, goal: GoalEstimate, cfg: GameConfig) -> float:
    pts = _plan_points(plan, start, cfg)
    return float(goal_cost_batch(pts, goal.goal_point.as_array(), cfg.gamma)[0])


def phi_smooth(plan: ActionPlan, start_heading: float, cfg: GameConfig) -> float:
    plan.validate(start_heading, cfg)
    return float(smooth_cost_batch([plan.headings], start_heading, cfg.gamma)[0])


def phi_obs(plan: ActionPlan, start: AgentState, grid: ObstacleGrid, cfg: GameConfig) -> float:
    """Raw soft obstacle penalty; whether it counts is decided by the caller."""
    cost, _ = obstacle_cost_batch(_plan_points(plan, start, cfg), grid, cfg.rho)
    return float(cost[0])


def nearest_obstacle_point(grid: ObstacleGrid, p: Vec2) -> Optional[Vec2]:
    return grid.nearest_point(p)


def first_estimate_hits_obstacle(start: AgentState, grid: ObstacleGrid, cfg: GameConfig) -> bool:
    """Whether the straight constant-speed projection enters an occupied cell."""
    if not grid.has_obstacles:
        return False
    pts = rollout_batch(start.position.as_array(), start.speed,
                        [[start.heading] * cfg.horizon_T], cfg.dt)
    return bool(grid.occupied_at(sample_batch(pts, cfg.check_times())).any())


def total_cost(plan: ActionPlan, start: AgentState, goal: GoalEstimate, grid: ObstacleGrid,
               cfg: GameConfig, obstacle_term_active: bool) -> CostBreakdown:
    pts = _plan_points(plan, start, cfg)
    g = float(goal_cost_batch(pts, goal.goal_point.as_array(), cfg.gamma)[0])
    s = float(smooth_cost_batch([plan.headings], start.heading, cfg.gamma)[0])
    o, sat = 0.0, False
    if obstacle_term_active:
        oc, sc = obstacle_cost_batch(pts, grid, cfg.rho)
        o, sat = float(oc[0]), bool(sc[0])
    return CostBreakdown(g, s, o, sat)


def _as_items(others) -> list:
    if isinstance(others, Mapping):
        return list(others.items())
    return list(enumerate(others))


def check_agent_separation(traj_i: Trajectory, others: Union[Sequence[Trajectory], Mapping[str, Trajectory]],
                           beta: float):
    """Test the minimum-distance constraint at every shared tick.

    Returns ``(ok, violation)`` where ``violation`` is ``(tick, other_key)``
    for the earliest offending tick (ties broken by iteration order of
    ``others``), or None.
    """
    ticks = traj_i.ticks
    pts_i = traj_i.points
    earliest = None
    for key, tj in _as_items(others):
        if tj.ticks != ticks:
            raise InputDomainError(f"trajectory {key!r} does not share the tick range")
        d = np.linalg.norm(tj.points - pts_i, axis=1)
        bad = np.nonzero(d < beta)[0]
        if len(bad) and (earliest is None or ticks[bad[0]] < earliest[0]):
            earliest = (ticks[bad[0]], key)
    return earliest is None, earliest


def check_obstacle_clearance(traj: Trajectory, grid: ObstacleGrid):
    """Returns ``(ok, first_violating_tick)``."""
    if len(traj) == 0:
        return True, None
    occ = grid.occupied_at(traj.points)
    bad = np.nonzero(occ)[0]
    if len(bad):
        return False, traj.ticks[bad[0]]
    return True, None
