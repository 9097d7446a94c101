"""Enhanced Vector Field Histogram (VFH+) local planner used as the baseline.

Obstacles are grid cells and other agents (discs). Each obstacle inside the
active window adds ``a - b * d**2`` to every sector within its enlarged
angular half-width ``asin((r_obstacle + r_robot + d_safe) / d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import AgentState, Vec2, angle_diff, normalize_angle, normalize_angles
from .game_model import ObstacleGrid

FREE, BLOCKED = 0, 1


@dataclass(frozen=True)
class VfhConfig:
    active_window_radius: float = 3.0
    sector_count: int = 72
    low_threshold: float = 0.5
    high_threshold: float = 0.9
    robot_radius: float = 0.3
    safety_margin: float = 0.1
    agent_radius: float = 0.6
    wide_valley_sectors: int = 16
    mu_target: float = 5.0
    mu_current: float = 2.0
    mu_previous: float = 2.0
    a: Optional[float] = None
    b: Optional[float] = None
    use_mask: bool = False
    turn_radius: float = 0.0
    speed: float = 1.0

    def __post_init__(self):
        if self.low_threshold > self.high_threshold:
            raise ValueError("low_threshold must not exceed high_threshold")
        if min(self.mu_target, self.mu_current, self.mu_previous) < 0:
            raise ValueError("steering weights must be >= 0")
        if self.sector_count < 3:
            raise ValueError("need at least 3 sectors")

    @classmethod
    def for_beta(cls, beta: float, **kw) -> VfhConfig:
        """Defaults tied to the vital radius: robot radius beta/2, agent discs of radius beta."""
        kw.setdefault("robot_radius", beta / 2)
        kw.setdefault("agent_radius", beta)
        return cls(**kw)

    @property
    def sector_width(self) -> float:
        return 2 * math.pi / self.sector_count

    @property
    def magnitude_coeffs(self) -> tuple[float, float]:
        b = self.b if self.b is not None else 1.0 / self.active_window_radius ** 2
        a = self.a if self.a is not None else 1.0 + b * self.active_window_radius ** 2
        return a, b


@dataclass
class PolarHistogram:
    sector_count: int
    sector_width: float
    magnitudes: np.ndarray
    binary: np.ndarray
    masked: np.ndarray

    def sector_of(self, angle: float) -> int:
        return int(round(normalize_angle(angle) / self.sector_width)) % self.sector_count

    def sector_angle(self, k: float) -> float:
        return normalize_angle(k * self.sector_width)

    @property
    def all_blocked(self) -> bool:
        return bool((self.masked == BLOCKED).all())


def _primitives(robot: AgentState, grid: Optional[ObstacleGrid], agents: Sequence[AgentState],
                cfg: VfhConfig) -> np.ndarray:
    """Rows ``(x, y, radius)`` of obstacle primitives within the active window."""
    p = robot.position.as_array()
    rows = []
    if grid is not None and grid.has_obstacles:
        for cx, cy in grid.centers_within(robot.position, cfg.active_window_radius):
            rows.append((cx, cy, grid.cell_size / 2))
    for a in agents:
        if a.id == robot.id:
            continue
        if a.position.dist(robot.position) <= cfg.active_window_radius:
            rows.append((a.position.x, a.position.y, cfg.agent_radius))
    return np.array(rows, dtype=float).reshape(-1, 3)


def build_histogram(robot: AgentState, grid: Optional[ObstacleGrid], agents: Sequence[AgentState],
                    cfg: VfhConfig, previous_binary: Optional[np.ndarray] = None) -> PolarHistogram:
    K, w = cfg.sector_count, cfg.sector_width
    a, b = cfg.magnitude_coeffs
    prims = _primitives(robot, grid, agents, cfg)
    centers = normalize_angles(np.arange(K) * w)
    p = robot.position.as_array()
    dx, dy = prims[:, 0] - p[0], prims[:, 1] - p[1]
    d = np.hypot(dx, dy)
    re = prims[:, 2] + cfg.robot_radius + cfg.safety_margin
    direction = np.arctan2(dy, dx)
    half = np.where(d <= re, math.pi / 2, np.arcsin(np.minimum(1.0, re / np.maximum(d, 1e-300))))
    m = np.maximum(0.0, a - b * d * d)
    diff = np.abs(normalize_angles(centers[None, :] - direction[:, None]))
    covered = diff <= half[:, None] + 1e-12
    mags = (covered * m[:, None]).sum(axis=0)
    enlarged = list(zip(prims[:, 0], prims[:, 1], re, direction))

    prev = np.zeros(K, dtype=int) if previous_binary is None else np.asarray(previous_binary, dtype=int)
    binary = np.where(mags > cfg.high_threshold, BLOCKED,
                      np.where(mags < cfg.low_threshold, FREE, prev)).astype(int)

    masked = binary.copy()
    if cfg.use_mask and cfg.turn_radius > 0:
        masked = _apply_mask(robot, binary, centers, enlarged, cfg)
    return PolarHistogram(K, w, mags, binary, masked)


def _apply_mask(robot: AgentState, binary: np.ndarray, centers: np.ndarray, enlarged, cfg: VfhConfig):
    """Block directions cut off by obstacles overlapping the turning circles."""
    th = robot.heading
    R = cfg.turn_radius
    p = robot.position
    cr = np.array([p.x + R * math.sin(th), p.y - R * math.cos(th)])
    cl = np.array([p.x - R * math.sin(th), p.y + R * math.cos(th)])
    # limits as offsets from the heading, right negative
    right_lim, left_lim = -math.pi, math.pi
    for x, y, re, direction in enlarged:
        off = angle_diff(direction, th)
        o = np.array([x, y])
        if off <= 0 and np.linalg.norm(o - cr) < R + re:
            right_lim = max(right_lim, off)
        if off >= 0 and np.linalg.norm(o - cl) < R + re:
            left_lim = min(left_lim, off)
    masked = binary.copy()
    for k, c in enumerate(centers):
        off = angle_diff(c, th)
        if not (right_lim < off < left_lim):
            masked[k] = BLOCKED
    return masked


def _valleys(free: np.ndarray) -> list[tuple[int, int]]:
    """Runs of free sectors as ``(start, length)`` walking counter-clockwise."""
    K = len(free)
    if free.all():
        return [(0, K)]
    if not free.any():
        return []
    start = int(np.argmin(free))  # a blocked sector; walk from just after it
    runs, k, n = [], None, 0
    for step in range(1, K + 1):
        s = (start + step) % K
        if free[s]:
            if k is None:
                k, n = s, 0
            n += 1
        elif k is not None:
            runs.append((k, n))
            k = None
    if k is not None:
        runs.append((k, n))
    return runs


def steering_candidates(hist: PolarHistogram, target_dir: float, cfg: VfhConfig) -> list[float]:
    free = hist.masked == FREE
    K = hist.sector_count
    smax = cfg.wide_valley_sectors
    cands = []
    kt = hist.sector_of(target_dir)
    for start, n in _valleys(free):
        if n == K:
            cands.append(normalize_angle(target_dir))
            continue
        end = start + n - 1
        if n > smax:
            cands.append(hist.sector_angle(start + smax / 2))
            cands.append(hist.sector_angle(end - smax / 2))
        else:
            cands.append(hist.sector_angle(start + (n - 1) / 2))
        if free[kt] and (kt - start) % K < n:
            cands.append(normalize_angle(target_dir))
    return cands


def select_steering(hist: PolarHistogram, target_dir: float, current: float, previous: float,
                    cfg: VfhConfig) -> Optional[float]:
    """Cheapest candidate direction, or None when every sector is blocked."""
    cands = steering_candidates(hist, target_dir, cfg)
    if not cands:
        return None

    def key(c):
        dt_, dc = abs(angle_diff(c, target_dir)), abs(angle_diff(c, current))
        dp = abs(angle_diff(c, previous))
        return (cfg.mu_target * dt_ + cfg.mu_current * dc + cfg.mu_previous * dp, dt_, dc)

    return min(cands, key=key)


@dataclass
class VfhPlanner:
    """Stateful wrapper keeping the hysteresis histogram and last command."""

    cfg: VfhConfig = field(default_factory=VfhConfig)
    previous_binary: Optional[np.ndarray] = None
    previous_command: Optional[float] = None
    last_histogram: Optional[PolarHistogram] = None

    def step(self, robot: AgentState, goal: Vec2, agents: Sequence[AgentState],
             grid: Optional[ObstacleGrid]) -> tuple[float, float]:
        heading, factor, hist = vfh_tick(robot, goal, agents, grid, self.cfg,
                                         self.previous_binary, self.previous_command)
        self.previous_binary = hist.binary
        if factor > 0:
            self.previous_command = heading
        self.last_histogram = hist
        return heading, factor


def vfh_tick(robot: AgentState, goal: Vec2, agents: Sequence[AgentState], grid: Optional[ObstacleGrid],
             cfg: VfhConfig, previous_binary=None, previous_command: Optional[float] = None):
    """One reactive step: ``(heading, speed_factor, histogram)``; factor 0 means stop."""
    target = math.atan2(goal.y - robot.position.y, goal.x - robot.position.x)
    hist = build_histogram(robot, grid, agents, cfg, previous_binary)
    prev = robot.heading if previous_command is None else previous_command
    choice = select_steering(hist, target, robot.heading, prev, cfg)
    if choice is None:
        return robot.heading, 0.0, hist
    return choice, 1.0, hist
