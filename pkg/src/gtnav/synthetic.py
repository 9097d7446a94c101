"""Seeded synthetic scenarios: random crossings, a narrow corridor, an open
head-on encounter and an empty scene.

Pedestrians walk replayed constant-velocity paths (with optional slow
curvature) sampled at ``frame_dt`` and clipped to the world bounds.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import Vec2
from .game_model import ObstacleGrid
from .scenario import RobotSpec, Scenario, Track

WORLD = (Vec2(0.0, 0.0), Vec2(14.0, 10.0))
ROBOT_START = Vec2(1.0, 5.0)
ROBOT_GOAL = Vec2(13.0, 5.0)


def _sample_path(p_cross, heading, speed, t_cross, curvature, times):
    """Positions at ``times`` of a walker passing ``p_cross`` at ``t_cross``."""
    s = times - t_cross
    if abs(curvature) < 1e-12:
        d = np.stack([np.cos(heading) * s, np.sin(heading) * s], axis=1)
    else:
        # arc of constant curvature through the crossing point
        ang = heading + curvature * speed * s
        d = np.stack([np.sin(ang) - np.sin(heading), np.cos(heading) - np.cos(ang)], axis=1) / curvature
        return p_cross + d
    return p_cross + speed * d


def _clip_track(agent_id, times, xy, lo: Vec2, hi: Vec2, margin: float) -> Optional[Track]:
    inside = ((xy[:, 0] >= lo.x + margin) & (xy[:, 0] <= hi.x - margin)
              & (xy[:, 1] >= lo.y + margin) & (xy[:, 1] <= hi.y - margin))
    idx = np.nonzero(inside)[0]
    if len(idx) < 2:
        return None
    # longest contiguous run inside the world
    runs = np.split(idx, np.nonzero(np.diff(idx) != 1)[0] + 1)
    run = max(runs, key=len)
    if len(run) < 2:
        return None
    return Track(agent_id, times[run], xy[run])


def crossing_scenario(seed: int, n_pedestrians: Optional[int] = None, duration: float = 30.0,
                      frame_dt: float = 0.4, robot_speed: float = 1.0,
                      curvature: float = 0.05) -> Scenario:
    """Robot crossing the world left to right among 3 to 8 pedestrians.

    Each pedestrian is timed to pass close to the robot's straight path
    roughly when the robot would get there, so encounters actually happen.
    Pedestrians do not appear within 1.5 m of the robot start during the
    first two seconds.
    """
    rng = np.random.default_rng(seed)
    n = int(n_pedestrians if n_pedestrians is not None else rng.integers(3, 9))
    lo, hi = WORLD
    times = np.round(np.arange(0.0, duration + 1e-9, frame_dt), 10)
    tracks = {}
    travel = ROBOT_START.dist(ROBOT_GOAL) / robot_speed
    attempts = 0
    while len(tracks) < n:
        attempts += 1
        if attempts > 200 * n:
            break
        x_c = rng.uniform(3.5, 11.5)
        y_c = ROBOT_START.y + rng.normal(0.0, 0.4)
        t_robot = (x_c - ROBOT_START.x) / robot_speed
        t_c = float(np.clip(t_robot + rng.normal(0.0, 1.5), 1.0, travel + 2.0))
        if rng.random() < 0.3:
            heading = math.pi + rng.normal(0.0, 0.35)
        else:
            heading = rng.choice([-1.0, 1.0]) * rng.uniform(math.pi / 4, 3 * math.pi / 4)
        speed = rng.uniform(0.8, 1.4)
        kappa = rng.uniform(-curvature, curvature)
        xy = _sample_path(np.array([x_c, y_c]), heading, speed, t_c, kappa, times)
        tr = _clip_track(f"p{len(tracks) + 1}", times, xy, lo, hi, 0.2)
        if tr is None or tr.end - tr.start < 3.0:
            continue
        early = tr.times <= 2.0
        if early.any() and np.min(np.linalg.norm(tr.xy[early] - ROBOT_START.as_array(), axis=1)) < 1.5:
            continue
        tracks[tr.agent_id] = tr
    return Scenario(f"crossing-{seed:03d}", lo, hi, tracks, None,
                    RobotSpec(ROBOT_START, ROBOT_GOAL, robot_speed), 1.0, frame_dt, duration,
                    {"generator": "crossing", "seed": seed})


def corridor_scenario(frame_dt: float = 0.4, robot_speed: float = 1.0, ped_speed: float = 0.4,
                      duration: float = 20.0) -> Scenario:
    """Robot behind a slower pedestrian in a corridor too narrow to overtake."""
    lo, hi = Vec2(0.0, 0.0), Vec2(14.0, 4.0)
    cell = 0.2
    grid = ObstacleGrid.from_rectangles(
        [(0.0, 0.0, 14.0, 1.4), (0.0, 2.6, 14.0, 4.0)], 70, 20, cell, lo)
    times = np.round(np.arange(0.0, duration + 1e-9, frame_dt), 10)
    x = np.minimum(3.0 + ped_speed * times, 13.0)
    keep = np.concatenate(([True], np.diff(x) > 0))
    xy = np.stack([x[keep], np.full(keep.sum(), 2.0)], axis=1)
    ped = Track("p1", times[keep], xy)
    robot = RobotSpec(Vec2(1.0, 2.0), Vec2(13.0, 2.0), robot_speed)
    return Scenario("corridor", lo, hi, {"p1": ped}, grid, robot, 1.0, frame_dt, duration,
                    {"generator": "corridor"})


def open_crossing_scenario(frame_dt: float = 0.4, robot_speed: float = 1.0,
                           duration: float = 16.0) -> Scenario:
    """One pedestrian walking head-on toward the robot in open space."""
    lo, hi = WORLD
    times = np.round(np.arange(0.0, duration + 1e-9, frame_dt), 10)
    xy = _sample_path(np.array([7.0, 5.05]), math.pi, 1.0, 6.0, 0.0, times)
    ped = _clip_track("p1", times, xy, lo, hi, 0.2)
    return Scenario("open-crossing", lo, hi, {"p1": ped}, None,
                    RobotSpec(ROBOT_START, ROBOT_GOAL, robot_speed), 1.0, frame_dt, duration,
                    {"generator": "open-crossing"})


def empty_scenario(robot_speed: float = 1.0) -> Scenario:
    lo, hi = WORLD
    return Scenario("empty", lo, hi, {}, None, RobotSpec(ROBOT_START, ROBOT_GOAL, robot_speed),
                    1.0, 0.4, None, {"generator": "empty"})
