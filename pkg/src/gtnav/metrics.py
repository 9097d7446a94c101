"""Path-quality metrics for a single episode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Trajectory, normalize_angles
from .errors import InputDomainError, UndefinedMetricError

CONDITIONS = ("HO", "GT", "VFH")


@dataclass(frozen=True)
class MetricReport:
    scenario_id: str
    condition: str
    agent_id: str
    plr: float
    pr: float
    cpd: float
    reached_goal: bool = True

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise InputDomainError(f"unknown condition {self.condition!r}")


def path_length_ratio(traj: Trajectory) -> float:
    """Line-of-sight distance between the end points over the travelled length."""
    pts = traj.points
    if len(pts) < 2:
        raise UndefinedMetricError("path length ratio needs at least 2 samples")
    length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    if length == 0:
        raise UndefinedMetricError("path has zero length")
    return min(1.0, float(np.linalg.norm(pts[-1] - pts[0])) / length)


def path_regularity(traj: Trajectory) -> float:
    """One minus the summed absolute turning angle over ``pi * (n - 2)``.

    Turns are measured between consecutive moving segments, so a pause
    (repeated samples) contributes no turn of its own; the denominator
    still counts every interior sample.
    """
    pts = traj.points
    if len(pts) < 3:
        raise UndefinedMetricError("path regularity needs at least 3 samples")
    seg = np.diff(pts, axis=0)
    moving = np.linalg.norm(seg, axis=1) > 1e-12
    seg = seg[moving]
    if len(seg) < 2:
        return 1.0
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    turns = np.abs(normalize_angles(np.diff(heading)))
    pr = 1.0 - float(turns.sum()) / (math.pi * (len(pts) - 2))
    return min(1.0, max(0.0, pr))


def closest_pedestrian_distance(robot: Trajectory, pedestrians: Sequence[Trajectory],
                                arena_diagonal: float) -> float:
    """Minimum robot-pedestrian distance over shared ticks, over the arena diagonal."""
    if not arena_diagonal > 0:
        raise InputDomainError("arena diagonal must be > 0")
    if not pedestrians:
        raise UndefinedMetricError("no pedestrians to measure against")
    own = {k: (p.x, p.y) for k, p in robot.samples}
    best = math.inf
    for ped in pedestrians:
        shared = [(own[k], (p.x, p.y)) for k, p in ped.samples if k in own]
        if not shared:
            continue
        a = np.array([s[0] for s in shared])
        b = np.array([s[1] for s in shared])
        best = min(best, float(np.linalg.norm(a - b, axis=1).min()))
    if best == math.inf:
        raise UndefinedMetricError("no pedestrian shares a tick with the robot")
    return best / arena_diagonal
