"""Geometric and kinematic primitives shared by the rest of the package.

Units are meters, seconds and radians everywhere. Headings are absolute and
normalized to the half-open interval (-pi, pi].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputDomainError

TWO_PI = 2.0 * math.pi

#: The seven heading offsets an agent may apply at each step.
DEFAULT_ACTION_SET = (
    -math.pi / 2,
    -math.pi / 3,
    -math.pi / 6,
    0.0,
    math.pi / 6,
    math.pi / 3,
    math.pi / 2,
)

#: Goal/smoothness trade-off over a four step horizon.
DEFAULT_GAMMA = (0.6, 0.7, 0.8, 1.0)

_OFFSET_TOL = 1e-9


def normalize_angle(angle: float) -> float:
    """Wrap ``angle`` onto (-pi, pi]."""
    if not math.isfinite(angle):
        raise InputDomainError(f"non-finite angle {angle!r}")
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def normalize_angles(angles) -> np.ndarray:
    """Vectorized :func:`normalize_angle`, bit-identical to the scalar form."""
    a = np.array(angles, dtype=float)
    out_of_range = (a <= -math.pi) | (a > math.pi)
    if out_of_range.any():
        a[out_of_range] = [normalize_angle(v) for v in a[out_of_range]]
    return a


def angle_diff(a: float, b: float) -> float:
    """Signed wrapped difference ``a - b`` on (-pi, pi]."""
    return normalize_angle(a - b)


def default_gamma(horizon: int) -> tuple[float, ...]:
    """Weights for a horizon of ``horizon`` steps.

    Four steps use the calibrated schedule; other lengths interpolate
    linearly between 0.6 and 1.0.
    """
    if horizon < 1:
        raise InputDomainError("horizon must be >= 1")
    if horizon == len(DEFAULT_GAMMA):
        return DEFAULT_GAMMA
    if horizon == 1:
        return (1.0,)
    return tuple(float(g) for g in np.linspace(0.6, 1.0, horizon))


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputDomainError(f"non-finite Vec2({self.x!r}, {self.y!r})")

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> Vec2:
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other: Vec2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def of(cls, xy) -> Vec2:
        return cls(float(xy[0]), float(xy[1]))


class AgentKind(enum.Enum):
    SCRIPTED_HUMAN = "human"
    CONTROLLED_ROBOT = "robot"


@dataclass(frozen=True)
class AgentState:
    """Observed state of one agent at one tick."""

    id: str
    position: Vec2
    heading: float
    speed: float
    kind: AgentKind = AgentKind.SCRIPTED_HUMAN
    group: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.speed) or self.speed < 0:
            raise InputDomainError(f"agent {self.id}: speed must be finite and >= 0")
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def is_robot(self) -> bool:
        return self.kind is AgentKind.CONTROLLED_ROBOT


@dataclass(frozen=True)
class GameConfig:
    """Parameters of the navigation game.

    ``extra_check_times`` lists additional fractional step times (in units of
    ``dt``) at which the hard constraints are tested; ``midpoint_subsample``
    adds the midpoint of every step.
    """

    dt: float = 1.2
    horizon_T: int = 4
    beta: float = 0.6
    rho: float = 1.0
    gamma: tuple[float, ...] = DEFAULT_GAMMA
    action_set: tuple[float, ...] = DEFAULT_ACTION_SET
    max_br_iterations: int = 20
    replan_hz: float = 2.0
    midpoint_subsample: bool = False
    extra_check_times: tuple[float, ...] = ()
    infeasibility_penalty: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "action_set", tuple(float(u) for u in self.action_set))
        object.__setattr__(self, "extra_check_times", tuple(float(s) for s in self.extra_check_times))
        if not self.dt > 0:
            raise InputDomainError("dt must be > 0")
        if self.horizon_T < 1:
            raise InputDomainError("horizon_T must be >= 1")
        if not self.beta > 0:
            raise InputDomainError("beta must be > 0")
        if self.rho < 0:
            raise InputDomainError("rho must be >= 0")
        if len(self.gamma) != self.horizon_T:
            raise InputDomainError(
                f"gamma has {len(self.gamma)} weights, horizon_T is {self.horizon_T}"
            )
        if any(not 0.0 <= g <= 1.0 for g in self.gamma):
            raise InputDomainError("gamma weights must lie in [0, 1]")
        offsets = sorted(self.action_set)
        if not any(abs(u) <= _OFFSET_TOL for u in offsets):
            raise InputDomainError("action set must contain 0")
        for u, w in zip(offsets, reversed(offsets)):
            if abs(u + w) > _OFFSET_TOL:
                raise InputDomainError("action set must be symmetric about 0")
        if self.max_br_iterations < 1:
            raise InputDomainError("max_br_iterations must be >= 1")
        for s in self.extra_check_times:
            if not 0.0 < s <= self.horizon_T:
                raise InputDomainError("extra check times must lie in (0, horizon_T]")

    @classmethod
    def with_horizon(cls, horizon_T: int, **kw) -> GameConfig:
        """Config for ``horizon_T`` steps with the matching default weights."""
        kw.setdefault("gamma", default_gamma(horizon_T))
        return cls(horizon_T=horizon_T, **kw)

    def check_times(self) -> tuple[float, ...]:
        """Sorted step times at which hard constraints are tested."""
        times = set(float(t) for t in range(1, self.horizon_T + 1))
        if self.midpoint_subsample:
            times.update(t - 0.5 for t in range(1, self.horizon_T + 1))
        times.update(self.extra_check_times)
        return tuple(sorted(times))

    def offset_index(self, offset: float) -> int:
        """Index of ``offset`` in the action set, or raise."""
        for k, u in enumerate(self.action_set):
            if abs(normalize_angle(offset - u)) <= _OFFSET_TOL:
                return k
        raise InputDomainError(f"heading offset {offset!r} is not in the action set")


@dataclass(frozen=True)
class ActionPlan:
    """Absolute headings and speed factors over the horizon."""

    headings: tuple[float, ...]
    speed_factors: tuple[float, ...] = field(default=())

    def __post_init__(self):
        hs = tuple(normalize_angle(float(h)) for h in self.headings)
        object.__setattr__(self, "headings", hs)
        if not self.speed_factors:
            object.__setattr__(self, "speed_factors", (1.0,) * len(hs))
        else:
            object.__setattr__(self, "speed_factors", tuple(float(f) for f in self.speed_factors))
        if len(self.speed_factors) != len(hs):
            raise InputDomainError("headings and speed_factors differ in length")
        if any(not 0.0 <= f <= 1.0 for f in self.speed_factors):
            raise InputDomainError("speed factors must lie in [0, 1]")

    def __len__(self):
        return len(self.headings)

    @classmethod
    def straight(cls, heading: float, horizon: int) -> ActionPlan:
        return cls((heading,) * horizon)

    @classmethod
    def from_offsets(cls, start_heading: float, offsets: Sequence[float], speed_factors=()) -> ActionPlan:
        headings = []
        h = start_heading
        for u in offsets:
            h = normalize_angle(h + u)
            headings.append(h)
        return cls(tuple(headings), tuple(speed_factors))

    def offsets(self, start_heading: float) -> tuple[float, ...]:
        prev = normalize_angle(start_heading)
        out = []
        for h in self.headings:
            out.append(angle_diff(h, prev))
            prev = h
        return tuple(out)

    def validate(self, start_heading: float, cfg: GameConfig) -> None:
        """Raise unless the plan has the horizon length and legal offsets."""
        if len(self.headings) != cfg.horizon_T:
            raise InputDomainError(
                f"plan has {len(self.headings)} steps, horizon_T is {cfg.horizon_T}"
            )
        for u in self.offsets(start_heading):
            cfg.offset_index(u)

    @property
    def is_full_speed(self) -> bool:
        return all(f == 1.0 for f in self.speed_factors)


@dataclass(frozen=True)
class Trajectory:
    """Timed positions sampled on a fixed tick."""

    samples: tuple[tuple[int, Vec2], ...]
    dt: float

    def __post_init__(self):
        samples = tuple((int(k), p if isinstance(p, Vec2) else Vec2.of(p)) for k, p in self.samples)
        object.__setattr__(self, "samples", samples)
        if not self.dt > 0:
            raise InputDomainError("trajectory dt must be > 0")
        ticks = [k for k, _ in samples]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise InputDomainError("trajectory ticks must be strictly increasing")

    @classmethod
    def from_points(cls, points, dt: float, start_tick: int = 0) -> Trajectory:
        return cls(tuple((start_tick + k, Vec2.of(p)) for k, p in enumerate(points)), dt)

    def __len__(self):
        return len(self.samples)

    @property
    def ticks(self) -> list[int]:
        return [k for k, _ in self.samples]

    @property
    def points(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 2))
        return np.array([(p.x, p.y) for _, p in self.samples], dtype=float)

    def position_at(self, tick: int) -> Optional[Vec2]:
        for k, p in self.samples:
            if k == tick:
                return p
        return None


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InputDomainError(f"non-finite input {v!r}")


def step_kinematics(pos: Vec2, heading: float, speed: float, dt: float) -> Vec2:
    """Advance ``pos`` for ``dt`` seconds at constant heading and speed."""
    _check_finite(pos.x, pos.y, heading, speed, dt)
    if not dt > 0:
        raise InputDomainError("dt must be > 0")
    if speed < 0:
        raise InputDomainError("speed must be >= 0")
    step = speed * dt
    return Vec2(pos.x + step * math.cos(heading), pos.y + step * math.sin(heading))


def roll_out(start: AgentState, plan: ActionPlan, cfg: GameConfig) -> Trajectory:
    """Apply every step of ``plan`` from ``start``; returns horizon_T + 1 samples."""
    plan.validate(start.heading, cfg)
    pts = [start.position]
    p = start.position
    for h, f in zip(plan.headings, plan.speed_factors):
        p = step_kinematics(p, h, start.speed * f, cfg.dt)
        pts.append(p)
    return Trajectory(tuple(enumerate(pts)), cfg.dt)


def candidate_headings(current_heading: float, cfg: GameConfig) -> list[float]:
    """Headings reachable in one step from ``current_heading``."""
    return [normalize_angle(current_heading + u) for u in cfg.action_set]
