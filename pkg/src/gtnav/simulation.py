"""Episode simulation on a fixed executive tick, the episode log and per-episode metrics.

Humans always follow their replay tracks (linearly interpolated onto the
tick); the controlled agent follows the selected planner.

Episode log columns (tab separated, ``-`` for not applicable)::

    tick time agent kind x y heading speed branch feasible safety_fallback
    goal_term smooth_term obstacle_term total nash_cost decel_cost
    decel_pattern held min_distance violation
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import AgentKind, AgentState, Trajectory, Vec2
from .errors import ConfigError, ParseError, UndefinedMetricError
from .metrics import MetricReport, closest_pedestrian_distance, path_length_ratio, path_regularity
from .planner import HeldPlan, PlannerConfig, advance_robot, plan_tick
from .scenario import Scenario
from .vfh import VfhConfig, VfhPlanner

ROBOT_ID = "robot"

LOG_COLUMNS = (
    "tick", "time", "agent", "kind", "x", "y", "heading", "speed", "branch", "feasible",
    "safety_fallback", "goal_term", "smooth_term", "obstacle_term", "total", "nash_cost",
    "decel_cost", "decel_pattern", "held", "min_distance", "violation",
)


class PlannerKind(enum.Enum):
    GT = "GT"
    VFH = "VFH"
    REPLAY_ONLY = "ReplayOnly"

    @classmethod
    def for_condition(cls, condition: str) -> PlannerKind:
        return {"HO": cls.REPLAY_ONLY, "GT": cls.GT, "VFH": cls.VFH}[condition]


@dataclass
class LogRow:
    tick: int
    time: float
    agent: str
    kind: str
    x: float
    y: float
    heading: float
    speed: float
    branch: str = "-"
    feasible: Optional[bool] = None
    safety_fallback: Optional[bool] = None
    goal_term: Optional[float] = None
    smooth_term: Optional[float] = None
    obstacle_term: Optional[float] = None
    total: Optional[float] = None
    nash_cost: Optional[float] = None
    decel_cost: Optional[float] = None
    decel_pattern: Optional[int] = None
    held: Optional[bool] = None
    min_distance: Optional[float] = None
    violation: Optional[bool] = None

    def fields(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in LOG_COLUMNS]


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.9f}"
    return str(v)


@dataclass
class EpisodeResult:
    scenario_id: str
    condition: str
    controlled_id: Optional[str]
    tick_dt: float
    trajectories: dict[str, Trajectory]
    rows: list[LogRow] = field(default_factory=list)
    reached_goal: bool = False
    violations: list = field(default_factory=list)
    infeasible_ticks: list = field(default_factory=list)

    @property
    def decisions(self) -> list[LogRow]:
        return [r for r in self.rows if r.agent == self.controlled_id and r.branch not in ("-", "replay")]

    @property
    def all_feasible(self) -> bool:
        return not self.infeasible_ticks

    def min_controlled_distance(self) -> float:
        vals = [r.min_distance for r in self.rows
                if r.agent == self.controlled_id and r.min_distance is not None]
        return min(vals) if vals else math.inf

    def write_log(self, path: Union[str, Path]) -> None:
        meta = {"scenario": self.scenario_id, "condition": self.condition,
                "controlled": self.controlled_id or "-", "tick_dt": repr(float(self.tick_dt)),
                "reached_goal": "1" if self.reached_goal else "0"}
        lines = ["# " + "\t".join(f"{k}={v}" for k, v in meta.items()), "\t".join(LOG_COLUMNS)]
        lines += ["\t".join(r.fields()) for r in self.rows]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_log(path: Union[str, Path]) -> tuple[dict, list[dict]]:
    """Parse an episode log into its header fields and row dictionaries of strings."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta = {}
    skipped = 0
    while lines and lines[0].startswith("#"):
        skipped += 1
        for item in lines.pop(0)[1:].strip().split("\t"):
            if "=" in item:
                k, v = item.split("=", 1)
                meta[k] = v
    if not lines:
        raise ParseError("episode log has no column header", path)
    header = lines[0].split("\t")
    rows = []
    for n, line in enumerate(lines[1:], start=skipped + 2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", path, n)
        rows.append(dict(zip(header, cells)))
    return meta, rows


def episode_from_log(path: Union[str, Path]) -> EpisodeResult:
    """Rebuild the trajectories and header data of a written episode log."""
    meta, rows = read_log(path)
    dt = float(meta.get("tick_dt", "0.5"))
    samples: dict[str, list] = {}
    for r in rows:
        samples.setdefault(r["agent"], []).append((int(r["tick"]), Vec2(float(r["x"]), float(r["y"]))))
    controlled = meta.get("controlled")
    res = EpisodeResult(meta.get("scenario", Path(path).stem), meta.get("condition", "HO"),
                        None if controlled in (None, "-") else controlled, dt,
                        {a: Trajectory(tuple(s), dt) for a, s in samples.items()})
    res.reached_goal = meta.get("reached_goal", "1") == "1"
    return res


def human_states(scenario: Scenario, t: float) -> list[AgentState]:
    """Replayed humans present at time ``t`` with finite-difference velocity."""
    out = []
    for aid, tr in scenario.tracks.items():
        if not tr.covers(t):
            continue
        p = tr.position_at(t)
        v = tr.velocity_at(t)
        speed = float(np.hypot(*v))
        heading = float(math.atan2(v[1], v[0])) if speed > 1e-9 else 0.0
        out.append(AgentState(aid, Vec2.of(p), heading, speed))
    return out


def select_reference_human(scenario: Scenario, n_ticks: int, tick_dt: float, seed: int) -> Optional[str]:
    """Seeded draw among humans present for at least 80% of the episode."""
    if not scenario.tracks:
        return None
    horizon = max(n_ticks * tick_dt, 1e-9)
    ids = sorted(scenario.tracks)
    eligible = [a for a in ids if (scenario.tracks[a].end - scenario.tracks[a].start) >= 0.8 * horizon]
    if not eligible:
        eligible = [max(ids, key=lambda a: (scenario.tracks[a].end - scenario.tracks[a].start, a))]
    rng = np.random.default_rng(seed)
    return eligible[int(rng.integers(len(eligible)))]


def resolve_robot_speed(scenario: Scenario, cfg: PlannerConfig) -> float:
    if cfg.robot_speed is not None:
        return cfg.robot_speed
    if scenario.robot is not None and scenario.robot.speed is not None:
        return scenario.robot.speed
    v = scenario.mean_pedestrian_speed()
    return v if v else 1.0


def episode_ticks(scenario: Scenario, cfg: PlannerConfig, speed: Optional[float]) -> int:
    """Last tick index: end of the replay, capped at ``tick_cap_factor`` times its length.

    Without any replay the cap is ``tick_cap_factor`` times the straight-line
    travel time of the robot.
    """
    dt = cfg.executive_dt
    dur = scenario.replay_duration
    if dur > 0:
        return int(math.floor(dur / dt + 1e-9))
    if scenario.robot is None or not speed:
        return 0
    travel = scenario.robot.start.dist(scenario.robot.goal) / speed
    return int(math.ceil(cfg.tick_cap_factor * travel / dt)) + 1


def run_episode(scenario: Scenario, planner: Union[PlannerKind, str], cfg: Optional[PlannerConfig] = None,
                vfh_cfg: Optional[VfhConfig] = None, seed: int = 0) -> EpisodeResult:
    """Simulate one episode; see the module docstring for the log layout."""
    cfg = cfg or PlannerConfig()
    if isinstance(planner, str):
        planner = PlannerKind(planner) if planner in {p.value for p in PlannerKind} else PlannerKind.for_condition(planner)
    condition = {PlannerKind.GT: "GT", PlannerKind.VFH: "VFH", PlannerKind.REPLAY_ONLY: "HO"}[planner]
    dt = cfg.executive_dt
    if planner is PlannerKind.REPLAY_ONLY:
        return _replay_episode(scenario, cfg, seed)
    if scenario.robot is None:
        raise ConfigError(f"scenario {scenario.id} has no robot start/goal")
    speed = resolve_robot_speed(scenario, cfg)
    cfg = replace(cfg, robot_speed=speed)
    n_ticks = episode_ticks(scenario, cfg, speed)
    grid = scenario.obstacle_grid()
    goal = scenario.robot.goal
    start = scenario.robot.start
    bearing = math.atan2(goal.y - start.y, goal.x - start.x)
    robot = AgentState(ROBOT_ID, start, bearing, speed, AgentKind.CONTROLLED_ROBOT)
    vfh = None
    if planner is PlannerKind.VFH:
        vfh = VfhPlanner(vfh_cfg or VfhConfig.for_beta(cfg.game.beta))

    beta = cfg.game.beta
    res = EpisodeResult(scenario.id, condition, ROBOT_ID, dt, {})
    samples: dict[str, list] = {}
    held = None
    for k in range(n_ticks + 1):
        t = k * dt
        humans = human_states(scenario, t)
        for h in humans:
            samples.setdefault(h.id, []).append((k, h.position))
            res.rows.append(LogRow(k, t, h.id, "human", h.position.x, h.position.y, h.heading, h.speed, "replay"))
        samples.setdefault(ROBOT_ID, []).append((k, robot.position))
        dists = [robot.position.dist(h.position) for h in humans]
        dmin = min(dists) if dists else None
        for h, d in zip(humans, dists):
            if d < beta:
                res.violations.append((k, h.id, d))
        row = LogRow(k, t, ROBOT_ID, "robot", robot.position.x, robot.position.y, robot.heading, robot.speed,
                     min_distance=dmin, violation=bool(dmin is not None and dmin < beta))
        res.rows.append(row)
        if robot.position.dist(goal) <= cfg.goal_tolerance:
            res.reached_goal = True
            row.branch = "arrived"
            break
        if k == n_ticks:
            break
        if vfh is not None:
            heading, factor = vfh.step(robot, goal, humans, grid)
            row.branch = "VFH" if factor > 0 else "VFHStop"
            row.heading = heading
            robot = advance_robot(robot, goal, heading, speed * factor, dt)
            continue
        out = plan_tick(robot, goal, humans, grid, cfg, held)
        r = out.results[ROBOT_ID]
        row.branch = r.branch.value
        row.feasible = out.feasible
        row.safety_fallback = r.safety_fallback
        row.held = r.held
        row.goal_term, row.smooth_term = r.cost.goal_term, r.cost.smooth_term
        row.obstacle_term, row.total = r.cost.obstacle_term, r.cost.total
        row.nash_cost, row.decel_cost, row.decel_pattern = r.nash_cost, r.decel_cost, r.decel_pattern
        row.heading = r.executed_action[0]
        if not out.feasible:
            res.infeasible_ticks.append(k)
        robot = out.robot_state
        held = HeldPlan(r, held.elapsed + dt if r.held else dt)
    res.trajectories = {a: Trajectory(tuple(s), dt) for a, s in samples.items()}
    return res


def _replay_episode(scenario: Scenario, cfg: PlannerConfig, seed: int) -> EpisodeResult:
    dt = cfg.executive_dt
    n_ticks = episode_ticks(scenario, cfg, None)
    ref = select_reference_human(scenario, n_ticks, dt, seed)
    res = EpisodeResult(scenario.id, "HO", ref, dt, {})
    samples: dict[str, list] = {}
    for k in range(n_ticks + 1):
        t = k * dt
        for h in human_states(scenario, t):
            samples.setdefault(h.id, []).append((k, h.position))
            res.rows.append(LogRow(k, t, h.id, "human", h.position.x, h.position.y, h.heading, h.speed, "replay"))
    res.trajectories = {a: Trajectory(tuple(s), dt) for a, s in samples.items()}
    res.reached_goal = True
    return res


def episode_metrics(result: EpisodeResult, scenario: Scenario) -> MetricReport:
    """PLR, PR and CPD of the controlled agent (or the HO reference human).

    Undefined metrics are reported as NaN.
    """
    agent = result.controlled_id
    traj = result.trajectories.get(agent)
    others = [t for a, t in result.trajectories.items() if a != agent]

    def safe(fn, *args):
        try:
            return fn(*args)
        except UndefinedMetricError:
            return math.nan

    if traj is None:
        return MetricReport(scenario.id, result.condition, str(agent), math.nan, math.nan, math.nan, False)
    return MetricReport(
        scenario.id, result.condition, agent,
        safe(path_length_ratio, traj),
        safe(path_regularity, traj),
        safe(closest_pedestrian_distance, traj, others, scenario.arena_diagonal),
        result.reached_goal,
    )
