"""Receding-horizon robot planner built on the navigation game.

One planning tick runs group recognition, the straight first estimate, a
collision check per effective agent and the branch arbitration between the
game solution, deceleration, individual optimization and keeping straight.
Only the robot's first action is executed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ActionPlan, AgentKind, AgentState, GameConfig, Vec2, angle_diff, normalize_angle
from .game_model import CostBreakdown, ObstacleGrid, estimate_goal, rollout_batch, sample_batch
from .nash import (
    BestResponse,
    Game,
    JointStrategy,
    Player,
    best_response,
    plan_cost,
    plan_samples,
    plan_violations,
    separation_violations,
    solve_nash,
    straight_strategy,
)


class Branch(enum.Enum):
    NASH_GAME = "NashGame"
    DECELERATE = "Decelerate"
    INDIVIDUAL = "IndividualOptimization"
    KEEP_STRAIGHT = "KeepStraight"


@dataclass(frozen=True)
class PlannerConfig:
    """Planner settings around a :class:`GameConfig`.

    ``tick_dt`` defaults to the replanning period ``1 / game.replan_hz``.
    ``separation_margin`` is added to the vital radius while planning only.
    """

    game: GameConfig = field(default_factory=GameConfig)
    tick_dt: Optional[float] = None
    group_heading_tolerance: float = math.pi / 6
    decel_levels: int = 16
    separation_margin: float = 0.1
    goal_tolerance: float = 0.25
    robot_speed: Optional[float] = None
    tick_cap_factor: float = 3.0
    safety_check: bool = True
    safety_horizon: float = 2.4
    robot_radius: Optional[float] = None
    smooth_from_actual_heading: bool = True
    hold_steps: bool = True
    plan_humans: bool = True

    @property
    def robot_body_radius(self) -> float:
        """Body radius of the controlled robot, ``beta / 2`` unless set."""
        return self.game.beta / 2 if self.robot_radius is None else self.robot_radius

    @property
    def executive_dt(self) -> float:
        return self.tick_dt if self.tick_dt is not None else 1.0 / self.game.replan_hz

    def planning_game_config(self) -> GameConfig:
        """Game config with the next executive tick added as a check time."""
        frac = self.executive_dt / self.game.dt
        extra = self.game.extra_check_times
        if 0 < frac < self.game.horizon_T and frac not in extra:
            extra = extra + (frac,)
        return replace(self.game, extra_check_times=extra)


@dataclass(frozen=True)
class EffectiveAgent:
    id: str
    state: AgentState
    members: tuple[str, ...]
    radius_extra: float = 0.0


@dataclass(frozen=True)
class GroupAssignment:
    groups: list
    effective_agents: list

    def agent(self, agent_id: str) -> EffectiveAgent:
        for a in self.effective_agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)


@dataclass(frozen=True)
class CollisionFlags:
    c_obs: bool
    c_agents: bool
    first_collision_tick: Optional[int] = None
    first_agent_collision_tick: Optional[int] = None


@dataclass(frozen=True)
class DecelerationResult:
    plan: ActionPlan
    cost: CostBreakdown
    feasible: bool
    pattern: int
    pattern_costs: tuple[float, ...]
    pattern_feasible: tuple[bool, ...]


@dataclass(frozen=True)
class PlannerTickResult:
    agent_id: str
    chosen_plan: ActionPlan
    branch: Branch
    cost: CostBreakdown
    executed_action: tuple[float, float]
    feasible: bool = True
    nash_cost: Optional[float] = None
    decel_cost: Optional[float] = None
    decel_pattern: Optional[int] = None
    safety_fallback: bool = False
    held: bool = False


@dataclass(frozen=True)
class HeldPlan:
    """The robot's last adopted plan and the time elapsed since adoption."""

    result: PlannerTickResult
    elapsed: float


def recognize_groups(agents: Sequence[AgentState], cfg: PlannerConfig) -> GroupAssignment:
    """Merge close, similarly headed humans into pseudo-agents.

    Robots never join groups. Membership is the transitive closure of the
    pairwise relation (distance < beta and wrapped heading difference within
    the tolerance).
    """
    beta = cfg.game.beta
    n = len(agents)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            a, b = agents[i], agents[j]
            if a.is_robot or b.is_robot:
                continue
            close = a.position.dist(b.position) < beta
            aligned = abs(angle_diff(a.heading, b.heading)) <= cfg.group_heading_tolerance + 1e-12
            if close and aligned:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    buckets: dict[int, list[int]] = {}
    for i in range(n):
        buckets.setdefault(find(i), []).append(i)

    groups, effective = [], []
    for root in sorted(buckets):
        idx = buckets[root]
        members = [agents[i] for i in idx]
        groups.append(frozenset(m.id for m in members))
        if len(members) == 1:
            effective.append(EffectiveAgent(members[0].id, members[0], (members[0].id,)))
            continue
        xy = np.array([(m.position.x, m.position.y) for m in members])
        c = xy.mean(axis=0)
        heading = math.atan2(sum(math.sin(m.heading) for m in members),
                             sum(math.cos(m.heading) for m in members))
        speed = float(np.mean([m.speed for m in members]))
        extra = float(np.linalg.norm(xy - c, axis=1).max())
        ids = tuple(sorted(m.id for m in members))
        gid = "group:" + "+".join(ids)
        state = AgentState(gid, Vec2.of(c), heading, speed, AgentKind.SCRIPTED_HUMAN, gid)
        effective.append(EffectiveAgent(gid, state, ids, extra))
    return GroupAssignment(groups, effective)


def build_game(effective: Sequence[EffectiveAgent], grid: ObstacleGrid, cfg: PlannerConfig,
               goals: Optional[dict] = None) -> Game:
    """Players for every effective agent; humans get ray-projected goals."""
    goals = goals or {}
    players = {}
    for a in effective:
        goal = goals.get(a.id)
        if goal is None:
            goal = estimate_goal(a.state, cfg.game).goal_point
        players[a.id] = Player(a.state, goal, a.radius_extra)
    return Game(players, grid, beta_margin=cfg.separation_margin)


def first_estimation(game: Game, cfg: GameConfig) -> JointStrategy:
    """Straight, constant-speed plans for every player."""
    return straight_strategy(game, cfg)


def check_collisions(agent_id: str, joint: JointStrategy, game: Game, cfg: GameConfig) -> CollisionFlags:
    times = cfg.check_times()
    own = plan_samples(game.players[agent_id].state, joint.plans[agent_id], cfg)
    agent_tick = None
    others = [j for j in game.ids if j != agent_id]
    for j in others:
        theirs = plan_samples(game.players[j].state, joint.plans[j], cfg)
        req = game.required_separation(agent_id, j, cfg)
        bad = np.nonzero(np.linalg.norm(own - theirs, axis=1) < req)[0]
        if len(bad):
            t = math.ceil(times[bad[0]] - 1e-12)
            agent_tick = t if agent_tick is None else min(agent_tick, t)
    obs_tick = None
    if game.grid.has_obstacles:
        bad = np.nonzero(game.grid.occupied_at(own))[0]
        if len(bad):
            obs_tick = math.ceil(times[bad[0]] - 1e-12)
    ticks = [t for t in (agent_tick, obs_tick) if t is not None]
    return CollisionFlags(obs_tick is not None, agent_tick is not None,
                          min(ticks) if ticks else None, agent_tick)


def deceleration_plans(start: AgentState, collision_tick: int, cfg: GameConfig, levels: int = 16):
    """Straight plans slowed to ``k / (levels - 1)`` from step ``collision_tick - 1`` on."""
    T = cfg.horizon_T
    first = max(0, min(T, collision_tick) - 1)
    plans = []
    for k in range(levels):
        f = k / (levels - 1)
        factors = tuple(1.0 if s < first else f for s in range(T))
        plans.append(ActionPlan((start.heading,) * T, factors))
    return plans


def decelerate_options(agent_id: str, joint: JointStrategy, game: Game, cfg: GameConfig,
                       collision_tick: int, levels: int = 16) -> DecelerationResult:
    """Score every deceleration pattern; the cheapest feasible one wins.

    Ties go to the milder deceleration. If no pattern is feasible the
    cheapest penalized pattern is returned with ``feasible=False``.
    """
    start = game.players[agent_id].state
    plans = deceleration_plans(start, collision_tick, cfg, levels)
    costs, feas, pen = [], [], []
    for plan in plans:
        c = plan_cost(game, agent_id, plan, cfg).total
        v = plan_violations(game, agent_id, plan, joint, cfg)
        costs.append(c)
        feas.append(v == 0)
        pen.append(c + cfg.infeasibility_penalty * v)
    order = range(levels - 1, -1, -1)
    if any(feas):
        k = min((k for k in order if feas[k]), key=lambda k: costs[k])
    else:
        k = min(order, key=lambda k: pen[k])
    return DecelerationResult(plans[k], plan_cost(game, agent_id, plans[k], cfg), feas[k], k,
                              tuple(costs), tuple(feas))


def individual_optimization(agent_id: str, game: Game, cfg: GameConfig) -> BestResponse:
    """Best response with no opponents and the obstacle term switched on."""
    p = game.players[agent_id]
    solo = Game({agent_id: replace(p, obstacle_term_active=True)}, game.grid, game.beta_margin)
    return best_response(agent_id, straight_strategy(solo, cfg), solo, cfg)


def _first_action(plan: ActionPlan) -> tuple[float, float]:
    return plan.headings[0], plan.speed_factors[0]


def compute_solution(agent_id: str, joint: JointStrategy, flags: CollisionFlags, game: Game,
                     cfg: GameConfig, levels: int = 16,
                     nash: Optional[Callable[[], tuple]] = None) -> PlannerTickResult:
    """Branch arbitration for one agent.

    ``nash`` returns the (joint, report) pair of the game; it is called at
    most once and lets callers share one equilibrium across agents.
    """
    if flags.c_agents:
        eq, report = nash() if nash is not None else solve_nash(game, cfg, joint)
        gt_plan = eq.plans[agent_id]
        gt_cost = plan_cost(game, agent_id, gt_plan, cfg)
        gt_viol = plan_violations(game, agent_id, gt_plan, eq, cfg)
        gt_score = gt_cost.total + cfg.infeasibility_penalty * gt_viol
        dec = decelerate_options(agent_id, joint, game, cfg, flags.first_agent_collision_tick, levels)
        dec_score = dec.cost.total if dec.feasible else math.inf
        if gt_score <= dec_score:
            return PlannerTickResult(agent_id, gt_plan, Branch.NASH_GAME, gt_cost, _first_action(gt_plan),
                                     gt_viol == 0, gt_score, dec_score, dec.pattern)
        return PlannerTickResult(agent_id, dec.plan, Branch.DECELERATE, dec.cost, _first_action(dec.plan),
                                 True, gt_score, dec_score, dec.pattern)
    if flags.c_obs:
        br = individual_optimization(agent_id, game, cfg)
        return PlannerTickResult(agent_id, br.plan, Branch.INDIVIDUAL, br.cost, _first_action(br.plan),
                                 br.feasible)
    plan = joint.plans[agent_id]
    return PlannerTickResult(agent_id, plan, Branch.KEEP_STRAIGHT, plan_cost(game, agent_id, plan, cfg),
                             _first_action(plan), True)


@dataclass
class TickOutcome:
    results: dict
    robot_state: AgentState
    feasible: bool
    groups: Optional[GroupAssignment] = None
    done: bool = False
    nash_report: object = None


def advance_robot(robot: AgentState, goal: Vec2, heading: float, speed: float, dt: float) -> AgentState:
    step = speed * dt
    dist = robot.position.dist(goal)
    bearing = math.atan2(goal.y - robot.position.y, goal.x - robot.position.x)
    if dist <= step and abs(angle_diff(heading, bearing)) < 1e-9:
        pos = goal
    else:
        pos = Vec2(robot.position.x + step * math.cos(heading), robot.position.y + step * math.sin(heading))
    return AgentState(robot.id, pos, heading, speed, robot.kind, robot.group)


def _safety_violations(robot: AgentState, plan: ActionPlan, humans: Sequence[AgentState],
                       grid: ObstacleGrid, cfg: PlannerConfig, horizon: Optional[float] = None) -> int:
    """Violations against straight, constant-velocity humans.

    Checked at the next executive tick and at every game check time up to
    ``horizon`` seconds (``cfg.safety_horizon`` by default).
    """
    tau = cfg.executive_dt
    horizon = cfg.safety_horizon if horizon is None else horizon
    gdt = cfg.game.dt
    steps = [t for t in range(1, cfg.game.horizon_T + 1) if t * gdt <= horizon + 1e-9]
    times = np.array(sorted({tau / gdt, *steps}))
    pts = rollout_batch(robot.position.as_array(), robot.speed, [plan.headings], gdt, [plan.speed_factors])
    own = sample_batch(pts, times)[0]
    n = 0
    req = cfg.game.beta + cfg.separation_margin + cfg.robot_body_radius
    t_sec = np.asarray(times) * gdt
    for a in humans:
        q = np.stack([a.position.x + a.speed * t_sec * math.cos(a.heading),
                      a.position.y + a.speed * t_sec * math.sin(a.heading)], axis=1)
        n += int((np.linalg.norm(own - q, axis=1) < req).any())
    if grid.has_obstacles and grid.occupied_at(own).any():
        n += 1
    return n


def _safety_fallback(robot: AgentState, goal: Vec2, humans: Sequence[AgentState], grid: ObstacleGrid,
                     cfg: PlannerConfig, gcfg: GameConfig, actual_heading: float) -> PlannerTickResult:
    """Re-plan treating every observed human as a non-reactive straight mover."""
    ref = actual_heading if cfg.smooth_from_actual_heading else None
    players = {robot.id: Player(robot, goal, cfg.robot_body_radius, smooth_reference=ref)}
    for a in humans:
        players[a.id] = Player(a, estimate_goal(a, gcfg).goal_point)
    game = Game(players, grid, beta_margin=cfg.separation_margin)
    joint = straight_strategy(game, gcfg)
    br = best_response(robot.id, joint, game, gcfg)
    flags = check_collisions(robot.id, joint, game, gcfg)
    options = [(br.cost.total + gcfg.infeasibility_penalty * br.violations, 0, Branch.INDIVIDUAL,
                br.plan, br.cost)]
    tick = flags.first_agent_collision_tick or flags.first_collision_tick or 1
    dec = decelerate_options(robot.id, joint, game, gcfg, tick, cfg.decel_levels)
    dec_viol = plan_violations(game, robot.id, dec.plan, joint, gcfg)
    options.append((dec.cost.total + gcfg.infeasibility_penalty * dec_viol, 1, Branch.DECELERATE,
                    dec.plan, dec.cost))
    score, _, branch, plan, cost = min(options, key=lambda o: (o[0], o[1]))
    return PlannerTickResult(robot.id, plan, branch, cost, _first_action(plan),
                             score < gcfg.infeasibility_penalty, decel_cost=options[1][0],
                             decel_pattern=dec.pattern, safety_fallback=True)


def plan_tick(robot: AgentState, goal: Vec2, humans: Sequence[AgentState], grid: ObstacleGrid,
              cfg: PlannerConfig, held: Optional[HeldPlan] = None) -> TickOutcome:
    """One pass of the main loop; only the robot state is advanced.

    The robot plans with its heading reset to the goal bearing and its
    nominal speed taken from ``cfg.robot_speed`` (or its current speed).
    With ``cfg.hold_steps`` a plan adopted less than one game step ago is
    kept while the next executive interval still falls inside its first
    step and it passes the safety check against straight-moving humans.
    """
    if robot.position.dist(goal) <= max(cfg.goal_tolerance, 1e-9):
        return TickOutcome({}, robot, True, done=True)
    gcfg = cfg.planning_game_config()
    speed = cfg.robot_speed if cfg.robot_speed is not None else robot.speed
    bearing = math.atan2(goal.y - robot.position.y, goal.x - robot.position.x)
    planning_robot = AgentState(robot.id, robot.position, bearing, speed, AgentKind.CONTROLLED_ROBOT)

    if (cfg.hold_steps and held is not None
            and held.elapsed + cfg.executive_dt <= gcfg.dt + 1e-9):
        plan = held.result.chosen_plan
        if not _safety_violations(planning_robot, plan, humans, grid, cfg):
            kept = replace(held.result, held=True)
            heading, factor = kept.executed_action
            new_state = advance_robot(planning_robot, goal, heading, speed * factor, cfg.executive_dt)
            return TickOutcome({robot.id: kept}, new_state, kept.feasible)

    groups = recognize_groups([planning_robot, *humans], cfg)
    groups = replace(groups, effective_agents=[
        replace(a, radius_extra=cfg.robot_body_radius) if a.id == robot.id else a
        for a in groups.effective_agents])
    game = build_game(groups.effective_agents, grid, cfg, {robot.id: goal})
    ref = robot.heading if cfg.smooth_from_actual_heading else None
    game.players[robot.id] = replace(game.players[robot.id], smooth_reference=ref)
    joint = first_estimation(game, gcfg)

    nash_memo: list = []

    def nash():
        if not nash_memo:
            nash_memo.append(solve_nash(game, gcfg, joint))
        return nash_memo[0]

    results = {}
    for a in groups.effective_agents:
        if a.id != robot.id and not cfg.plan_humans:
            continue
        flags = check_collisions(a.id, joint, game, gcfg)
        results[a.id] = compute_solution(a.id, joint, flags, game, gcfg, cfg.decel_levels, nash)

    chosen = results[robot.id]
    if cfg.safety_check and _safety_violations(planning_robot, chosen.chosen_plan, humans, grid, cfg):
        fb = _safety_fallback(planning_robot, goal, humans, grid, cfg, gcfg, robot.heading)
        nash_cost = chosen.nash_cost
        if nash_memo:
            # the game plan is charged for the conflicts that made it rejected
            gt_plan = nash_memo[0][0].plans[robot.id]
            unsafe = _safety_violations(planning_robot, gt_plan, humans, grid, cfg)
            nash_cost += gcfg.infeasibility_penalty * unsafe
        chosen = replace(fb, nash_cost=nash_cost)
        results[robot.id] = chosen
    feasible = chosen.feasible
    if cfg.safety_check:
        feasible = feasible and _safety_violations(planning_robot, chosen.chosen_plan, humans, grid, cfg,
                                                   horizon=0.0) == 0

    heading, factor = chosen.executed_action
    new_state = advance_robot(planning_robot, goal, heading, speed * factor, cfg.executive_dt)
    return TickOutcome(results, new_state, feasible, groups,
                       done=False, nash_report=nash_memo[0][1] if nash_memo else None)
