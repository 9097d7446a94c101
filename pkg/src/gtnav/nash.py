"""Sequential best-response search for a pure Nash equilibrium over discrete plans.

Each player chooses a heading sequence from the ``|action_set| ** horizon_T``
candidates. A best response is an exhaustive scan of those candidates against
the other players' current rollouts; infeasible candidates (separation or
obstacle violations at any check time) are discarded unless nothing is
feasible, in which case the penalized minimum is returned and flagged.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .core import ActionPlan, AgentState, GameConfig, Vec2, normalize_angles
from .game_model import (
    CostBreakdown,
    ObstacleGrid,
    first_estimate_hits_obstacle,
    goal_cost_batch,
    obstacle_cost_batch,
    rollout_batch,
    sample_batch,
    smooth_cost_batch,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Player:
    """One participant of the game.

    ``radius_extra`` enlarges the vital radius (merged groups). When
    ``obstacle_term_active`` is None it is derived from whether the straight
    projection of the player enters an obstacle. ``smooth_reference`` is the
    heading the first turn is measured from (the state heading if None).
    """

    state: AgentState
    goal: Vec2
    radius_extra: float = 0.0
    obstacle_term_active: Optional[bool] = None
    smooth_reference: Optional[float] = None

    @property
    def reference_heading(self) -> float:
        return self.state.heading if self.smooth_reference is None else self.smooth_reference


@dataclass
class Game:
    players: dict[str, Player]
    grid: ObstacleGrid
    beta_margin: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.players = {k: self.players[k] for k in sorted(self.players)}

    @property
    def ids(self) -> list[str]:
        return list(self.players)

    def required_separation(self, i: str, j: str, cfg: GameConfig) -> float:
        return cfg.beta + self.beta_margin + self.players[i].radius_extra + self.players[j].radius_extra

    def obstacle_active(self, agent_id: str, cfg: GameConfig) -> bool:
        p = self.players[agent_id]
        if p.obstacle_term_active is not None:
            return p.obstacle_term_active
        return first_estimate_hits_obstacle(p.state, self.grid, cfg)

    def candidates(self, agent_id: str, cfg: GameConfig) -> "_Candidates":
        key = (agent_id, cfg)
        if key not in self._cache:
            self._cache[key] = _Candidates.build(self, agent_id, cfg)
        return self._cache[key]


@dataclass(frozen=True)
class JointStrategy:
    plans: Mapping[str, ActionPlan]
    iteration: int = 0

    def key(self) -> tuple:
        return tuple((k, p.headings, p.speed_factors) for k, p in sorted(self.plans.items()))

    def replace(self, agent_id: str, plan: ActionPlan, iteration: Optional[int] = None) -> JointStrategy:
        plans = dict(self.plans)
        plans[agent_id] = plan
        return JointStrategy(plans, self.iteration if iteration is None else iteration)


@dataclass(frozen=True)
class BestResponse:
    plan: ActionPlan
    cost: CostBreakdown
    feasible: bool
    violations: int = 0


@dataclass(frozen=True)
class BestResponseReport:
    converged: bool
    iterations_used: int
    cycle_detected: bool
    per_agent_cost: dict
    per_agent_feasible: dict


@lru_cache(maxsize=16)
def offset_table(action_set: tuple[float, ...], horizon: int) -> np.ndarray:
    """All offset sequences, ordered for tie-breaking.

    Order: total absolute offset ascending, then lexicographic in the order
    the action set lists its offsets.
    """
    idx = list(itertools.product(range(len(action_set)), repeat=horizon))
    u = np.asarray(action_set)
    idx.sort(key=lambda seq: (round(float(np.abs(u[list(seq)]).sum()), 9), seq))
    table = u[np.asarray(idx)]
    table.setflags(write=False)
    return table


@dataclass
class _Candidates:
    headings: np.ndarray        # (C, T)
    samples: np.ndarray         # (C, S, 2) positions at check times
    goal: np.ndarray            # (C,)
    smooth: np.ndarray
    obstacle: np.ndarray
    saturated: np.ndarray
    obstacle_violations: np.ndarray  # (C,) int

    @property
    def base(self) -> np.ndarray:
        return self.goal + self.smooth + self.obstacle

    @classmethod
    def build(cls, game: Game, agent_id: str, cfg: GameConfig) -> _Candidates:
        p = game.players[agent_id]
        st = p.state
        offsets = offset_table(cfg.action_set, cfg.horizon_T)
        headings = normalize_angles(st.heading + np.cumsum(offsets, axis=1))
        pts = rollout_batch(st.position.as_array(), st.speed, headings, cfg.dt)
        samples = sample_batch(pts, cfg.check_times())
        goal = goal_cost_batch(pts, p.goal.as_array(), cfg.gamma)
        smooth = smooth_cost_batch(headings, p.reference_heading, cfg.gamma)
        if game.obstacle_active(agent_id, cfg):
            obstacle, saturated = obstacle_cost_batch(pts, game.grid, cfg.rho)
        else:
            obstacle, saturated = np.zeros(len(headings)), np.zeros(len(headings), dtype=bool)
        if game.grid.has_obstacles:
            obs_viol = game.grid.occupied_at(samples).sum(axis=1)
        else:
            obs_viol = np.zeros(len(headings), dtype=np.int64)
        return cls(headings, samples, goal, smooth, obstacle, saturated, obs_viol)


def plan_samples(state: AgentState, plan: ActionPlan, cfg: GameConfig) -> np.ndarray:
    """Positions ``(S, 2)`` of ``plan`` at the configured check times."""
    pts = rollout_batch(state.position.as_array(), state.speed, [plan.headings], cfg.dt,
                        [plan.speed_factors])
    return sample_batch(pts, cfg.check_times())[0]


def plan_cost(game: Game, agent_id: str, plan: ActionPlan, cfg: GameConfig) -> CostBreakdown:
    """Cost of an arbitrary plan (speed factors allowed) for ``agent_id``."""
    p = game.players[agent_id]
    pts = rollout_batch(p.state.position.as_array(), p.state.speed, [plan.headings], cfg.dt,
                        [plan.speed_factors])
    g = float(goal_cost_batch(pts, p.goal.as_array(), cfg.gamma)[0])
    s = float(smooth_cost_batch([plan.headings], p.reference_heading, cfg.gamma)[0])
    o, sat = 0.0, False
    if game.obstacle_active(agent_id, cfg):
        oc, sc = obstacle_cost_batch(pts, game.grid, cfg.rho)
        o, sat = float(oc[0]), bool(sc[0])
    return CostBreakdown(g, s, o, sat)


def separation_violations(samples: np.ndarray, others: np.ndarray, required: np.ndarray) -> np.ndarray:
    """Count (other, check time) pairs closer than the required separation.

    ``samples`` is ``(C, S, 2)``, ``others`` is ``(M, S, 2)`` and ``required``
    is ``(M,)``; returns ``(C,)`` counts.
    """
    if len(others) == 0:
        return np.zeros(samples.shape[0], dtype=np.int64)
    diff = samples[:, None, :, :] - others[None, :, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    return (dist < required[None, :, None]).sum(axis=(1, 2))


def _others(game: Game, agent_id: str, joint: JointStrategy, cfg: GameConfig):
    ids = [j for j in game.ids if j != agent_id]
    if not ids:
        return np.zeros((0, len(cfg.check_times()), 2)), np.zeros(0)
    missing = [j for j in ids if j not in joint.plans]
    if missing:
        raise KeyError(f"joint strategy has no plan for {missing}")
    samples = np.stack([plan_samples(game.players[j].state, joint.plans[j], cfg) for j in ids])
    required = np.array([game.required_separation(agent_id, j, cfg) for j in ids])
    return samples, required


def plan_violations(game: Game, agent_id: str, plan: ActionPlan, joint: JointStrategy, cfg: GameConfig) -> int:
    """Hard-constraint violation count of ``plan`` against the others in ``joint``."""
    own = plan_samples(game.players[agent_id].state, plan, cfg)[None]
    others, required = _others(game, agent_id, joint, cfg)
    n = int(separation_violations(own, others, required)[0])
    if game.grid.has_obstacles:
        n += int(game.grid.occupied_at(own).sum())
    return n


def best_response(agent_id: str, joint: JointStrategy, game: Game, cfg: GameConfig) -> BestResponse:
    """Exhaustive best response of ``agent_id`` to the other plans in ``joint``."""
    cand = game.candidates(agent_id, cfg)
    others, required = _others(game, agent_id, joint, cfg)
    viol = separation_violations(cand.samples, others, required) + cand.obstacle_violations
    base = cand.base
    feasible = viol == 0
    if feasible.any():
        k = int(np.argmin(np.where(feasible, base, np.inf)))
        ok = True
    else:
        k = int(np.argmin(base + cfg.infeasibility_penalty * viol))
        ok = False
    plan = ActionPlan(tuple(float(h) for h in cand.headings[k]))
    cost = CostBreakdown(float(cand.goal[k]), float(cand.smooth[k]), float(cand.obstacle[k]),
                         bool(cand.saturated[k]))
    return BestResponse(plan, cost, ok, int(viol[k]))


def straight_strategy(game: Game, cfg: GameConfig) -> JointStrategy:
    return JointStrategy({k: ActionPlan.straight(p.state.heading, cfg.horizon_T)
                          for k, p in game.players.items()})


def solve_nash(game: Game, cfg: GameConfig, initial: Optional[JointStrategy] = None):
    """Sequential best response in id order.

    Stops once every player has best-responded to the current profile without
    changing it (a full pass worth of unchanged responses), when a joint
    strategy seen at the end of an earlier pass recurs, or after
    ``cfg.max_br_iterations`` passes. Returns ``(JointStrategy, BestResponseReport)``.
    """
    joint = initial if initial is not None else straight_strategy(game, cfg)
    ids = game.ids
    n = len(ids)
    if n == 0:
        return joint, BestResponseReport(True, 0, False, {}, {})
    stable = 0
    seen = {joint.key()}
    converged = cycle = False
    feasible = {}
    passes = 0
    for passes in range(1, cfg.max_br_iterations + 1):
        for agent_id in ids:
            br = best_response(agent_id, joint, game, cfg)
            feasible[agent_id] = br.feasible
            if br.plan != joint.plans[agent_id]:
                joint = joint.replace(agent_id, br.plan, passes)
                stable = 1
            else:
                stable += 1
            if stable >= n:
                converged = True
                break
        if converged:
            break
        key = joint.key()
        if key in seen:
            cycle = True
            log.debug("best-response cycle after %d passes", passes)
            break
        seen.add(key)
    joint = JointStrategy(dict(joint.plans), passes)
    costs = {k: plan_cost(game, k, joint.plans[k], cfg) for k in ids}
    return joint, BestResponseReport(converged, passes, cycle, costs, feasible)


def _penalized(game: Game, agent_id: str, plan: ActionPlan, joint: JointStrategy, cfg: GameConfig) -> float:
    c = plan_cost(game, agent_id, plan, cfg).total
    return c + cfg.infeasibility_penalty * plan_violations(game, agent_id, plan, joint, cfg)


def verify_equilibrium(joint: JointStrategy, game: Game, cfg: GameConfig, tol: float = 1e-9) -> bool:
    """True iff no player has a feasible candidate strictly cheaper than its plan."""
    for agent_id in game.ids:
        current = _penalized(game, agent_id, joint.plans[agent_id], joint, cfg)
        cand = game.candidates(agent_id, cfg)
        others, required = _others(game, agent_id, joint, cfg)
        viol = separation_violations(cand.samples, others, required) + cand.obstacle_violations
        feasible = viol == 0
        if not feasible.any():
            continue
        best = float(cand.base[feasible].min())
        if best < current - tol * max(1.0, abs(current)):
            return False
    return True
