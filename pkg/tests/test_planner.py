import math

import numpy as np
import pytest

from gtnav.core import AgentKind, AgentState, GameConfig, Vec2
from gtnav.game_model import ObstacleGrid
from gtnav.nash import Game, Player, plan_cost, plan_violations, solve_nash
from gtnav.planner import (
    Branch,
    PlannerConfig,
    check_collisions,
    compute_solution,
    decelerate_options,
    first_estimation,
    plan_tick,
    recognize_groups,
)
from gtnav.synthetic import corridor_scenario

import oracles


def human(aid, x, y, h=0.0, v=1.0):
    return AgentState(aid, Vec2(x, y), h, v)


def test_groups_close_and_aligned():
    g = recognize_groups([human("a", 0, 0), human("b", 0.3, 0)], PlannerConfig())
    assert g.groups == [frozenset({"a", "b"})]
    eff = g.effective_agents[0]
    assert eff.members == ("a", "b")
    assert (eff.state.position.x, eff.state.position.y) == pytest.approx((0.15, 0.0))
    assert eff.radius_extra == pytest.approx(0.15)


def test_groups_opposite_headings_stay_apart():
    g = recognize_groups([human("a", 0, 0, 0.0), human("b", 0.3, 0, math.pi)], PlannerConfig())
    assert len(g.groups) == 2
    assert all(e.radius_extra == 0 for e in g.effective_agents)


def test_groups_transitive_chain():
    agents = [human("a", 0, 0), human("b", 0.5, 0), human("c", 1.0, 0)]
    g = recognize_groups(agents, PlannerConfig())
    assert g.groups == [frozenset({"a", "b", "c"})]
    assert g.effective_agents[0].radius_extra == pytest.approx(0.5)


def test_robot_never_grouped():
    robot = AgentState("r", Vec2(0, 0), 0.0, 1.0, AgentKind.CONTROLLED_ROBOT)
    g = recognize_groups([robot, human("a", 0.2, 0)], PlannerConfig())
    assert len(g.groups) == 2


def _game(players, grid=None, margin=0.0):
    return Game({p.state.id: p for p in players}, grid or ObstacleGrid.empty(), beta_margin=margin)


def test_first_estimation():
    cfg = GameConfig()
    assert dict(first_estimation(_game([]), cfg).plans) == {}
    game = _game([Player(human("a", 0, 0, math.pi / 4), Vec2(1, 1)), Player(human("b", 5, 5, 2.0), Vec2(0, 0))])
    joint = first_estimation(game, cfg)
    for aid, plan in joint.plans.items():
        assert len(set(plan.headings)) == 1
        assert plan.headings[0] == game.players[aid].state.heading


def test_check_collisions_head_on_tick_2():
    cfg = GameConfig()
    game = _game([Player(human("a", 0, 0, 0.0), Vec2(4.8, 0)), Player(human("b", 4.8, 0, math.pi), Vec2(0, 0))])
    flags = check_collisions("a", first_estimation(game, cfg), game, cfg)
    assert flags.c_agents and not flags.c_obs
    assert flags.first_collision_tick == 2


def test_check_collisions_obstacle_and_empty():
    cfg = GameConfig()
    grid = ObstacleGrid.from_rectangles([(3.0, -0.5, 3.8, 0.5)], 40, 10, 0.2, Vec2(0, -1))
    game = _game([Player(human("a", 0.1, 0.05, 0.0), Vec2(4.9, 0))], grid)
    flags = check_collisions("a", first_estimation(game, cfg), game, cfg)
    assert flags.c_obs and not flags.c_agents and flags.first_collision_tick == 3
    empty = _game([Player(human("a", 0, 0), Vec2(4.8, 0))])
    f2 = check_collisions("a", first_estimation(empty, cfg), empty, cfg)
    assert not f2.c_obs and not f2.c_agents and f2.first_collision_tick is None


def _oracle_decel(game, cfg, aid, collision_tick):
    st, goal = game.players[aid].state, game.players[aid].goal
    first = collision_tick - 1
    others = [p for k, p in game.players.items() if k != aid]
    rows = []
    for k in range(16):
        f = [1.0 if s < first else k / 15 for s in range(cfg.horizon_T)]
        hs = [st.heading] * cfg.horizon_T
        pts = oracles.rollout(st.position.x, st.position.y, st.speed, hs, cfg.dt, f)
        ok = not any(oracles.collides(pts, oracles.rollout(o.state.position.x, o.state.position.y, o.state.speed,
                                                            [o.state.heading] * cfg.horizon_T, cfg.dt), cfg.beta)
                     for o in others)
        rows.append((k, oracles.plan_cost(st, goal, hs, cfg, f), ok))
    return rows


def test_decelerate_crossing_pedestrian_matches_16_way_oracle():
    cfg = GameConfig()
    game = _game([Player(human("r", 0, 0, 0.0), Vec2(4.8, 0)),
                  Player(human("p", 2.4, -2.4, math.pi / 2), Vec2(2.4, 2.4))])
    joint = first_estimation(game, cfg)
    flags = check_collisions("r", joint, game, cfg)
    assert flags.first_agent_collision_tick == 2
    dec = decelerate_options("r", joint, game, cfg, 2)
    rows = _oracle_decel(game, cfg, "r", 2)
    feasible = [r for r in rows if r[2]]
    best = min(feasible, key=lambda r: (r[1], -r[0]))
    assert dec.feasible and dec.pattern == best[0]
    assert 0 < dec.pattern < 15
    assert dec.cost.total == pytest.approx(best[1], abs=1e-9)
    assert dec.pattern_feasible == tuple(r[2] for r in rows)
    np.testing.assert_allclose(dec.pattern_costs, [r[1] for r in rows], atol=1e-9)
    assert dec.cost.total < dec.pattern_costs[0]


def test_decelerate_no_conflict_prefers_full_speed():
    cfg = GameConfig()
    game = _game([Player(human("r", 0, 0), Vec2(4.8, 0))])
    dec = decelerate_options("r", first_estimation(game, cfg), game, cfg, 1)
    assert dec.pattern == 15


def test_decelerate_permanent_blocker_forces_stop():
    cfg = GameConfig()
    game = _game([Player(human("r", 0, 0), Vec2(4.8, 0)), Player(human("p", 0.9, 0, math.pi, 0.0), Vec2(0.9, 0))])
    dec = decelerate_options("r", first_estimation(game, cfg), game, cfg, 1)
    assert dec.pattern_feasible == (True,) + (False,) * 15
    assert dec.pattern == 0 and dec.plan.speed_factors == (0.0,) * 4


def test_compute_solution_keep_straight():
    cfg = GameConfig()
    game = _game([Player(human("r", 0, 0), Vec2(4.8, 0))])
    joint = first_estimation(game, cfg)
    res = compute_solution("r", joint, check_collisions("r", joint, game, cfg), game, cfg)
    assert res.branch is Branch.KEEP_STRAIGHT and res.chosen_plan == joint.plans["r"]
    assert res.executed_action == (res.chosen_plan.headings[0], res.chosen_plan.speed_factors[0])


def test_compute_solution_obstacle_only():
    cfg = GameConfig()
    grid = ObstacleGrid.from_rectangles([(2.0, -0.6, 3.0, 0.6)], 40, 20, 0.2, Vec2(0, -2))
    game = _game([Player(human("r", 0.1, 0.0), Vec2(4.9, 0))], grid)
    joint = first_estimation(game, cfg)
    flags = check_collisions("r", joint, game, cfg)
    res = compute_solution("r", joint, flags, game, cfg)
    assert res.branch is Branch.INDIVIDUAL and res.feasible
    assert res.chosen_plan != joint.plans["r"]
    assert res.cost.obstacle_term > 0


def test_compute_solution_corridor_decelerates():
    sc = corridor_scenario()
    cfg = GameConfig()
    ped = human("p1", 3.0, 2.0, 0.0, 0.4)
    robot = AgentState("robot", Vec2(1.0, 2.0), 0.0, 1.0, AgentKind.CONTROLLED_ROBOT)
    game = _game([Player(robot, Vec2(13.0, 2.0), 0.3), Player(ped, Vec2(3.0 + 0.4 * 4.8, 2.0))], sc.grid, 0.1)
    joint = first_estimation(game, cfg)
    flags = check_collisions("robot", joint, game, cfg)
    assert flags.c_agents
    res = compute_solution("robot", joint, flags, game, cfg)
    assert res.branch is Branch.DECELERATE
    # independent recomputation of both branch costs
    eq, _ = solve_nash(game, cfg, joint)
    gt = plan_cost(game, "robot", eq.plans["robot"], cfg).total
    gt += cfg.infeasibility_penalty * plan_violations(game, "robot", eq.plans["robot"], eq, cfg)
    dec = decelerate_options("robot", joint, game, cfg, flags.first_agent_collision_tick)
    assert res.nash_cost == pytest.approx(gt) and res.decel_cost == pytest.approx(dec.cost.total)
    assert res.decel_cost <= res.nash_cost


def test_plan_tick_empty_scene_advances_along_goal_ray():
    cfg = PlannerConfig(robot_speed=1.0)
    robot = AgentState("robot", Vec2(0, 0), 0.0, 1.0, AgentKind.CONTROLLED_ROBOT)
    out = plan_tick(robot, Vec2(4.8, 0), [], ObstacleGrid.empty(), cfg)
    r = out.results["robot"]
    assert r.branch is Branch.KEEP_STRAIGHT and out.feasible
    assert out.robot_state.position.x == pytest.approx(0.5, abs=1e-12)
    assert out.robot_state.position.y == pytest.approx(0.0, abs=1e-12)


def test_plan_tick_at_goal_is_noop():
    robot = AgentState("robot", Vec2(4.8, 0), 0.0, 1.0, AgentKind.CONTROLLED_ROBOT)
    out = plan_tick(robot, Vec2(4.8, 0), [], ObstacleGrid.empty(), PlannerConfig())
    assert out.done and out.results == {} and out.robot_state == robot


def test_plan_tick_executes_first_action():
    rng = np.random.default_rng(2)
    cfg = PlannerConfig(robot_speed=1.0)
    for _ in range(10):
        robot = AgentState("robot", Vec2(0, 0), 0.0, 1.0, AgentKind.CONTROLLED_ROBOT)
        humans = [human(f"h{i}", rng.uniform(1.5, 5), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi),
                        rng.uniform(0.5, 1.3)) for i in range(3)]
        out = plan_tick(robot, Vec2(8, 0), humans, ObstacleGrid.empty(), cfg)
        r = out.results["robot"]
        assert r.executed_action == (r.chosen_plan.headings[0], r.chosen_plan.speed_factors[0])
        h, f = r.executed_action
        d = out.robot_state.position
        assert d.x == pytest.approx(0.5 * f * math.cos(h), abs=1e-12)
        assert d.y == pytest.approx(0.5 * f * math.sin(h), abs=1e-12)
        if r.branch is Branch.DECELERATE:
            assert r.decel_cost <= r.nash_cost
