"""Independent pure-Python reference computations used by the tests.

The reference math is plain Python; gtnav types are only used to build inputs.
"""

import itertools
import math

from gtnav.core import AgentState, GameConfig, Vec2
from gtnav.game_model import ObstacleGrid
from gtnav.nash import Game, Player


def rollout(x, y, speed, headings, dt, factors=None):
    pts = [(x, y)]
    for k, h in enumerate(headings):
        f = 1.0 if factors is None else factors[k]
        x += speed * f * dt * math.cos(h)
        y += speed * f * dt * math.sin(h)
        pts.append((x, y))
    return pts


def wrap(a):
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def plan_cost(state, goal, headings, cfg, factors=None):
    pts = rollout(state.position.x, state.position.y, state.speed, headings, cfg.dt, factors)
    goal_term = sum(g * math.hypot(px - goal.x, py - goal.y) for g, (px, py) in zip(cfg.gamma, pts[1:]))
    smooth = 0.0
    prev = state.heading
    for g, h in zip(cfg.gamma, headings):
        smooth += (1 - g) * abs(wrap(h - prev))
        prev = h
    return goal_term + smooth


def collides(pts_a, pts_b, required):
    return any(math.hypot(a[0] - b[0], a[1] - b[1]) < required for a, b in zip(pts_a[1:], pts_b[1:]))


def all_offset_sequences(cfg):
    """Every offset sequence in the declared tie-break order."""
    seqs = list(itertools.product(range(len(cfg.action_set)), repeat=cfg.horizon_T))
    seqs.sort(key=lambda s: (round(sum(abs(cfg.action_set[i]) for i in s), 9), s))
    return [[cfg.action_set[i] for i in s] for s in seqs]


def headings_of(start, offsets):
    out, h = [], start
    for u in offsets:
        h = wrap(h + u)
        out.append(h)
    return out


def brute_best_response(agent_id, players, plans, cfg, margin=0.0):
    """(best cost, headings) over all candidates, feasible ones first.

    ``players`` maps id to (state, goal); ``plans`` maps id to headings.
    """
    st, goal = players[agent_id]
    others = []
    for j, (sj, _) in players.items():
        if j != agent_id:
            others.append(rollout(sj.position.x, sj.position.y, sj.speed, plans[j], cfg.dt))
    best = None
    for offs in all_offset_sequences(cfg):
        hs = headings_of(st.heading, offs)
        pts = rollout(st.position.x, st.position.y, st.speed, hs, cfg.dt)
        if any(collides(pts, o, cfg.beta + margin) for o in others):
            continue
        c = plan_cost(st, goal, hs, cfg)
        if best is None or c < best[0] - 1e-12:
            best = (c, hs)
    return best


def random_game(rng, n_agents, cfg):
    """Agents on a ring heading roughly through the middle, so their
    straight paths tend to conflict."""
    players = {}
    for i in range(n_agents):
        ang = rng.uniform(0, 2 * math.pi)
        r = rng.uniform(1.5, 3.0)
        x, y = r * math.cos(ang), r * math.sin(ang)
        heading = math.atan2(-y, -x) + rng.normal(0, 0.3)
        speed = rng.uniform(0.6, 1.4)
        st = AgentState(f"a{i}", Vec2(x, y), heading, speed)
        reach = speed * cfg.horizon_T * cfg.dt
        goal = Vec2(x + reach * math.cos(st.heading), y + reach * math.sin(st.heading))
        players[st.id] = Player(st, goal)
    return Game(players, ObstacleGrid.empty())


def small_cfg():
    return GameConfig.with_horizon(2)
