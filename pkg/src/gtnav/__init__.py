"""Game-theoretic robot navigation among replayed pedestrians, with a VFH+
baseline, path metrics and nonparametric statistics."""

from .core import ActionPlan, AgentKind, AgentState, GameConfig, Trajectory, Vec2
from .game_model import ObstacleGrid
from .nash import Game, Player, solve_nash, verify_equilibrium
from .planner import Branch, PlannerConfig, plan_tick
from .scenario import Scenario, load_manifest, load_scenario
from .simulation import PlannerKind, episode_metrics, run_episode
from .vfh import VfhConfig

__version__ = "0.1.0"

__all__ = [
    "ActionPlan", "AgentKind", "AgentState", "Branch", "Game", "GameConfig", "ObstacleGrid",
    "PlannerConfig", "PlannerKind", "Player", "Scenario", "Trajectory", "Vec2", "VfhConfig",
    "episode_metrics", "load_manifest", "load_scenario", "plan_tick", "run_episode", "solve_nash",
    "verify_equilibrium",
]
