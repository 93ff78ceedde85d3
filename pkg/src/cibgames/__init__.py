"""Two-team zero-sum games solved over common-information beliefs."""

from .belief import Belief, cib_update, cib_update_one_sided, initial_belief, joint_transform
from .bestresponse import BestResponsePolicy, exploitability, solve_best_response
from .model import GameModel, builtin_example, check_one_sided, load_game, validate
from .oracle import brute_force_best_response, brute_force_upper
from .prescriptions import Prescription, enumerate_pure
from .sim import ScriptedTeam2, monte_carlo_cost, rollout
from .solver import Refinement, SolverConfig, game_value, solve_lower, solve_upper
from .strategy import ConstantPolicy, MinmaxPolicy, start, step

__all__ = [
    "Belief",
    "BestResponsePolicy",
    "ConstantPolicy",
    "GameModel",
    "MinmaxPolicy",
    "Prescription",
    "Refinement",
    "ScriptedTeam2",
    "SolverConfig",
    "brute_force_best_response",
    "brute_force_upper",
    "builtin_example",
    "check_one_sided",
    "cib_update",
    "cib_update_one_sided",
    "enumerate_pure",
    "exploitability",
    "game_value",
    "initial_belief",
    "joint_transform",
    "load_game",
    "monte_carlo_cost",
    "rollout",
    "solve_best_response",
    "solve_lower",
    "solve_upper",
    "start",
    "step",
    "validate",
]
