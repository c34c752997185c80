"""Score-dependent tennis game model, constrained Pareto frontiers and efficiency metrics."""

from .game_model import GameOutcome, NonAbsorbing, induced_average_pwp, simulate_game, solve_chain
from .metrics import efficiency_score, optimal_contrast, strategy_fit
from .pareto import CategoryConfig, Frontier, FrontierPoint, merge_frontiers, nsga2_optimize
from .states import STATE_LABELS, STATE_ORDER_VERSION, TRANSIENT_STATES

__version__ = "0.1.0"

__all__ = [
    "CategoryConfig",
    "Frontier",
    "FrontierPoint",
    "GameOutcome",
    "NonAbsorbing",
    "STATE_LABELS",
    "STATE_ORDER_VERSION",
    "TRANSIENT_STATES",
    "efficiency_score",
    "induced_average_pwp",
    "merge_frontiers",
    "nsga2_optimize",
    "optimal_contrast",
    "simulate_game",
    "solve_chain",
    "strategy_fit",
]
