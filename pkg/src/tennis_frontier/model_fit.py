"""Constant vs score-dependent point-winning models.

Each player's matches give one observation per match for two targets: the
fraction of games won and the mean number of points per game.  Both models
predict a single value per target (the chain outcome of the estimated
strategy), and fit is scored with Gaussian-residual AIC/BIC and adjusted R^2.
``k`` counts probability parameters only: 1 for the constant model, 18 for
the score-dependent one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game_model import solve_chain
from .ingest import MatchObservation, PlayerTallies

TARGETS = ("game_win_probability", "expected_points")
MODELS = {"constant": 1, "score_dependent": 18}


class EstimationError(ValueError):
    pass


class DegenerateFit(ArithmeticError):
    """Residual sum of squares is exactly zero."""


def estimate_strategies(tallies: PlayerTallies):
    """Return ``(constant, score_dependent, imputed_indices)``.

    Unvisited scores take the player's overall average and are listed in
    ``imputed_indices``.
    """
    total = tallies.total_played
    if total <= 0:
        raise EstimationError(f"{tallies.player}/{tallies.role}: no points played")
    avg = tallies.total_won / total
    played = tallies.played.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = tallies.won / played
    imputed = np.flatnonzero(played == 0)
    ratios[imputed] = avg
    return np.full(len(ratios), avg), ratios, [int(i) for i in imputed]


def per_match_observations(observations: list[MatchObservation]) -> list[tuple[float, float]]:
    """(game-win fraction, mean points per game) for each match."""
    out = []
    for o in observations:
        if o.games < 1:
            raise ValueError(f"match {o.match_id} has no games")
        out.append((o.games_won / o.games, o.points / o.games))
    return out


def information_criteria(observed, predicted: float, k: int):
    """``(AIC, BIC, adjusted R^2)`` for a constant prediction.

    AIC = n ln(RSS/n) + 2k, BIC = n ln(RSS/n) + k ln n, and adjusted
    R^2 = 1 - (1 - R^2)(n - 1)/(n - k - 1) with R^2 taken against the
    observed mean.  Adjusted R^2 is ``None`` when n <= k + 1 or the
    observations have no spread.
    """
    y = np.asarray(observed, dtype=float)
    n = y.size
    if n < 1:
        raise ValueError("need at least one observation")
    # fsum keeps the criteria independent of observation order
    rss = math.fsum((y - predicted) ** 2)
    if rss == 0.0:
        raise DegenerateFit("residual sum of squares is zero")
    base = n * math.log(rss / n)
    aic = base + 2 * k
    bic = base + k * math.log(n)
    tss = math.fsum((y - math.fsum(y) / n) ** 2)
    if n <= k + 1 or tss == 0.0:
        adj = None
    else:
        r2 = 1.0 - rss / tss
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)
    return aic, bic, adj


@dataclass
class ModelComparison:
    player: str
    role: str
    n: int
    # metrics[target][model] = {"AIC":..., "BIC":..., "adjusted_R2":..., "prediction":...}
    metrics: dict
    imputed_states: list

    def difference(self, target: str, metric: str):
        c = self.metrics[target]["constant"][metric]
        s = self.metrics[target]["score_dependent"][metric]
        if c is None or s is None:
            return None
        return s - c


def compare_models(tallies: PlayerTallies, observations: list[MatchObservation]) -> ModelComparison:
    obs = per_match_observations(observations)
    if len(obs) < 3:
        raise EstimationError(f"{tallies.player}/{tallies.role}: need at least 3 matches, got {len(obs)}")
    const, score_dep, imputed = estimate_strategies(tallies)
    y = np.asarray(obs, dtype=float)
    metrics: dict = {t: {} for t in TARGETS}
    for model, strategy in (("constant", const), ("score_dependent", score_dep)):
        pred = solve_chain(strategy).as_pair()
        for j, target in enumerate(TARGETS):
            aic, bic, adj = information_criteria(y[:, j], pred[j], MODELS[model])
            metrics[target][model] = {"AIC": aic, "BIC": bic, "adjusted_R2": adj, "prediction": pred[j]}
    return ModelComparison(tallies.player, tallies.role, len(obs), metrics, imputed)


def average_comparisons(comparisons: list[ModelComparison]) -> dict:
    """Per target, metric and model: mean over players (``None`` values skipped)."""
    out: dict = {}
    for target in TARGETS:
        for metric in ("AIC", "BIC", "adjusted_R2"):
            row = {}
            for model in MODELS:
                vals = [c.metrics[target][model][metric] for c in comparisons]
                vals = [v for v in vals if v is not None]
                row[model] = float(np.mean(vals)) if vals else None
            if row["constant"] is not None and row["score_dependent"] is not None:
                row["difference"] = row["score_dependent"] - row["constant"]
            else:
                row["difference"] = None
            out[(target, metric)] = row
    return out
