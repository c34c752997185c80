"""Efficiency score, strategy fit and optimal contrast."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import PlayerTallies, assign_tier
from .model_fit import estimate_strategies
from .pareto import Frontier
from .states import N_STATES

SQRT2 = math.sqrt(2.0)
TIE_TOL = 1e-12


@dataclass(frozen=True)
class NormalizedOutcome:
    u: float
    v: float
    bounds: tuple  # ((win_min, win_max), (points_min, points_max))


def normalization_bounds(frontier_outcomes, observed) -> tuple:
    """Per-axis (min, max) over the frontier points and the observed point."""
    pts = np.vstack([np.asarray(frontier_outcomes, dtype=float).reshape(-1, 2), np.asarray(observed, dtype=float)])
    return tuple((float(pts[:, j].min()), float(pts[:, j].max())) for j in range(2))


def normalize(points, bounds) -> np.ndarray:
    """Map outcome pairs onto [0, 1]^2; an axis with zero range maps to 0.5."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty_like(pts)
    for j, (lo, hi) in enumerate(bounds):
        out[:, j] = 0.5 if hi == lo else (pts[:, j] - lo) / (hi - lo)
    return out


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def distance_to_curve(p, curve) -> float:
    """Shortest distance from ``p`` to the polyline through ``curve`` (rows in order)."""
    curve = np.asarray(curve, dtype=float).reshape(-1, 2)
    if len(curve) == 1:
        return float(np.linalg.norm(np.asarray(p, dtype=float) - curve[0]))
    return min(point_segment_distance(p, curve[i], curve[i + 1]) for i in range(len(curve) - 1))


@dataclass
class EfficiencyResult:
    score: float
    distance: float
    observed: NormalizedOutcome
    degenerate_frontier: bool


def efficiency(observed, frontier: Frontier, mode: str = "curve") -> EfficiencyResult:
    """Efficiency = 1 - d/sqrt(2), d the normalised distance to the frontier.

    ``mode="curve"`` measures to the piecewise-linear curve through the
    frontier points (sorted by win probability); ``mode="points"`` measures
    to the nearest frontier point.
    """
    fo = frontier.outcomes() if isinstance(frontier, Frontier) else np.asarray(frontier, dtype=float).reshape(-1, 2)
    if len(fo) == 0:
        raise ValueError("frontier is empty")
    fo = fo[np.lexsort((fo[:, 1], fo[:, 0]))]
    bounds = normalization_bounds(fo, observed)
    nf = normalize(fo, bounds)
    no = normalize(observed, bounds)[0]
    if mode == "curve":
        d = distance_to_curve(no, nf)
    elif mode == "points":
        d = float(np.min(np.linalg.norm(nf - no, axis=1)))
    else:
        raise ValueError(f"unknown distance mode {mode!r}")
    score = float(np.clip(1.0 - d / SQRT2, 0.0, 1.0))
    return EfficiencyResult(score, d, NormalizedOutcome(float(no[0]), float(no[1]), bounds), len(fo) == 1)


def efficiency_score(observed, frontier: Frontier, mode: str = "curve") -> float:
    return efficiency(observed, frontier, mode).score


def closest_optimal_strategy(observed, frontier: Frontier) -> np.ndarray:
    """Strategy of the frontier point nearest ``observed`` in normalised outcome
    space; equal distances go to the higher win probability."""
    fo = frontier.outcomes()
    if len(fo) == 0:
        raise ValueError("frontier is empty")
    bounds = normalization_bounds(fo, observed)
    d = np.linalg.norm(normalize(fo, bounds) - normalize(observed, bounds)[0], axis=1)
    near = np.flatnonzero(d <= d.min() + TIE_TOL)
    best = near[np.argmax(fo[near, 0])]
    return frontier.points[int(best)].strategy.copy()


def strategy_fit_details(observed, optimal, delta_p: float) -> tuple[float, float, bool]:
    """``(fit, d_in, clamped)`` with fit = 1 - d_in / (sqrt(18) * delta_p)."""
    a = np.asarray(observed, dtype=float)
    r = np.asarray(optimal, dtype=float)
    if a.shape != (N_STATES,) or r.shape != (N_STATES,):
        raise ValueError("strategy vectors must have 18 entries")
    if delta_p <= 0:
        raise ValueError("delta_p must be positive")
    d_in = float(np.sqrt(np.sum((a - r) ** 2)))
    fit = 1.0 - d_in / (math.sqrt(N_STATES) * delta_p)
    clamped = fit < 0.0
    return max(fit, 0.0), d_in, clamped


def strategy_fit(observed, optimal, delta_p: float) -> float:
    return strategy_fit_details(observed, optimal, delta_p)[0]


def optimal_contrast(optimal) -> float:
    """Population standard deviation of the 18 optimal probabilities."""
    v = np.asarray(optimal, dtype=float)
    if v.shape != (N_STATES,):
        raise ValueError("strategy vectors must have 18 entries")
    return float(np.std(v))


def category_pattern(optimal_vectors) -> np.ndarray:
    """Coordinate-wise mean of players' closest optimal strategies."""
    arr = np.asarray(optimal_vectors, dtype=float).reshape(-1, N_STATES)
    if arr.shape[0] == 0:
        raise ValueError("need at least one player")
    return arr.mean(axis=0)


@dataclass
class EfficiencyReport:
    player: str
    role: str
    tour: str
    tier: str
    average_pwp: float
    game_win_prob: float
    expected_points: float
    efficiency: float
    strategy_fit: float
    optimal_contrast: float
    optimal_strategy: np.ndarray
    observed_strategy: np.ndarray
    flags: list = field(default_factory=list)


def player_metrics(
    tallies: PlayerTallies,
    frontier: Frontier,
    delta_p: float,
    distance_mode: str = "curve",
    tier_low: float = 0.50,
    tier_high: float = 0.70,
) -> EfficiencyReport:
    """All per-player metrics from tallies and the player's merged frontier.

    The observed outcome is the player's pooled game-win fraction and points
    per game; the observed strategy is the per-score win ratio.
    """
    _, observed_strategy, imputed = estimate_strategies(tallies)
    observed = (tallies.game_win_fraction, tallies.points_per_game)
    eff = efficiency(observed, frontier, distance_mode)
    optimal = closest_optimal_strategy(observed, frontier)
    fit, _, clamped = strategy_fit_details(observed_strategy, optimal, delta_p)
    flags = []
    if clamped:
        flags.append("fit_clamped")
    if eff.degenerate_frontier:
        flags.append("degenerate_frontier")
    if imputed:
        flags.append("imputed_states")
    return EfficiencyReport(
        player=tallies.player,
        role=tallies.role,
        tour=tallies.tour,
        tier=assign_tier(tallies.match_win_pct, tier_low, tier_high),
        average_pwp=tallies.average_pwp,
        game_win_prob=observed[0],
        expected_points=observed[1],
        efficiency=eff.score,
        strategy_fit=fit,
        optimal_contrast=optimal_contrast(optimal),
        optimal_strategy=optimal,
        observed_strategy=observed_strategy,
        flags=flags,
    )
