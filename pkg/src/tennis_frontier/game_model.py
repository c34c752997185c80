"""Absorbing Markov chain for a single tennis game.

A strategy is a length-18 vector of point-winning probabilities indexed by the
canonical score order in :mod:`tennis_frontier.states`.  The exact solver works
on the transient block ``Q`` of the transition matrix: the expected number of
visits from 0-0 is the first row of ``(I - Q)^-1``, obtained by solving
``(I - Q)^T v = e_0`` with an LU factorisation (partial pivoting).

The Monte Carlo routines draw from numpy's PCG64 bit generator,
``numpy.random.Generator(numpy.random.PCG64(seed))``, one uniform per point;
the point is won when the draw is below the state's probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import LOSS_NEXT, LOST, N_STATES, WIN_NEXT, WON

ABSORPTION_TOL = 1e-9


class NonAbsorbing(ArithmeticError):
    """The chain started at 0-0 does not reach Won/Lost with probability 1."""


@dataclass(frozen=True)
class GameOutcome:
    game_win_probability: float
    game_loss_probability: float
    expected_points: float
    visit_counts: np.ndarray

    def as_pair(self) -> tuple[float, float]:
        return (self.game_win_probability, self.expected_points)


def as_strategy(p) -> np.ndarray:
    """Validate and copy a strategy vector."""
    arr = np.array(p, dtype=float)
    if arr.shape != (N_STATES,):
        raise ValueError(f"strategy must have {N_STATES} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("strategy entries must lie in [0, 1]")
    return arr


_ROWS = np.arange(N_STATES)
_WIN_NEXT = np.array(WIN_NEXT)
_LOSS_NEXT = np.array(LOSS_NEXT)
_WIN_T = _WIN_NEXT < N_STATES
_LOSS_T = _LOSS_NEXT < N_STATES
_WIN_ABS = _WIN_NEXT == WON  # win from this state ends the game won
_LOSS_ABS = _LOSS_NEXT == LOST


def transient_matrix(p) -> np.ndarray:
    """Transient-to-transient block ``Q`` for one strategy or a batch (..., 18)."""
    p = np.asarray(p, dtype=float)
    q = np.zeros(p.shape[:-1] + (N_STATES, N_STATES))
    q[..., _ROWS[_WIN_T], _WIN_NEXT[_WIN_T]] = p[..., _WIN_T]
    q[..., _ROWS[_LOSS_T], _LOSS_NEXT[_LOSS_T]] += 1.0 - p[..., _LOSS_T]
    return q


def _solve_visits(p: np.ndarray) -> np.ndarray:
    """Expected visits from 0-0 for a (B, 18) batch; rows that fail are NaN."""
    a = np.eye(N_STATES) - transient_matrix(p)
    a_t = np.swapaxes(a, -1, -2)
    rhs = np.zeros(p.shape[:-1] + (N_STATES, 1))
    rhs[..., 0, 0] = 1.0
    try:
        return np.linalg.solve(a_t, rhs)[..., 0]
    except np.linalg.LinAlgError:
        out = np.full(p.shape, np.nan)
        for k in range(p.shape[0]):
            try:
                out[k] = np.linalg.solve(a_t[k], rhs[k])[:, 0]
            except np.linalg.LinAlgError:
                pass
        return out


def solve_batch(p) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised solver.

    Returns ``(win, loss, expected_points, visits)`` for a (B, 18) array.  Rows
    whose chain is not absorbing come back as NaN instead of raising.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    visits = _solve_visits(p)
    win = np.sum(visits * p * _WIN_ABS, axis=-1)
    loss = np.sum(visits * (1.0 - p) * _LOSS_ABS, axis=-1)
    points = visits.sum(axis=-1)
    bad = ~np.isfinite(points) | (np.abs(win + loss - 1.0) > ABSORPTION_TOL)
    bad |= np.any(visits < -ABSORPTION_TOL, axis=-1)
    if bad.any():
        win[bad] = np.nan
        loss[bad] = np.nan
        points[bad] = np.nan
        visits[bad] = np.nan
    return win, loss, points, visits


def solve_chain(strategy) -> GameOutcome:
    """Exact game outcome of a score-dependent strategy starting from 0-0.

    Expected points counts every contested point, so a game swept 4-0 has
    four points.  Raises :class:`NonAbsorbing` when the deuce cycle can loop
    forever (e.g. ``p(AD,3) = 0`` and ``p(3,AD) = 1``).
    """
    p = as_strategy(strategy)
    win, loss, points, visits = solve_batch(p[None, :])
    if not np.isfinite(points[0]):
        raise NonAbsorbing("absorption probability from 0-0 is below 1")
    return GameOutcome(float(win[0]), float(loss[0]), float(points[0]), visits[0])


def induced_average_pwp(strategy, outcome: GameOutcome | None = None) -> float:
    """Long-run share of points won: visit-weighted mean of the strategy."""
    p = as_strategy(strategy)
    if outcome is None:
        outcome = solve_chain(p)
    v = outcome.visit_counts
    return float(np.dot(v, p) / v.sum())


def simulate_game(strategy, seed: int) -> tuple[bool, int, list[int]]:
    """Play one game point by point.

    Returns ``(won, points_played, states_visited)`` where the visited list
    starts at 0-0 and ends with the absorbing index (18 or 19).
    """
    p = as_strategy(strategy)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = 0
    path = [0]
    points = 0
    while state < N_STATES:
        won = rng.random() < p[state]
        state = WIN_NEXT[state] if won else LOSS_NEXT[state]
        points += 1
        path.append(state)
        if points > 100_000:
            raise NonAbsorbing("simulated game did not finish")
    return state == WON, points, path


@dataclass
class SimulationSummary:
    won: np.ndarray  # bool per game
    points: np.ndarray  # points played per game
    points_won: np.ndarray  # points won by the player per game
    state_played: np.ndarray  # (18,) total points played at each state
    state_won: np.ndarray  # (18,) total points won at each state


def simulate_games(strategy, n_games: int, seed: int, max_points: int = 10_000) -> SimulationSummary:
    """Vectorised Monte Carlo over ``n_games`` independent games.

    Uses the same PCG64 generator as :func:`simulate_game` but draws one
    block of uniforms per point round, so individual games do not reproduce
    ``simulate_game`` paths.
    """
    p = as_strategy(strategy)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = np.zeros(n_games, dtype=np.int64)
    points = np.zeros(n_games, dtype=np.int64)
    points_won = np.zeros(n_games, dtype=np.int64)
    played = np.zeros(N_STATES, dtype=np.int64)
    won_at = np.zeros(N_STATES, dtype=np.int64)
    active = np.arange(n_games)
    win_next = _WIN_NEXT
    loss_next = _LOSS_NEXT
    for _ in range(max_points):
        if active.size == 0:
            break
        s = state[active]
        hit = rng.random(active.size) < p[s]
        played += np.bincount(s, minlength=N_STATES)
        won_at += np.bincount(s[hit], minlength=N_STATES)
        points[active] += 1
        points_won[active] += hit
        s = np.where(hit, win_next[s], loss_next[s])
        state[active] = s
        active = active[s < N_STATES]
    else:
        if active.size:
            raise NonAbsorbing(f"{active.size} simulated games did not finish")
    return SimulationSummary(state == WON, points, points_won, played, won_at)
