"""Synthetic corpora in the public point-by-point file layout.

Players get a known service and return strategy; a point's winning chance in
a service game is the mean of the server's service probability and one minus
the returner's return probability at the mirrored score.  Sets are first to
six games by two with a 7-point tiebreak at 6-6.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import write_csv
from .game_model import simulate_games
from .pareto import CATEGORY_BOUNDS
from .states import N_STATES, STATE_INDEX, mirror_index

POINT_HEADER = [
    "match_id", "ElapsedTime", "SetNo", "P1GamesWon", "P2GamesWon", "SetWinner", "GameNo",
    "GameWinner", "PointNumber", "PointWinner", "PointServer", "P1Score", "P2Score",
]
MATCH_HEADER = ["match_id", "year", "slam", "match_num", "player1", "player2", "status", "winner", "event_name", "round"]
_CALL = {0: "0", 1: "15", 2: "30", 3: "40"}

# scores where the player leads / trails; used to shape contrasting strategies
LEADING = [STATE_INDEX[s] for s in ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2), ("AD", 3))]
TRAILING = [STATE_INDEX[s] for s in ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3), (3, "AD"))]


def shaped_strategy(average: float, contrast: float) -> np.ndarray:
    """Strategy raised by ``contrast`` at leading scores and lowered at trailing ones."""
    p = np.full(N_STATES, average)
    p[LEADING] += contrast
    p[TRAILING] -= contrast
    return np.clip(p, 0.01, 0.99)


@dataclass
class SyntheticPlayer:
    name: str
    tour: str
    service: np.ndarray
    ret: np.ndarray


def make_players(n_per_tour: int, seed: int) -> list[SyntheticPlayer]:
    rng = np.random.Generator(np.random.PCG64(seed))
    players = []
    for tour in ("men", "women"):
        for k in range(n_per_tour):
            out = []
            for role in ("service", "return"):
                lo, hi = CATEGORY_BOUNDS[f"{tour}_{role}"]
                avg = rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo))
                out.append(shaped_strategy(avg, rng.uniform(0.0, 0.08)) + rng.normal(0, 0.01, N_STATES))
            players.append(SyntheticPlayer(f"{tour[0].upper()}Player{k:02d}", tour, np.clip(out[0], 0.02, 0.98), np.clip(out[1], 0.02, 0.98)))
    return players


def _score_call(a: int, b: int) -> tuple[str, str]:
    if a >= 3 and b >= 3:
        if a == b:
            return "40", "40"
        return ("AD", "40") if a > b else ("40", "AD")
    return _CALL.get(min(a, 3), "0"), _CALL.get(min(b, 3), "0")


def _play_match(rng, p1: SyntheticPlayer, p2: SyntheticPlayer, best_of: int, stop_after_points: int | None):
    """Rows of one match (without match_id); returns (rows, winner side or 0 if stopped)."""
    rows = []
    sets = {1: 0, 2: 0}
    need = best_of // 2 + 1
    server = 1
    point_no = 0
    game_no = 0
    players = {1: p1, 2: p2}
    set_no = 0
    while max(sets.values()) < need:
        set_no += 1
        games = {1: 0, 2: 0}
        rows.append(dict(SetNo=set_no, PointNumber="0X", PointWinner=0, PointServer=0, P1Score=0, P2Score=0,
                         P1GamesWon=0, P2GamesWon=0, SetWinner=0, GameNo=0, GameWinner=0))
        while True:
            game_no += 1
            tiebreak = games[1] == 6 and games[2] == 6
            ret = 3 - server
            a = b = 0  # server / returner points
            while True:
                if tiebreak:
                    prob = 0.5 * (players[server].service[0] + 1.0 - players[ret].ret[0])
                else:
                    st = (min(a, 3), min(b, 3)) if not (a >= 3 and b >= 3) else None
                    if st is None:
                        idx = 15 if a == b else (16 if a > b else 17)
                    else:
                        idx = STATE_INDEX[st]
                    prob = 0.5 * (players[server].service[idx] + 1.0 - players[ret].ret[mirror_index(idx)])
                srv_won = rng.random() < prob
                if srv_won:
                    a += 1
                else:
                    b += 1
                point_no += 1
                winner = server if srv_won else ret
                if tiebreak:
                    s1, s2 = (a, b) if server == 1 else (b, a)
                    call = (str(s1), str(s2))
                    done = max(a, b) >= 7 and abs(a - b) >= 2
                else:
                    c_srv, c_ret = _score_call(a, b)
                    call = (c_srv, c_ret) if server == 1 else (c_ret, c_srv)
                    done = max(a, b) >= 4 and abs(a - b) >= 2
                game_winner = 0
                set_winner = 0
                if done:
                    gw = server if a > b else ret
                    games[gw] += 1
                    game_winner = gw
                    if tiebreak or (max(games.values()) >= 6 and abs(games[1] - games[2]) >= 2):
                        set_winner = gw
                rows.append(dict(SetNo=set_no, PointNumber=point_no, PointWinner=winner, PointServer=server,
                                 P1Score=call[0], P2Score=call[1], P1GamesWon=games[1], P2GamesWon=games[2],
                                 SetWinner=set_winner, GameNo=game_no, GameWinner=game_winner))
                if stop_after_points is not None and point_no >= stop_after_points:
                    return rows, 0
                if done:
                    break
            server = 3 - server
            if rows[-1]["SetWinner"]:
                sets[rows[-1]["SetWinner"]] += 1
                break
    return rows, 1 if sets[1] > sets[2] else 2


def write_corpus(
    out_dir,
    n_players_per_tour: int = 6,
    matches_per_player: int = 8,
    seed: int = 7,
    year: int = 2020,
    slam: str = "synthslam",
    retirements: int = 1,
    walkovers: int = 1,
) -> dict:
    """Write ``<year>-<slam>-points.csv`` and ``-matches.csv``; returns the true strategies."""
    rng = np.random.Generator(np.random.PCG64(seed))
    players = make_players(n_players_per_tour, seed + 1)
    out_dir = Path(out_dir)
    point_rows, match_rows = [], []
    counter = {"men": 1000, "women": 2000}
    for tour in ("men", "women"):
        roster = [p for p in players if p.tour == tour]
        pairings = []
        for rnd in range(matches_per_player):
            order = rng.permutation(len(roster))
            pairings += [(roster[order[i]], roster[order[i + 1]]) for i in range(0, len(order) - 1, 2)]
        specials = ["retired"] * retirements + ["walkover"] * walkovers
        for k, (p1, p2) in enumerate(pairings):
            counter[tour] += 1
            mid = f"{year}-{slam}-{counter[tour]}"
            status = specials[k] if k < len(specials) else ""
            best_of = 5 if tour == "men" else 3
            if status == "walkover":
                rows, winner = [], 1
                status_txt = "Walkover"
            elif status == "retired":
                rows, winner = _play_match(rng, p1, p2, best_of, stop_after_points=40)
                winner, status_txt = 1, "Retired"
            else:
                rows, winner = _play_match(rng, p1, p2, best_of, None)
                status_txt = ""
            for r in rows:
                point_rows.append([mid, "", r["SetNo"], r["P1GamesWon"], r["P2GamesWon"], r["SetWinner"], r["GameNo"],
                                   r["GameWinner"], r["PointNumber"], r["PointWinner"], r["PointServer"], r["P1Score"], r["P2Score"]])
            match_rows.append([mid, year, slam, counter[tour], p1.name, p2.name, status_txt, winner, f"{tour} singles", 1])
    write_csv(out_dir / f"{year}-{slam}-points.csv", POINT_HEADER, point_rows)
    write_csv(out_dir / f"{year}-{slam}-matches.csv", MATCH_HEADER, match_rows)
    return {p.name: {"tour": p.tour, "service": p.service.tolist(), "return": p.ret.tolist()} for p in players}


def simulate_match_observations(strategy, n_matches: int, seed: int, games_range=(8, 16)):
    """Per-match (games, games_won, points) and per-state tallies for one strategy.

    Used to build synthetic model-comparison corpora without the full match
    simulator.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = rng.integers(games_range[0], games_range[1] + 1, n_matches)
    sim = simulate_games(strategy, int(sizes.sum()), int(rng.integers(0, 2**63 - 1)))
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    games = sizes
    won = np.add.reduceat(sim.won.astype(np.int64), bounds[:-1])
    pts = np.add.reduceat(sim.points, bounds[:-1])
    return games, won, pts, sim.state_played, sim.state_won

