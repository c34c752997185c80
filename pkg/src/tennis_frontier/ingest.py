"""Grand Slam point-by-point ingestion.

Reads the public ``<year>-<slam>-points.csv`` / ``<year>-<slam>-matches.csv``
files (Jeff Sackmann's ``tennis_slam_pointbypoint`` layout by default; the
column names are configurable), drops retirements and walkovers, keeps players
with enough remaining matches, rebuilds every game's running score and counts
points played / won at each of the 18 scores for each player in service and
return games.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .artifacts import read_csv, write_csv
from .states import (
    AD_IN,
    N_STATES,
    STATE_INDEX,
    STATE_LABELS,
    collapse_score,
    mirror_index,
)

log = logging.getLogger(__name__)

SOURCE_URL = "https://github.com/JeffSackmann/tennis_slam_pointbypoint"

DEFAULT_POINT_SCHEMA = {
    "match_id": "match_id",
    "set_no": "SetNo",
    "game_no": "GameNo",
    "point_no": "PointNumber",
    "server": "PointServer",
    "winner": "PointWinner",
    "p1_score": "P1Score",
    "p2_score": "P2Score",
    "set_winner": "SetWinner",
}
REQUIRED_POINT_FIELDS = ("match_id", "set_no", "game_no", "point_no", "server", "winner")

DEFAULT_MATCH_SCHEMA = {
    "match_id": "match_id",
    "player1": "player1",
    "player2": "player2",
    "status": "status",
    "winner": "winner",
    "match_num": "match_num",
}
REQUIRED_MATCH_FIELDS = ("match_id", "player1", "player2")

REGULAR_SCORES = {"0", "15", "30", "40", "AD", "A"}
RETIRED_PATTERN = r"(?i)ret|def|abandon|incomplete"
WALKOVER_PATTERN = r"(?i)w/?o\b|walk"
BEST_OF = {"men": 5, "women": 3}
ROLES = ("service", "return")
TOURS = ("men", "women")


class IngestError(Exception):
    pass


class SchemaError(IngestError):
    def __init__(self, column: str, source: str = ""):
        self.column = column
        where = f" in {source}" if source else ""
        super().__init__(f"mapped column {column!r} not found{where}")


class EmptyInput(IngestError):
    pass


class SegmentationError(IngestError):
    def __init__(self, match_id: str, game: tuple, reason: str):
        self.match_id = match_id
        self.game = game
        super().__init__(f"match {match_id} set/game {game}: {reason}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RawPoint:
    match_id: str
    set_no: int
    game_no: int
    point_no: int
    server_id: int  # 1 or 2: side in the match record
    winner_id: int
    tiebreak_flag: bool
    set_winner: int = 0


@dataclass
class ParseResult:
    points: list[RawPoint]
    rejects: list[dict] = field(default_factory=list)
    marker_rows: int = 0


def _text_stream(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8-sig"))
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")


def _reader(stream, schema: dict, required, source: str):
    reader = csv.DictReader(_text_stream(stream))
    header = reader.fieldnames
    if not header:
        raise EmptyInput(f"{source or 'input'} has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    for key in required:
        if schema.get(key) not in header:
            raise SchemaError(schema.get(key) or key, source)
    present = {k: v for k, v in schema.items() if v and v in header}
    return reader, present


def _side(value: str) -> int:
    v = int(float(value))
    if v not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {value!r}")
    return v


def _is_tiebreak_score(value: str | None) -> bool:
    if value is None:
        return False
    v = value.strip().upper()
    if not v:
        return False
    if v.endswith(".0"):
        v = v[:-2]
    return v not in REGULAR_SCORES


def parse_points(stream, schema: dict | None = None, source: str = "") -> ParseResult:
    """Parse a point-by-point CSV.

    Rows whose winner field is ``0`` (set-boundary markers in the public files)
    are counted, not returned.  Rows with unparseable required fields go to
    ``rejects`` with their 1-based data row number.
    """
    schema = {**DEFAULT_POINT_SCHEMA, **(schema or {})}
    reader, cols = _reader(stream, schema, REQUIRED_POINT_FIELDS, source)
    result = ParseResult([])
    for row_no, row in enumerate(reader, start=1):
        raw_winner = (row.get(cols["winner"]) or "").strip()
        if raw_winner in ("0", "0.0"):
            result.marker_rows += 1
            continue
        try:
            match_id = (row.get(cols["match_id"]) or "").strip()
            if not match_id:
                raise ValueError("empty match_id")
            set_winner = 0
            if "set_winner" in cols:
                sw = (row.get(cols["set_winner"]) or "0").strip() or "0"
                set_winner = int(float(sw))
            tb = any(
                _is_tiebreak_score(row.get(cols[k])) for k in ("p1_score", "p2_score") if k in cols
            )
            point = RawPoint(
                match_id=match_id,
                set_no=int(float(row[cols["set_no"]])),
                game_no=int(float(row[cols["game_no"]])),
                point_no=int(float(row[cols["point_no"]])),
                server_id=_side(row[cols["server"]]),
                winner_id=_side(raw_winner),
                tiebreak_flag=tb,
                set_winner=set_winner,
            )
        except (TypeError, ValueError, KeyError) as exc:
            result.rejects.append({"source": source, "row": row_no, "reason": str(exc)})
            continue
        result.points.append(point)
    if not result.points and not result.rejects and not result.marker_rows:
        raise EmptyInput(f"{source or 'input'} has a header but no data rows")
    return result


@dataclass(frozen=True)
class MatchInfo:
    match_id: str
    player1: str
    player2: str
    tour: str | None
    status: str = ""
    winner: int = 0  # 0 when not recorded

    def player(self, side: int) -> str:
        return self.player1 if side == 1 else self.player2

    def side_of(self, player: str) -> int:
        if player == self.player1:
            return 1
        if player == self.player2:
            return 2
        raise KeyError(player)


def tour_of(match_num: str) -> str | None:
    """Singles tour from the match number (1xxx/MS men, 2xxx/WS women)."""
    m = match_num.strip().upper()
    if m.startswith("MS") or m.startswith("1"):
        return "men"
    if m.startswith("WS") or m.startswith("2"):
        return "women"
    return None


def parse_matches(stream, schema: dict | None = None, source: str = "") -> tuple[list[MatchInfo], list[dict]]:
    schema = {**DEFAULT_MATCH_SCHEMA, **(schema or {})}
    reader, cols = _reader(stream, schema, REQUIRED_MATCH_FIELDS, source)
    out, rejects = [], []
    for row_no, row in enumerate(reader, start=1):
        mid = (row.get(cols["match_id"]) or "").strip()
        p1 = (row.get(cols["player1"]) or "").strip()
        p2 = (row.get(cols["player2"]) or "").strip()
        if not mid or not p1 or not p2:
            rejects.append({"source": source, "row": row_no, "reason": "missing match_id or player"})
            continue
        num = (row.get(cols["match_num"]) or "").strip() if "match_num" in cols else ""
        if not num:
            num = mid.rsplit("-", 1)[-1]
        winner = 0
        if "winner" in cols:
            try:
                winner = int(float((row.get(cols["winner"]) or "0").strip() or 0))
            except ValueError:
                winner = 0
            if winner not in (1, 2):
                winner = 0
        status = (row.get(cols["status"]) or "").strip() if "status" in cols else ""
        out.append(MatchInfo(mid, p1, p2, tour_of(num), status, winner))
    if not out and not rejects:
        raise EmptyInput(f"{source or 'input'} has a header but no data rows")
    return out, rejects


# ---------------------------------------------------------------------------
# Match filtering
# ---------------------------------------------------------------------------


@dataclass
class FilterResult:
    kept: list[MatchInfo]
    eligible: set  # {(tour, player)}
    removed: dict  # reason -> count of matches
    removed_ids: dict  # reason -> sorted match ids
    player_matches: dict  # (tour, player) -> matches after exclusion


def classify_completion(match: MatchInfo, points: list[RawPoint], infer: bool = True) -> str:
    """``"complete"``, ``"retired"`` or ``"walkover"``."""
    if match.status:
        if re.search(WALKOVER_PATTERN, match.status):
            return "walkover"
        if re.search(RETIRED_PATTERN, match.status):
            return "retired"
    if not points:
        return "walkover"
    if infer and match.tour in BEST_OF:
        set_wins: dict[int, int] = {}
        for pt in points:
            if pt.set_winner in (1, 2):
                set_wins[pt.set_no] = pt.set_winner
        if set_wins:
            counts = Counter(set_wins.values())
            if max(counts.values()) < BEST_OF[match.tour] // 2 + 1:
                return "retired"
    return "complete"


def filter_matches(
    matches: Iterable[MatchInfo],
    points_by_match: dict,
    min_matches: int = 30,
    infer_incomplete: bool = True,
) -> FilterResult:
    """Drop retirements/walkovers, then keep players with ``min_matches`` or more
    remaining matches.  Matches outside the two singles tours are dropped too."""
    removed: dict[str, list] = defaultdict(list)
    kept = []
    for m in sorted(matches, key=lambda m: m.match_id):
        if m.tour not in TOURS:
            removed["not_singles"].append(m.match_id)
            continue
        status = classify_completion(m, points_by_match.get(m.match_id, []), infer_incomplete)
        if status != "complete":
            removed[status].append(m.match_id)
            continue
        kept.append(m)
    per_player: Counter = Counter()
    for m in kept:
        per_player[(m.tour, m.player1)] += 1
        per_player[(m.tour, m.player2)] += 1
    eligible = {k for k, n in per_player.items() if n >= min_matches}
    return FilterResult(
        kept=kept,
        eligible=eligible,
        removed={k: len(v) for k, v in sorted(removed.items())},
        removed_ids={k: sorted(v) for k, v in sorted(removed.items())},
        player_matches=dict(per_player),
    )


# ---------------------------------------------------------------------------
# Game segmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentedGame:
    set_no: int
    game_no: int
    server: int  # side 1 or 2
    states: tuple  # server-view transient index before each point
    server_won: tuple  # per point: did the server win it
    complete: bool
    server_won_game: bool | None

    def perspective(self, side: int) -> tuple[list[int], list[bool], bool | None]:
        """(states, point won flags, game won) seen by ``side``."""
        if side == self.server:
            return list(self.states), list(self.server_won), self.server_won_game
        states = [mirror_index(s) for s in self.states]
        won = [not w for w in self.server_won]
        game = None if self.server_won_game is None else not self.server_won_game
        return states, won, game

    def role_of(self, side: int) -> str:
        return "service" if side == self.server else "return"


@dataclass
class SegmentedMatch:
    match: MatchInfo
    games: list[SegmentedGame]
    tiebreak_games: int = 0
    tiebreak_points: int = 0
    incomplete_games: int = 0
    winner: int = 0


def _decided(a: int, b: int) -> bool:
    return (a >= 4 and a - b >= 2) or (b >= 4 and b - a >= 2)


def segment_games(points: list[RawPoint], match: MatchInfo | None = None) -> SegmentedMatch:
    """Rebuild each game's running score (server view) for one match.

    Deuce cycles of any length fold onto 3-3 / AD-3 / 3-AD.  Tiebreak games
    are counted and left out.  A point recorded after a game is decided raises
    :class:`SegmentationError`.
    """
    match_id = points[0].match_id if points else (match.match_id if match else "")
    grouped: dict[tuple, list[RawPoint]] = {}
    for pt in points:
        grouped.setdefault((pt.set_no, pt.game_no), []).append(pt)
    out = SegmentedMatch(match=match, games=[])
    for key, pts in grouped.items():
        for prev, cur in zip(pts, pts[1:]):
            if cur.point_no <= prev.point_no:
                raise SegmentationError(match_id, key, "point numbers not increasing")
        if any(p.tiebreak_flag for p in pts):
            out.tiebreak_games += 1
            out.tiebreak_points += len(pts)
            continue
        server = pts[0].server_id
        a = b = 0
        states, won = [], []
        for pt in pts:
            if pt.server_id != server:
                raise SegmentationError(match_id, key, "server changes within game")
            if _decided(a, b):
                raise SegmentationError(match_id, key, "points continue after game ended")
            states.append(collapse_score(a, b))
            w = pt.winner_id == server
            won.append(w)
            if w:
                a += 1
            else:
                b += 1
        complete = _decided(a, b)
        if not complete:
            out.incomplete_games += 1
        out.games.append(
            SegmentedGame(key[0], key[1], server, tuple(states), tuple(won), complete, (a > b) if complete else None)
        )
    if points:
        if match is not None and match.winner:
            out.winner = match.winner
        else:
            out.winner = points[-1].winner_id
    return out


# ---------------------------------------------------------------------------
# Tallies
# ---------------------------------------------------------------------------

# transient states whose won point ends the game won
_GAME_POINT_STATES = [STATE_INDEX[s] for s in ((3, 0), (3, 1), (3, 2))] + [AD_IN]


@dataclass
class PlayerTallies:
    player: str
    role: str
    played: np.ndarray = field(default_factory=lambda: np.zeros(N_STATES, dtype=np.int64))
    won: np.ndarray = field(default_factory=lambda: np.zeros(N_STATES, dtype=np.int64))
    matches: int = 0
    games: int = 0
    match_wins: int = 0
    match_losses: int = 0
    tour: str = ""

    @property
    def total_played(self) -> int:
        return int(self.played.sum())

    @property
    def total_won(self) -> int:
        return int(self.won.sum())

    @property
    def average_pwp(self) -> float:
        n = self.total_played
        return self.total_won / n if n else float("nan")

    @property
    def games_won(self) -> int:
        return int(self.won[_GAME_POINT_STATES].sum())

    @property
    def game_win_fraction(self) -> float:
        return self.games_won / self.games if self.games else float("nan")

    @property
    def points_per_game(self) -> float:
        return self.total_played / self.games if self.games else float("nan")

    @property
    def match_win_pct(self) -> float:
        return self.match_wins / self.matches if self.matches else float("nan")

    def imputed_states(self) -> list[int]:
        return [i for i in range(N_STATES) if self.played[i] == 0]

    def check(self):
        if np.any(self.won > self.played) or np.any(self.won < 0):
            raise ValueError(f"inconsistent tallies for {self.player}/{self.role}")


@dataclass(frozen=True)
class MatchObservation:
    player: str
    role: str
    match_id: str
    games: int
    games_won: int
    points: int

    @property
    def game_win_fraction(self) -> float:
        return self.games_won / self.games

    @property
    def points_per_game(self) -> float:
        return self.points / self.games


def tally_states(segmented: Iterable[SegmentedMatch], player: str, role: str, tour: str = "") -> PlayerTallies:
    """Accumulate points played/won per score for one player in one role.

    Only complete, non-tiebreak games count.
    """
    t = PlayerTallies(player=player, role=role, tour=tour)
    for sm in segmented:
        try:
            side = sm.match.side_of(player)
        except KeyError:
            continue
        t.matches += 1
        if sm.winner == side:
            t.match_wins += 1
        else:
            t.match_losses += 1
        for g in sm.games:
            if not g.complete or g.role_of(side) != role:
                continue
            states, won, _ = g.perspective(side)
            t.games += 1
            np.add.at(t.played, states, 1)
            np.add.at(t.won, [s for s, w in zip(states, won) if w], 1)
    t.check()
    return t


def match_observations(segmented: Iterable[SegmentedMatch], player: str, role: str) -> list[MatchObservation]:
    out = []
    for sm in segmented:
        try:
            side = sm.match.side_of(player)
        except KeyError:
            continue
        games = won = pts = 0
        for g in sm.games:
            if not g.complete or g.role_of(side) != role:
                continue
            _, _, gw = g.perspective(side)
            games += 1
            won += int(bool(gw))
            pts += len(g.states)
        if games:
            out.append(MatchObservation(player, role, sm.match.match_id, games, won, pts))
    return out


def assign_tier(match_win_pct: float, low: float = 0.50, high: float = 0.70) -> str:
    """``low`` below ``low``; ``mid`` on [low, high]; ``high`` above ``high``."""
    if not (0.0 <= match_win_pct <= 1.0):
        raise ValueError(f"match-win percentage must be in [0, 1], got {match_win_pct}")
    if match_win_pct < low:
        return "low"
    if match_win_pct > high:
        return "high"
    return "mid"


# ---------------------------------------------------------------------------
# Corpus driver and file formats
# ---------------------------------------------------------------------------

TALLY_COLUMNS = (
    ["player", "role"]
    + [f"{kind}_{lab}" for lab in STATE_LABELS for kind in ("played", "won")]
    + ["matches", "games", "match_wins"]
)
OBSERVATION_COLUMNS = ["player", "role", "match_id", "games", "games_won", "points"]


@dataclass
class IngestResult:
    tallies: dict  # (tour, role) -> list[PlayerTallies]
    observations: dict  # (tour, role) -> list[MatchObservation]
    report: dict


def discover_files(data_dir) -> list[tuple[Path, Path]]:
    """Pairs of (points, matches) files named ``<year>-<slam>-points.csv`` / ``-matches.csv``."""
    data_dir = Path(data_dir)
    pairs = []
    for pf in sorted(data_dir.glob("*-points.csv")):
        mf = pf.with_name(pf.name[: -len("-points.csv")] + "-matches.csv")
        if mf.exists():
            pairs.append((pf, mf))
        else:
            log.warning("no matches file for %s", pf.name)
    return pairs


def _load_pair(pair, point_schema, match_schema):
    pf, mf = pair
    with open(pf, "rb") as fh:
        pr = parse_points(fh, point_schema, source=pf.name)
    with open(mf, "rb") as fh:
        matches, mrejects = parse_matches(fh, match_schema, source=mf.name)
    return pf.name, pr, matches, mrejects


def ingest_corpus(
    data_dir,
    point_schema: dict | None = None,
    match_schema: dict | None = None,
    min_matches: int = 30,
    infer_incomplete: bool = True,
    jobs: int = 1,
) -> IngestResult:
    pairs = discover_files(data_dir)
    if not pairs:
        raise EmptyInput(f"no '<year>-<slam>-points.csv' files with matching '-matches.csv' in {data_dir}")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        loaded = list(pool.map(lambda p: _load_pair(p, point_schema, match_schema), pairs))

    report: dict = {"source": SOURCE_URL, "files": [], "rejects": [], "marker_rows": 0}
    all_matches: dict[str, MatchInfo] = {}
    points_by_match: dict[str, list[RawPoint]] = defaultdict(list)
    for name, pr, matches, mrejects in loaded:
        report["files"].append({"points_file": name, "points": len(pr.points), "matches": len(matches)})
        report["rejects"].extend(pr.rejects + mrejects)
        report["marker_rows"] += pr.marker_rows
        for m in matches:
            all_matches[m.match_id] = m
        for pt in pr.points:
            points_by_match[pt.match_id].append(pt)
    orphan = sorted(set(points_by_match) - set(all_matches))
    report["orphan_point_matches"] = orphan

    filt = filter_matches(all_matches.values(), points_by_match, min_matches, infer_incomplete)
    report["removed_matches"] = filt.removed
    report["removed_match_ids"] = filt.removed_ids

    segmented: list[SegmentedMatch] = []
    seg_errors = []
    for m in filt.kept:
        try:
            segmented.append(segment_games(points_by_match[m.match_id], m))
        except SegmentationError as exc:
            seg_errors.append({"match_id": exc.match_id, "game": list(exc.game), "reason": str(exc)})
    report["segmentation_errors"] = seg_errors
    bad_ids = {e["match_id"] for e in seg_errors}

    report["tiebreak_games"] = sum(s.tiebreak_games for s in segmented)
    report["tiebreak_points"] = sum(s.tiebreak_points for s in segmented)
    report["incomplete_games"] = sum(s.incomplete_games for s in segmented)

    # eligibility is decided on the filtered match list; segmentation failures
    # drop the match from the analysis but are reported above
    by_player: dict[tuple, list[SegmentedMatch]] = defaultdict(list)
    for sm in segmented:
        for p in (sm.match.player1, sm.match.player2):
            if (sm.match.tour, p) in filt.eligible:
                by_player[(sm.match.tour, p)].append(sm)

    tallies: dict = {(t, r): [] for t in TOURS for r in ROLES}
    observations: dict = {(t, r): [] for t in TOURS for r in ROLES}
    imputed = []
    for (tour, player) in sorted(filt.eligible):
        sms = by_player.get((tour, player), [])
        for role in ROLES:
            t = tally_states(sms, player, role, tour)
            tallies[(tour, role)].append(t)
            observations[(tour, role)].extend(match_observations(sms, player, role))
            miss = t.imputed_states()
            if miss:
                imputed.append({"tour": tour, "player": player, "role": role, "states": [STATE_LABELS[i] for i in miss]})
    report["imputed_states"] = imputed

    mag = {}
    for tour in TOURS:
        tour_sms = [s for s in segmented if s.match.tour == tour]
        elig = [
            s for s in tour_sms
            if (tour, s.match.player1) in filt.eligible or (tour, s.match.player2) in filt.eligible
        ]

        def summarise(sms):
            games = sum(sum(g.complete for g in s.games) for s in sms)
            pts = sum(sum(len(g.states) for g in s.games if g.complete) for s in sms)
            return {"matches": len(sms), "games": games, "points": pts}

        mag[tour] = {
            "eligible_players": sum(1 for k in filt.eligible if k[0] == tour),
            "all_complete_matches": summarise(tour_sms),
            "matches_with_eligible_player": summarise(elig),
        }
    report["magnitudes"] = mag
    report["segmentation_error_matches"] = sorted(bad_ids)
    return IngestResult(tallies, observations, report)


def tallies_to_rows(tallies: list[PlayerTallies]) -> list[list]:
    rows = []
    for t in tallies:
        row = [t.player, t.role]
        for i in range(N_STATES):
            row += [int(t.played[i]), int(t.won[i])]
        row += [t.matches, t.games, t.match_wins]
        rows.append(row)
    return rows


def write_tallies_csv(path, tallies: list[PlayerTallies], meta: dict | None = None):
    return write_csv(path, TALLY_COLUMNS, tallies_to_rows(tallies), meta)


def read_tallies_csv(path, tour: str = "") -> list[PlayerTallies]:
    rows, _ = read_csv(path)
    out = []
    for row in rows:
        missing = [c for c in TALLY_COLUMNS if c not in row]
        if missing:
            raise SchemaError(missing[0], str(path))
        t = PlayerTallies(player=row["player"], role=row["role"], tour=tour)
        t.played = np.array([int(row[f"played_{lab}"]) for lab in STATE_LABELS], dtype=np.int64)
        t.won = np.array([int(row[f"won_{lab}"]) for lab in STATE_LABELS], dtype=np.int64)
        t.matches = int(row["matches"])
        t.games = int(row["games"])
        t.match_wins = int(row["match_wins"])
        t.match_losses = t.matches - t.match_wins
        t.check()
        out.append(t)
    return out


def write_observations_csv(path, obs: list[MatchObservation], meta: dict | None = None):
    rows = [[o.player, o.role, o.match_id, o.games, o.games_won, o.points] for o in obs]
    return write_csv(path, OBSERVATION_COLUMNS, rows, meta)


def read_observations_csv(path) -> list[MatchObservation]:
    rows, _ = read_csv(path)
    return [
        MatchObservation(r["player"], r["role"], r["match_id"], int(r["games"]), int(r["games_won"]), int(r["points"]))
        for r in rows
    ]
