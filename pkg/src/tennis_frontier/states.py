"""Game score states and their canonical ordering.

Scores are always written from the analysed player's side: ``(2, 1)`` means
the player has two points and the opponent one.  Advantage scores use the
string ``"AD"`` in place of a point count.

Canonical index table (this order is used by every file format)::

     0 (0,0)    1 (1,0)    2 (0,1)    3 (2,0)    4 (1,1)    5 (0,2)
     6 (3,0)    7 (2,1)    8 (1,2)    9 (0,3)   10 (3,1)   11 (2,2)
    12 (1,3)   13 (3,2)   14 (2,3)   15 (3,3)   16 (AD,3)  17 (3,AD)
    18 Won     19 Lost
"""

from __future__ import annotations

AD = "AD"

STATE_ORDER_VERSION = "tennis-game-18/v1"

TRANSIENT_STATES: tuple[tuple, ...] = (
    (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
    (3, 0), (2, 1), (1, 2), (0, 3), (3, 1), (2, 2),
    (1, 3), (3, 2), (2, 3), (3, 3), (AD, 3), (3, AD),
)
N_STATES = len(TRANSIENT_STATES)
WON = 18
LOST = 19

STATE_INDEX = {s: i for i, s in enumerate(TRANSIENT_STATES)}
DEUCE = STATE_INDEX[(3, 3)]
AD_IN = STATE_INDEX[(AD, 3)]
AD_OUT = STATE_INDEX[(3, AD)]


def state_label(index: int) -> str:
    """Human readable label, e.g. ``"2-1"``, ``"AD-3"``, ``"Won"``."""
    if index == WON:
        return "Won"
    if index == LOST:
        return "Lost"
    a, b = TRANSIENT_STATES[index]
    return f"{a}-{b}"


STATE_LABELS = tuple(state_label(i) for i in range(N_STATES))


class ContractViolation(ValueError):
    """Raised when a function is called outside its documented preconditions."""


def transition_from(state, won_point: bool):
    """Successor of a transient score after one point.

    ``state`` may be a canonical index or a score tuple; the result has the
    same form (absorbing outcomes are always returned as ``WON``/``LOST``).
    """
    as_index = isinstance(state, int)
    if as_index:
        if not 0 <= state < N_STATES:
            raise ContractViolation(f"state {state} is not transient")
        score = TRANSIENT_STATES[state]
    else:
        score = tuple(state)
        if score not in STATE_INDEX:
            raise ContractViolation(f"state {state!r} is not transient")

    a, b = score
    if score == (AD, 3):
        nxt = WON if won_point else (3, 3)
    elif score == (3, AD):
        nxt = (3, 3) if won_point else LOST
    elif score == (3, 3):
        nxt = (AD, 3) if won_point else (3, AD)
    elif won_point:
        if a == 3:
            nxt = WON
        elif (a + 1, b) == (3, 3):
            nxt = (3, 3)
        else:
            nxt = (a + 1, b)
    else:
        if b == 3:
            nxt = LOST
        else:
            nxt = (a, b + 1)

    if nxt in (WON, LOST):
        return nxt
    return STATE_INDEX[nxt] if as_index else nxt


def _successor_table():
    win = [transition_from(i, True) for i in range(N_STATES)]
    loss = [transition_from(i, False) for i in range(N_STATES)]
    return tuple(win), tuple(loss)


# successor index on a point won / lost, per transient index
WIN_NEXT, LOSS_NEXT = _successor_table()


def mirror_index(index: int) -> int:
    """Index of the same score seen from the opponent's side."""
    a, b = TRANSIENT_STATES[index]
    return STATE_INDEX[(b, a)]


def collapse_score(player_points: int, opponent_points: int) -> int:
    """Map raw point counts (any length of deuce cycle) onto a transient index.

    Scores with both sides on three or more points fold onto deuce or
    advantage.  Counts that describe a finished game raise ``ContractViolation``.
    """
    a, b = player_points, opponent_points
    if a < 0 or b < 0:
        raise ContractViolation(f"negative point count ({a}, {b})")
    if a >= 3 and b >= 3:
        diff = a - b
        if diff == 0:
            return DEUCE
        if diff == 1:
            return AD_IN
        if diff == -1:
            return AD_OUT
        raise ContractViolation(f"score ({a}, {b}) is already decided")
    if a >= 4 or b >= 4:
        raise ContractViolation(f"score ({a}, {b}) is already decided")
    return STATE_INDEX[(a, b)]
