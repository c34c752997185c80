"""Reference implementations used only by the tests.

None of these import the package's solver, sorter or statistics code; they
work from raw point counts, plain enumeration and textbook formulas.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

# canonical transient order, written out by hand
LABELS = [
    "0-0", "1-0", "0-1", "2-0", "1-1", "0-2", "3-0", "2-1", "1-2", "0-3",
    "3-1", "2-2", "1-3", "3-2", "2-3", "3-3", "AD-3", "3-AD",
]


def raw_to_label(a: int, b: int) -> str:
    if a >= 3 and b >= 3:
        return {0: "3-3", 1: "AD-3", -1: "3-AD"}[a - b]
    return f"{a}-{b}"


def closed_form_win(p: float) -> float:
    """Constant-p game-win probability: p^4(1+4q+10q^2) + 20 p^5 q^3 / (1 - 2pq)."""
    q = 1.0 - p
    return p**4 * (1 + 4 * q + 10 * q**2) + 20 * p**5 * q**3 / (1 - 2 * p * q)


def closed_form_points(p: float) -> float:
    """Constant-p expected points, from the length distribution of a game.

    Games end after 4, 5 or 6 points or reach 3-3; from deuce each pair of
    points ends the game with probability p^2 + q^2, so 2/(p^2+q^2) more.
    """
    q = 1.0 - p
    four = p**4 + q**4
    five = 4 * (p**4 * q + q**4 * p)
    six = 10 * (p**4 * q**2 + q**4 * p**2)
    deuce = 20 * p**3 * q**3
    return 4 * four + 5 * five + 6 * six + deuce * (6 + 2 / (p**2 + q**2))


def forward_enumeration(strategy, max_points: int = 400):
    """(win, loss, expected points, visits) by pushing probability mass over
    raw scores point by point.  Truncation after ``max_points`` points."""
    p = dict(zip(LABELS, np.asarray(strategy, dtype=float)))
    mass = {(0, 0): 1.0}
    win = loss = points = 0.0
    visits = dict.fromkeys(LABELS, 0.0)
    for _ in range(max_points):
        nxt: dict = {}
        for (a, b), m in mass.items():
            lab = raw_to_label(a, b)
            visits[lab] += m
            points += m
            pw = p[lab]
            for (da, db), pr in (((1, 0), pw), ((0, 1), 1.0 - pw)):
                na, nb = a + da, b + db
                if na >= 4 and na - nb >= 2:
                    win += m * pr
                elif nb >= 4 and nb - na >= 2:
                    loss += m * pr
                else:
                    if na >= 3 and nb >= 3:  # fold deuce cycles to keep the dict small
                        shift = min(na, nb) - 3
                        na, nb = na - shift, nb - shift
                    nxt[(na, nb)] = nxt.get((na, nb), 0.0) + m * pr
        mass = nxt
        if not mass:
            break
    return win, loss, points, np.array([visits[lab] for lab in LABELS])


def game_paths(strategy, max_len: int = 12):
    """All point sequences up to ``max_len`` points with their probability and outcome."""
    p = dict(zip(LABELS, np.asarray(strategy, dtype=float)))
    out = []

    def rec(a, b, prob, seq):
        if a >= 4 and a - b >= 2:
            out.append((tuple(seq), prob, True))
            return
        if b >= 4 and b - a >= 2:
            out.append((tuple(seq), prob, False))
            return
        if len(seq) >= max_len:
            return
        pw = p[raw_to_label(a, b)]
        rec(a + 1, b, prob * pw, seq + [1])
        rec(a, b + 1, prob * (1 - pw), seq + [0])

    rec(0, 0, 1.0, [])
    return out


def cliffs_delta_loop(a, b) -> float:
    gt = lt = 0
    for x in a:
        for y in b:
            if x > y:
                gt += 1
            elif x < y:
                lt += 1
    return (gt - lt) / (len(a) * len(b))


def mann_whitney_exact_enumeration(a, b) -> float:
    """Two-sided exact p by listing every assignment of pooled values to group a."""
    pooled = list(a) + list(b)
    na = len(a)
    n = len(pooled)

    def u_stat(idx):
        xs = [pooled[i] for i in idx]
        ys = [pooled[i] for i in range(n) if i not in idx]
        return sum((x > y) + 0.5 * (x == y) for x in xs for y in ys)

    observed = u_stat(range(na))
    centre = na * (n - na) / 2
    dev = abs(observed - centre)
    combos = list(itertools.combinations(range(n), na))
    hits = sum(abs(u_stat(c) - centre) >= dev - 1e-12 for c in combos)
    return hits / len(combos)


def schaffer_front_hypervolume() -> float:
    """Hypervolume of Schaffer's front (f1 = x^2, f2 = (x-2)^2, x in [0, 2])
    against the reference point (4, 4).

    On the front f2 = (sqrt(f1) - 2)^2, so the dominated area is
    integral_0^4 (4 - f2) df1 = integral_0^4 (4 sqrt(f1) - f1) df1 = 64/3 - 8.
    """
    return 64.0 / 3.0 - 8.0


def population_sd(v) -> float:
    v = list(v)
    m = sum(v) / len(v)
    return math.sqrt(sum((x - m) ** 2 for x in v) / len(v))
