"""Constrained NSGA-II and per-player Pareto frontiers.

The optimiser is generic (minimise any number of objectives subject to a
scalar constraint violation) and :func:`nsga2_optimize` wraps it for the
tennis problem: maximise game-winning probability, minimise expected points
per game, with the strategy's average point-winning probability held within
``epsilon`` of the player's observed average.

Operator choices: simulated binary crossover and polynomial mutation (both
with distribution index 20, mutation rate 1/n per gene), binary tournaments
with Deb's feasibility-first comparison, and elitist survival in which the
first front may occupy at most ``pareto_fraction`` of the population.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .game_model import solve_batch
from .states import N_STATES

# category -> (search_lo, search_hi)
CATEGORY_BOUNDS = {
    "men_service": (0.50, 0.75),
    "men_return": (0.25, 0.50),
    "women_service": (0.40, 0.70),
    "women_return": (0.30, 0.60),
}
EPSILON_SWEEP = (0.0010, 0.0025, 0.0050, 0.0075)


@dataclass(frozen=True)
class CategoryConfig:
    search_lo: float
    search_hi: float
    epsilon: float = 0.005
    population: int = 800
    max_generations: int = 400
    function_tolerance: float = 1e-4
    crossover_rate: float = 0.8
    pareto_fraction: float = 0.6
    n_seeds: int = 30
    stall_generations: int = 50
    eta_crossover: float = 20.0
    eta_mutation: float = 20.0
    mutation_rate: float = 1.0 / N_STATES
    # "weighted": visit-weighted induced average; "unweighted": plain mean of the 18 entries
    average: str = "weighted"

    def __post_init__(self):
        if not 0.0 <= self.search_lo < self.search_hi <= 1.0:
            raise ValueError(f"bad search range [{self.search_lo}, {self.search_hi}]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.average not in ("weighted", "unweighted"):
            raise ValueError(f"unknown average mode {self.average!r}")

    @property
    def delta_p(self) -> float:
        return self.search_hi - self.search_lo

    @classmethod
    def for_category(cls, category: str, **overrides) -> "CategoryConfig":
        lo, hi = CATEGORY_BOUNDS[category]
        return cls(search_lo=lo, search_hi=hi, **overrides)

    def with_overrides(self, **kw) -> "CategoryConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta_p"] = self.delta_p
        return d


# ---------------------------------------------------------------------------
# Dominance, sorting, crowding
# ---------------------------------------------------------------------------


def dominates(a, b) -> bool:
    """Outcome ``a`` dominates ``b``: at least as high a win probability and
    no more expected points, strictly better in one of them."""
    a_win, a_pts = a
    b_win, b_pts = b
    return a_win >= b_win and a_pts <= b_pts and (a_win > b_win or a_pts < b_pts)


def _dominance_matrix(f: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row i dominates row j (all objectives minimised)."""
    le = np.all(f[:, None, :] <= f[None, :, :], axis=-1)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=-1)
    return le & lt


def fast_nondominated_sort(objectives) -> list[np.ndarray]:
    """Partition points (minimisation) into successive non-dominated fronts.

    Each front lists input indices in increasing order.
    """
    f = np.asarray(objectives, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    n = f.shape[0]
    if n == 0:
        return []
    dom = _dominance_matrix(f)
    counts = dom.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current)
        remaining[current] = False
        counts = counts - dom[current].sum(axis=0)
        current = np.flatnonzero(remaining & (counts == 0))
    return fronts


def crowding_distance(front_objectives) -> np.ndarray:
    """Crowding distance of every member of one front.

    Exact duplicates are collapsed first: the lowest-index copy receives the
    distance computed on the distinct points and the other copies get 0.
    """
    f = np.asarray(front_objectives, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    n, m = f.shape
    out = np.zeros(n)
    if n == 0:
        return out
    _, first = np.unique(f, axis=0, return_index=True)
    order_first = np.sort(first)
    uf = f[order_first]
    k = uf.shape[0]
    dist = np.zeros(k)
    if k <= 2:
        dist[:] = np.inf
    else:
        for j in range(m):
            order = np.argsort(uf[:, j], kind="stable")
            vals = uf[order, j]
            span = vals[-1] - vals[0]
            dist[order[0]] = np.inf
            dist[order[-1]] = np.inf
            if span > 0:
                dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    out[order_first] = dist
    return out


def hypervolume_2d(points, reference) -> float:
    """Area dominated by a set of 2-objective minimisation points, up to ``reference``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    pts = pts[np.all(pts < ref, axis=1)]
    if pts.size == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    best_y = ref[1]
    for x, y in pts:
        if y < best_y:
            area += (ref[0] - x) * (best_y - y)
            best_y = y
    return float(area)


# ---------------------------------------------------------------------------
# Generic constrained NSGA-II
# ---------------------------------------------------------------------------


@dataclass
class NSGA2Result:
    x: np.ndarray
    objectives: np.ndarray
    violation: np.ndarray
    generations: int
    stop_reason: str
    spread_history: list = field(default_factory=list)

    def first_front(self) -> np.ndarray:
        """Indices of the feasible non-dominated members of the final population."""
        feas = np.flatnonzero(self.violation <= 0)
        if feas.size == 0:
            return feas
        return feas[fast_nondominated_sort(self.objectives[feas])[0]]


def _rank_and_crowd(f: np.ndarray, cv: np.ndarray):
    n = f.shape[0]
    rank = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    crowd = np.zeros(n)
    feas = np.flatnonzero(cv <= 0)
    fronts = []
    for r, fr in enumerate(fast_nondominated_sort(f[feas])):
        idx = feas[fr]
        rank[idx] = r
        crowd[idx] = crowding_distance(f[idx])
        fronts.append(idx)
    return rank, crowd, fronts


def _tournament(rng, rank, crowd, cv, n_select):
    n = rank.size
    a = rng.integers(0, n, n_select)
    b = rng.integers(0, n, n_select)
    fa, fb = cv[a] <= 0, cv[b] <= 0
    a_wins = np.where(
        fa & fb,
        (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b])),
        np.where(fa | fb, fa, cv[a] <= cv[b]),
    )
    return np.where(a_wins, a, b)


def _sbx(rng, p1, p2, lo, hi, eta, rate):
    c1, c2 = p1.copy(), p2.copy()
    n_pairs, n_var = p1.shape
    do_pair = rng.random(n_pairs) < rate
    do_var = (rng.random((n_pairs, n_var)) < 0.5) & do_pair[:, None]
    do_var &= np.abs(p1 - p2) > 1e-14
    u = rng.random((n_pairs, n_var))
    swap = rng.random((n_pairs, n_var)) < 0.5
    y1 = np.minimum(p1, p2)
    y2 = np.maximum(p1, p2)
    span = np.where(do_var, y2 - y1, 1.0)

    def child(beta):
        alpha = 2.0 - beta ** (-(eta + 1.0))
        betaq = np.where(
            u <= 1.0 / alpha,
            (u * alpha) ** (1.0 / (eta + 1.0)),
            (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0)),
        )
        return betaq

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        bq1 = child(1.0 + 2.0 * (y1 - lo) / span)
        bq2 = child(1.0 + 2.0 * (hi - y2) / span)
        k1 = np.clip(0.5 * ((y1 + y2) - bq1 * (y2 - y1)), lo, hi)
        k2 = np.clip(0.5 * ((y1 + y2) + bq2 * (y2 - y1)), lo, hi)
    k1, k2 = np.where(swap, k2, k1), np.where(swap, k1, k2)
    c1 = np.where(do_var, k1, c1)
    c2 = np.where(do_var, k2, c2)
    return c1, c2


def _polynomial_mutation(rng, x, lo, hi, eta, rate):
    y = x.copy()
    mask = rng.random(x.shape) < rate
    r = rng.random(x.shape)
    span = hi - lo
    d1 = (y - lo) / span
    d2 = (hi - y) / span
    mpow = 1.0 / (eta + 1.0)
    low = r < 0.5
    val_lo = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta + 1.0)
    deltaq = np.where(low, val_lo**mpow - 1.0, 1.0 - val_hi**mpow)
    y = np.where(mask, np.clip(y + deltaq * span, lo, hi), y)
    return y


def _survivors(f, cv, n_keep, pareto_fraction):
    """Elitist environmental selection with a cap on first-front survivors."""
    rank, crowd, fronts = _rank_and_crowd(f, cv)
    cap = max(1, int(round(pareto_fraction * n_keep)))
    chosen: list[np.ndarray] = []
    leftovers = np.empty(0, dtype=np.int64)
    taken = 0
    for r, front in enumerate(fronts):
        room = n_keep - taken
        if room <= 0:
            break
        limit = min(room, cap) if r == 0 else room
        if front.size <= limit:
            chosen.append(front)
            taken += front.size
        else:
            order = front[np.argsort(-crowd[front], kind="stable")]
            chosen.append(order[:limit])
            taken += limit
            if r == 0:
                leftovers = order[limit:]
    if taken < n_keep:
        infeas = np.flatnonzero(cv > 0)
        infeas = infeas[np.argsort(cv[infeas], kind="stable")]
        extra = infeas[: n_keep - taken]
        chosen.append(extra)
        taken += extra.size
    if taken < n_keep:
        chosen.append(leftovers[: n_keep - taken])
    return np.concatenate(chosen)


def _spread(f, cv):
    feas = np.flatnonzero(cv <= 0)
    if feas.size < 3:
        return 0.0
    front = feas[fast_nondominated_sort(f[feas])[0]]
    if front.size < 3:
        return 0.0
    cd = crowding_distance(f[front])
    finite = cd[np.isfinite(cd)]
    return float(finite.mean()) if finite.size else 0.0


def nsga2(
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    lower,
    upper,
    *,
    population: int,
    max_generations: int,
    seed: int,
    crossover_rate: float = 0.8,
    pareto_fraction: float = 1.0,
    function_tolerance: float = 0.0,
    stall_generations: int = 50,
    eta_crossover: float = 20.0,
    eta_mutation: float = 20.0,
    mutation_rate: float | None = None,
) -> NSGA2Result:
    """Minimise ``evaluate(X) -> (objectives, violation)`` over a box.

    ``violation`` is zero for feasible rows.  The run stops after
    ``max_generations`` or once the mean relative change of the first-front
    spread (mean finite crowding distance) over the last
    ``stall_generations`` generations falls below ``function_tolerance``.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    n_var = lo.size
    if mutation_rate is None:
        mutation_rate = 1.0 / n_var
    rng = np.random.Generator(np.random.PCG64(seed))
    pop_size = population + (population % 2)

    x = lo + rng.random((pop_size, n_var)) * (hi - lo)
    f, cv = evaluate(x)
    history = [_spread(f, cv)]
    stop = "max_generations"
    gen = 0
    for gen in range(1, max_generations + 1):
        rank, crowd, _ = _rank_and_crowd(f, cv)
        parents = _tournament(rng, rank, crowd, cv, pop_size)
        p1, p2 = x[parents[0::2]], x[parents[1::2]]
        c1, c2 = _sbx(rng, p1, p2, lo, hi, eta_crossover, crossover_rate)
        kids = np.vstack([c1, c2])
        kids = _polynomial_mutation(rng, kids, lo, hi, eta_mutation, mutation_rate)
        kf, kcv = evaluate(kids)

        all_x = np.vstack([x, kids])
        all_f = np.vstack([f, kf])
        all_cv = np.concatenate([cv, kcv])
        keep = _survivors(all_f, all_cv, pop_size, pareto_fraction)
        x, f, cv = all_x[keep], all_f[keep], all_cv[keep]

        history.append(_spread(f, cv))
        if function_tolerance > 0 and gen >= stall_generations:
            window = np.asarray(history[-(stall_generations + 1):])
            prev = np.maximum(np.abs(window[:-1]), 1e-12)
            rel = np.abs(np.diff(window)) / prev
            if window[-1] > 0 and rel.mean() < function_tolerance:
                stop = "function_tolerance"
                break
    return NSGA2Result(x, f, cv, gen, stop, history)


# ---------------------------------------------------------------------------
# Tennis frontier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrontierPoint:
    strategy: np.ndarray
    game_win_probability: float
    expected_points: float
    constraint_violation: float
    seed: int

    @property
    def outcome(self) -> tuple[float, float]:
        return (self.game_win_probability, self.expected_points)

    def to_dict(self) -> dict:
        return {
            "strategy": [float(v) for v in self.strategy],
            "game_win_probability": self.game_win_probability,
            "expected_points": self.expected_points,
            "constraint_violation": self.constraint_violation,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrontierPoint":
        return cls(
            np.asarray(d["strategy"], dtype=float),
            float(d["game_win_probability"]),
            float(d["expected_points"]),
            float(d["constraint_violation"]),
            int(d["seed"]),
        )


@dataclass
class Frontier:
    points: list[FrontierPoint]

    def __len__(self):
        return len(self.points)

    def outcomes(self) -> np.ndarray:
        return np.array([p.outcome for p in self.points], dtype=float).reshape(-1, 2)

    def strategies(self) -> np.ndarray:
        return np.array([p.strategy for p in self.points], dtype=float).reshape(-1, N_STATES)


def strategy_average(p: np.ndarray, visits: np.ndarray, mode: str = "weighted") -> np.ndarray:
    if mode == "unweighted":
        return p.mean(axis=-1)
    return np.sum(visits * p, axis=-1) / visits.sum(axis=-1)


def tennis_evaluator(target_avg: float, config: CategoryConfig):
    """Batch evaluator for (-win probability, expected points) with the average constraint."""

    def evaluate(x):
        win, _, points, visits = solve_batch(x)
        avg = strategy_average(x, visits, config.average)
        cv = np.maximum(0.0, np.abs(avg - target_avg) - config.epsilon)
        bad = ~np.isfinite(points)
        f = np.column_stack([-win, points])
        if bad.any():
            f[bad] = np.inf
            cv[bad] = np.inf
        return f, cv

    return evaluate


def nsga2_optimize(target_avg: float, config: CategoryConfig, seed: int) -> list[FrontierPoint]:
    """One seeded NSGA-II run; returns the feasible first front of the final population.

    An empty list means no feasible strategy was found.
    """
    if not config.search_lo <= target_avg <= config.search_hi:
        raise ValueError(
            f"target average {target_avg:.4f} outside search range "
            f"[{config.search_lo}, {config.search_hi}]"
        )
    res = nsga2(
        tennis_evaluator(target_avg, config),
        np.full(N_STATES, config.search_lo),
        np.full(N_STATES, config.search_hi),
        population=config.population,
        max_generations=config.max_generations,
        seed=seed,
        crossover_rate=config.crossover_rate,
        pareto_fraction=config.pareto_fraction,
        function_tolerance=config.function_tolerance,
        stall_generations=config.stall_generations,
        eta_crossover=config.eta_crossover,
        eta_mutation=config.eta_mutation,
        mutation_rate=config.mutation_rate,
    )
    idx = res.first_front()
    return [
        FrontierPoint(
            res.x[i].copy(),
            float(-res.objectives[i, 0]),
            float(res.objectives[i, 1]),
            float(res.violation[i]),
            int(seed),
        )
        for i in idx
    ]


def merge_frontiers(runs, tol: float = 1e-9) -> Frontier:
    """Union of runs, near-duplicate outcomes dropped, non-dominated set sorted by win probability."""
    pool = [pt for run in runs for pt in run]
    if not pool:
        return Frontier([])
    out = np.array([pt.outcome for pt in pool])
    keep: list[int] = []
    for i in range(len(pool)):
        if keep and np.any(np.all(np.abs(out[keep] - out[i]) <= tol, axis=1)):
            continue
        keep.append(i)
    kept = np.array(keep)
    objectives = np.column_stack([-out[kept, 0], out[kept, 1]])
    first = kept[fast_nondominated_sort(objectives)[0]]
    first = sorted(first, key=lambda i: (out[i, 0], out[i, 1]))
    return Frontier([pool[i] for i in first])


def frontier_hypervolume(frontier_or_outcomes, reference=(0.0, 20.0)) -> float:
    """Hypervolume in (win probability, expected points) space.

    The reference point is (lowest win probability, highest points) that
    still counts; win probability is negated internally.
    """
    if isinstance(frontier_or_outcomes, Frontier):
        pts = frontier_or_outcomes.outcomes()
    else:
        pts = np.asarray(frontier_or_outcomes, dtype=float).reshape(-1, 2)
    mins = np.column_stack([-pts[:, 0], pts[:, 1]])
    return hypervolume_2d(mins, (-reference[0], reference[1]))


def derive_seed(master_seed: int, *parts) -> int:
    """Sub-seed rule: first 8 bytes (big-endian) of SHA-256 over ``"master|part|..."``."""
    import hashlib

    text = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def estimate_frontier(target_avg: float, config: CategoryConfig, seeds) -> tuple[Frontier, list]:
    """Run one optimisation per seed and merge; also returns per-seed run sizes."""
    runs = [nsga2_optimize(target_avg, config, s) for s in seeds]
    return merge_frontiers(runs), runs


def random_feasible_audit(
    frontier: Frontier,
    target_avg: float,
    config: CategoryConfig,
    n_samples: int = 10_000,
    seed: int = 0,
    margins=(0.005, 0.02),
    batch: int = 20_000,
    max_draws: int = 20_000_000,
) -> dict:
    """Rejection-sample feasible strategies uniformly in the box and look for
    any that beat a frontier point by more than ``margins`` on both axes.

    A frontier point (w, e) counts as beaten when a sample reaches at least
    w + margins[0] win probability with at most e - margins[1] points.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    evaluate = tennis_evaluator(target_avg, config)
    found: list[np.ndarray] = []
    n_found = 0
    draws = 0
    while n_found < n_samples and draws < max_draws:
        x = config.search_lo + rng.random((batch, N_STATES)) * config.delta_p
        draws += batch
        f, cv = evaluate(x)
        ok = cv <= 0
        found.append(np.column_stack([-f[ok, 0], f[ok, 1]]))
        n_found += int(ok.sum())
    samples = np.vstack(found)[:n_samples] if found else np.empty((0, 2))
    fo = frontier.outcomes()
    beaten = (samples[:, None, 0] >= fo[None, :, 0] + margins[0]) & (
        samples[:, None, 1] <= fo[None, :, 1] - margins[1]
    )
    return {
        "n_samples": int(samples.shape[0]),
        "draws": draws,
        "violations": int(beaten.any(axis=0).sum()),
        "max_win_gain": float(np.max(samples[:, None, 0] - fo[None, :, 0])) if samples.size and fo.size else math.nan,
    }
