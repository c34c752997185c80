import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import schaffer_front_hypervolume
from tennis_frontier.game_model import induced_average_pwp, solve_chain
from tennis_frontier.pareto import (
    CATEGORY_BOUNDS,
    CategoryConfig,
    Frontier,
    FrontierPoint,
    crowding_distance,
    derive_seed,
    dominates,
    fast_nondominated_sort,
    frontier_hypervolume,
    hypervolume_2d,
    merge_frontiers,
    nsga2,
    nsga2_optimize,
    random_feasible_audit,
)
from tennis_frontier.states import N_STATES

SMALL = dict(population=60, max_generations=40, n_seeds=2)


def _brute_dominates(a, b):
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def _grid_hypervolume(points, ref):
    """Exact dominated area by coordinate compression (minimisation)."""
    pts = [p for p in points if p[0] < ref[0] and p[1] < ref[1]]
    xs = sorted({p[0] for p in pts} | {ref[0]})
    ys = sorted({p[1] for p in pts} | {ref[1]})
    area = 0.0
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            if any(p[0] <= xs[i] and p[1] <= ys[j] for p in pts):
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
    return area


def _schaffer(x):
    x = x[:, 0]
    return np.column_stack([x**2, (x - 2.0) ** 2]), np.zeros(x.size)


# ---------------------------------------------------------------------------
# dominance, sorting, crowding, hypervolume
# ---------------------------------------------------------------------------


def test_dominates_outcome_pairs():
    assert dominates((0.6, 6.0), (0.5, 6.5))
    assert dominates((0.6, 6.0), (0.6, 6.5))
    assert not dominates((0.6, 6.0), (0.6, 6.0))
    assert not dominates((0.6, 7.0), (0.5, 6.5))


objective_sets = arrays(np.float64, st.tuples(st.integers(1, 25), st.just(2)), elements=st.integers(0, 6).map(float))


@settings(max_examples=150, deadline=None)
@given(objective_sets)
def test_nondominated_sort_against_brute_force(f):
    fronts = fast_nondominated_sort(f)
    seen = np.concatenate(fronts)
    assert sorted(seen.tolist()) == list(range(len(f)))
    for k, front in enumerate(fronts):
        for i in front:
            for j in front:
                assert not _brute_dominates(f[i], f[j])
            if k > 0:
                assert any(_brute_dominates(f[j], f[i]) for j in fronts[k - 1])


def test_crowding_distance_values():
    f = np.array([[0.0, 4.0], [1.0, 2.0], [2.0, 1.0], [4.0, 0.0]])
    d = crowding_distance(f)
    assert np.isinf(d[0]) and np.isinf(d[3])
    assert d[1] == pytest.approx(2 / 4 + 3 / 4)
    assert d[2] == pytest.approx(3 / 4 + 2 / 4)


def test_crowding_distance_duplicates():
    f = np.array([[0.0, 2.0], [1.0, 1.0], [1.0, 1.0], [2.0, 0.0]])
    d = crowding_distance(f)
    assert d[1] > 0 and d[2] == 0.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(0, 10)))
def test_hypervolume_against_grid(points):
    ref = (11.0, 11.0)
    assert hypervolume_2d(points, ref) == pytest.approx(_grid_hypervolume(points.tolist(), ref), rel=1e-9, abs=1e-9)


def test_schaffer_hypervolume_within_one_percent():
    res = nsga2(_schaffer, [-10.0], [10.0], population=100, max_generations=200, seed=3)
    f = res.objectives[res.first_front()]
    hv = hypervolume_2d(f, (4.0, 4.0))
    assert abs(hv - schaffer_front_hypervolume()) / schaffer_front_hypervolume() < 0.01


def test_nsga2_is_deterministic():
    a = nsga2(_schaffer, [-10.0], [10.0], population=30, max_generations=20, seed=7)
    b = nsga2(_schaffer, [-10.0], [10.0], population=30, max_generations=20, seed=7)
    c = nsga2(_schaffer, [-10.0], [10.0], population=30, max_generations=20, seed=8)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_nsga2_stops_on_tolerance():
    res = nsga2(_schaffer, [-10.0], [10.0], population=40, max_generations=2000, seed=1,
                function_tolerance=0.5, stall_generations=10)
    assert res.stop_reason != "max_generations"
    assert res.generations < 2000


def test_nsga2_respects_constraints():
    # minimise (x, 1-x) with x >= 0.5 required
    def evaluate(x):
        v = x[:, 0]
        return np.column_stack([v, 1 - v]), np.maximum(0.0, 0.5 - v)

    res = nsga2(evaluate, [0.0], [1.0], population=30, max_generations=30, seed=2)
    front = res.first_front()
    assert front.size > 0
    assert np.all(res.x[front, 0] >= 0.5)


# ---------------------------------------------------------------------------
# tennis frontier
# ---------------------------------------------------------------------------


def test_category_config_defaults_and_validation():
    cfg = CategoryConfig.for_category("women_return")
    assert (cfg.search_lo, cfg.search_hi) == CATEGORY_BOUNDS["women_return"]
    assert cfg.delta_p == pytest.approx(0.30)
    assert (cfg.population, cfg.max_generations, cfg.n_seeds) == (800, 400, 30)
    assert (cfg.crossover_rate, cfg.pareto_fraction, cfg.function_tolerance, cfg.epsilon) == (0.8, 0.6, 1e-4, 0.005)
    with pytest.raises(ValueError):
        CategoryConfig(0.6, 0.5)
    with pytest.raises(ValueError):
        CategoryConfig(0.2, 0.5, average="median")


@pytest.fixture(scope="module")
def toy_run():
    cfg = CategoryConfig.for_category("men_return", **SMALL)
    return cfg, nsga2_optimize(0.39, cfg, seed=11)


def test_frontier_points_feasible_and_nondominated(toy_run):
    cfg, pts = toy_run
    assert pts
    for p in pts:
        assert abs(induced_average_pwp(p.strategy) - 0.39) <= cfg.epsilon + 1e-12
        assert np.all((p.strategy >= cfg.search_lo) & (p.strategy <= cfg.search_hi))
        out = solve_chain(p.strategy)
        assert out.game_win_probability == pytest.approx(p.game_win_probability, abs=1e-12)
    for a in pts:
        for b in pts:
            assert not dominates(a.outcome, b.outcome)


def test_frontier_not_dominated_by_constant_baseline(toy_run):
    _, pts = toy_run
    base = solve_chain(np.full(N_STATES, 0.39)).as_pair()
    assert not any(dominates(base, p.outcome) for p in pts)


def test_unweighted_constraint_mode():
    cfg = CategoryConfig.for_category("men_service", average="unweighted", **SMALL)
    pts = nsga2_optimize(0.62, cfg, seed=3)
    assert pts
    for p in pts:
        assert abs(p.strategy.mean() - 0.62) <= cfg.epsilon + 1e-12


def test_target_outside_search_range():
    cfg = CategoryConfig.for_category("men_return", **SMALL)
    with pytest.raises(ValueError):
        nsga2_optimize(0.62, cfg, seed=1)


def test_nsga2_optimize_deterministic():
    cfg = CategoryConfig.for_category("women_service", population=30, max_generations=15)
    a = nsga2_optimize(0.57, cfg, seed=5)
    b = nsga2_optimize(0.57, cfg, seed=5)
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


def _point(w, e, seed=0):
    return FrontierPoint(np.full(N_STATES, 0.5), w, e, 0.0, seed)


def test_merge_frontiers_union_dedupe_and_order():
    run1 = [_point(0.3, 5.0), _point(0.4, 6.0)]
    run2 = [_point(0.3, 5.0 + 1e-12), _point(0.35, 5.2), _point(0.33, 5.9)]
    merged = merge_frontiers([run1, run2])
    assert [p.outcome for p in merged.points] == [(0.3, 5.0), (0.35, 5.2), (0.4, 6.0)]
    assert merge_frontiers([]).points == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.tuples(st.floats(0, 1), st.floats(4, 10)), min_size=1, max_size=8), min_size=1, max_size=4))
def test_merge_hypervolume_dominates_each_run(runs):
    runs = [[_point(w, e) for w, e in r] for r in runs]
    merged = merge_frontiers(runs)
    hv = frontier_hypervolume(merged)
    for r in runs:
        assert hv >= frontier_hypervolume(Frontier(r)) - 1e-9
    out = merged.outcomes()
    assert np.all(np.diff(out[:, 0]) >= 0)
    for i in range(len(out)):
        for j in range(len(out)):
            assert not dominates(out[i], out[j])


def test_frontier_point_round_trip():
    p = FrontierPoint(np.linspace(0.3, 0.4, N_STATES), 0.3, 6.1, 0.0, 99)
    q = FrontierPoint.from_dict(p.to_dict())
    np.testing.assert_array_equal(p.strategy, q.strategy)
    assert q.outcome == p.outcome and q.seed == 99


def test_derive_seed_rule():
    import hashlib

    expected = int.from_bytes(hashlib.sha256(b"42|men|A|service|0").digest()[:8], "big")
    assert derive_seed(42, "men", "A", "service", 0) == expected
    assert derive_seed(42, "men", "A", "service", 1) != expected


def test_random_audit_small(toy_run):
    cfg, pts = toy_run
    res = random_feasible_audit(Frontier(pts), 0.39, cfg, n_samples=2000, seed=1)
    assert res["n_samples"] == 2000
    assert res["violations"] == 0
