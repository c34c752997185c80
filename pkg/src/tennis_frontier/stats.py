"""Tier comparisons and the contrast regression.

Random streams: every Monte Carlo or bootstrap routine takes an integer
``seed``; bootstrap replicate ``i`` draws from
``Generator(PCG64(SeedSequence(seed).spawn(iterations)[i]))`` so replicates
can be computed in any order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy import special
from scipy import stats as sps

LARGE_DELTA = 0.47
LARGE_D = 0.8
EXACT_MW_LIMIT = 400
TIER_ORDER = ("low", "mid", "high")
TIER_PAIRS = (("high", "low"), ("high", "mid"), ("mid", "low"))


class DegenerateSample(ValueError):
    pass


# ---------------------------------------------------------------------------
# Normality
# ---------------------------------------------------------------------------


def _ks_normal_stat(x: np.ndarray) -> np.ndarray:
    """KS distance to a normal with the sample's own mean/SD; rows are samples."""
    x = np.sort(x, axis=-1)
    n = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, ddof=1, keepdims=True)
    cdf = special.ndtr((x - mu) / sd)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf, axis=-1)
    d_minus = np.max(cdf - (i - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


def lilliefors_test(sample, n_sim: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Lilliefors normality test; returns ``(statistic, p_value)``.

    The p-value is Monte Carlo: the share of ``n_sim`` standard-normal
    samples of the same size whose statistic is at least as large, with the
    usual +1 correction.
    """
    x = np.asarray(sample, dtype=float)
    if x.size < 4:
        raise DegenerateSample("Lilliefors test needs at least 4 observations")
    if np.ptp(x) == 0:
        raise DegenerateSample("sample is constant")
    d = float(_ks_normal_stat(x[None, :])[0])
    rng = np.random.Generator(np.random.PCG64(seed))
    exceed = 0
    done = 0
    chunk = max(1, min(n_sim, 2_000_000 // x.size))
    while done < n_sim:
        m = min(chunk, n_sim - done)
        sims = _ks_normal_stat(rng.standard_normal((m, x.size)))
        exceed += int(np.sum(sims >= d - 1e-12))
        done += m
    return d, (exceed + 1) / (n_sim + 1)


# ---------------------------------------------------------------------------
# Rank test and effect sizes
# ---------------------------------------------------------------------------


def _exact_mw_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided p by counting every split of the pooled mid-ranks."""
    pooled = np.concatenate([a, b])
    n = pooled.size
    ranks2 = np.rint(2 * sps.rankdata(pooled)).astype(np.int64)  # doubled mid-ranks are integers
    small = a if a.size <= b.size else b
    k = small.size
    obs = int(ranks2[: a.size].sum()) if small is a else int(ranks2[a.size:].sum())
    total = int(ranks2.sum())
    dp = np.zeros((k + 1, total + 1))
    dp[0, 0] = 1.0
    for r in ranks2:
        dp[1:, r:] += dp[:-1, : total + 1 - r].copy()
    counts = dp[k]
    centre2 = k * (n + 1)  # expected doubled-rank sum
    sums = np.arange(total + 1)
    extreme = np.abs(sums - centre2) >= abs(obs - centre2)
    return float(min(1.0, counts[extreme].sum() / counts.sum()))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Return ``(U_a, two-sided p)``.

    Exact (all arrangements of the pooled mid-ranks) when ``len(a)*len(b) <= 400``,
    otherwise the normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    na, nb = a.size, b.size
    ranks = sps.rankdata(np.concatenate([a, b]))
    u = float(ranks[:na].sum() - na * (na + 1) / 2)
    if na * nb <= EXACT_MW_LIMIT:
        return u, _exact_mw_pvalue(a, b)
    return u, _normal_mw_pvalue(u, na, nb, ranks)


def _normal_mw_pvalue(u, na, nb, ranks) -> float:
    n = na + nb
    _, t = np.unique(ranks, return_counts=True)
    tie = float(np.sum(t**3 - t))
    var = na * nb / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = (abs(u - na * nb / 2.0) - 0.5) / math.sqrt(var)
    return float(min(1.0, 2.0 * sps.norm.sf(max(z, 0.0))))


def cliffs_delta(a, b) -> float:
    """(#{a_i > b_j} - #{a_i < b_j}) / (n_a n_b) by direct pair counting."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    s = np.sign(a[:, None] - b[None, :])
    return float(s.sum() / (a.size * b.size))


def cohens_d_value(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateSample("each group needs at least two values")
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    if pooled <= 0:
        raise DegenerateSample("pooled standard deviation is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


EFFECTS = {"cliffs_delta": cliffs_delta, "cohens_d": cohens_d_value}


def bootstrap_ci(effect, a, b, iterations: int = 1000, seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval, resampling each group with replacement.

    ``effect`` is a callable or one of ``"cliffs_delta"``, ``"cohens_d"``.
    Replicates where the effect is undefined are dropped.
    """
    fn = EFFECTS[effect] if isinstance(effect, str) else effect
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateSample("each group needs at least two values")
    vals = np.full(iterations, np.nan)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(iterations)):
        rng = np.random.Generator(np.random.PCG64(child))
        ra = a[rng.integers(0, a.size, a.size)]
        rb = b[rng.integers(0, b.size, b.size)]
        try:
            vals[i] = fn(ra, rb)
        except DegenerateSample:
            pass
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise DegenerateSample("every bootstrap replicate was degenerate")
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(vals, [tail, 100.0 - tail])
    return float(lo), float(hi)


def cohens_d(a, b, iterations: int = 1000, seed: int = 0) -> tuple[float, tuple[float, float]]:
    """Cohen's d with pooled (n-1 weighted) SD and a percentile bootstrap CI."""
    d = cohens_d_value(a, b)
    return d, bootstrap_ci(cohens_d_value, a, b, iterations, seed)


def bonferroni(p_values) -> list[float]:
    p = np.asarray(p_values, dtype=float)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("p-values must lie in [0, 1]")
    return [float(v) for v in np.minimum(1.0, p * p.size)]


def tukey_kramer(groups) -> list[dict]:
    """Pairwise Tukey-Kramer comparisons.

    q = |mean_i - mean_j| / sqrt(MSE/2 (1/n_i + 1/n_j)); p from scipy's
    studentized range distribution with k groups and N - k df.
    """
    gs = [np.asarray(g, dtype=float) for g in groups]
    k = len(gs)
    if k < 2 or any(g.size < 2 for g in gs):
        raise DegenerateSample("need at least two groups of size two")
    n_total = sum(g.size for g in gs)
    df = n_total - k
    mse = sum((g.size - 1) * g.var(ddof=1) for g in gs) / df
    if mse <= 0:
        raise DegenerateSample("within-group variance is zero")
    rows = []
    for i, j in combinations(range(k), 2):
        diff = float(gs[i].mean() - gs[j].mean())
        se = math.sqrt(mse / 2.0 * (1.0 / gs[i].size + 1.0 / gs[j].size))
        q = abs(diff) / se
        p = float(np.clip(sps.studentized_range.sf(q, k, df), 0.0, 1.0))
        rows.append({"i": i, "j": j, "mean_diff": diff, "q": q, "p": p})
    return rows


@dataclass
class RegressionResult:
    r: float
    p: float
    slope: float
    intercept: float
    n: int
    residual_sd: float
    x_mean: float
    sxx: float

    def band(self, x0, level: float = 0.95):
        """(fit, lower, upper) confidence band for the mean response at ``x0``."""
        x0 = np.asarray(x0, dtype=float)
        fit = self.intercept + self.slope * x0
        t = sps.t.ppf(0.5 + level / 2.0, self.n - 2)
        se = self.residual_sd * np.sqrt(1.0 / self.n + (x0 - self.x_mean) ** 2 / self.sxx)
        return fit, fit - t * se, fit + t * se


def pearson_and_regression(x, y) -> RegressionResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    n = x.size
    if n < 3:
        raise DegenerateSample("need at least three points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    syy = float(np.sum((y - ym) ** 2))
    if sxx == 0:
        raise DegenerateSample("x is constant")
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    rss = float(resid @ resid)
    s = math.sqrt(rss / (n - 2)) if n > 2 else 0.0
    if syy == 0:
        r, p = 0.0, 1.0
    else:
        r = float(np.clip(sxy / math.sqrt(sxx * syy), -1.0, 1.0))
        if abs(r) == 1.0:
            p = 0.0
        else:
            t = r * math.sqrt((n - 2) / (1 - r * r))
            p = float(2 * sps.t.sf(abs(t), n - 2))
    return RegressionResult(r, p, slope, intercept, n, s, float(xm), sxx)


# ---------------------------------------------------------------------------
# Tier comparisons
# ---------------------------------------------------------------------------


@dataclass
class TierComparison:
    pair: tuple
    method: str
    statistic: float | None = None
    p_value: float | None = None
    p_adjusted: float | None = None
    effect_size: float | None = None
    effect_name: str = ""
    ci: tuple | None = None
    large_effect: bool | None = None
    note: str = ""

    def to_dict(self):
        d = asdict(self)
        d["pair"] = list(self.pair)
        d["ci"] = None if self.ci is None else list(self.ci)
        return d


def normality_by_tier(values: dict, n_sim: int = 10_000, seed: int = 0) -> dict:
    out = {}
    for t in TIER_ORDER:
        x = values.get(t, [])
        try:
            stat, p = lilliefors_test(x, n_sim, seed)
            out[t] = {"n": len(x), "statistic": stat, "p_value": p, "normal": p >= 0.05}
        except DegenerateSample as exc:
            out[t] = {"n": len(x), "statistic": None, "p_value": None, "normal": None, "note": str(exc)}
    return out


def compare_tiers(
    values: dict,
    family: str = "auto",
    bootstrap_iterations: int = 1000,
    seed: int = 0,
    n_sim: int = 10_000,
) -> dict:
    """Pairwise tier comparisons for one metric in one category.

    ``family``: ``"nonparametric"`` (Mann-Whitney, Bonferroni, Cliff's delta),
    ``"parametric"`` (Tukey-Kramer, Cohen's d) or ``"auto"`` (nonparametric
    when any tier rejects normality at 0.05).
    """
    values = {t: [float(v) for v in values.get(t, [])] for t in TIER_ORDER}
    normality = normality_by_tier(values, n_sim, seed)
    if family == "auto":
        rejected = any(v["normal"] is False for v in normality.values())
        family = "nonparametric" if rejected else "parametric"
    if family not in ("nonparametric", "parametric"):
        raise ValueError(f"unknown test family {family!r}")

    usable = [t for t in TIER_ORDER if len(values[t]) >= 2]
    comparisons: list[TierComparison] = []
    if len(usable) < 2:
        for pair in TIER_PAIRS:
            comparisons.append(TierComparison(pair, family, note="insufficient groups"))
        return {"family": family, "normality": normality, "comparisons": [c.to_dict() for c in comparisons]}

    if family == "nonparametric":
        raw = []
        for pair in TIER_PAIRS:
            a, b = values[pair[0]], values[pair[1]]
            if len(a) < 2 or len(b) < 2:
                comparisons.append(TierComparison(pair, "mann_whitney", note="insufficient groups"))
                continue
            u, p = mann_whitney_u(a, b)
            delta = cliffs_delta(a, b)
            ci = bootstrap_ci("cliffs_delta", a, b, bootstrap_iterations, seed)
            c = TierComparison(pair, "mann_whitney", u, p, None, delta, "cliffs_delta", ci, abs(delta) >= LARGE_DELTA)
            comparisons.append(c)
            raw.append(c)
        for c, adj in zip(raw, bonferroni([c.p_value for c in raw])):
            c.p_adjusted = adj
    else:
        idx = {t: i for i, t in enumerate(usable)}
        try:
            table = tukey_kramer([values[t] for t in usable])
        except DegenerateSample as exc:
            table = None
            note = str(exc)
        for pair in TIER_PAIRS:
            if pair[0] not in idx or pair[1] not in idx:
                comparisons.append(TierComparison(pair, "tukey_kramer", note="insufficient groups"))
                continue
            if table is None:
                comparisons.append(TierComparison(pair, "tukey_kramer", note=note))
                continue
            i, j = sorted((idx[pair[0]], idx[pair[1]]))
            row = next(r for r in table if r["i"] == i and r["j"] == j)
            a, b = values[pair[0]], values[pair[1]]
            try:
                d, ci = cohens_d(a, b, bootstrap_iterations, seed)
            except DegenerateSample:
                d, ci = None, None
            comparisons.append(
                TierComparison(
                    pair, "tukey_kramer", row["q"], row["p"], row["p"], d, "cohens_d", ci,
                    None if d is None else abs(d) >= LARGE_D,
                )
            )
    return {"family": family, "normality": normality, "comparisons": [c.to_dict() for c in comparisons]}
