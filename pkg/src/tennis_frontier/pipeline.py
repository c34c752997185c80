"""Cached pipeline stages.

Each stage reads its upstream artifacts, writes its own under
``out_dir/<stage dir>/`` and finishes with a ``manifest.json`` recording the
stage's config hash, the master seed, its inputs (data file digests or
upstream manifest digests) and the digest of every output.  A stage is
skipped when its manifest is still current; upstream manifests that are
missing or were produced under a different configuration stop the run with
:class:`StageDependencyError` naming the stage to rerun.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .artifacts import (
    MANIFEST,
    artifact_meta,
    file_sha256,
    manifest_is_current,
    read_csv,
    read_json,
    stage_manifest,
    write_csv,
    write_json,
)
from .config import CATEGORIES, STAGES, PipelineConfig
from .game_model import simulate_games, solve_chain
from .ingest import (
    ROLES,
    TOURS,
    IngestError,
    discover_files,
    ingest_corpus,
    read_observations_csv,
    read_tallies_csv,
    write_observations_csv,
    write_tallies_csv,
)
from .metrics import category_pattern, efficiency, player_metrics
from .model_fit import MODELS, TARGETS, EstimationError, ModelComparison, average_comparisons, compare_models
from .pareto import Frontier, FrontierPoint, derive_seed, merge_frontiers, nsga2_optimize
from .states import N_STATES, STATE_LABELS
from .stats import DegenerateSample, compare_tiers, pearson_and_regression

log = logging.getLogger(__name__)

STAGE_DIRS = {
    "ingest": "tallies",
    "fit": "fits",
    "frontier": "frontiers",
    "metrics": "metrics",
    "stats": "stats",
    "report": "report",
    "simulate": "simulate",
}
UPSTREAM = {
    "ingest": (),
    "fit": ("ingest",),
    "frontier": ("ingest",),
    "metrics": ("ingest", "frontier"),
    "stats": ("metrics",),
    "report": ("fit", "frontier", "metrics", "stats"),
}
# stages whose outputs depend on the optimisation profile
PROFILED = {"frontier", "metrics", "stats", "report"}
IC_METRICS = ("AIC", "BIC", "adjusted_R2")
STAT_METRICS = ("efficiency", "strategy_fit")


class StageDependencyError(RuntimeError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: list = field(default_factory=list)


def category_of(tour: str, role: str) -> str:
    return f"{tour}_{role}"


def split_category(category: str) -> tuple[str, str]:
    tour, role = category.split("_", 1)
    return tour, role


def eps_label(eps: float) -> str:
    return f"eps_{eps:g}"


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "player"


class Pipeline:
    def __init__(self, config: PipelineConfig, jobs: int = 1, force: bool = False):
        self.cfg = config
        self.jobs = max(1, int(jobs))
        self.force = force
        self.root = Path(config.out_dir)

    # -- plumbing -----------------------------------------------------------
    def stage_dir(self, stage: str) -> Path:
        return self.root / STAGE_DIRS[stage]

    def manifest_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / MANIFEST

    def profile_label(self, stage: str) -> str:
        return self.cfg.profile if stage in PROFILED else "any"

    def meta(self, stage: str) -> dict:
        return artifact_meta(self.cfg.stage_hash(stage), self.profile_label(stage))

    def _require(self, stage: str) -> str:
        """Digest of a current upstream manifest, or StageDependencyError."""
        path = self.manifest_path(stage)
        if not path.exists():
            raise StageDependencyError(f"missing {stage} artifacts in {path.parent}; run the '{stage}' stage first")
        m = read_json(path)
        want = self.cfg.stage_hash(stage)
        if m.get("config_hash") != want:
            raise StageDependencyError(
                f"{stage} artifacts were built with config hash {m.get('config_hash')} but the current "
                f"configuration gives {want}; rerun the '{stage}' stage (or 'all') before continuing"
            )
        if not manifest_is_current(path, want, m.get("inputs", {})):
            raise StageDependencyError(f"{stage} outputs were modified or removed; rerun the '{stage}' stage")
        return file_sha256(path)

    def _inputs(self, stage: str) -> dict:
        if stage == "ingest":
            pairs = discover_files(self.cfg.data_dir)
            if not pairs:
                raise DataError(f"no '<year>-<slam>-points.csv' / '-matches.csv' pairs in {self.cfg.data_dir}")
            inputs = {}
            for pf, mf in pairs:
                inputs[pf.name] = file_sha256(pf)
                inputs[mf.name] = file_sha256(mf)
            return inputs
        return {f"{u}/{MANIFEST}": self._require(u) for u in UPSTREAM[stage]}

    def run(self, stage: str) -> StageResult:
        if stage == "all":
            raise ValueError("use run_all()")
        inputs = self._inputs(stage)
        mpath = self.manifest_path(stage)
        h = self.cfg.stage_hash(stage)
        if not self.force and manifest_is_current(mpath, h, inputs):
            log.info("%s: up to date, skipping", stage)
            return StageResult(stage, True, [])
        log.info("%s: running", stage)
        outputs = getattr(self, f"_stage_{stage}")()
        manifest = stage_manifest(stage, h, self.profile_label(stage), self.cfg.seed, inputs, self.root, outputs)
        write_json(mpath, manifest)
        return StageResult(stage, False, outputs)

    def run_all(self) -> list[StageResult]:
        return [self.run(s) for s in STAGES if s in self.cfg.stages]

    # -- loading helpers ---------------------------------------------------
    def tally_path(self, category: str) -> Path:
        return self.stage_dir("ingest") / f"{category}.csv"

    def observation_path(self, category: str) -> Path:
        return self.stage_dir("ingest") / f"observations_{category}.csv"

    def load_tallies(self, category: str):
        tour, _ = split_category(category)
        return read_tallies_csv(self.tally_path(category), tour=tour)

    def selected_players(self) -> list[tuple[str, object]]:
        """(category, tallies) entries the frontier stage works on, in a fixed order."""
        entries = [(cat, t) for cat in CATEGORIES for t in self.load_tallies(cat)]
        spec = (self.cfg.players or "").strip()
        if not spec:
            return entries
        if spec.isdigit():
            return entries[: int(spec)]
        names = {s.strip() for s in spec.split(",") if s.strip()}
        return [(c, t) for c, t in entries if t.player in names]

    # -- stages -------------------------------------------------------------
    def _stage_ingest(self) -> list[Path]:
        cfg = self.cfg
        try:
            res = ingest_corpus(cfg.data_dir, cfg.point_schema, cfg.match_schema, cfg.min_matches,
                                cfg.infer_incomplete, self.jobs)
        except IngestError as exc:
            raise DataError(str(exc)) from exc
        meta = self.meta("ingest")
        out = []
        for tour in TOURS:
            for role in ROLES:
                cat = category_of(tour, role)
                out.append(write_tallies_csv(self.tally_path(cat), res.tallies[(tour, role)], meta))
                out.append(write_observations_csv(self.observation_path(cat), res.observations[(tour, role)], meta))
        out.append(write_json(self.stage_dir("ingest") / "ingest_report.json", res.report, meta))
        return out

    def _stage_fit(self) -> list[Path]:
        meta = self.meta("fit")
        header = ["category", "player", "role", "n_matches", "imputed_states"]
        for target in TARGETS:
            for model in MODELS:
                header.append(f"{target}__{model}__prediction")
                for metric in IC_METRICS:
                    header.append(f"{target}__{model}__{metric}")
        rows, skipped = [], []
        for cat in CATEGORIES:
            obs_by_player = defaultdict(list)
            for o in read_observations_csv(self.observation_path(cat)):
                obs_by_player[o.player].append(o)
            for t in self.load_tallies(cat):
                try:
                    mc = compare_models(t, obs_by_player.get(t.player, []))
                except EstimationError as exc:
                    skipped.append({"category": cat, "player": t.player, "reason": str(exc)})
                    continue
                row = [cat, mc.player, mc.role, mc.n, ";".join(STATE_LABELS[i] for i in mc.imputed_states)]
                for target in TARGETS:
                    for model in MODELS:
                        m = mc.metrics[target][model]
                        row.append(m["prediction"])
                        row += [m[metric] for metric in IC_METRICS]
                rows.append(row)
        d = self.stage_dir("fit")
        return [
            write_csv(d / "model_comparison.csv", header, rows, meta),
            write_json(d / "fit_report.json", {"skipped": skipped, "fitted": len(rows)}, meta),
        ]

    def _frontier_file(self, eps: float, category: str, player: str, ext: str = "json") -> Path:
        return self.stage_dir("frontier") / eps_label(eps) / category / f"{slug(player)}.{ext}"

    def _stage_frontier(self) -> list[Path]:
        cfg = self.cfg
        entries = self.selected_players()
        tasks = []  # (key, target, config, seed)
        plan = []
        for eps in cfg.epsilons:
            for cat, t in entries:
                tour, role = split_category(cat)
                conf = cfg.category_config(cat, eps)
                seeds = [derive_seed(cfg.seed, tour, t.player, role, i) for i in range(conf.n_seeds)]
                target = t.average_pwp
                status = "ok"
                if not conf.search_lo <= target <= conf.search_hi:
                    status = "target_outside_search_range"
                plan.append((eps, cat, t, conf, seeds, target, status))
                if status == "ok":
                    tasks += [((eps, cat, t.player), target, conf, s) for s in seeds]

        results = _run_tasks(tasks, self.jobs)
        runs = defaultdict(list)
        for (key, _, _, _), res in zip(tasks, results):
            runs[key].append(res)

        meta = self.meta("frontier")
        out, index = [], []
        for eps, cat, t, conf, seeds, target, status in plan:
            per_seed = runs.get((eps, cat, t.player), [])
            frontier = merge_frontiers(per_seed) if per_seed else Frontier([])
            if status == "ok" and len(frontier) == 0:
                status = "no_feasible_points"
            doc = {
                "player": t.player,
                "category": cat,
                "tour": t.tour,
                "role": t.role,
                "epsilon": eps,
                "target_avg": target,
                "status": status,
                "config": conf.to_dict(),
                "seeds": seeds,
                "points_per_seed": [len(r) for r in per_seed],
                "points": [p.to_dict() for p in frontier.points],
            }
            jpath = write_json(self._frontier_file(eps, cat, t.player), doc, meta)
            cpath = write_csv(
                self._frontier_file(eps, cat, t.player, "csv"),
                ["game_win_probability", "expected_points"],
                frontier.outcomes().tolist(),
                meta,
            )
            out += [jpath, cpath]
            index.append({
                "epsilon": eps, "category": cat, "player": t.player, "status": status,
                "n_points": len(frontier), "file": str(jpath.relative_to(self.root)),
            })
        out.append(write_json(self.stage_dir("frontier") / "index.json", {"frontiers": index}, meta))
        return out

    def load_frontier(self, rel: str) -> tuple[dict, Frontier]:
        doc = read_json(self.root / rel)
        return doc, Frontier([FrontierPoint.from_dict(p) for p in doc["points"]])

    def metrics_path(self, eps: float) -> Path:
        return self.stage_dir("metrics") / f"metrics_{eps_label(eps)}.csv"

    METRIC_COLUMNS = (
        ["category", "tour", "role", "player", "tier", "match_win_pct", "matches", "average_pwp",
         "game_win_probability", "expected_points", "efficiency", "efficiency_curve", "efficiency_points",
         "strategy_fit", "optimal_contrast", "frontier_points", "flags"]
        + [f"optimal_{lab}" for lab in STATE_LABELS]
        + [f"observed_{lab}" for lab in STATE_LABELS]
    )

    def _stage_metrics(self) -> list[Path]:
        cfg = self.cfg
        index = read_json(self.stage_dir("frontier") / "index.json")["frontiers"]
        tallies = {cat: {t.player: t for t in self.load_tallies(cat)} for cat in CATEGORIES}
        meta = self.meta("metrics")
        rows_by_eps = defaultdict(list)
        skipped = []
        for entry in index:
            if entry["status"] != "ok":
                skipped.append({k: entry[k] for k in ("epsilon", "category", "player", "status")})
                continue
            cat = entry["category"]
            t = tallies[cat][entry["player"]]
            doc, frontier = self.load_frontier(entry["file"])
            conf = cfg.category_config(cat, entry["epsilon"])
            rep = player_metrics(t, frontier, conf.delta_p, cfg.distance_mode, cfg.tier_low, cfg.tier_high)
            observed = (rep.game_win_prob, rep.expected_points)
            eff = {m: efficiency(observed, frontier, m).score for m in ("curve", "points")}
            rows_by_eps[entry["epsilon"]].append(
                [cat, t.tour, t.role, t.player, rep.tier, t.match_win_pct, t.matches, rep.average_pwp,
                 rep.game_win_prob, rep.expected_points, rep.efficiency, eff["curve"], eff["points"],
                 rep.strategy_fit, rep.optimal_contrast, len(frontier), ";".join(rep.flags)]
                + list(rep.optimal_strategy) + list(rep.observed_strategy)
            )
        out = []
        for eps in cfg.epsilons:
            out.append(write_csv(self.metrics_path(eps), self.METRIC_COLUMNS, rows_by_eps.get(eps, []), meta))
        out.append(write_json(self.stage_dir("metrics") / "metrics_report.json", {"skipped": skipped}, meta))
        return out

    def load_metrics(self, eps: float) -> list[dict]:
        rows, _ = read_csv(self.metrics_path(eps))
        return rows

    def stats_path(self, eps: float) -> Path:
        return self.stage_dir("stats") / f"comparison_{eps_label(eps)}.json"

    def _stage_stats(self) -> list[Path]:
        cfg = self.cfg
        meta = self.meta("stats")
        out = []
        for eps in cfg.epsilons:
            rows = self.load_metrics(eps)
            tiers = {}
            for cat in CATEGORIES:
                cat_rows = [r for r in rows if r["category"] == cat]
                tiers[cat] = {}
                for metric in STAT_METRICS:
                    values = defaultdict(list)
                    for r in cat_rows:
                        values[r["tier"]].append(float(r[metric]))
                    family = cfg.efficiency_family if metric == "efficiency" else cfg.fit_family
                    seed = derive_seed(cfg.seed, "stats", eps, cat, metric)
                    res = compare_tiers(values, family, cfg.bootstrap_iterations, seed, cfg.lilliefors_simulations)
                    res["means"] = {tier: float(np.mean(v)) for tier, v in sorted(values.items())}
                    res["counts"] = {tier: len(v) for tier, v in sorted(values.items())}
                    tiers[cat][metric] = res
            regression = {"pooled": _regression(rows)}
            for cat in CATEGORIES:
                regression[cat] = _regression([r for r in rows if r["category"] == cat])
            doc = {"epsilon": eps, "tier_comparisons": tiers, "regression": regression}
            out.append(write_json(self.stats_path(eps), doc, meta))
        return out

    def _stage_report(self) -> list[Path]:
        cfg = self.cfg
        eps = cfg.primary_epsilon
        needed = [self.stage_dir("fit") / "model_comparison.csv", self.metrics_path(eps), self.stats_path(eps),
                  self.stage_dir("frontier") / "index.json"]
        missing = [str(p) for p in needed if not p.exists()]
        if missing:
            raise StageDependencyError("report inputs missing: " + ", ".join(missing))
        meta = self.meta("report")
        d = self.stage_dir("report")
        out = []

        # (a) model comparison averaged over players, one block per category
        table = self.model_comparison_table()
        header = ["tour", "role", "target", "metric", "constant", "score_dependent", "difference", "n_players"]
        out.append(write_csv(d / "table1.csv", header, table, meta))

        # (b) per-player metrics for the primary constraint width
        rows = self.load_metrics(eps)
        out.append(write_csv(d / "metrics.csv", self.METRIC_COLUMNS, [[r[c] for c in self.METRIC_COLUMNS] for r in rows], meta))

        # (c) tier comparisons
        stats_doc = read_json(self.stats_path(eps))
        stats_doc.pop("_meta", None)
        tc_header = ["category", "metric", "family", "tier_a", "tier_b", "method", "statistic", "p_value",
                     "p_adjusted", "effect_name", "effect_size", "ci_low", "ci_high", "large_effect", "mean_a",
                     "mean_b", "n_a", "n_b", "note"]
        tc_rows = []
        for cat in CATEGORIES:
            for metric in STAT_METRICS:
                res = stats_doc["tier_comparisons"][cat][metric]
                for c in res["comparisons"]:
                    a, b = c["pair"]
                    ci = c["ci"] or [None, None]
                    tc_rows.append([cat, metric, res["family"], a, b, c["method"], c["statistic"], c["p_value"],
                                    c["p_adjusted"], c["effect_name"], c["effect_size"], ci[0], ci[1],
                                    c["large_effect"], res["means"].get(a), res["means"].get(b),
                                    res["counts"].get(a, 0), res["counts"].get(b, 0), c["note"]])
        out.append(write_csv(d / "tier_comparisons.csv", tc_header, tc_rows, meta))
        summary = {
            "epsilon": eps,
            "model_comparison": [dict(zip(header, r)) for r in table],
            "tier_comparisons": stats_doc["tier_comparisons"],
            "regression": stats_doc["regression"],
        }
        out.append(write_json(d / "comparison.json", summary, meta))

        # (d) plot data
        index = read_json(self.stage_dir("frontier") / "index.json")["frontiers"]
        curve_rows = []
        for entry in index:
            if entry["epsilon"] != eps or entry["status"] != "ok":
                continue
            _, fr = self.load_frontier(entry["file"])
            for k, (w, e) in enumerate(fr.outcomes()):
                curve_rows.append([entry["category"], entry["player"], k, w, e])
        out.append(write_csv(d / "frontier_curves.csv",
                             ["category", "player", "point", "game_win_probability", "expected_points"],
                             curve_rows, meta))

        alloc_rows = []
        for cat in CATEGORIES:
            cat_rows = [r for r in rows if r["category"] == cat]
            if not cat_rows:
                continue
            optimal = np.array([[float(r[f"optimal_{lab}"]) for lab in STATE_LABELS] for r in cat_rows])
            pattern = category_pattern(optimal)
            mean_avg = float(np.mean([float(r["average_pwp"]) for r in cat_rows]))
            for i, lab in enumerate(STATE_LABELS):
                alloc_rows.append([cat, lab, pattern[i], mean_avg, pattern[i] - mean_avg, len(cat_rows)])
        out.append(write_csv(d / "allocation_patterns.csv",
                             ["category", "state", "mean_optimal", "category_average_pwp", "deviation", "n_players"],
                             alloc_rows, meta))

        scatter = [[r["category"], r["player"], r["tier"], r["average_pwp"], r["optimal_contrast"]] for r in rows]
        out.append(write_csv(d / "contrast_scatter.csv",
                             ["category", "player", "tier", "average_pwp", "optimal_contrast"], scatter, meta))
        out.append(write_csv(d / "contrast_regression_band.csv", ["scope", "average_pwp", "fit", "lower", "upper"],
                             _band_rows(rows), meta))
        out.append(write_csv(d / "sensitivity.csv",
                             ["epsilon", "category", "n_players", "mean_efficiency", "spearman_vs_primary",
                              "spearman_p"], self.sensitivity_rows(), meta))
        return out

    def model_comparison_table(self) -> list[list]:
        rows, _ = read_csv(self.stage_dir("fit") / "model_comparison.csv")
        table = []
        for cat in CATEGORIES:
            comps = [_comparison_from_row(r) for r in rows if r["category"] == cat]
            if not comps:
                continue
            avg = average_comparisons(comps)
            tour, role = split_category(cat)
            for target in TARGETS:
                for metric in IC_METRICS:
                    v = avg[(target, metric)]
                    table.append([tour, role, target, metric, v["constant"], v["score_dependent"],
                                  v["difference"], len(comps)])
        return table

    def sensitivity_rows(self) -> list[list]:
        primary = {(r["category"], r["player"]): float(r["efficiency"]) for r in self.load_metrics(self.cfg.primary_epsilon)}
        out = []
        for eps in self.cfg.epsilons:
            rows = self.load_metrics(eps)
            for cat in CATEGORIES:
                cur = {r["player"]: float(r["efficiency"]) for r in rows if r["category"] == cat}
                common = sorted(p for p in cur if (cat, p) in primary)
                rho = p = None
                if len(common) >= 3:
                    x = [primary[(cat, q)] for q in common]
                    y = [cur[q] for q in common]
                    if np.ptp(x) > 0 and np.ptp(y) > 0:
                        res = sps.spearmanr(x, y)
                        rho, p = float(res.statistic), float(res.pvalue)
                mean = float(np.mean(list(cur.values()))) if cur else None
                out.append([eps, cat, len(cur), mean, rho, p])
        return out

    # -- simulate ------------------------------------------------------------
    def simulate(self, n_games: int = 1_000_000, write_corpus_to=None) -> StageResult:
        """Monte Carlo sanity runs against the exact chain; optionally writes a synthetic corpus."""
        from .synthetic import shaped_strategy, write_corpus

        strategies = {
            "constant_0.5": np.full(N_STATES, 0.5),
            "constant_0.64": np.full(N_STATES, 0.64),
            "constant_0.37": np.full(N_STATES, 0.37),
            "shaped_0.44_0.08": shaped_strategy(0.44, 0.08),
        }
        checks = {}
        for name, p in strategies.items():
            exact = solve_chain(p)
            sim = simulate_games(p, n_games, derive_seed(self.cfg.seed, "simulate", name))
            win_rate, mean_points = float(sim.won.mean()), float(sim.points.mean())
            se_w = float(np.sqrt(exact.game_win_probability * (1 - exact.game_win_probability) / n_games))
            se_p = float(np.std(sim.points, ddof=1) / np.sqrt(n_games))
            zw = (win_rate - exact.game_win_probability) / se_w if se_w > 0 else 0.0
            zp = (mean_points - exact.expected_points) / se_p if se_p > 0 else 0.0
            checks[name] = {
                "exact": exact.as_pair(),
                "simulated": (win_rate, mean_points),
                "z": (zw, zp),
                "within_3se": bool(abs(zw) <= 3 and abs(zp) <= 3),
            }
        meta = artifact_meta("simulate", "any")
        out = [write_json(self.stage_dir("simulate") / "sanity.json", {"n_games": n_games, "checks": checks}, meta)]
        if write_corpus_to is not None:
            truth = write_corpus(write_corpus_to, seed=self.cfg.seed % (2**32))
            out.append(write_json(Path(write_corpus_to) / "truth.json", truth))
        return StageResult("simulate", False, out)


def _seed_task(args):
    _, target, conf, seed = args
    return nsga2_optimize(target, conf, seed)


def _run_tasks(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_seed_task, tasks, chunksize=1))
    return [_seed_task(t) for t in tasks]


def _comparison_from_row(row: dict) -> ModelComparison:
    def num(v):
        return None if v in ("", None) else float(v)

    metrics = {
        target: {
            model: {
                "prediction": num(row[f"{target}__{model}__prediction"]),
                **{m: num(row[f"{target}__{model}__{m}"]) for m in IC_METRICS},
            }
            for model in MODELS
        }
        for target in TARGETS
    }
    imputed = [STATE_LABELS.index(lab) for lab in row["imputed_states"].split(";") if lab]
    return ModelComparison(row["player"], row["role"], int(row["n_matches"]), metrics, imputed)


def _regression(rows) -> dict:
    x = [float(r["average_pwp"]) for r in rows]
    y = [float(r["optimal_contrast"]) for r in rows]
    try:
        res = pearson_and_regression(x, y)
    except DegenerateSample as exc:
        return {"n": len(rows), "note": str(exc)}
    return {"n": res.n, "r": res.r, "p": res.p, "slope": res.slope, "intercept": res.intercept,
            "x_min": min(x), "x_max": max(x)}


def _band_rows(rows, n_grid: int = 51) -> list[list]:
    out = []
    scopes = [("pooled", rows)] + [(c, [r for r in rows if r["category"] == c]) for c in CATEGORIES]
    for scope, sub in scopes:
        x = np.array([float(r["average_pwp"]) for r in sub])
        y = np.array([float(r["optimal_contrast"]) for r in sub])
        try:
            res = pearson_and_regression(x, y)
        except DegenerateSample:
            continue
        grid = np.linspace(x.min(), x.max(), n_grid)
        fit, lo, hi = res.band(grid)
        out += [[scope, g, f, a, b] for g, f, a, b in zip(grid, fit, lo, hi)]
    return out
