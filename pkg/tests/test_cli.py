import json
import shutil

import pytest

from tennis_frontier.artifacts import file_sha256, read_csv, read_json
from tennis_frontier.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DEPENDENCY, main
from tennis_frontier.config import ConfigError, PipelineConfig, default_config_text, load_config
from tennis_frontier.pipeline import Pipeline
from tennis_frontier.states import STATE_ORDER_VERSION
from tennis_frontier.synthetic import write_corpus

TINY = """
[pipeline]
data_dir = {data}
out_dir = {out}
min_matches = 3
profile = tiny
epsilons = 0.005, 0.0025
bootstrap_iterations = 100
lilliefors_simulations = 300

[profile.tiny]
inherits = reduced
population = 24
max_generations = 10
n_seeds = 2
"""

REPORT_FILES = {
    "table1.csv": ["tour", "role", "target", "metric", "constant", "score_dependent", "difference", "n_players"],
    "metrics.csv": ["category", "player", "tier", "efficiency", "efficiency_curve", "efficiency_points",
                    "strategy_fit", "optimal_contrast", "optimal_0-0", "observed_3-AD"],
    "tier_comparisons.csv": ["category", "metric", "family", "tier_a", "tier_b", "effect_size", "ci_low",
                             "ci_high", "note"],
    "frontier_curves.csv": ["category", "player", "point", "game_win_probability", "expected_points"],
    "allocation_patterns.csv": ["category", "state", "mean_optimal", "deviation"],
    "contrast_scatter.csv": ["category", "player", "average_pwp", "optimal_contrast"],
    "contrast_regression_band.csv": ["scope", "average_pwp", "fit", "lower", "upper"],
    "sensitivity.csv": ["epsilon", "category", "mean_efficiency", "spearman_vs_primary"],
}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    write_corpus(d, n_players_per_tour=3, matches_per_player=6, seed=21)
    return d


def _config(tmp_path, corpus, out="out"):
    path = tmp_path / "run.ini"
    path.write_text(TINY.format(data=corpus, out=tmp_path / out))
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, corpus):
    tmp = tmp_path_factory.mktemp("run")
    cfg = _config(tmp, corpus)
    assert main(["all", "--config", str(cfg)]) == 0
    return tmp, cfg


def _digests(root):
    return {str(p.relative_to(root)): file_sha256(p) for p in sorted(root.rglob("*")) if p.is_file()}


def test_default_config_round_trips(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(default_config_text())
    loaded = load_config(path)
    default = PipelineConfig()
    for stage in ("ingest", "frontier", "report"):
        assert loaded.stage_hash(stage) == default.stage_hash(stage)


def test_reduced_profile_inherits_full():
    cfg = PipelineConfig(profile="reduced")
    c = cfg.category_config("men_service")
    assert (c.population, c.max_generations, c.n_seeds) == (200, 100, 5)
    assert (c.crossover_rate, c.pareto_fraction, c.function_tolerance) == (0.8, 0.6, 1e-4)
    full = PipelineConfig().category_config("men_service")
    assert (full.population, full.max_generations, full.n_seeds) == (800, 400, 30)
    assert cfg.stage_hash("frontier") != PipelineConfig().stage_hash("frontier")
    assert cfg.stage_hash("ingest") == PipelineConfig().stage_hash("ingest")


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[pipeline]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[profile.loop]\ninherits = loop\n[pipeline]\nprofile = loop\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    assert main(["ingest", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["ingest", "--epsilon", "abc"]) == EXIT_CONFIG
    assert main(["ingest", "--min-matches", "0"]) == EXIT_CONFIG


def test_missing_data_is_data_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["ingest", "--data-dir", str(empty), "--out-dir", str(tmp_path / "o")]) == EXIT_DATA


def test_missing_upstream_is_dependency_error(tmp_path, corpus, capsys):
    cfg = _config(tmp_path, corpus)
    assert main(["metrics", "--config", str(cfg)]) == EXIT_DEPENDENCY
    assert "'ingest'" in capsys.readouterr().err


def test_frontier_smoke_two_players(tmp_path, corpus):
    cfg = _config(tmp_path, corpus)
    assert main(["ingest", "--config", str(cfg)]) == 0
    rc = main(["frontier", "--config", str(cfg), "--profile", "reduced", "--players", "2", "--epsilon", "0.005"])
    assert rc == 0
    fdir = tmp_path / "out" / "frontiers"
    files = sorted(fdir.glob("eps_*/*/*.json"))
    assert len(files) == 2
    assert (fdir / "manifest.json").exists()
    doc = read_json(files[0])
    assert doc["_meta"]["profile"] == "reduced"
    assert doc["config"]["population"] == 200 and len(doc["seeds"]) == 5
    assert doc["points"] and doc["status"] == "ok"


def test_report_bundle_schema(full_run):
    tmp, _ = full_run
    report = tmp / "out" / "report"
    for name, cols in REPORT_FILES.items():
        rows, meta = read_csv(report / name)
        assert rows, name
        assert set(cols) <= set(rows[0]), name
        assert meta["state_order"] == STATE_ORDER_VERSION and meta["profile"] == "tiny"
    summary = read_json(report / "comparison.json")
    assert set(summary["tier_comparisons"]) == {"men_service", "men_return", "women_service", "women_return"}
    assert "pooled" in summary["regression"]


def test_every_artifact_carries_hash_and_state_order(full_run):
    tmp, _ = full_run
    for p in (tmp / "out").rglob("*"):
        if p.suffix == ".csv":
            _, meta = read_csv(p)
        elif p.suffix == ".json":
            doc = read_json(p)
            meta = doc.get("_meta", doc)
        else:
            continue
        assert meta["state_order"] == STATE_ORDER_VERSION, p
        assert meta["config_hash"], p


def test_rerun_is_cached_and_identical(full_run, capsys):
    tmp, cfg = full_run
    before = _digests(tmp / "out")
    capsys.readouterr()
    assert main(["all", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.count("up to date") == 6
    assert _digests(tmp / "out") == before


def test_end_to_end_determinism(full_run, corpus, tmp_path):
    tmp, _ = full_run
    cfg = _config(tmp_path, corpus, out="second")
    assert main(["all", "--config", str(cfg), "--jobs", "2"]) == 0
    assert _digests(tmp_path / "second") == _digests(tmp / "out")


def test_stale_upstream_is_refused(full_run, tmp_path):
    tmp, cfg = full_run
    copy = tmp_path / "copy"
    shutil.copytree(tmp / "out", copy)
    text = cfg.read_text().replace(f"out_dir = {tmp / 'out'}", f"out_dir = {copy}") + "\n"
    changed = tmp_path / "changed.ini"
    changed.write_text(text.replace("min_matches = 3", "min_matches = 3\ntier_low = 0.4"))
    # metrics settings changed: stats must not consume the old metrics
    assert main(["stats", "--config", str(changed)]) == EXIT_DEPENDENCY
    assert main(["metrics", "--config", str(changed)]) == 0
    assert main(["stats", "--config", str(changed)]) == 0


def test_force_recomputes(full_run, tmp_path):
    tmp, cfg = full_run
    pipe = Pipeline(load_config(cfg), force=True)
    res = pipe.run("fit")
    assert not res.skipped
    manifest = json.loads((tmp / "out" / "fits" / "manifest.json").read_text())
    assert manifest["seed"] == load_config(cfg).seed


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    corpus = tmp_path / "corpus"
    rc = main(["simulate", "--out-dir", str(out), "--games", "20000", "--write-corpus", str(corpus)])
    assert rc == 0
    doc = read_json(out / "simulate" / "sanity.json")
    assert all(c["within_3se"] for c in doc["checks"].values())
    assert list(corpus.glob("*-points.csv")) and (corpus / "truth.json").exists()


def test_show_config(capsys):
    assert main(["show-config"]) == 0
    assert "[profile.reduced]" in capsys.readouterr().out
