"""Pipeline configuration.

The configuration is one INI file read with :mod:`configparser`::

    [pipeline]
    data_dir = data/slam_pointbypoint
    out_dir = out
    seed = 20250101
    profile = full                 ; full | reduced
    min_matches = 30
    infer_incomplete = true
    tier_low = 0.50
    tier_high = 0.70
    epsilons = 0.005, 0.001, 0.0025, 0.0075   ; first entry is the primary run
    distance_mode = curve          ; curve | points
    constraint_average = weighted  ; weighted | unweighted
    bootstrap_iterations = 1000
    lilliefors_simulations = 10000
    efficiency_family = nonparametric   ; nonparametric | parametric | auto
    fit_family = parametric
    players =                      ; empty, a count N, or comma-separated names
    stages = ingest, fit, frontier, metrics, stats, report

    [profile.full]
    population = 800
    max_generations = 400
    n_seeds = 30

    [profile.reduced]
    inherits = full
    population = 200
    max_generations = 100
    n_seeds = 5

    [category.men_service]
    search_lo = 0.50
    search_hi = 0.75

    [schema.points]
    winner = PointWinner

Every key is optional; missing keys take the built-in values shown by
``default_config_text()``.  A profile section may name another profile in
``inherits``; its keys override the parent's.  Profile keys are any
:class:`~tennis_frontier.pareto.CategoryConfig` field except the search range,
and ``[category.*]`` sections may override profile keys for one category.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .ingest import DEFAULT_MATCH_SCHEMA, DEFAULT_POINT_SCHEMA
from .pareto import CATEGORY_BOUNDS, EPSILON_SWEEP, CategoryConfig
from .states import STATE_ORDER_VERSION

STAGES = ("ingest", "fit", "frontier", "metrics", "stats", "report")
CATEGORIES = tuple(CATEGORY_BOUNDS)  # men_service, men_return, women_service, women_return
PROFILES = {
    "full": {
        "population": 800,
        "max_generations": 400,
        "n_seeds": 30,
        "function_tolerance": 1e-4,
        "crossover_rate": 0.8,
        "pareto_fraction": 0.6,
    },
    "reduced": {"inherits": "full", "population": 200, "max_generations": 100, "n_seeds": 5},
}
PRIMARY_EPSILON = 0.005
DEFAULT_EPSILONS = (PRIMARY_EPSILON,) + tuple(e for e in EPSILON_SWEEP if e != PRIMARY_EPSILON)

_INT_FIELDS = {"population", "max_generations", "n_seeds", "stall_generations"}
_FLOAT_FIELDS = {f.name for f in fields(CategoryConfig)} - _INT_FIELDS - {"average"}


class ConfigError(ValueError):
    pass


def _parse_list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def parse_epsilons(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = _parse_list(str(text))
    try:
        eps = tuple(float(e) for e in items)
    except ValueError as exc:
        raise ConfigError(f"bad epsilon list {text!r}") from exc
    if not eps or any(e < 0 for e in eps):
        raise ConfigError(f"bad epsilon list {text!r}")
    return eps


@dataclass
class PipelineConfig:
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")
    seed: int = 20250101
    profile: str = "full"
    min_matches: int = 30
    infer_incomplete: bool = True
    tier_low: float = 0.50
    tier_high: float = 0.70
    epsilons: tuple = DEFAULT_EPSILONS
    distance_mode: str = "curve"
    constraint_average: str = "weighted"
    bootstrap_iterations: int = 1000
    lilliefors_simulations: int = 10_000
    efficiency_family: str = "nonparametric"
    fit_family: str = "parametric"
    players: str = ""
    stages: tuple = STAGES
    point_schema: dict = field(default_factory=lambda: dict(DEFAULT_POINT_SCHEMA))
    match_schema: dict = field(default_factory=lambda: dict(DEFAULT_MATCH_SCHEMA))
    profiles: dict = field(default_factory=lambda: {k: dict(v) for k, v in PROFILES.items()})
    category_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.out_dir = Path(self.out_dir)
        self.validate()

    # -- validation ---------------------------------------------------------
    def validate(self):
        if self.profile not in self.profiles:
            raise ConfigError(f"unknown profile {self.profile!r}; known: {sorted(self.profiles)}")
        if self.distance_mode not in ("curve", "points"):
            raise ConfigError(f"distance_mode must be 'curve' or 'points', got {self.distance_mode!r}")
        if self.constraint_average not in ("weighted", "unweighted"):
            raise ConfigError(f"constraint_average must be 'weighted' or 'unweighted'")
        for name in ("efficiency_family", "fit_family"):
            if getattr(self, name) not in ("nonparametric", "parametric", "auto"):
                raise ConfigError(f"{name} must be nonparametric, parametric or auto")
        if not 0.0 <= self.tier_low <= self.tier_high <= 1.0:
            raise ConfigError("need 0 <= tier_low <= tier_high <= 1")
        if self.min_matches < 1:
            raise ConfigError("min_matches must be positive")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stages {sorted(unknown)}")
        self.epsilons = parse_epsilons(self.epsilons)
        for cat in CATEGORIES:
            try:
                self.category_config(cat)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"category {cat}: {exc}") from exc

    # -- derived values ------------------------------------------------------
    def profile_params(self, name: str | None = None) -> dict:
        name = name or self.profile
        chain, seen = [], set()
        while name:
            if name in seen:
                raise ConfigError(f"profile inheritance cycle at {name!r}")
            if name not in self.profiles:
                raise ConfigError(f"unknown profile {name!r}")
            seen.add(name)
            chain.append(self.profiles[name])
            name = self.profiles[name].get("inherits")
        out: dict = {}
        for section in reversed(chain):
            out.update({k: v for k, v in section.items() if k != "inherits"})
        return out

    def category_config(self, category: str, epsilon: float | None = None) -> CategoryConfig:
        params = dict(self.profile_params())
        params.update(self.category_overrides.get(category, {}))
        lo, hi = CATEGORY_BOUNDS[category]
        lo = params.pop("search_lo", lo)
        hi = params.pop("search_hi", hi)
        params["average"] = self.constraint_average
        params["epsilon"] = self.epsilons[0] if epsilon is None else epsilon
        return CategoryConfig(search_lo=lo, search_hi=hi, **params)

    @property
    def primary_epsilon(self) -> float:
        return self.epsilons[0]

    def stage_settings(self, stage: str) -> dict:
        """Settings that affect a stage's outputs (upstream stages excluded)."""
        if stage == "ingest":
            return {
                "point_schema": self.point_schema,
                "match_schema": self.match_schema,
                "min_matches": self.min_matches,
                "infer_incomplete": self.infer_incomplete,
            }
        if stage == "fit":
            return {}
        if stage == "frontier":
            return {
                "profile": self.profile,
                "seed": self.seed,
                "epsilons": list(self.epsilons),
                "players": self.players,
                "categories": {c: self.category_config(c).to_dict() for c in CATEGORIES},
            }
        if stage == "metrics":
            return {"distance_mode": self.distance_mode, "tier_low": self.tier_low, "tier_high": self.tier_high}
        if stage == "stats":
            return {
                "seed": self.seed,
                "bootstrap_iterations": self.bootstrap_iterations,
                "lilliefors_simulations": self.lilliefors_simulations,
                "efficiency_family": self.efficiency_family,
                "fit_family": self.fit_family,
            }
        if stage == "report":
            return {}
        raise ConfigError(f"unknown stage {stage!r}")

    def stage_hash(self, stage: str) -> str:
        """Hash of this stage's settings chained with its upstream stages'."""
        upstream = {
            "ingest": (),
            "fit": ("ingest",),
            "frontier": ("ingest",),
            "metrics": ("frontier",),
            "stats": ("metrics",),
            "report": ("fit", "stats"),
        }[stage]
        payload = {
            "state_order": STATE_ORDER_VERSION,
            "stage": stage,
            "settings": self.stage_settings(stage),
            "upstream": [self.stage_hash(u) for u in upstream],
        }
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        return cfg


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _convert_profile_value(key: str, value: str):
    if key == "inherits":
        return value.strip()
    if key in _INT_FIELDS:
        return int(value)
    if key in _FLOAT_FIELDS or key in ("search_lo", "search_hi"):
        return float(value)
    raise ConfigError(f"unknown profile/category key {key!r}")


def load_config(path=None, base_dir=None) -> PipelineConfig:
    """Read an INI file; ``None`` gives the built-in configuration.

    Relative ``data_dir`` / ``out_dir`` are resolved against the config file's
    directory (or ``base_dir``).
    """
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keep schema column names as written
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = Path(base_dir) if base_dir is not None else path.parent

    kw: dict = {}
    profiles = {k: dict(v) for k, v in PROFILES.items()}
    category_overrides: dict = {}
    point_schema = dict(DEFAULT_POINT_SCHEMA)
    match_schema = dict(DEFAULT_MATCH_SCHEMA)
    try:
        for section in parser.sections():
            items = dict(parser.items(section))
            if section == "pipeline":
                kw.update(_pipeline_items(items, base))
            elif section.startswith("profile."):
                name = section.split(".", 1)[1]
                prof = profiles.setdefault(name, {})
                prof.update({k: _convert_profile_value(k, v) for k, v in items.items()})
            elif section.startswith("category."):
                name = section.split(".", 1)[1]
                if name not in CATEGORY_BOUNDS:
                    raise ConfigError(f"unknown category {name!r}")
                category_overrides[name] = {k: _convert_profile_value(k, v) for k, v in items.items()}
            elif section == "schema.points":
                _update_schema(point_schema, items, "schema.points")
            elif section == "schema.matches":
                _update_schema(match_schema, items, "schema.matches")
            else:
                raise ConfigError(f"unknown section [{section}]")
        return PipelineConfig(
            profiles=profiles,
            category_overrides=category_overrides,
            point_schema=point_schema,
            match_schema=match_schema,
            **kw,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _update_schema(schema: dict, items: dict, section: str):
    for k, v in items.items():
        if k not in schema:
            raise ConfigError(f"[{section}] unknown field {k!r}; known: {sorted(schema)}")
        schema[k] = v.strip()


def _pipeline_items(items: dict, base: Path) -> dict:
    out: dict = {}
    for k, v in items.items():
        v = v.strip()
        if k in ("data_dir", "out_dir"):
            p = Path(v).expanduser()
            out[k] = p if p.is_absolute() else base / p
        elif k in ("seed", "min_matches", "bootstrap_iterations", "lilliefors_simulations"):
            out[k] = int(v)
        elif k in ("tier_low", "tier_high"):
            out[k] = float(v)
        elif k == "infer_incomplete":
            out[k] = _bool(v)
        elif k == "epsilons":
            out[k] = parse_epsilons(v)
        elif k == "stages":
            out[k] = tuple(_parse_list(v))
        elif k in ("profile", "distance_mode", "constraint_average", "efficiency_family", "fit_family", "players"):
            out[k] = v
        else:
            raise ConfigError(f"[pipeline] unknown key {k!r}")
    return out


def default_config_text() -> str:
    """The built-in configuration written out as an INI file."""
    cfg = PipelineConfig()
    lines = ["[pipeline]"]
    for k in ("data_dir", "out_dir", "seed", "profile", "min_matches", "infer_incomplete", "tier_low",
              "tier_high", "epsilons", "distance_mode", "constraint_average", "bootstrap_iterations",
              "lilliefors_simulations", "efficiency_family", "fit_family", "players", "stages"):
        v = getattr(cfg, k)
        if isinstance(v, (tuple, list)):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    for name, prof in PROFILES.items():
        lines += ["", f"[profile.{name}]"] + [f"{k} = {v}" for k, v in prof.items()]
    for cat, (lo, hi) in CATEGORY_BOUNDS.items():
        lines += ["", f"[category.{cat}]", f"search_lo = {lo}", f"search_hi = {hi}"]
    lines += ["", "[schema.points]"] + [f"{k} = {v}" for k, v in DEFAULT_POINT_SCHEMA.items()]
    lines += ["", "[schema.matches]"] + [f"{k} = {v}" for k, v in DEFAULT_MATCH_SCHEMA.items()]
    return "\n".join(lines) + "\n"
