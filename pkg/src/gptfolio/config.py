"""Declarative run configuration with CLI-flag overrides.

A single YAML file names the input files, evaluation windows, universe
sizes and solver settings; every path is validated up front so a bad
config fails before any work starts. Packaged fixtures stand in for the
constituents list, transcripts and sector map when the config does not
override them.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import fixtures
from .errors import ConfigError
from .market_data import PeriodSpec
from .optimizer import BoundSpec
from .universe import ChatConfig

DEFAULT_SIZES = (15, 30, 45)
DEFAULT_POINTS = 100
DEFAULT_NODE_BUDGET = 10**6
DEFAULT_INDEX_COLUMNS = {"S&P 500": "SPX", "Dow Jones": "DJI", "NASDAQ": "IXIC"}

DEFAULT_IN_SAMPLE = PeriodSpec("in-sample", dt.date(2016, 9, 1), dt.date(2021, 8, 31))
DEFAULT_PERIODS = (
    PeriodSpec("period1", dt.date(2021, 9, 1), dt.date(2023, 7, 31)),
    PeriodSpec("period2", dt.date(2023, 3, 14), dt.date(2023, 7, 31)),
    PeriodSpec("period3", dt.date(2023, 5, 1), dt.date(2023, 7, 31)),
)


@dataclass
class RunConfig:
    prices: Path
    out: Path
    constituents: Path = field(default_factory=fixtures.constituents_path)
    benchmarks: Path | None = None
    sector_map: Path | None = None
    universe_transcripts: dict[int, Path] = field(default_factory=dict)
    weight_transcripts: dict[int, Path] = field(default_factory=dict)
    sizes: tuple[int, ...] = DEFAULT_SIZES
    points: int = DEFAULT_POINTS
    cardinality: tuple[int, ...] = DEFAULT_SIZES
    in_sample: PeriodSpec = DEFAULT_IN_SAMPLE
    periods: tuple[PeriodSpec, ...] = DEFAULT_PERIODS
    llm_mode: str = "replay"
    chat: ChatConfig = field(default_factory=ChatConfig)
    remap: dict[str, str] = field(default_factory=lambda: {"FB": "META"})
    bounds_overrides: dict[int, BoundSpec] = field(default_factory=dict)
    node_budget: int = DEFAULT_NODE_BUDGET
    index_columns: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_INDEX_COLUMNS))
    fund_columns: tuple[str, ...] = ()

    def __post_init__(self):
        for size in (15, 30, 45):
            self.universe_transcripts.setdefault(
                size, fixtures.universe_transcript_path(size))
            self.weight_transcripts.setdefault(
                size, fixtures.weights_transcript_path(size))
        if self.sector_map is None:
            self.sector_map = fixtures.sector_map_path()
        self.validate()

    def validate(self) -> None:
        if not self.sizes or any(s <= 0 for s in self.sizes):
            raise ConfigError("universe sizes must be positive")
        if self.points < 2:
            raise ConfigError("frontier needs at least two points")
        if self.llm_mode not in ("replay", "live"):
            raise ConfigError(f"llm mode must be replay or live, got {self.llm_mode}")
        for label, path in self._required_paths():
            if not Path(path).exists():
                raise ConfigError(f"{label} file does not exist: {path}")

    def _required_paths(self):
        yield "prices", self.prices
        yield "constituents", self.constituents
        if self.benchmarks is not None:
            yield "benchmarks", self.benchmarks
        if self.sector_map is not None:
            yield "sector map", self.sector_map
        if self.llm_mode == "replay":
            for size in self.sizes:
                if size in self.universe_transcripts:
                    yield f"universe transcript ({size})", self.universe_transcripts[size]
                else:
                    raise ConfigError(f"no universe transcript configured for size {size}")
                if size in self.weight_transcripts:
                    yield f"weight transcript ({size})", self.weight_transcripts[size]

    def bounds_for(self, n: int) -> BoundSpec:
        from .optimizer import bounds_for_universe

        return self.bounds_overrides.get(n) or bounds_for_universe(n)


def _parse_period(raw, default_label: str) -> PeriodSpec:
    try:
        return PeriodSpec(
            label=str(raw.get("label", default_label)),
            start=dt.date.fromisoformat(str(raw["start"])),
            end=dt.date.fromisoformat(str(raw["end"])),
        )
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"bad period spec {raw!r}: {exc}") from exc


def load_config(path, **overrides) -> RunConfig:
    """Build a RunConfig from a YAML file plus keyword overrides."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    base = path.parent

    def respath(value):
        p = Path(str(value))
        return p if p.is_absolute() else base / p

    kwargs: dict = {}
    if "prices" in raw:
        kwargs["prices"] = respath(raw["prices"])
    if "out" in raw:
        kwargs["out"] = respath(raw["out"])
    if "constituents" in raw:
        kwargs["constituents"] = respath(raw["constituents"])
    if "benchmarks" in raw:
        kwargs["benchmarks"] = respath(raw["benchmarks"])
    if "sector_map" in raw:
        kwargs["sector_map"] = respath(raw["sector_map"])
    for key, target in (("universe_transcripts", "universe_transcripts"),
                        ("weight_transcripts", "weight_transcripts")):
        if key in raw:
            kwargs[target] = {int(k): respath(v) for k, v in raw[key].items()}
    if "sizes" in raw:
        kwargs["sizes"] = tuple(int(s) for s in raw["sizes"])
    if "points" in raw:
        kwargs["points"] = int(raw["points"])
    if "cardinality" in raw:
        kwargs["cardinality"] = tuple(int(k) for k in raw["cardinality"])
    if "in_sample" in raw:
        kwargs["in_sample"] = _parse_period(raw["in_sample"], "in-sample")
    if "periods" in raw:
        kwargs["periods"] = tuple(
            _parse_period(p, f"period{i + 1}") for i, p in enumerate(raw["periods"])
        )
    if "llm" in raw:
        llm = raw["llm"] or {}
        kwargs["llm_mode"] = str(llm.get("mode", "replay"))
        kwargs["chat"] = ChatConfig(
            model=str(llm.get("model", "gpt-4")),
            temperature=float(llm.get("temperature", 1.0)),
            endpoint=str(llm.get("endpoint", ChatConfig.endpoint)),
            api_key_env=str(llm.get("api_key_env", ChatConfig.api_key_env)),
            max_retries=int(llm.get("max_retries", 3)),
        )
    if "remap" in raw:
        kwargs["remap"] = {str(k).upper(): str(v).upper() for k, v in raw["remap"].items()}
    if "bounds" in raw:
        kwargs["bounds_overrides"] = {
            int(k): BoundSpec(float(v[0]), float(v[1])) for k, v in raw["bounds"].items()
        }
    if "node_budget" in raw:
        kwargs["node_budget"] = int(raw["node_budget"])
    if "index_columns" in raw:
        kwargs["index_columns"] = {str(k): str(v) for k, v in raw["index_columns"].items()}
    if "funds" in raw:
        kwargs["fund_columns"] = tuple(str(t) for t in raw["funds"])

    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("prices", "out") if k not in kwargs]
    if missing:
        raise ConfigError(f"config must define: {', '.join(missing)}")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc
