"""Scenario configuration and the seven Table-1 agent populations.

Scenario files are YAML. The five agent counts are top-level keys named
after the table rows; every other section is optional and falls back to
the defaults below. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping

import yaml

from .kernel import NS_PER_HOUR, NS_PER_MINUTE, NS_PER_SECOND, FundamentalParams

COUNT_FIELDS = ("zero_intelligent", "exchange", "q_learner", "noise", "momentum")


class ScenarioError(ValueError):
    """Invalid scenario file or configuration; the message names the field."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ZIParams:
    obs_noise: float = 50.0  # std of the private fundamental observation, ticks
    offset_min: int = 0
    offset_max: int = 100
    mean_wake: int = 30 * NS_PER_SECOND
    order_size: int = 1


@dataclass(frozen=True)
class MomentumParams:
    wake_interval: int = 20 * NS_PER_SECOND
    short_window: int = 20
    long_window: int = 50
    min_size: int = 1
    max_size: int = 10


@dataclass(frozen=True)
class NoiseParams:
    min_size: int = 1
    max_size: int = 100


@dataclass(frozen=True)
class LearnerParams:
    decision_interval: int = 60 * NS_PER_SECOND
    order_size: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    zero_intelligent: int = 100
    exchange: int = 1
    q_learner: int = 1
    noise: int = 0
    momentum: int = 0
    fundamental: FundamentalParams = field(default_factory=FundamentalParams)
    market_open: int = 9 * NS_PER_HOUR + 30 * NS_PER_MINUTE
    market_close: int = 16 * NS_PER_HOUR
    tick_size: int = 1
    latency: int = 1_000  # 1 microsecond
    quote_interval: int = NS_PER_SECOND
    seed: int = 0
    zi: ZIParams = field(default_factory=ZIParams)
    momentum_agent: MomentumParams = field(default_factory=MomentumParams)
    noise_agent: NoiseParams = field(default_factory=NoiseParams)
    learner: LearnerParams = field(default_factory=LearnerParams)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def counts(self) -> Dict[str, int]:
        return {k: getattr(self, k) for k in COUNT_FIELDS}

    @property
    def duration(self) -> int:
        return self.market_close - self.market_open

    def validate(self) -> None:
        for name in COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ScenarioError(name, f"must be a nonnegative integer, got {value!r}")
        if self.exchange != 1:
            raise ScenarioError("exchange", f"exactly one exchange is required, got {self.exchange}")
        if self.q_learner not in (0, 1):
            raise ScenarioError("q_learner", f"must be 0 or 1, got {self.q_learner}")
        if self.market_close <= self.market_open:
            raise ScenarioError("market.close", "must be after market.open")
        if self.tick_size < 1:
            raise ScenarioError("market.tick_size", "must be >= 1")
        if self.latency < 0:
            raise ScenarioError("market.latency_ns", "must be >= 0")
        if self.quote_interval <= 0:
            raise ScenarioError("market.quote_interval_ns", "must be positive")
        try:
            self.fundamental.validate()
        except ValueError as exc:
            raise ScenarioError("fundamental", str(exc)) from None
        if self.zi.offset_min > self.zi.offset_max or self.zi.offset_min < 0:
            raise ScenarioError("zi_agent.offset_min", "need 0 <= offset_min <= offset_max")
        if self.zi.order_size < 1 or self.zi.mean_wake <= 0 or self.zi.obs_noise < 0:
            raise ScenarioError("zi_agent", "order_size, mean_wake must be positive; obs_noise >= 0")
        m = self.momentum_agent
        if not (1 <= m.min_size <= m.max_size) or m.wake_interval <= 0:
            raise ScenarioError("momentum_agent", "need 1 <= min_size <= max_size, wake_interval > 0")
        if not 1 <= m.short_window <= m.long_window:
            raise ScenarioError("momentum_agent.short_window", "need 1 <= short_window <= long_window")
        n = self.noise_agent
        if not 1 <= n.min_size <= n.max_size:
            raise ScenarioError("noise_agent", "need 1 <= min_size <= max_size")
        if self.learner.decision_interval <= 0 or self.learner.order_size < 1:
            raise ScenarioError("learner", "decision_interval and order_size must be positive")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


# Scenario columns 1..7: (noise, momentum); every column has 100 ZI,
# one exchange and one Q-learner.
TABLE1_MIX = {
    1: (0, 0),
    2: (10, 5),
    3: (5, 10),
    4: (10, 10),
    5: (5, 0),
    6: (10, 0),
    7: (0, 10),
}

REDUCED_ZI = 25
REDUCED_DAY = 2 * NS_PER_HOUR


def table1_scenario(index: int, **overrides: Any) -> ScenarioConfig:
    noise, momentum = TABLE1_MIX[index]
    base = dict(
        name=f"scenario_{index}",
        zero_intelligent=100,
        exchange=1,
        q_learner=1,
        noise=noise,
        momentum=momentum,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def reduced_scale(cfg: ScenarioConfig) -> ScenarioConfig:
    """Desk-scale variant: ZI population scaled by 25/100 and a two-hour day."""
    zi = max(1, round(cfg.zero_intelligent * REDUCED_ZI / 100)) if cfg.zero_intelligent else 0
    close = min(cfg.market_close, cfg.market_open + REDUCED_DAY)
    return replace(cfg, zero_intelligent=zi, market_close=close)


# -- file format ---------------------------------------------------------

_SECTION_TYPES = {
    "fundamental": FundamentalParams,
    "zi_agent": ZIParams,
    "momentum_agent": MomentumParams,
    "noise_agent": NoiseParams,
    "learner": LearnerParams,
}
_SECTION_ATTR = {
    "fundamental": "fundamental",
    "zi_agent": "zi",
    "momentum_agent": "momentum_agent",
    "noise_agent": "noise_agent",
    "learner": "learner",
}
_MARKET_KEYS = {"open", "close", "tick_size", "latency_ns", "quote_interval_ns"}
_TOP_KEYS = set(COUNT_FIELDS) | set(_SECTION_TYPES) | {"name", "seed", "market"}


def parse_clock(value: Any, field_name: str) -> int:
    """'HH:MM' or 'HH:MM:SS' time of day -> nanoseconds since midnight."""
    if not isinstance(value, str):
        # unquoted 16:00 reaches us as the YAML 1.1 sexagesimal int 960
        raise ScenarioError(field_name, f"expected a quoted 'HH:MM' string, got {value!r}")
    try:
        parts = [int(p) for p in str(value).split(":")]
    except ValueError:
        raise ScenarioError(field_name, f"expected HH:MM, got {value!r}") from None
    if len(parts) not in (2, 3):
        raise ScenarioError(field_name, f"expected HH:MM, got {value!r}")
    h, m = parts[0], parts[1]
    s = parts[2] if len(parts) == 3 else 0
    return h * NS_PER_HOUR + m * NS_PER_MINUTE + s * NS_PER_SECOND


def format_clock(ns: int) -> str:
    s = ns // NS_PER_SECOND
    h, rem = divmod(s, 3600)
    m, sec = divmod(rem, 60)
    return f"{h:02d}:{m:02d}" if sec == 0 else f"{h:02d}:{m:02d}:{sec:02d}"


def _build_section(name: str, raw: Any):
    cls = _SECTION_TYPES[name]
    if not isinstance(raw, Mapping):
        raise ScenarioError(name, "must be a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in allowed:
            raise ScenarioError(f"{name}.{key}", "unknown key")
    return cls(**dict(raw))


def scenario_from_dict(data: Mapping[str, Any], default_name: str = "scenario") -> ScenarioConfig:
    if not isinstance(data, Mapping):
        raise ScenarioError("<root>", "scenario file must contain a mapping")
    for key in data:
        if key not in _TOP_KEYS:
            raise ScenarioError(str(key), "unknown key")
    for key in COUNT_FIELDS:
        if key not in data:
            raise ScenarioError(key, "missing required agent count")
    kwargs: Dict[str, Any] = {k: data[k] for k in COUNT_FIELDS}
    kwargs["name"] = str(data.get("name", default_name))
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    market = data.get("market", {}) or {}
    if not isinstance(market, Mapping):
        raise ScenarioError("market", "must be a mapping")
    for key in market:
        if key not in _MARKET_KEYS:
            raise ScenarioError(f"market.{key}", "unknown key")
    if "open" in market:
        kwargs["market_open"] = parse_clock(market["open"], "market.open")
    if "close" in market:
        kwargs["market_close"] = parse_clock(market["close"], "market.close")
    if "tick_size" in market:
        kwargs["tick_size"] = int(market["tick_size"])
    if "latency_ns" in market:
        kwargs["latency"] = int(market["latency_ns"])
    if "quote_interval_ns" in market:
        kwargs["quote_interval"] = int(market["quote_interval_ns"])
    for section, attr in _SECTION_ATTR.items():
        if section in data:
            kwargs[attr] = _build_section(section, data[section])
    return ScenarioConfig(**kwargs)


def scenario_to_dict(cfg: ScenarioConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {"name": cfg.name}
    out.update(cfg.counts)
    out["seed"] = cfg.seed
    out["market"] = {
        "open": format_clock(cfg.market_open),
        "close": format_clock(cfg.market_close),
        "tick_size": cfg.tick_size,
        "latency_ns": cfg.latency,
        "quote_interval_ns": cfg.quote_interval,
    }
    for section, attr in _SECTION_ATTR.items():
        out[section] = dataclasses.asdict(getattr(cfg, attr))
    return out


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open("r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return scenario_from_dict(data, default_name=path.stem)


def dump_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(scenario_to_dict(cfg), fh, sort_keys=False)


def resolve_scenario(ref: str) -> ScenarioConfig:
    """A path to a scenario file, or ``table1:N`` for a built-in column."""
    if ref.startswith("table1:"):
        try:
            return table1_scenario(int(ref.split(":", 1)[1]))
        except (KeyError, ValueError):
            raise ScenarioError("scenario", f"unknown built-in scenario {ref!r}") from None
    return load_scenario(ref)


def maybe_reduce(cfg: ScenarioConfig, full_scale: bool) -> ScenarioConfig:
    return cfg if full_scale else reduced_scale(cfg)

