"""Run configuration: an INI file whose sections map onto the component configs."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .classifier import BaselineConfig, TrainConfig
from .deception import ScoringConfig
from .value import PolicyConfig, ValueWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    n_extra: int = 1500
    n_eval: int = 1000


@dataclass(frozen=True)
class LlmConfig:
    url: str = ""
    model: str = ""
    auth_env_var: str = "CTRLD_LLM_TOKEN"
    timeout_s: float = 60.0
    max_concurrency: int = 4
    retries: int = 0
    stub: str = ""  # path to a {prompt_sha256: answer} file; selects the offline backend


@dataclass(frozen=True)
class RunConfig:
    map: str = "standard"
    text_dim: int = 128
    value: ValueWeights = field(default_factory=ValueWeights)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    classifier: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = ("value", "policy", "scoring", "classifier", "baseline", "split", "llm")
# INI keys that differ from the dataclass field names
_RENAMES = {"value": {"w_sc": "sc", "w_unit": "unit", "w_threat": "threat", "w_dislodge": "dislodge"}}


def _coerce(raw: str, current: Any, where: str):
    try:
        if isinstance(current, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: cannot read {raw!r} as {type(current).__name__}") from None
    return raw.strip()


def _update(obj, section: str, items: dict[str, str], source: str):
    names = {f.name for f in dataclasses.fields(obj)}
    renames = _RENAMES.get(section, {})
    changes = {}
    for key, raw in items.items():
        name = renames.get(key, key)
        if name not in names:
            raise ConfigError(f"{source}: [{section}] unknown key {key!r}")
        changes[name] = _coerce(raw, getattr(obj, name), f"{source}: [{section}] {key}")
    try:
        return dataclasses.replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(f"{source}: [{section}] {exc}") from None


def load_config(path: str | Path | None = None, overrides: dict[str, dict[str, str]] | None = None) -> RunConfig:
    """Defaults, then the file (if any), then ``{section: {key: value}}`` overrides."""
    cfg = RunConfig()
    layers = []
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        layers.append((str(path), {s: dict(parser[s]) for s in parser.sections()}))
    if overrides:
        layers.append(("command line", overrides))
    for source, sections in layers:
        for section, items in sections.items():
            if section == "run":
                bad = sorted(set(items) - {"map", "text_dim"})
                if bad:
                    raise ConfigError(f"{source}: [run] unknown key {bad[0]!r}")
                cfg = _update(cfg, "run", items, source)
            elif section in _SECTIONS:
                cfg = dataclasses.replace(cfg, **{section: _update(getattr(cfg, section), section, items, source)})
            else:
                raise ConfigError(f"{source}: unknown section [{section}]")
    return cfg
