"""Experiment configuration: defaults, file parsing, validation."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .selection import CREDITED, DEFAULT_PERCENTILES, TRUNCATED
from .synth import SyntheticTraceSpec

ALLOWED_DAYS = (1, 5, 10, 15, 20, 25)


class ConfigError(Exception):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    """Resolved settings for one experiment run.

    Budget resolution: ``budget`` (absolute per-zone selection budget) wins
    when set; otherwise the budget is floor(budget_fraction * mean distinct
    vehicles per active zone). The fraction may exceed 1 to model an
    effectively unlimited budget.
    """

    trace: str | None = None
    synthetic: str | SyntheticTraceSpec | None = None
    days: int = 1
    interval_d: int = 21_600  # boundary period D, seconds (6 hours)
    budget_fraction: float = 1.0
    budget: int | None = None
    seed: int = 0
    accounting: str = CREDITED
    gap_timeout: int = 1800
    percentiles: tuple[int, ...] = DEFAULT_PERCENTILES
    out: str = "out"
    workers: int = 1
    precision: int = 7
    dump_arrivals: bool = False
    decision_log: bool = False

    def validate(self) -> None:
        if (self.trace is None) == (self.synthetic is None):
            raise ConfigError("exactly one of trace / synthetic must be given")
        if self.days not in ALLOWED_DAYS:
            raise ConfigError(f"days must be one of {ALLOWED_DAYS}, got {self.days}")
        if self.interval_d <= 0:
            raise ConfigError(f"interval_d must be > 0, got {self.interval_d}")
        if self.gap_timeout <= 0:
            raise ConfigError(f"gap_timeout must be > 0, got {self.gap_timeout}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.budget is None and self.budget_fraction < 0:
            raise ConfigError("budget_fraction must be >= 0")
        if self.accounting not in (CREDITED, TRUNCATED):
            raise ConfigError(f"accounting must be credited or truncated, got {self.accounting!r}")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if len(self.percentiles) != 9 or list(self.percentiles) != sorted(set(self.percentiles)):
            raise ConfigError("percentiles must be nine strictly increasing values")
        if any(not 0 < x < 100 for x in self.percentiles):
            raise ConfigError("percentiles must lie strictly between 0 and 100")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.precision < 1 or self.precision > 12:
            raise ConfigError("precision must be in [1, 12]")


_BOOL_KEYS = {"dump_arrivals", "decision_log"}
_INT_KEYS = {"days", "interval_d", "budget", "seed", "gap_timeout", "workers", "precision"}
_FLOAT_KEYS = {"budget_fraction"}


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Flat ``key = value`` file; '#' starts a comment. Keys match the
    ExperimentConfig field names (and the CLI flags)."""
    known = {f.name for f in fields(ExperimentConfig)}
    out: dict[str, object] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line (expected key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _BOOL_KEYS:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key == "percentiles":
                out[key] = tuple(int(v) for v in value.split(","))
            else:
                out[key] = value
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return out


def config_from_sources(file_path: str | Path | None, overrides: dict[str, object]) -> ExperimentConfig:
    """Build a config from an optional file plus CLI overrides (CLI wins)."""
    values: dict[str, object] = {}
    if file_path is not None:
        values.update(parse_config_file(file_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = replace(ExperimentConfig(), **values)
    config.validate()
    return config
