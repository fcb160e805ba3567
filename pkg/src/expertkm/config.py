"""Flat INI run configuration.

One section per command (``[fit]``, ``[cv]``, ``[simulate]``,
``[mc_study]``, ``[bias]``). Values are plain scalars, space- or
comma-separated lists, inclusive ranges ``start:stop:step``, and the
small spec strings documented in the README (judgment modes, candidate
grids, adjudication-probability choices). Paths are resolved relative
to the config file. The only environment influence is the output
directory override on the command line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError

_NUM_SPLIT = re.compile(r"[,\s]+")


def parse_floats(text: str) -> list:
    items = [x for x in _NUM_SPLIT.split(text.strip()) if x]
    try:
        return [float(x) for x in items]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def parse_names(text: str) -> tuple:
    return tuple(x for x in _NUM_SPLIT.split(text.strip()) if x)


def parse_axis(text: str) -> np.ndarray:
    """Either an explicit list of numbers or an inclusive range a:b:step."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"range must be numeric, got {text!r}") from exc
        if step <= 0 or stop < start:
            raise ConfigError(f"range {text!r} must increase")
        return np.arange(start, stop + 0.5 * step, step)
    values = np.asarray(parse_floats(text))
    if values.size == 0:
        raise ConfigError("empty axis")
    return values


def parse_query_points(text: str, k: int) -> np.ndarray:
    """Query covariate points; semicolons separate points when k > 1."""
    text = text.strip()
    if ";" in text:
        points = [parse_floats(part) for part in text.split(";") if part.strip()]
    else:
        flat = parse_floats(text)
        points = [[v] for v in flat] if k == 1 else [flat]
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != k:
        raise ConfigError(f"query points must have {k} coordinates each")
    return arr


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class JudgmentMode:
    """Parsed ``judgments`` value: how the acceptance indicators arise."""

    kind: str  # precomputed | naive | uniform | threshold | partial | perfect
    keep_probability: Optional[float] = None
    column: Optional[str] = None
    cutoff: Optional[float] = None
    effectiveness: Optional[float] = None


def parse_judgment_mode(text: str) -> JudgmentMode:
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind in ("precomputed", "naive") and len(parts) == 1:
            return JudgmentMode(kind=kind)
        if kind == "uniform" and len(parts) == 2:
            return JudgmentMode(kind=kind, keep_probability=float(parts[1]))
        if kind == "threshold" and len(parts) == 4:
            return JudgmentMode(
                kind=kind,
                keep_probability=float(parts[1]),
                column=parts[2],
                cutoff=float(parts[3]),
            )
        if kind == "partial" and len(parts) == 2:
            return JudgmentMode(kind=kind, effectiveness=float(parts[1]))
        if kind == "perfect" and len(parts) == 1:
            return JudgmentMode(kind=kind, effectiveness=1.0)
    except ValueError as exc:
        raise ConfigError(f"bad judgment mode {text!r}") from exc
    raise ConfigError(
        f"bad judgment mode {text!r}; expected precomputed, naive, uniform:<keep>, "
        "threshold:<keep>:<column>:<cutoff>, partial:<effectiveness>, or perfect"
    )


@dataclass(frozen=True)
class BandwidthMode:
    kind: str  # explicit | schedule | cv
    values: Optional[tuple] = None


def parse_bandwidth_mode(text: str) -> BandwidthMode:
    text = text.strip()
    if text.lower() == "schedule":
        return BandwidthMode(kind="schedule")
    if text.lower() == "cv":
        return BandwidthMode(kind="cv")
    return BandwidthMode(kind="explicit", values=tuple(parse_floats(text)))


@dataclass(frozen=True)
class PHatSpec:
    kind: str  # constant | disability
    value: Optional[float] = None


def parse_p_hat(text: str) -> PHatSpec:
    parts = text.strip().split(":")
    if parts[0] == "constant" and len(parts) == 2:
        try:
            return PHatSpec(kind="constant", value=float(parts[1]))
        except ValueError as exc:
            raise ConfigError(f"bad p_hat {text!r}") from exc
    if parts[0] == "disability" and len(parts) == 1:
        return PHatSpec(kind="disability")
    raise ConfigError(f"bad p_hat {text!r}; expected constant:<value> or disability")


class Section:
    """Typed accessors over one configparser section."""

    def __init__(self, name: str, raw, base_dir: Path):
        self.name = name
        self.raw = raw
        self.base_dir = base_dir

    def __contains__(self, key):
        return key in self.raw

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def require(self, key) -> str:
        if key not in self.raw:
            raise ConfigError(f"[{self.name}] is missing required key {key!r}")
        return self.raw[key]

    def path(self, key) -> Path:
        return (self.base_dir / self.require(key)).resolve()

    def floats(self, key, default=None):
        return parse_floats(self.raw[key]) if key in self.raw else default

    def float(self, key, default=None):
        return float(self.raw[key]) if key in self.raw else default

    def int(self, key, default=None):
        return int(self.raw[key]) if key in self.raw else default

    def bool(self, key, default=False):
        return parse_bool(self.raw[key]) if key in self.raw else default

    def axis(self, key, default=None):
        return parse_axis(self.raw[key]) if key in self.raw else default

    def names(self, key, default=()):
        if key in self.raw:
            return parse_names(self.raw[key])
        return default if default is None else tuple(default)


@dataclass
class RunConfig:
    """Parsed config file plus its identity (bytes feed the run hash)."""

    path: Path
    raw_bytes: bytes
    sections: dict

    def section(self, name: str) -> Section:
        if name not in self.sections:
            raise ConfigError(f"config {self.path} has no [{name}] section")
        return self.sections[name]

    def optional_section(self, name: str) -> Section:
        return self.sections.get(name) or Section(name, {}, self.path.parent)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    raw_bytes = path.read_bytes()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(raw_bytes.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    sections = {
        name: Section(name, dict(parser[name]), path.parent) for name in parser.sections()
    }
    return RunConfig(path=path, raw_bytes=raw_bytes, sections=sections)


def empty_config(name: str = "<defaults>") -> RunConfig:
    return RunConfig(path=Path(name), raw_bytes=b"", sections={})


def scenario_from_section(section: Section, seed: int):
    """Build a DisabilityScenario from a section's overrides."""
    import dataclasses

    from .simulation import DisabilityScenario

    kwargs = {"seed": seed}
    for key in (
        "age_mean",
        "age_var",
        "reportings_rate",
        "censor_upper",
        "disability_scale",
        "disability_slope",
        "contamination_base",
        "contamination_per_report",
    ):
        if key in section:
            kwargs[key] = section.float(key)
    if "n" in section:
        kwargs["n"] = section.int("n")
    return dataclasses.replace(DisabilityScenario(), **kwargs)
