"""Plain-text run configuration: ``key = value`` lines grouped under ``[section]`` headers."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from . import thermo
from .cascade import SWEEPABLE
from .scenarios import SCENARIOS
from .solver import PenaltyParams, SchemeConfig

COMMANDS = ("simulate", "validate-eos", "sweep")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSection:
    command: str = "simulate"
    scenario: str = "piston1d"
    n: Optional[int] = None
    t_end: float = 0.5
    output: str = "output"
    snapshot_times: tuple = ()
    seed: int = 0  # reserved

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"command must be one of {', '.join(COMMANDS)}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; known: {', '.join(SCENARIOS)}")
        if self.n is not None and self.n < 8:
            raise ValueError("n must be at least 8")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be positive")
        if any(not 0 < s <= self.t_end for s in self.snapshot_times):
            raise ValueError("snapshot times must lie in (0, t_end]")


@dataclass(frozen=True)
class EosSection:
    a: float = 1e-3
    z_lo: float = 0.1
    z_hi: float = 10.0

    def __post_init__(self):
        thermo.EosModel(a=self.a, z_lo=self.z_lo, z_hi=self.z_hi)

    def model(self, params: PenaltyParams) -> thermo.EosModel:
        return thermo.EosModel(a=self.a, z_lo=self.z_lo, z_hi=self.z_hi, beta=params.beta, delta=params.delta)


@dataclass(frozen=True)
class SweepSection:
    parameter: str = "epsilon"
    ladder: tuple = (1e-2, 5e-3, 2.5e-3)
    metrics: tuple = ("penalty_flux_int", "confinement_max_rel")
    min_slopes: tuple = ()  # (metric, floor) pairs

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"parameter must be one of {', '.join(SWEEPABLE)}")
        if len(self.ladder) < 3:
            raise ValueError("ladder needs at least 3 values")
        for m, _ in self.min_slopes:
            if m not in self.metrics:
                raise ValueError(f"slope floor given for metric {m!r} that is not swept")


@dataclass(frozen=True)
class AssertionSection:
    """Tolerances; ``None`` disables the check."""

    mass_tol: Optional[float] = 1e-12
    sigma_tol: Optional[float] = 1e-13
    dissipation_tol: Optional[float] = 0.05
    lhs_tol: Optional[float] = 1e-10
    energy_tol: Optional[float] = None
    confinement_max: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not v >= 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    eos: EosSection = field(default_factory=EosSection)
    transport: thermo.TransportCoeffs = field(default_factory=thermo.TransportCoeffs)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    assertions: AssertionSection = field(default_factory=AssertionSection)

    @property
    def model(self) -> thermo.EosModel:
        return self.eos.model(self.penalty)

    def with_command(self, command: str) -> "RunConfig":
        return replace(self, run=replace(self.run, command=command))

    def with_output(self, output: str) -> "RunConfig":
        return replace(self, run=replace(self.run, output=str(output)))


# value kinds per key; anything not listed takes the type of its default
SPECIAL = {
    ("run", "n"): "opt_int",
    ("run", "snapshot_times"): "floats",
    ("sweep", "ladder"): "floats",
    ("sweep", "metrics"): "words",
    ("sweep", "min_slopes"): "pairs",
    **{("assertions", f.name): "opt_float" for f in fields(AssertionSection)},
}

NONE_WORDS = ("off", "none", "auto")


def _kind(section: str, name: str, default) -> str:
    if (section, name) in SPECIAL:
        return SPECIAL[(section, name)]
    return {bool: "bool", int: "int", float: "float", str: "str"}[type(default)]


def _parse_value(kind: str, raw: str):
    raw = raw.strip()
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in ("opt_int", "opt_float"):
        if raw.lower() in NONE_WORDS:
            return None
        return int(raw) if kind == "opt_int" else float(raw)
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind == "words":
        return tuple(raw.replace(",", " ").split())
    if kind == "pairs":
        out = []
        for item in raw.replace(",", " ").split():
            name, sep, val = item.partition(":")
            if not sep:
                raise ValueError(f"expected metric:value, got {item!r}")
            out.append((name, float(val)))
        return tuple(out)
    raise AssertionError(kind)


def _format_value(kind: str, v) -> str:
    if v is None:
        return "off" if kind == "opt_float" else "auto"
    if kind in ("float", "opt_float"):
        return repr(float(v))
    if kind == "bool":
        return "true" if v else "false"
    if kind == "floats":
        return " ".join(repr(float(x)) for x in v)
    if kind == "words":
        return " ".join(v)
    if kind == "pairs":
        return " ".join(f"{m}:{float(x)!r}" for m, x in v)
    return str(v)


def _section_types() -> dict:
    return {f.name: f.default_factory for f in fields(RunConfig)}


def _schema(section: str) -> dict:
    """Key -> (kind, default) for one section."""
    default = _section_types()[section]()
    out = {}
    for f in fields(default):
        if section == "eos" and f.name not in ("a", "z_lo", "z_hi"):
            continue
        out[f.name] = (_kind(section, f.name, getattr(default, f.name)), getattr(default, f.name))
    return out


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip() == key:
            return i
    return None


def _section_line(text: str, section: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return i
    return None


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key outside any [section]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}: cannot parse line {line} (expected key = value)") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from None

    known = _section_types()
    built = {}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"{source}:{_section_line(text, section) or '?'}: unknown section [{section}]")
    for section, factory in known.items():
        schema = _schema(section)
        values = {}
        if cp.has_section(section):
            for key, raw in cp.items(section):
                where = f"{source}:{_line_of(text, section, key) or '?'}"
                if key not in schema:
                    raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
                kind = schema[key][0]
                try:
                    values[key] = _parse_value(kind, raw)
                except ValueError as exc:
                    raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None
        try:
            built[section] = replace(factory(), **values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: constraint violated in [{section}] ({', '.join(values) or 'defaults'}): {exc}") from None
    cfg = RunConfig(**built)
    validate(cfg, source)
    return cfg


def validate(cfg: RunConfig, source: str = "<config>") -> None:
    """Checks spanning sections; rerun after overriding the command."""
    try:
        cfg.model
    except ValueError as exc:
        raise ConfigError(f"{source}: constraint violated: {exc}") from None
    if cfg.run.command == "sweep":
        from .cascade import SweepPlan  # validates ladder order
        try:
            SweepPlan(cfg.run.scenario, cfg.sweep.parameter, cfg.sweep.ladder, frozen=cfg.penalty,
                      n=cfg.run.n, t_end=cfg.run.t_end, scheme=cfg.scheme, metrics=cfg.sweep.metrics)
        except ValueError as exc:
            raise ConfigError(f"{source}: constraint violated in [sweep]: {exc}") from None


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    return parse_text(path.read_text(), source=str(path))


def dump_config(cfg: RunConfig) -> str:
    """Normalized dump listing every key; parsing it gives back ``cfg``."""
    lines = []
    for section in _section_types():
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for key, (kind, _) in _schema(section).items():
            lines.append(f"{key} = {_format_value(kind, getattr(obj, key))}")
        lines.append("")
    return "\n".join(lines)
