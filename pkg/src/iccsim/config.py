"""INI experiment configuration with strict keys and a lossless text echo."""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
import typing
from dataclasses import dataclass, field

from .airlink import MODES, SAP_STRATEGIES, AttackerConfig
from .code import CodeError, check_parameters

EXPERIMENTS = ("deltaf_sweep", "iep_curve", "nmse_curve", "iep_montecarlo")
AOA_MODELS = ("discrete", "continuous")

_PI_TERM = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    n_fft: int = 64
    n_b: int = 16
    taps: int = 4
    n_antennas: int = 100
    spacing: float = 0.5
    delta: float = math.pi / 12
    theta_bob: float = 0.0
    theta_ava: float = math.pi / 5
    aoa_model: str = "discrete"
    k_points: int = 5
    aoa_low: float = -math.pi / 4
    aoa_high: float = math.pi / 4
    snr_db: float = 20.0
    phase_resolution: int = 64
    phi_bar: float = math.pi / 2
    target_pf: float = 1e-3
    symbols: int = 3

    @property
    def noise_var(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    def aoa_grid(self) -> tuple[float, ...]:
        """K equally spaced mean AoAs over ``[aoa_low, aoa_high]``."""
        if self.k_points == 1:
            return (0.5 * (self.aoa_low + self.aoa_high),)
        step = (self.aoa_high - self.aoa_low) / (self.k_points - 1)
        return tuple(self.aoa_low + i * step for i in range(self.k_points))


@dataclass(frozen=True)
class AttackerSection:
    mode: str = "PTJ_PB"
    power_db: float = 0.0
    victim_fraction: float = 1.0
    sap_strategy: str = "random_codebook_word"
    genie: bool = False
    phase_resolution: typing.Optional[int] = None
    independent_tones: bool = False

    def build(self, scenario: SystemConfig) -> AttackerConfig:
        return AttackerConfig(
            mode=self.mode,
            power=10.0 ** (self.power_db / 10.0),
            victim_fraction=self.victim_fraction,
            sap_strategy=None if self.sap_strategy == "default" else self.sap_strategy,
            genie=self.genie,
            phase_resolution=self.phase_resolution or scenario.phase_resolution,
            independent_tones=self.independent_tones,
        )


@dataclass(frozen=True)
class SweepConfig:
    theta_grid: tuple[float, ...] = (-math.pi / 4, -math.pi / 7, 0.0, math.pi / 7, math.pi / 4)
    snr_db_list: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    n_antennas_list: tuple[int, ...] = (16, 64, 256)
    taps_list: tuple[int, ...] = (8, 10, 12)
    k_min: int = 4
    k_max: int = 100
    k_step: int = 4
    nb_offset: int = 0
    mc_max_nb: int = 20
    mc_trials: int = 100_000


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "deltaf_sweep"
    trials: int = 100
    seed: int = 0
    output: str = "results.csv"
    threads: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    scenario: SystemConfig = field(default_factory=SystemConfig)
    attacker: AttackerSection = field(default_factory=AttackerSection)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self) -> None:
        validate(self)

    @property
    def experiment(self) -> str:
        return self.run.experiment

    @property
    def trials(self) -> int:
        return self.run.trials

    @property
    def seed(self) -> int:
        return self.run.seed

    def with_overrides(self, **run_fields) -> "ExperimentConfig":
        fields = {k: v for k, v in run_fields.items() if v is not None}
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **fields))


SECTIONS = {"run": RunConfig, "scenario": SystemConfig, "attacker": AttackerSection, "sweep": SweepConfig}


def validate(cfg: ExperimentConfig) -> None:
    sc, run = cfg.scenario, cfg.run
    if run.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {run.experiment!r}; choose from {EXPERIMENTS}")
    if run.trials < 1:
        raise ConfigError("trials must be >= 1")
    if not 0 <= run.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if run.threads < 1:
        raise ConfigError("threads must be >= 1")
    try:
        check_parameters(sc.n_b, sc.taps)
    except CodeError as exc:
        raise ConfigError(str(exc)) from None
    if sc.n_b > sc.n_fft:
        raise ConfigError(f"n_b={sc.n_b} exceeds n_fft={sc.n_fft}")
    if sc.aoa_model not in AOA_MODELS:
        raise ConfigError(f"aoa_model must be one of {AOA_MODELS}")
    if sc.k_points < 1 or sc.symbols < 3 or sc.phase_resolution < 2:
        raise ConfigError("k_points >= 1, symbols >= 3 and phase_resolution >= 2 are required")
    if not 0 < sc.target_pf < 1:
        raise ConfigError("target_pf must lie in (0, 1)")
    if math.comb(sc.n_b, (sc.n_b + sc.taps) // 2) < sc.phase_resolution:
        raise ConfigError("phase_resolution exceeds the number of codewords")
    att = cfg.attacker
    if att.mode not in MODES:
        raise ConfigError(f"unknown attacker mode {att.mode!r}")
    if att.sap_strategy not in SAP_STRATEGIES + ("default",):
        raise ConfigError(f"unknown sap_strategy {att.sap_strategy!r}")
    try:
        att.build(sc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.sweep.k_step < 1 or cfg.sweep.k_min > cfg.sweep.k_max:
        raise ConfigError("bad k range")


def parse_value(text: str, kind):
    """Convert one INI value to ``kind`` (int, float, bool, str, Optional[int] or a tuple)."""
    text = text.strip()
    origin = typing.get_origin(kind)
    if origin is typing.Union:
        inner = [a for a in typing.get_args(kind) if a is not type(None)][0]
        return None if text in ("", "none") else parse_value(text, inner)
    if origin is tuple:
        inner = typing.get_args(kind)[0]
        return tuple(parse_value(part, inner) for part in text.split(",") if part.strip())
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text.replace("_", ""))
    if kind is float:
        return _parse_float(text)
    return text


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    m = _PI_TERM.match(text)
    if not m:
        raise ConfigError(f"not a number: {text!r}")
    sign, coef, den = m.groups()
    value = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
    return -value if sign == "-" else value


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build_section(cls, items: dict[str, str], name: str):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(items) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, raw in items.items():
        try:
            kwargs[key] = parse_value(raw, hints[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(parser.sections()) - set(SECTIONS) - {"meta"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    parts = {}
    for name, cls in SECTIONS.items():
        items = dict(parser.items(name)) if parser.has_section(name) else {}
        parts[name] = _build_section(cls, items, name)
    return ExperimentConfig(**parts)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def to_ini(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {format_value(getattr(section, f.name))}".rstrip())
    return "\n".join(lines) + "\n"
