"""Experiment configuration: a versioned, line-oriented key=value file.

Sections are bracketed headers; keys are flat key = value pairs. ``[meta]``
carries the format version and the mandatory global seed (no wall-clock
seeding anywhere). ``[channel]`` holds the link budget and surrogate
coefficients; ``[train]``, ``[sweep]`` and ``[baselines]`` default sensibly
when omitted.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .channel import (
    DEFAULT_CENTER_FREQUENCY_HZ,
    ChannelParams,
    LinkBudget,
    NlinCoeffs,
)
from .errors import ConfigError

CONFIG_VERSION = 1


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ChannelSettings:
    span_length_km: float
    attenuation_db_per_km: float
    spans: int
    noise_figure_db: float
    symbol_rate_hz: float
    nlin_c0: float
    nlin_c1: float
    nlin_c2: float
    launch_power_dbm: float
    center_frequency_hz: float = DEFAULT_CENTER_FREQUENCY_HZ

    def link(self, spans: int | None = None) -> LinkBudget:
        return LinkBudget(
            span_length_km=self.span_length_km,
            attenuation_db_per_km=self.attenuation_db_per_km,
            spans=self.spans if spans is None else spans,
            noise_figure_db=self.noise_figure_db,
            reference_bandwidth_hz=self.symbol_rate_hz,
            center_frequency_hz=self.center_frequency_hz,
        )

    def params(
        self, spans: int | None = None, power_dbm: float | None = None
    ) -> ChannelParams:
        power = self.launch_power_dbm if power_dbm is None else power_dbm
        return ChannelParams.from_link(
            self.link(spans),
            nlin=NlinCoeffs(self.nlin_c0, self.nlin_c1, self.nlin_c2),
            launch_power_mw=dbm_to_mw(power),
        )


@dataclass(frozen=True)
class TrainSettings:
    order: int
    batch_size: int
    steps: int
    learning_rate: float
    hidden_width: int
    restarts: int
    spans_list: tuple[int, ...]


@dataclass(frozen=True)
class SweepSettings:
    power_dbm_grid: tuple[float, ...]
    spans_list: tuple[int, ...]
    samples: int


@dataclass(frozen=True)
class BaselineSettings:
    formats: tuple[str, ...]
    order: int
    nu_grid: tuple[float, ...]
    mb_samples: int


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    channel: ChannelSettings
    train: TrainSettings
    sweep: SweepSettings
    baselines: BaselineSettings


class _Section:
    """One config section with typed, error-reporting accessors."""

    def __init__(self, parser: configparser.ConfigParser, name: str, required: bool):
        self.name = name
        if parser.has_section(name):
            self.items = dict(parser.items(name))
        elif required:
            raise ConfigError(f"missing [{name}] section")
        else:
            self.items = {}

    def _raw(self, key: str, default=None):
        if key in self.items:
            return self.items[key]
        if default is None:
            raise ConfigError(f"missing key '{key}' in [{self.name}]")
        return default

    def get_float(self, key: str, default: float | None = None) -> float:
        raw = self._raw(key, default)
        if isinstance(raw, float):
            return raw
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: not a number: {raw!r}") from exc

    def get_int(self, key: str, default: int | None = None) -> int:
        raw = self._raw(key, default)
        if isinstance(raw, int):
            return raw
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: not an integer: {raw!r}") from exc

    def get_int_list(self, key: str, default: tuple[int, ...] | None = None) -> tuple[int, ...]:
        if key not in self.items:
            if default is None:
                raise ConfigError(f"missing key '{key}' in [{self.name}]")
            return default
        raw = self.items[key]
        try:
            values = tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: bad integer list: {raw!r}") from exc
        if not values:
            raise ConfigError(f"[{self.name}] {key}: empty list")
        return tuple(sorted(set(values)))

    def get_str_list(self, key: str, default: tuple[str, ...]) -> tuple[str, ...]:
        if key not in self.items:
            return default
        values = tuple(part.strip() for part in self.items[key].split(",") if part.strip())
        if not values:
            raise ConfigError(f"[{self.name}] {key}: empty list")
        return values


def _grid(lo: float, hi: float, step: float, name: str) -> tuple[float, ...]:
    if step <= 0.0:
        raise ConfigError(f"{name}: step must be positive")
    if hi < lo:
        raise ConfigError(f"{name}: max below min")
    n = int(round((hi - lo) / step))
    values = [round(lo + i * step, 9) for i in range(n + 1)]
    return tuple(values)


def parse_config(path) -> ExperimentConfig:
    """Load and validate an experiment config file."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    meta = _Section(parser, "meta", required=True)
    version = meta.get_int("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}, expected {CONFIG_VERSION}")
    seed = meta.get_int("seed")

    ch = _Section(parser, "channel", required=True)
    channel = ChannelSettings(
        span_length_km=ch.get_float("span_length_km"),
        attenuation_db_per_km=ch.get_float("attenuation_db_per_km"),
        spans=ch.get_int("spans"),
        noise_figure_db=ch.get_float("noise_figure_db"),
        symbol_rate_hz=ch.get_float("symbol_rate_hz"),
        nlin_c0=ch.get_float("nlin_c0"),
        nlin_c1=ch.get_float("nlin_c1"),
        nlin_c2=ch.get_float("nlin_c2"),
        launch_power_dbm=ch.get_float("launch_power_dbm"),
        center_frequency_hz=ch.get_float("center_frequency_hz", DEFAULT_CENTER_FREQUENCY_HZ),
    )
    # construct once to surface invalid link parameters as config errors
    channel.params()

    tr = _Section(parser, "train", required=False)
    train = TrainSettings(
        order=tr.get_int("order", 16),
        batch_size=tr.get_int("batch_size", 1024),
        steps=tr.get_int("steps", 20000),
        learning_rate=tr.get_float("learning_rate", 1e-3),
        hidden_width=tr.get_int("hidden_width", 64),
        restarts=tr.get_int("restarts", 5),
        spans_list=tr.get_int_list("spans_list", (channel.spans,)),
    )

    sw = _Section(parser, "sweep", required=False)
    sweep = SweepSettings(
        power_dbm_grid=_grid(
            sw.get_float("power_dbm_min", -6.0),
            sw.get_float("power_dbm_max", 6.0),
            sw.get_float("power_dbm_step", 0.5),
            "[sweep] power grid",
        ),
        spans_list=sw.get_int_list("spans_list", tuple(range(1, 31))),
        samples=sw.get_int("samples", 1_000_000),
    )

    bl = _Section(parser, "baselines", required=False)
    baselines = BaselineSettings(
        formats=bl.get_str_list("formats", ("square_qam", "mb_ps")),
        order=bl.get_int("order", 256),
        nu_grid=_grid(
            bl.get_float("nu_min", 0.0),
            bl.get_float("nu_max", 3.0),
            bl.get_float("nu_step", 0.25),
            "[baselines] nu grid",
        ),
        mb_samples=bl.get_int("mb_samples", 100_000),
    )
    for fmt in baselines.formats:
        if fmt not in ("square_qam", "mb_ps"):
            raise ConfigError(f"[baselines] unknown format {fmt!r}")

    return ExperimentConfig(
        seed=seed, channel=channel, train=train, sweep=sweep, baselines=baselines
    )
