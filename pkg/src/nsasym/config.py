"""Flat ``key = value`` run configuration and the named presets."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from nsasym.field import SpectralField, parse_field, read_field
from nsasym.modes import ModeSet, enumerate_modes
from nsasym.order import ComparePolicy
from nsasym.solver import StepPolicy, sinusoidal_force

PRESETS = ("paper-4.1", "thm-6.10", "case1-plan", "case2-plan")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict[str, str]
    base_dir: Path = field(default_factory=Path.cwd)
    source: str = "<inline>"

    # -- typed access --
    def has(self, key: str) -> bool:
        return key in self.values

    def text(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"{self.source}: missing key '{key}'")
        return default

    def number(self, key: str, default: float | None = None) -> float:
        raw = self.values.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.source}: missing key '{key}'")
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{self.source}: '{key}' is not a number: {raw!r}") from None

    def integer(self, key: str, default: int | None = None) -> int:
        x = self.number(key, None if default is None else float(default))
        if x != int(x):
            raise ConfigError(f"{self.source}: '{key}' must be an integer")
        return int(x)

    def positive(self, key: str, default: float | None = None) -> float:
        x = self.number(key, default)
        if not x > 0:
            raise ConfigError(f"{self.source}: '{key}' must be positive")
        return x

    def vectors(self, key: str) -> list[tuple[int, ...]]:
        raw = self.values.get(key, "").strip()
        if not raw:
            return []
        try:
            return [tuple(int(x) for x in part.split()) for part in raw.split(";") if part.strip()]
        except ValueError:
            raise ConfigError(f"{self.source}: '{key}' must be ';'-separated integer vectors") from None

    def override(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        vals.update({k: str(v) for k, v in kw.items() if v is not None})
        return RunConfig(vals, self.base_dir, self.source)

    # -- assembled objects --
    def mode_set(self) -> ModeSet:
        d = self.integer("dimension")
        lam = self.positive("lambda_cut")
        return enumerate_modes(d, lam)

    def field(self, key: str, ms: ModeSet) -> SpectralField:
        """A field given as ``file:<path>`` or inline ``;``-separated rows."""
        raw = self.text(key).strip()
        if raw.startswith("file:"):
            path = self.base_dir / raw[5:].strip()
            if not path.is_file():
                raise ConfigError(f"{self.source}: {key} file {path} does not exist")
            try:
                return read_field(path, ms)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{self.source}: bad field file {path}: {exc}") from None
        rows = "\n".join(r.strip() for r in raw.split(";"))
        header = f"# d={ms.dimension} lambda={ms.lambda_cut!r}\n"
        try:
            return parse_field(header + rows, ms)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{self.source}: bad inline field '{key}': {exc}") from None

    def force(self, ms: ModeSet):
        """(g, v_start) from the ``force`` key; v_start is None unless known."""
        spec = self.text("force").strip()
        if spec == "sinusoidal":
            try:
                mf = sinusoidal_force(ms)
            except ValueError as exc:
                raise ConfigError(f"{self.source}: {exc}") from None
            return mf.g, mf.v_start
        return self.field("force", ms), None

    def step_policy(self) -> StepPolicy:
        base = StepPolicy()
        kw = {}
        for key in ("initial_step", "max_step", "min_step", "grow", "cut", "tol"):
            if self.has(key):
                kw[key] = self.positive(key)
        for key in ("easy_iters", "n_points", "max_iter"):
            if self.has(key):
                kw[key] = self.integer(key)
        spacing = self.text("spacing", base.spacing)
        if spacing not in ("adaptive", "geometric"):
            raise ConfigError(f"{self.source}: spacing must be adaptive or geometric")
        kw["spacing"] = spacing
        try:
            return StepPolicy(**kw)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None

    def compare_policy(self) -> ComparePolicy:
        kw = {}
        for key in ("window", "tail_fraction", "slope_threshold", "plateau_tol"):
            if self.has(key):
                kw[key] = self.positive(key)
        if self.has("min_points"):
            kw["min_points"] = self.integer("min_points")
        try:
            return ComparePolicy(**kw)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None


def parse_config(text: str, base_dir: Path | None = None, source: str = "<inline>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys such as M, D0, K are case-sensitive
    try:
        cp.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(dict(cp["run"]), base_dir or Path.cwd(), source)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(), p.parent, str(p))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("nsasym.presets").joinpath(f"{name}.cfg").read_text()


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name), source=f"preset:{name}")
