"""Flat ``key=value`` run configuration and the six named parameter sets."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

OUTPUT_ENV = "RHOELASTICA_OUTPUT_DIR"

# (m, h) of the named parameter sets
PRESETS: dict[str, tuple[float, float]] = {
    "i": (1.0, 1.85),
    "ii": (1.0, 1.0),
    "iii": (1.0, 0.25),
    "iv": (1.0, -0.5),
    "v": (1.0, -2.0),
    "vi": (0.0, -1.0),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    m: float = 1.0
    h: float = 1.0
    j: str = "auto"
    n: int = 256
    mu: float | None = None
    mu_min: float = 1e-4
    mu_max: float = 10.0
    A0: float = 0.05
    order: int = 2
    j_max: int = 6
    tol: float = 1e-10
    max_iters: int = 50
    min_eta: float = 2.0**-20
    backtrack: float = 0.5
    step: float = 5e-4
    max_points: int = 200
    snapshot_every: int = 10
    jobs: int = 1
    out_dir: str = "out"
    stroke_base: float = 0.012
    stroke_scale: float = 3.0

    def mode_numbers(self) -> list[int] | None:
        """Explicit mode numbers, or ``None`` for automatic selection."""
        if self.j == "auto":
            return None
        return [int(v) for v in self.j.split(",")]

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.out_dir)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, text: str):
    kind = _TYPES[key]
    text = text.strip()
    try:
        if kind == "str":
            value = text
        elif kind == "int":
            value = int(text)
        elif kind.startswith("float | None"):
            value = None if text.lower() in ("", "none") else float(text)
        else:
            value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite")
    return value


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.j != "auto":
        try:
            modes = cfg.mode_numbers()
        except ValueError:
            raise ConfigError(f"j: expected 'auto' or comma-separated integers, got {cfg.j!r}") from None
        if not modes or min(modes) < 1:
            raise ConfigError("j: mode numbers must be positive")
    if cfg.n < 8:
        raise ConfigError("n: grid needs at least 8 sides")
    if cfg.mu is not None and cfg.mu < 0.0:
        raise ConfigError("mu: must be non-negative")
    if not 0.0 <= cfg.mu_min < cfg.mu_max:
        raise ConfigError("mu_min: need 0 <= mu_min < mu_max")
    if cfg.A0 <= 0.0:
        raise ConfigError("A0: must be positive")
    if cfg.order not in (1, 2, 3):
        raise ConfigError("order: must be 1, 2 or 3")
    if cfg.j_max < 1:
        raise ConfigError("j_max: must be at least 1")
    if cfg.tol <= 0.0:
        raise ConfigError("tol: must be positive")
    if not 0.0 < cfg.min_eta <= 1.0:
        raise ConfigError("min_eta: must lie in (0, 1]")
    if not 0.0 < cfg.backtrack < 1.0:
        raise ConfigError("backtrack: must lie in (0, 1)")
    if cfg.step <= 0.0:
        raise ConfigError("step: must be positive")
    if cfg.max_points < 1:
        raise ConfigError("max_points: must be at least 1")
    if cfg.snapshot_every < 1:
        raise ConfigError("snapshot_every: must be at least 1")
    if cfg.jobs < 1:
        raise ConfigError("jobs: must be at least 1")
    if cfg.stroke_base <= 0.0 or cfg.stroke_scale < 0.0:
        raise ConfigError("stroke_base: must be positive (and stroke_scale non-negative)")
    return cfg


def apply_pairs(cfg: RunConfig, pairs: dict[str, str]) -> RunConfig:
    """Return ``cfg`` updated from raw string values."""
    updates = {}
    for key, text in pairs.items():
        if key == "preset":
            if text not in PRESETS:
                raise ConfigError(f"preset: unknown preset {text!r} (expected one of {', '.join(PRESETS)})")
            updates["m"], updates["h"] = PRESETS[text]
            continue
        if key not in _TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        updates[key] = _convert(key, text)
    return _validate(replace(cfg, **updates))


def parse_pairs(lines, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path=None, overrides: list[str] | None = None, preset: str | None = None) -> RunConfig:
    """Build a config from a preset, a file and ``key=value`` overrides, in that order."""
    cfg = RunConfig()
    if preset is not None:
        cfg = apply_pairs(cfg, {"preset": preset})
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        cfg = apply_pairs(cfg, parse_pairs(text.splitlines(), str(path)))
    if overrides:
        cfg = apply_pairs(cfg, parse_pairs(overrides, "--set"))
    return cfg


def preset_text(name: str) -> str:
    """Config file text for a named preset."""
    m, h = PRESETS[name]
    return f"# parameter set ({name})\nm = {m!r}\nh = {h!r}\n"
