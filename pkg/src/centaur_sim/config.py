"""Run configuration: a flat key=value text file with an explicit format version.

Precedence, lowest to highest: built-in defaults, the CENTAUR_SIM_SEED
environment variable (seed only), the config file, command-line flags.
The resolved configuration prints in the same format it is read in, so any
run can be repeated by feeding its printed config back through --config.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import InvalidParameterError, MissingPathError, SchemaVersionError

CONFIG_FORMAT_VERSION = 1
SEED_ENV = "CENTAUR_SIM_SEED"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    # inputs (empty string = generate on the fly)
    vocab: str = ""
    checkpoint: str = ""
    scenes: str = ""
    # vocabulary
    k: int = 512
    speed_levels: int = 8
    curvature_levels: int = 15
    vocab_seed: int = 0
    # scene streams
    n: int = 200
    categories: str = ""
    density: float = 0.0
    clip_length: int = 8
    # training
    epochs: int = 40
    lr: float = 1.0
    imitation_weight: float = 0.01
    # deployment and uncertainty
    strategy: str = "none"
    measure: str = "cluster"
    eta: float = 1e-4
    buffer: int = 4
    threshold: float = 0.8
    thresholds: str = "0.2,0.5,0.8,1.1,1.4"
    fallback_size: int = 20
    persistent: bool = True
    M: int = 100
    tau: float = 0.06
    tau_regression: float = 0.02
    N: int = 32
    candidate_seed: int = 0
    frames: str = "0"

    def threshold_list(self) -> list[float]:
        try:
            return [float(t) for t in self.thresholds.split(",") if t.strip()]
        except ValueError as exc:
            raise InvalidParameterError(f"bad thresholds {self.thresholds!r}") from exc

    def frame_list(self) -> list[int]:
        try:
            return [int(t) for t in self.frames.split(",") if t.strip()]
        except ValueError as exc:
            raise InvalidParameterError(f"bad frame list {self.frames!r}") from exc

    def category_mix(self):
        """None for the default mix, else {code: weight} parsed from 'A,B' or 'A:2,B:1'."""
        if not self.categories.strip():
            return None
        mix = {}
        for item in self.categories.split(","):
            name, _, w = item.strip().partition(":")
            try:
                mix[name] = float(w) if w else 1.0
            except ValueError as exc:
                raise InvalidParameterError(f"bad category weight in {item!r}") from exc
        return mix

    def to_text(self) -> str:
        lines = [f"format_version={CONFIG_FORMAT_VERSION}"]
        for f in fields(self):
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw):
    if key not in _TYPES:
        raise InvalidParameterError(f"unknown config key {key!r}")
    t = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    try:
        if t == "bool":
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
    except ValueError as exc:
        raise InvalidParameterError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    version = None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidParameterError(f"config line {n} is not key=value: {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "format_version":
            version = val
            continue
        values[key] = _coerce(key, val)
    if version is None or version != str(CONFIG_FORMAT_VERSION):
        raise SchemaVersionError(f"config format_version {version!r}, expected {CONFIG_FORMAT_VERSION}")
    return values


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingPathError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def resolve(config_path=None, overrides: dict | None = None, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    if environ.get(SEED_ENV):
        cfg = replace(cfg, seed=_coerce("seed", environ[SEED_ENV]))
    if config_path:
        cfg = replace(cfg, **load_config_file(config_path))
    if overrides:
        cfg = replace(cfg, **{k: _coerce(k, v) for k, v in overrides.items() if v is not None})
    return cfg
