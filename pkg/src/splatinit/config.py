"""Pipeline configuration: one TOML file holding every stage parameter.

The config deliberately excludes dataset and output paths; those are
command-line arguments, so the same config file reproduces byte-identical
outputs wherever the directories live. A copy of the config is written
next to every run's outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

# section name -> (field, TOML key) pairs, in serialization order
_LAYOUT = {
    "detection": [
        ("tau_epi", "tau_epi"),
        ("min_area_frac", "min_area_frac"),
    ],
    "tracking": [
        ("tau_mask", "tau_mask"),
        ("propagation_interval", "propagation_interval"),
        ("provider", "provider"),
    ],
    "sceneflow": [
        ("n_query_points", "n_query_points"),
        ("ransac_iterations", "ransac_iterations"),
        ("inlier_fraction", "inlier_fraction"),
    ],
    "encoding": [
        ("d_pol", "d_pol"),
        ("d_fourier", "d_fourier"),
        ("omega", "omega"),
        ("ridge", "ridge"),
    ],
    "initialization": [
        ("static_stride", "static_stride"),
        ("n_per_frame", "n_per_frame"),
        ("alpha_init", "alpha_init"),
        ("log_sigma", "log_sigma"),
        ("log_eps", "log_eps"),
        ("scale_k", "scale_k"),
        ("radius_min", "radius_min"),
        ("radius_max", "radius_max"),
    ],
    "losses": [
        ("lambda_ssim", "lambda_ssim"),
        ("lambda_depth", "lambda_depth"),
    ],
    "synth": [
        ("scene", "scene"),
    ],
    "run": [
        ("seed", "seed"),
        ("jobs", "jobs"),
    ],
}


@dataclass(frozen=True)
class PipelineConfig:
    tau_epi: float = 3.0
    min_area_frac: float = 0.0005
    tau_mask: float = 0.8
    propagation_interval: int = 10
    provider: str = "oracle"
    n_query_points: int = 10000
    ransac_iterations: int = 256
    inlier_fraction: float = 0.02
    d_pol: int = 3
    d_fourier: int = 32
    omega: float = 2.0 * math.pi
    ridge: float = 0.0
    static_stride: int = 20
    n_per_frame: int = 4000
    alpha_init: float = 0.1
    log_sigma: float = 1.6
    log_eps: float = 1e-4
    scale_k: float = 1.5
    radius_min: float = 0.5
    radius_max: float = 8.0
    lambda_ssim: float = 0.2
    lambda_depth: float = 0.2
    scene: str = "scene_b"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.provider not in ("oracle", "files"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for name in ("tau_epi", "tau_mask", "inlier_fraction"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise ConfigError(f"cannot serialize config value {value!r}")


def config_to_toml(config: PipelineConfig) -> str:
    lines = []
    for section, entries in _LAYOUT.items():
        lines.append(f"[{section}]")
        for field_name, key in entries:
            lines.append(f"{key} = {_format_value(getattr(config, field_name))}")
        lines.append("")
    return "\n".join(lines)


def config_from_toml(text: str) -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    known = {section: dict(entries) for section, entries in _LAYOUT.items()}
    key_to_field = {
        (section, key): field_name
        for section, entries in _LAYOUT.items()
        for field_name, key in entries
    }
    for section, body in data.items():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, value in body.items():
            field_name = key_to_field.get((section, key))
            if field_name is None:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            declared = field_types[field_name]
            if declared == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{section}.{key} must be an integer")
            elif declared == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{section}.{key} must be a number")
                value = float(value)
            elif declared == "str" and not isinstance(value, str):
                raise ConfigError(f"{section}.{key} must be a string")
            values[field_name] = value
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_toml(path.read_text())


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(config_to_toml(config))
