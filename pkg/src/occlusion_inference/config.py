"""Experiment configuration: YAML file, environment and command-line overrides.

The file has up to three sections, each optional::

    pipeline:
      obstacle_clearance: 0.2
    sim:
      n_rays: 360
    eval:
      horizon_s: 30.0

Every omitted key keeps its dataclass default. Overrides are applied in
order file -> environment (``OCCINF_<SECTION>__<KEY>=value``) -> explicit
``section.key=value`` pairs.
"""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .core import PipelineConfig
from .evaluation import EvalConfig, ExperimentConfig
from .sim import SimConfig

ENV_PREFIX = "OCCINF_"
SECTIONS = {"pipeline": PipelineConfig, "sim": SimConfig, "eval": EvalConfig}


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _coerce(key: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(key, f"expected a list of {len(default)} numbers, got {value!r}")
        return tuple(_coerce(f"{key}[{i}]", d, v) for i, (d, v) in enumerate(zip(default, value)))
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


def _section_defaults(cls) -> dict:
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in dataclasses.fields(cls)}


def build_config(tree: Mapping | None = None) -> ExperimentConfig:
    """Validate a nested mapping and build the experiment configuration."""
    tree = tree or {}
    if not isinstance(tree, Mapping):
        raise ConfigError("<root>", "top level must be a mapping of sections")
    for name in tree:
        if name not in SECTIONS:
            raise ConfigError(str(name), f"unknown section (expected one of {sorted(SECTIONS)})")
    built = {}
    for name, cls in SECTIONS.items():
        values = tree.get(name) or {}
        if not isinstance(values, Mapping):
            raise ConfigError(name, "section must be a mapping")
        defaults = _section_defaults(cls)
        kwargs = {}
        for key, value in values.items():
            full = f"{name}.{key}"
            if key not in defaults:
                raise ConfigError(full, "unknown key")
            kwargs[key] = _coerce(full, defaults[key], value)
        try:
            built[name] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(name, str(exc)) from exc
    return ExperimentConfig(built["pipeline"], built["sim"], built["eval"])


def _set_path(tree: dict, dotted: str, raw: str) -> None:
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError(dotted, "override must look like section.key=value")
    tree.setdefault(section, {})
    if not isinstance(tree[section], dict):
        raise ConfigError(section, "section must be a mapping")
    tree[section][key] = yaml.safe_load(raw)


def env_overrides(environ: Mapping[str, str]) -> list[tuple[str, str]]:
    out = []
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        section, sep, key = name[len(ENV_PREFIX):].partition("__")
        if not sep:
            raise ConfigError(name, "expected OCCINF_<SECTION>__<KEY>")
        out.append((f"{section.lower()}.{key.lower()}", environ[name]))
    return out


def load_tree(path: str | Path | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from exc
    if tree is None:
        return {}
    if not isinstance(tree, dict):
        raise ConfigError("<root>", "top level must be a mapping of sections")
    return tree


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    environ: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """File, then ``OCCINF_*`` variables, then ``section.key=value`` overrides."""
    tree = load_tree(path)
    environ = os.environ if environ is None else environ
    for dotted, raw in env_overrides(environ):
        _set_path(tree, dotted, raw)
    for item in overrides:
        dotted, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like section.key=value")
        _set_path(tree, dotted.strip(), raw)
    return build_config(tree)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(obj):
        d = dataclasses.asdict(obj)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    return {"pipeline": plain(cfg.pipeline), "sim": plain(cfg.sim), "eval": plain(cfg.eval)}


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)
