"""Experiment configuration files.

A config file is YAML with up to four sections mirroring the dataclasses::

    train:     {folds: 10, epochs: 50, learning_rate: 0.03, ...}
    encoder:   {hidden: 32, lipschitz: 0.9, ...}
    decoder:   {heads: 4, aggregate: mean, ...}
    estimator: {epochs: 300, parametrization: mlp, ...}

Precedence is command-line overrides, then file values, then defaults.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from tgasi.training import ExperimentConfig


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, where: str) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, values in (extra or {}).items():
        if section not in out:
            raise ConfigError(f"{where}: unknown section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{where}: section {section!r} must be a mapping")
        unknown = set(values) - set(out[section])
        if unknown:
            raise ConfigError(f"{where}: unknown keys in {section!r}: {sorted(unknown)}")
        out[section].update(values)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, updated by ``path`` (if given), updated by ``overrides``."""
    d = ExperimentConfig().to_dict()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        d = _merge(d, data, str(path))
    d = _merge(d, overrides or {}, "command line")
    try:
        return ExperimentConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
