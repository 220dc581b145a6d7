"""Experiment configuration: a TOML file with one table per section."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from levystein.functionals import CosineFunctional, make_functional
from levystein.levy import LevyModel, ModelKind, ParameterError
from levystein.metric import build_default_family

MIN_REPLICATES = 100

DEFAULTS = {
    "model": {"kind": "SymmetricStable", "alpha": 1.5, "scale": 1.0, "dim": 1},
    "functional": {"family": "cosine", "m": 0, "frequencies": 1.0, "lambda": 0.0, "weight": {"kind": "constant"}},
    "grid": {"t": 1.0, "n_list": [64, 128, 256, 512]},
    "mc": {"replicates": 10_000, "master_seed": 0, "workers": 1},
    "metric": {"family_size": 24},
    "probes": {"times": [1.0], "n_list": [64, 1024]},
    "output": {"directory": "out"},
}


class ConfigError(ParameterError):
    pass


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["model"]))
    functional: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["functional"]))
    grid: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["grid"]))
    mc: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["mc"]))
    metric: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["metric"]))
    probes: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["probes"]))
    output: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["output"]))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        merged = _merge(DEFAULTS, data)
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}

    def with_overrides(self, *, seed: int | None = None, workers: int | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        data = self.to_dict()
        if seed is not None:
            data["mc"]["master_seed"] = int(seed)
        if workers is not None:
            data["mc"]["workers"] = int(workers)
        if out is not None:
            data["output"]["directory"] = str(out)
        return ExperimentConfig.from_dict(data)

    # -- derived objects -------------------------------------------------

    def build_model(self) -> LevyModel:
        spec = self.model
        kind = ModelKind(spec.get("kind", "SymmetricStable"))
        alpha = 2.0 if kind is ModelKind.BROWNIAN else float(spec["alpha"])
        return LevyModel(kind, alpha, float(spec.get("scale", 1.0)), int(spec.get("dim", 1)))

    def build_functional(self) -> CosineFunctional:
        return make_functional(self.functional, int(self.model.get("dim", 1)))

    @property
    def n_list(self) -> list[int]:
        return [int(n) for n in self.grid["n_list"]]

    @property
    def horizon(self) -> float:
        return float(self.grid["t"])

    @property
    def replicates(self) -> int:
        return int(self.mc["replicates"])

    @property
    def master_seed(self) -> int:
        return int(self.mc["master_seed"])

    @property
    def workers(self) -> int:
        return int(self.mc.get("workers", 1))

    @property
    def out_dir(self) -> Path:
        return Path(self.output["directory"])

    def digest(self) -> str:
        """Hash of everything that determines the numbers (workers and output excluded)."""
        data = self.to_dict()
        data["mc"].pop("workers", None)
        data.pop("output")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def validate(self) -> None:
        try:
            self.build_model()
            self.build_functional()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid model or functional: {exc}") from exc
        ns = self.n_list
        if not ns or any(n < 1 for n in ns):
            raise ConfigError("grid.n_list must hold positive integers")
        if any(b <= a for a, b in zip(ns[:-1], ns[1:])):
            raise ConfigError("grid.n_list must be strictly increasing")
        if not self.horizon > 0:
            raise ConfigError("grid.t must be positive")
        if self.replicates < MIN_REPLICATES:
            raise ConfigError(f"mc.replicates must be >= {MIN_REPLICATES}")
        size = int(self.metric.get("family_size", 24))
        if size < 1:
            raise ConfigError("metric.family_size must be >= 1")

    def build_family(self):
        try:
            return build_default_family(int(self.metric.get("family_size", 24)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
