"""Declarative run configuration.

Every parameter carries a provenance tag in the emitted metadata:
``paper`` for values stated by the benchmark protocol this toolkit
reproduces, ``decided`` for values the protocol leaves open. Unknown keys in
a config file are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

ALL_SYSTEMS = ("bicycle", "tt2d", "ntrailer", "acctt2d")

# field -> provenance tag
PROVENANCE = {
    "systems": "paper",
    "conditions": "paper",
    "n_trials": "paper",
    "n_diffuse": "paper",
    "k_candidates": "paper",
    "library_size": "paper",
    "n_resamples": "paper",
    "nu_x": "paper",
    "nu_g": "paper",
    "eta": "paper",
    "gamma": "paper",
    "dim_power": "paper",
    "min_reward": "paper",
    "base_seed": "decided",
    "temperature": "decided",
    "sigma_max": "decided",
    "sigma_min": "decided",
    "bandwidth_c": "decided",
    "datagen_n_diffuse": "decided",
    "datagen_k": "decided",
    "horizon": "decided",
    "dt": "decided",
    "collision_margin": "decided",
    "consistency_n_grid": "decided",
    "consistency_seeds": "decided",
    "scaling_seeds": "decided",
    "threads": "decided",
}


@dataclass
class RunConfig:
    systems: tuple = ALL_SYSTEMS
    conditions: tuple = ("mbd", "bsd_fix", "bsd", "nn")
    n_trials: int = 50
    n_diffuse: int = 100
    k_candidates: int = 20000
    library_size: int = 1000
    n_resamples: int = 10000
    nu_x: float = 2.0
    nu_g: float = 3.0
    eta: float = 10.0
    gamma: float = 0.5
    dim_power: float = 0.5
    min_reward: float = 0.0
    base_seed: int = 0
    temperature: float = 0.05
    sigma_max: float = 1.0
    sigma_min: float = 0.02
    bandwidth_c: float = 0.15
    datagen_n_diffuse: int = 50
    datagen_k: int = 2000
    horizon: int = 50
    dt: float = 0.1
    collision_margin: float = 0.1
    consistency_n_grid: tuple = (100, 10000)
    consistency_seeds: int = 20
    scaling_seeds: int = 50
    threads: int = 1

    def validate(self) -> "RunConfig":
        if any(s not in ALL_SYSTEMS for s in self.systems):
            raise ConfigError(f"systems must be among {ALL_SYSTEMS}")
        if self.n_trials < 0 or self.k_candidates < 1 or self.n_diffuse < 2:
            raise ConfigError("need n_trials >= 0, k_candidates >= 1, n_diffuse >= 2")
        if self.library_size < 1 or self.n_resamples < 1:
            raise ConfigError("need library_size >= 1 and n_resamples >= 1")
        if not (self.sigma_max > self.sigma_min > 0):
            raise ConfigError("need sigma_max > sigma_min > 0")
        if min(self.nu_x, self.nu_g, self.bandwidth_c, self.temperature) <= 0:
            raise ConfigError("bandwidths and temperature must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def tagged_dict(self) -> dict:
        """Config values annotated with their paper/decided provenance."""
        return {k: {"value": v, "provenance": PROVENANCE.get(k, "decided")}
                for k, v in self.to_dict().items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


PROFILES = {
    "paper": {},
    "smoke": {
        "n_trials": 5,
        "k_candidates": 2000,
        "n_diffuse": 50,
        "library_size": 1000,
        "n_resamples": 2000,
        "datagen_n_diffuse": 15,
        "datagen_k": 500,
    },
}


def load_config(path=None, profile: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig with precedence overrides > file > profile > defaults."""
    values: dict = {}
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; use one of {sorted(PROFILES)}")
        values.update(PROFILES[profile])
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        else:
            with open(path) as f:
                data = json.load(f)
        values.update(data)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("systems", "conditions", "consistency_n_grid"):
        if key in values:
            values[key] = tuple(values[key])
    return RunConfig(**values).validate()
