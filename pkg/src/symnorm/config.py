"""Run configuration: TOML file merged with command-line overrides."""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .distributions import FAMILIES, family_group
from .errors import ConfigError
from .frechet import METHODS, FrechetConfig
from .groups import GROUPS
from .latent_index import METRICS, IndexConfig

EXPERIMENTS = ("mnist_analog", "fashion_analog", "fisher_analog", "custom")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs besides its input files.

    ``group`` and ``family`` are optional; when set they are checked against
    the dataset before any computation. ``classes`` holds the raw
    ``[[class]]`` tables of a custom experiment.
    """
    seed: int = 0
    group: Optional[str] = None
    spec_path: Optional[str] = None
    k: int = 25
    metric: str = "cosine"
    family: Optional[str] = None
    output_dir: str = "out"
    experiment: str = "mnist_analog"
    n_per_class: Optional[int] = None
    frechet_method: str = "fisher_mode"
    eps_pose: Optional[float] = None
    eps_latent: Optional[float] = None
    latent_dim: Optional[int] = None
    classes: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: expected a non-negative integer, got {self.seed!r}")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k: expected an integer >= 1, got {self.k!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric: expected one of {METRICS}, got {self.metric!r}")
        if self.group is not None and self.group not in GROUPS:
            raise ConfigError(f"group: expected one of {GROUPS}, got {self.group!r}")
        if self.family is not None:
            if self.family not in FAMILIES:
                raise ConfigError(f"family: expected one of {sorted(FAMILIES)}, got {self.family!r}")
            if self.group is not None and family_group(self.family) != self.group:
                raise ConfigError(f"family: {self.family} does not live on {self.group}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.n_per_class is not None and (not isinstance(self.n_per_class, int) or self.n_per_class < 1):
            raise ConfigError(f"n_per_class: expected a positive integer, got {self.n_per_class!r}")
        if self.frechet_method not in METHODS:
            raise ConfigError(f"frechet_method: expected one of {METHODS}, got {self.frechet_method!r}")
        for name in ("eps_pose", "eps_latent"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0):
                raise ConfigError(f"{name}: expected a number >= 0, got {v!r}")
        if self.spec_path is not None and not os.path.exists(self.spec_path):
            raise ConfigError(f"spec_path: file not found: {self.spec_path}")

    @property
    def index(self) -> IndexConfig:
        return IndexConfig(self.k, self.metric)

    @property
    def frechet(self) -> FrechetConfig:
        return FrechetConfig(method=self.frechet_method)

    def custom_document(self) -> dict:
        """The TOML document shape expected by ``oracle.specs_from_config``."""
        doc = {"group": self.group, "class": [dict(c) for c in self.classes]}
        if self.latent_dim is not None:
            doc["latent_dim"] = self.latent_dim
        return doc

    def override(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_FIELDS = {f.name for f in fields(RunConfig)} - {"classes"}


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path=None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from an optional TOML file plus overrides.

    Unknown top-level keys are rejected so typos do not pass silently.
    Overrides whose value is ``None`` are ignored.
    """
    doc = read_toml(path) if path else {}
    kw = {}
    for key, value in doc.items():
        if key == "class":
            if not isinstance(value, list):
                raise ConfigError("class: expected an array of tables")
            kw["classes"] = tuple(value)
        elif key in _FIELDS:
            kw[key] = value
        else:
            raise ConfigError(f"{key}: unknown configuration key")
    if kw.get("classes") and "experiment" not in kw:
        kw["experiment"] = "custom"
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kw)
