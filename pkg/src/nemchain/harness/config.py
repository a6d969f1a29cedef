"""Experiment configuration: a serialisable record of everything needed to replay a run."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..errors import ConfigurationError, UsageError
from ..lindblad import BathSpec, IntegratorOptions
from ..model import ChainSpec

KINDS = ("fig2_dispersion", "fig3_profiles", "fig4_thermal", "fig5_6_concurrence", "fig7_ctqw", "table1", "custom")

DEFAULT_SEED = 20160601
DEFAULT_REALIZATIONS = 500


@dataclass(frozen=True)
class TimeGrid:
    start: float = 0.0
    stop: float = 20.0
    num: int = 201

    def __post_init__(self):
        if self.num < 1:
            raise ConfigurationError("time grid needs at least one point")
        if self.num > 1 and not self.stop > self.start:
            raise ConfigurationError("time grid stop must exceed start")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class ExperimentConfig:
    """One ensemble run: a chain, an optional bath, an initial state and a seed.

    ``initial`` is ``"center"`` (one excitation on site N//2) or ``"site:<k>"``
    with a 0-based k.  ``transient`` is the initial window, in 1/J, that is
    excluded from time-averaged profiles.
    """

    kind: str
    chain: ChainSpec
    bath: BathSpec | None = None
    initial: str = "center"
    realizations: int = DEFAULT_REALIZATIONS
    master_seed: int = DEFAULT_SEED
    times: TimeGrid = field(default_factory=TimeGrid)
    truncation: tuple[int, int] = (2, 2)
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    transient: float = 10.0
    rate_convention: str = "gamma in units of J"
    label: str = ""
    output_dir: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be >= 1")
        self.initial_site()  # validates

    def initial_site(self) -> int:
        n = self.chain.n_sites
        if self.initial == "center":
            return n // 2
        if self.initial.startswith("site:"):
            k = int(self.initial.split(":", 1)[1])
            if not 0 <= k < n:
                raise ConfigurationError(f"initial site {k} outside the chain")
            return k
        raise ConfigurationError(f"unsupported initial condition {self.initial!r}")

    @property
    def is_open(self) -> bool:
        return self.bath is not None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "label": self.label,
            "chain": asdict(self.chain),
            "bath": None if self.bath is None else {"gamma": self.bath.gamma, "nbar": self.bath.nbar},
            "initial": self.initial,
            "realizations": self.realizations,
            "master_seed": self.master_seed,
            "times": asdict(self.times),
            "truncation": {"n_max": self.truncation[0], "total_cutoff": self.truncation[1]},
            "integrator": self.integrator.to_dict(),
            "transient": self.transient,
            "rate_convention": self.rate_convention,
            "output_dir": self.output_dir,
        }
        if d["bath"] is not None and isinstance(d["bath"]["gamma"], tuple):
            d["bath"]["gamma"] = list(d["bath"]["gamma"])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        if "chain" not in d or "kind" not in d:
            raise ConfigurationError("config needs 'kind' and 'chain' sections")
        d["chain"] = ChainSpec(**d["chain"])
        bath = d.get("bath")
        d["bath"] = None if bath is None else BathSpec(bath.get("gamma", 0.0), bath.get("nbar", 0.0))
        if "times" in d:
            d["times"] = TimeGrid(**d["times"])
        if "truncation" in d:
            t = d["truncation"]
            d["truncation"] = (int(t["n_max"]), int(t["total_cutoff"])) if isinstance(t, dict) else tuple(t)
        if "integrator" in d:
            d["integrator"] = IntegratorOptions(**d["integrator"])
        return cls(**d)

    def config_hash(self) -> str:
        payload = self.to_dict()
        payload.pop("output_dir", None)
        blob = json.dumps(payload, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def load_config_file(path: str | Path) -> dict:
    """Parse a YAML (or JSON) experiment file into a plain mapping."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} does not contain a mapping")
    return data


def dump_config_file(path: str | Path, data: dict) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)
    return path
