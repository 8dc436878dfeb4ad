"""Experiment configuration: a single JSON document with a stable hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import BRWError, ConfigError
from .rates import BranchingRate
from .simulate import SimParams, default_torus_side
from .walk import WalkKernel, build_kernel, simple_random_walk

PROFILES = ("d3-poisson", "d3-equilibrium", "d4", "d5", "state-dependent")
# fields that change where or how fast results are produced, not what they are
_UNHASHED = ("output", "workers")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ExperimentConfig:
    dimension: int
    kernel: object = "srw"
    branching: dict = field(default_factory=lambda: {"kind": "independent", "rho": 1.0})
    theta: float = 1.0
    init: str = "poisson"
    N_ladder: list = field(default_factory=lambda: [8, 32, 128])
    grid: list = field(default_factory=lambda: [1.0])
    replicates: int = 1000
    seed: int = 0
    torus_safety: float = 6.0
    torus_side: int | None = None
    t_burn: float | None = None
    n_paths: int = 10000
    gate: float = 3.0
    sigma_eq: dict = field(default_factory=lambda: {"t_burn": None, "t_avg": 20.0, "replicates": 50})
    sigma_curve: dict = field(default_factory=lambda: {"points": 9, "replicates": 20})
    backend: str | None = None
    output: str = "brwclt-out"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        if int(self.dimension) < 1:
            raise ConfigError("dimension must be positive")
        self.dimension = int(self.dimension)
        kernel = self.walk_kernel()
        if kernel.dimension != self.dimension:
            raise ConfigError(f"kernel dimension {kernel.dimension} != dimension {self.dimension}")
        self.rate()
        if not self.theta >= 0:
            raise ConfigError("theta must be nonnegative")
        self.theta = float(self.theta)
        self.torus_safety = float(self.torus_safety)
        if self.init not in ("poisson", "equilibrium"):
            raise ConfigError(f"init must be 'poisson' or 'equilibrium', got {self.init!r}")
        if not isinstance(self.replicates, int) or self.replicates < 2:
            raise ConfigError("replicates must be an integer >= 2")
        if not self.N_ladder or any(float(n) <= 0 for n in self.N_ladder):
            raise ConfigError("N ladder must be nonempty and positive")
        if self.dimension == 4 and any(float(n) <= 1 for n in self.N_ladder):
            raise ConfigError("d = 4 needs N > 1")
        g = [float(t) for t in self.grid]
        if not g or any(t <= 0 for t in g) or g != sorted(set(g)):
            raise ConfigError("grid must be strictly increasing positive times")
        self.grid = g
        if not self.torus_safety > 0:
            raise ConfigError("torus safety multiplier must be positive")
        if self.torus_side is not None and (self.torus_side % 2 == 0 or self.torus_side <= 2 * kernel.range):
            raise ConfigError("torus side must be odd and exceed twice the kernel range")
        if self.t_burn is not None and self.t_burn < 0:
            raise ConfigError("t_burn must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.n_paths < 1 or self.workers < 1:
            raise ConfigError("n_paths and workers must be positive")
        if self.backend not in (None, "compiled", "python"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    # -- derived objects -------------------------------------------------
    def walk_kernel(self) -> WalkKernel:
        if self.kernel == "srw":
            return simple_random_walk(self.dimension)
        if not isinstance(self.kernel, list):
            raise ConfigError("kernel must be 'srw' or a list of [offset, weight] pairs")
        return build_kernel([(tuple(o), w) for o, w in self.kernel], name="custom")

    def rate(self) -> BranchingRate:
        return BranchingRate.from_dict(self.branching)

    def sim_params(self, horizon: float = 0.0) -> SimParams:
        kernel = self.walk_kernel()
        side = self.torus_side or default_torus_side(kernel, horizon, self.torus_safety)
        return SimParams(kernel, self.rate(), float(self.theta), side, float(horizon), int(self.seed),
                         init="burnin" if self.init == "equilibrium" else "poisson",
                         t_burn=self.t_burn, backend=self.backend)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def hashed_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    @property
    def hash(self) -> str:
        return sha256_text(canonical_json(self.hashed_dict()))[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "dimension" not in d:
            raise ConfigError("config needs 'dimension'")
        try:
            return cls(**d)
        except BRWError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def profile(cls, name: str) -> "ExperimentConfig":
        if name not in PROFILES:
            raise ConfigError(f"unknown profile {name!r}; choose from {PROFILES}")
        text = resources.files("brwclt").joinpath("profiles", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))


def stamp(payload: dict, config: ExperimentConfig) -> dict:
    """Attach config hash, tool version and a checksum of the content."""
    body = dict(payload, config_hash=config.hash, version=__version__)
    body.pop("checksum", None)
    body["checksum"] = sha256_text(canonical_json(body))
    return body


def checksum_ok(payload: dict) -> bool:
    body = dict(payload)
    cs = body.pop("checksum", None)
    return cs is not None and cs == sha256_text(canonical_json(body))
