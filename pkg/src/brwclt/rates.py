"""Branching-rate functions sigma: site occupancy -> branching rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class BranchingRate:
    """Tabulated ``sigma(0..K)`` extended affinely with ``slope`` beyond K.

    Independent branching ``sigma(k) = rho k`` is the table ``(0, rho)`` with
    slope ``rho``.
    """

    kind: str
    table: tuple
    slope: float

    @classmethod
    def independent(cls, rho: float) -> "BranchingRate":
        rho = float(rho)
        if not rho > 0:
            raise ConfigError("independent branching needs rho > 0 (sigma must not vanish identically)")
        return cls("independent", (0.0, rho), rho)

    @classmethod
    def tabulated(cls, values, slope: float | None = None) -> "BranchingRate":
        vals = tuple(float(v) for v in values)
        if len(vals) < 2:
            raise ConfigError("tabulated sigma needs at least sigma(0) and sigma(1)")
        if vals[0] != 0.0:
            raise ConfigError("sigma(0) must be 0")
        if any(v < 0 for v in vals):
            raise ConfigError("sigma must be nonnegative")
        if slope is None:
            slope = max(0.0, vals[-1] - vals[-2])
        slope = float(slope)
        if slope < 0:
            raise ConfigError("extension slope must be nonnegative")
        rate = cls("tabulated", vals, slope)
        if rate.linear_bound_c2 <= 0:
            raise ConfigError("sigma must not vanish identically")
        return rate

    @property
    def rho(self) -> float:
        if self.kind != "independent":
            raise AttributeError("rho is only defined for independent branching")
        return self.table[1]

    @property
    def lipschitz_c(self) -> float:
        return float(max(np.abs(np.diff(self.table)).max(), self.slope))

    @property
    def linear_bound_c2(self) -> float:
        k = np.arange(1, len(self.table))
        return float(max((np.array(self.table[1:]) / k).max(), self.slope))

    def __call__(self, k):
        kk = np.asarray(k)
        K = len(self.table) - 1
        tab = np.array(self.table)
        out = np.where(kk <= K, tab[np.minimum(kk, K)], tab[K] + self.slope * (kk - K))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        if self.kind == "independent":
            return {"kind": "independent", "rho": self.rho}
        return {"kind": "tabulated", "values": list(self.table), "slope": self.slope}

    @classmethod
    def from_dict(cls, spec: dict) -> "BranchingRate":
        kind = spec.get("kind")
        if kind == "independent":
            return cls.independent(spec["rho"])
        if kind == "tabulated":
            return cls.tabulated(spec["values"], spec.get("slope"))
        raise ConfigError(f"unknown branching kind {kind!r}")
