"""Exact event-driven simulation of the branching random walk on a torus.

Particles jump at rate 1 according to the kernel; at a site holding k
particles a branching event (one particle replaced by two or by none, with
probability 1/2 each) happens at rate sigma(k). The loop uses thinning: every
particle carries a clock of rate ``1 + c2`` and a branching proposal at an
occupancy-k site is accepted with probability ``sigma(k) / (c2 k)``, which
keeps event selection O(1) per event. Only the origin is observed; its
change log is enough to recover every origin observable exactly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _pyloop
from .errors import ConfigError, RateOverflow
from .rates import BranchingRate
from .walk import WalkKernel

try:
    from . import _core
except ImportError:  # pragma: no cover - exercised only without a build
    _core = None

HAVE_COMPILED = _core is not None
DEFAULT_MAX_EVENTS = 10 ** 8
DEFAULT_RATE_CAP = 1e12
JUMP_IN, JUMP_OUT, BIRTH, DEATH = 0, 1, 2, 3


def default_backend() -> str:
    forced = os.environ.get("BRWCLT_BACKEND")
    if forced:
        return forced
    return "compiled" if HAVE_COMPILED else "python"


def _loop(backend: str | None):
    backend = backend or default_backend()
    if backend == "compiled":
        if _core is None:
            raise ConfigError("compiled backend requested but brwclt._core is not built")
        return _core.run_events
    if backend == "python":
        return _pyloop.run_events
    raise ConfigError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# RNG streams


def replicate_stream(seed: int, replicate: int, tag: int = 0) -> np.random.Generator:
    """Philox stream keyed by ``(seed, tag, replicate)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag), int(replicate)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# torus geometry


def default_torus_side(kernel: WalkKernel, total_time: float, safety: float = 6.0) -> int:
    lam = float(np.linalg.eigvalsh(kernel.covariance.entries).max())
    side = 2 * math.ceil(safety * math.sqrt(lam * max(total_time, 0.0))) + 1
    return max(side, 2 * kernel.range + 1)


@lru_cache(maxsize=16)
def _geometry(kernel: WalkKernel, side: int):
    d = kernel.dimension
    shape = (side,) * d
    coords = np.indices(shape).reshape(d, -1)
    cols = []
    for z in kernel.offsets:
        moved = (coords + np.array(z)[:, None]) % side
        cols.append(np.ravel_multi_index(tuple(moved), shape))
    nbr = np.ascontiguousarray(np.stack(cols, axis=1).astype(np.int32))
    nbr.setflags(write=False)
    prob, idx = alias_table(kernel.probs)
    return nbr, prob, idx


def alias_table(probs):
    """Vose alias table: slot j keeps itself with probability ``prob[j]``."""
    p = np.asarray(probs, dtype=float)
    J = p.size
    q = p * J
    prob = np.ones(J)
    idx = np.arange(J, dtype=np.int32)
    small = [j for j in range(J) if q[j] < 1.0]
    large = [j for j in range(J) if q[j] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = q[s]
        idx[s] = l
        q[l] = q[l] + q[s] - 1.0
        (small if q[l] < 1.0 else large).append(l)
    return prob, idx


@dataclass
class Configuration:
    """Particle configuration on a torus of odd ``side`` in ``d`` dimensions.

    Internally a particle list (site indices, origin = index 0) plus dense
    per-site counts; :attr:`counts` gives the sparse site -> count view.
    """

    side: int
    dimension: int
    positions: np.ndarray
    occupancy: np.ndarray

    @classmethod
    def from_counts(cls, side: int, dimension: int, dense_counts: np.ndarray) -> "Configuration":
        dense = np.asarray(dense_counts, dtype=np.int32).ravel()
        if dense.size != side ** dimension:
            raise ConfigError("count array does not match torus size")
        if np.any(dense < 0):
            raise ConfigError("counts must be nonnegative")
        pos = np.repeat(np.arange(dense.size, dtype=np.int32), dense)
        return cls(side, dimension, pos, dense.copy())

    @classmethod
    def from_sparse(cls, side: int, dimension: int, counts: dict) -> "Configuration":
        dense = np.zeros((side,) * dimension, dtype=np.int32)
        for site, k in counts.items():
            dense[tuple(int(c) % side for c in np.atleast_1d(site))] += int(k)
        return cls.from_counts(side, dimension, dense)

    @property
    def total(self) -> int:
        return int(self.positions.size)

    @property
    def counts(self) -> dict:
        shape = (self.side,) * self.dimension
        occupied = np.nonzero(self.occupancy)[0]
        return {tuple(int(c) for c in np.unravel_index(i, shape)): int(self.occupancy[i])
                for i in occupied}

    def count_at(self, site=None) -> int:
        if site is None:
            return int(self.occupancy[0])
        shape = (self.side,) * self.dimension
        idx = np.ravel_multi_index(tuple(int(c) % self.side for c in site), shape)
        return int(self.occupancy[idx])

    def copy(self) -> "Configuration":
        return Configuration(self.side, self.dimension, self.positions.copy(), self.occupancy.copy())


# ---------------------------------------------------------------------------
# parameters and observables


@dataclass
class SimParams:
    kernel: WalkKernel
    rate: BranchingRate
    theta: float
    torus_side: int
    horizon: float
    seed: int = 0
    init: str = "poisson"
    t_burn: float | None = None
    record_grid: tuple = ()
    max_events: int = DEFAULT_MAX_EVENTS
    rate_cap: float = DEFAULT_RATE_CAP
    backend: str | None = None

    def __post_init__(self):
        if self.theta < 0:
            raise ConfigError("theta must be nonnegative")
        if self.torus_side % 2 == 0 or self.torus_side <= 2 * self.kernel.range:
            raise ConfigError("torus side must be odd and exceed twice the kernel range")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.init not in ("poisson", "burnin"):
            raise ConfigError(f"unknown init {self.init!r}")
        grid = tuple(float(t) for t in self.record_grid)
        if list(grid) != sorted(grid) or any(t < 0 or t > self.horizon for t in grid):
            raise ConfigError("record grid must be sorted and inside [0, horizon]")
        self.record_grid = grid

    @property
    def burn_time(self) -> float:
        if self.init != "burnin":
            return 0.0
        return float(self.torus_side if self.t_burn is None else self.t_burn)


@dataclass
class EventCounters:
    births_at_origin: int
    deaths_at_origin: int
    integrated_sigma_at_origin: float
    integrated_count_at_origin: float


@dataclass
class Trajectory:
    """Origin history of one run: piecewise-constant count with event log."""

    horizon: float
    initial_count: int
    times: np.ndarray
    kinds: np.ndarray
    counts: np.ndarray
    rate: BranchingRate
    final: Configuration
    events: int
    _cum_occ: np.ndarray = field(init=False, repr=False)
    _cum_sig: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        levels = np.concatenate(([self.initial_count], self.counts)).astype(float)
        knots = np.concatenate(([0.0], self.times))
        widths = np.diff(knots)
        sig_levels = np.asarray(self.rate(levels.astype(np.int64)), dtype=float)
        self._levels = levels
        self._sig_levels = sig_levels
        self._knots = knots
        self._cum_occ = np.concatenate(([0.0], np.cumsum(levels[:-1] * widths)))
        self._cum_sig = np.concatenate(([0.0], np.cumsum(sig_levels[:-1] * widths)))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon) or np.any(t < 0):
            raise ConfigError("time outside [0, horizon]")
        return t

    def _segment(self, t):
        return np.searchsorted(self._knots, t, side="right") - 1

    def count_at(self, t):
        t = self._check(t)
        out = self._levels[self._segment(t)]
        return out if out.ndim else float(out)

    def occupation_integral(self, t):
        """Exact ``int_0^t xi_s(0) ds``."""
        t = self._check(t)
        j = self._segment(t)
        out = self._cum_occ[j] + self._levels[j] * (t - self._knots[j])
        return out if out.ndim else float(out)

    def sigma_integral(self, t):
        t = self._check(t)
        j = self._segment(t)
        out = self._cum_sig[j] + self._sig_levels[j] * (t - self._knots[j])
        return out if out.ndim else float(out)

    def _kind_count(self, kind, t):
        t = self._check(t)
        hits = np.cumsum(np.concatenate(([0], self.kinds == kind)))
        out = hits[self._segment(t)]
        return out if np.ndim(out) else int(out)

    def births(self, t):
        return self._kind_count(BIRTH, t)

    def deaths(self, t):
        return self._kind_count(DEATH, t)

    def counters(self, t=None) -> EventCounters:
        t = self.horizon if t is None else t
        return EventCounters(int(self.births(t)), int(self.deaths(t)),
                             float(self.sigma_integral(t)), float(self.occupation_integral(t)))


# ---------------------------------------------------------------------------
# operations


def init_poisson(params: SimParams, rng: np.random.Generator) -> Configuration:
    """i.i.d. Poisson(theta) counts, drawn as a Poisson total scattered uniformly."""
    d = params.kernel.dimension
    n_sites = params.torus_side ** d
    total = int(rng.poisson(params.theta * n_sites)) if params.theta > 0 else 0
    pos = rng.integers(0, n_sites, size=total, dtype=np.int32) if total else np.zeros(0, np.int32)
    occ = np.bincount(pos, minlength=n_sites).astype(np.int32)
    return Configuration(params.torus_side, d, pos, occ)


def _advance(params: SimParams, config: Configuration, rng: np.random.Generator, horizon: float):
    nbr, aprob, aidx = _geometry(params.kernel, params.torus_side)
    table = np.array(params.rate.table, dtype=float)
    pos = np.empty(max(16, 2 * config.total), dtype=np.int32)
    pos[:config.total] = config.positions
    counts = config.occupancy.astype(np.int32, copy=True)
    initial = int(counts[0])
    run = _loop(params.backend)
    pos, n, events, status, lt, lk, lc, t_end = run(
        rng.bit_generator, pos, config.total, counts, nbr, aprob, aidx, table,
        float(params.rate.slope), float(params.rate.linear_bound_c2), 0,
        float(horizon), int(params.max_events), float(params.rate_cap))
    if status == 1:
        raise RateOverflow(f"event cap {params.max_events} exceeded at t={t_end:.4g}")
    if status == 2:
        raise RateOverflow(f"total rate exceeded cap {params.rate_cap:g} at t={t_end:.4g}")
    final = Configuration(config.side, config.dimension, np.array(pos[:n], dtype=np.int32), counts)
    return final, initial, lt, lk, lc, events


def init_equilibrium(params: SimParams, rng: np.random.Generator) -> Configuration:
    """Poisson field evolved for ``params.burn_time``; approximate equilibrium sample."""
    if params.kernel.dimension < 3:
        raise ConfigError("equilibrium initial law requires d >= 3")
    config = init_poisson(params, rng)
    t_burn = params.burn_time if params.init == "burnin" else float(params.t_burn or 0.0)
    if t_burn <= 0:
        return config
    final, *_ = _advance(params, config, rng, t_burn)
    return final


def initial_configuration(params: SimParams, rng: np.random.Generator) -> Configuration:
    if params.init == "burnin":
        return init_equilibrium(params, rng)
    return init_poisson(params, rng)


def run(params: SimParams, config: Configuration, rng: np.random.Generator):
    """Simulate from ``config`` to ``params.horizon``; returns ``(trajectory, counters)``."""
    if config.side != params.torus_side or config.dimension != params.kernel.dimension:
        raise ConfigError("configuration does not live on the parameter torus")
    final, initial, lt, lk, lc, events = _advance(params, config, rng, params.horizon)
    traj = Trajectory(params.horizon, initial, lt, lk, lc, params.rate, final, events)
    return traj, traj.counters()


def occupation_integral(trajectory: Trajectory, t: float) -> float:
    return trajectory.occupation_integral(t)


def simulate_replicate(params: SimParams, replicate: int, tag: int = 0):
    """Run one replicate on its own stream; returns the trajectory."""
    rng = replicate_stream(params.seed, replicate, tag)
    config = initial_configuration(params, rng)
    traj, _ = run(params, config, rng)
    return traj


def estimate_sigma_eq(params: SimParams, t_burn: float, t_avg: float, replicates: int,
                      seed: int | None = None, tag: int = 7):
    """Replicate mean of ``(1/t_avg) int sigma(xi_s(0)) ds`` after burn-in.

    Returns ``(estimate, standard_error)``.
    """
    if params.kernel.dimension < 3:
        raise ConfigError("sigma_eq is defined for d >= 3")
    if replicates < 2 or t_avg <= 0:
        raise ConfigError("need replicates >= 2 and t_avg > 0")
    seed = params.seed if seed is None else seed
    p = SimParams(params.kernel, params.rate, params.theta, params.torus_side, t_avg, seed,
                  init="burnin", t_burn=t_burn, max_events=params.max_events,
                  rate_cap=params.rate_cap, backend=params.backend)
    vals = np.empty(replicates)
    for r in range(replicates):
        traj = simulate_replicate(p, r, tag)
        vals[r] = traj.sigma_integral(t_avg) / t_avg
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicates))


# ---------------------------------------------------------------------------
# batches of replicates


@dataclass
class ReplicateBatch:
    """Per-replicate origin observables at ``times``, one row per replicate.

    ``failed`` holds ``(replicate, message)`` for replicates that raised
    :class:`RateOverflow`; their rows are NaN.
    """

    replicates: np.ndarray
    times: np.ndarray
    count: np.ndarray
    occupation: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    sigma_integral: np.ndarray
    events: np.ndarray
    failed: list

    @property
    def ok(self) -> np.ndarray:
        return ~np.isnan(self.occupation[:, 0]) if self.times.size else np.ones(len(self.replicates), bool)

    @classmethod
    def concat(cls, parts) -> "ReplicateBatch":
        parts = sorted(parts, key=lambda b: int(b.replicates[0]) if len(b.replicates) else -1)
        parts = [p for p in parts if len(p.replicates)]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        failed = sorted(f for p in parts for f in p.failed)
        return cls(cat("replicates"), parts[0].times, cat("count"), cat("occupation"),
                   cat("births"), cat("deaths"), cat("sigma_integral"), cat("events"), failed)


def _run_chunk(params: SimParams, times: np.ndarray, keys, tag: int) -> ReplicateBatch:
    n, k = len(keys), len(times)
    shape = (n, k)
    out = {name: np.full(shape, np.nan) for name in
           ("count", "occupation", "births", "deaths", "sigma_integral")}
    events = np.zeros(n, dtype=np.int64)
    failed = []
    for row, (rep, stream) in enumerate(keys):
        try:
            traj = simulate_replicate(params, stream, tag)
        except RateOverflow as exc:
            failed.append((int(rep), str(exc)))
            continue
        out["count"][row] = traj.count_at(times)
        out["occupation"][row] = traj.occupation_integral(times)
        out["births"][row] = traj.births(times)
        out["deaths"][row] = traj.deaths(times)
        out["sigma_integral"][row] = traj.sigma_integral(times)
        events[row] = traj.events
    reps = np.array([r for r, _ in keys], dtype=np.int64)
    return ReplicateBatch(reps, np.asarray(times, float), events=events, failed=failed, **out)


def run_replicates(params: SimParams, replicates, times=None, tag: int = 0, workers: int = 1,
                   chunk: int = 64, streams=None) -> ReplicateBatch:
    """Run replicates ``0..replicates-1`` (or the given indices) on their own streams.

    ``times`` defaults to ``params.record_grid``. ``streams`` optionally maps
    each replicate to a different stream index (forcing shared seeds, for
    instance). The result is ordered by replicate index and does not depend
    on ``workers``.
    """
    reps = list(range(replicates)) if isinstance(replicates, (int, np.integer)) else [int(r) for r in replicates]
    times = np.asarray(params.record_grid if times is None else times, dtype=float)
    if np.any(times > params.horizon) or np.any(times < 0):
        raise ConfigError("record times must lie in [0, horizon]")
    stream_of = reps if streams is None else [int(s) for s in streams]
    keys = list(zip(reps, stream_of))
    chunks = [keys[i:i + chunk] for i in range(0, len(keys), chunk)]
    if not chunks:
        z = np.zeros((0, times.size))
        return ReplicateBatch(np.zeros(0, np.int64), times, z, z, z, z, z, np.zeros(0, np.int64), [])
    if workers <= 1:
        parts = [_run_chunk(params, times, c, tag) for c in chunks]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, params, times, c, tag) for c in chunks]
            parts = [f.result() for f in futures]
    return ReplicateBatch.concat(parts)


def estimate_sigma_curve(params: SimParams, times, replicates: int, seed: int | None = None,
                         tag: int = 11):
    """``r -> E[sigma(xi_r(0))]`` on ``times`` from a Poisson start.

    Uses the site average of ``sigma(xi_r(x))`` over the torus in each
    replicate (all sites share the law of the origin). Returns
    ``(times, mean, standard_error)``.
    """
    if replicates < 2:
        raise ConfigError("need at least 2 replicates")
    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0 or times[0] < 0:
        raise ConfigError("times must be nonnegative and nonempty")
    seed = params.seed if seed is None else seed
    vals = np.empty((replicates, times.size))
    for r in range(replicates):
        rng = replicate_stream(seed, r, tag)
        config = init_poisson(params, rng)
        t_prev = 0.0
        for j, t in enumerate(times):
            if t > t_prev:
                config, *_ = _advance(params, config, rng, t - t_prev)
                t_prev = t
            vals[r, j] = np.mean(params.rate(config.occupancy.astype(np.int64)))
    return times, vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(replicates)
