"""Random-walk quantities on Z^d for a finite-range symmetric jump kernel.

Continuous-time transition probabilities are computed by uniformization,

    a_t(0, x) = sum_k Pois(k; t) a^(k)(0, x),

with the k-step convolution powers built explicitly on a box. Kernels whose
jumps all lie on the coordinate axes are handled coordinate-wise: the
rate-1 walk then splits into independent one-dimensional walks run at rates
``w_i`` (the kernel mass on axis i), so each factor needs only a 1-D
convolution table. Everything else (Green functions, killed Green
functions, iterated integrals, the clan integral) is quadrature on top of
the vectorised return probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import integrate as spi
from scipy.special import gammaln, xlogy

from .errors import (AsymmetricKernel, ConfigError, DivergentIntegral,
                     DomainError, NotIrreducible, RecurrentCase, SingularQ,
                     ToleranceNotReached, ZeroOffsetPresent)
from .quadrature import integrate

# safety factor on the local-CLT tail estimate
TAIL_SAFETY = 1.05
# dense-box cell budget for non-separable kernels
MAX_BOX_CELLS = 30_000_000


class Estimate(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True, eq=False)
class CovMatrix:
    entries: np.ndarray
    det: float
    inverse: np.ndarray


@dataclass(frozen=True)
class WalkKernel:
    """Symmetric finite-range jump law ``a(0, .)`` on Z^d."""

    dimension: int
    offsets: tuple
    probs: tuple
    name: str = field(default="", compare=False)

    @property
    def range(self) -> int:
        return max(max(abs(c) for c in z) for z in self.offsets)

    @cached_property
    def covariance(self) -> CovMatrix:
        return covariance_matrix(self)

    @property
    def is_axis_separable(self) -> bool:
        return all(sum(1 for c in z if c != 0) == 1 for z in self.offsets)

    def to_spec(self) -> list:
        return [[list(z), p] for z, p in zip(self.offsets, self.probs)]

    def __str__(self):
        return self.name or f"kernel(d={self.dimension}, {len(self.offsets)} jumps)"


def _as_offset(z) -> tuple:
    if isinstance(z, (int, np.integer)):
        return (int(z),)
    out = tuple(int(c) for c in z)
    if any(c != cz for c, cz in zip(out, z)):
        raise ConfigError(f"non-integer offset {z!r}")
    return out


def _generates_lattice(offsets: Sequence[tuple], d: int) -> bool:
    from sympy import Matrix, ZZ
    from sympy.matrices.normalforms import smith_normal_form

    snf = smith_normal_form(Matrix([list(z) for z in offsets]).T, domain=ZZ)
    diag = [abs(snf[i, i]) for i in range(min(snf.shape))]
    return len(diag) >= d and all(v == 1 for v in diag[:d])


def build_kernel(spec: Iterable, name: str = "") -> WalkKernel:
    """Validate and normalise a list of ``(offset, weight)`` pairs.

    Offsets may be ints (d = 1) or integer sequences. Duplicate offsets are
    merged. Raises :class:`ZeroOffsetPresent`, :class:`AsymmetricKernel` or
    :class:`NotIrreducible` when the jump law violates the model assumptions.
    """
    merged: dict = {}
    dims = set()
    for entry in spec:
        z, w = entry
        z = _as_offset(z)
        w = float(w)
        if not (w > 0 and math.isfinite(w)):
            raise ConfigError(f"weight for offset {z} must be positive, got {w}")
        dims.add(len(z))
        merged[z] = merged.get(z, 0.0) + w
    if not merged:
        raise ConfigError("kernel spec is empty")
    if len(dims) != 1:
        raise ConfigError(f"offsets have inconsistent dimensions {sorted(dims)}")
    d = dims.pop()
    if d < 1:
        raise ConfigError("dimension must be positive")
    if (0,) * d in merged:
        raise ZeroOffsetPresent("zero offset is not a jump")
    for z, w in merged.items():
        mirror = tuple(-c for c in z)
        wm = merged.get(mirror)
        if wm is None or not math.isclose(w, wm, rel_tol=1e-12):
            raise AsymmetricKernel(f"offset {z} has weight {w} but its mirror has {wm}")
    if not _generates_lattice(list(merged), d):
        raise NotIrreducible("jump support does not generate Z^%d" % d)
    total = sum(merged.values())
    keys = sorted(merged)
    return WalkKernel(d, tuple(keys), tuple(merged[z] / total for z in keys), name)


def simple_random_walk(d: int) -> WalkKernel:
    spec = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        spec.append((tuple(e), 1.0))
        e[i] = -1
        spec.append((tuple(e), 1.0))
    return build_kernel(spec, name=f"srw-z{d}")


def covariance_matrix(kernel: WalkKernel) -> CovMatrix:
    z = np.array(kernel.offsets, dtype=float)
    p = np.array(kernel.probs)
    q = (z * p[:, None]).T @ z
    det = float(np.linalg.det(q))
    if not det > 1e-12 * max(1.0, float(np.abs(q).max()) ** kernel.dimension):
        raise SingularQ(f"covariance matrix is singular (det={det})")
    return CovMatrix(q, det, np.linalg.inv(q))


# ---------------------------------------------------------------------------
# uniformization machinery


def poisson_cutoff(mean: float, tol: float) -> int:
    """Smallest K with Poisson(mean) mass above K below ``tol``."""
    cap = math.ceil(mean + 12.0 * math.sqrt(mean) + 50.0)
    if mean == 0.0:
        return 0
    k = np.arange(cap + 1)
    logp = xlogy(k, mean) - mean - gammaln(k + 1)
    tail = np.cumsum(np.exp(logp)[::-1])[::-1]  # tail[j] = P(N >= j)
    ok = np.nonzero(tail < tol)[0]
    if ok.size == 0:
        raise ToleranceNotReached(
            f"Poisson({mean}) tail does not drop below {tol} by k_max={cap}")
    return int(max(ok[0] - 1, 0))


def poisson_weights(means: np.ndarray, kmax: int) -> np.ndarray:
    """Matrix ``W[i, k] = Pois(k; means[i])`` for k = 0..kmax."""
    k = np.arange(kmax + 1)
    m = np.asarray(means, dtype=float)[:, None]
    logp = xlogy(k[None, :], m) - m - gammaln(k + 1)[None, :]
    return np.exp(logp)


class _AxisWalk:
    """One-dimensional symmetric step law with cached convolution powers.

    ``table[k, x]`` holds ``c^(k)(x)`` for x >= 0 (symmetry gives x < 0).
    """

    def __init__(self, offsets: tuple, probs: tuple):
        self.offsets = np.array(offsets, dtype=np.int64)
        self.probs = np.array(probs, dtype=float)
        self.r = int(np.abs(self.offsets).max())
        self._dist = np.ones(1)
        self._rows = [np.ones(1)]
        self._table = None

    @property
    def kmax(self) -> int:
        return len(self._rows) - 1

    def extend(self, K: int) -> None:
        if K <= self.kmax:
            return
        dist = self._dist
        r = self.r
        for _ in range(self.kmax + 1, K + 1):
            new = np.zeros(dist.size + 2 * r)
            n = dist.size
            for z, p in zip(self.offsets, self.probs):
                new[r + z:r + z + n] += p * dist
            dist = new
            self._rows.append(dist[dist.size // 2:].copy())
        self._dist = dist
        self._table = None

    def table(self, K: int) -> np.ndarray:
        self.extend(K)
        if self._table is None or self._table.shape[0] <= K:
            width = self.kmax * self.r + 1
            tab = np.zeros((self.kmax + 1, width))
            for k, row in enumerate(self._rows):
                tab[k, :row.size] = row
            self._table = tab
        return self._table

    def continuous(self, s: np.ndarray, xs: np.ndarray, tol: float):
        """``b_s(x)`` for the rate-1 walk at times ``s`` and sites ``xs``.

        Returns ``(values[n_s, n_x], truncation_bound)``.
        """
        s = np.asarray(s, dtype=float)
        xs = np.abs(np.asarray(xs, dtype=np.int64))
        smax = float(s.max()) if s.size else 0.0
        K = poisson_cutoff(smax, tol)
        tab = self.table(K)
        cols = np.zeros((K + 1, xs.size))
        inside = xs < tab.shape[1]
        cols[:, inside] = tab[:K + 1, xs[inside]]
        out = np.empty((s.size, xs.size))
        chunk = max(1, 4_000_000 // (K + 1))
        for i in range(0, s.size, chunk):
            w = poisson_weights(s[i:i + chunk], K)
            out[i:i + chunk] = w @ cols
        return out, tol


@lru_cache(maxsize=64)
def _axis_walk(offsets: tuple, probs: tuple) -> _AxisWalk:
    return _AxisWalk(offsets, probs)


class _SeparableEngine:
    def __init__(self, kernel: WalkKernel):
        self.d = kernel.dimension
        axes = []
        for i in range(self.d):
            offs, ps = [], []
            for z, p in zip(kernel.offsets, kernel.probs):
                if z[i] != 0:
                    offs.append(z[i])
                    ps.append(p)
            w = float(sum(ps))
            order = np.argsort(offs)
            offs = tuple(int(offs[j]) for j in order)
            ps = tuple(float(ps[j] / w) for j in order)
            axes.append((w, _axis_walk(offs, ps)))
        self.axes = axes

    def values(self, ts: np.ndarray, x: tuple, tol: float):
        ts = np.asarray(ts, dtype=float)
        out = np.ones(ts.size)
        for (w, walk), xi in zip(self.axes, x):
            vals, _ = walk.continuous(w * ts, np.array([xi]), tol / self.d)
            out *= vals[:, 0]
        return np.clip(out, 0.0, 1.0), tol

    def field(self, t: float, radius: int, tol: float):
        xs = np.arange(-radius, radius + 1)
        out = np.ones(())
        for w, walk in self.axes:
            vals, _ = walk.continuous(np.array([w * t]), xs, tol / self.d)
            out = np.multiply.outer(out, vals[0])
        return out, tol

    def fields(self, ts: np.ndarray, radius: int, tol: float):
        """Stack of fields at many times, shape ``(n_t, 2R+1, ..., 2R+1)``."""
        xs = np.arange(-radius, radius + 1)
        ts = np.asarray(ts, dtype=float)
        out = np.ones((ts.size,))
        for w, walk in self.axes:
            vals, _ = walk.continuous(w * ts, xs, tol / self.d)
            out = out[..., None] * vals.reshape((ts.size,) + (1,) * (out.ndim - 1) + (xs.size,))
        return out, tol


class _BoxEngine:
    """General finite-range kernel: convolution powers on a killed box."""

    def __init__(self, kernel: WalkKernel):
        self.kernel = kernel
        self.d = kernel.dimension
        self.r = kernel.range
        self._seq_cache: dict = {}

    def _step(self, dist: np.ndarray) -> np.ndarray:
        new = np.zeros_like(dist)
        n = dist.shape[0]
        for z, p in zip(self.kernel.offsets, self.kernel.probs):
            dst, src = [], []
            for c in z:
                if c >= 0:
                    dst.append(slice(c, n))
                    src.append(slice(0, n - c))
                else:
                    dst.append(slice(0, n + c))
                    src.append(slice(-c, n))
            new[tuple(dst)] += p * dist[tuple(src)]
        return new

    def _radius_for(self, K: int, need: int) -> int:
        cap = int((MAX_BOX_CELLS ** (1.0 / self.d) - 1) // 2)
        R = min(max(need, 1), cap)
        return R

    def sequences(self, K: int, sites: tuple):
        """``a^(k)(0, x)`` for k <= K and each x in ``sites`` plus bounds."""
        key = (K, sites)
        if key in self._seq_cache:
            return self._seq_cache[key]
        reach = max(max(abs(c) for c in x) for x in sites)
        R = self._radius_for(K, max(K * self.r, reach))
        if R < reach:
            raise ToleranceNotReached("requested site lies outside the box budget")
        n = 2 * R + 1
        dist = np.zeros((n,) * self.d)
        centre = (R,) * self.d
        dist[centre] = 1.0
        idx = [tuple(R + c for c in x) for x in sites]
        seq = np.zeros((K + 1, len(sites)))
        bound = np.zeros(K + 1)
        seq[0] = [dist[i] for i in idx]
        for k in range(1, K + 1):
            dist = self._step(dist)
            seq[k] = [dist[i] for i in idx]
            if R < k * self.r:
                bound[k] = max(0.0, 1.0 - dist.sum())
        self._seq_cache[key] = (seq, bound)
        return seq, bound

    def values(self, ts: np.ndarray, x: tuple, tol: float):
        ts = np.asarray(ts, dtype=float)
        K = poisson_cutoff(float(ts.max()), tol)
        seq, bound = self.sequences(K, (tuple(x),))
        w = poisson_weights(ts, K)
        err = tol + float((w @ bound).max())
        return np.clip(w @ seq[:, 0], 0.0, 1.0), err

    def field(self, t: float, radius: int, tol: float):
        K = poisson_cutoff(t, tol)
        R = self._radius_for(K, max(K * self.r, radius))
        if R < radius:
            raise ToleranceNotReached("requested radius exceeds the box budget")
        n = 2 * R + 1
        dist = np.zeros((n,) * self.d)
        dist[(R,) * self.d] = 1.0
        w = poisson_weights(np.array([t]), K)[0]
        acc = w[0] * dist
        lost = 0.0
        for k in range(1, K + 1):
            dist = self._step(dist)
            acc += w[k] * dist
            if R < k * self.r:
                lost += w[k] * max(0.0, 1.0 - dist.sum())
        cut = tuple(slice(R - radius, R + radius + 1) for _ in range(self.d))
        return acc[cut], tol + lost

    def fields(self, ts, radius, tol):
        outs, errs = zip(*(self.field(float(t), radius, tol) for t in ts))
        return np.stack(outs), max(errs)


@lru_cache(maxsize=32)
def _engine(kernel: WalkKernel):
    if kernel.is_axis_separable:
        return _SeparableEngine(kernel)
    return _BoxEngine(kernel)


# ---------------------------------------------------------------------------
# public operations


def _site(kernel: WalkKernel, x) -> tuple:
    if x is None:
        return (0,) * kernel.dimension
    x = _as_offset(x)
    if len(x) != kernel.dimension:
        raise ConfigError(f"site {x} does not match dimension {kernel.dimension}")
    return x


def transition_probability(kernel: WalkKernel, t: float, x=None, tol: float = 1e-12) -> float:
    """``a_t(0, x)`` by uniformization (truncated Poisson mixture)."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if tol <= 0:
        raise DomainError("tol must be positive")
    vals, _ = _engine(kernel).values(np.array([float(t)]), _site(kernel, x), tol)
    return float(vals[0])


def transition_values(kernel: WalkKernel, ts, x=None, tol: float = 1e-12) -> np.ndarray:
    """Vectorised ``a_t(0, x)`` over an array of times."""
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return np.zeros(0)
    if np.any(ts < 0):
        raise DomainError("times must be nonnegative")
    vals, _ = _engine(kernel).values(ts.ravel(), _site(kernel, x), tol)
    return vals.reshape(ts.shape)


def return_probability(kernel: WalkKernel, ts, tol: float = 1e-12) -> np.ndarray:
    return transition_values(kernel, ts, None, tol)


def transition_field(kernel: WalkKernel, t: float, radius: int, tol: float = 1e-12):
    """``a_t(0, x)`` for all x in the cube of half-width ``radius``.

    Returns ``(array, error_bound)``; the array is indexed by ``x + radius``.
    """
    return _engine(kernel).field(float(t), int(radius), tol)


def gaussian_approx(Q, t: float, x=None) -> float:
    """Leading local-CLT term ``p_t(0, x)`` for covariance ``Q``."""
    if t <= 0:
        raise DomainError("t must be positive")
    if isinstance(Q, CovMatrix):
        entries, det, inv = Q.entries, Q.det, Q.inverse
    else:
        entries = np.atleast_2d(np.asarray(Q, dtype=float))
        det = float(np.linalg.det(entries))
        inv = np.linalg.inv(entries)
    d = entries.shape[0]
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float).reshape(d)
    quad = float(x @ inv @ x)
    return (2 * math.pi * t) ** (-d / 2) * det ** -0.5 * math.exp(-quad / (2 * t))


def norming(d: int, t: float) -> float:
    """Occupation-time norming ``h_d(t)``; natural log for d = 4."""
    if t <= 0:
        raise DomainError("t must be positive")
    if d == 3:
        return t ** 0.75
    if d == 4:
        if t <= 1:
            raise DomainError("h_4(t) requires t > 1")
        return math.sqrt(t * math.log(t))
    if d >= 5:
        return math.sqrt(t)
    raise DomainError(f"no norming defined for d={d}")


@dataclass(frozen=True)
class Norming:
    dimension: int

    def __call__(self, t: float) -> float:
        return norming(self.dimension, t)


def _laplace_moment(kernel: WalkKernel, x: tuple, lam: float, power: int,
                    t_cut: float | None, tol: float, t_cut_max: float = 2.0 ** 14) -> Estimate:
    """``int_0^inf t^power e^{-lam t} a_t(x, 0) dt`` with a local-CLT tail."""
    d = kernel.dimension
    Q = kernel.covariance
    if lam == 0 and d / 2.0 - power <= 1.0:
        if power == 0:
            raise RecurrentCase(f"Green function diverges for d={d}")
        raise DivergentIntegral(f"t^{power}-moment of a_t diverges for d={d}")
    xv = np.array(x, dtype=float)
    tc = float(t_cut) if t_cut else 64.0

    def integrand(ts):
        vals = transition_values(kernel, ts, x, tol=1e-13)
        return vals * ts ** power * np.exp(-lam * ts)

    while True:
        body, qerr = integrate(integrand, 0.0, tc, tol / 4)
        tail, tail_q = spi.quad(lambda t: t ** power * math.exp(-lam * t) * gaussian_approx(Q, t, xv),
                                tc, np.inf, epsabs=tol / 100, epsrel=1e-12, limit=200)
        a_tc = transition_probability(kernel, tc, x, tol=1e-13)
        rel = abs(a_tc / gaussian_approx(Q, tc, xv) - 1.0)
        err = qerr + tail_q + TAIL_SAFETY * tail * rel + 1e-13 * tc ** (power + 1)
        if err <= tol:
            return Estimate(body + tail, err)
        if tc >= t_cut_max:
            raise ToleranceNotReached(
                f"Green-type integral error {err:.2e} above tol {tol:.2e} at t_cut={tc}")
        tc *= 2.0


def green_values(kernel: WalkKernel, x=None, lam: float = 0.0,
                 t_cut: float | None = None, tol: float = 1e-4) -> Estimate:
    """Resolvent ``g_lam(x, 0)`` (Green function when ``lam == 0``)."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if tol <= 0:
        raise DomainError("tol must be positive")
    return _laplace_moment(kernel, _site(kernel, x), float(lam), 0, t_cut, tol)


def walk_integrals(kernel: WalkKernel, tol: float = 1e-4):
    """``(int a_u(0,0) du, int u a_u(0,0) du)`` as estimates; needs d >= 5."""
    origin = _site(kernel, None)
    return (_laplace_moment(kernel, origin, 0.0, 0, None, tol),
            _laplace_moment(kernel, origin, 0.0, 1, None, tol))


def killed_green(kernel: WalkKernel, x=None, t: float = 1.0, tol: float = 1e-10) -> Estimate:
    """``u_t(x, 0) = int_0^t a_s(x, 0) ds``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return Estimate(0.0, 0.0)
    x = _site(kernel, x)
    val, err = integrate(lambda s: transition_values(kernel, s, x, tol=1e-14), 0.0, float(t), tol)
    return Estimate(float(val), err)


def killed_green_field(kernel: WalkKernel, t: float, radius: int, tol: float = 1e-10):
    """``u_t(x, 0)`` on the cube of half-width ``radius``."""
    eng = _engine(kernel)
    val, err = integrate(lambda s: eng.fields(s, radius, 1e-14)[0], 0.0, float(t), tol)
    return val, err


def iterated_return_integral(kernel: WalkKernel, r: float, order: int, tol: float = 1e-9) -> Estimate:
    """``int_0^r (r-s)^(order-1)/(order-1)! a_s(0,0) ds`` (order-fold integral)."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    if r == 0:
        return Estimate(0.0, 0.0)
    fact = math.factorial(order - 1)

    def f(s):
        return (r - s) ** (order - 1) / fact * return_probability(kernel, s, tol=1e-14)

    val, err = integrate(f, 0.0, float(r), tol)
    return Estimate(float(val), err)


def clan_contribution(kernel: WalkKernel, T: float, init: str = "poisson", tol: float = 1e-6) -> Estimate:
    """Expected occupation contributed per clan up to horizon ``T``.

    ``int_0^T dt int_A^t ds a_{T+t-2s}(0,0)``; the inner integral is
    ``(U(T+t) - U(T-t))/2`` (Poisson, A = 0) or ``(g - U(T-t))/2``
    (equilibrium, A = -inf) with ``U(r) = u_r(0,0)``, and the outer integral
    of ``U`` is the twice-iterated return integral.
    """
    if T <= 0:
        raise DomainError("T must be positive")
    if init == "poisson":
        a = iterated_return_integral(kernel, 2 * T, 2, tol / 4)
        b = iterated_return_integral(kernel, T, 2, tol / 4)
        return Estimate(0.5 * (a.value - 2 * b.value), 0.5 * a.error + b.error)
    if init == "equilibrium":
        if kernel.dimension <= 2:
            raise DivergentIntegral("equilibrium clan integral diverges for d <= 2")
        g = green_values(kernel, tol=tol / (2 * T))
        b = iterated_return_integral(kernel, T, 2, tol / 4)
        return Estimate(0.5 * (g.value * T - b.value), 0.5 * (g.error * T + b.error))
    raise ConfigError(f"unknown init {init!r}")
