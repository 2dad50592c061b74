"""Seeded generators for the benchmark systems and their closed-form oracles.

Seeding
-------
One root seed drives every generator. Each noise stream ``k`` of a system
gets its own ``numpy`` bit generator seeded by ``SeedSequence(seed,
spawn_key=(k,))``, so adding a column (a new stream index) never changes
the existing ones. Gaussian variates are produced by inverse-CDF transform
(``scipy.special.ndtri``) of 53-bit uniforms from that stream.

Stream numbers used per family:

=================  ====================================================
hidden-source      0: h, 1: target noise, 1+i: noise of driver i
suppressor         0-2: x1..x3, 3: target noise
coupled-ar         0: xi1, 1: xi2, 2: linear target z, 3: product target w
redundant-triplet  0: h, 1: target noise, 2-3: noise of x1, x2, 4: x3
network            0-1: hidden sources, 2-9: variable noise, 10-12: extra
=================  ====================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .data import TimeSeriesSet
from .exceptions import ConfigError, InfeasibleAmplitude, NonstationaryParameters

FAMILIES = ("hidden-source", "suppressor", "coupled-ar", "redundant-triplet", "network")


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian(seed: int, stream: int, size) -> np.ndarray:
    """Standard normal draws of one noise stream (inverse-CDF method)."""
    u = (stream_rng(seed, stream).integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / 2.0**53
    return ndtri(u)


def coupling(a: float, b: float) -> float:
    """Stationary cross-correlation of the symmetric coupled AR pair."""
    return 2 * a * b / (1 - a * a - b * b)


def _check_stationary(a, b):
    if not (abs(a + b) < 1 and abs(a - b) < 1):
        raise NonstationaryParameters(f"|a+b| and |a-b| must be < 1 (a={a}, b={b})")
    C = coupling(a, b)
    sigma2 = 1 - a * a - b * b - 2 * a * b * C
    if not sigma2 > 0:
        raise NonstationaryParameters(f"innovation variance {sigma2} is not positive")
    return C, sigma2


def gen_hidden_source(n: int, s: float, T: int, seed: int, target_noise: float | None = None) -> TimeSeriesSet:
    """``n`` noisy copies of a hidden white source and a target seeing it later.

    ``x_i(t) = h(t-1) + s eta_i(t)`` and ``w(t) = h(t-2) + s' eta_0(t)`` with
    ``s' = s`` unless ``target_noise`` is given. ``h`` itself is not returned.
    """
    if n < 1 or not s > 0:
        raise ConfigError("need n >= 1 and s > 0")
    s0 = s if target_noise is None else target_noise
    h = gaussian(seed, 0, T + 2)
    cols = [h[1 : T + 1] + s * gaussian(seed, 1 + i, T) for i in range(1, n + 1)]
    cols.append(h[:T] + s0 * gaussian(seed, 1, T))
    labels = [f"x{i}" for i in range(1, n + 1)] + ["w"]
    return TimeSeriesSet(np.column_stack(cols), labels, {"family": "hidden-source", "n": n, "s": s, "seed": seed})


def gen_suppressor(rho: float, T: int, seed: int) -> TimeSeriesSet:
    """Three white drivers and ``x4(t) = 0.1 (x1 + x2 + eta)(t-1..t) + rho x2(t-1) x3(t-1)``."""
    if rho < 0:
        raise ConfigError("rho must be >= 0")
    x1, x2, x3 = (gaussian(seed, k, T + 1) for k in range(3))
    eta = gaussian(seed, 3, T + 1)
    x4 = np.zeros(T + 1)
    x4[1:] = 0.1 * (x1[:-1] + x2[:-1] + eta[1:]) + rho * x2[:-1] * x3[:-1]
    values = np.column_stack([x1, x2, x3, x4])[1:]
    return TimeSeriesSet(values, ["x1", "x2", "x3", "x4"], {"family": "suppressor", "rho": rho, "seed": seed})


def gen_coupled_ar(a: float, b: float, T: int, seed: int, burn_in: int = 1000) -> TimeSeriesSet:
    """Symmetric coupled AR(1) pair ``x, y`` with unit stationary variance.

    The recursion runs on ``u = x + y`` and ``v = x - y``, which decouple
    into scalar AR(1) processes with coefficients ``a + b`` and ``a - b``.
    One extra pre-sample is kept in ``meta`` so targets driven by the pair
    can be started in the stationary regime.
    """
    if burn_in < 1000:
        raise ConfigError("burn_in must be >= 1000")
    C, sigma2 = _check_stationary(a, b)
    sigma = math.sqrt(sigma2)
    N = burn_in + T + 1
    e1, e2 = gaussian(seed, 0, N), gaussian(seed, 1, N)
    e1[0] = e2[0] = 0.0
    u = lfilter([1.0], [1.0, -(a + b)], sigma * (e1 + e2))
    v = lfilter([1.0], [1.0, -(a - b)], sigma * (e1 - e2))
    x, y = (u + v) / 2, (u - v) / 2
    start = burn_in + 1
    meta = {
        "family": "coupled-ar", "a": a, "b": b, "C": C, "seed": seed,
        "presample": [float(x[start - 1]), float(y[start - 1])],
    }
    return TimeSeriesSet(np.column_stack([x[start:], y[start:]]), ["x", "y"], meta)


def _pair_info(pair: TimeSeriesSet, seed, C):
    C = pair.meta.get("C") if C is None else C
    seed = pair.meta.get("seed") if seed is None else seed
    if C is None or seed is None:
        raise ConfigError("pass C and seed explicitly for pairs not made by gen_coupled_ar")
    x, y = pair.column("x"), pair.column("y")
    px, py = pair.meta.get("presample", (0.0, 0.0))
    xs = np.concatenate([[px], x[:-1]])
    ys = np.concatenate([[py], y[:-1]])
    return C, seed, xs, ys


def append_linear_target(pair: TimeSeriesSet, A: float, seed: int | None = None, C: float | None = None) -> TimeSeriesSet:
    """Append ``z(t+1) = A (x(t) + y(t)) + sigma' xi(t+1)`` with unit variance."""
    C, seed, xs, ys = _pair_info(pair, seed, C)
    var_noise = 1 - 2 * A * A * (1 + C)
    if not var_noise > 0:
        raise InfeasibleAmplitude(f"1 - 2 A^2 (1 + C) = {var_noise} <= 0")
    z = A * (xs + ys) + math.sqrt(var_noise) * gaussian(seed, 2, pair.T)
    return pair.with_columns(z, ["z"], A=A)


def append_product_target(pair: TimeSeriesSet, B: float, seed: int | None = None, C: float | None = None) -> TimeSeriesSet:
    """Append ``w(t+1) = B x(t) y(t) + sigma'' xi(t+1)``.

    The noise scale is ``sigma'' = sqrt(1 - B^2 (1 + 2C)^2)``. Note that the
    resulting variance is ``1 - B^2 (4C + 3C^2)``, not one, since
    ``var(x y) = 1 + C^2`` for unit Gaussians with correlation ``C``.
    """
    C, seed, xs, ys = _pair_info(pair, seed, C)
    var_noise = 1 - B * B * (1 + 2 * C) ** 2
    if not var_noise > 0:
        raise InfeasibleAmplitude(f"1 - B^2 (1 + 2C)^2 = {var_noise} <= 0")
    w = B * xs * ys + math.sqrt(var_noise) * gaussian(seed, 3, pair.T)
    return pair.with_columns(w, ["w"], B=B)


def product_target_variance(B: float, C: float) -> float:
    return B * B * (1 + C * C) + 1 - B * B * (1 + 2 * C) ** 2


def gen_redundant_triplet(T: int, seed: int) -> TimeSeriesSet:
    """Two noisy copies of a hidden source, one pure-noise driver, and a target."""
    h = gaussian(seed, 0, T + 2)
    x1 = h[1 : T + 1] + 0.5 * gaussian(seed, 2, T)
    x2 = h[1 : T + 1] + 0.5 * gaussian(seed, 3, T)
    x3 = gaussian(seed, 4, T)
    w = h[:T] + 0.1 * gaussian(seed, 1, T)
    return TimeSeriesSet(np.column_stack([x1, x2, x3, w]), ["x1", "x2", "x3", "w"], {"family": "redundant-triplet", "seed": seed})


NETWORK_LABELS = ("a1", "a2", "wa", "b1", "b2", "wb", "s1", "s2", "s3", "s4", "e1", "e2")


def gen_network(T: int, seed: int, rho: float = 1.0, s: float = 0.5, target_noise: float = 0.1) -> TimeSeriesSet:
    """Twelve-variable benchmark with planted redundancy and synergy.

    Two hidden sources each feed a redundant pair (``a1, a2`` and ``b1, b2``)
    and, one step later, a target (``wa`` and ``wb``). ``s1..s4`` are the
    suppressor system, where ``s2, s3`` form the synergetic pair, and
    ``e1, e2`` are pure noise.
    """
    T1 = T + 2
    cols = {}
    for k, tag in enumerate("ab"):
        h = gaussian(seed, k, T1)
        cols[f"{tag}1"] = h[1 : T + 1] + s * gaussian(seed, 2 + 3 * k, T)
        cols[f"{tag}2"] = h[1 : T + 1] + s * gaussian(seed, 3 + 3 * k, T)
        cols[f"w{tag}"] = h[:T] + target_noise * gaussian(seed, 4 + 3 * k, T)
    x1, x2, x3 = (gaussian(seed, 8 + k, T + 1) for k in range(3))
    eta = gaussian(seed, 11, T + 1)
    x4 = np.zeros(T + 1)
    x4[1:] = 0.1 * (x1[:-1] + x2[:-1] + eta[1:]) + rho * x2[:-1] * x3[:-1]
    cols.update(s1=x1[1:], s2=x2[1:], s3=x3[1:], s4=x4[1:])
    cols["e1"] = gaussian(seed, 12, T)
    cols["e2"] = gaussian(seed, 13, T)
    meta = {
        "family": "network", "seed": seed, "rho": rho, "s": s,
        "redundant_pairs": [["a1", "a2"], ["b1", "b2"]], "synergetic_pair": ["s2", "s3"],
    }
    return TimeSeriesSet(np.column_stack([cols[k] for k in NETWORK_LABELS]), NETWORK_LABELS, meta)


@dataclass(frozen=True)
class GeneratorSpec:
    """Family name plus parameters; ``params`` holds family-specific reals."""

    family: str
    T: int = 1000
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.T < 10:
            raise ConfigError("T must be >= 10")

    @classmethod
    def from_mapping(cls, mapping) -> "GeneratorSpec":
        mapping = dict(mapping)
        family = mapping.pop("family", None)
        if family is None:
            raise ConfigError("generator spec needs a 'family'")
        T = int(mapping.pop("T", 1000))
        seed = int(mapping.pop("seed", 0))
        params = {}
        for k, v in mapping.items():
            try:
                params[k] = float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"parameter {k}={v!r} is not numeric") from None
        return cls(family, T, seed, params)

    def generate(self) -> TimeSeriesSet:
        p = dict(self.params)
        known = {
            "hidden-source": {"n", "s", "target_noise"},
            "suppressor": {"rho"},
            "coupled-ar": {"a", "b", "A", "B", "burn_in"},
            "redundant-triplet": set(),
            "network": {"rho", "s", "target_noise"},
        }[self.family]
        unknown = set(p) - known
        if unknown:
            raise ConfigError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        if self.family == "hidden-source":
            tn = p.get("target_noise")
            return gen_hidden_source(int(p.get("n", 2)), p.get("s", 0.5), self.T, self.seed, tn)
        if self.family == "suppressor":
            return gen_suppressor(p.get("rho", 1.0), self.T, self.seed)
        if self.family == "coupled-ar":
            ts = gen_coupled_ar(p.get("a", 0.4), p.get("b", 0.3), self.T, self.seed, int(p.get("burn_in", 1000)))
            if "A" in p:
                ts = append_linear_target(ts, p["A"])
            if "B" in p:
                ts = append_product_target(ts, p["B"])
            return ts
        if self.family == "redundant-triplet":
            return gen_redundant_triplet(self.T, self.seed)
        return gen_network(self.T, self.seed, p.get("rho", 1.0), p.get("s", 0.5), p.get("target_noise", 0.1))


# --- closed-form oracles ------------------------------------------------------


def oracle_psi_linear(A: float, C: float) -> float:
    """Reference closed form ``A^2 (C + C^2)`` for the linear target."""
    if not abs(C) < 1:
        raise ConfigError("|C| must be < 1")
    return A * A * (C + C * C)


def oracle_psi_product(B: float, C: float) -> float:
    """Reference closed form ``B^2 (4 C^2 - 1)`` for the product target."""
    if not abs(C) < 1:
        raise ConfigError("|C| must be < 1")
    return B * B * (4 * C * C - 1)


def exact_psi_linear(a: float, b: float, A: float, target_past: bool = True) -> float:
    """Population synergy index of the linear target at ``m = 1``.

    Computed by solving the normal equations on the exact stationary
    covariance of ``(x_t, y_t, z_t, z_{t+1})``. Without the target's past
    this reduces to ``2 A^2 (C + C^2)``.
    """
    C, _ = _check_stationary(a, b)
    S0 = np.array([[1.0, C], [C, 1.0]])
    M = np.array([[a, b], [b, a]])
    one = np.ones(2)
    lag1 = M @ S0  # cov(s_t, s_{t-1})
    V = np.eye(4)
    V[:2, :2] = S0
    V[:2, 2] = V[2, :2] = A * lag1 @ one
    V[:2, 3] = V[3, :2] = A * S0 @ one
    V[2, 3] = V[3, 2] = A * A * one @ lag1 @ one

    def eps(idx):
        idx = list(idx) + ([2] if target_past else [])
        if not idx:
            return V[3, 3]
        s = V[idx, 3]
        return V[3, 3] - s @ np.linalg.solve(V[np.ix_(idx, idx)], s)

    return float(eps([]) - eps([0]) - eps([1]) + eps([0, 1]))
