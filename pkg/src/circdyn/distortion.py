"""Distortion coefficient and norm, and the sum-type distortion estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import DEFAULTS, TOL
from .core import (CircleInterval, CircleMap, CirclePoint, MapFamily, Word, WordMap,
                   circular_difference, period_of)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class DistortionReport:
    kappa: float
    eta: float
    bound: float
    slack: float


@dataclass(frozen=True)
class RadiusReport:
    delta: float
    kappa_bound: float
    measured_kappa: float
    S: float


def _log_derivative_samples(map_: CircleMap, xs: np.ndarray) -> np.ndarray:
    L = np.asarray(map_.log_derivative(xs), dtype=float)
    if not np.all(np.isfinite(L)):
        raise ValueError("derivative is not positive and finite on the interval")
    return L


def _polish(map_: CircleMap, xs, L, i, sign):
    """Refine a grid extremum of sign*log F' inside the neighbouring cells."""
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    if hi <= lo:
        return L[i]
    f = lambda t: -sign * float(np.asarray(map_.log_derivative(np.array([t])))[0])
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14 * max(1.0, abs(lo)) + (hi - lo) * 1e-10})
    val = -res.fun * sign
    return max(L[i], val) if sign > 0 else min(L[i], val)


def log_derivative_range(map_: CircleMap, interval: CircleInterval, grid: int,
                         polish: bool = True):
    """(min, max) of log F' over the interval."""
    if grid < 2:
        raise ValueError("grid must be at least 2")
    xs = interval.grid(grid)
    L = _log_derivative_samples(map_, xs)
    imax, imin = int(np.argmax(L)), int(np.argmin(L))
    hi, lo = L[imax], L[imin]
    if polish:
        hi = _polish(map_, xs, L, imax, 1)
        lo = _polish(map_, xs, L, imin, -1)
    return lo, hi


def distortion_coefficient(map_: CircleMap, interval: CircleInterval,
                           grid: int = DEFAULTS.distortion_grid, polish: bool = True) -> float:
    """log(max F' / min F') on the interval."""
    lo, hi = log_derivative_range(map_, interval, grid, polish)
    return float(hi - lo)


def distortion_norm(map_: CircleMap, interval: CircleInterval,
                    grid: int = DEFAULTS.distortion_grid) -> float:
    """sup |log F'(x) - log F'(y)| / |F(x) - F(y)| over sampled pairs.

    For a pair the quotient is an average of the adjacent-pair quotients
    in between, so adjacent pairs already realize the supremum.
    """
    xs = interval.grid(grid)
    L = _log_derivative_samples(map_, xs)
    Fx = np.asarray(map_(xs), dtype=float)
    period = period_of(interval.chart)
    dF = np.abs(circular_difference(Fx[1:], Fx[:-1], period))
    dL = np.abs(np.diff(L))
    ok = dF > 0
    return float(np.max(dL[ok] / dF[ok])) if np.any(ok) else 0.0


def image_interval(map_: CircleMap, interval: CircleInterval) -> CircleInterval:
    chart = interval.chart
    left = CirclePoint(float(map_(interval.left.value)), chart)
    right = CirclePoint(float(map_(interval.right.value)), chart)
    out = CircleInterval(left, right)
    if out.length > period_of(chart) / 2:
        raise ValueError("image interval exceeds half of the circle")
    return out


def orbit_intervals(word: Word, family: MapFamily, interval: CircleInterval) -> list:
    """[I_0, I_1, ..., I_n] with I_i = f_i o ... o f_1 (I)."""
    if interval.length > period_of(interval.chart) / 2:
        raise ValueError("interval exceeds half of the circle")
    out = [interval]
    for letter in word:
        out.append(image_interval(family.map_for(letter), out[-1]))
    return out


def check_sum_bound(word: Word, family: MapFamily, interval: CircleInterval,
                    grid: int = DEFAULTS.distortion_grid) -> DistortionReport:
    """kappa(F_n; I) against C_F * sum_{i<n} |I_i|."""
    if len(word) == 0:
        return DistortionReport(0.0, 0.0, 0.0, 0.0)
    intervals = orbit_intervals(word, family, interval)
    bound = family.c_family * sum(I.length for I in intervals[:-1])
    F = WordMap(word, family)
    kappa = distortion_coefficient(F, interval, grid)
    eta = distortion_norm(F, interval, grid)
    return DistortionReport(kappa, eta, bound, bound - kappa)


def prefix_derivatives(word: Word, family: MapFamily, x0: float) -> np.ndarray:
    """F_i'(x0) for i = 0..n (F_0 the identity)."""
    out = [1.0]
    x, logd = float(x0), 0.0
    for letter in word:
        g = family.map_for(letter)
        logd += float(g.log_derivative(x))
        x = float(g(x))
        out.append(math.exp(logd))
    return np.array(out)


def local_distortion_radius(x0: CirclePoint, word: Word, family: MapFamily,
                            grid: int = DEFAULTS.distortion_grid) -> RadiusReport:
    """Radius delta = log 2 / (2 C_F S) with S = sum_{i<n} F_i'(x0)."""
    if len(word) == 0:
        raise ValueError("word must be nonempty")
    with np.errstate(over="raise"):
        try:
            ders = prefix_derivatives(word, family, x0.value)
        except (OverflowError, FloatingPointError):
            raise OverflowError("derivative overflows double range") from None
    S = float(np.sum(ders[:-1]))
    if not math.isfinite(S):
        raise OverflowError("derivative overflows double range")
    delta = LOG2 / (2 * family.c_family * S)
    U = CircleInterval.around(x0, delta / 2)
    measured = distortion_coefficient(WordMap(word, family), U, grid)
    return RadiusReport(delta, 2 * family.c_family * S * delta, measured, S)


@dataclass
class BranchScan:
    branches: list = field(default_factory=list)  # (k, J_k, min_derivative, kappa)
    k0: int | None = None
    kappa_bound: float = 0.0


class _Power(CircleMap):
    def __init__(self, f: CircleMap, k: int):
        self.f, self.k, self.chart = f, k, f.chart

    def __call__(self, x):
        for _ in range(self.k):
            x = self.f(x)
        return x

    def log_derivative(self, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for _ in range(self.k):
            acc = acc + np.log(self.f.derivative(x))
            x = self.f(x)
        return acc

    def derivative(self, x, side=None):
        return np.exp(self.log_derivative(x))


def fixed_point_return_branches(map_: CircleMap, x0: CirclePoint, a: CirclePoint, b: CirclePoint,
                                k_max: int, grid: int = 400) -> BranchScan:
    """Branches J_k = f^{-k}([a, b]) of the first entry into J near the fixed point x0."""
    x0v, av, bv = x0.value, a.value, b.value
    scale = max(1.0, abs(bv))
    if abs(float(map_(x0v)) - x0v) > 1e-12 * scale:
        raise ValueError("x0 is not fixed")
    xs = np.linspace(x0v, av, grid)[1:]
    if np.any(np.asarray(map_(xs)) <= xs):
        raise ValueError("map is not above the diagonal on (x0, a]")
    if abs(float(map_(av)) - bv) > 1e-9 * scale:
        raise ValueError("map does not send a to b")
    sample = np.linspace(x0v, bv, 10 * grid)
    c = DEFAULTS.c_family_safety * float(np.max(np.abs(map_.log_derivative_slope(sample))))
    scan = BranchScan(kappa_bound=c * (bv - x0v))
    if k_max <= 0:
        return scan
    finv = map_.inverse()
    left, right = av, bv
    for k in range(1, k_max + 1):
        left, right = float(finv(left)), float(finv(right))
        J = CircleInterval.from_values(left, right, x0.chart)
        lo, hi = log_derivative_range(_Power(map_, k), J, grid)
        scan.branches.append((k, J, math.exp(lo), hi - lo))
    k0 = None
    for k, _, mind, _ in reversed(scan.branches):
        if mind >= 2.0:
            k0 = k
        else:
            break
    scan.k0 = k0
    return scan
