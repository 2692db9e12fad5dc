"""Random compositions of generators: stationary measures, random Lyapunov
exponents, rate of escape and the expansion lower bound."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULTS, TOL
from .core import (CirclePoint, Letter, MapFamily, NonGenericError, Word, compose_evaluate,
                   period_of)
from .measures import EmpiricalMeasure
from .psl2z import MobiusElement, ProjectiveDirection, lyapunov_expansion_estimate, random_direction


@dataclass
class StepDistribution:
    """i.i.d. step law: letters of a family with positive probabilities."""

    family: MapFamily
    support: list
    probabilities: np.ndarray

    def __post_init__(self):
        self.support = [l if isinstance(l, Letter) else Letter(l[0], bool(l[1])) for l in self.support]
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if not self.support or len(self.support) != len(self.probabilities):
            raise ValueError("support must be nonempty and match the probabilities")
        if np.any(self.probabilities <= 0):
            raise ValueError("probabilities must be positive")
        if abs(self.probabilities.sum() - 1.0) > TOL.probability_sum:
            raise ValueError("probabilities must sum to 1")
        self.maps = [self.family.map_for(l) for l in self.support]

    @classmethod
    def uniform(cls, family: MapFamily, letters=None) -> "StepDistribution":
        letters = family.letters() if letters is None else [Letter.parse(l) if isinstance(l, str) else l
                                                             for l in letters]
        return cls(family, letters, np.full(len(letters), 1.0 / len(letters)))

    @classmethod
    def point_mass(cls, family: MapFamily, letter) -> "StepDistribution":
        letter = Letter.parse(letter) if isinstance(letter, str) else letter
        return cls(family, [letter], np.array([1.0]))

    @property
    def chart(self) -> str:
        return self.family.chart

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if len(self.support) == 1:
            return np.zeros(shape, dtype=np.int64)
        return rng.choice(len(self.support), size=shape, p=self.probabilities)

    def apply(self, idx: np.ndarray, x: np.ndarray, logd: np.ndarray | None = None):
        """Apply the letter idx[t] to x[t] (in place on copies)."""
        x = np.array(x, dtype=float)
        for k, g in enumerate(self.maps):
            mask = idx == k
            if not np.any(mask):
                continue
            xs = x[mask]
            if logd is not None:
                logd[mask] += np.log(np.asarray(g.derivative(xs), dtype=float))
            x[mask] = np.asarray(g(xs), dtype=float)
        return x


@dataclass(frozen=True)
class WalkEstimate:
    value: float
    standard_error: float
    n_steps: int
    trials: int
    seed: int
    upper_bound: bool = False


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_forward(m: StepDistribution, n: int, x0, seed):
    """Trajectory x_0..x_n of g_n o ... o g_1 (x0) and its log-derivative."""
    rng = _rng(seed)
    idx = m.draw(rng, n) if n > 0 else np.zeros(0, dtype=np.int64)
    word = Word(tuple(m.support[int(k)] for k in idx))
    return compose_evaluate(word, m.family, x0)


def stationary_samples(m: StepDistribution, n: int, trials: int, seed, x0=None) -> np.ndarray:
    """Endpoints g_1 o g_2 o ... o g_n (x0) of backward compositions, one per trial.

    x0 = None draws independent uniform starts.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = _rng(seed)
    period = period_of(m.chart)
    if x0 is None:
        x = rng.random(trials) * period
    else:
        x = np.full(trials, float(x0.value if isinstance(x0, CirclePoint) else x0))
    idx = m.draw(rng, (n, trials))
    for step in range(n - 1, -1, -1):  # g_n acts first
        x = m.apply(idx[step], x)
    return np.mod(x, period)


def stationary_estimate(m: StepDistribution, n: int, trials: int, seed, x0=None,
                        bins: int = DEFAULTS.histogram_bins) -> EmpiricalMeasure:
    xs = stationary_samples(m, n, trials, seed, x0)
    return EmpiricalMeasure.from_samples(xs, bins, m.chart)


def forward_samples(m: StepDistribution, n: int, trials: int, seed, x0=None) -> np.ndarray:
    """Endpoints g_n o ... o g_1 (x0); same law as the backward endpoints."""
    rng = _rng(seed)
    period = period_of(m.chart)
    x = rng.random(trials) * period if x0 is None else np.full(trials, float(x0))
    idx = m.draw(rng, (n, trials))
    for step in range(n):
        x = m.apply(idx[step], x)
    return np.mod(x, period)


def stationarity_defect(m: StepDistribution, estimate: EmpiricalMeasure) -> float:
    """TV between the estimate and its m-averaged one-step pushforward."""
    if estimate.samples is None:
        raise ValueError("estimate must keep its samples")
    period, B = period_of(m.chart), estimate.bins
    pushed = np.zeros(B)
    for p, g in zip(m.probabilities, m.maps):
        y = np.mod(np.asarray(g(estimate.samples), dtype=float), period)
        idx = np.minimum((y / period * B).astype(np.int64), B - 1)
        pushed += p * np.bincount(idx, minlength=B)
    pushed /= pushed.sum()
    return 0.5 * float(np.sum(np.abs(pushed - estimate.frequencies())))


def random_lyapunov(m: StepDistribution, nu_hat, n: int, trials: int, seed) -> WalkEstimate:
    """Mean of (1/n) log (g_n o ... o g_1)'(x) with x ~ nu_hat.

    nu_hat is an EmpiricalMeasure or a fixed point (Dirac start).
    """
    rng = _rng(seed)
    if isinstance(nu_hat, EmpiricalMeasure):
        x = nu_hat.sample(rng, trials)
    else:
        x = np.full(trials, float(nu_hat.value if isinstance(nu_hat, CirclePoint) else nu_hat))
    logd = np.zeros(trials)
    for _ in range(n):
        x = m.apply(m.draw(rng, trials), x, logd)
    vals = logd / n
    se = float(np.std(vals, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return WalkEstimate(float(np.mean(vals)), se, n, trials, int(seed))


def _is_free(m: StepDistribution) -> bool:
    return m.family.name in ("G2",) or getattr(m.family, "free", False)


def reduced_lengths(m: StepDistribution, idx: np.ndarray) -> np.ndarray:
    """Free-group reduced length of the word given by letter indices (steps x trials)."""
    inv = np.array([m.support.index(l.inverted()) if l.inverted() in m.support else -1
                    for l in m.support])
    n, trials = idx.shape
    stack = np.full((trials, n + 1), -2, dtype=np.int64)
    top = np.zeros(trials, dtype=np.int64)
    rows = np.arange(trials)
    for step in range(n):
        k = idx[step]
        prev = stack[rows, np.maximum(top - 1, 0)]
        cancel = (top > 0) & (prev == inv[k])
        top = np.where(cancel, top - 1, top)
        push = ~cancel
        stack[rows[push], top[push]] = k[push]
        top = np.where(push, top + 1, top)
    return top


def rate_of_escape(m: StepDistribution, n: int, trials: int, seed, norm: str = "auto") -> WalkEstimate:
    """Mean word norm of n-step products divided by n.

    norm: 'reduced' (exact, free groups only), 'raw' (the sampled length,
    an upper bound) or 'auto'.
    """
    if norm == "auto":
        norm = "reduced" if _is_free(m) else "raw"
    if norm == "reduced" and not _is_free(m):
        raise ValueError("no exact word norm for this family; use norm='raw' (upper bound)")
    if norm == "raw":
        return WalkEstimate(1.0, 0.0, n, trials, int(seed), upper_bound=True)
    if norm != "reduced":
        raise ValueError(f"unknown norm {norm!r}")
    rng = _rng(seed)
    idx = m.draw(rng, (n, trials))
    vals = reduced_lengths(m, idx) / n
    se = float(np.std(vals, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return WalkEstimate(float(np.mean(vals)), se, n, trials, int(seed))


def stationary_directions(m: StepDistribution, n: int, count: int, seed, bits: int = 64) -> list:
    """Exact projective directions g_1 o ... o g_n (x0) with random x0."""
    if not all(isinstance(g, MobiusElement) for g in m.maps):
        raise TypeError("exact stationary directions need a Mobius family")
    rng = _rng(seed)
    py_rng = random.Random(int(rng.integers(0, 2 ** 63)))
    out = []
    for _ in range(count):
        x = random_direction(py_rng, bits)
        u, v = x.u, x.v
        for k in m.draw(rng, n)[::-1]:
            g = m.maps[int(k)]
            u, v = g.a * u + g.b * v, g.c * u + g.d * v
        out.append(ProjectiveDirection(u, v))
    return out


@dataclass
class BoundCheckParams:
    n_rd: int = 1000
    trials_rd: int = 1000
    n_escape: int = 1000
    trials_escape: int = 1000
    n_stationary: int = 200
    trials_stationary: int = 20000
    n_exp: int = 500
    samples_exp: int = 40
    v_scale: float = 1.0
    seed: int = 0


@dataclass
class BoundCheckReport:
    lambda_exp: float
    lambda_exp_se: float
    lambda_rd: float
    lambda_rd_se: float
    v: float
    v_se: float
    v_upper_bound: bool
    right_side: float
    combined_se: float
    passed: bool
    vacuous: bool


def _common_fixed_angle(m: StepDistribution):
    fixed = None
    for g in m.maps:
        if not isinstance(g, MobiusElement):
            return None
        angles = g.fixed_angles()
        if fixed is None:
            fixed = angles
        else:
            fixed = [a for a in fixed if any(abs(a - b) < 1e-12 for b in angles)]
    return fixed[0] if fixed else None


def expansion_bound_check(m: StepDistribution, params: BoundCheckParams | None = None) -> BoundCheckReport:
    """Compare the mean greedy expansion exponent at stationary points with |lambda_RD| / v."""
    p = params or BoundCheckParams()
    common = _common_fixed_angle(m)
    if common is not None:
        # all generators fix one direction: nu is Dirac there and both sides vanish
        rd = random_lyapunov(m, CirclePoint(common, m.chart), p.n_rd, min(p.trials_rd, 100), p.seed)
        v = rate_of_escape(m, p.n_escape, min(p.trials_escape, 100), p.seed + 1)
        vs = v.value * p.v_scale
        right = abs(rd.value) / vs if vs > 0 else 0.0
        return BoundCheckReport(0.0, 0.0, rd.value, rd.standard_error, vs, v.standard_error,
                                v.upper_bound, right, 0.0, True, True)
    nu = stationary_estimate(m, p.n_stationary, p.trials_stationary, p.seed)
    rd = random_lyapunov(m, nu, p.n_rd, p.trials_rd, p.seed + 1)
    v = rate_of_escape(m, p.n_escape, p.trials_escape, p.seed + 2)
    # stationary points as exact directions: about 2 n_exp reduced letters of history
    dirs = stationary_directions(m, 4 * p.n_exp, p.samples_exp, p.seed + 3)
    exps = []
    for x in dirs:
        try:
            exps.append(lyapunov_expansion_estimate(x, p.n_exp))
        except NonGenericError as err:
            raise NonGenericError(f"stationary sample left the generic set: {err}", err.step) from None
    exps = np.array(exps)
    lam = float(np.mean(exps))
    lam_se = float(np.std(exps, ddof=1) / math.sqrt(len(exps))) if len(exps) > 1 else 0.0
    vs = v.value * p.v_scale
    v_se = v.standard_error * p.v_scale
    right = abs(rd.value) / vs
    right_se = math.hypot(rd.standard_error / vs, abs(rd.value) * v_se / vs ** 2)
    comb = math.hypot(lam_se, right_se)
    return BoundCheckReport(lam, lam_se, rd.value, rd.standard_error, vs, v_se, v.upper_bound,
                            right, comb, bool(lam >= right - 2 * comb), False)
