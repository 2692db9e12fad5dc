"""Batch experiments: each returns (rows, summary, passed) for the CLI and
the acceptance suite."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import CircleInterval, CirclePoint, Letter, NonGenericError, Word, WordMap
from .distortion import (LOG2, check_sum_bound, distortion_coefficient, image_interval,
                         local_distortion_radius, orbit_intervals, prefix_derivatives)
from .expansion import (G2Policy, PhiPolicy, distortion_expandable_scan, expand_neighborhood,
                        ratio_identity_defect)
from .gs import (default_phi, ne_probe, nonminimal_phi, remark_phi, standard_realizations,
                 time_average_concentration)
from .measures import build_gs_conformal, build_psl_conformal, conformality_defect
from .psl2z import (F1, F2, brute_force_max, g2_family, generic_lyapunov_estimate,
                    greedy_word, occupation_fraction, random_direction)
from .random_walk import (BoundCheckParams, StepDistribution, expansion_bound_check, random_lyapunov,
                          rate_of_escape, stationarity_defect, stationary_estimate)


@dataclass
class Result:
    rows: list
    summary: dict = field(default_factory=dict)
    passed: bool = True


def _phi(name: str):
    table = {"default": default_phi, "remark": remark_phi}
    if name not in table:
        raise ValueError(f"unknown phi {name!r}; choose from {sorted(table)}")
    return table[name]()


def generic_direction(rng: random.Random, n: int):
    """Random direction that stays generic for n greedy steps."""
    while True:
        x = random_direction(rng, 64 + 2 * n)
        try:
            greedy_word(x, n)
            return x
        except NonGenericError:
            continue


# PSL(2, Z)

def greedy_vs_brute(n: int = 10, samples: int = 100, seed: int = 0) -> Result:
    rng = random.Random(seed)
    rows = []
    for s in range(samples):
        x = generic_direction(rng, n)
        ok = True
        for k in range(1, n + 1):
            word, _ = brute_force_max(x, k)
            ok &= word == greedy_word(x, k)
        rows.append({"sample": s, "direction": f"{x.angle:.17g}", "n": n,
                     "greedy": str(greedy_word(x, n)), "match": ok})
    passed = all(r["match"] for r in rows)
    return Result(rows, {"matches": sum(r["match"] for r in rows)}, passed)


def lyapunov_decay(samples: int = 50, n_small: int = 100, n_large: int = 10_000, seed: int = 0) -> Result:
    rng = random.Random(seed)
    rows = []
    for s in range(samples):
        x = random_direction(rng, 64 + 2 * n_large)
        rows.append({"sample": s, "direction": f"{x.angle:.17g}",
                     "estimate_small": generic_lyapunov_estimate(rng, n_small, direction=x),
                     "estimate_large": generic_lyapunov_estimate(rng, n_large, direction=x)})
    small = float(np.median([r["estimate_small"] for r in rows]))
    large = float(np.median([r["estimate_large"] for r in rows]))
    summary = {"median_small": small, "median_large": large, "ratio": large / small}
    return Result(rows, summary, bool(large > 0 and small > 0 and large < 0.5 * small))


def _occupation(fn, starts, n_small, n_large, eps, threshold, min_count):
    small = fn(starts, n_small, eps)
    large = fn(starts, n_large, eps)
    rows = [{"start": f"{x:.17g}", "fraction_small": float(a), "fraction_large": float(b),
             "increased": bool(b > a)} for x, a, b in zip(starts, small, large)]
    count = int(np.sum(large > small))
    med = float(np.median(large))
    summary = {"increased": count, "median_large": med, "threshold": threshold, "required": min_count}
    return Result(rows, summary, bool(count >= min_count and med > threshold))


def psl_occupation(starts: int = 100, n_small: int = 1000, n_large: int = 1_000_000, eps: float = 0.05,
                   threshold: float = 0.70, min_count: int = 90, seed: int = 0) -> Result:
    xs = np.random.default_rng(seed).random(starts)
    return _occupation(occupation_fraction, xs, n_small, n_large, eps, threshold, min_count)


def thompson_occupation(phi: str = "default", starts: int = 100, n_small: int = 1000,
                        n_large: int = 1_000_000, eps: float = 0.05, threshold: float = 0.70,
                        min_count: int = 90, seed: int = 0) -> Result:
    f = _phi(phi)
    xs = np.random.default_rng(seed).random(starts)
    fn = lambda x, n, e: time_average_concentration(f, x, n, e)
    return _occupation(fn, xs, n_small, n_large, eps, threshold, min_count)


def psl_conformal_defect(delta: float = 1.5, radius: int = 50) -> Result:
    mu = build_psl_conformal(delta, radius)
    rows = []
    for name, g in (("f1", F1), ("f1^-1", F1.inverse()), ("f2", F2), ("f2^-1", F2.inverse())):
        rep = conformality_defect(mu, g, delta)
        rows.append({"generator": name, **asdict(rep)})
    worst = max(r["max_relative_defect"] for r in rows)
    summary = {"atoms": len(mu), "total": mu.total, "tail_bound": mu.tail_bound, "max_defect": worst}
    return Result(rows, summary, bool(worst < 1e-12 and all(r["exact"] for r in rows)))


def gs_conformal_defect(delta: float = 1.5, depth: int = 12) -> Result:
    phi = nonminimal_phi()
    mu = build_gs_conformal(phi, delta, depth)
    rows = []
    for name, g in standard_realizations(phi).items():
        for gg, label in ((g, name), (g.inverse(), name + "^-1")):
            rep = conformality_defect(mu, gg, delta)
            rows.append({"generator": label, **asdict(rep)})
    worst = max(r["max_relative_defect"] for r in rows)
    summary = {"atoms": len(mu), "partial_sum": mu.total, "C": mu.truncation["C"], "max_defect": worst}
    return Result(rows, summary, bool(worst < 1e-6))


# Thompson / GS

def thompson_ne_probe(x: float = 0.0, depth: int = 6, phi: str = "default") -> Result:
    val = ne_probe(x, depth, _phi(phi))
    rows = [{"x": x, "depth": depth, "max_derivative": val}]
    dist = abs((x + 0.5) % 1.0 - 0.5)
    if dist == 0:
        passed = val <= 1 + 1e-9
    elif dist >= 0.05 and depth >= 4:
        passed = val > 1
    else:
        passed = True
    return Result(rows, {"max_derivative": val}, passed)


# random walks

def _walk(family: str, letters: str | None):
    if family != "g2":
        raise ValueError(f"unknown family {family!r}")
    fam = g2_family(c_family=0.0)
    if letters:
        return StepDistribution.uniform(fam, [Letter.parse(t) for t in letters.split(",")])
    return StepDistribution.uniform(fam)


def walk_stationary(n: int = 200, trials: int = 1_000_000, bins: int = 1024, seed: int = 0,
                    family: str = "g2", letters: str | None = None, max_defect: float = 0.03) -> Result:
    m = _walk(family, letters)
    est = stationary_estimate(m, n, trials, seed, bins=bins)
    defect = stationarity_defect(m, est)
    width = est.period / est.bins
    rows = [{"bin": i, "left": i * width, "count": int(c)} for i, c in enumerate(est.counts)]
    return Result(rows, {"stationarity_defect": defect}, bool(defect < max_defect))


def walk_lyapunov(n: int = 1000, trials: int = 1000, seed: int = 0, family: str = "g2",
                  letters: str | None = None, stationary_n: int = 200,
                  stationary_trials: int = 100_000) -> Result:
    m = _walk(family, letters)
    nu = stationary_estimate(m, stationary_n, stationary_trials, seed)
    est = random_lyapunov(m, nu, n, trials, seed + 1)
    lo, hi = est.value - 1.96 * est.standard_error, est.value + 1.96 * est.standard_error
    rows = [{"value": est.value, "standard_error": est.standard_error, "ci_low": lo, "ci_high": hi,
             "n": n, "trials": trials}]
    return Result(rows, {"value": est.value}, bool(hi < 0))


def walk_escape(n: int = 1000, trials: int = 1000, seed: int = 0, family: str = "g2",
                letters: str | None = None) -> Result:
    m = _walk(family, letters)
    est = rate_of_escape(m, n, trials, seed)
    rows = [{"value": est.value, "standard_error": est.standard_error, "upper_bound": est.upper_bound,
             "n": n, "trials": trials}]
    return Result(rows, {"value": est.value}, True)


def walk_bound_check(seed: int = 0, family: str = "g2", letters: str | None = None,
                     v_scale: float = 1.0, n_exp: int = 500, samples_exp: int = 40) -> Result:
    m = _walk(family, letters)
    rep = expansion_bound_check(m, BoundCheckParams(seed=seed, v_scale=v_scale, n_exp=n_exp,
                                                    samples_exp=samples_exp))
    return Result([asdict(rep)], asdict(rep), rep.passed)


# expansion

def expand_scan(points: int = 100, M: str = "1e3,1e4", seed: int = 0, policy: str = "g2") -> Result:
    grid = [float(t) for t in str(M).split(",")]
    if policy == "g2":
        rng = random.Random(seed)
        pts = [random_direction(rng, 256) for _ in range(points)]
        pol = G2Policy()
    elif policy == "phi":
        pts = list(np.random.default_rng(seed).uniform(0.05, 0.95, points))
        pol = PhiPolicy()
    else:
        raise ValueError(f"unknown policy {policy!r}")
    rows = [asdict(r) for r in distortion_expandable_scan(pts, grid, pol)]
    cs = [r["C"] for r in rows if r["C"] is not None]
    summary = {"max_C": max(cs) if cs else None, "marked_ne": sum(r["status"] == "ne" for r in rows)}
    return Result(rows, summary, True)


def expansion_mechanics(points: int = 100, M_values=(1e3, 1e4), seed: int = 0) -> Result:
    """Neighbourhood expansion on random G2 points."""
    rng = random.Random(seed)
    pol = G2Policy()
    rows = []
    for s in range(points):
        x = random_direction(rng, 256)
        for M in M_values:
            t = expand_neighborhood(x, M, policy=pol)
            rows.append({"sample": s, "M": M, "length": len(t.word), "derivative": t.derivative,
                         "ratio": t.ratio, "eps": t.eps, "V": t.neighborhood.length,
                         "V_bound": 2 * t.eps / M, "kappa": t.kappa, "kappa_inverse": t.kappa_inverse,
                         "ratio_defect": ratio_identity_defect(t)})
    ok = all(r["kappa"] <= LOG2 + 1e-6 and r["V"] <= r["V_bound"] and r["ratio_defect"] <= 1e-9
             and r["derivative"] >= r["M"] for r in rows)
    return Result(rows, {"max_kappa": max(r["kappa"] for r in rows),
                         "max_ratio": max(r["ratio"] for r in rows)}, ok)


# distortion

def _random_case(rng: random.Random, family, max_len: int = 8):
    """Random reduced G2 word and a short interval whose images stay small."""
    letters = family.letters()
    while True:
        n = rng.randint(1, max_len)
        word = []
        while len(word) < n:
            l = rng.choice(letters)
            if word and l == word[-1].inverted():
                continue
            word.append(l)
        word = Word(tuple(word))
        length = 10 ** rng.uniform(-4, -2)
        left = rng.uniform(0, math.pi)
        I = CircleInterval.from_values(left, left + length, "projective")
        try:
            ints = orbit_intervals(word, family, I)
        except ValueError:
            continue
        if max(J.length for J in ints) < 0.5:
            return word, I, ints


def distortion_suite(cases: int = 1000, seed: int = 0, grid: int = 1000) -> Result:
    """Subadditivity, derivative sandwich, length-sum bound, sum bound and
    the local radius bound on random (word, interval) cases."""
    rng = random.Random(seed)
    family = g2_family()
    CF = family.c_family
    rows = []
    for case in range(cases):
        word, I, ints = _random_case(rng, family)
        n = len(word)
        # subadditivity over a random split
        k = rng.randint(0, n)
        f, g = word[:k], word[k:]
        whole = distortion_coefficient(WordMap(word, family), I, grid)
        kf = distortion_coefficient(WordMap(f, family), I, grid) if len(f) else 0.0
        kg = distortion_coefficient(WordMap(g, family), ints[k], grid) if len(g) else 0.0
        rows.append({"case": case, "check": "subadditivity", "slack": kf + kg - whole})
        # sandwich at a random point of I
        x0 = I.left.value + rng.random() * I.length
        ders = prefix_derivatives(word, family, x0)
        lengths = np.array([J.length for J in ints])
        partial = np.concatenate([[0.0], np.cumsum(lengths[:-1])])
        gap = CF * partial - np.abs(np.log(ders * I.length / lengths))
        rows.append({"case": case, "check": "sandwich", "slack": float(np.min(gap))})
        # length sum
        rhs = I.length * math.exp(CF * float(np.sum(lengths[:-1]))) * float(np.sum(ders))
        rows.append({"case": case, "check": "length_sum", "slack": rhs - float(np.sum(lengths))})
        # sum bound
        rep = check_sum_bound(word, family, I, grid)
        rows.append({"case": case, "check": "sum_bound", "slack": rep.slack})
        # local radius
        rad = local_distortion_radius(CirclePoint(x0, "projective"), word, family, grid)
        rows.append({"case": case, "check": "radius", "slack": LOG2 - rad.measured_kappa})
    worst = min(r["slack"] for r in rows)
    return Result(rows, {"min_slack": worst, "c_family": CF}, bool(worst >= -1e-9))
