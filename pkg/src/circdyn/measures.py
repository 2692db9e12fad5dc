"""Atomic and empirical measures on the circle, conformal measures for the
PSL(2,Z) and non-minimal Ghys-Sergiescu examples, and related probes."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import DEFAULTS, TOL
from .core import CircleMap, CirclePoint, MapFamily, exact_log, period_of
from .gs import GSRealization, SmoothDoubling, gap_tree
from .psl2z import MobiusElement, ProjectiveDirection, circle_derivative
from .thompson import ThompsonElement, format_dyadic, parse_dyadic


@dataclass(frozen=True)
class GSAtom:
    """Point of the preimage tree of x+, addressed by its dyadic label."""

    label: Fraction
    position: float

    def __eq__(self, other):
        return isinstance(other, GSAtom) and self.label == other.label

    def __hash__(self):
        return hash(("gs", self.label))

    def __str__(self):
        return f"{format_dyadic(self.label)}@{self.position!r}"

    @classmethod
    def parse(cls, text: str) -> "GSAtom":
        lab, pos = text.split("@")
        return cls(parse_dyadic(lab), float(pos))


def _position(point) -> float:
    if isinstance(point, ProjectiveDirection):
        return point.angle
    if isinstance(point, GSAtom):
        return point.position
    if isinstance(point, CirclePoint):
        return point.value
    return float(point)


def _format_point(point) -> str:
    if isinstance(point, ProjectiveDirection):
        return str(point)
    if isinstance(point, GSAtom):
        return str(point)
    return repr(float(point))


def _parse_point(text: str):
    if "@" in text:
        return GSAtom.parse(text)
    if ":" in text:
        return ProjectiveDirection.parse(text)
    return float(text)


@dataclass
class AtomicMeasure:
    """Unnormalized weighted point masses with truncation metadata."""

    atoms: dict
    chart: str = "unit"
    delta: float | None = None
    truncation: dict = field(default_factory=dict)
    tail_bound: float | None = None
    total: float = 0.0

    def __post_init__(self):
        for w in self.atoms.values():
            if not w > 0:
                raise ValueError("atom weights must be positive")
        self.total = math.fsum(self.atoms.values())

    def __len__(self):
        return len(self.atoms)

    def weight(self, point) -> float:
        return self.atoms.get(point, 0.0)

    def normalized(self) -> dict:
        return {p: w / self.total for p, w in self.atoms.items()}

    def positions(self):
        pts = list(self.atoms)
        return np.array([_position(p) for p in pts]), np.array([self.atoms[p] for p in pts])

    def mass(self, center, eps: float, normalized: bool = True) -> float:
        """Mass of the closed arc of radius eps about center."""
        pos, w = self.positions()
        period = period_of(self.chart)
        c = _position(center)
        d = np.abs(np.mod(pos - c + period / 2, period) - period / 2)
        m = float(np.sum(w[d <= eps]))
        return m / self.total if normalized else m

    def pushforward(self, g: CircleMap) -> "AtomicMeasure":
        out = {}
        for p, w in self.atoms.items():
            q = g.act(p) if not isinstance(p, float) else float(g(p))
            out[q] = out.get(q, 0.0) + w
        return AtomicMeasure(out, self.chart, self.delta, dict(self.truncation), self.tail_bound)

    # serialization
    def to_text(self) -> str:
        lines = ["# atomic-measure", f"# chart {self.chart}", f"# delta {self.delta!r}"]
        for k, v in self.truncation.items():
            lines.append(f"# truncation {k} {v!r}")
        lines.append(f"# tail_bound {self.tail_bound!r}")
        lines.append(f"# total {self.total!r}")
        lines += [f"{_format_point(p)} {w!r}" for p, w in self.atoms.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AtomicMeasure":
        chart, delta, trunc, tail, atoms = "unit", None, {}, None, {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[0] == "chart":
                    chart = parts[1]
                elif parts[0] == "delta":
                    delta = None if parts[1] == "None" else float(parts[1])
                elif parts[0] == "truncation":
                    trunc[parts[1]] = _literal(parts[2])
                elif parts[0] == "tail_bound":
                    tail = None if parts[1] == "None" else float(parts[1])
                continue
            p, w = line.rsplit(None, 1)
            atoms[_parse_point(p)] = float(w)
        return cls(atoms, chart, delta, trunc, tail)


def _literal(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass
class EmpiricalMeasure:
    """Histogram on B equal arcs of the circle; raw samples optionally kept."""

    counts: np.ndarray
    chart: str = "unit"
    samples: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def period(self) -> float:
        return period_of(self.chart)

    @classmethod
    def from_samples(cls, values, bins: int = DEFAULTS.histogram_bins, chart: str = "unit",
                     keep_samples: bool = True) -> "EmpiricalMeasure":
        period = period_of(chart)
        v = np.mod(np.asarray(values, dtype=float), period)
        idx = np.minimum((v / period * bins).astype(np.int64), bins - 1)
        counts = np.bincount(idx, minlength=bins)
        return cls(counts, chart, v if keep_samples else None)

    @classmethod
    def uniform(cls, bins: int = DEFAULTS.histogram_bins, chart: str = "unit") -> "EmpiricalMeasure":
        return cls(np.ones(bins, dtype=np.int64), chart)

    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def tv_distance(self, other: "EmpiricalMeasure") -> float:
        if self.bins != other.bins or self.chart != other.chart:
            raise ValueError("histograms must share bins and chart")
        return 0.5 * float(np.sum(np.abs(self.frequencies() - other.frequencies())))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw from the stored samples, or uniformly inside weighted bins."""
        if self.samples is not None and len(self.samples):
            return self.samples[rng.integers(0, len(self.samples), size)]
        idx = rng.choice(self.bins, size=size, p=self.frequencies())
        return (idx + rng.random(size)) * (self.period / self.bins)

    def mass(self, center, eps: float, normalized: bool = True) -> float:
        """Mass of the arc of radius eps about center (bins split proportionally)."""
        period, B = self.period, self.bins
        c = _position(center)
        if self.samples is not None and len(self.samples):
            d = np.abs(np.mod(self.samples - c + period / 2, period) - period / 2)
            m = float(np.count_nonzero(d <= eps))
            return m / len(self.samples) if normalized else m
        width = period / B
        lo, hi = c - eps, c + eps
        # overlap of [lo, hi] with every bin, unrolled over the covering periods
        m = 0.0
        for shift in range(math.floor(lo / period), math.floor(hi / period) + 1):
            starts = shift * period + np.arange(B) * width
            ov = np.clip(np.minimum(starts + width, hi) - np.maximum(starts, lo), 0.0, None)
            m += float(np.sum(ov / width * self.counts))
        return m / self.total if normalized else m


# conformal measures

def _psl_tail_bound(delta: float, R: int) -> float:
    """Bound on the sum of |v|^{-2 delta} over primitive directions with |v| > R.

    Directions with |v| in (r, r+1] number at most 3 pi (1 + sqrt 2)(r + 1) / 2
    (integer points of the half annulus, each owning a unit square inside the
    enlarged annulus); summing against r^{-2 delta} and comparing with the
    integral gives the two terms.
    """
    K = max(1, int(math.floor(R)))
    c = 1.5 * math.pi * (1 + math.sqrt(2))
    return c * (K ** (1 - 2 * delta) + K ** (2 - 2 * delta) / (2 * delta - 2))


def psl_directions(R: int):
    """Primitive directions (u:v) with u^2 + v^2 <= R^2."""
    R = int(R)
    out = []
    for v in range(0, R + 1):
        for u in range(-R, R + 1):
            if u * u + v * v > R * R or math.gcd(u, v) != 1:
                continue
            if v == 0 and u != 1:
                continue
            out.append(ProjectiveDirection(u, v))
    return out


def build_psl_conformal(delta: float, R: int) -> AtomicMeasure:
    if not delta > 1:
        raise ValueError("delta must exceed 1 for the sum to converge")
    if R < 1:
        raise ValueError("R must be at least 1")
    atoms = {x: float(x.norm2) ** (-delta) for x in psl_directions(R)}
    return AtomicMeasure(atoms, "projective", delta, {"radius": int(R)}, _psl_tail_bound(delta, R))


def build_gs_conformal(phi_nm: SmoothDoubling, delta: float, depth: int) -> AtomicMeasure:
    if not delta >= 1:
        raise ValueError("delta must be at least 1")
    tree = gap_tree(phi_nm, depth)
    w = tree.weight_base ** (-delta)
    atoms = {GSAtom(q, float(y)): float(wi) for q, y, wi in zip(tree.labels(), tree.y, w)}
    meta = {"depth": int(depth), "C": float(tree.C)}
    return AtomicMeasure(atoms, "unit", delta, meta, None)


@dataclass(frozen=True)
class ConformalityReport:
    delta: float
    max_relative_defect: float
    atoms_checked: int
    atoms_skipped_boundary: int
    exact: bool | None = None


def _image_and_derivative(point, g):
    """Image atom key and g'(point); exact for exact point types."""
    if isinstance(point, ProjectiveDirection):
        return g.act(point), g.exact_derivative(point)
    if isinstance(point, GSAtom):
        if isinstance(g, GSRealization):
            lab, pos, der = g.evaluate_dyadic(point.label)
            return GSAtom(lab, pos), der
        if hasattr(g, "exact_derivative"):
            return point, g.exact_derivative(point)
        raise TypeError("map cannot act on dyadic atoms")
    x = float(point)
    return float(g(x)), float(g.derivative(x))


def conformality_defect(mu: AtomicMeasure, g: CircleMap, delta: float) -> ConformalityReport:
    """max |w(gx) - w(x) g'(x)^delta| / w(gx) over atoms whose image is an atom."""
    worst, checked, skipped = 0.0, 0, 0
    exact = None
    for x, wx in mu.atoms.items():
        gx, der = _image_and_derivative(x, g)
        if gx not in mu.atoms:
            skipped += 1
            continue
        checked += 1
        wg = mu.atoms[gx]
        if isinstance(der, Fraction):
            # with w = |v|^{-2 delta}, conformality is the integer identity
            # |x|^2 = g'(x) |gx|^2
            if isinstance(x, ProjectiveDirection):
                ok = der * gx.norm2 == x.norm2
                exact = ok if exact is None else (exact and ok)
            val = wx * math.exp(delta * exact_log(der)) if der != 1 else wx
        else:
            val = wx * float(der) ** delta
        worst = max(worst, abs(wg - val) / wg)
    return ConformalityReport(float(delta), worst, checked, skipped, exact)


def density_ratio(mu1, mu2, x, eps_sequence) -> list:
    """mu1(U_eps(x)) / mu2(U_eps(x)) for each eps; None marks 0/0."""
    eps_sequence = list(eps_sequence)
    if any(b > a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise ValueError("eps_sequence must be decreasing")
    out = []
    for eps in eps_sequence:
        a, b = mu1.mass(x, eps), mu2.mass(x, eps)
        if b == 0:
            out.append(None if a == 0 else math.inf)
        else:
            out.append(a / b)
    return out


# conservativity probe

@dataclass
class ConservativityProfile:
    delta: float
    lengths: list
    partial_sums: list
    counts: list
    unit_derivative_counts: list

    @property
    def growth(self) -> str:
        """'growing' when the last shell still adds at least 1% of the sum."""
        if len(self.partial_sums) < 2:
            return "bounded"
        inc = self.partial_sums[-1] - self.partial_sums[-2]
        return "growing" if inc >= 0.01 * self.partial_sums[-1] else "bounded"


def _exact_key(g):
    if isinstance(g, GSRealization):
        return g.element
    if isinstance(g, (MobiusElement, ThompsonElement)):
        return g
    raise TypeError("exact deduplication needs Mobius or Thompson elements")


def conservativity_probe(family: MapFamily, delta: float, x, word_cap: int,
                         dedup_cap: int = DEFAULTS.dedup_cap) -> ConservativityProfile:
    """Partial sums of g'(x)^delta over distinct elements of word length <= cap."""
    gens = []
    for letter in family.letters():
        gens.append(family.map_for(letter))
    keys = [_exact_key(g) for g in gens]
    exact_point = isinstance(x, ProjectiveDirection)
    xf = None if exact_point else _position(x)

    ident = MobiusElement.identity() if isinstance(keys[0], MobiusElement) else ThompsonElement.identity()
    # frontier entries: (key, image point, log derivative, unit flag)
    seen = {ident}
    frontier = [(ident, x if exact_point else xf, 0.0, True)]
    total = 1.0
    lengths, sums, counts, units = [0], [1.0], [1], [1]
    for length in range(1, word_cap + 1):
        nxt = []
        for key, pt, logd, _ in frontier:
            for g, gk in zip(gens, keys):
                new = gk @ key
                if new in seen:
                    continue
                seen.add(new)
                if len(seen) > dedup_cap:
                    raise MemoryError("dedup storage cap exceeded")
                if exact_point:
                    d = circle_derivative(new, x)
                    nlog, unit, npt = exact_log(d), d == 1, None
                else:
                    if isinstance(g, GSRealization):
                        gv, gd = g.evaluate(pt)
                    else:
                        gv, gd = float(g(pt)), float(g.derivative(pt))
                    nlog = logd + math.log(gd)
                    unit, npt = abs(nlog) <= 1e-12, gv
                nxt.append((new, npt, nlog, unit))
        frontier = nxt
        shell = math.fsum(math.exp(delta * e[2]) for e in frontier)
        total += shell
        lengths.append(length)
        sums.append(total)
        counts.append(len(frontier))
        units.append(units[-1] + sum(1 for e in frontier if e[3]))
    return ConservativityProfile(float(delta), lengths, sums, counts, units)
