"""Exact dyadic piecewise-linear circle homeomorphisms (Thompson's group T)."""

from __future__ import annotations

import bisect
import math
import re
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

from .core import CircleMap

_DYADIC = re.compile(r"^(-?\d+)/2\^(\d+)$")


def parse_dyadic(token: str) -> Fraction:
    m = _DYADIC.match(token.strip())
    if not m:
        raise ValueError(f"not a dyadic rational of the form p/2^k: {token!r}")
    return Fraction(int(m.group(1)), 2 ** int(m.group(2)))


def format_dyadic(q: Fraction) -> str:
    k = q.denominator.bit_length() - 1
    return f"{q.numerator}/2^{k}"


def is_dyadic(q: Fraction) -> bool:
    d = q.denominator
    return d & (d - 1) == 0


def _power_of_two_exponent(q: Fraction) -> int:
    n, d = q.numerator, q.denominator
    if n <= 0 or n & (n - 1) or d & (d - 1):
        raise ValueError(f"slope {q} is not a power of 2")
    return (n.bit_length() - 1) - (d.bit_length() - 1)


class ThompsonElement(CircleMap):
    """Lift-normalized PL map: breakpoints xs[0] = 0 < ... < 1 with lift
    values ys (ys[0] in [0, 1)) and slopes 2^e between them."""

    chart = "unit"

    def __init__(self, xs, ys):
        xs = [Fraction(x) for x in xs]
        ys = [Fraction(y) for y in ys]
        if not xs or xs[0] != 0:
            raise ValueError("breakpoints must start at 0")
        shift = math.floor(ys[0])
        ys = [y - shift for y in ys]
        exps = []
        for i in range(len(xs)):
            x1 = xs[i + 1] if i + 1 < len(xs) else Fraction(1)
            y1 = ys[i + 1] if i + 1 < len(ys) else ys[0] + 1
            if x1 <= xs[i] or y1 <= ys[i]:
                raise ValueError("breakpoints and images must increase")
            exps.append(_power_of_two_exponent((y1 - ys[i]) / (x1 - xs[i])))
        for q in xs + ys:
            if not is_dyadic(q):
                raise ValueError(f"{q} is not dyadic")
        # merge breakpoints where the slope does not change (0 is kept)
        keep = [0] + [i for i in range(1, len(xs)) if exps[i] != exps[i - 1]]
        self.xs = tuple(xs[i] for i in keep)
        self.ys = tuple(ys[i] for i in keep)
        self.exponents = tuple(exps[i] for i in keep)
        self._fx = np.array([float(x) for x in self.xs])

    # exact structure
    def __eq__(self, other):
        return isinstance(other, ThompsonElement) and self.xs == other.xs and self.ys == other.ys

    def __hash__(self):
        return hash((self.xs, self.ys))

    def __repr__(self):
        pieces = ", ".join(f"{format_dyadic(x)}->{format_dyadic(y % 1)}" for x, y in zip(self.xs, self.ys))
        return f"ThompsonElement({pieces})"

    @classmethod
    def identity(cls):
        return cls([0], [0])

    @classmethod
    def from_pieces(cls, pieces):
        """pieces: list of (start, image_of_start mod 1, slope_exponent)."""
        pieces = list(pieces)
        starts = [Fraction(p[0]) for p in pieces]
        if starts[0] != 0:
            raise ValueError("first piece must start at 0")
        ys = [Fraction(pieces[0][1])]
        for i in range(1, len(pieces)):
            y = ys[-1] + Fraction(2) ** pieces[i - 1][2] * (starts[i] - starts[i - 1])
            if (y - Fraction(pieces[i][1])) % 1 != 0:
                raise ValueError(f"piece {i} is not continuous with the previous one")
            ys.append(y)
        end = ys[-1] + Fraction(2) ** pieces[-1][2] * (1 - starts[-1])
        if end != ys[0] + 1:
            raise ValueError("pieces do not close up to a degree-one map")
        return cls(starts, ys)

    @property
    def slopes(self):
        return tuple(Fraction(2) ** e for e in self.exponents)

    def _piece(self, t: Fraction) -> int:
        return bisect.bisect_right(self.xs, t) - 1

    def lift(self, x: Fraction) -> Fraction:
        k = math.floor(x)
        t = x - k
        i = self._piece(t)
        return self.ys[i] + Fraction(2) ** self.exponents[i] * (t - self.xs[i]) + k

    def apply(self, x: Fraction) -> Fraction:
        return self.lift(Fraction(x)) % 1

    def inverse_lift(self, y: Fraction) -> Fraction:
        k = math.floor(y - self.ys[0])
        t = y - k
        i = bisect.bisect_right(self.ys, t) - 1
        return self.xs[i] + (t - self.ys[i]) / Fraction(2) ** self.exponents[i] + k

    def compose(self, other: "ThompsonElement") -> "ThompsonElement":
        """self o other."""
        pts = set(other.xs)
        pts.update(other.inverse_lift(x) % 1 for x in self.xs)
        pts.add(Fraction(0))
        xs = sorted(pts)
        return ThompsonElement(xs, [self.lift(other.lift(x)) for x in xs])

    __matmul__ = compose

    def inverse(self) -> "ThompsonElement":
        pts = {y % 1 for y in self.ys}
        pts.add(Fraction(0))
        xs = sorted(pts)
        return ThompsonElement(xs, [self.inverse_lift(x) for x in xs])

    def breakpoints(self):
        return tuple(x for x, i in zip(self.xs, range(len(self.xs)))
                     if i > 0 or self.exponents[0] != self.exponents[-1])

    # float interface
    def __call__(self, x):
        xa = np.mod(np.asarray(x, dtype=float), 1.0)
        idx = np.searchsorted(self._fx, xa, side="right") - 1
        ys = np.array([float(y) for y in self.ys])
        sl = np.array([2.0 ** e for e in self.exponents])
        out = np.mod(ys[idx] + sl[idx] * (xa - self._fx[idx]), 1.0)
        return out if np.ndim(x) else float(out)

    def derivative(self, x, side=None):
        xa = np.mod(np.asarray(x, dtype=float), 1.0)
        bps = np.array([float(b) for b in self.breakpoints()])
        if side is None and np.any(np.isin(xa, bps)):
            raise ValueError("derivative at a breakpoint needs side='left' or 'right'")
        idx = np.searchsorted(self._fx, xa, side="right") - 1
        if side == "left":
            at = np.isin(xa, self._fx)
            idx = np.where(at, (idx - 1) % len(self.xs), idx)
        out = np.array([2.0 ** e for e in self.exponents])[idx]
        return out if np.ndim(x) else float(out)

    def log_derivative_slope(self, x, h=None):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def standard_pieces(self):
        """Standard dyadic pieces (l, j, k, i): [j/2^l, (j+1)/2^l) maps affinely
        onto [i/2^k, (i+1)/2^k)."""
        return _standard_pieces(self)


@lru_cache(maxsize=4096)
def _standard_pieces(f: ThompsonElement):
    out = []
    bounds = list(f.xs) + [Fraction(1)]
    for p_idx in range(len(f.xs)):
        p, q = bounds[p_idx], bounds[p_idx + 1]
        e = f.exponents[p_idx]
        stack = []
        # maximal standard dyadic intervals covering [p, q)
        t = p
        while t < q:
            l = 0
            while (t * 2 ** l).denominator != 1 or t + Fraction(1, 2 ** l) > q:
                l += 1
            stack.append((l, int(t * 2 ** l)))
            t += Fraction(1, 2 ** l)
        work = list(reversed(stack))
        while work:
            l, j = work.pop()
            k = l - e
            y0 = f.lift(Fraction(j, 2 ** l)) % 1
            if k >= 0 and (y0 * 2 ** k).denominator == 1:
                out.append((l, j, k, int(y0 * 2 ** k)))
            else:
                work.append((l + 1, 2 * j + 1))
                work.append((l + 1, 2 * j))
    return tuple(out)


def load_generators(path=None) -> dict:
    """Read the generator table; returns name -> ThompsonElement."""
    if path is None:
        text = resources.files("circdyn").joinpath("data/thompson_generators.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out, name, pieces = {}, None, []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("element"):
            if name is not None:
                out[name] = ThompsonElement.from_pieces(pieces)
            name, pieces = line.split()[1], []
            continue
        a, b, e = line.split()
        pieces.append((parse_dyadic(a), parse_dyadic(b), int(e)))
    if name is not None:
        out[name] = ThompsonElement.from_pieces(pieces)
    return out


def word_element(word, generators: dict) -> ThompsonElement:
    out = ThompsonElement.identity()
    for letter in word:
        g = generators[letter.name]
        out = (g.inverse() if letter.inverse else g) @ out
    return out
