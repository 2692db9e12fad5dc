"""Circle points, intervals, words and the common map interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import DEFAULTS, TOL

PERIODS = {"unit": 1.0, "projective": math.pi}


class ChartMismatch(ValueError):
    pass


class NonGenericError(ValueError):
    """Raised when a point falls on the non-generic set of an algorithm."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


def period_of(chart: str) -> float:
    try:
        return PERIODS[chart]
    except KeyError:
        raise ValueError(f"unknown chart {chart!r}") from None


def circular_difference(a, b, period):
    """Signed difference a - b reduced to [-period/2, period/2)."""
    d = np.mod(np.asarray(a, dtype=float) - b + period / 2, period) - period / 2
    return d if np.ndim(d) else float(d)


@dataclass(frozen=True)
class CirclePoint:
    value: float
    chart: str = "unit"

    def __post_init__(self):
        p = period_of(self.chart)
        v = math.fmod(float(self.value), p)
        if v < 0:
            v += p
        if v >= p:
            v = 0.0
        object.__setattr__(self, "value", v)

    @property
    def period(self) -> float:
        return PERIODS[self.chart]

    def to_chart(self, chart: str) -> "CirclePoint":
        if chart == self.chart:
            return self
        return CirclePoint(self.value * period_of(chart) / self.period, chart)

    @property
    def affine(self) -> float:
        """ctg of the angle (projective chart only)."""
        if self.chart != "projective":
            raise ChartMismatch("affine coordinate needs the projective chart")
        return math.cos(self.value) / math.sin(self.value)

    def distance(self, other: "CirclePoint") -> float:
        other = other.to_chart(self.chart)
        return abs(circular_difference(self.value, other.value, self.period))


@dataclass(frozen=True)
class CircleInterval:
    """Positively oriented arc starting at `left`."""

    left: CirclePoint
    right: CirclePoint

    def __post_init__(self):
        if self.right.chart != self.left.chart:
            object.__setattr__(self, "right", self.right.to_chart(self.left.chart))
        if not 0 < self.length < self.left.period:
            raise ValueError("degenerate interval")

    @classmethod
    def from_values(cls, a: float, b: float, chart: str = "unit") -> "CircleInterval":
        return cls(CirclePoint(a, chart), CirclePoint(b, chart))

    @classmethod
    def around(cls, center: CirclePoint, radius: float) -> "CircleInterval":
        return cls(CirclePoint(center.value - radius, center.chart),
                   CirclePoint(center.value + radius, center.chart))

    @property
    def chart(self) -> str:
        return self.left.chart

    @property
    def length(self) -> float:
        return (self.right.value - self.left.value) % self.left.period

    def contains(self, x: CirclePoint) -> bool:
        x = x.to_chart(self.chart)
        offset = (x.value - self.left.value) % self.left.period
        return offset <= self.length

    def grid(self, n: int) -> np.ndarray:
        """n points from left to right, unreduced (left + t * length)."""
        if n < 2:
            raise ValueError("grid needs at least two points")
        return self.left.value + np.linspace(0.0, self.length, n)


@dataclass(frozen=True)
class Letter:
    name: str
    inverse: bool = False

    def inverted(self) -> "Letter":
        return Letter(self.name, not self.inverse)

    def __str__(self):
        return self.name + ("^-1" if self.inverse else "")

    @classmethod
    def parse(cls, token: str) -> "Letter":
        if token.endswith("^-1"):
            return cls(token[:-3], True)
        return cls(token, False)


@dataclass(frozen=True)
class Word:
    """Generator symbols in order of application: f_n o ... o f_1."""

    symbols: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(
            s if isinstance(s, Letter) else Letter.parse(s) for s in self.symbols))

    @classmethod
    def parse(cls, text: str) -> "Word":
        tokens = text.replace(",", " ").split()
        return cls(tuple(Letter.parse(t) for t in tokens))

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.symbols[item])
        return self.symbols[item]

    def __add__(self, other: "Word") -> "Word":
        return Word(self.symbols + other.symbols)

    def __str__(self):
        return " ".join(str(s) for s in self.symbols)

    def inverse(self) -> "Word":
        return Word(tuple(s.inverted() for s in reversed(self.symbols)))

    def reduced(self) -> "Word":
        stack = []
        for s in self.symbols:
            if stack and stack[-1] == s.inverted():
                stack.pop()
            else:
                stack.append(s)
        return Word(tuple(stack))

    def power(self, k: int) -> "Word":
        return Word(self.symbols * k) if k >= 0 else self.inverse().power(-k)


class CircleMap:
    """Orientation-preserving circle map acting on a chart coordinate.

    Subclasses implement `__call__`, `derivative` and `inverse`; both
    should accept floats or numpy arrays.
    """

    chart: str | None = "unit"

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x, side=None):
        raise NotImplementedError

    def inverse(self) -> "CircleMap":
        raise NotImplementedError

    def log_derivative(self, x):
        return np.log(self.derivative(x))

    def log_derivative_slope(self, x, h: float = 1e-6):
        """(log f')' by a central difference; subclasses may override."""
        x = np.asarray(x, dtype=float)
        return (np.log(self.derivative(x + h)) - np.log(self.derivative(x - h))) / (2 * h)

    def act(self, point):
        raise ChartMismatch(f"{type(self).__name__} has no exact action on {type(point).__name__}")


class Identity(CircleMap):
    chart = None

    def __call__(self, x):
        return x

    def derivative(self, x, side=None):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def inverse(self):
        return self

    def log_derivative_slope(self, x, h=1e-6):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def act(self, point):
        return point

    def exact_derivative(self, point):
        return Fraction(1)


@dataclass(frozen=True)
class Rotation(CircleMap):
    angle: float
    chart: str = "unit"

    def __call__(self, x):
        return np.mod(np.asarray(x, dtype=float) + self.angle, period_of(self.chart)) if np.ndim(x) \
            else (float(x) + self.angle) % period_of(self.chart)

    def derivative(self, x, side=None):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def inverse(self):
        return Rotation(-self.angle, self.chart)

    def log_derivative_slope(self, x, h=1e-6):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0


class FunctionMap(CircleMap):
    """A map given by explicit callables; used for local models such as x -> 2x."""

    def __init__(self, f: Callable, df: Callable, finv: Callable | None = None,
                 chart: str = "unit", name: str = "map", d2f: Callable | None = None,
                 reduce: bool = False):
        self.f, self.df, self.finv, self.d2f = f, df, finv, d2f
        self.chart = chart
        self.name = name
        self.reduce = reduce

    def __call__(self, x):
        y = self.f(x)
        return np.mod(y, period_of(self.chart)) if self.reduce else y

    def derivative(self, x, side=None):
        return self.df(x)

    def log_derivative_slope(self, x, h=1e-6):
        if self.d2f is None:
            return super().log_derivative_slope(x, h)
        return self.d2f(x) / self.df(x)

    def inverse(self):
        if self.finv is None:
            raise NotImplementedError(f"{self.name} has no inverse")
        f, df, finv = self.f, self.df, self.finv
        return FunctionMap(finv, lambda y: 1.0 / df(finv(y)), f, self.chart, self.name + "^-1",
                           reduce=self.reduce)

    def __repr__(self):
        return f"FunctionMap({self.name})"


def affine_map(slope: float, offset: float = 0.0, chart: str = "unit") -> FunctionMap:
    return FunctionMap(lambda x: slope * np.asarray(x, dtype=float) + offset,
                       lambda x: slope * np.ones_like(np.asarray(x, dtype=float)),
                       lambda y: (np.asarray(y, dtype=float) - offset) / slope,
                       chart=chart, name=f"affine({slope})", d2f=lambda x: 0 * np.asarray(x, dtype=float))


class MapFamily:
    """Named generators together with a bound C_F on |(log f')'|."""

    def __init__(self, generators: dict, c_family: float | None = None, name: str = "family",
                 grid: int = DEFAULTS.c_family_grid, safety: float = DEFAULTS.c_family_safety,
                 sample_interval: tuple | None = None):
        self.generators = dict(generators)
        self.name = name
        self._inverses = {}
        charts = {g.chart for g in self.generators.values() if g.chart is not None}
        if len(charts) > 1:
            raise ChartMismatch(f"generators use several charts: {charts}")
        self.chart = charts.pop() if charts else "unit"
        self.sample_interval = sample_interval
        self._c_family = c_family
        self._grid, self._safety = grid, safety

    @property
    def c_family(self) -> float:
        """C_F, sampled on first use when not given explicitly."""
        if self._c_family is None:
            self._c_family = self._safety * self.sampled_slope_bound(self._grid)
        return self._c_family

    def map_for(self, letter: Letter) -> CircleMap:
        try:
            g = self.generators[letter.name]
        except KeyError:
            raise KeyError(f"unknown generator {letter.name!r}") from None
        if not letter.inverse:
            return g
        if letter.name not in self._inverses:
            self._inverses[letter.name] = g.inverse()
        return self._inverses[letter.name]

    def letters(self, with_inverses: bool = True) -> list:
        out = []
        for name in self.generators:
            out.append(Letter(name))
            if with_inverses:
                out.append(Letter(name, True))
        return out

    def sampled_slope_bound(self, grid: int) -> float:
        if self.sample_interval is None:
            xs = np.linspace(0.0, period_of(self.chart), grid, endpoint=False)
        else:
            xs = np.linspace(self.sample_interval[0], self.sample_interval[1], grid)
        best = 0.0
        for letter in self.letters():
            vals = np.abs(np.asarray(self.map_for(letter).log_derivative_slope(xs), dtype=float))
            best = max(best, float(np.max(vals)))
        return best

    def verify_c_family(self, grid: int) -> bool:
        return self.sampled_slope_bound(grid) <= self.c_family

    def apply_word(self, word: Word, xs):
        """Vectorized image and log-derivative of the word at the points xs."""
        xs = np.asarray(xs, dtype=float)
        logd = np.zeros_like(xs)
        for letter in word:
            g = self.map_for(letter)
            logd = logd + np.log(g.derivative(xs))
            xs = np.asarray(g(xs), dtype=float)
        return xs, logd


class WordMap(CircleMap):
    """The composition f_n o ... o f_1 of a word, evaluated step by step."""

    def __init__(self, word: Word, family: MapFamily):
        self.word, self.family = word, family
        self.chart = family.chart

    def __call__(self, x):
        return self.family.apply_word(self.word, x)[0]

    def log_derivative(self, x):
        return self.family.apply_word(self.word, x)[1]

    def derivative(self, x, side=None):
        return np.exp(self.log_derivative(x))

    def inverse(self):
        return WordMap(self.word.inverse(), self.family)

    def __repr__(self):
        return f"WordMap({self.word})"


def _check_chart(map_: CircleMap, x: CirclePoint):
    if map_.chart is not None and x.chart != map_.chart:
        raise ChartMismatch(f"point in chart {x.chart!r}, map in chart {map_.chart!r}")


def evaluate(map_: CircleMap, x):
    """Image of x; exact for exact point types."""
    if not isinstance(x, CirclePoint):
        return map_.act(x)
    _check_chart(map_, x)
    return CirclePoint(float(map_(x.value)), x.chart)


def derivative(map_: CircleMap, x, side=None) -> float:
    if not isinstance(x, CirclePoint):
        return float(map_.exact_derivative(x))
    _check_chart(map_, x)
    return float(map_.derivative(x.value, side=side)) if side is not None else float(map_.derivative(x.value))


def exact_log(q) -> float:
    """log of a positive Fraction with big numerator/denominator."""
    return math.log(q.numerator) - math.log(q.denominator)


def compose_evaluate(word: Word, family: MapFamily, x):
    """Trajectory x_0..x_n and log (f_n o ... o f_1)'(x) by the chain rule."""
    trajectory = [x]
    logd = 0.0
    for letter in word:
        g = family.map_for(letter)
        if isinstance(x, CirclePoint):
            _check_chart(g, x)
            logd += math.log(float(g.derivative(x.value)))
            x = CirclePoint(float(g(x.value)), x.chart)
        else:
            logd += exact_log(g.exact_derivative(x))
            x = g.act(x)
        trajectory.append(x)
    return trajectory, logd
