"""Exact PSL(2,Z) arithmetic on the projective line, greedy expansion and
the quotient interval map phi_tilde."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import bisect

from .config import DEFAULTS, TOL
from .core import (CircleMap, CirclePoint, Letter, MapFamily, NonGenericError, Word,
                   exact_log)

HALF_PI = math.pi / 2
QUARTER_PI = math.pi / 4


def _scaled_floats(*ints):
    """Convert big integers to floats after a common power-of-two shift."""
    top = max(abs(int(n)).bit_length() for n in ints)
    shift = max(0, top - 900)
    return tuple(float(int(n) >> shift) if n >= 0 else -float((-int(n)) >> shift) for n in ints)


@dataclass(frozen=True)
class ProjectiveDirection:
    """Coprime integer vector (u, v) up to sign: v > 0, or (1, 0)."""

    u: int
    v: int

    def __post_init__(self):
        u, v = int(self.u), int(self.v)
        if u == 0 and v == 0:
            raise ValueError("zero vector has no direction")
        g = math.gcd(u, v)
        u, v = u // g, v // g
        if v < 0 or (v == 0 and u < 0):
            u, v = -u, -v
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def norm2(self) -> int:
        return self.u * self.u + self.v * self.v

    @property
    def angle(self) -> float:
        u, v = _scaled_floats(self.u, self.v)
        return math.atan2(v, u) % math.pi

    def to_point(self) -> CirclePoint:
        return CirclePoint(self.angle, "projective")

    def __str__(self):
        return f"{self.u}:{self.v}"

    @classmethod
    def parse(cls, text: str) -> "ProjectiveDirection":
        u, v = text.split(":")
        return cls(int(u), int(v))


class MobiusElement(CircleMap):
    """Integer matrix [[a, b], [c, d]] of determinant 1, modulo sign."""

    chart = "projective"
    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        a, b, c, d = int(a), int(b), int(c), int(d)
        if a * d - b * c != 1:
            raise ValueError("determinant must be 1")
        first = next(e for e in (a, b, c, d) if e != 0)
        if first < 0:
            a, b, c, d = -a, -b, -c, -d
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def __setattr__(self, key, value):
        raise AttributeError("MobiusElement is immutable")

    @property
    def entries(self):
        return (self.a, self.b, self.c, self.d)

    def __eq__(self, other):
        return isinstance(other, MobiusElement) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"MobiusElement[[{self.a}, {self.b}], [{self.c}, {self.d}]]"

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    def compose(self, other: "MobiusElement") -> "MobiusElement":
        """self o other."""
        a, b, c, d = self.entries
        p, q, r, s = other.entries
        return MobiusElement(a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)

    __matmul__ = compose

    def inverse(self) -> "MobiusElement":
        return MobiusElement(self.d, -self.b, -self.c, self.a)

    # exact action
    def act(self, x: ProjectiveDirection) -> ProjectiveDirection:
        return ProjectiveDirection(self.a * x.u + self.b * x.v, self.c * x.u + self.d * x.v)

    def exact_derivative(self, x: ProjectiveDirection) -> Fraction:
        return circle_derivative(self, x)

    # float action on angles
    def _image_vector(self, theta):
        a, b, c, d = _scaled_floats(*self.entries) if max(map(abs, self.entries)) > 2 ** 500 \
            else map(float, self.entries)
        cs, sn = np.cos(theta), np.sin(theta)
        return a * cs + b * sn, c * cs + d * sn

    def __call__(self, theta):
        w1, w2 = self._image_vector(theta)
        out = np.mod(np.arctan2(w2, w1), math.pi)
        return out if np.ndim(out) else float(out)

    def derivative(self, theta, side=None):
        w1, w2 = self._image_vector(theta)
        out = 1.0 / (w1 * w1 + w2 * w2)
        return out if np.ndim(out) else float(out)

    def log_derivative_slope(self, theta, h=None):
        # w = F(cos, sin), w' = F(-sin, cos); (log f')' = -2 w.w' / |w|^2
        a, b, c, d = map(float, self.entries)
        cs, sn = np.cos(theta), np.sin(theta)
        w1, w2 = a * cs + b * sn, c * cs + d * sn
        p1, p2 = -a * sn + b * cs, -c * sn + d * cs
        return -2.0 * (w1 * p1 + w2 * p2) / (w1 * w1 + w2 * w2)

    def fixed_angles(self) -> list:
        """Angles of the real fixed directions."""
        a, b, c, d = map(float, self.entries)
        # fixed directions are eigenvectors; solve c x^2 + (d - a) x - b = 0 with x = u/v
        out = []
        if c == 0:
            out.append(0.0)  # (1:0)
            if d - a != 0:
                out.append(math.atan2(1.0, b / (d - a)) % math.pi)
            return out
        disc = (d - a) ** 2 + 4 * b * c
        if disc < 0:
            return out
        for sgn in (1, -1):
            x = (-(d - a) + sgn * math.sqrt(disc)) / (2 * c)
            out.append(math.atan2(1.0, x) % math.pi)
        return sorted(set(out))


def circle_derivative(F: MobiusElement, x: ProjectiveDirection) -> Fraction:
    """Exact derivative |(u,v)|^2 / |F(u,v)|^2 in the angle chart."""
    w1 = F.a * x.u + F.b * x.v
    w2 = F.c * x.u + F.d * x.v
    return Fraction(x.norm2, w1 * w1 + w2 * w2)


F1 = MobiusElement(1, 2, 0, 1)
F2 = MobiusElement(1, 0, 2, 1)


def g2_family(**kwargs) -> MapFamily:
    return MapFamily({"f1": F1, "f2": F2}, name="G2", **kwargs)


def element_of_word(word: Word, family: MapFamily | None = None) -> MobiusElement:
    """Matrix of f_n o ... o f_1."""
    gens = {"f1": F1, "f2": F2} if family is None else family.generators
    out = MobiusElement.identity()
    for letter in word:
        g = gens[letter.name]
        out = (g.inverse() if letter.inverse else g) @ out
    return out


class RegionLabel(Enum):
    A_PLUS = "A+"
    B_PLUS = "B+"
    B_MINUS = "B-"
    A_MINUS = "A-"
    BOUNDARY = "boundary"


EXPANDING = {
    RegionLabel.A_PLUS: Letter("f1", True),
    RegionLabel.A_MINUS: Letter("f1", False),
    RegionLabel.B_PLUS: Letter("f2", True),
    RegionLabel.B_MINUS: Letter("f2", False),
}

REGION_ARCS = {
    RegionLabel.A_PLUS: (0.0, QUARTER_PI),
    RegionLabel.B_PLUS: (QUARTER_PI, HALF_PI),
    RegionLabel.B_MINUS: (HALF_PI, 3 * QUARTER_PI),
    RegionLabel.A_MINUS: (3 * QUARTER_PI, math.pi),
}


def region(x) -> RegionLabel:
    """Ping-pong region of an exact direction or a projective CirclePoint."""
    if isinstance(x, ProjectiveDirection):
        u, v = x.u, x.v
        au = abs(u)
        if u == 0 or v == 0 or au == v:
            return RegionLabel.BOUNDARY
        if au > v:
            return RegionLabel.A_PLUS if u > 0 else RegionLabel.A_MINUS
        return RegionLabel.B_PLUS if u > 0 else RegionLabel.B_MINUS
    theta = x.value if isinstance(x, CirclePoint) else float(x) % math.pi
    for k in range(5):
        if abs(theta - k * QUARTER_PI) < TOL.boundary_snap:
            return RegionLabel.BOUNDARY
    for label, (lo, hi) in REGION_ARCS.items():
        if lo < theta < hi:
            return label
    return RegionLabel.BOUNDARY


def ne_case(x: ProjectiveDirection) -> str:
    if x.u == 0:
        return "axis-u"
    if x.v == 0:
        return "axis-v"
    if x.u == x.v:
        return "diagonal+"
    if x.u == -x.v:
        return "diagonal-"
    return "generic"


def g2_letters() -> list:
    return [Letter("f1"), Letter("f1", True), Letter("f2"), Letter("f2", True)]


def _letter_matrix(letter: Letter) -> MobiusElement:
    g = F1 if letter.name == "f1" else F2
    return g.inverse() if letter.inverse else g


def _greedy_vectors(u: int, v: int, n: int):
    """Run n greedy steps on the integer vector (u, v), v > 0.

    Returns (u, v, letters); raises NonGenericError with the 1-based step.
    """
    letters = []
    append = letters.append
    for step in range(1, n + 1):
        if v < 0:
            u, v = -u, -v
        au = -u if u < 0 else u
        if u == 0 or v == 0 or au == v:
            raise NonGenericError(f"non-generic direction at step {step}", step=step)
        if au > v:
            if u > 0:
                u -= 2 * v
                append(1)
            else:
                u += 2 * v
                append(0)
        else:
            if u > 0:
                v -= 2 * u
                append(3)
            else:
                v += 2 * u
                append(2)
    return u, v, letters


_LETTER_TABLE = g2_letters()


def greedy_word(x: ProjectiveDirection, n: int) -> Word:
    _, _, idx = _greedy_vectors(x.u, x.v, n)
    return Word(tuple(_LETTER_TABLE[i] for i in idx))


def greedy_log_derivative(x: ProjectiveDirection, n: int) -> float:
    u, v, _ = _greedy_vectors(x.u, x.v, n)
    return math.log(x.norm2) - math.log(u * u + v * v)


def brute_force_max(x: ProjectiveDirection, n: int, cap: int = DEFAULTS.brute_force_cap):
    """Exhaustive maximum of log F'(x) over reduced G2 words of length <= n.

    Ties go to the lexicographically smallest word (letter order f1, f1^-1,
    f2, f2^-1; a prefix precedes its extensions).
    """
    if n > cap:
        raise ValueError(f"n = {n} exceeds the brute-force cap {cap}")
    mats = [(m.a, m.b, m.c, m.d) for m in map(_letter_matrix, _LETTER_TABLE)]
    inverse_of = [1, 0, 3, 2]
    best = (x.norm2, ())
    level = [(x.u, x.v, ())]
    for _ in range(n):
        nxt = []
        for u, v, w in level:
            last = w[-1] if w else -1
            for i, (a, b, c, d) in enumerate(mats):
                if last >= 0 and inverse_of[last] == i:
                    continue
                uu, vv = a * u + b * v, c * u + d * v
                key = (uu * uu + vv * vv, w + (i,))
                if key < best:
                    best = key
                nxt.append((uu, vv, key[1]))
        level = nxt
    word = Word(tuple(_LETTER_TABLE[i] for i in best[1]))
    return word, math.log(x.norm2) - math.log(best[0])


def random_direction(rng: random.Random, bits: int) -> ProjectiveDirection:
    """Direction with uniformly distributed angle, resolved to `bits` bits."""
    r2 = 1 << (2 * bits)
    while True:
        u = rng.getrandbits(bits + 1) - (1 << bits)
        v = rng.getrandbits(bits)
        if v > 0 and u * u + v * v <= r2:
            return ProjectiveDirection(u, v)


def refine_direction(x: ProjectiveDirection, rng: random.Random, bits: int) -> ProjectiveDirection:
    """Append random low-order bits to both coordinates."""
    return ProjectiveDirection((x.u << bits) + rng.getrandbits(bits), (x.v << bits) + rng.getrandbits(bits))


def lyapunov_expansion_estimate(x: ProjectiveDirection, n: int) -> float:
    """(1/n) log of the greedy composed derivative at x."""
    if n < 1:
        raise ValueError("n must be positive")
    return greedy_log_derivative(x, n) / n


def generic_lyapunov_estimate(rng: random.Random, n: int, bits: int | None = None,
                              direction: ProjectiveDirection | None = None) -> float:
    """Estimate at a random (or given) direction, refining precision when the
    greedy run meets a rational non-generic state."""
    bits = bits or (64 + 2 * n)
    x = direction or random_direction(rng, bits)
    while True:
        try:
            return lyapunov_expansion_estimate(x, n)
        except NonGenericError:
            x = refine_direction(x, rng, n + 64)


def quotient_S(theta: CirclePoint) -> float:
    t = theta.to_chart("projective").value
    if t <= QUARTER_PI or t >= 3 * QUARTER_PI:
        return abs(math.tan(t))
    return abs(math.cos(t) / math.sin(t))


def phi_tilde(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(x <= 1 / 3, x / (1 - 2 * x), np.where(x <= 0.5, 1 / x - 2, 2 - 1 / x))
    return out if out.ndim else float(out)


def phi_tilde_derivative(x):
    """|phi_tilde'|; the middle branch reverses orientation."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(x <= 1 / 3, 1 / (1 - 2 * x) ** 2, 1 / x ** 2)
    return out if out.ndim else float(out)


def phi_tilde_branch(x: float) -> int:
    return 1 if x <= 1 / 3 else (2 if x <= 0.5 else 3)


@dataclass
class PhiTildeState:
    x: float
    branches: list = field(default_factory=list)

    def step(self) -> "PhiTildeState":
        b = phi_tilde_branch(self.x)
        return PhiTildeState(phi_tilde(self.x), self.branches + [b])


def phi_tilde_signed_step(d):
    """phi_tilde in the signed coordinate d = x (x <= 1/2) or x - 1 (x > 1/2).

    Keeps full relative precision near both parabolic points 0 and 1.
    """
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    m1 = (d >= 0) & (d <= 1 / 3)
    m2 = d > 1 / 3
    m3 = d < 0
    t = d[m1]
    y = t / (1 - 2 * t)
    out[m1] = np.where(y > 0.5, (3 * t - 1) / (1 - 2 * t), y)
    t = d[m2]
    y = 1 / t - 2
    out[m2] = np.where(y > 0.5, 1 / t - 3, y)
    t = d[m3]
    y = (1 + 2 * t) / (1 + t)
    out[m3] = np.where(y > 0.5, t / (1 + t), y)
    return out


def to_signed(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.5, x - 1.0, x)


def semiconjugacy_defect(theta: CirclePoint, steps: int) -> float:
    """max_k |S(f(theta_k)) - phi_tilde(S(theta_k))| along the greedy orbit."""
    t = theta.to_chart("projective")
    worst = 0.0
    for k in range(steps):
        label = region(t)
        if label is RegionLabel.BOUNDARY:
            raise NonGenericError(f"non-generic angle at step {k + 1}", step=k + 1)
        f = _letter_matrix(EXPANDING[label])
        image = CirclePoint(f(t.value), "projective")
        worst = max(worst, abs(quotient_S(image) - phi_tilde(quotient_S(t))))
        t = image
    return worst


def period_two_point():
    """Period-two orbit {a, b} of phi_tilde with a in (1/4, 1/3)."""
    g = lambda x: phi_tilde(phi_tilde(x)) - x
    a = bisect(g, 0.25, 1 / 3, xtol=TOL.bisection * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=200)
    return a, phi_tilde(a)


class MaxIterExceeded(RuntimeError):
    pass


def _in_J(x: float, a: float, b: float) -> bool:
    tol = TOL.boundary_snap
    return a - tol <= x < b - tol


def first_return(x: float, max_iter: int = DEFAULTS.first_return_max_iter,
                 with_derivative: bool = False):
    """First return (Phi(x), tau(x)) of phi_tilde to J = [a, b).

    The right endpoint is excluded so that the period-two orbit returns
    in two steps.
    """
    a, b = period_two_point()
    if not _in_J(x, a, b):
        raise ValueError("x must lie in J")
    d = float(to_signed(x))
    logd = 0.0
    for tau in range(1, max_iter + 1):
        xx = d if d >= 0 else d + 1.0
        logd += math.log(float(phi_tilde_derivative(xx))) if with_derivative else 0.0
        d = float(phi_tilde_signed_step(np.array([d]))[0])
        if d == 0.0:
            raise MaxIterExceeded("orbit landed on a parabolic fixed point")
        xx = d if d >= 0 else d + 1.0
        if _in_J(xx, a, b):
            return (xx, tau, math.exp(logd)) if with_derivative else (xx, tau)
    raise MaxIterExceeded(f"no return to J within {max_iter} steps")


def occupation_fraction(x, n: int, eps: float):
    """Fraction of x_0..x_{n-1} in U_eps(0) or U_eps(1); x may be an array."""
    if n < 1 or not 0 < eps < 0.25:
        raise ValueError("need n >= 1 and 0 < eps < 1/4")
    d = to_signed(np.atleast_1d(np.asarray(x, dtype=float)))
    count = np.zeros(d.shape)
    for _ in range(n):
        count += np.abs(d) < eps
        d = phi_tilde_signed_step(d)
    frac = count / n
    return frac if np.ndim(x) else float(frac[0])
