"""Smooth degree-two circle maps and the Ghys-Sergiescu realization of T."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .config import DEFAULTS, TOL
from .core import CircleMap, Letter, MapFamily
from .thompson import ThompsonElement, load_generators

TWO_PI = 2 * math.pi


class SmoothDoubling:
    """Degree-two circle map given by a lift with lift(x + 1) = lift(x) + 2.

    `base` is a fixed point of the lift; the two monotone branches are
    [base, s) and [s, base + 1) where lift(s) = base + 1.
    """

    def __init__(self, name, lift, d1, d2, parabolic=(0.0,), base=0.0, split=None,
                 model=False, gap=None):
        self.name = name
        self._lift, self._d1, self._d2 = lift, d1, d2
        self.parabolic = tuple(parabolic)
        self.base = float(base)
        self.model = model
        self.gap = gap  # (x-, x+) for the non-minimal variant
        if split is None:
            split = brentq(lambda x: lift(x) - (self.base + 1), self.base, self.base + 1, xtol=1e-15)
        self.split = float(split)
        self._points = {Fraction(0): self.base}

    def __repr__(self):
        return f"SmoothDoubling({self.name})"

    # evaluation
    def lift(self, x):
        return self._lift(np.asarray(x, dtype=float)) if np.ndim(x) else float(self._lift(float(x)))

    def __call__(self, x):
        y = np.mod(self._lift(np.asarray(x, dtype=float)), 1.0)
        return y if np.ndim(x) else float(y)

    def derivative(self, x):
        d = self._d1(np.asarray(x, dtype=float))
        return d if np.ndim(x) else float(d)

    def second_derivative(self, x):
        d = self._d2(np.asarray(x, dtype=float))
        return d if np.ndim(x) else float(d)

    def validate(self, grid: int = 20000) -> bool:
        """phi(base) = base, phi' = 1 on the parabolic set and > 1 elsewhere
        (outside the invariant gap, when there is one)."""
        xs = np.linspace(0, 1, grid, endpoint=False)
        d = self._d1(xs)
        dist = np.min(np.abs(((xs[:, None] - np.array(self.parabolic)[None, :]) + 0.5) % 1 - 0.5), axis=1)
        away = dist > 1e-3
        if self.gap is not None:
            x_minus, x_plus = self.gap
            away &= ~((xs >= x_minus) & (xs <= x_plus))
        ok_away = np.all(d[away] > 1.0)
        ok_par = all(abs(float(self._d1(p)) - 1.0) < 1e-12 for p in self.parabolic)
        ok_fix = abs(float(self._lift(self.base)) - self.base) < 1e-14
        return bool(ok_away and ok_par and ok_fix and np.all(d > 0))

    # inverse branches
    def inverse_branch(self, y, bit):
        """Preimage of y in branch `bit` (0: [base, s), 1: [s, base + 1))."""
        scalar = np.ndim(y) == 0 and np.ndim(bit) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        bit = np.broadcast_to(np.asarray(bit, dtype=int), y.shape)
        w = np.mod(y - self.base, 1.0)
        target = self.base + bit + w
        lo = np.where(bit == 1, self.split, self.base)
        hi = np.where(bit == 1, self.base + 1.0, self.split)
        x = lo + (hi - lo) * np.clip(w, 0.0, 1.0)
        scale = np.maximum(1.0, np.abs(target))
        done = np.zeros(x.shape, dtype=bool)
        for _ in range(200):
            F = self._lift(x) - target
            done |= np.abs(F) <= 2e-16 * scale
            if np.all(done | (hi - lo <= 4e-16 * scale)):
                break
            hi = np.where(F > 0, x, hi)
            lo = np.where(F <= 0, x, lo)
            newton = x - F / self._d1(x)
            inside = (newton > lo) & (newton < hi)
            step = np.where(inside, newton, 0.5 * (lo + hi))
            done |= inside & (np.abs(newton - x) <= 2e-16 * scale)
            x = np.where(done, x, step)
        out = np.mod(x, 1.0)
        out = np.where(out >= 1.0, 0.0, out)
        return float(out[0]) if scalar else out

    def digit(self, x) -> int:
        return 0 if (x - self.base) % 1.0 < (self.split - self.base) % 1.0 else 1

    # points of the preimage tree of the base point
    def point(self, label: Fraction) -> float:
        """Position of the dyadic label: the preimage of `base` with that address."""
        label = Fraction(label) % 1
        if label in self._points:
            return self._points[label]
        n = label.denominator.bit_length() - 1
        i = label.numerator
        # label = (bit_top + inner) / 2 with bit_top the leading binary digit
        top = i >> (n - 1)
        inner = Fraction(2 * i - (top << n), 2 ** n)
        val = self.inverse_branch(self.point(inner), top)
        self._points[label] = val
        return val

    def orbit_derivative(self, label: Fraction, m: int) -> float:
        """(phi^m)'(point(label)) from the exact orbit of labels."""
        out = 1.0
        q = Fraction(label) % 1
        for _ in range(m):
            out *= self.derivative(self.point(q))
            q = (2 * q) % 1
        return out


def default_phi() -> SmoothDoubling:
    return SmoothDoubling(
        "default",
        lambda x: 2 * x - np.sin(TWO_PI * x) / TWO_PI,
        lambda x: 2 - np.cos(TWO_PI * x),
        lambda x: TWO_PI * np.sin(TWO_PI * x),
        parabolic=(0.0,), split=0.5)


def remark_phi() -> SmoothDoubling:
    k = 3 * TWO_PI
    return SmoothDoubling(
        "remark",
        lambda x: 2 * x - np.sin(k * x) / k,
        lambda x: 2 - np.cos(k * x),
        lambda x: k * np.sin(k * x),
        parabolic=(0.0, 1 / 3, 2 / 3), split=0.5)


def doubling_model() -> SmoothDoubling:
    """Exact doubling; the GS construction reduces to the PL action."""
    return SmoothDoubling("doubling", lambda x: 2 * x, lambda x: 2 + 0 * x, lambda x: 0 * x,
                          parabolic=(), split=0.5, model=True)


def nonminimal_phi(x_minus: float = 0.4, x_plus: float = 0.6, curvature: float = 5.0) -> SmoothDoubling:
    """C^2 piecewise-polynomial degree-two map with parabolic fixed points
    x_minus, x_plus and invariant gap (x_minus, x_plus).

    With t = x - x_plus mod 1 and lift = x + g(t): quintic g on the
    expanding arc [0, L] (g' > 0) and on the gap [L, 1] (g > 1);
    quadratic tangency at x_plus, cubic at x_minus.
    """
    if not 0 < x_minus < x_plus < 1:
        raise ValueError("need 0 < x_minus < x_plus < 1")
    L = 1.0 - (x_plus - x_minus)
    ell = 1.0 - L
    kappa = curvature * L * L
    if not (0 < kappa < 10 and curvature * ell * 0.13 < 1):
        raise ValueError("curvature outside the monotone range")
    A, B, C = 10 - kappa, -15 + 2 * kappa, 6 - kappa
    c = curvature

    def split_t(x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x - x_plus)
        return x - x_plus - k, k

    def g_parts(t):
        w = 1 - t / L
        u = (t - L) / ell
        g_out = 1 - w ** 3 * (A + B * w + C * w * w)
        g_in = 1 + c * ell * ell * u ** 3 * (1 - u) ** 2
        d_out = (3 * A * w ** 2 + 4 * B * w ** 3 + 5 * C * w ** 4) / L
        d_in = c * ell * (3 * u ** 2 - 8 * u ** 3 + 5 * u ** 4)
        s_out = -(6 * A * w + 12 * B * w ** 2 + 20 * C * w ** 3) / L ** 2
        s_in = c * (6 * u - 24 * u ** 2 + 20 * u ** 3)
        inside = t > L
        return (np.where(inside, g_in, g_out), np.where(inside, d_in, d_out),
                np.where(inside, s_in, s_out))

    def lift(x):
        t, k = split_t(x)
        return np.asarray(x, dtype=float) + g_parts(t)[0] + k

    def d1(x):
        return 1 + g_parts(split_t(x)[0])[1]

    def d2(x):
        return g_parts(split_t(x)[0])[2]

    return SmoothDoubling("nonminimal", lift, d1, d2, parabolic=(x_minus, x_plus), base=x_plus,
                          gap=(x_minus, x_plus))


class ItineraryDepthExceeded(ValueError):
    pass


class GSRealization(CircleMap):
    """[f]_phi: on each standard piece, the branch phi^{-k} o phi^l."""

    chart = "unit"

    def __init__(self, element: ThompsonElement, phi: SmoothDoubling, name: str | None = None,
                 depth_cap: int = DEFAULTS.itinerary_depth_cap):
        self.element, self.phi, self.name = element, phi, name
        self.pieces = {(l, j): (k, i) for l, j, k, i in element.standard_pieces()}
        self.depth_cap = depth_cap

    def __repr__(self):
        return f"GSRealization({self.name or self.element}, {self.phi.name})"

    def piece_data(self):
        """(l, j, k, address bits of i) per piece."""
        return [(l, j, k, format(i, f"0{k}b") if k else "") for (l, j), (k, i) in self.pieces.items()]

    def locate(self, x: float):
        phi = self.phi
        xm, j, m, dl = float(x) % 1.0, 0, 0, 1.0
        while (m, j) not in self.pieces:
            if m >= self.depth_cap:
                raise ItineraryDepthExceeded("point is indistinguishable from a piece boundary")
            j = 2 * j + phi.digit(xm)
            dl *= phi.derivative(xm)
            xm = phi(xm)
            m += 1
        return m, j, xm, dl

    def evaluate(self, x: float):
        """(value, derivative) of [f]_phi at x."""
        phi = self.phi
        l, j, z, dl = self.locate(x)
        k, i = self.pieces[(l, j)]
        t, dk = z, 1.0
        for r in range(k):
            t = phi.inverse_branch(t, (i >> r) & 1)
            dk *= phi.derivative(t)
        return t, dl / dk

    def evaluate_dyadic(self, label: Fraction):
        """Exact image label, position and derivative at the point of a dyadic label."""
        label = Fraction(label) % 1
        m = 0
        while (m, int(label * 2 ** m)) not in self.pieces:
            m += 1
        j = int(label * 2 ** m)
        k, i = self.pieces[(m, j)]
        image = (label * 2 ** m - j + i) / 2 ** k
        phi = self.phi
        der = phi.orbit_derivative(label, m) / phi.orbit_derivative(image, k)
        return image, phi.point(image), der

    def __call__(self, x):
        if np.ndim(x):
            return np.array([self.evaluate(v)[0] for v in np.ravel(x)]).reshape(np.shape(x))
        return self.evaluate(x)[0]

    def derivative(self, x, side=None):
        if np.ndim(x):
            return np.array([self.evaluate(v)[1] for v in np.ravel(x)]).reshape(np.shape(x))
        return self.evaluate(x)[1]

    def inverse(self):
        name = None if self.name is None else (self.name[:-3] if self.name.endswith("^-1") else self.name + "^-1")
        return GSRealization(self.element.inverse(), self.phi, name)

    def compose(self, other: "GSRealization") -> "GSRealization":
        return GSRealization(self.element @ other.element, self.phi)


def standard_realizations(phi: SmoothDoubling | None = None) -> dict:
    phi = phi or default_phi()
    return {name: GSRealization(g, phi, name) for name, g in load_generators().items()}


def gs_family(phi: SmoothDoubling | None = None, grid: int = 2000) -> MapFamily:
    return MapFamily(standard_realizations(phi), name="T_phi", grid=grid)


def _word_count(depth: int, letters: int) -> int:
    return 1 + sum(letters * (letters - 1) ** (d - 1) for d in range(1, depth + 1))


def _as_dyadic(x):
    if isinstance(x, Fraction):
        return x if x.denominator & (x.denominator - 1) == 0 else None
    q = Fraction(float(x))
    return q % 1 if q.denominator <= 2 ** 40 else None


def ne_probe(x, depth: int, phi: SmoothDoubling | None = None, realizations: dict | None = None,
             cap: int = DEFAULTS.word_enumeration_cap) -> float:
    """max over reduced words of length <= depth of the derivative at x."""
    gens = realizations or standard_realizations(phi)
    letters = []
    for name, g in gens.items():
        letters.append((Letter(name), g))
        letters.append((Letter(name, True), g.inverse()))
    if _word_count(depth, len(letters)) > cap:
        raise ValueError("word enumeration cap exceeded")
    label = _as_dyadic(x)
    best = 0.0
    stack = [(label if label is not None else float(x) % 1.0, 0.0, None, 0)]
    while stack:
        pt, logd, last, d = stack.pop()
        best = max(best, logd)
        if d == depth:
            continue
        for letter, g in letters:
            if last is not None and letter == last.inverted():
                continue
            if label is not None:
                image, _, der = g.evaluate_dyadic(pt)
            else:
                image, der = g.evaluate(pt)
            stack.append((image, logd + math.log(der), letter, d + 1))
    return math.exp(best)


@dataclass
class ReturnMap:
    phi: SmoothDoubling
    a: float
    b: float
    max_iter: int = 10_000_000

    def contains(self, x: float) -> bool:
        tol = TOL.boundary_snap
        return self.a - tol <= x < self.b - tol

    def first_return(self, x: float):
        """(Phi(x), tau(x), Phi'(x))."""
        if not self.contains(x):
            raise ValueError("x must lie in J")
        phi, logd = self.phi, 0.0
        for tau in range(1, self.max_iter + 1):
            logd += math.log(phi.derivative(x))
            x = phi(x)
            if self.contains(x):
                return x, tau, math.exp(logd)
        raise RuntimeError(f"no return within {self.max_iter} steps")

    def Phi(self, x):
        return self.first_return(x)[0]

    def tau(self, x):
        return self.first_return(x)[1]

    def min_return_derivative(self, grid: int = 200) -> float:
        xs = np.linspace(self.a, self.b, grid + 2)[1:-1]
        return min(self.first_return(float(x))[2] for x in xs)

    def branch_point(self, k: int, t: float | None = None) -> float:
        """Point of J whose image lies in phi^{-k}(J) near the fixed point, so tau = k + 1."""
        t = 0.5 * (self.a + self.b) if t is None else t
        z = t
        for _ in range(k):
            z = self.phi.inverse_branch(z, 0)
        return self.phi.inverse_branch(z, 1)


def phi_first_return(phi: SmoothDoubling, max_iter: int = 10_000_000) -> ReturnMap:
    """Period-two point a in (0, s) with b = phi(a) and the return map to [a, b)."""
    if phi.base != 0.0:
        raise ValueError("needs a minimal-variant map with fixed point 0")
    f = lambda x: phi.lift(phi.lift(x)) - x - 1.0
    lo, hi = 1e-9, phi.split
    if not f(lo) < 0 < f(hi):
        raise ValueError("period-two solve fails to bracket")
    a = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    return ReturnMap(phi, a, phi(a), max_iter)


def time_average_concentration(phi: SmoothDoubling, x, n: int, eps: float):
    """Fraction of x_0..x_{n-1} within eps of the fixed point 0; x may be an array.

    Iterates in the centred coordinate (-1/2, 1/2] so points near 0 keep
    full relative precision.
    """
    if n < 1 or not 0 < eps < 0.25:
        raise ValueError("need n >= 1 and 0 < eps < 1/4")
    y = np.atleast_1d(np.asarray(x, dtype=float))
    y = y - np.round(y)
    count = np.zeros(y.shape)
    lift = phi._lift
    for _ in range(n):
        count += np.abs(y) < eps
        z = lift(y)
        y = z - np.round(z)
    frac = count / n
    return frac if np.ndim(x) else float(frac[0])


@dataclass
class GapTree:
    """Preimages y of x+ with first hitting time n, and their gaps I_y = (left, y)."""

    phi: SmoothDoubling
    n: np.ndarray
    y: np.ndarray
    left: np.ndarray
    weight_base: np.ndarray
    numerator: np.ndarray  # dyadic label numerator / 2^n
    C: float = float("nan")

    def __len__(self):
        return len(self.y)

    @property
    def lengths(self):
        return np.mod(self.y - self.left, 1.0)

    def labels(self):
        return [Fraction(int(i), 2 ** int(n)) for i, n in zip(self.numerator, self.n)]

    def __iter__(self):
        for k in range(len(self.y)):
            yield (int(self.n[k]), float(self.y[k]), (float(self.left[k]), float(self.y[k])),
                   float(self.weight_base[k]))

    def disjoint(self) -> bool:
        """Gaps are pairwise disjoint and disjoint from the invariant gap."""
        base = self.phi.base
        lo = np.mod(self.left - base, 1.0)
        hi = lo + self.lengths
        order = np.argsort(lo)
        lo, hi = lo[order], hi[order]
        x_minus = self.phi.gap[0]
        gap_start = (x_minus - base) % 1.0
        return bool(np.all(lo[1:] >= hi[:-1]) and (len(hi) == 0 or hi[-1] <= gap_start + 1e-15))


def gap_tree(phi_nm: SmoothDoubling, depth: int) -> GapTree:
    if phi_nm.gap is None:
        raise ValueError("needs the non-minimal variant")
    x_minus, x_plus = phi_nm.gap
    empty = np.array([], dtype=float)
    if depth < 1:
        return GapTree(phi_nm, np.array([], dtype=int), empty, empty, empty, np.array([], dtype=np.int64))
    if depth > 62:
        raise ValueError("depth too large for integer labels")
    y = np.array([phi_nm.split])
    left = np.atleast_1d(phi_nm.inverse_branch(np.array([x_minus]), 0))
    if not np.all(np.isfinite(left)):
        raise ValueError("bracketing failure in preimage solve")
    D = np.atleast_1d(phi_nm.derivative(y))
    num = np.array([1], dtype=np.int64)
    ns, ys, ls, ds, nums = [np.ones(1, dtype=int)], [y], [left], [D], [num]
    for level in range(2, depth + 1):
        bits = np.concatenate([np.zeros(len(y), dtype=int), np.ones(len(y), dtype=int)])
        yy = phi_nm.inverse_branch(np.concatenate([y, y]), bits)
        ll = phi_nm.inverse_branch(np.concatenate([left, left]), bits)
        D = phi_nm.derivative(yy) * np.concatenate([D, D])
        num = np.concatenate([num, num + (1 << (level - 1))])
        y, left = yy, ll
        ns.append(np.full(len(y), level))
        ys.append(y)
        ls.append(left)
        ds.append(D)
        nums.append(num)
    tree = GapTree(phi_nm, np.concatenate(ns), np.concatenate(ys), np.concatenate(ls),
                   np.concatenate(ds), np.concatenate(nums))
    tree.C = float(np.min(tree.weight_base * tree.lengths))
    return tree
