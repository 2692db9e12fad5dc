"""Expansion procedure: compositions reaching a target derivative with a
controlled derivative-sum ratio, and the expanded neighbourhoods they give."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import DEFAULTS, TOL
from .core import (CircleInterval, CircleMap, CirclePoint, Letter, NonGenericError, Word,
                   exact_log, period_of)
from .distortion import LOG2, distortion_coefficient, fixed_point_return_branches
from .gs import SmoothDoubling, default_phi, doubling_model, phi_first_return
from .psl2z import EXPANDING, ProjectiveDirection, RegionLabel, circle_derivative, g2_family, region


class IterationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Step:
    """One letter of a trace: forward map, local inverse and log g'(x_j)."""

    letter: Letter
    forward: CircleMap
    inverse: CircleMap
    log_derivative: float


class _LocalInverse(CircleMap):
    """Branch of phi^{-1} through a given orbit point."""

    chart = "unit"

    def __init__(self, phi: SmoothDoubling, bit: int):
        self.phi, self.bit = phi, bit

    def __call__(self, y):
        return self.phi.inverse_branch(y, self.bit)

    def derivative(self, y, side=None):
        return 1.0 / self.phi.derivative(self(y))


class _PhiMap(CircleMap):
    """phi acting on unreduced coordinates (keeps points near 0 signed)."""

    chart = "unit"

    def __init__(self, phi: SmoothDoubling):
        self.phi = phi

    def __call__(self, x):
        z = self.phi.lift(x)
        return z - np.round(z) if np.ndim(z) else z - round(z)

    def derivative(self, x, side=None):
        return self.phi.derivative(x)


class G2Policy:
    """Greedy steps of the free group <f1, f2> on exact directions."""

    name = "G2"
    chart = "projective"

    def __init__(self, family=None):
        self.family = family or g2_family()

    @property
    def c_family(self) -> float:
        return self.family.c_family

    def start(self, x):
        if isinstance(x, ProjectiveDirection):
            return x
        theta = x.value if isinstance(x, CirclePoint) else float(x)
        c, s = Fraction(math.cos(theta)), Fraction(math.sin(theta))
        return ProjectiveDirection(c.numerator * s.denominator, s.numerator * c.denominator)

    def position(self, state) -> float:
        return state.angle

    def fragment(self, state):
        label = region(state)
        if label == RegionLabel.BOUNDARY:
            raise NonGenericError(f"direction {state} is non-generic (no unique expanding generator)")
        letter = EXPANDING[label]
        g = self.family.map_for(letter)
        d = circle_derivative(g, state)
        step = Step(letter, g, self.family.map_for(letter.inverted()), exact_log(d))
        return [step], g.act(state)


class PhiPolicy:
    """phi-steps away from the parabolic point 0 and exit words phi^k near it.

    Near 0 the region (-r, r) with r the right end of the branch J_{k0} is
    cut into the branches J_k = phi^{-k}[a, b); on J_k (k >= k0) the exit
    word phi^k has derivative >= 2.
    """

    name = "phi"
    chart = "unit"

    def __init__(self, phi: SmoothDoubling | None = None, k_max: int = 60, cap: int = DEFAULTS.expansion_iteration_cap):
        self.phi = phi or default_phi()
        self.cap = cap
        self.forward = _PhiMap(self.phi)
        self.parabolic = abs(self.phi.derivative(0.0) - 1.0) < 1e-12
        xs = np.linspace(0.0, 1.0, 20001)
        ratio = np.abs(self.phi.second_derivative(xs) / self.phi.derivative(xs))
        # phi' >= 1, so this bounds the local inverses as well
        self.c_family = DEFAULTS.c_family_safety * float(np.max(ratio))
        self.k0, self.inner, self.outer, self.scan = None, 0.0, 0.0, None
        if self.parabolic:
            ret = phi_first_return(self.phi)
            fmap = _UnitPhi(self.phi)
            scan = fixed_point_return_branches(fmap, CirclePoint(0.0), CirclePoint(ret.a),
                                               CirclePoint(ret.b), k_max)
            if scan.k0 is None:
                raise ValueError("no uniformly expanding exit branches up to k_max")
            J = scan.branches[scan.k0 - 1][1]
            self.k0, self.scan = scan.k0, scan
            self.inner, self.outer = J.left.value, J.left.value + J.length

    def start(self, x):
        v = x.value if isinstance(x, CirclePoint) else float(x)
        return v - round(v)

    def position(self, state) -> float:
        return state % 1.0

    def _step(self, x):
        bit = self.phi.digit(x % 1.0)
        step = Step(Letter("phi"), self.forward, _LocalInverse(self.phi, bit),
                    math.log(self.phi.derivative(x)))
        return step, self.forward(x)

    def fragment(self, state):
        x = state
        if self.parabolic and x == 0.0:
            raise NonGenericError("0 is non-expandable")
        if not self.parabolic or abs(x) >= self.outer:
            step, x = self._step(x)
            return [step], x
        steps = []
        while abs(x) < self.inner:
            if len(steps) >= self.cap:
                raise IterationCapExceeded("exit from the parabolic region exceeds the cap")
            step, x = self._step(x)
            steps.append(step)
        for _ in range(self.k0):
            step, x = self._step(x)
            steps.append(step)
        return steps, x


class _UnitPhi(CircleMap):
    chart = "unit"

    def __init__(self, phi):
        self.phi = phi

    def __call__(self, x):
        return self.phi(x)

    def derivative(self, x, side=None):
        return self.phi.derivative(x)

    def log_derivative_slope(self, x, h=None):
        x = np.asarray(x, dtype=float)
        return self.phi.second_derivative(x) / self.phi.derivative(x)

    def inverse(self):
        return _LocalInverse(self.phi, 0)


def doubling_policy() -> PhiPolicy:
    """Hyperbolic toy: the single map x -> 2x."""
    return PhiPolicy(doubling_model())


@dataclass
class ExpansionTrace:
    word: Word
    derivative: float
    ratio: float
    start: float
    end: float
    chart: str
    log_prefix: np.ndarray  # log (f_j o ... o f_1)'(x), j = 0..n
    steps: list = field(default_factory=list, repr=False)
    neighborhood: CircleInterval | None = None
    kappa: float | None = None
    kappa_inverse: float | None = None
    eps: float | None = None
    status: str = "success"

    @property
    def log_derivative(self) -> float:
        return float(self.log_prefix[-1])


def _ratio(log_prefix: np.ndarray) -> float:
    return float(np.sum(np.exp(log_prefix - log_prefix[-1])))


def _trace(x0, state, steps, policy) -> ExpansionTrace:
    logs = np.concatenate([[0.0], np.cumsum([s.log_derivative for s in steps])])
    word = Word(tuple(s.letter for s in steps))
    return ExpansionTrace(word, math.exp(logs[-1]), _ratio(logs), policy.position(x0),
                          policy.position(state), policy.chart, logs, list(steps))


def expand_step(x, policy=None):
    """(fragment Word, fragment derivative) of one policy step at x."""
    policy = policy or G2Policy()
    steps, _ = policy.fragment(policy.start(x))
    return Word(tuple(s.letter for s in steps)), math.exp(sum(s.log_derivative for s in steps))


def expand_to_derivative(x, M: float, policy=None, cap: int = DEFAULTS.expansion_iteration_cap) -> ExpansionTrace:
    """Concatenate policy fragments at x until the derivative reaches M."""
    policy = policy or G2Policy()
    state = x0 = policy.start(x)
    steps, logd, target = [], 0.0, math.log(M) if M > 1 else 0.0
    while logd < target:
        if len(steps) >= cap:
            raise IterationCapExceeded(f"derivative {M} not reached within {cap} steps")
        frag, state = policy.fragment(state)
        steps.extend(frag)
        logd += sum(s.log_derivative for s in frag)
    return _trace(x0, state, steps, policy)


class _Chain(CircleMap):
    def __init__(self, maps, chart):
        self.maps, self.chart = list(maps), chart

    def __call__(self, x):
        for g in self.maps:
            x = g(x)
        return x

    def log_derivative(self, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for g in self.maps:
            acc = acc + np.log(np.asarray(g.derivative(x), dtype=float))
            x = np.asarray(g(x), dtype=float)
        return acc

    def derivative(self, x, side=None):
        return np.exp(self.log_derivative(x))


def trace_map(trace: ExpansionTrace) -> CircleMap:
    return _Chain([s.forward for s in trace.steps], trace.chart)


def trace_inverse(trace: ExpansionTrace) -> CircleMap:
    return _Chain([s.inverse for s in reversed(trace.steps)], trace.chart)


def ratio_identity_defect(trace: ExpansionTrace) -> float:
    """Relative gap between the ratio and the sum of the inverse-prefix
    derivatives at the endpoint, evaluated independently in floats."""
    y, acc, total = trace.end, 0.0, 1.0
    for s in reversed(trace.steps):
        acc += math.log(float(s.inverse.derivative(y)))
        y = float(s.inverse(y))
        total += math.exp(acc)
    return abs(total - trace.ratio) / trace.ratio


def expand_neighborhood(x, M: float, eps: float | None = None, policy=None,
                        grid: int = DEFAULTS.distortion_grid) -> ExpansionTrace:
    """Trace to derivative M plus V = F^{-1}(U_{eps/2}(F(x))) and its distortion."""
    policy = policy or G2Policy()
    trace = expand_to_derivative(x, M, policy)
    limit = LOG2 / (2 * policy.c_family * trace.ratio)
    if eps is None:
        eps = limit
    elif eps > limit * (1 + 1e-12):
        raise ValueError(f"eps = {eps} exceeds log 2 / (2 C_F ratio) = {limit}")
    period = period_of(trace.chart)
    U = CircleInterval.around(CirclePoint(trace.end, trace.chart), eps / 2)
    G = trace_inverse(trace)
    lo = float(G(U.left.value)) % period
    hi = float(G(U.right.value)) % period
    V = CircleInterval.from_values(lo, hi, trace.chart)
    trace.neighborhood, trace.eps = V, eps
    if trace.steps:
        F = trace_map(trace)
        FV = CircleInterval.from_values(float(F(V.left.value)) % period,
                                        float(F(V.right.value)) % period, trace.chart)
        trace.kappa = distortion_coefficient(F, V, grid)
        trace.kappa_inverse = distortion_coefficient(G, FV, grid)
    else:
        trace.kappa = trace.kappa_inverse = 0.0
    return trace


@dataclass
class ScanRow:
    point: float
    M: float
    C: float | None
    length: int | None
    status: str


def distortion_expandable_scan(points, M_grid, policy=None) -> list:
    """Measured ratio C(x, M) of the policy trace for each point and M."""
    policy = policy or G2Policy()
    rows = []
    for x in points:
        for M in M_grid:
            try:
                t = expand_to_derivative(x, M, policy)
                rows.append(ScanRow(policy.position(policy.start(x)), float(M), t.ratio, len(t.word), "ok"))
            except NonGenericError:
                pos = x.angle if isinstance(x, ProjectiveDirection) else float(getattr(x, "value", x))
                rows.append(ScanRow(pos, float(M), None, None, "ne"))
    return rows
