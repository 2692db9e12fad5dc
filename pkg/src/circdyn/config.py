"""Numerical tolerances and defaults, kept in one place."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    chart_roundtrip: float = 1e-12
    chain_rule: float = 1e-9
    inverse_product: float = 1e-10
    semiconjugacy: float = 1e-9
    bisection: float = 1e-12
    newton: float = 1e-14
    preimage_residual: float = 1e-12
    piece_agreement: float = 1e-10
    distortion_slack: float = 1e-9
    kappa_margin: float = 1e-6
    refinement: float = 1e-6
    ne_margin: float = 1e-9
    boundary_snap: float = 1e-12
    psl_conformal: float = 1e-12
    gs_conformal: float = 1e-6
    probability_sum: float = 1e-12


@dataclass(frozen=True)
class Defaults:
    c_family_grid: int = 10_000
    c_family_safety: float = 1.05
    distortion_grid: int = 1000
    brute_force_cap: int = 14
    first_return_max_iter: int = 10_000_000
    itinerary_depth_cap: int = 64
    histogram_bins: int = 1024
    expansion_iteration_cap: int = 100_000
    word_enumeration_cap: int = 200_000
    dedup_cap: int = 2_000_000


TOL = Tolerances()
DEFAULTS = Defaults()
