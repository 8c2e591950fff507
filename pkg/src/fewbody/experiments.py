"""Scenario layer: threshold tuning, the spreading dichotomy, level scans.

All 3-body numbers here are arbitrated by two solvers that share no code
path: the variational correlated-Gaussian diagonalization and the coupled
pair-component spectral radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import CouplingConfig, ModelSpec, PAIRS, Quadrature
from . import faddeev as fd
from . import twobody as tb
from . import variational as vr

EPS_NUM = 1e-8  # energies above -EPS_NUM count as "no bound state"


class BracketInvalidError(ValueError):
    pass


class PathPointUnboundError(RuntimeError):
    pass


class PairDriftError(RuntimeError):
    """A pair left its declared classification along a coupling path."""


class Scenario(Enum):
    NO_PAIR_RESONANCE = "no-pair-resonance"
    PAIR_RESONANCE = "pair-resonance"


@dataclass(frozen=True)
class SweepRow:
    lambda12: float
    theta: float
    lam: float
    e_gr: float
    e_thr: float
    p_r0: float
    p_r1: float
    bs_radius: Optional[float]
    bound_states: Optional[int]

    def __post_init__(self):
        if self.e_gr > self.e_thr + 1e-8:
            raise ValueError("ground energy above the essential-spectrum bottom")


@dataclass(frozen=True)
class DichotomyRow:
    couplings: CouplingConfig
    e_gr: float
    p_r0: float
    p_r1: float


@dataclass(frozen=True)
class DichotomyReport:
    scenario: Scenario
    r0: float
    rows: tuple[DichotomyRow, ...]
    verdict: str
    floor: float
    ceiling_factor: float


def find_theta0(
    model: ModelSpec,
    theta_bracket: tuple[float, float],
    basis: vr.GaussianBasis,
    tol: float = 1e-4,
    pair: str = "13",
) -> float:
    """Coupling of `pair` at which the 3-body level detaches from threshold.

    Bisection on the variational ground energy crossing -EPS_NUM; the
    couplings of the other pairs are taken from the model as-is.
    """
    lo, hi = theta_bracket
    if not lo < hi:
        raise BracketInvalidError("empty theta bracket")

    def energy(theta: float) -> float:
        m = model.with_couplings(model.couplings.replace(pair, theta))
        return vr.solve_ground(m, basis).energy - vr.hvz_bottom(m)

    e_lo, e_hi = energy(lo), energy(hi)
    if e_lo < -EPS_NUM:
        raise BracketInvalidError(f"already bound at theta={lo} (E={e_lo:.3e})")
    if e_hi > -1e-6:
        raise BracketInvalidError(f"not bound at theta={hi} (E={e_hi:.3e})")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if energy(mid) < -EPS_NUM:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _couplings_at_energy(
    model: ModelSpec,
    basis: vr.GaussianBasis,
    target: float,
    vary: str,
    bracket: tuple[float, float],
    rel_tol: float = 0.02,
) -> tuple[ModelSpec, float, vr.GroundState]:
    """Tune one knob (overall "scale" or a pair coupling) until E_gr hits target < 0."""

    def at(v: float) -> ModelSpec:
        if vary == "scale":
            return model.with_couplings(model.couplings.scaled(v))
        return model.with_couplings(model.couplings.replace(vary, v))

    def energy(v: float):
        m = at(v)
        gs = vr.solve_ground(m, basis)
        return gs.energy - vr.hvz_bottom(m), m, gs

    lo, hi = bracket
    e_lo = energy(lo)[0]
    e_hi = energy(hi)[0]
    if not (e_hi < target < max(e_lo, -EPS_NUM)):
        raise BracketInvalidError(
            f"target {target:.3e} outside bracket energies ({e_lo:.3e}, {e_hi:.3e})"
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        e, m, gs = energy(mid)
        if abs(e - target) <= rel_tol * abs(target):
            return m, e, gs
        if e > target:
            lo = mid
        else:
            hi = mid
    raise PathPointUnboundError(f"could not settle E_gr near {target:.3e}")


def spreading_dichotomy(
    scenario: Scenario,
    model: ModelSpec,
    basis: vr.GaussianBasis,
    r0: Optional[float] = None,
    energy_targets: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
    floor: float = 0.25,
    ceiling_factor: float = 0.1,
    scale_bracket: tuple[float, float] = (0.5, 1.5),
    quad: Optional[Quadrature] = None,
) -> DichotomyReport:
    """P(R0) along a coupling path whose ground energy rises to the threshold.

    no-pair-resonance: every pair must hold the R7 margin along the path and
    the verdict demands inf P(R0) >= floor.  pair-resonance: pair (12) pinned
    at its coupling threshold; the verdict demands a monotone drop of P(R0)
    below ceiling_factor times its first value.
    """
    depth = max(model.potential(p).depth for p in PAIRS)
    targets = sorted((abs(t) * depth for t in energy_targets), reverse=True)
    if r0 is None:
        r0 = 10.0 * model.max_range()
    if quad is None:
        quad = Quadrature.build(r_max=12.0 * model.max_range())

    rows: list[DichotomyRow] = []
    for tgt in targets:
        if scenario is Scenario.NO_PAIR_RESONANCE:
            m, e_rel, gs = _couplings_at_energy(model, basis, -tgt, "scale", scale_bracket)
            for pair in PAIRS:
                lam = m.couplings.get(pair)
                if lam == 0.0:
                    continue
                cls = tb.classify_pair(
                    m.scaled_potential(pair), lam, quad, m.couplings.margin_epsilon
                )
                if cls.category is not tb.PairClass.UNBOUND_WITH_MARGIN:
                    raise PairDriftError(
                        f"pair {pair} classified {cls.category.value} at scale path point"
                    )
        else:
            lam12 = model.couplings.lambda12
            cls = tb.classify_pair(
                model.scaled_potential("12"), lam12, quad, model.couplings.margin_epsilon
            )
            if cls.category is not tb.PairClass.RESONANT:
                raise PairDriftError(
                    f"pair 12 must sit at its coupling threshold (got {cls.category.value})"
                )
            theta_hi = model.couplings.lambda13
            m, e_rel, gs = _couplings_at_energy(
                model, basis, -tgt, "13", (1e-6 * theta_hi, theta_hi)
            )
        if e_rel >= -EPS_NUM:
            raise PathPointUnboundError(f"lost the bound state at target {tgt:.3e}")
        rows.append(
            DichotomyRow(
                couplings=m.couplings,
                e_gr=e_rel,
                p_r0=vr.probability_inside(gs, r0),
                p_r1=vr.probability_inside(gs, 3.0 * r0),
            )
        )

    p = [row.p_r0 for row in rows]
    if scenario is Scenario.NO_PAIR_RESONANCE:
        verdict = "non-spreading" if min(p) >= floor else "inconclusive"
    else:
        monotone = all(b <= a * (1.0 + 1e-9) for a, b in zip(p, p[1:]))
        collapsed = p[-1] <= ceiling_factor * p[0]
        verdict = "totally-spreading" if monotone and collapsed else "inconclusive"
    return DichotomyReport(
        scenario=scenario,
        r0=float(r0),
        rows=tuple(rows),
        verdict=verdict,
        floor=floor,
        ceiling_factor=ceiling_factor,
    )


@dataclass(frozen=True)
class EfimovScan:
    levels: tuple[float, ...]
    count: int
    ratios: tuple[float, ...]


def efimov_scan(
    model: ModelSpec,
    basis: vr.GaussianBasis,
    resonance_tol: float = 1e-4,
    quad: Optional[Quadrature] = None,
) -> EfimovScan:
    """Negative-energy levels with (at least) two pairs at their thresholds."""
    if quad is None:
        quad = Quadrature.build(r_max=12.0 * model.max_range())
    resonant = 0
    for pair in PAIRS:
        lam = model.couplings.get(pair)
        if lam == 0 or model.potential(pair).is_zero():
            continue
        cls = tb.classify_pair(
            model.scaled_potential(pair), lam, quad, model.couplings.margin_epsilon,
            resonance_tol=resonance_tol,
        )
        if cls.category is tb.PairClass.RESONANT:
            resonant += 1
    if resonant < 2:
        raise PairDriftError(f"need two resonant pairs, found {resonant}")
    gs = vr.solve_ground(model, basis)
    thr = vr.hvz_bottom(model)
    levels = tuple(float(e) for e in gs.eigenvalues if e < thr - EPS_NUM)
    ratios = tuple(levels[i] / levels[i + 1] for i in range(len(levels) - 1))
    return EfimovScan(levels=levels, count=len(levels), ratios=ratios)


@dataclass(frozen=True)
class MerkurievRow:
    k: float
    r: float
    closed_form: float
    quadrature: float


def merkuriev_spreading(k_list: Sequence[float], r: float) -> list[MerkurievRow]:
    """Ball probability of the normalized hyperradial tail family exp(-k rho)/rho^{5/2}.

    The rho^5 volume element cancels the prefactor, so P(R) = 1 - exp(-2kR);
    each row carries an independent quadrature evaluation of the same ratio.
    """
    if r <= 0:
        raise ValueError("R must be positive")
    rows = []
    x, w = np.polynomial.legendre.leggauss(200)
    for k in k_list:
        if k <= 0:
            raise ValueError("k must be positive")
        closed = 1.0 - math.exp(-2.0 * k * r)
        inner = 0.5 * r * np.sum(w * np.exp(-2.0 * k * (0.5 * r * (x + 1.0))))
        span = 40.0 / k
        t = 0.5 * span * (x + 1.0) + r
        outer = 0.5 * span * np.sum(w * np.exp(-2.0 * k * t))
        rows.append(
            MerkurievRow(
                k=float(k), r=float(r), closed_form=closed,
                quadrature=float(inner / (inner + outer)),
            )
        )
    return rows


@dataclass(frozen=True)
class CrossValidationRow:
    scale: float
    e_gr: float
    bs_radius: float
    consistent: bool


@dataclass(frozen=True)
class CrossValidationReport:
    variational_scale: float
    bs_scale: float
    rel_disagreement: float
    rows: tuple[CrossValidationRow, ...]

    @property
    def passed(self) -> bool:
        return self.rel_disagreement <= 0.02 and all(r.consistent for r in self.rows)


def cross_validate(
    model: ModelSpec,
    basis: vr.GaussianBasis,
    scale_bracket: tuple[float, float] = (0.5, 1.0),
    n_grid: int = 10,
    grid_span: tuple[float, float] = (0.85, 1.15),
    z_pair: tuple[float, float] = (1e-2, 1e-3),
    **grid_kw,
) -> CrossValidationReport:
    """Threshold agreement plus sign consistency on a coupling scan.

    The two solvers share no code path; the scan checks radius < 1 wherever
    the variational energy says unbound and radius > 1 wherever it says
    clearly bound.
    """
    lo, hi = scale_bracket
    s_lo, s_hi = lo, hi
    e_lo = vr.solve_ground(model.with_couplings(model.couplings.scaled(s_lo)), basis).energy
    e_hi = vr.solve_ground(model.with_couplings(model.couplings.scaled(s_hi)), basis).energy
    if not (e_lo >= -EPS_NUM and e_hi < -EPS_NUM):
        raise BracketInvalidError("scale bracket does not straddle the variational threshold")
    while s_hi - s_lo > 1e-4 * s_hi:
        mid = 0.5 * (s_lo + s_hi)
        e = vr.solve_ground(model.with_couplings(model.couplings.scaled(mid)), basis).energy
        if e < -EPS_NUM:
            s_hi = mid
        else:
            s_lo = mid
    s_var = 0.5 * (s_lo + s_hi)

    s_bs = fd.bs_threshold_coupling(
        model, bracket=scale_bracket, tol=2e-4, z_pair=z_pair, **grid_kw
    )

    rows = []
    for s in np.linspace(grid_span[0] * s_var, grid_span[1] * s_var, n_grid):
        m = model.with_couplings(model.couplings.scaled(float(s)))
        e = vr.solve_ground(m, basis).energy
        rad = fd.radius_at_zero(m, z_pair=z_pair, **grid_kw)
        if e >= -EPS_NUM:
            ok = rad < 1.0
        elif e < -1e-4:
            ok = rad > 1.0
        else:
            ok = True  # within the numerical dead band either sign is defensible
        rows.append(CrossValidationRow(scale=float(s), e_gr=float(e), bs_radius=rad, consistent=ok))

    rel = abs(s_bs - s_var) / s_var
    return CrossValidationReport(
        variational_scale=s_var,
        bs_scale=s_bs,
        rel_disagreement=rel,
        rows=tuple(rows),
    )
