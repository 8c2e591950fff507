"""Independent 3-body solver: correlated Gaussians on the mass-scaled frame.

Basis functions are exp(-a x^2 - b y^2 - c x.y) on the (12)-frame Jacobi
coordinates (zero total angular momentum ansatz).  Overlap and kinetic
matrix elements are closed form; pair potentials reduce to a 1D radial
integral against the Gaussian pair-separation density.  The localization
probability P(R) restricts the 6D density to a ball, which collapses to a
1D hyperradial quadrature with a Bessel weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ive

from .model import ModelSpec, PAIRS, Quadrature
from .faddeev import kinematic_rotation, pair_separation_coeffs
from . import twobody


class IllConditionedBasisError(RuntimeError):
    """Gram matrix unusable even after spectral-floor regularization."""


@dataclass(frozen=True, eq=False)
class GaussianBasis:
    """Width parameters (a_n, b_n, c_n) of exp(-a x^2 - b y^2 - c x.y)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if not (np.all(self.a > 0) and np.all(self.b > 0)):
            raise ValueError("diagonal widths must be positive")
        if not np.all(self.a * self.b - 0.25 * self.c**2 > 0):
            raise ValueError("width matrices must be positive definite")

    @property
    def size(self) -> int:
        return self.a.size

    def merged(self, other: "GaussianBasis") -> "GaussianBasis":
        return GaussianBasis(
            a=np.concatenate([self.a, other.a]),
            b=np.concatenate([self.b, other.b]),
            c=np.concatenate([self.c, other.c]),
        )


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Deterministic geometric-progression basis, optionally frame adapted.

    correlations is either a tuple of cross-term levels kappa (c =
    kappa * 2 * sqrt(a*b)) or the string "frames", which instead places
    product Gaussians on each pair's own Jacobi frame and rotates them into
    the common frame (near-threshold states are strongly pair-clustered, so
    this is the workhorse for threshold scans).
    """

    scale_min_x: float = 0.4
    scale_max_x: float = 12.0
    n_x: int = 8
    scale_min_y: float = 0.4
    scale_max_y: float = 30.0
    n_y: int = 8
    correlations: Union[tuple, str] = (-0.6, 0.0, 0.6)
    n_random: int = 0
    seed: Optional[int] = None
    symmetrize_12: bool = False


def build_basis(spec: BasisSpec, masses=None) -> GaussianBasis:
    """Materialize a basis; frames mode needs the mass set for the rotations."""
    sx = np.geomspace(spec.scale_min_x, spec.scale_max_x, spec.n_x)
    sy = np.geomspace(spec.scale_min_y, spec.scale_max_y, spec.n_y)
    rows = []
    if spec.correlations == "frames":
        if masses is None:
            raise ValueError("frames-mode basis needs masses")
        for pair in PAIRS:
            R = kinematic_rotation(masses, "12", pair)
            for si in sx:
                for so in sy:
                    D = np.diag([1.0 / si**2, 1.0 / so**2])
                    Q = R.T @ D @ R
                    rows.append((Q[0, 0], Q[1, 1], 2.0 * Q[0, 1]))
    else:
        for kappa in spec.correlations:
            if not -1.0 < kappa < 1.0:
                raise ValueError("correlation levels must lie in (-1, 1)")
            for si in sx:
                for so in sy:
                    a, b = 1.0 / si**2, 1.0 / so**2
                    rows.append((a, b, kappa * 2.0 * math.sqrt(a * b)))
    if spec.n_random:
        if spec.seed is None:
            raise ValueError("stochastic refinement needs a seed")
        rng = np.random.default_rng(spec.seed)
        la, lb = np.log(1.0 / spec.scale_max_x**2), np.log(1.0 / spec.scale_min_x**2)
        lc, ld = np.log(1.0 / spec.scale_max_y**2), np.log(1.0 / spec.scale_min_y**2)
        for _ in range(spec.n_random):
            a = math.exp(rng.uniform(la, lb))
            b = math.exp(rng.uniform(lc, ld))
            kappa = rng.uniform(-0.9, 0.9)
            rows.append((a, b, kappa * 2.0 * math.sqrt(a * b)))
    if spec.symmetrize_12:
        rows += [(a, b, -c) for (a, b, c) in rows if c != 0.0]

    # prune near-duplicates (frames mode generates exact repeats at s_i = s_o)
    seen, keep = set(), []
    for a, b, c in rows:
        key = (round(math.log(a), 10), round(math.log(b), 10), round(c / math.sqrt(a * b), 10))
        if key not in seen:
            seen.add(key)
            keep.append((a, b, c))
    arr = np.array(keep)
    return GaussianBasis(a=arr[:, 0], b=arr[:, 1], c=arr[:, 2])


# ---------------------------------------------------------------------------
# matrix elements


def _pair_forms(basis: GaussianBasis):
    """Pairwise sums of width matrices: Ba, Bb, Bc2 (= B12 entry) and det."""
    a, b, c = basis.a, basis.b, basis.c
    Ba = a[:, None] + a[None, :]
    Bb = b[:, None] + b[None, :]
    Bc2 = 0.5 * (c[:, None] + c[None, :])
    det = Ba * Bb - Bc2**2
    return Ba, Bb, Bc2, det


def overlap_matrix(basis: GaussianBasis) -> np.ndarray:
    _, _, _, det = _pair_forms(basis)
    return np.pi**3 / det**1.5


def kinetic_matrix(basis: GaussianBasis) -> np.ndarray:
    a, b, c = basis.a, basis.b, basis.c
    Ba, Bb, Bc2, det = _pair_forms(basis)
    am, bm, cm2 = a[:, None], b[:, None], 0.5 * c[:, None]
    an, bn, cn2 = a[None, :], b[None, :], 0.5 * c[None, :]
    tr = (
        (am * Bb - cm2 * Bc2) * an
        + (-am * Bc2 + cm2 * Ba) * cn2
        + (cm2 * Bb - bm * Bc2) * cn2
        + (-cm2 * Bc2 + bm * Ba) * bn
    ) / det
    return 6.0 * tr * overlap_matrix(basis)


def pair_width_matrix(basis: GaussianBasis, coeffs: tuple[float, float]) -> np.ndarray:
    """Inverse variance c_B of the pair-separation marginal |P x + Q y|."""
    P, Q = coeffs
    Ba, Bb, Bc2, det = _pair_forms(basis)
    quad_form = (P * P * Bb - 2.0 * P * Q * Bc2 + Q * Q * Ba) / det
    return 1.0 / quad_form


def potential_matrix(
    basis: GaussianBasis, model: ModelSpec, pair: str, quad: Optional[Quadrature] = None
) -> np.ndarray:
    """<m| V_pair(|separation|) |n> without the coupling factor."""
    pot = model.potential(pair)
    cb = pair_width_matrix(basis, pair_separation_coeffs(model.masses, pair))
    S = overlap_matrix(basis)
    if pot.kind == "gaussian":
        return S * pot.depth * (cb / (cb + 1.0 / pot.range**2)) ** 1.5
    if quad is None:
        quad = Quadrature.for_potential(pot)
    w, r = quad.weights, quad.nodes
    integrand = r * r * pot.value(r)
    dens = np.exp(-cb[..., None] * r[None, None, :] ** 2)
    radial = 4.0 * np.pi * np.einsum("mnr,r->mn", dens, w * integrand)
    return S * (cb / np.pi) ** 1.5 * radial


def hamiltonian_matrices(model: ModelSpec, basis: GaussianBasis):
    """(H, S) in the normalized basis (unit Gram diagonal)."""
    S = overlap_matrix(basis)
    H = kinetic_matrix(basis)
    for pair in PAIRS:
        lam = model.couplings.get(pair)
        if lam > 0 and not model.potential(pair).is_zero():
            H = H - lam * potential_matrix(basis, model, pair)
    norm = 1.0 / np.sqrt(np.diag(S))
    return H * np.outer(norm, norm), S * np.outer(norm, norm)


@dataclass(frozen=True, eq=False)
class GroundState:
    energy: float
    coefficients: np.ndarray  # in the unit-diagonal normalized basis
    gram: np.ndarray
    basis: GaussianBasis
    eigenvalues: np.ndarray  # full retained spectrum, ascending

    def __post_init__(self):
        norm = float(self.coefficients @ self.gram @ self.coefficients)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state normalization defect {norm - 1.0:.2e}")


def solve_ground(
    model: ModelSpec,
    basis: GaussianBasis,
    gram_floor: float = 1e-12,
) -> GroundState:
    """Generalized symmetric eigensolve with spectral-floor Gram regularization."""
    H, S = hamiltonian_matrices(model, basis)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(S))):
        raise IllConditionedBasisError("non-finite matrix elements")
    vals, vecs = np.linalg.eigh(S)
    keep = vals > gram_floor * vals[-1]
    if not np.any(keep):
        raise IllConditionedBasisError("Gram spectrum collapsed under the floor")
    Y = vecs[:, keep] / np.sqrt(vals[keep])[None, :]
    Hp = Y.T @ H @ Y
    evals, evecs = np.linalg.eigh(Hp)
    coeff = Y @ evecs[:, 0]
    return GroundState(
        energy=float(evals[0]),
        coefficients=coeff,
        gram=S,
        basis=basis,
        eigenvalues=evals,
    )


def hvz_bottom(model: ModelSpec, quad: Optional[Quadrature] = None) -> float:
    """Bottom of the essential spectrum: the lowest pair level, or zero."""
    bottom = 0.0
    for pair in PAIRS:
        lam = model.couplings.get(pair)
        if lam <= 0 or model.potential(pair).is_zero():
            continue
        e0 = twobody.shooting_ground_energy(model.scaled_potential(pair), lam)
        if e0 is not None:
            bottom = min(bottom, e0)
    return bottom


def bound_state_count(
    model: ModelSpec,
    basis: GaussianBasis,
    tol: float = 1e-8,
) -> int:
    gs = solve_ground(model, basis)
    return int(np.sum(gs.eigenvalues < hvz_bottom(model) - tol))


# ---------------------------------------------------------------------------
# localization probability


def _bessel_ratio_scaled(w: np.ndarray) -> np.ndarray:
    """exp(-w) * I_1(w)/w evaluated stably from w = 0 through w ~ 1e13."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-6
    large = w > 1e8  # scipy's ive loses it well above this; use the asymptotic
    safe = np.where(small | large, 1.0, w)
    out = ive(1, safe) / safe
    out = np.where(large, 1.0 / np.sqrt(2.0 * np.pi * np.maximum(w, 1.0) ** 3), out)
    return np.where(small, (0.5 + w * w / 16.0) * np.exp(-np.abs(w)), out)


def ball_overlap(Ba, Bb, Bc2, R: float, n_rho: int = 160) -> np.ndarray:
    """Integral of exp(-xi^T B xi) over the 6D ball |xi| <= R, vectorized over forms.

    Diagonalizing the 2x2 form gives eigenvalues beta1/2; the angular part
    integrates to a Bessel I_1 weight and a single hyperradial quadrature
    remains:  2 pi^3 int_0^R rho^5 e^{-mean*rho^2} [I_1(d rho^2)/(d rho^2)] drho.
    """
    tr = 0.5 * (Ba + Bb)
    gap = np.sqrt(0.25 * (Ba - Bb) ** 2 + Bc2**2)  # |beta2 - beta1| / 2
    det = Ba * Bb - Bc2**2
    beta_min = det / (tr + gap)  # avoids the tr - gap cancellation
    from .model import _gauss_legendre_panels

    # geometric panels spanning every Gaussian scale present in the batch,
    # capped at R; the integrand peaks at rho ~ sqrt(2.5/beta)
    lo = 0.05 / math.sqrt(float(np.max(tr + gap)))
    hi = 6.0 / math.sqrt(max(float(np.min(beta_min)), 1e-300))
    hi = min(hi, R)
    lo = min(lo, 0.25 * hi)
    n_panels = max(4, int(math.ceil(math.log(hi / lo) / math.log(3.0))) + 1)
    edges = [0.0] + list(np.geomspace(lo, hi, n_panels))
    rho, wr, _ = _gauss_legendre_panels(edges, [max(8, n_rho // n_panels)] * n_panels)
    rho2 = rho * rho
    # stable product exp(-tr*rho2) * I1(gap*rho2)/(gap*rho2): ive folds the
    # exponential growth of I_1 into the damping factor
    w = gap[..., None] * rho2
    ratio = _bessel_ratio_scaled(w)
    damp = np.exp(-beta_min[..., None] * rho2)
    integ = np.einsum("...r,r->...", ratio * damp, wr * rho**5)
    return 2.0 * np.pi**3 * integ


def probability_inside(gs: GroundState, R: float) -> float:
    """P(R): probability mass of the normalized state inside the 6D ball."""
    if R <= 0:
        return 0.0
    basis = gs.basis
    Ba, Bb, Bc2, _ = _pair_forms(basis)
    snorm = 1.0 / np.sqrt(np.diag(overlap_matrix(basis)))
    ball = ball_overlap(Ba, Bb, Bc2, R) * np.outer(snorm, snorm)
    p = float(gs.coefficients @ ball @ gs.coefficients)
    return min(max(p, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class SpreadingProbe:
    radii: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must increase")
        p = self.probabilities
        if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(np.diff(p) < -1e-9):
            raise ValueError("P(R) must be non-decreasing in R")


def spreading_probe(gs: GroundState, radii: Sequence[float]) -> SpreadingProbe:
    radii = np.asarray(sorted(radii), dtype=float)
    probs = np.array([probability_inside(gs, R) for R in radii])
    return SpreadingProbe(radii=radii, probabilities=probs)
