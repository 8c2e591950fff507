"""Three-body operator calculus in the s-wave-reduced mixed representation.

Each pair component lives on its own Jacobi frame as a function of
(x = pair radial coordinate, p = magnitude of the conjugate spectator
momentum), reduced so that the L2 norm is the plain double integral.  The
free resolvent is diagonal in p within a frame; coupling between pairs goes
through the orthogonal kinematic rotation of frames.

For an input pair (column frame, coordinates rotated as
x_col = a x_row + b y_row, y_col = c x_row + d y_row) the s-wave projected
matrix element of sqrt(V_row) (H0 + z^2)^-1 sqrt(V_col) collapses to a single
angular integral because the row resolvent acts on sin(nu r) eigenfunctions:

    T(r,p;s,q) = pq/(pi |b|^3) * int_-1^1 du sin(nu r) sin(m s) / (nu m D^2)

    nu^2 = (a^2 p^2 + q^2 - 2 d p q u)/b^2         (row-side wave number)
    m^2  = (a^2 q^2 + p^2 - 2 d p q u)/b^2         (column-side wave number)
    D^2  = (p^2 + q^2 - 2 d p q u)/b^2 + z^2       (shared denominator)

T is exactly symmetric under (r,p) <-> (s,q) together with row <-> col.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad as adaptive_quad
import scipy.sparse.linalg

from .model import (
    MassSet,
    ModelSpec,
    PAIRS,
    PotentialSpec,
    Quadrature,
    kernel_constants,
)
from . import twobody


class PairThresholdError(RuntimeError):
    """A pair sits at or above its coupling threshold; the resolvent series diverges."""


class AngleQuadratureError(RuntimeError):
    """Doubling the angle rule moved a block norm beyond tolerance."""


class BracketError(ValueError):
    """Root bracket does not straddle the target."""


def t_function(p):
    """Momentum cutoff profile: sqrt(p) - 1 inside the unit ball, zero outside."""
    p = np.asarray(p, dtype=float)
    return np.where(p <= 1.0, np.sqrt(p) - 1.0, 0.0)


# ---------------------------------------------------------------------------
# kinematic rotations between pair frames


def _frame_matrix(masses: MassSet, pair: str) -> np.ndarray:
    """Rows of (x_pair, y_pair) in the basis (r2-r1, r3-r1)."""
    m1, m2, m3 = masses.masses
    mu = masses.mu(pair)
    bm = masses.big_m(pair)
    sx, sy = math.sqrt(2.0 * mu), math.sqrt(2.0 * bm)
    if pair == "12":
        return np.array([[sx, 0.0], [-sy * m2 / (m1 + m2), sy]])
    if pair == "13":
        return np.array([[0.0, sx], [sy, -sy * m3 / (m1 + m3)]])
    if pair == "23":
        return np.array([[-sx, sx], [-sy * m2 / (m2 + m3), -sy * m3 / (m2 + m3)]])
    raise ValueError(f"unknown pair {pair!r}")


def kinematic_rotation(masses: MassSet, row_pair: str, col_pair: str) -> np.ndarray:
    """2x2 orthogonal map taking row-frame (x, y) to col-frame (x, y)."""
    R = _frame_matrix(masses, col_pair) @ np.linalg.inv(_frame_matrix(masses, row_pair))
    if np.max(np.abs(R @ R.T - np.eye(2))) > 1e-12:
        raise AssertionError("kinematic rotation lost orthogonality")
    return R


def pair_separation_coeffs(masses: MassSet, pair: str, frame_pair: str = "12"):
    """(P, Q) with physical pair separation = P*x + Q*y in the frame_pair coordinates."""
    inv = np.linalg.inv(_frame_matrix(masses, frame_pair))
    u0, v0 = inv[0], inv[1]  # rows: coefficients of (x, y) in r2-r1 and r3-r1
    sep = {"12": u0, "13": v0, "23": v0 - u0}[pair]
    return float(sep[0]), float(sep[1])


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class MixedGrid:
    """Product grid for one pair: radial x on (0, r_max], momentum p on (0, p_max].

    Momentum panels refine geometrically toward p = 0 (scale set by z, where
    the small-momentum structure of the kernels lives) and carry an edge at
    |p| = 1 so the cutoff profile t(p) is never straddled.
    """

    x_quad: Quadrature
    p_nodes: np.ndarray
    p_weights: np.ndarray
    p_edges: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if 1.0 < self.p_nodes[-1] and 1.0 not in self.p_edges:
            raise ValueError("momentum panels must carry an edge at |p| = 1")

    @property
    def n_x(self) -> int:
        return self.x_quad.n

    @property
    def n_p(self) -> int:
        return self.p_nodes.size

    @property
    def dim(self) -> int:
        return self.n_x * self.n_p


def momentum_edges(z: float, p_max: float = 4.0) -> list[float]:
    edges = [0.0]
    t = max(z, 1e-6) / 3.0
    while t < 0.25:
        edges.append(t)
        t *= 4.0
    edges += [0.5, 1.0]
    if p_max > 2.0:
        edges.append(2.0)
    edges.append(p_max)
    return sorted(set(edges))


def build_mixed_grid(
    pot_scaled: PotentialSpec,
    z: float,
    n_x: int = 28,
    n_p_per_panel: int = 6,
    p_max: float = 4.0,
) -> MixedGrid:
    x_quad = Quadrature.for_potential(pot_scaled, n=n_x)
    edges = momentum_edges(z, p_max)
    counts = [n_p_per_panel] * (len(edges) - 1)
    from .model import _gauss_legendre_panels

    pn, pw, _ = _gauss_legendre_panels(edges, counts)
    return MixedGrid(x_quad=x_quad, p_nodes=pn, p_weights=pw, p_edges=tuple(edges))


# ---------------------------------------------------------------------------
# block assembly


def assemble_diagonal_block(
    pot: PotentialSpec, coupling: float, z: float, grid: MixedGrid
) -> np.ndarray:
    """Per-momentum stack of 2-body kernels at k = sqrt(p^2 + z^2), shape (n_p, n_x, n_x)."""
    if z <= 0:
        raise ValueError("z must be positive")
    out = np.empty((grid.n_p, grid.n_x, grid.n_x))
    for i, p in enumerate(grid.p_nodes):
        k = math.sqrt(p * p + z * z)
        out[i] = twobody.assemble_bs(pot, coupling, k, grid.x_quad).matrix
    return out


def assemble_offdiagonal_block(
    masses: MassSet,
    row_pair: str,
    col_pair: str,
    pot_row: PotentialSpec,
    pot_col: PotentialSpec,
    coupling_row: float,
    coupling_col: float,
    z: float,
    grid_row: MixedGrid,
    grid_col: MixedGrid,
    n_angle: int = 32,
    check_angle_resolution: bool = False,
) -> np.ndarray:
    """Cross-frame coupling block, shape (n_p*n_x of row, n_p*n_x of col).

    pot_row / pot_col are the wells expressed in each pair's scaled internal
    coordinate; couplings enter symmetrically as sqrt(lam_row * lam_col).
    Entries carry the quadrature weights of both sides, so the stacked system
    acts on plain coefficient vectors.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    if row_pair == col_pair:
        raise ValueError("off-diagonal block needs distinct pairs")

    R = kinematic_rotation(masses, row_pair, col_pair)
    a, b, d = R[0, 0], R[0, 1], R[1, 1]

    def build(nu_angle: int) -> np.ndarray:
        u, wu = np.polynomial.legendre.leggauss(nu_angle)
        p = grid_row.p_nodes
        q = grid_col.p_nodes
        P = p[:, None, None]
        Q = q[None, :, None]
        U = u[None, None, :]
        nu2 = (a * a * P**2 + Q**2 - 2.0 * d * P * Q * U) / (b * b)
        m2 = (a * a * Q**2 + P**2 - 2.0 * d * P * Q * U) / (b * b)
        D2 = (P**2 + Q**2 - 2.0 * d * P * Q * U) / (b * b) + z * z
        nu = np.sqrt(np.maximum(nu2, 0.0))
        m = np.sqrt(np.maximum(m2, 0.0))
        r = grid_row.x_quad.nodes
        s = grid_col.x_quad.nodes
        # sin(nu r)/nu and sin(m s)/m, stable at vanishing wave numbers
        SR = r[None, None, None, :] * np.sinc(nu[..., None] * r[None, None, None, :] / np.pi)
        SC = s[None, None, None, :] * np.sinc(m[..., None] * s[None, None, None, :] / np.pi)
        coef = (P * Q / (np.pi * abs(b) ** 3)) * wu[None, None, :] / D2
        T = np.einsum("pqur,pqus,pqu->prqs", SR, SC, coef, optimize=True)
        return T

    T = build(n_angle)
    if check_angle_resolution:
        T2 = build(2 * n_angle)
        scale = max(np.max(np.abs(T2)), 1e-300)
        if np.max(np.abs(T - T2)) / scale > 1e-4:
            raise AngleQuadratureError("angle rule under-resolves the rotation kernel")
        T = T2

    row_fold = np.sqrt(
        grid_row.p_weights[:, None]
        * grid_row.x_quad.weights[None, :]
        * coupling_row
        * pot_row.value(grid_row.x_quad.nodes)[None, :]
    )
    col_fold = np.sqrt(
        grid_col.p_weights[:, None]
        * grid_col.x_quad.weights[None, :]
        * coupling_col
        * pot_col.value(grid_col.x_quad.nodes)[None, :]
    )
    T *= row_fold[:, :, None, None]
    T *= col_fold[None, None, :, :]
    return T.reshape(grid_row.dim, grid_col.dim)


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Assembled coupled-pair system at spectral point z (energy -z^2).

    Diagonal entries are kept in their momentum-fibered form; off-diagonal
    entries are dense cross-frame matrices.  Couplings are folded in
    symmetrically (sqrt(lam_row * lam_col) on each block).
    """

    z: float
    pairs: tuple[str, ...]
    grids: dict
    diagonal: dict  # pair -> (n_p, n_x, n_x)
    offdiagonal: dict  # (row, col) -> matrix
    couplings: dict

    def diag_norm(self, pair: str) -> float:
        """Operator norm of the pair's diagonal block (sup over momentum fibers)."""
        stack = self.diagonal[pair]
        return max(float(np.linalg.eigvalsh(stack[i])[-1]) for i in range(stack.shape[0]))

    def dim(self) -> int:
        return sum(self.grids[p].dim for p in self.pairs)


def assemble_block_operator(
    model: ModelSpec,
    z: float,
    n_x: int = 28,
    n_p_per_panel: int = 6,
    p_max: float = 4.0,
    n_angle: int = 32,
) -> BlockOperator:
    """Build all active blocks of the coupled system for the given model."""
    active = [
        pair
        for pair in PAIRS
        if model.couplings.get(pair) > 0 and not model.potential(pair).is_zero()
    ]
    grids = {
        pair: build_mixed_grid(model.scaled_potential(pair), z, n_x, n_p_per_panel, p_max)
        for pair in active
    }
    diagonal = {
        pair: assemble_diagonal_block(
            model.scaled_potential(pair), model.couplings.get(pair), z, grids[pair]
        )
        for pair in active
    }
    offdiag = {}
    for i, row in enumerate(active):
        for col in active[i + 1 :]:
            B = assemble_offdiagonal_block(
                model.masses,
                row,
                col,
                model.scaled_potential(row),
                model.scaled_potential(col),
                model.couplings.get(row),
                model.couplings.get(col),
                z,
                grids[row],
                grids[col],
                n_angle=n_angle,
            )
            offdiag[(row, col)] = B
            offdiag[(col, row)] = B.T.copy()
    return BlockOperator(
        z=z,
        pairs=tuple(active),
        grids=grids,
        diagonal=diagonal,
        offdiagonal=offdiag,
        couplings={pair: model.couplings.get(pair) for pair in active},
    )


# ---------------------------------------------------------------------------
# the coupled solve


@dataclass(frozen=True, eq=False)
class FaddeevSolution:
    spectral_radius: float
    components: dict
    residual: float
    z: float


def faddeev_solve(
    op: BlockOperator, tol: float = 1e-10, maxiter: int = 2000
) -> FaddeevSolution:
    """Principal eigenvalue of the component iteration map.

    The map sends the stacked components phi_row to
    R_row * sum_{col != row} B[row, col] phi_col with
    R = (1 - diagonal)^-1 applied fiber by fiber; spectral radius one signals
    a bound state at energy -z^2.
    """
    pairs = op.pairs
    resolvents = {}
    for pair in pairs:
        stack = op.diagonal[pair]
        n_p, n_x, _ = stack.shape
        R = np.empty_like(stack)
        for i in range(n_p):
            vals = np.linalg.eigvalsh(stack[i])
            if vals[-1] >= 1.0 - 1e-12:
                raise PairThresholdError(
                    f"pair {pair}: diagonal fiber eigenvalue {vals[-1]:.6f} >= 1 at z={op.z}"
                )
            R[i] = np.linalg.inv(np.eye(n_x) - stack[i])
        resolvents[pair] = R

    if len(pairs) < 2:
        # fewer than two coupled pairs: no exchange driving, radius vanishes
        comp = {p: np.zeros(op.grids[p].dim) for p in pairs}
        return FaddeevSolution(0.0, comp, 0.0, op.z)

    dims = {pair: op.grids[pair].dim for pair in pairs}
    offsets, off = {}, 0
    for pair in pairs:
        offsets[pair] = off
        off += dims[pair]
    total = off

    def split(v):
        return {p: v[offsets[p] : offsets[p] + dims[p]] for p in pairs}

    def apply_r(pair, vec):
        grid = op.grids[pair]
        x = vec.reshape(grid.n_p, grid.n_x)
        return np.einsum("pij,pj->pi", resolvents[pair], x).ravel()

    def matvec(v):
        comp = split(v)
        out = np.zeros_like(v)
        for row in pairs:
            acc = np.zeros(dims[row])
            for col in pairs:
                if col == row:
                    continue
                acc += op.offdiagonal[(row, col)] @ comp[col]
            out[offsets[row] : offsets[row] + dims[row]] = apply_r(row, acc)
        return out

    v0 = np.ones(total)
    lin = scipy.sparse.linalg.LinearOperator((total, total), matvec=matvec)
    try:
        vals, vecs = scipy.sparse.linalg.eigs(
            lin, k=1, which="LM", v0=v0, maxiter=maxiter, tol=tol
        )
        radius = float(np.abs(vals[0]))
        vec = np.real(vecs[:, 0])
    except scipy.sparse.linalg.ArpackNoConvergence:
        vec = v0 / np.linalg.norm(v0)
        radius = 0.0
        for _ in range(maxiter):
            w = matvec(vec)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                radius = 0.0
                break
            new = w / nrm
            if abs(nrm - radius) < tol * max(nrm, 1.0):
                radius = nrm
                vec = new
                break
            radius, vec = nrm, new

    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    comp = split(vec)

    # defect of the un-split component identity at the returned eigenvalue:
    # radius*(1 - diag) phi - offdiag phi should vanish
    defect = 0.0
    for row in pairs:
        grid = op.grids[row]
        x = comp[row].reshape(grid.n_p, grid.n_x)
        diag_applied = np.einsum("pij,pj->pi", op.diagonal[row], x).ravel()
        acc = np.zeros(dims[row])
        for col in pairs:
            if col != row:
                acc += op.offdiagonal[(row, col)] @ comp[col]
        defect += np.linalg.norm(radius * (comp[row] - diag_applied) - acc) ** 2
    residual = math.sqrt(defect) / max(np.linalg.norm(vec), 1e-300)

    return FaddeevSolution(
        spectral_radius=radius, components=comp, residual=residual, z=op.z
    )


def spectral_radius(model: ModelSpec, z: float, **grid_kw) -> float:
    return faddeev_solve(assemble_block_operator(model, z, **grid_kw)).spectral_radius


def radius_at_zero(model: ModelSpec, z_pair=(1e-2, 1e-3), **grid_kw) -> float:
    """Linear-in-z extrapolation of the spectral radius to the threshold point."""
    z2, z3 = z_pair
    r2 = spectral_radius(model, z2, **grid_kw)
    r3 = spectral_radius(model, z3, **grid_kw)
    return float((z2 * r3 - z3 * r2) / (z2 - z3))


def bs_threshold_coupling(
    model: ModelSpec,
    bracket: tuple[float, float],
    tol: float = 1e-3,
    z_pair=(1e-2, 1e-3),
    **grid_kw,
) -> float:
    """Overall coupling scale at which the extrapolated spectral radius reaches one."""
    lo, hi = bracket
    f_lo = radius_at_zero(model.with_couplings(model.couplings.scaled(lo)), z_pair, **grid_kw) if lo > 0 else 0.0
    f_hi = radius_at_zero(model.with_couplings(model.couplings.scaled(hi)), z_pair, **grid_kw)
    if not (f_lo < 1.0 <= f_hi):
        raise BracketError(
            f"radius at bracket ends {f_lo:.4f}, {f_hi:.4f} does not straddle 1"
        )
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        f = radius_at_zero(model.with_couplings(model.couplings.scaled(mid)), z_pair, **grid_kw)
        if f < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# inequality suite


@dataclass(frozen=True)
class HsNormResult:
    hs_norm_sq: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.hs_norm_sq <= self.bound * (1.0 + 1e-12)


def hs_norm_K2(
    pot12: PotentialSpec,
    pot23: PotentialSpec,
    frame,
    z: float,
    quad: Quadrature,
) -> HsNormResult:
    """Hilbert-Schmidt norm^2 of the singular part of the rotation coupling.

    The squared kernel factorizes into the pair-volume constants times a
    momentum integral over the unit ball; the closed bound replaces that
    integral by its p^-2 majorant.
    """
    if not 0 < z:
        raise ValueError("z must be positive")
    kc = kernel_constants(pot12, pot23, frame, quad)
    # substitute p = t^2: the sqrt(p) cutoff profile becomes smooth in t
    t, wt = np.polynomial.legendre.leggauss(80)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    bracket = 1.0 / (z + 1.0 + t_function(t**2)) - 1.0 / (z + 1.0)
    integrand = 4.0 * np.pi * t**4 * bracket**2 / np.sqrt(t**4 + z * z) * 2.0 * t
    ip = float(np.sum(wt * integrand))
    hs = kc.c * kc.c_prime * kc.c_tilde * ip / (2.0**7 * np.pi**5)
    bound = kc.c * kc.c_prime * kc.c_tilde / (2.0**5 * np.pi**4)
    return HsNormResult(hs_norm_sq=hs, bound=bound)


@dataclass(frozen=True)
class SubthresholdRow:
    z: float
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class SubthresholdReport:
    precondition_met: bool
    delta: float
    rows: tuple[SubthresholdRow, ...]

    @property
    def passed(self) -> bool:
        return self.precondition_met and all(r.passed for r in self.rows)


def subthreshold_bound_check(
    pot: PotentialSpec,
    coupling: float,
    epsilon: float,
    z_list: Sequence[float],
    quad: Quadrature,
    tol: float = 1e-10,
    strict: bool = False,
) -> SubthresholdReport:
    """coupling * |pair resolvent-sandwich norm| <= 1 - eps/(coupling+eps) per z.

    The 3-body diagonal block norm is the small-momentum fiber, i.e. the
    2-body norm at k = z.  With a resonant or bound pair the margin
    precondition fails and rows report the saturation instead of passing.
    """
    cls = twobody.classify_pair(pot, coupling, quad, epsilon)
    pre = cls.category == twobody.PairClass.UNBOUND_WITH_MARGIN or coupling == 0.0
    if strict and not pre:
        raise PairThresholdError(f"pair classified {cls.category.value}, margin precondition fails")
    delta = epsilon / (coupling + epsilon) if coupling + epsilon > 0 else 0.0
    rows = []
    for z in z_list:
        lhs = coupling * twobody.mu_max(pot, 1.0, z, quad) if coupling > 0 else 0.0
        rhs = 1.0 - delta
        rows.append(SubthresholdRow(z=float(z), lhs=lhs, rhs=rhs, passed=lhs <= rhs + tol))
    return SubthresholdReport(precondition_met=pre, delta=delta, rows=tuple(rows))


@dataclass(frozen=True)
class ContinuityRow:
    z1: float
    z2: float
    norm_diff: float
    bound: float
    passed: bool


def continuity_modulus_check(
    model: ModelSpec,
    row_pair: str,
    col_pair: str,
    z_pairs: Sequence[tuple[float, float]],
    quad: Quadrature,
    slack: float = 1e-6,
    **grid_kw,
) -> list[ContinuityRow]:
    """Norm continuity in z of the coupling-free block against the volume-constant bound."""
    frame_row = model.frame(row_pair)
    c_row = quad.radial_integral(
        lambda r: model.potential(row_pair).value(frame_row.alpha * r)
    )
    frame_col = model.frame(col_pair)
    c_col = quad.radial_integral(
        lambda r: model.potential(col_pair).value(frame_col.alpha * r)
    )
    ell = math.sqrt(c_row * c_col) / (4.0 * np.pi)

    rows = []
    for z1, z2 in z_pairs:
        if row_pair == col_pair:
            n1 = twobody.mu_max(model.scaled_potential(row_pair), 1.0, z1, quad)
            norm_diff = abs(
                n1 - twobody.mu_max(model.scaled_potential(row_pair), 1.0, z2, quad)
            )
            # the fiber difference norm is bounded by the difference at the
            # smallest wave number; evaluate the matrix difference directly
            m1 = twobody.assemble_bs(model.scaled_potential(row_pair), 1.0, z1, quad).matrix
            m2 = twobody.assemble_bs(model.scaled_potential(row_pair), 1.0, z2, quad).matrix
            norm_diff = float(np.max(np.abs(np.linalg.eigvalsh(m1 - m2))))
        else:
            g1 = build_mixed_grid(model.scaled_potential(row_pair), min(z1, z2), **grid_kw)
            g2 = build_mixed_grid(model.scaled_potential(col_pair), min(z1, z2), **grid_kw)
            kw = dict(
                pot_row=model.scaled_potential(row_pair),
                pot_col=model.scaled_potential(col_pair),
                coupling_row=1.0,
                coupling_col=1.0,
                grid_row=g1,
                grid_col=g2,
            )
            b1 = assemble_offdiagonal_block(model.masses, row_pair, col_pair, z=z1, **kw)
            b2 = assemble_offdiagonal_block(model.masses, row_pair, col_pair, z=z2, **kw)
            norm_diff = float(np.linalg.norm(b1 - b2, 2))
        bound = ell * math.sqrt(abs(z2 * z2 - z1 * z1)) + slack
        rows.append(
            ContinuityRow(
                z1=float(z1),
                z2=float(z2),
                norm_diff=norm_diff,
                bound=bound,
                passed=norm_diff <= bound,
            )
        )
    return rows


@dataclass(frozen=True)
class Green6Row:
    xi: float
    value: float
    bound: float
    passed: bool


def green6_bound_check(xi_list: Sequence[float]) -> list[Green6Row]:
    """Pointwise heat-kernel bound on the 6D free resolvent kernel at energy -1."""
    rows = []
    for xi in xi_list:
        if not xi > 0:
            raise ValueError("xi must be positive")

        def integrand(t):
            return t**-3 * math.exp(-t * xi * xi - 0.25 / t)

        t_peak = 0.5 / xi
        val, err = adaptive_quad(integrand, 0.0, np.inf, points=None, limit=400)
        if not math.isfinite(val) or err > 1e-10 * max(val, 1.0):
            # fall back to a split at the saddle
            v1, _ = adaptive_quad(integrand, 0.0, t_peak, limit=400)
            v2, _ = adaptive_quad(integrand, t_peak, np.inf, limit=400)
            val = v1 + v2
        g0 = val / ((4.0 * np.pi) ** 3 * xi**4)
        bound = 4.0 / (9.0 * np.pi * xi**4) * math.exp(-xi / 2.0)
        rows.append(Green6Row(xi=float(xi), value=g0, bound=bound, passed=g0 <= bound))
    return rows


@dataclass(frozen=True)
class LogDivergenceResult:
    z_values: np.ndarray
    j_values: np.ndarray
    lower_bounds: np.ndarray
    slope: float
    intercept: float
    r_squared: float

    @property
    def bound_holds(self) -> bool:
        return bool(np.all(self.j_values >= self.lower_bounds * (1.0 - 1e-9)))


def j_epsilon_divergence(
    g,
    eps0: float,
    z_list: Sequence[float],
    r_max: float = 40.0,
    n_r: int = 400,
) -> LogDivergenceResult:
    """Small-momentum weighted mass of a non-negative radial g against (p^2+z^2)^{-3/2}.

    Returns the sampled integral J(z), its proven lower bound per z, and the
    linear fit of J against log(1/z) (the divergence is logarithmic).
    """
    edges = [0.0, 0.25 * r_max, 0.5 * r_max, r_max]
    from .model import _gauss_legendre_panels

    r, wr, _ = _gauss_legendre_panels(edges, [n_r // 2, n_r // 4, n_r // 4])
    gr = np.asarray(g(r), dtype=float)
    if np.any(gr < 0):
        raise ValueError("g must be non-negative")
    norm1 = float(4.0 * np.pi * np.sum(wr * r * r * gr))
    if norm1 <= 0.0:
        zs = np.asarray(z_list, float)
        zero = np.zeros_like(zs)
        return LogDivergenceResult(zs, zero, zero, 0.0, 0.0, 1.0)

    def ghat(p):
        # unnormalized radial transform: int d3y e^{ip.y} g = 4pi/p int g(y) y sin(py) dy
        p = np.atleast_1d(p)
        return 4.0 * np.pi * np.sum(
            wr[None, :] * r[None, :] * gr[None, :] * np.sinc(p[:, None] * r[None, :] / np.pi) * r[None, :],
            axis=1,
        )

    # quartile radius: int_{|y|>rq} g = ||g||_1 / 4
    cum = 4.0 * np.pi * np.cumsum((wr * r * r * gr)[::-1])[::-1]
    idx = int(np.searchsorted(-cum, -0.25 * norm1))
    rq = float(r[min(idx, r.size - 1)])
    eps_low = min(eps0, np.pi / (3.0 * rq))

    zs = np.asarray(sorted(z_list, reverse=True), dtype=float)
    js = np.empty_like(zs)
    lbs = np.empty_like(zs)
    for i, z in enumerate(zs):
        pedges = [0.0] + [z * 4.0**j for j in range(0, 12) if z * 4.0**j < eps0] + [eps0]
        pedges = sorted(set(pedges))
        pn, pw, _ = _gauss_legendre_panels(pedges, [12] * (len(pedges) - 1))
        gh = ghat(pn)
        js[i] = float(
            4.0 * np.pi * np.sum(pw * pn * pn * gh * gh / (pn * pn + z * z) ** 1.5)
        )
        ball = math.asinh(eps_low / z) - eps_low / math.sqrt(eps_low**2 + z * z)
        lbs[i] = norm1**2 / 64.0 * 4.0 * np.pi * ball

    x = np.log(1.0 / zs)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, js, rcond=None)
    ss_tot = float(np.sum((js - js.mean()) ** 2))
    ss_res = float(res[0]) if res.size else float(np.sum((js - A @ coef) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LogDivergenceResult(
        z_values=zs,
        j_values=js,
        lower_bounds=lbs,
        slope=float(coef[0]),
        intercept=float(coef[1]),
        r_squared=float(r2),
    )
