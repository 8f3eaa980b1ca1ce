"""One-dimensional limit energies, stress moments, and Euler-Lagrange residuals.

Skew fields are handled through their coordinates (A12, A13, A23); Q* is
consumed as a QStarForm, never re-solved inline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import so3
from .cell_problem import AffineStrainProfile, QStarForm, cell_problem
from .cross_section import CrossSection
from .material import ElasticTensor


class MissingField(ValueError):
    pass


class ForceNotBalanced(ValueError):
    pass


class Regime(str, Enum):
    OPEN23 = "open23"
    EQUAL3 = "3"
    ABOVE3 = "above3"


# 5-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
GAUSS_S = 0.5 * (_GL_X + 1)
GAUSS_W = 0.5 * _GL_W


@dataclass(frozen=True, eq=False)
class Grid1D:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", x)
        if len(x) < 3:
            raise ValueError("need at least two intervals")
        d = np.diff(x)
        if x[0] != 0 or np.any(d <= 0):
            raise ValueError("nodes must start at 0 and increase strictly")
        if d.max() / d.min() > 10:
            raise ValueError("grid spacing ratio exceeds 10")

    @classmethod
    def uniform(cls, length: float, intervals: int = 200) -> "Grid1D":
        return cls(np.linspace(0.0, length, intervals + 1))

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def trapezoid_weights(self) -> np.ndarray:
        d = self.spacing
        w = np.zeros(self.n)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w


def _lagrange_at(x0: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    out = np.zeros(ys.shape[1:])
    for i in range(len(xs)):
        wgt = np.prod([(x0 - xs[j]) / (xs[i] - xs[j]) for j in range(len(xs)) if j != i])
        out = out + wgt * ys[i]
    return out


@dataclass(frozen=True, eq=False)
class FrameField:
    """Per-node rotations R(x1) stored as unit quaternions (w, x, y, z)."""

    grid: Grid1D
    quats: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quats, dtype=float)
        q = q / np.linalg.norm(q, axis=1, keepdims=True)
        object.__setattr__(self, "quats", q)
        if q.shape != (self.grid.n, 4):
            raise ValueError("one quaternion per grid node required")

    @classmethod
    def from_matrices(cls, grid: Grid1D, R: np.ndarray) -> "FrameField":
        return cls(grid, so3.matrix_to_quat(R))

    @classmethod
    def constant(cls, grid: Grid1D, R0: np.ndarray | None = None) -> "FrameField":
        R0 = np.eye(3) if R0 is None else np.asarray(R0, float)
        return cls.from_matrices(grid, np.broadcast_to(R0, (grid.n, 3, 3)))

    @property
    def R(self) -> np.ndarray:
        return so3.quat_to_matrix(self.quats)

    def interval_rotvecs(self) -> np.ndarray:
        """log(R_i^T R_{i+1}) as rotation vectors, via quaternions for small-angle accuracy."""
        return so3.relative_rotvecs(self.quats)

    def A_intervals(self) -> np.ndarray:
        """(A12, A13, A23) per interval from the geodesic difference log(R_i^T R_{i+1}) / dx."""
        return (self.interval_rotvecs() @ so3.SKEW_COORDS.T) / self.grid.spacing[:, None]

    def A_nodes(self) -> np.ndarray:
        """Nodal A: interpolation between adjacent intervals, extrapolation at the ends.

        End values are extrapolated quadratically from the three nearest
        interior nodes. Moment derivatives are differenced from these values,
        and extrapolating from interval midpoints instead would cost an order.
        """
        a = self.A_intervals()
        x, xm = self.grid.nodes, self.grid.midpoints
        out = np.empty((self.grid.n, 3))
        out[1:-1] = a[:-1] + (a[1:] - a[:-1]) * ((x[1:-1] - xm[:-1]) / (xm[1:] - xm[:-1]))[:, None]
        if self.grid.n >= 5:
            out[0] = _lagrange_at(x[0], x[1:4], out[1:4])
            out[-1] = _lagrange_at(x[-1], x[-4:-1], out[-4:-1])
        else:
            out[0] = _lagrange_at(x[0], xm[:2], a[:2])
            out[-1] = _lagrange_at(x[-1], xm[-2:], a[-2:])
        return out

    def rotated(self, Q0: np.ndarray) -> "FrameField":
        return FrameField.from_matrices(self.grid, np.einsum("ij,njk->nik", Q0, self.R))

    def centerline(self) -> np.ndarray:
        """u with u' = R e1 (trapezoid) shifted to zero mean."""
        t = self.R[:, :, 0]
        u = cumulative_trapezoid(t, self.grid.nodes, axis=0, initial=0.0)
        mean = np.trapezoid(u, self.grid.nodes, axis=0) / self.grid.length
        return u - mean


@dataclass(frozen=True, eq=False)
class RodProfile:
    """v cubic Hermite (values + slopes), w and z piecewise linear."""

    grid: Grid1D
    v: np.ndarray  # (n, 2)
    dv: np.ndarray  # (n, 2)
    w: np.ndarray  # (n,)
    z: np.ndarray | None = None

    @classmethod
    def from_functions(cls, grid, v, dv, w=None, z=None) -> "RodProfile":
        x = grid.nodes
        ww = np.zeros_like(x) if w is None else np.asarray(w(x), float)
        zz = None if z is None else np.asarray(z(x), float)
        return cls(grid, np.asarray(v(x), float).reshape(-1, 2), np.asarray(dv(x), float).reshape(-1, 2), ww, zz)

    def scaled(self, a: float) -> "RodProfile":
        return RodProfile(self.grid, a * self.v, a * self.dv, a * self.w, None if self.z is None else a * self.z)


@dataclass(frozen=True, eq=False)
class ForceProfile:
    """Nodal force density f and its primitive h (cumulative trapezoid, h(0) = 0)."""

    grid: Grid1D
    f: np.ndarray
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).reshape(self.grid.n, 3)
        object.__setattr__(self, "f", f)
        h = cumulative_trapezoid(f, self.grid.nodes, axis=0, initial=0.0)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_function(cls, grid: Grid1D, f) -> "ForceProfile":
        return cls(grid, np.asarray(f(grid.nodes), float).reshape(grid.n, 3))

    @classmethod
    def zero(cls, grid: Grid1D) -> "ForceProfile":
        return cls(grid, np.zeros((grid.n, 3)))

    @property
    def imbalance(self) -> float:
        return float(np.abs(self.h[-1]).max())

    def check_balanced(self, tol: float = 1e-10) -> None:
        if self.imbalance > tol:
            raise ForceNotBalanced(f"|int f| = {self.imbalance:.3e} > {tol:.0e}")

    def rotated(self, Q0) -> "ForceProfile":
        return ForceProfile(self.grid, self.f @ np.asarray(Q0).T)

    def h_at(self, x) -> np.ndarray:
        return np.stack([np.interp(x, self.grid.nodes, self.h[:, i]) for i in range(3)], axis=-1)


@dataclass(frozen=True, eq=False)
class StressMoments:
    grid: Grid1D
    Mhat: np.ndarray  # (n, 3, 3)
    Mcheck: np.ndarray  # (n, 3, 3)

    def reduced(self) -> np.ndarray:
        """(Mhat11 - Mhat22, Mcheck11 - Mcheck33, Mcheck21 - Mhat31) per node."""
        Mh, Mc = self.Mhat, self.Mcheck
        return np.stack([Mh[:, 0, 0] - Mh[:, 1, 1], Mc[:, 0, 0] - Mc[:, 2, 2], Mc[:, 1, 0] - Mh[:, 2, 0]], axis=1)


# -- B field and regime energies ------------------------------------------------------

def _hermite(profile: RodProfile, s: np.ndarray):
    """v', v'' at local coordinates s in [0, 1] of every interval: arrays (ni, ns, 2)."""
    d = profile.grid.spacing[:, None, None]
    v0, v1 = profile.v[:-1, None, :], profile.v[1:, None, :]
    m0, m1 = profile.dv[:-1, None, :] * d, profile.dv[1:, None, :] * d
    s = s[None, :, None]
    dv = ((6 * s ** 2 - 6 * s) * v0 + (3 * s ** 2 - 4 * s + 1) * m0
          + (-6 * s ** 2 + 6 * s) * v1 + (3 * s ** 2 - 2 * s) * m1) / d
    ddv = ((12 * s - 6) * v0 + (6 * s - 4) * m0 + (-12 * s + 6) * v1 + (6 * s - 2) * m1) / d ** 2
    return dv, ddv


def build_B(profile: RodProfile, s: np.ndarray = GAUSS_S):
    """B and B' (as (A12, A13, A23) coordinates) at local points s of every interval.

    Returns x (ni, ns), B (ni, ns, 3), dB (ni, ns, 3).
    """
    g = profile.grid
    x = g.nodes[:-1, None] + g.spacing[:, None] * s[None, :]
    dv, ddv = _hermite(profile, np.asarray(s, float))
    w = profile.w[:-1, None] * (1 - s) + profile.w[1:, None] * s
    dw = np.broadcast_to((np.diff(profile.w) / g.spacing)[:, None], w.shape)
    B = np.stack([-dv[..., 0], -dv[..., 1], -w], axis=-1)
    dB = np.stack([-ddv[..., 0], -ddv[..., 1], -dw], axis=-1)
    return x, B, dB


def stretching(profile: RodProfile, regime: Regime, s: np.ndarray = GAUSS_S) -> np.ndarray:
    regime = Regime(regime)
    shape = (profile.grid.n - 1, len(s))
    if regime is Regime.OPEN23:
        return np.zeros(shape)
    if profile.z is None:
        raise MissingField("z is required for alpha >= 3")
    dz = np.broadcast_to((np.diff(profile.z) / profile.grid.spacing)[:, None], shape)
    if regime is Regime.ABOVE3:
        return dz.copy()
    dv, _ = _hermite(profile, np.asarray(s, float))
    return dz + 0.5 * np.sum(dv ** 2, axis=-1)


def energy_alpha(profile: RodProfile, regime: Regime | str, q: QStarForm) -> float:
    """1/2 int Q*(B', s) with s = 0, z' + |v'|^2 / 2, or z' (5-point Gauss per interval)."""
    regime = Regime(regime)
    _, _, dB = build_B(profile)
    s = stretching(profile, regime)
    c = np.concatenate([dB, s[..., None]], axis=-1)
    dens = np.einsum("nqi,ij,nqj->nq", c, q.matrix, c)
    return float(0.5 * np.sum(profile.grid.spacing[:, None] * GAUSS_W[None, :] * dens))


# -- Kirchhoff regime -------------------------------------------------------------------

def energy_kirchhoff(frame: FrameField, q: QStarForm) -> float:
    a = frame.A_intervals()
    Q3 = q.matrix[:3, :3]
    return float(0.5 * np.sum(frame.grid.spacing * np.einsum("ni,ij,nj->n", a, Q3, a)))


def load_term(frame: FrameField, force: ForceProfile) -> float:
    """int h . R e1 with the trapezoid rule."""
    return float(np.sum(frame.grid.trapezoid_weights * np.einsum("ni,ni->n", force.h, frame.R[:, :, 0])))


def potential_J2(frame: FrameField, force: ForceProfile, q: QStarForm, tol: float = 1e-10) -> float:
    force.check_balanced(tol)
    return energy_kirchhoff(frame, q) + load_term(frame, force)


# -- stress moments -----------------------------------------------------------------------

def moment_basis(cs: CrossSection, L: ElasticTensor) -> np.ndarray:
    """Moments (Mhat, Mcheck) for unit A12, A13, A23: array (3, 2, 3, 3)."""
    prob = cell_problem(cs, L)
    out = np.zeros((3, 2, 3, 3))
    for j in range(3):
        c = np.zeros(4)
        c[j] = 1.0
        xi = AffineStrainProfile.from_coords(c)
        sol = prob.solve(xi)
        Mh, Mc, _, _ = prob.moments(xi, sol)
        out[j, 0], out[j, 1] = Mh, Mc
    return out


def moment_basis_isotropic_disk(mu: float) -> np.ndarray:
    """Closed-form moments for the unit-area disk and isotropic material."""
    c = mu / (4 * np.pi)
    out = np.zeros((3, 2, 3, 3))
    out[0, 0] = c * np.diag([2.0, -1, -1])
    out[1, 1] = c * np.diag([2.0, -1, -1])
    out[2, 0, 0, 2] = out[2, 0, 2, 0] = -c
    out[2, 1, 0, 1] = out[2, 1, 1, 0] = c
    return out


def moment_basis_from_qstar(q: QStarForm) -> np.ndarray:
    """A moment basis whose reduced combinations equal Q*(., 0)'s gradient, Q3 a.

    Only the reduced combinations enter the rod equations, and for exact cell
    solutions they coincide with the rows of the bending-torsion block.
    """
    Q3 = q.matrix[:3, :3]
    out = np.zeros((3, 2, 3, 3))
    for j in range(3):
        out[j, 0, 0, 0] = Q3[0, j]
        out[j, 1, 0, 0] = Q3[1, j]
        out[j, 1, 1, 0] = Q3[2, j]
    return out


def stress_moments_from_basis(frame: FrameField, basis: np.ndarray, A: np.ndarray | None = None) -> StressMoments:
    A = frame.A_nodes() if A is None else A
    M = np.einsum("nj,jmab->nmab", A, basis)
    return StressMoments(frame.grid, M[:, 0], M[:, 1])


def stress_moments(frame: FrameField, cs: CrossSection, L: ElasticTensor) -> StressMoments:
    return stress_moments_from_basis(frame, moment_basis(cs, L))


# -- Euler-Lagrange residual ----------------------------------------------------------------

def el_residual_rod(frame: FrameField, force: ForceProfile, sm: StressMoments,
                    A: np.ndarray | None = None) -> dict:
    """Strong-form residuals of the three stationarity equations and six end conditions.

    ``A`` overrides the nodal curvature-twist field derived from the frame.
    """
    x = frame.grid.nodes
    g = sm.reduced()
    dg = np.gradient(g, x, axis=0, edge_order=2)
    A = frame.A_nodes() if A is None else A
    R = frame.R
    hD1 = np.einsum("ni,ni->n", force.h, R[:, :, 1])
    hD2 = np.einsum("ni,ni->n", force.h, R[:, :, 2])
    A12, A13, A23 = A.T
    r = np.stack([
        dg[:, 0] - A13 * g[:, 2] + A23 * g[:, 1] + hD1,
        dg[:, 1] + A12 * g[:, 2] - A23 * g[:, 0] + hD2,
        dg[:, 2] - A12 * g[:, 1] + A13 * g[:, 0],
    ], axis=1)
    w = frame.grid.trapezoid_weights
    bc = np.concatenate([g[0], g[-1]])
    eq_max = np.abs(r).max(axis=0)
    return {
        "equations_max": eq_max.tolist(),
        "equations_l2": np.sqrt(w @ r ** 2).tolist(),
        "boundary": bc.tolist(),
        "boundary_max": float(np.abs(bc).max()),
        "max": float(max(eq_max.max(), np.abs(bc).max())),
        "residual": r,
    }
