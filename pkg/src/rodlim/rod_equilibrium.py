"""Stationary points of the Kirchhoff-regime potential over per-node rotations.

``minimize_J2`` is the general solver (damped Newton on SO(3)^(N+1));
``solve_isotropic_disk`` shoots on the reduced ODE system of the isotropic
circular rod and serves as an independent check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, solveh_banded

from . import so3
from .cell_problem import QStarForm
from .rod_model import (
    ForceProfile,
    FrameField,
    Grid1D,
    el_residual_rod,
    moment_basis_from_qstar,
    moment_basis_isotropic_disk,
    potential_J2,
    stress_moments_from_basis,
)
from .torsion import qstar_isotropic_disk

log = logging.getLogger(__name__)

P = so3.SKEW_COORDS
E1 = np.array([1.0, 0.0, 0.0])


class NotConverged(RuntimeError):
    def __init__(self, msg: str, result: "EquilibriumResult"):
        super().__init__(msg)
        self.result = result


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    fd_step: float = 1e-6
    max_step: float = 0.5  # radians per node and iteration
    residual_tol: float = 1e-4
    raise_on_failure: bool = False


@dataclass(eq=False)
class EquilibriumResult:
    frame: FrameField
    u: np.ndarray
    energy: float
    el_residual: float
    iterations: int
    converged: bool
    A: np.ndarray  # nodal (A12, A13, A23)
    method: str
    stop_value: float = 0.0  # final gradient criterion, or terminal mismatch for shooting
    energy_history: list[float] = field(default_factory=list)
    residual_report: dict = field(default_factory=dict)


# -- discrete energy and its right-trivialized gradient -------------------------------

class _DiscreteJ2:
    def __init__(self, force: ForceProfile, q: QStarForm):
        self.grid = force.grid
        self.h = force.h
        self.Q3 = np.asarray(q.matrix[:3, :3], float)
        self.d = self.grid.spacing
        self.omega = self.grid.trapezoid_weights

    def parts(self, quats):
        theta = so3.relative_rotvecs(quats)
        a = theta @ P.T / self.d[:, None]
        R = so3.quat_to_matrix(quats)
        return theta, a, R

    def energy(self, quats) -> float:
        _, a, R = self.parts(quats)
        el = 0.5 * np.sum(self.d * np.einsum("ni,ij,nj->n", a, self.Q3, a))
        return float(el + np.sum(self.omega * np.einsum("ni,ni->n", self.h, R[:, :, 0])))

    def noise(self, quats) -> float:
        """Round-off scale of the energy, used to tell real increases from noise."""
        _, a, R = self.parts(quats)
        el = 0.5 * np.sum(self.d * np.abs(np.einsum("ni,ij,nj->n", a, self.Q3, a)))
        return 1e-12 * float(el + np.sum(self.omega * np.linalg.norm(self.h, axis=1)) + 1e-300)

    def gradient(self, quats) -> np.ndarray:
        theta, a, R = self.parts(quats)
        m = a @ self.Q3  # Q3 a per interval (Q3 symmetric)
        Pm = m @ P.T
        g = np.zeros((self.grid.n, 3))
        g[1:] += np.einsum("nji,nj->ni", so3.right_jacobian_inv(theta), Pm)
        g[:-1] -= np.einsum("nji,nj->ni", so3.left_jacobian_inv(theta), Pm)
        Rth = np.einsum("nji,nj->ni", R, self.h)
        g += self.omega[:, None] * np.cross(E1, Rth)
        return g

    def pullback_gradient(self, quats, w) -> np.ndarray:
        qw = so3.right_multiply_exp(quats, w)
        return np.einsum("nji,nj->ni", so3.right_jacobian(w), self.gradient(qw))

    def hessian_banded(self, quats, eps: float) -> np.ndarray:
        """Block-tridiagonal Hessian in lower banded storage (6 x 3n), by colored central differences."""
        n = self.grid.n
        diag = np.zeros((n, 3, 3))
        lower = np.zeros((n - 1, 3, 3))  # H[j+1, j]
        upper = np.zeros((n - 1, 3, 3))  # H[j, j+1]
        for color in range(3):
            nodes = np.arange(color, n, 3)
            for k in range(3):
                w = np.zeros((n, 3))
                w[nodes, k] = eps
                col = (self.pullback_gradient(quats, w) - self.pullback_gradient(quats, -w)) / (2 * eps)
                diag[nodes, :, k] = col[nodes]
                lo = nodes[nodes < n - 1]
                lower[lo, :, k] = col[lo + 1]
                up = nodes[nodes > 0]
                upper[up - 1, :, k] = col[up - 1]
        diag = 0.5 * (diag + diag.transpose(0, 2, 1))
        lower = 0.5 * (lower + upper.transpose(0, 2, 1))
        m = 3 * n
        rows, cols, vals = [], [], []
        base = 3 * np.arange(n)
        for a in range(3):
            for b in range(3):
                rows.append(base + a), cols.append(base + b), vals.append(diag[:, a, b])
                rows.append(base[:-1] + 3 + a), cols.append(base[:-1] + b), vals.append(lower[:, a, b])
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        keep = r >= c
        band = np.zeros((6, m))
        band[r[keep] - c[keep], c[keep]] = v[keep]
        return band


def _band_shift(band: np.ndarray, mu: float) -> np.ndarray:
    b = band.copy()
    b[0] += mu
    return b


def _finish(frame: FrameField, force: ForceProfile, q: QStarForm, basis, A, method, iterations,
            converged, history, gnorm, opts) -> EquilibriumResult:
    sm = stress_moments_from_basis(frame, basis, A)
    rep = el_residual_rod(frame, force, sm, A)
    res = EquilibriumResult(
        frame=frame, u=frame.centerline(), energy=potential_J2(frame, force, q), el_residual=rep["max"],
        iterations=iterations, converged=converged, A=frame.A_nodes() if A is None else A, method=method,
        stop_value=gnorm, energy_history=history,
        residual_report={k: v for k, v in rep.items() if k != "residual"},
    )
    if not converged and opts.raise_on_failure:
        raise NotConverged(f"{method} did not converge after {iterations} iterations", res)
    return res


def minimize_J2(force: ForceProfile, q: QStarForm, grid: Grid1D | None = None,
                init: FrameField | None = None, opts: SolverOptions | None = None) -> EquilibriumResult:
    """Damped Newton descent of J2 over per-node rotations.

    Steps are skew increments R_j -> R_j exp(hat(w_j)); the Hessian is
    block-tridiagonal and obtained by colored finite differences of the
    analytic gradient. ``init=None`` means the straight rod R = Id.
    """
    opts = opts or SolverOptions()
    grid = grid or force.grid
    if grid is not force.grid and not np.array_equal(grid.nodes, force.grid.nodes):
        raise ValueError("force profile must live on the solver grid")
    force.check_balanced()
    if np.linalg.eigvalsh(q.matrix[:3, :3])[0] <= 0:
        raise ValueError("bending-torsion block of Q* must be positive definite")
    frame = init if init is not None else FrameField.constant(grid)
    prob = _DiscreteJ2(force, q)
    quats = frame.quats.copy()
    E = prob.energy(quats)
    history = [E]
    mu = None
    converged = False
    it = 0

    def crit(g):
        return float(np.max(np.linalg.norm(g, axis=1) / prob.omega))

    g = prob.gradient(quats)
    gn = crit(g)
    while it < opts.max_iter:
        if gn <= opts.tol:
            converged = True
            break
        it += 1
        band = prob.hessian_banded(quats, opts.fd_step)
        scale = float(np.abs(band[0]).max())
        mu = 1e-10 * scale if mu is None else max(mu, 1e-10 * scale)
        while True:
            try:
                d = -solveh_banded(_band_shift(band, mu), g.ravel(), lower=True).reshape(-1, 3)
                break
            except LinAlgError:
                mu *= 10
        big = np.linalg.norm(d, axis=1).max()
        if big > opts.max_step:
            d *= opts.max_step / big
        slope = float(np.sum(g * d))
        noise = prob.noise(quats)
        t = 1.0
        accepted = False
        for _ in range(40):
            qn = so3.right_multiply_exp(quats, t * d)
            En = prob.energy(qn)
            if En <= E + 1e-4 * t * slope:
                accepted = True
                break
            if abs(En - E) <= noise:
                # energy differences are below round-off: fall back to gradient decrease
                gtry = prob.gradient(qn)
                if crit(gtry) < gn:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            mu *= 100
            log.debug("line search failed at iteration %d; raising damping to %.2e", it, mu)
            if mu > 1e12 * max(scale, 1.0):
                break
            continue
        mu = max(mu / 10, 1e-10 * scale) if t == 1.0 else mu * 10
        quats, E = qn, min(En, E) if abs(En - E) <= noise else En
        history.append(En)
        g = prob.gradient(quats)
        gn = crit(g)
        log.debug("iter %d  J2 %.12e  |grad| %.3e  step %.1e", it, En, gn, t)
    frame = FrameField(grid, quats)
    return _finish(frame, force, q, moment_basis_from_qstar(q), None, "minimize", it, converged, history, gn, opts)


# -- shooting for the isotropic circular rod -----------------------------------------------

def _shoot(R0: np.ndarray, hspline, c: float, x: np.ndarray, dense: bool, sensitivities: bool = False):
    """Integrate R' = RA, a' = -c (h.Re2, h.Re3) from R(0) = R0, a(0) = 0.

    With ``sensitivities`` the variational equations for R(0) -> R0 exp(hat(e_k) eps)
    are integrated alongside, and the 2x3 Jacobian of a(L) is returned as well.
    """
    E = so3.hat(np.eye(3))

    def rhs(s, y):
        R = y[:9].reshape(3, 3)
        a12, a13 = y[9], y[10]
        A = np.array([[0.0, a12, a13], [-a12, 0, 0], [-a13, 0, 0]])
        hv = hspline(s)
        out = [(R @ A).ravel(), [-c * hv @ R[:, 1], -c * hv @ R[:, 2]]]
        if sensitivities:
            for k in range(3):
                z = y[11 + 11 * k: 22 + 11 * k]
                dR = z[:9].reshape(3, 3)
                dA = np.array([[0.0, z[9], z[10]], [-z[9], 0, 0], [-z[10], 0, 0]])
                out += [(dR @ A + R @ dA).ravel(), [-c * hv @ dR[:, 1], -c * hv @ dR[:, 2]]]
        return np.concatenate(out)

    y0 = [R0.ravel(), [0.0, 0.0]]
    if sensitivities:
        y0 += [np.concatenate([(R0 @ E[k]).ravel(), [0.0, 0.0]]) for k in range(3)]
    sol = solve_ivp(rhs, (x[0], x[-1]), np.concatenate(y0), method="DOP853", rtol=1e-12, atol=1e-15,
                    t_eval=x if dense else None)
    if not sol.success:
        raise RuntimeError(sol.message)
    if not sensitivities:
        return sol.y
    end = sol.y[:, -1]
    J = np.column_stack([end[20 + 11 * k: 22 + 11 * k] for k in range(3)])
    return sol.y, J


def solve_isotropic_disk(force: ForceProfile, mu: float, grid: Grid1D | None = None,
                         opts: SolverOptions | None = None, R_ref: np.ndarray | None = None) -> EquilibriumResult:
    """Shooting over R(0) for R' = RA, A12' = -c h.Re2, A13' = -c h.Re3, A23 = 0, c = 4 pi / (3 mu).

    A(0) = 0 is imposed in the initial data and A12(L) = A13(L) = 0 by Newton
    on right-multiplicative updates R(0) <- R(0) exp(hat(p)), starting from
    R_ref. The three parameters meet two conditions, so the update is the
    minimum-norm Newton step, which keeps the leftover rotational freedom near
    R_ref. The Jacobian comes from the variational equations rather than finite
    differences: for small balanced loads the rod's overall orientation enters
    the terminal values only at O(load^2), below what difference quotients of
    an adaptive integrator resolve. A step that fails to reduce the terminal
    residual is halved until it does.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    opts = opts or SolverOptions(tol=1e-9)
    grid = grid or force.grid
    force.check_balanced()
    x = grid.nodes
    c = 4 * np.pi / (3 * mu)
    xf = force.grid.nodes
    spline = CubicSpline(xf, force.h, axis=0)
    # the spline's mean differs from the trapezoid mean by O(dx^4); that constant
    # would make the terminal conditions inconsistent for planar loads
    shift = (spline.integrate(xf[0], xf[-1]) - np.trapezoid(force.h, xf, axis=0)) / force.grid.length

    def hs(s):
        return spline(s) - shift
    R_ref = np.eye(3) if R_ref is None else np.asarray(R_ref, float)
    scale = c * float(np.trapezoid(np.linalg.norm(force.h, axis=1), force.grid.nodes)) + 1e-300

    def terminal(R0):
        return _shoot(R0, hs, c, x, dense=False)[9:11, -1]

    R0 = R_ref.copy()
    F = terminal(R0)
    it = 0
    converged = bool(np.abs(F).max() <= opts.tol * scale) or not np.any(force.h)
    while not converged and it < min(opts.max_iter, 100):
        it += 1
        _, J = _shoot(R0, hs, c, x, dense=False, sensitivities=True)
        step = -np.linalg.pinv(J, rcond=1e-12) @ F
        t = 1.0
        while t > 1e-6:
            Rn = R0 @ so3.expm(t * step)
            Fn = terminal(Rn)
            if np.linalg.norm(Fn) < np.linalg.norm(F):
                break
            t *= 0.5
        else:
            break
        R0, F = Rn, Fn
        converged = bool(np.abs(F).max() <= opts.tol * scale)
    y = _shoot(R0, hs, c, x, dense=True)
    R = y[:9].T.reshape(-1, 3, 3)
    A = np.column_stack([y[9], y[10], np.zeros(len(x))])
    frame = FrameField.from_matrices(grid, R)
    q = qstar_isotropic_disk(mu)
    return _finish(frame, force, q, moment_basis_isotropic_disk(mu), A, "shooting", it, converged,
                   [], float(np.abs(F).max()), opts)
