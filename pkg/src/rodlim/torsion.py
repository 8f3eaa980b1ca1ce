"""Saint-Venant torsion: Neumann problem for the warping function and rigidity tau."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell_problem import QStarForm, SolverFailure
from .cross_section import CrossSection
from .fem import Spaces


@dataclass(eq=False)
class TorsionSolution:
    phi: np.ndarray  # P2 nodal values, zero mean
    tau: float
    neumann_residual: float
    dirichlet_energy: float  # int |grad phi|^2
    coupling: float  # int x_perp . grad phi
    spaces: Spaces

    def phi_l2(self) -> float:
        return float(np.sqrt(self.spaces.integrate(self.spaces.eval2(self.phi) ** 2)))


def _perp(x):
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def solve_torsion(cs: CrossSection, spaces: Spaces | None = None) -> TorsionSolution:
    """Laplace(phi) = 0 in the section, grad(phi).nu = x_perp.nu on the boundary, int phi = 0."""
    V = spaces or Spaces(cs)
    K = V.stiffness2
    g = V.boundary_load2(lambda x, nu: np.einsum("...d,...d->...", _perp(x), nu))
    m = V.mean2
    A = sp.bmat([[K, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csc")
    b = np.concatenate([g, [0.0]])
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise SolverFailure(f"torsion system singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("torsion system singular beyond the constant kernel")
    phi, mult = x[:-1], x[-1]
    # compatibility makes the constant-kernel multiplier vanish
    res = float(np.abs(K @ phi - g).max())
    if abs(mult) > 1e-8 * max(1.0, np.abs(g).max()):
        raise SolverFailure(f"Neumann data incompatible (multiplier {mult:.2e}); broken mesh?")
    gp = V.grad2(phi)
    xq = V.qpts
    r2 = V.integrate(np.einsum("tqd,tqd->tq", xq, xq))
    coupling = V.integrate(np.einsum("tqd,tqd->tq", _perp(xq), gp))
    dirichlet = V.integrate(np.einsum("tqd,tqd->tq", gp, gp))
    return TorsionSolution(phi=phi, tau=r2 - coupling, neumann_residual=res, dirichlet_energy=dirichlet,
                           coupling=coupling, spaces=V)


def qstar_isotropic(cs: CrossSection, mu: float, tau: float) -> QStarForm:
    """diag(3 mu m2, 3 mu m3, mu tau, 3 mu)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    M = np.diag([3 * mu * cs.m2, 3 * mu * cs.m3, mu * tau, 3 * mu])
    return QStarForm(M, 3 * mu, "IsotropicClosedForm", cs.stats())



def qstar_isotropic_disk(mu: float) -> QStarForm:
    """Closed form for the unit-area disk: m2 = m3 = 1/(4 pi), tau = 1/(2 pi)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    m = 1 / (4 * np.pi)
    return QStarForm(np.diag([3 * mu * m, 3 * mu * m, mu / (2 * np.pi), 3 * mu]), 3 * mu, "IsotropicClosedForm", {})
