"""Cross-section cell problems defining Q^xi, Q*, and the penalized Q_k*.

The corrector beta (three P2 components) minimizes int Q(xi | grad beta)
subject to the weak trace condition div(beta_2, beta_3) = -xi_1 tested
against P1, plus the gauge rows fixing rigid and affine kernels.  The P1
multiplier is scaled so that

    int L(xi|grad beta) : (0|grad phi) = -1/2 int lambda div(phi_2, phi_3)

holds for every discrete test field phi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cross_section import CrossSection
from .fem import Spaces
from .material import ElasticTensor, NotCoercive, validate

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-10


class SolverFailure(RuntimeError):
    pass


class ConstraintViolation(RuntimeError):
    pass


class SingularKKT(SolverFailure):
    pass


class Gauge(str, Enum):
    MEAN_GRADIENT = "MeanGradient"
    ROTATION_MOMENT = "RotationMoment"


@dataclass(frozen=True)
class AffineStrainProfile:
    """xi(x) = F (x2 e2 + x3 e3) + t e1 for skew F with entries F12, F13, F23."""

    F12: float = 0.0
    F13: float = 0.0
    F23: float = 0.0
    t: float = 0.0

    @classmethod
    def from_coords(cls, c) -> "AffineStrainProfile":
        c = np.asarray(c, dtype=float)
        return cls(*map(float, c[:4])) if len(c) == 4 else cls(*map(float, c[:3]))

    @classmethod
    def from_skew(cls, F, t: float = 0.0) -> "AffineStrainProfile":
        F = np.asarray(F, dtype=float)
        if not np.allclose(F, -F.T, atol=1e-14):
            raise ValueError("F must be skew-symmetric")
        return cls(F[0, 1], F[0, 2], F[1, 2], t)

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.F12, self.F13, self.F23, self.t])

    @property
    def F(self) -> np.ndarray:
        return np.array([[0, self.F12, self.F13],
                         [-self.F12, 0, self.F23],
                         [-self.F13, -self.F23, 0]], dtype=float)

    @property
    def gauge(self) -> Gauge:
        # xi(0) = t e1, taken literally
        return Gauge.ROTATION_MOMENT if self.t != 0 else Gauge.MEAN_GRADIENT

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        F = self.F
        return x[..., 0, None] * F[:, 1] + x[..., 1, None] * F[:, 2] + self.t * np.array([1.0, 0, 0])

    def __add__(self, other):
        return AffineStrainProfile.from_coords(self.coords + other.coords)

    def __sub__(self, other):
        return AffineStrainProfile.from_coords(self.coords - other.coords)

    def __mul__(self, a: float):
        return AffineStrainProfile.from_coords(a * self.coords)

    __rmul__ = __mul__


BASIS_PROFILES = tuple(AffineStrainProfile.from_coords(e) for e in np.eye(4))


@dataclass(eq=False)
class CellSolution:
    beta: np.ndarray  # (n2, 3) P2 nodal values
    lam: np.ndarray  # (n1,) P1 nodal values; zero for penalized solves
    energy: float
    div_residual: float
    gauge: Gauge
    xi: AffineStrainProfile
    k: float | None = None
    div_l2: float = 0.0  # pointwise L2 norm of div beta~ + xi_1
    gauge_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    algebraic_residual: float = 0.0


@dataclass(eq=False)
class QStarForm:
    """Q*(F, t) = c . matrix c with c = (F12, F13, F23, t)."""

    matrix: np.ndarray
    alpha: float
    source: str
    mesh_stats: dict = field(default_factory=dict)

    def __call__(self, F=None, t: float = 0.0) -> float:
        return self.value(F, t)

    def value(self, F=None, t: float = 0.0) -> float:
        c = self._coords(F, t)
        return float(c @ self.matrix @ c)

    def values(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized over rows of (n, 4) coordinate arrays."""
        return np.einsum("ni,ij,nj->n", coords, self.matrix, coords)

    @staticmethod
    def _coords(F, t):
        if F is None:
            return np.array([0, 0, 0, t], dtype=float)
        F = np.asarray(F, dtype=float)
        if F.shape == (3, 3):
            return np.array([F[0, 1], F[0, 2], F[1, 2], t])
        if F.shape == (3,):
            return np.array([*F, t])
        if F.shape == (4,):
            return F
        raise ValueError(f"cannot interpret F with shape {F.shape}")

    @property
    def cross_block(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def bending_torsion(self) -> np.ndarray:
        return self.matrix[:3, :3]

    def scaled(self, a: float) -> "QStarForm":
        return QStarForm(a * self.matrix, a * self.alpha, self.source, dict(self.mesh_stats))

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "alpha": self.alpha, "source": self.source,
                "coordinates": ["F12", "F13", "F23", "t"], "mesh": self.mesh_stats}

    @classmethod
    def from_dict(cls, d: dict) -> "QStarForm":
        return cls(np.array(d["matrix"], dtype=float), float(d["alpha"]), d.get("source", "file"),
                   d.get("mesh", {}))


class CellProblem:
    """Assembled operators for one (cross-section, material) pair.

    Only the right-hand side depends on the strain profile, so factorizations
    are cached per (gauge, penalty).
    """

    def __init__(self, cs: CrossSection, L: ElasticTensor, spaces: Spaces | None = None,
                 check_material: bool = True):
        if check_material and not validate(L)["coercive"]:
            raise NotCoercive("cell problems need a coercive elastic tensor")
        self.cs, self.L = cs, L
        self.V = spaces or Spaces(cs)
        V = self.V
        n2 = V.n2
        self.n2, self.n1 = n2, V.n1
        self.nb = 3 * n2
        T9 = L.matrix9
        # T restricted to the in-plane gradient columns: (c, d, c', d')
        cols = np.array([[c * 3 + 1 + d for d in range(2)] for c in range(3)])
        self._T_grad = T9[np.ix_(cols.ravel(), cols.ravel())].reshape(3, 2, 3, 2)
        self._T_xi = T9[cols.ravel()][:, [0, 3, 6]].reshape(3, 2, 3)  # (c, d, e): pairs with xi_e
        self._T_xixi = T9[np.ix_([0, 3, 6], [0, 3, 6])]
        self.K = self._assemble_K()
        self.Kpen = self._assemble_penalty()
        self.B = self._assemble_B()
        self._factors: dict = {}

    # -- assembly -------------------------------------------------------------------
    def _dof(self, c):
        return c * self.n2 + self.V.dofs2  # (nt, 6)

    def _block_assemble(self, local):
        """local (nt, 3, 6, 3, 6) -> sparse (3 n2, 3 n2)."""
        nt = local.shape[0]
        rows = np.stack([self._dof(c) for c in range(3)], axis=1)  # (nt, 3, 6)
        r = np.broadcast_to(rows[:, :, :, None, None], local.shape)
        cc = np.broadcast_to(rows[:, None, None, :, :], local.shape)
        return sp.coo_matrix((local.ravel(), (r.ravel(), cc.ravel())), shape=(self.nb, self.nb)).tocsr()

    def _assemble_K(self):
        V = self.V
        local = np.einsum("tq,tqad,cdke,tqbe->tcakb", V.qw, V.dN2, self._T_grad, V.dN2)
        return self._block_assemble(local)

    def _assemble_penalty(self):
        """int tr(0|grad beta) tr(0|grad phi): couples d2 beta2 + d3 beta3."""
        V = self.V
        nt = len(V.dofs2)
        D = np.zeros((nt, V.N2.shape[0], 3, 6))
        D[:, :, 1, :] = V.dN2[..., 0]
        D[:, :, 2, :] = V.dN2[..., 1]
        local = np.einsum("tq,tqca,tqkb->tcakb", V.qw, D, D)
        return self._block_assemble(local)

    def _assemble_B(self):
        V = self.V
        blocks = []
        for c, d in ((1, 0), (2, 1)):
            local = np.einsum("tq,qk,tqa->tka", V.qw, V.N1, V.dN2[..., d])
            r = np.broadcast_to(V.dofs1[:, :, None], local.shape)
            cc = np.broadcast_to(self._dof(c)[:, None, :], local.shape)
            blocks.append(sp.coo_matrix((local.ravel(), (r.ravel(), cc.ravel())), shape=(self.n1, self.nb)))
        return (blocks[0] + blocks[1]).tocsr()

    def gauge_rows(self, gauge: Gauge, with_trace: bool) -> np.ndarray:
        V, n2 = self.V, self.n2
        rows = []
        for c in range(3):
            r = np.zeros(self.nb)
            r[c * n2:(c + 1) * n2] = V.mean2
            rows.append(r)
        if gauge is Gauge.MEAN_GRADIENT:
            ones = np.ones_like(V.qw)
            g = {}
            for c in range(3):
                for d in range(2):
                    r = np.zeros(self.nb)
                    e = np.zeros(V.qw.shape + (2,))
                    e[..., d] = ones
                    r[c * n2:(c + 1) * n2] = V.load2_grad(e)
                    g[c, d] = r
            rows += [g[0, 0], g[0, 1], g[1, 1], g[2, 0]]
            if with_trace:
                # int d2 beta2 + int d3 beta3 is already fixed by the constant P1 test function
                rows.append(g[1, 0] - g[2, 1])
            else:
                rows += [g[1, 0], g[2, 1]]
        else:
            x = V.qpts
            r = np.zeros(self.nb)
            r[n2:2 * n2] = V.load2(-x[..., 1])
            r[2 * n2:] = V.load2(x[..., 0])
            rows.append(r)
        return np.array(rows)

    def rhs(self, xi: AffineStrainProfile):
        """(f, g): f_i = int L(xi|0):(0|grad phi_i), g_k = -int psi_k xi_1."""
        V = self.V
        xq = xi(V.qpts)  # (nt, nq, 3)
        s = np.einsum("cde,tqe->tqcd", self._T_xi, xq)
        f = np.concatenate([V.load2_grad(s[:, :, c, :]) for c in range(3)])
        g = -V.load1(xq[..., 0])
        return f, g

    # -- linear algebra ---------------------------------------------------------------
    def _system(self, gauge: Gauge, k: float | None):
        key = (gauge, k)
        if key in self._factors:
            return self._factors[key]
        constrained = k is None
        C = self.gauge_rows(gauge, with_trace=constrained)
        A = self.K if constrained else self.K + k * self.Kpen
        if constrained:
            blocks = [[A, self.B.T, C.T], [self.B, None, None], [sp.csr_matrix(C), None, None]]
        else:
            blocks = [[A, C.T], [sp.csr_matrix(C), None]]
        M = sp.bmat(blocks, format="csc")
        try:
            lu = spla.splu(M)
        except RuntimeError as exc:
            raise SolverFailure(f"saddle-point factorization failed: {exc}") from exc
        self._factors[key] = (M, lu, C.shape[0])
        return self._factors[key]

    def _solve_system(self, M, lu, b, solver, x0):
        if solver == "direct":
            x = lu.solve(b)
        elif solver == "iterative":
            x = self._iterative(M, b, x0, lu)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        if not np.all(np.isfinite(x)):
            raise SolverFailure("non-finite solution (singular saddle-point system)")
        res = np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300)
        if res > 1e-6:
            log.warning("direct solve residual %.2e; refining iteratively", res)
            x = self._iterative(M, b, x, lu)
            res = np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300)
            if res > 1e-6:
                raise SolverFailure(f"saddle-point solve residual {res:.2e}")
        return x, float(res)

    @staticmethod
    def _iterative(M, b, x0, lu=None):
        """GMRES with an incomplete-LU preconditioner (fallback path)."""
        n = M.shape[0]
        if lu is None:
            ilu = spla.spilu(M.tocsc(), drop_tol=1e-5, fill_factor=20)
            prec = spla.LinearOperator((n, n), ilu.solve)
        else:
            prec = spla.LinearOperator((n, n), lu.solve)
        x, info = spla.gmres(M, b, x0=x0, M=prec, rtol=1e-14, atol=0.0, restart=50, maxiter=200)
        if info != 0:
            raise SolverFailure(f"GMRES did not converge (info={info})")
        return x

    # -- public solves ----------------------------------------------------------------
    def solve(self, xi: AffineStrainProfile, k: float | None = None, gauge: Gauge | None = None,
              solver: str = "direct", x0: np.ndarray | None = None) -> CellSolution:
        gauge = Gauge(gauge) if gauge is not None else xi.gauge
        if gauge is Gauge.MEAN_GRADIENT and xi.t != 0:
            raise ValueError("MeanGradient gauge is incompatible with t != 0")
        if k is not None and k < 0:
            raise ValueError("penalty k must be >= 0")
        M, lu, nc = self._system(gauge, k)
        f, g = self.rhs(xi)
        if k is None:
            b = np.concatenate([-f, g, np.zeros(nc)])
        else:
            b = np.concatenate([-f - k * self._penalty_rhs(xi), np.zeros(nc)])
        x, res = self._solve_system(M, lu, b, solver, x0)
        nb, n1 = self.nb, self.n1
        beta = x[:nb].reshape(3, self.n2).T.copy()
        if k is None:
            lam = 2.0 * x[nb:nb + n1]
            mult = x[nb + n1:]
        else:
            lam = np.zeros(n1)
            mult = x[nb:]
        sol = CellSolution(beta=beta, lam=lam, energy=0.0, div_residual=0.0, gauge=gauge, xi=xi, k=k,
                           gauge_multipliers=mult, algebraic_residual=res)
        sol.energy = self.energy(xi, beta, k)
        sol.div_residual, sol.div_l2 = self.div_residuals(xi, beta)
        return sol

    def _penalty_rhs(self, xi):
        """int xi_1 tr(0|grad phi) per dof."""
        V = self.V
        x1 = xi(V.qpts)[..., 0]
        z = np.zeros(self.n2)
        e2 = np.stack([x1, np.zeros_like(x1)], axis=-1)
        e3 = np.stack([np.zeros_like(x1), x1], axis=-1)
        return np.concatenate([z, V.load2_grad(e2), V.load2_grad(e3)])

    def gradient_field(self, xi: AffineStrainProfile, beta: np.ndarray) -> np.ndarray:
        """G = (xi | grad beta) at quadrature points, shape (nt, nq, 3, 3)."""
        V = self.V
        G = np.zeros(V.qw.shape + (3, 3))
        G[..., :, 0] = xi(V.qpts)
        G[..., :, 1:] = V.grad2(beta)
        return G

    def energy(self, xi, beta, k=None) -> float:
        G = self.gradient_field(xi, beta)
        q = np.einsum("tqi,ij,tqj->tq", G.reshape(*G.shape[:2], 9), self.L.matrix9, G.reshape(*G.shape[:2], 9))
        if k:
            q = q + k * np.trace(G, axis1=-2, axis2=-1) ** 2
        return self.V.integrate(q)

    def div_residuals(self, xi, beta) -> tuple[float, float]:
        """(norm of the P1 projection of div beta~ + xi_1, pointwise L2 norm)."""
        f, g = self.rhs(xi)
        r = self.B @ beta.T.ravel() - g
        proj = spla.spsolve(self.V.mass1.tocsc(), r)
        disc = float(np.sqrt(max(r @ proj, 0.0)))
        G = self.gradient_field(xi, beta)
        tr = np.trace(G, axis1=-2, axis2=-1)
        return disc, float(np.sqrt(self.V.integrate(tr ** 2)))

    def moments(self, xi: AffineStrainProfile, sol: CellSolution):
        """First moments (Mhat, Mcheck) of M = L(xi|grad beta) and (lam_hat, lam_check)."""
        V = self.V
        G = self.gradient_field(xi, sol.beta)
        M = self.L.apply(G)
        x = V.qpts
        Mhat = np.einsum("tq,tq,tqij->ij", V.qw, x[..., 0], M)
        Mcheck = np.einsum("tq,tq,tqij->ij", V.qw, x[..., 1], M)
        lq = V.eval1(sol.lam)
        return Mhat, Mcheck, V.integrate(x[..., 0] * lq), V.integrate(x[..., 1] * lq)


_PROBLEM_CACHE: dict = {}


def cell_problem(cs: CrossSection, L: ElasticTensor) -> CellProblem:
    key = (id(cs), id(L))
    hit = _PROBLEM_CACHE.get(key)
    if hit is None or hit.cs is not cs or hit.L is not L:
        if len(_PROBLEM_CACHE) > 8:
            _PROBLEM_CACHE.clear()
        hit = _PROBLEM_CACHE[key] = CellProblem(cs, L)
    return hit


def solve_constrained(cs: CrossSection, L: ElasticTensor, xi: AffineStrainProfile,
                      tol: float = 1e-8, **opts) -> CellSolution:
    sol = cell_problem(cs, L).solve(xi, None, **opts)
    scale = max(1.0, float(np.abs(xi.coords).max()))
    if sol.div_residual > tol * scale:
        raise ConstraintViolation(f"trace residual {sol.div_residual:.2e} exceeds {tol:.1e}")
    return sol


def solve_penalized(cs: CrossSection, L: ElasticTensor, xi: AffineStrainProfile, k: float,
                    **opts) -> CellSolution:
    return cell_problem(cs, L).solve(xi, float(k), **opts)


def splitting_alpha(L: ElasticTensor) -> float:
    """min Q(e1 | a | b) over a, b in R^3 with a2 + b3 = -1, via its KKT system.

    The in-plane rotation a3 = -b2 leaves Q unchanged; the extra row a3 = b2 fixes it.
    """
    if not validate(L)["coercive"]:
        raise SingularKKT("splitting problem needs a coercive material")
    T = L.matrix9
    # vec(G) with G = (e1|a|b): a -> column 1, b -> column 2
    idx = [0 * 3 + 1, 1 * 3 + 1, 2 * 3 + 1, 0 * 3 + 2, 1 * 3 + 2, 2 * 3 + 2]
    H = T[np.ix_(idx, idx)]
    c = T[np.ix_(idx, [0])].ravel()
    q0 = T[0, 0]
    A = np.zeros((2, 6))
    A[0, 1] = A[0, 5] = 1.0  # a2 + b3
    A[1, 2], A[1, 4] = 1.0, -1.0  # a3 - b2
    K = np.block([[H, A.T], [A, np.zeros((2, 2))]])
    rhs = np.concatenate([-c, [-1.0, 0.0]])
    if np.linalg.cond(K) > 1e12:
        raise SingularKKT("splitting KKT system is singular (material not coercive?)")
    x = np.linalg.solve(K, rhs)[:6]
    return float(x @ H @ x + 2 * c @ x + q0)


def reduce_qstar(cs: CrossSection, L: ElasticTensor, k: float | None = None) -> QStarForm:
    """4x4 matrix of Q* (k=None) or Q_k* from 4 basis and 6 pairwise-sum solves."""
    prob = cell_problem(cs, L)
    E = np.eye(4)
    val = lambda c: prob.solve(AffineStrainProfile.from_coords(c), k).energy  # noqa: E731
    diag = np.array([val(E[i]) for i in range(4)])
    M = np.diag(diag)
    for i in range(4):
        for j in range(i + 1, 4):
            M[i, j] = M[j, i] = 0.5 * (val(E[i] + E[j]) - diag[i] - diag[j])
    source = "FemConstrained" if k is None else f"FemPenalized({k:g})"
    return QStarForm(M, splitting_alpha(L), source, cs.stats())


def el_residual_cell(cs: CrossSection, L: ElasticTensor, xi: AffineStrainProfile,
                     sol: CellSolution) -> dict:
    """Weak Euler-Lagrange and trace residuals of a (claimed) constrained minimizer."""
    prob = cell_problem(cs, L)
    f, g = prob.rhs(xi)
    b = sol.beta.T.ravel()
    r_el = prob.K @ b + f + 0.5 * (prob.B.T @ sol.lam)
    r_tr = prob.B @ b - g
    return {
        "euler_lagrange": float(np.abs(r_el).max()),
        "trace": float(np.abs(r_tr).max()),
        "div_residual": prob.div_residuals(xi, sol.beta)[0],
        "gauge_multipliers": float(np.abs(sol.gauge_multipliers).max()) if sol.gauge_multipliers.size else 0.0,
    }
