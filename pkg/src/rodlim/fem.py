"""Continuous P1/P2 Lagrange spaces on a CrossSection, evaluated at the 6-point rule."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .cross_section import QUAD_BARY, CrossSection, triangle_areas

# Gauss-Legendre on [0, 1] for boundary edges (exact for cubics).
EDGE_GAUSS_S = 0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
EDGE_GAUSS_W = np.array([5 / 18, 8 / 18, 5 / 18])

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_values(bary: np.ndarray) -> np.ndarray:
    """Quadratic shape functions (vertices, then edge midpoints) at barycentric points (n, 3)."""
    l0, l1, l2 = bary.T
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=1)


def p2_bary_grads(bary: np.ndarray) -> np.ndarray:
    """d N_a / d lambda_b, shape (n, 6, 3)."""
    n = len(bary)
    l0, l1, l2 = bary.T
    d = np.zeros((n, 6, 3))
    d[:, 0, 0] = 4 * l0 - 1
    d[:, 1, 1] = 4 * l1 - 1
    d[:, 2, 2] = 4 * l2 - 1
    d[:, 3, 0], d[:, 3, 1] = 4 * l1, 4 * l0
    d[:, 4, 1], d[:, 4, 2] = 4 * l2, 4 * l1
    d[:, 5, 2], d[:, 5, 0] = 4 * l0, 4 * l2
    return d


class Spaces:
    """P2 (ndof2 nodes) and P1 (vertex) spaces sharing one mesh and quadrature."""

    def __init__(self, cs: CrossSection):
        self.cs = cs
        t = cs.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        keys, inv = np.unique(np.sort(e, axis=1), axis=0, return_inverse=True)
        inv = inv.ravel()
        nt = len(t)
        self.edges = keys
        self.tri_edges = np.stack([inv[:nt], inv[nt:2 * nt], inv[2 * nt:]], axis=1)
        nv = cs.n_vertices
        self.n1 = nv
        self.n2 = nv + len(keys)
        self.dofs2 = np.concatenate([t, nv + self.tri_edges], axis=1)  # (nt, 6)
        self.dofs1 = t
        mid = 0.5 * (cs.vertices[keys[:, 0]] + cs.vertices[keys[:, 1]])
        self.nodes2 = np.concatenate([cs.vertices, mid])

        self.qpts, self.qw = cs.quadrature()  # (nt, nq, 2), (nt, nq)
        self.N2 = p2_values(QUAD_BARY)  # (nq, 6)
        self.N1 = QUAD_BARY.copy()  # (nq, 3)
        # gradients of barycentric coordinates per triangle
        v = cs.vertices[t]
        area = triangle_areas(cs.vertices, t)
        gl = np.empty((nt, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            gl[:, a, 0] = (v[:, b, 1] - v[:, c, 1]) / (2 * area)
            gl[:, a, 1] = (v[:, c, 0] - v[:, b, 0]) / (2 * area)
        self.grad_bary = gl
        self.dN2 = np.einsum("qab,tbd->tqad", p2_bary_grads(QUAD_BARY), gl)  # (nt, nq, 6, 2)

    # -- interpolation / evaluation -------------------------------------------------
    def interpolate2(self, f) -> np.ndarray:
        return np.asarray(f(self.nodes2), dtype=float)

    def eval2(self, u: np.ndarray) -> np.ndarray:
        """Values of a P2 field (n2,) or (n2, m) at quadrature points."""
        return np.einsum("qa,ta...->tq...", self.N2, u[self.dofs2])

    def grad2(self, u: np.ndarray) -> np.ndarray:
        """Gradient (nt, nq, [m,] 2) of a P2 field."""
        return np.einsum("tqad,ta...->tq...d", self.dN2, u[self.dofs2])

    def eval1(self, p: np.ndarray) -> np.ndarray:
        return np.einsum("qa,ta->tq", self.N1, p[self.dofs1])

    def integrate(self, vals: np.ndarray) -> float | np.ndarray:
        out = np.einsum("tq,tq...->...", self.qw, vals)
        return float(out) if out.ndim == 0 else out

    # -- scalar matrices --------------------------------------------------------------
    def _assemble(self, local, rows, cols, shape):
        nt = len(local)
        r = np.broadcast_to(rows[:, :, None], local.shape)
        c = np.broadcast_to(cols[:, None, :], local.shape)
        return sp.coo_matrix((local.ravel(), (r.ravel(), c.ravel())), shape=shape).tocsr()

    @cached_property
    def stiffness2(self) -> sp.csr_matrix:
        k = np.einsum("tq,tqad,tqbd->tab", self.qw, self.dN2, self.dN2)
        return self._assemble(k, self.dofs2, self.dofs2, (self.n2, self.n2))

    @cached_property
    def mass1(self) -> sp.csr_matrix:
        m = np.einsum("tq,qa,qb->tab", self.qw, self.N1, self.N1)
        return self._assemble(m, self.dofs1, self.dofs1, (self.n1, self.n1))

    @cached_property
    def mass2(self) -> sp.csr_matrix:
        m = np.einsum("tq,qa,qb->tab", self.qw, self.N2, self.N2)
        return self._assemble(m, self.dofs2, self.dofs2, (self.n2, self.n2))

    @cached_property
    def mean2(self) -> np.ndarray:
        """Row vector r with r @ u = int u for a P2 field u."""
        r = np.zeros(self.n2)
        np.add.at(r, self.dofs2, np.einsum("tq,qa->ta", self.qw, self.N2))
        return r

    def load2(self, vals: np.ndarray) -> np.ndarray:
        """Vector int vals * N_i for quadrature values (nt, nq)."""
        r = np.zeros(self.n2)
        np.add.at(r, self.dofs2, np.einsum("tq,tq,qa->ta", self.qw, vals, self.N2))
        return r

    def load2_grad(self, vals: np.ndarray) -> np.ndarray:
        """Vector int vals . grad N_i for vector quadrature values (nt, nq, 2)."""
        r = np.zeros(self.n2)
        np.add.at(r, self.dofs2, np.einsum("tq,tqd,tqad->ta", self.qw, vals, self.dN2))
        return r

    def load1(self, vals: np.ndarray) -> np.ndarray:
        r = np.zeros(self.n1)
        np.add.at(r, self.dofs1, np.einsum("tq,tq,qa->ta", self.qw, vals, self.N1))
        return r

    def boundary_load2(self, g) -> np.ndarray:
        """Vector oint g(x, nu) N_i ds over boundary edges, 3-point Gauss per edge."""
        cs = self.cs
        be, nu = cs.boundary_edges, cs.boundary_normals
        # locate the P2 midpoint dof of each boundary edge
        keys = np.sort(be, axis=1)
        order = np.lexsort((self.edges[:, 1], self.edges[:, 0]))
        sorted_edges = self.edges[order]
        pos = np.searchsorted(sorted_edges[:, 0] * (self.n1 + 1) + sorted_edges[:, 1],
                              keys[:, 0] * (self.n1 + 1) + keys[:, 1])
        mid = self.n1 + order[pos]
        a, b = cs.vertices[be[:, 0]], cs.vertices[be[:, 1]]
        length = np.linalg.norm(b - a, axis=1)
        r = np.zeros(self.n2)
        s = EDGE_GAUSS_S
        phi = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)  # (3 pts, 3 fns)
        x = a[:, None, :] * (1 - s)[None, :, None] + b[:, None, :] * s[None, :, None]
        gv = g(x, np.broadcast_to(nu[:, None, :], x.shape))  # (nb, 3)
        contrib = np.einsum("e,q,eq,qa->ea", length, EDGE_GAUSS_W, gv, phi)
        np.add.at(r, be[:, 0], contrib[:, 0])
        np.add.at(r, be[:, 1], contrib[:, 1])
        np.add.at(r, mid, contrib[:, 2])
        return r
