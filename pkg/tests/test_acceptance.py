"""Acceptance criteria 1-9, one test each.

Every test records a single ``CRITERION n: PASS|FAIL ...`` line. The lines are
printed in the pytest terminal summary (see conftest.py) and when this file is
run directly with ``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from oracles import linearized_a12, rectangle_torsion_series
from rodlim import so3
from rodlim.cell_problem import AffineStrainProfile, cell_problem, reduce_qstar, solve_constrained, splitting_alpha
from rodlim.cli import gamma_check
from rodlim.cross_section import generate_disk, generate_rectangle
from rodlim.material import isotropic, random_coercive
from rodlim.rod_equilibrium import SolverOptions, minimize_J2, solve_isotropic_disk
from rodlim.rod_model import (
    ForceProfile,
    FrameField,
    Grid1D,
    RodProfile,
    energy_alpha,
    energy_kirchhoff,
)
from rodlim.torsion import qstar_isotropic_disk, solve_torsion

RESULTS: dict[int, str] = {}
xi = AffineStrainProfile.from_coords
DISK_Q = np.diag([3 / (4 * np.pi), 3 / (4 * np.pi), 1 / (2 * np.pi), 3.0])
LEVELS = (1, 2, 3)


class Check:
    """Collects named conditions for one criterion, then records and asserts them."""

    def __init__(self, number: int, budget: float):
        self.number, self.budget, self.start = number, budget, time.perf_counter()
        self.failed: list[str] = []
        self.notes: list[str] = []

    def __call__(self, ok: bool, what: str):
        self.notes.append(what)
        if not ok:
            self.failed.append(what)

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self(elapsed < self.budget, f"runtime {elapsed:.1f}s < {self.budget:g}s")
        status = "PASS" if not self.failed else "FAIL"
        detail = "; ".join(self.failed if self.failed else self.notes)
        RESULTS[self.number] = f"CRITERION {self.number}: {status}  {detail}"
        print(RESULTS[self.number])
        assert not self.failed, RESULTS[self.number]


def rel_l2(x, a, b):
    a, b = np.reshape(a, (len(x), -1)), np.reshape(b, (len(x), -1))
    return np.sqrt(np.trapezoid(np.sum((a - b) ** 2, 1), x) / np.trapezoid(np.sum(b ** 2, 1), x))


def test_criterion_1_isotropic_disk_qstar():
    c = Check(1, 30)
    L = isotropic(1.0, 1.0)
    errs = []
    for r in LEVELS:
        q = reduce_qstar(generate_disk(r), L)
        errs.append(np.max(np.abs(q.matrix - DISK_Q)[np.diag_indices(4)] / np.diag(DISK_Q)))
        off = np.abs(q.matrix - np.diag(np.diag(q.matrix))).max()
    c(errs[-1] <= 1e-2, f"finest diagonal rel. error {errs[-1]:.2e} <= 1e-2")
    c(off <= 1e-2 * np.abs(DISK_Q).max(), f"off-diagonal {off:.1e}")
    c(bool(np.all(np.diff(errs) < 0)), "error decreases over levels " + ", ".join(f"{e:.1e}" for e in errs))
    c.finish()


def test_criterion_2_lambda_independence():
    c = Check(2, 90)
    finest = {}
    for lam in (0.0, 1.0, 10.0):
        for r in LEVELS:
            q = reduce_qstar(generate_disk(r), isotropic(lam, 1.0))
        finest[lam] = q.matrix
    base = finest[1.0]
    scale = np.abs(base).max()
    worst = 0.0
    for lam, m in finest.items():
        diag = np.abs(np.diag(m) - np.diag(base)) / np.abs(np.diag(base))
        off = np.abs(m - base - np.diag(np.diag(m - base))).max() / scale
        worst = max(worst, diag.max(), off)
    c(worst <= 2e-3, f"max relative change over lambda in (0, 1, 10): {worst:.1e} <= 2e-3")
    c.finish()


def test_criterion_3_penalized_convergence():
    c = Check(3, 60)
    lam = mu = 1.0
    cs = generate_disk(3)
    table = gamma_check(cs, isotropic(lam, mu), xi([1, 0, 0, 0]), (1, 10, 1e2, 1e3, 1e4, 1e5, 1e6), tol=1e-10)
    for row in table.rows[:4]:
        k = row["k"]
        ref = mu * (3 * lam + 3 * k + 2 * mu) / (lam + k + mu) / (4 * np.pi)
        err = abs(row["value"] - ref) / ref
        c(err <= 1e-2, f"k={k:g} rel. error {err:.1e}")
    vals = np.array([r["value"] for r in table.rows])
    c(bool(np.all(np.diff(vals) >= -1e-10)), "nondecreasing in k within 1e-10")
    c(table.relative_error <= 1e-3, f"extrapolation vs constrained {table.relative_error:.1e} <= 1e-3")
    c.finish()


def test_criterion_4_torsional_rigidity():
    c = Check(4, 20)
    disk = solve_torsion(generate_disk(3))
    err = abs(disk.tau * 2 * np.pi - 1)
    c(err <= 5e-3, f"disk tau rel. error {err:.1e} <= 5e-3")
    c(disk.phi_l2() <= 1e-3, f"disk |phi|_L2 {disk.phi_l2():.1e} <= 1e-3")
    ref = rectangle_torsion_series(1.0, 1.0, 10)
    sq = solve_torsion(generate_rectangle(1.0, 3))
    err = abs(sq.tau - ref) / ref
    c(err <= 1e-2, f"square tau {sq.tau:.5f} vs series {ref:.5f}, rel. error {err:.1e} <= 1e-2")
    c.finish()


def test_criterion_5_closed_form_minimizer():
    c = Check(5, 20)
    cs, L = generate_disk(3), isotropic(1.0, 1.0)
    prob = cell_problem(cs, L)
    V = prob.V
    p = xi([1, 0, 0, 0])
    sol = solve_constrained(cs, L, p)
    x2, x3 = V.qpts[..., 0], V.qpts[..., 1]
    exact = np.stack([0 * x2, -0.25 * (x2 ** 2 - x3 ** 2), -0.5 * x2 * x3], axis=-1)
    exact = exact - V.integrate(exact)  # the corrector is fixed up to its mean
    err = np.sqrt(V.integrate(np.sum((V.eval2(sol.beta) - exact) ** 2, -1)) / V.integrate(np.sum(exact ** 2, -1)))
    c(err <= 1e-2, f"corrector rel. L2 error {err:.1e} <= 1e-2")
    Mh, Mc, _, _ = prob.moments(p, sol)
    s = 1 / (4 * np.pi)
    dh = np.abs(Mh - s * np.diag([2.0, -1.0, -1.0])).max() / s
    dc = np.abs(Mc).max() / s
    c(dh <= 1e-2 and dc <= 1e-2, f"moment errors {dh:.1e}, {dc:.1e} (relative to 1/(4 pi)) <= 1e-2")
    c.finish()


def test_criterion_6_additive_splitting():
    c = Check(6, 120)
    rng = np.random.default_rng(6)
    tensors = [random_coercive(rng) for _ in range(5)]
    meshes = {"disk": generate_disk, "square": lambda r: generate_rectangle(1.0, r)}
    worst_ratio, worst_alpha, monotone = 0.0, 0.0, True
    for L in tensors:
        alpha = splitting_alpha(L)
        for make in meshes.values():
            cross = []
            for r in LEVELS:
                q = reduce_qstar(make(r), L)
                norm = np.linalg.norm(q.matrix)
                cross.append(np.abs(q.cross_block).max() / norm)
            worst_ratio = max(worst_ratio, cross[-1])
            monotone &= bool(np.all(np.diff(cross) <= 1e-10))
            worst_alpha = max(worst_alpha, abs(q.matrix[3, 3] - alpha) / alpha)
    c(worst_ratio <= 1e-3, f"finest cross block / norm {worst_ratio:.1e} <= 1e-3")
    c(monotone, "cross block non-increasing under refinement (floor 1e-10)")
    c(worst_alpha <= 1e-6, f"alpha vs (4,4) entry rel. {worst_alpha:.1e}")
    iso = max(abs(splitting_alpha(isotropic(lam, mu)) - 3 * mu) for lam in (0.0, 1.0, 10.0) for mu in (0.5, 1.0, 2.0))
    c(iso <= 1e-10, f"isotropic alpha - 3 mu = {iso:.1e}")
    c.finish()


def test_criterion_7_cell_structure():
    c = Check(7, 60)
    cs, L = generate_disk(2), isotropic(1.0, 1.0)
    prob = cell_problem(cs, L)
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    a[3] = b[3] = 0.0
    s, t = 0.7, -1.3
    combo = prob.solve(xi(s * a + t * b)).beta
    lin = s * prob.solve(xi(a)).beta + t * prob.solve(xi(b)).beta
    dev = np.abs(combo - lin).max() / np.abs(combo).max()
    c(dev <= 1e-8, f"linearity {dev:.1e} <= 1e-8")
    mult = 0.0
    for v in np.eye(3):
        p = xi([*v, 0.0])
        Mh, Mc, lh, lc = prob.moments(p, prob.solve(p))
        mult = max(mult, abs(lh + 2 * Mh[1, 1]), abs(lc + 2 * Mc[2, 2]))
    c(mult <= 1e-6, f"multiplier identities {mult:.1e}")
    p = xi([0.4, -1.0, 0.7, 0.0])
    ref = prob.solve(p, solver="direct").beta
    n = prob._system(p.gauge, None)[0].shape[0]
    uniq = max(np.abs(prob.solve(p, solver="iterative", x0=rng.standard_normal(n)).beta - ref).max() for _ in range(2))
    c(uniq <= 1e-9, f"re-initialization {uniq:.1e} <= 1e-9")
    from rodlim.cell_problem import Gauge
    e = [prob.solve(p, gauge=g).energy for g in Gauge]
    gauge = abs(e[0] - e[1]) / e[0]
    c(gauge <= 1e-6, f"gauge invariance {gauge:.1e}")
    c.finish()


def test_criterion_8_rod_equilibrium():
    c = Check(8, 120)
    q = qstar_isotropic_disk(1.0)
    g = Grid1D.uniform(1.0, 200)
    straight = minimize_J2(ForceProfile.zero(g), q)
    c(straight.energy <= 1e-12 and straight.el_residual <= 1e-10 and np.allclose(straight.frame.R, np.eye(3)),
      f"f = 0: energy {straight.energy:.1e}, residual {straight.el_residual:.1e}")

    def load(n):
        grid = Grid1D.uniform(1.0, n)
        return ForceProfile.from_function(grid, lambda x: np.outer(1e-3 * np.cos(2 * np.pi * x), [0, 1, 0]))

    f = load(200)
    m = minimize_J2(f, q, opts=SolverOptions(tol=1e-10))
    s = solve_isotropic_disk(f, 1.0)
    x = f.grid.nodes
    agree = rel_l2(x, m.A, s.A)
    c(m.converged and s.converged and agree <= 5e-3, f"minimize vs shooting A, rel. L2 {agree:.1e} <= 5e-3")
    c(max(m.el_residual, s.el_residual) <= 1e-4, f"residuals {m.el_residual:.1e}, {s.el_residual:.1e} <= 1e-4")
    lin = rel_l2(x, m.A[:, 0], linearized_a12(x, f.h[:, 1]))
    c(lin <= 1e-2, f"linearized oracle {lin:.1e}")
    r = [minimize_J2(load(n), q, opts=SolverOptions(tol=1e-11)).el_residual for n in (100, 200, 400)]
    c(r[0] >= 2 * r[1] and r[1] >= 2 * r[2], "residual under 2x refinement " + ", ".join(f"{v:.1e}" for v in r))
    c.finish()


def test_criterion_9_limit_energies():
    c = Check(9, 10)
    q = qstar_isotropic_disk(1.0)
    L = 2.0
    g = Grid1D.uniform(L, 200)
    zeros2 = lambda x: np.zeros((len(x), 2))  # noqa: E731
    errs = {}
    bend = RodProfile.from_functions(g, lambda x: np.stack([x ** 2 / 2, 0 * x], 1), lambda x: np.stack([x, 0 * x], 1))
    errs["open23 bending"] = energy_alpha(bend, "open23", q) / (0.5 * L * 3 / (4 * np.pi)) - 1
    s0 = 0.7
    cancel = RodProfile.from_functions(g, lambda x: np.stack([s0 * x, 0 * x], 1),
                                       lambda x: np.stack([s0 + 0 * x, 0 * x], 1), z=lambda x: -s0 ** 2 / 2 * x)
    errs["Equal3 cancellation"] = energy_alpha(cancel, "3", q)
    stretch = RodProfile.from_functions(g, zeros2, zeros2, z=lambda x: 0.3 * x)
    errs["above3 stretching"] = energy_alpha(stretch, "above3", q) / (0.5 * L * 3 * 0.09) - 1

    def frame(a):
        return FrameField.from_matrices(g, so3.expm(np.outer(g.nodes, so3.SKEW_COORDS @ np.asarray(a, float))))

    k, w = 1.3, 0.9
    errs["arc"] = energy_kirchhoff(frame([k, 0, 0]), q) / (0.5 * L * 3 / (4 * np.pi) * k ** 2) - 1
    errs["twist"] = energy_kirchhoff(frame([0, 0, w]), q) / (0.5 * L / (2 * np.pi) * w ** 2) - 1
    for name, e in errs.items():
        c(abs(e) <= 5e-3, f"{name} {abs(e):.1e}")
    c.finish()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
