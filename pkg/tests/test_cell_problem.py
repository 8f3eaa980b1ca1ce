import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import alpha_bruteforce
from rodlim.cell_problem import (
    AffineStrainProfile,
    ConstraintViolation,
    Gauge,
    SingularKKT,
    cell_problem,
    el_residual_cell,
    reduce_qstar,
    solve_constrained,
    solve_penalized,
    splitting_alpha,
)
from rodlim.cross_section import generate_disk, generate_rectangle
from rodlim.material import NotCoercive, isotropic, random_coercive

M2 = 1 / (4 * np.pi)
xi = AffineStrainProfile.from_coords
coords = st.lists(st.floats(-2, 2), min_size=4, max_size=4)


def h1(V, beta):
    return np.sqrt(V.integrate(np.sum(V.eval2(beta) ** 2, axis=-1)) + V.integrate(np.sum(V.grad2(beta) ** 2, axis=(-2, -1))))


def xi_l2(V, p):
    return np.sqrt(V.integrate(np.sum(p(V.qpts) ** 2, axis=-1)))


def test_profile_structure():
    p = AffineStrainProfile.from_coords([1.0, 2.0, 3.0, 0.5])
    assert np.allclose(p.F + p.F.T, 0)
    assert p.gauge is Gauge.ROTATION_MOMENT and xi([1, 0, 0, 0]).gauge is Gauge.MEAN_GRADIENT
    x = np.array([[0.2, -0.3]])
    assert np.allclose(p(x), p.F @ np.array([0, 0.2, -0.3]) + [0.5, 0, 0])


def test_zero_profile(disk1, iso11):
    sol = solve_constrained(disk1, iso11, xi([0, 0, 0, 0]))
    assert np.abs(sol.beta).max() == 0 and np.abs(sol.lam).max() == 0 and sol.energy == 0
    assert solve_penalized(disk1, iso11, xi([0, 0, 0, 0]), 10.0).energy == 0


def test_isotropic_values(disk2, iso11):
    assert solve_constrained(disk2, iso11, xi([1, 0, 0, 0])).energy == pytest.approx(3 * M2, rel=1e-2)
    assert solve_constrained(disk2, iso11, xi([0, 0, 0, 1])).energy == pytest.approx(3.0, rel=1e-2)
    assert solve_penalized(disk2, iso11, xi([1, 0, 0, 0]), 1.0).energy == pytest.approx(8 / 3 * M2, rel=1e-2)
    assert solve_penalized(disk2, iso11, xi([0, 0, 0, 1]), 0.0).energy == pytest.approx(2.5, rel=1e-2)


def test_solution_invariants(disk2, iso11):
    prob = cell_problem(disk2, iso11)
    V = prob.V
    for c in ([1, 0.3, -0.5, 0], [0.2, 0.1, 0.4, 0.7]):
        p = xi(c)
        sol = solve_constrained(disk2, iso11, p)
        assert np.abs(V.integrate(V.eval2(sol.beta))).max() <= 1e-10
        if p.gauge is Gauge.MEAN_GRADIENT:
            assert np.abs(V.integrate(V.grad2(sol.beta))).max() <= 1e-10
        else:
            b = V.eval2(sol.beta)
            x = V.qpts
            assert abs(V.integrate(-x[..., 1] * b[..., 1] + x[..., 0] * b[..., 2])) <= 1e-10
        assert sol.div_residual <= 1e-10 and sol.energy >= 0


def test_closed_form_corrector(disk2, iso11):
    prob = cell_problem(disk2, iso11)
    V = prob.V
    sol = solve_constrained(disk2, iso11, xi([1, 0, 0, 0]))

    def exact(x):
        x2, x3 = x[..., 0], x[..., 1]
        return np.stack([0 * x2, -0.25 * (x2 ** 2 - x3 ** 2), -0.5 * x2 * x3], axis=-1)

    ex = exact(V.qpts)
    ex = ex - V.integrate(ex)  # zero-mean representative
    err = np.sqrt(V.integrate(np.sum((V.eval2(sol.beta) - ex) ** 2, -1)))
    assert err / np.sqrt(V.integrate(np.sum(ex ** 2, -1))) <= 1e-2


def test_el_residual(disk2, iso11):
    p = xi([1, 0.5, 0.2, 0])
    sol = solve_constrained(disk2, iso11, p)
    rep = el_residual_cell(disk2, iso11, p, sol)
    assert rep["euler_lagrange"] <= 1e-8 and rep["trace"] <= 1e-8
    V = cell_problem(disk2, iso11).V
    bad = sol.beta.copy()
    bad[:, 0] += 0.1 * V.nodes2[:, 0] ** 2
    sol.beta = bad
    assert el_residual_cell(disk2, iso11, p, sol)["euler_lagrange"] > 1e-4


def test_penalized_div_residual_decays_like_inverse_k(disk2, iso11):
    p = xi([1, 0, 0, 0])
    ks = [10.0, 1e2, 1e3, 1e4]
    res = [solve_penalized(disk2, iso11, p, k).div_l2 for k in ks]
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all(ratios > 8) and np.all(ratios < 12)


def test_constraint_violation_reported(disk2, iso11):
    with pytest.raises(ConstraintViolation):
        solve_constrained(disk2, iso11, xi([1, 0, 0, 0]), tol=-1.0)


@settings(max_examples=10, deadline=None)
@given(a=coords, b=coords)
def test_linearity(disk1, a, b):
    L = isotropic(0.7, 1.3)
    a[3] = b[3] = 0.0  # same gauge case on both sides
    pa, pb = xi(a), xi(b)
    sa, sb = solve_constrained(disk1, L, pa), solve_constrained(disk1, L, pb)
    sab = solve_constrained(disk1, L, pa + pb)
    scale = 1 + np.abs(sa.beta).max() + np.abs(sb.beta).max()
    assert np.abs(sab.beta - sa.beta - sb.beta).max() <= 1e-8 * scale
    assert np.abs(sab.lam - sa.lam - sb.lam).max() <= 1e-8 * (1 + np.abs(sa.lam).max() + np.abs(sb.lam).max())


def test_linearity_with_rotation_gauge(disk1, iso11):
    pa, pb = xi([0.3, 0, 0.2, 1.0]), xi([0, -0.4, 0.1, 0.5])
    sa, sb = solve_constrained(disk1, iso11, pa), solve_constrained(disk1, iso11, pb)
    sab = solve_constrained(disk1, iso11, pa + pb)
    assert np.abs(sab.beta - sa.beta - sb.beta).max() <= 1e-8
    # t cancels: gauge case changes, compare energies through the quadratic form instead
    q = reduce_qstar(disk1, iso11)
    diff = pa - pa.__class__.from_coords([0, 0, 0, 1.0])
    assert solve_constrained(disk1, iso11, diff).energy == pytest.approx(q.value(diff.coords), rel=1e-9)


def test_boundedness(disk2, rng):
    L = random_coercive(rng)
    prob = cell_problem(disk2, L)
    ratios = []
    for _ in range(12):
        p = xi(rng.standard_normal(4))
        ratios.append(h1(prob.V, prob.solve(p).beta) / xi_l2(prob.V, p))
    assert max(ratios) < 10 * np.median(ratios)


def test_uniqueness_under_reinitialization(disk1, iso11, rng):
    prob = cell_problem(disk1, iso11)
    p = xi([0.4, -1.0, 0.7, 0.0])
    a = prob.solve(p, solver="direct")
    n = prob._system(p.gauge, None)[0].shape[0]
    b = prob.solve(p, solver="iterative", x0=rng.standard_normal(n))
    c = prob.solve(p, solver="iterative", x0=rng.standard_normal(n))
    assert np.abs(a.beta - b.beta).max() <= 1e-9 and np.abs(b.beta - c.beta).max() <= 1e-9


def test_gauge_invariance_of_value(disk2, iso11):
    prob = cell_problem(disk2, iso11)
    for c in ([1, 0, 0, 0], [0, 0, 1, 0], [0.4, -0.2, 0.9, 0]):
        e = [prob.solve(xi(c), gauge=g).energy for g in Gauge]
        assert e[0] == pytest.approx(e[1], rel=1e-6)


def test_multiplier_identities(disk2, iso11):
    prob = cell_problem(disk2, iso11)
    for c in ([1, 0, 0, 0], [0, 1, 0, 0], [0.3, -0.6, 0.8, 0]):
        p = xi(c)
        Mh, Mc, lh, lc = prob.moments(p, prob.solve(p))
        assert lh == pytest.approx(-2 * Mh[1, 1], abs=1e-8)
        assert lc == pytest.approx(-2 * Mc[2, 2], abs=1e-8)


def test_monotone_in_penalty(disk1):
    L = isotropic(1, 1)
    p = xi([0.6, 0.2, -0.4, 0])
    prob = cell_problem(disk1, L)
    vals = [prob.solve(p, k).energy for k in (0.0, 1, 10, 1e2, 1e3, 1e4, 1e5, 1e6)]
    Q = prob.solve(p).energy
    assert np.all(np.diff(vals) >= -1e-10) and vals[-1] <= Q + 1e-10
    gaps = Q - np.array(vals[2:])
    assert np.all(np.diff(gaps) <= 1e-12)


def test_splitting_alpha():
    for lam in (-0.5, 0.0, 1.0, 10.0, 1e3):
        assert splitting_alpha(isotropic(lam, 1.0)) == pytest.approx(3.0, abs=1e-10)
    rng = np.random.default_rng(3)
    for _ in range(3):
        L = random_coercive(rng)
        assert splitting_alpha(L) == pytest.approx(alpha_bruteforce(L), rel=1e-7)
    with pytest.raises((SingularKKT, NotCoercive)):
        splitting_alpha(isotropic(-2, 1, allow_noncoercive=True))


def test_reduce_qstar_isotropic(disk2, iso11):
    q = reduce_qstar(disk2, iso11)
    assert np.allclose(np.diag(q.matrix), [3 * M2, 3 * M2, 1 / (2 * np.pi), 3], rtol=1e-2)
    off = q.matrix - np.diag(np.diag(q.matrix))
    assert np.abs(off).max() <= 1e-3 * np.abs(q.matrix).max()
    assert np.allclose(q.matrix, q.matrix.T, atol=1e-12)
    assert q.value(np.zeros(4)) == 0
    assert q.alpha == pytest.approx(3.0)


def test_reduce_qstar_anisotropic_structure(rng):
    L = random_coercive(rng)
    for cs in (generate_disk(1), generate_rectangle(1.5, 1)):
        q = reduce_qstar(cs, L)
        assert np.linalg.eigvalsh(q.matrix)[0] > 0
        assert np.abs(q.cross_block[:3]).max() <= 1e-10 * np.abs(q.matrix).max()
        assert q.matrix[3, 3] == pytest.approx(q.alpha, rel=1e-8)
        # polarization reproduces direct values of mixed profiles
        c = rng.standard_normal(4)
        c[3] = 0.0
        assert solve_constrained(cs, L, xi(c)).energy == pytest.approx(q.value(c), rel=1e-9)
