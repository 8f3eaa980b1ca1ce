import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from rodlim.material import NotCoercive, evaluate_Q, from_config, general, isotropic, random_coercive, validate

mats = arrays(np.float64, (3, 3), elements=st.floats(-5, 5))


def closed_form(lam, mu, F):
    S = 0.5 * (F + F.T)
    return 2 * mu * np.sum(S * S) + lam * np.trace(F) ** 2


def test_examples():
    L = isotropic(1, 1)
    E11 = np.zeros((3, 3))
    E11[0, 0] = 1
    assert evaluate_Q(L, E11) == pytest.approx(3)
    assert evaluate_Q(isotropic(0, 1), np.eye(3)) == pytest.approx(6)
    assert evaluate_Q(L, np.eye(3)) == pytest.approx(15)
    assert evaluate_Q(L, np.zeros((3, 3))) == 0


def test_validate_reports():
    rep = validate(isotropic(1, 1))
    assert rep["min_eigenvalue"] == pytest.approx(2.0) and rep["coercive"] and rep["annihilates_skew"]
    with pytest.raises(NotCoercive):
        isotropic(-1, 1)
    bad = isotropic(-1, 1, allow_noncoercive=True)
    assert validate(bad)["status"] == "NotCoercive"
    assert not validate(general(np.zeros((6, 6)), allow_noncoercive=True))["coercive"]
    with pytest.raises(NotCoercive):
        general(np.zeros((6, 6)))


@settings(max_examples=50, deadline=None)
@given(F=mats, lam=st.floats(-0.6, 10), mu=st.floats(0.1, 10))
def test_isotropic_matches_closed_form(F, lam, mu):
    L = isotropic(lam, mu)
    assert evaluate_Q(L, F) == pytest.approx(closed_form(lam, mu, F), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(F=mats, seed=st.integers(0, 2**32 - 1))
def test_isotropy(F, seed):
    L = isotropic(1.3, 0.7)
    R = Rotation.random(random_state=seed).as_matrix()
    assert evaluate_Q(L, R.T @ F @ R) == pytest.approx(evaluate_Q(L, F), rel=1e-12, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(F=mats, G=mats, a=st.floats(-4, 4), seed=st.integers(0, 1000))
def test_quadratic_form_laws(F, G, a, seed):
    L = random_coercive(np.random.default_rng(seed))
    q = lambda X: evaluate_Q(L, X)  # noqa: E731
    scale = 1 + q(F) + q(G)
    assert q(a * F) == pytest.approx(a * a * q(F), rel=1e-12, abs=1e-12 * scale)
    assert q(F + G) + q(F - G) == pytest.approx(2 * q(F) + 2 * q(G), rel=1e-12, abs=1e-12 * scale)
    S = F - F.T
    assert q(F + S) == pytest.approx(q(F), rel=1e-13, abs=1e-14 * scale)
    assert q(F) >= 0


def test_from_config():
    L = from_config({"material.kind": "isotropic", "material.lambda": "2", "material.mu": "0.5"})
    assert L.lam == 2 and L.mu == 0.5
    m = " ".join(map(str, (2 * np.eye(6)).ravel()))
    assert from_config({"material.kind": "general", "material.matrix66": f"[{m}]"}).kind == "general"
    with pytest.raises(ValueError):
        from_config({"material.kind": "cubic"})
