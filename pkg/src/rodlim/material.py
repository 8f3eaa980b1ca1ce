"""Quadratic form of linearized elasticity and its fourth-order tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Orthonormal (Mandel) basis of symmetric 3x3 matrices.
_R2 = 1 / np.sqrt(2)
SYM_BASIS = np.zeros((6, 3, 3))
for _k, (_i, _j) in enumerate([(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]):
    if _i == _j:
        SYM_BASIS[_k, _i, _i] = 1.0
    else:
        SYM_BASIS[_k, _i, _j] = SYM_BASIS[_k, _j, _i] = _R2

# P maps vec(F) (row-major, 9) to Mandel coordinates of F^sym (6).
P_SYM = SYM_BASIS.reshape(6, 9)


class NotCoercive(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ElasticTensor:
    """L acting on 3x3 matrices, stored as a symmetric 6x6 matrix in the Mandel basis."""

    sym_matrix: np.ndarray
    kind: str = "general"
    lam: float | None = None
    mu: float | None = None

    def __post_init__(self):
        c = np.asarray(self.sym_matrix, dtype=float).reshape(6, 6)
        object.__setattr__(self, "sym_matrix", 0.5 * (c + c.T))

    @property
    def matrix9(self) -> np.ndarray:
        """9x9 form T with Q(F) = vec(F) . T vec(F); annihilates skew matrices."""
        return P_SYM.T @ self.sym_matrix @ P_SYM

    def apply(self, F: np.ndarray) -> np.ndarray:
        """L F for one or a stack of 3x3 matrices."""
        F = np.asarray(F, dtype=float)
        v = F.reshape(*F.shape[:-2], 9) @ self.matrix9.T
        return v.reshape(F.shape)

    def Q(self, F) -> float | np.ndarray:
        return evaluate_Q(self, F)


def isotropic(lam: float, mu: float, allow_noncoercive: bool = False) -> ElasticTensor:
    """Q(F) = 2 mu |F^sym|^2 + lam (tr F)^2."""
    if not allow_noncoercive and (mu <= 0 or 3 * lam + 2 * mu <= 0):
        raise NotCoercive(f"isotropic tensor with lambda={lam}, mu={mu} is not coercive")
    e = np.array([1.0, 1, 1, 0, 0, 0])
    c = 2 * mu * np.eye(6) + lam * np.outer(e, e)
    return ElasticTensor(c, kind="isotropic", lam=float(lam), mu=float(mu))


def general(matrix66, allow_noncoercive: bool = False) -> ElasticTensor:
    L = ElasticTensor(np.asarray(matrix66, dtype=float).reshape(6, 6))
    rep = validate(L)
    if not allow_noncoercive and not rep["coercive"]:
        raise NotCoercive(f"smallest eigenvalue {rep['min_eigenvalue']:.3e} <= 0")
    return L


def random_coercive(rng: np.random.Generator, min_eig: float = 0.5) -> ElasticTensor:
    """A random anisotropic tensor with spectrum in [min_eig, min_eig + 6)."""
    a = rng.standard_normal((6, 6))
    return ElasticTensor(a @ a.T + min_eig * np.eye(6))


def evaluate_Q(L: ElasticTensor, F) -> float | np.ndarray:
    F = np.asarray(F, dtype=float)
    s = F.reshape(*F.shape[:-2], 9) @ P_SYM.T
    val = np.einsum("...i,ij,...j->...", s, L.sym_matrix, s)
    return float(val) if val.ndim == 0 else val


def validate(L: ElasticTensor) -> dict:
    """Coercivity and symmetry diagnostics."""
    raw = np.asarray(L.sym_matrix)
    eig = np.linalg.eigvalsh(raw)
    skew = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0]], float)
    skew_defect = max(abs(evaluate_Q(L, skew)), abs(evaluate_Q(L, np.roll(skew, 1, (0, 1)))))
    lmin = float(eig[0])
    return {
        "min_eigenvalue": lmin,
        "max_eigenvalue": float(eig[-1]),
        "symmetry_defect": float(np.abs(raw - raw.T).max()),
        "annihilates_skew": skew_defect <= 1e-14 * max(1.0, float(np.abs(eig).max())),
        "coercive": lmin > 0,
        "status": "ok" if lmin > 0 else "NotCoercive",
    }


def from_config(cfg: dict) -> ElasticTensor:
    """Build from flat config keys material.kind / material.lambda / material.mu / material.matrix66."""
    kind = str(cfg.get("material.kind", "isotropic")).strip('"')
    allow = str(cfg.get("material.allow_noncoercive", "false")).lower() == "true"
    if kind == "isotropic":
        return isotropic(float(cfg.get("material.lambda", 1.0)), float(cfg.get("material.mu", 1.0)), allow)
    if kind == "general":
        raw = cfg["material.matrix66"]
        if isinstance(raw, str):
            raw = [float(x) for x in raw.strip("[]").replace(",", " ").split()]
        if len(raw) != 36:
            raise ValueError("material.matrix66 needs 36 entries")
        return general(raw, allow)
    raise ValueError(f"unknown material.kind {kind!r}")
