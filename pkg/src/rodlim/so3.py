"""Rotation-group helpers: hat/vee, exp/log (via scipy), and the right/left Jacobians."""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

# (A12, A13, A23) of hat(w) equals SKEW_COORDS @ w
SKEW_COORDS = np.array([[0.0, 0, -1], [0, 1, 0], [-1, 0, 0]])


def hat(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -w[..., 2], w[..., 1]
    out[..., 1, 0], out[..., 1, 2] = w[..., 2], -w[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -w[..., 1], w[..., 0]
    return out


def vee(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def skew_from_coords(a: np.ndarray) -> np.ndarray:
    """Skew matrices from (A12, A13, A23)."""
    a = np.asarray(a, dtype=float)
    return hat(a @ SKEW_COORDS)  # SKEW_COORDS is an involution


def coords_from_skew(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.stack([S[..., 0, 1], S[..., 0, 2], S[..., 1, 2]], axis=-1)


def expm(w: np.ndarray) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(w, float).reshape(-1, 3)).as_matrix().reshape(np.shape(w)[:-1] + (3, 3))


def logm(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return Rotation.from_matrix(R.reshape(-1, 3, 3)).as_rotvec().reshape(R.shape[:-2] + (3,))


def quat_to_matrix(q_wxyz: np.ndarray) -> np.ndarray:
    q = np.asarray(q_wxyz, dtype=float)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]].reshape(-1, 4)).as_matrix().reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    q = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_quat()[:, [3, 0, 1, 2]]
    # canonical sign: nonnegative scalar part
    q *= np.where(q[:, :1] < 0, -1.0, 1.0)
    return q.reshape(R.shape[:-2] + (4,))


def _coeffs(w):
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < 1e-4
    ths = np.where(small, 1.0, th)
    c1 = np.where(small, 0.5 - th2 / 24, (1 - np.cos(ths)) / ths ** 2)
    c2 = np.where(small, 1 / 6 - th2 / 120, (ths - np.sin(ths)) / ths ** 3)
    c3 = np.where(small, 1 / 12 + th2 / 720,
                  1 / ths ** 2 - (1 + np.cos(ths)) / (2 * ths * np.sin(np.where(small, 1.0, ths))))
    return c1, c2, c3


def right_jacobian(w: np.ndarray) -> np.ndarray:
    """exp(w + dw) = exp(w) exp(J_r(w) dw) to first order."""
    c1, c2, _ = _coeffs(w)
    W = hat(w)
    return np.eye(3) - c1[..., None, None] * W + c2[..., None, None] * (W @ W)


def right_jacobian_inv(w: np.ndarray) -> np.ndarray:
    _, _, c3 = _coeffs(w)
    W = hat(w)
    return np.eye(3) + 0.5 * W + c3[..., None, None] * (W @ W)


def left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    return right_jacobian_inv(-np.asarray(w))


def _rot(q_wxyz: np.ndarray) -> Rotation:
    q = np.asarray(q_wxyz, dtype=float).reshape(-1, 4)
    return Rotation.from_quat(q[:, [1, 2, 3, 0]])


def relative_rotvecs(q_wxyz: np.ndarray) -> np.ndarray:
    """Rotation vectors of R_i^T R_{i+1} for consecutive quaternions."""
    r = _rot(q_wxyz)
    return (r[:-1].inv() * r[1:]).as_rotvec()


def right_multiply_exp(q_wxyz: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Quaternions of R exp(hat(w)), canonical sign, renormalized."""
    q = (_rot(q_wxyz) * Rotation.from_rotvec(np.asarray(w, float).reshape(-1, 3))).as_quat()[:, [3, 0, 1, 2]]
    q *= np.where(q[:, :1] < 0, -1.0, 1.0)
    return q / np.linalg.norm(q, axis=1, keepdims=True)
