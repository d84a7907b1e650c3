"""Symmetric-matrix hygiene for covariance and precision matrices.

Fusion arithmetic (roto-translations, information subtraction) can push a
covariance off the positive-definite cone or make it badly conditioned.
Both repairs act on the spectrum only, so eigenvectors are preserved.
"""
from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

EPS = 1e-9
C_STAR = 50.0


class NotSymmetricError(ValueError):
    pass


def _check_symmetric(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {P.shape}")
    if not np.array_equal(P, P.T):
        scale = max(1.0, float(np.max(np.abs(P))))
        if np.max(np.abs(P - P.T)) > 1e-12 * scale:
            raise NotSymmetricError("matrix is not symmetric")
    return P


def symmetrize(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def eigvalsh(P: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (closed form for 2x2)."""
    if P.shape == (2, 2):
        a, b, d = P[0, 0], P[0, 1], P[1, 1]
        mid = 0.5 * (a + d)
        rad = np.hypot(0.5 * (a - d), b)
        return np.array([mid - rad, mid + rad])
    return np.linalg.eigvalsh(P)


def cond(P: np.ndarray) -> float:
    lam = eigvalsh(symmetrize(P))
    if lam[0] <= 0:
        return np.inf
    return float(lam[-1] / lam[0])


def make_positive_definite(P: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Shift the spectrum so the smallest eigenvalue becomes ``eps``.

    Returns ``P`` unchanged when it is already positive definite.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    P = symmetrize(_check_symmetric(P))
    lam_min = eigvalsh(P)[0]
    if lam_min > 0:
        return P
    return P + (-lam_min + eps) * np.eye(P.shape[0])


def regularize_condition(P: np.ndarray, c_star: float = C_STAR) -> np.ndarray:
    """Ridge-shift and rescale a PD matrix so that ``cond <= c_star``."""
    if c_star <= 1:
        raise ValueError("c_star must be > 1")
    P = symmetrize(_check_symmetric(P))
    lam = eigvalsh(P)
    delta = max(0.0, (lam[-1] - c_star * lam[0]) / (c_star - 1.0))
    if delta == 0.0:
        return P
    return (P + delta * np.eye(P.shape[0])) / (1.0 + delta)


POLICIES = ("always", "on-repair")


def stabilize(P: np.ndarray, eps: float = EPS, c_star: float = C_STAR, policy: str = "always") -> np.ndarray:
    """PD fix when needed, then the condition-number cap.

    ``policy="always"`` caps whenever ``cond > c_star``. ``"on-repair"`` caps
    only matrices that needed the PD fix (their condition number is then
    about ``lambda_max / eps``) and leaves healthy PD matrices untouched.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown stabilization policy {policy!r}")
    P = symmetrize(_check_symmetric(P))
    if c_star <= 1:
        raise ValueError("c_star must be > 1")
    lam = eigvalsh(P)
    repaired = False
    if lam[0] <= 0:
        log.debug("non-PD matrix (lambda_min=%.3g), shifting spectrum", lam[0])
        P = make_positive_definite(P, eps)
        lam = eigvalsh(P)
        repaired = True
    if policy == "on-repair" and not repaired:
        return P
    # slack keeps stabilize idempotent on its own output (cond == c_star up to rounding)
    if lam[-1] > c_star * lam[0] * (1.0 + 1e-9):
        P = regularize_condition(P, c_star)
    return P


def spd_inv(P: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric PD matrix, returned exactly symmetric."""
    return symmetrize(np.linalg.inv(P))
