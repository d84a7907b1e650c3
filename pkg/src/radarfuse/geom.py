"""2-D rigid transforms: poses, application, least-squares fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateGeometryError(ValueError):
    pass


def rot(theta_deg: float) -> np.ndarray:
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


@dataclass
class Pose2D:
    """Reference frame of a sensor: maps local points ``x`` to ``R @ x + t``."""

    t: np.ndarray = field(default_factory=lambda: np.zeros(2))
    R: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(2)
        self.R = np.asarray(self.R, dtype=float).reshape(2, 2)
        if not np.allclose(self.R.T @ self.R, np.eye(2), atol=1e-9):
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation")

    @classmethod
    def identity(cls) -> "Pose2D":
        return cls()

    @classmethod
    def from_angle(cls, theta_deg: float, t=(0.0, 0.0)) -> "Pose2D":
        return cls(t=np.asarray(t, dtype=float), R=rot(theta_deg))

    @property
    def theta(self) -> float:
        return orientation_angle(self.R)

    def inverse(self) -> "Pose2D":
        return Pose2D(t=-self.R.T @ self.t, R=self.R.T.copy())

    def compose(self, other: "Pose2D") -> "Pose2D":
        """``self ∘ other``: apply ``other`` first."""
        return Pose2D(t=self.R @ other.t + self.t, R=self.R @ other.R)


def apply_pose(pose: Pose2D, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts @ pose.R.T + pose.t


def orientation_angle(R) -> float:
    """Signed rotation angle in degrees, in (-180, 180]."""
    R = np.asarray(R, dtype=float)
    ang = float(np.degrees(np.arctan2(R[1, 0], R[0, 0])))
    return 180.0 if ang == -180.0 else ang


def augment_pose(pose: Pose2D) -> tuple[np.ndarray, np.ndarray]:
    """Lift a pose to the [x, y, vx, vy] state: blkdiag(R, R) and [t, 0, 0]."""
    Rb = np.zeros((4, 4))
    Rb[:2, :2] = pose.R
    Rb[2:, 2:] = pose.R
    tb = np.concatenate([pose.t, np.zeros(2)])
    return Rb, tb


def residual_sum(pose: Pose2D, src, dst) -> float:
    """Sum of point-wise Euclidean misfits ``||R src_k + t - dst_k||``."""
    d = apply_pose(pose, src) - np.asarray(dst, dtype=float)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def fit_rigid_transform(src, dst) -> tuple[Pose2D, float]:
    """Closed-form (SVD) rigid fit mapping ``src`` onto ``dst``.

    Returns the proper rotation/translation and the residual sum of the
    fitted pose. Collinear sources are fine; a single repeated point is not.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"shape mismatch: {src.shape} vs {dst.shape}")
    if len(src) < 2:
        raise DegenerateGeometryError("need at least 2 point pairs")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    A = src - mu_s
    B = dst - mu_d
    spread = np.max(np.abs(A))
    if spread <= 1e-12 * max(1.0, float(np.max(np.abs(src)))):
        raise DegenerateGeometryError("source points are all coincident")
    H = A.T @ B
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    if d == 0:
        d = 1.0
    R = V @ np.diag([1.0, d]) @ U.T
    # re-orthonormalize to kill rounding drift before Pose2D validates it
    c, s = R[0, 0] + R[1, 1], R[1, 0] - R[0, 1]
    n = np.hypot(c, s)
    R = np.array([[c / n, -s / n], [s / n, c / n]])
    t = mu_d - R @ mu_s
    pose = Pose2D(t=t, R=R)
    return pose, residual_sum(pose, src, dst)
