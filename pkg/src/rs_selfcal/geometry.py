"""Elementary rigid-body geometry: rotations, poses, pinhole normalization and
least-squares similarity alignment.

Rotations are 3x3 matrices mapping world directions into the camera frame.
Points are plain ``numpy`` arrays with a trailing axis of length 3, so every
function here accepts a single point or a stack of them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CheiralityViolation, DegenerateConfiguration

# smallest admissible depth, scene units
Z_MIN = 1e-9
_TAYLOR_EPS = 1e-8


def skew_symmetric(phi):
    """Return the cross-product matrix ``[phi]_x`` so that ``[phi]_x v = phi x v``."""
    p1, p2, p3 = np.asarray(phi, dtype=float)
    return np.array([[0.0, -p3, p2],
                     [p3, 0.0, -p1],
                     [-p2, p1, 0.0]])


def rotation_from_axis_angle(phi):
    """Rodrigues' formula. ``phi`` is an axis-angle vector, its norm the angle."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew_symmetric(phi)
    if theta < _TAYLOR_EPS:
        # second-order series; exact to double precision at this size
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def rotate_by_axis_angle(w, x):
    """Apply ``R(w_i)`` to ``x_i`` row by row for stacks of axis-angle vectors ``w``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < _TAYLOR_EPS
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    wx = np.cross(w, x)
    return x + a[..., None] * wx + b[..., None] * np.cross(w, wx)


def axis_angle_from_rotation(R):
    """Inverse of :func:`rotation_from_axis_angle` (angle in ``[0, pi]``)."""
    R = np.asarray(R, dtype=float)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if s < 1e-12 and c > 0:
        return w
    if c < -0.9:
        # near pi the antisymmetric part is tiny; the symmetric part (1 - c) a a^T
        # gives the axis and w only fixes its sign
        M = 0.5 * (R + R.T) - c * np.eye(3)
        k = np.argmax(np.diag(M))
        axis = M[k] / np.linalg.norm(M[k])
        if axis @ w < 0:
            axis = -axis
        return theta * axis
    return w * (theta / s)


def rotation_angle(R):
    """Angle of rotation ``R`` in radians, accurate near zero."""
    R = np.asarray(R, dtype=float)
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(s, c))


def is_rotation(R, tol=1e-12):
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3)
            and np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(R) - 1.0) <= tol)


def project_to_rotation(M):
    """Nearest rotation matrix to ``M`` in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class Pose:
    """Camera orientation ``R`` (world to camera) and world position ``p``."""
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", np.array(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "p", np.array(self.p, dtype=float).reshape(3))


@dataclass(frozen=True)
class Intrinsics:
    """Zero-skew, unit-aspect pinhole intrinsics in pixels."""
    f: float
    u0: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")

    @property
    def matrix(self):
        return np.array([[self.f, 0.0, self.u0], [0.0, self.f, self.v0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Similarity:
    """``x -> scale * rotation @ x + translation``."""
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return self.scale * X @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return Similarity(1.0 / self.scale, Rt, -Rt @ self.translation / self.scale)

    def apply_to_pose(self, pose):
        """Express ``pose`` in the frame the similarity maps into."""
        return Pose(pose.R @ self.rotation.T, self(pose.p))


def world_to_camera(pose, X):
    """``R (X - p)`` for one point or a stack of points."""
    X = np.asarray(X, dtype=float)
    return (X - pose.p) @ pose.R.T


def camera_to_world(pose, x):
    x = np.asarray(x, dtype=float)
    return x @ pose.R + pose.p


def pinhole_normalize(x, z_min=Z_MIN):
    """Map camera coordinates to ``(x/z, y/z)``; raises if any depth ``<= z_min``."""
    x = np.asarray(x, dtype=float)
    z = x[..., 2]
    if np.any(z <= z_min):
        raise CheiralityViolation(f"depth {np.min(z):.3g} <= {z_min}")
    return x[..., :2] / z[..., None]


def apply_intrinsics(K, c, r):
    """Pixel coordinates of normalized column/row ``(c, r)``."""
    return K.f * np.asarray(c) + K.u0, K.f * np.asarray(r) + K.v0


def similarity_align(src, dst):
    """Closed-form least-squares similarity taking ``src`` onto ``dst``.

    Minimizes ``sum ||s R src_i + t - dst_i||^2`` via the SVD of the
    cross-covariance (Umeyama). ``src`` must span at least a plane.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must both have shape (n, 3)")
    n = len(src)
    if n < 3:
        raise DegenerateConfiguration("need at least 3 point pairs")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    ds = src - mu_s
    dd = dst - mu_d

    sv = np.linalg.svd(ds, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateConfiguration("source points are collinear or coincident")

    sigma = dd.T @ ds / n
    U, d, Vt = np.linalg.svd(sigma)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    var_s = (ds**2).sum() / n
    scale = float((d * S).sum() / var_s)
    t = mu_d - scale * R @ mu_s
    return Similarity(scale, R, t)
