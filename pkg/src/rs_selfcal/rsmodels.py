"""Rolling-shutter projection models.

All models work in normalized (pre-intrinsics) coordinates: ``(c, r)`` is the
column/row position of the image point in units of focal length, and the
shutter closes in ascending ``r`` with the stored pose valid at ``r = 0``.
The intra-frame rotation rate ``phi`` is therefore measured in radians per
normalized row, and ``v`` in scene units per normalized row.

Models, from exact to approximate:

* :func:`full_rs_rowcoord` -- exact rotation ``R(r phi)`` and translation ``r v``.
* :func:`linearized_rs_rowcoord` -- ``I + r [phi]_x`` in place of ``R(r phi)``.
* :func:`rotation_only_rowcoord` -- the linearized model with ``v = 0``; the row
  equation reduces to a scalar quadratic.
* :func:`two_step_rowcoord` -- the nonlinear distortion ``f_d`` followed by the
  imaginary-camera skew/aspect map ``f_p``.

Point arguments may be a single 3-vector or an ``(n, 3)`` stack; the returned
row coordinates then have shape ``(2,)`` or ``(n, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import CheiralityViolation, NoConvergence, NoRealRoot
from .geometry import (Z_MIN, Intrinsics, Pose, apply_intrinsics,
                       pinhole_normalize, rotate_by_axis_angle,
                       skew_symmetric, world_to_camera)

ROW_TOL = 1e-12
MAX_ROW_ITERS = 50


@dataclass(frozen=True)
class RsMotion:
    """Constant intra-frame motion: rotation rate ``phi`` and translation rate ``v``."""
    phi: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "phi", np.array(self.phi, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(3))

    @property
    def params(self):
        """The two-step parameters this motion induces (translation dropped)."""
        return RsParams(*self.phi)


@dataclass(frozen=True)
class RsParams:
    """Two-step model parameters: aspect change ``phi1``, skew ``phi2``, distortion ``phi3``."""
    phi1: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0

    def as_array(self):
        return np.array([self.phi1, self.phi2, self.phi3])


@dataclass(frozen=True)
class ImaginaryIntrinsics:
    """Camera with focal length ``f``, skew ``s``, aspect ``alpha`` and principal point at 0."""
    f: float
    s: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.f > 0 and self.alpha > 0):
            raise ValueError("f and alpha must be positive")

    @property
    def matrix(self):
        f, s, a = self.f, self.s, self.alpha
        return np.array([[f, s * f, 0.0], [0.0, a * f, 0.0], [0.0, 0.0, 1.0]])


def _pixels(K, cr):
    u, v = apply_intrinsics(K, cr[..., 0], cr[..., 1])
    return np.stack([u, v], axis=-1)


def _row_map(pose, motion, X, exact):
    """Return ``g(r) -> (c, r', z)`` for the implicit row equation ``r = r'``."""
    d = world_to_camera(pose, X)            # R (X - p)
    Rv = pose.R @ motion.v
    phi = motion.phi

    def g(r):
        x = d - r[..., None] * Rv
        if exact:
            out = rotate_by_axis_angle(r[..., None] * phi, x)
        else:
            out = x + r[..., None] * np.cross(phi, x)
        z = out[..., 2]
        return out[..., 0] / z, out[..., 1] / z, z

    return d, g


def _solve_rows(pose, motion, X, exact):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    d, g = _row_map(pose, motion, X, exact)
    if np.any(d[:, 2] <= Z_MIN):
        raise CheiralityViolation("point behind camera at r = 0")

    r = d[:, 1] / d[:, 2]
    converged = np.zeros(len(r), dtype=bool)
    for _ in range(MAX_ROW_ITERS):
        c, r_new, z = g(r)
        step = np.abs(r_new - r)
        r = np.where(converged, r, r_new)
        converged |= step <= ROW_TOL * max(1.0, np.max(np.abs(r)))
        if converged.all():
            break

    for i in np.flatnonzero(~converged):
        r[i] = _safeguarded_row(g, X[i], r[i])

    c, _, z = g(r)
    if np.any(z <= Z_MIN):
        raise CheiralityViolation("point behind camera at its exposure row")
    out = np.stack([c, r], axis=-1)
    return out[0] if single else out


def _safeguarded_row(g, X, r0):
    """Bracketed root of ``g(r) - r`` for a point where plain iteration stalled."""
    def h(t):
        _, rt, _ = g(np.array([t]))
        return rt[0] - t

    width = 0.1
    for _ in range(20):
        a, b = r0 - width, r0 + width
        ha, hb = h(a), h(b)
        if np.isfinite(ha) and np.isfinite(hb) and ha * hb <= 0:
            return brentq(h, a, b, xtol=ROW_TOL, rtol=4 * np.finfo(float).eps, maxiter=MAX_ROW_ITERS)
        width *= 2
    raise NoConvergence(f"row equation did not converge for point {X}")


def full_rs_rowcoord(pose, motion, X):
    """Normalized ``(c, r)`` solving ``[c, r, 1] ~ R(r phi) R (X - p - r v)`` exactly."""
    return _solve_rows(pose, motion, X, exact=True)


def project_full_rs(pose, motion, K, X):
    """Pixel projection under the exact constant-motion rolling-shutter model."""
    return _pixels(K, full_rs_rowcoord(pose, motion, X))


def linearized_rs_rowcoord(pose, motion, X):
    """``(c, r)`` solving ``[c, r, 1] ~ (I + r[phi]_x) R (X - p - r v)``."""
    return _solve_rows(pose, motion, X, exact=False)


project_linearized_rs = linearized_rs_rowcoord


def row_residual(pose, motion, X, cr, exact=True):
    """Defect ``|r - r'|`` and ``|c - c'|`` of a solved row coordinate; ~0 for a true solution."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cr = np.atleast_2d(cr)
    _, g = _row_map(pose, motion, X, exact)
    c, r, _ = g(cr[:, 1])
    return np.maximum(np.abs(c - cr[:, 0]), np.abs(r - cr[:, 1]))


def rotation_only_rows(xp, yp, phi):
    """Solve the row quadratic of the rotation-only linearized model.

    ``(phi1 y' - phi2 x') r^2 + (1 + phi1 - phi3 x') r - y' = 0`` with the root
    nearest the pinhole row ``y'``. Returns ``(c, r)`` arrays.
    """
    xp = np.asarray(xp, dtype=float)
    yp = np.asarray(yp, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p1, p2, p3 = phi[..., 0], phi[..., 1], phi[..., 2]
    a = p1 * yp - p2 * xp
    b = 1.0 + p1 - p3 * xp
    disc = b * b + 4.0 * a * yp
    if np.any(disc < 0):
        raise NoRealRoot("negative discriminant in the row equation")
    sq = np.sqrt(disc)
    q = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.where(q != 0, -yp / q, 0.0)
        far = np.where(a != 0, q / a, np.inf)
    r = np.where(np.abs(near - yp) <= np.abs(far - yp), near, far)
    num = xp - r * p3 * yp + r * p2
    den = 1.0 - r * p2 * xp + r * p1 * yp
    return num / den, r


def rotation_only_rowcoord(pose, phi, X):
    """``(c, r)`` of ``[c, r, 1] ~ (I + r[phi]_x) [x', y', 1]``."""
    n = pinhole_normalize(world_to_camera(pose, X))
    c, r = rotation_only_rows(n[..., 0], n[..., 1], np.asarray(phi, dtype=float))
    return np.stack([c, r], axis=-1)


project_rotation_only_rs = rotation_only_rowcoord


def apply_f_d(pt, phi3):
    """Nonlinear part of the two-step model: ``(x' - phi3 y'^2, y' + phi3 x' y')``."""
    pt = np.asarray(pt, dtype=float)
    x, y = pt[..., 0], pt[..., 1]
    return np.stack([x - phi3 * y * y, y + phi3 * x * y], axis=-1)


def apply_f_p(pt, phi1, phi2):
    """Projective part of the two-step model: ``c = x'' + phi2 y''``, ``r = (1 - phi1) y''``."""
    pt = np.asarray(pt, dtype=float)
    x, y = pt[..., 0], pt[..., 1]
    return np.stack([x + phi2 * y, (1.0 - phi1) * y], axis=-1)


def two_step_first_order(pt, params):
    """First-order expansion of ``f_p o f_d`` in the RS parameters (cross-check only)."""
    pt = np.asarray(pt, dtype=float)
    x, y = pt[..., 0], pt[..., 1]
    p1, p2, p3 = params.phi1, params.phi2, params.phi3
    return np.stack([x + p2 * y - p3 * y * y, y - p1 * y + p3 * x * y], axis=-1)


def two_step_rowcoord(pose, params, X):
    n = pinhole_normalize(world_to_camera(pose, X))
    return apply_f_p(apply_f_d(n, params.phi3), params.phi1, params.phi2)


def project_two_step(pose, params, K, X):
    """Pixel projection under the two-step model: pinhole, then ``f_d``, then ``f_p`` and ``K``."""
    return _pixels(K, two_step_rowcoord(pose, params, X))


def project_pinhole(pose, K, X):
    return _pixels(K, pinhole_normalize(world_to_camera(pose, X)))


def imaginary_K(K, phi1, phi2):
    """Intrinsic matrix of the imaginary camera absorbing ``f_p``."""
    return np.array([[K.f, phi2 * K.f, K.u0],
                     [0.0, (1.0 - phi1) * K.f, K.v0],
                     [0.0, 0.0, 1.0]])


def imaginary_intrinsics(K, params):
    """Skew/aspect form of :func:`imaginary_K` with the principal point removed."""
    return ImaginaryIntrinsics(K.f, params.phi2, 1.0 - params.phi1)


__all__ = [
    "RsMotion", "RsParams", "ImaginaryIntrinsics",
    "full_rs_rowcoord", "project_full_rs", "linearized_rs_rowcoord",
    "project_linearized_rs", "row_residual", "rotation_only_rows",
    "rotation_only_rowcoord", "project_rotation_only_rs", "apply_f_d",
    "apply_f_p", "two_step_first_order", "two_step_rowcoord",
    "project_two_step", "project_pinhole", "imaginary_K",
    "imaginary_intrinsics", "skew_symmetric", "Intrinsics", "Pose",
]
