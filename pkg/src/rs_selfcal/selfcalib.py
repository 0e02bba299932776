"""Self-calibration equations of the imaginary camera and numerical detection of
critical motion sequences (CMS).

Each camera of a projective reconstruction ``P^i = [A^i | a^i]`` (with
``P^1 = [I | 0]``) transfers the dual image of the absolute conic of camera 1,

    omega^i = (A^i - a^i p^T) omega^1 (A^i - a^i p^T)^T,

and the imaginary camera (known ``f``, zero principal point, unknown skew and
aspect) imposes three scalar constraints on every ``omega^i``. The unknowns are
the five free entries of ``omega^1`` (with ``omega^1_33 = 1``) and the 3-vector
``p``. A motion is critical when the Jacobian of the stacked constraints at a
solution loses column rank.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NotASolution, SingularTransfer
from .rsmodels import ImaginaryIntrinsics

N_UNKNOWNS = 8
FD_STEP = 1e-6
RANK_THRESHOLD = 1e-7
SOLUTION_TOL = 1e-8


@dataclass(frozen=True)
class ProjectiveCamera:
    A: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.array(self.A, dtype=float).reshape(3, 3))
        object.__setattr__(self, "a", np.array(self.a, dtype=float).reshape(3))

    @property
    def P(self):
        return np.hstack([self.A, self.a[:, None]])


@dataclass(frozen=True)
class CalibUnknowns:
    """DIAC of camera 1 and the plane-at-infinity vector ``p``."""
    omega1: np.ndarray
    p_inf: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        w = np.array(self.omega1, dtype=float).reshape(3, 3)
        object.__setattr__(self, "omega1", 0.5 * (w + w.T))
        object.__setattr__(self, "p_inf", np.array(self.p_inf, dtype=float).reshape(3))

    def to_vector(self):
        w = self.omega1 / self.omega1[2, 2]
        return np.array([w[0, 0], w[0, 1], w[1, 1], w[0, 2], w[1, 2], *self.p_inf])

    @classmethod
    def from_vector(cls, x):
        w11, w12, w22, w13, w23, *p = x
        omega = np.array([[w11, w12, w13], [w12, w22, w23], [w13, w23, 1.0]])
        return cls(omega, np.array(p))


@dataclass
class NullityReport:
    singular_values: list
    nullity: int
    threshold: float

    @property
    def is_cms(self):
        return self.nullity >= 1

    def to_dict(self):
        return {"singular_values": [float(s) for s in self.singular_values],
                "nullity": int(self.nullity),
                "threshold": float(self.threshold),
                "is_cms": bool(self.is_cms)}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def diac_from_imaginary_K(K: ImaginaryIntrinsics):
    """``K K^T`` for the skew/aspect camera, written out entrywise."""
    f, s, a = K.f, K.s, K.alpha
    f2 = f * f
    return np.array([[f2 + s * s * f2, s * a * f2, 0.0],
                     [s * a * f2, a * a * f2, 0.0],
                     [0.0, 0.0, 1.0]])


def constraint_residuals(omega, f):
    """The three imaginary-camera constraints on a DIAC; all zero when satisfied.

    ``w11 w22 - w22 f^2 - w12^2`` (skew and aspect eliminated), ``w13`` and ``w23``.
    """
    w = np.asarray(omega, dtype=float)
    return np.array([w[0, 0] * w[1, 1] - w[1, 1] * f * f - w[0, 1] ** 2,
                     w[0, 2], w[1, 2]])


def transfer_diac(cam: ProjectiveCamera, unknowns: CalibUnknowns):
    """DIAC of ``cam`` implied by ``omega^1`` and ``p``, scaled to ``omega_33 = 1``."""
    M = cam.A - np.outer(cam.a, unknowns.p_inf)
    w = M @ unknowns.omega1 @ M.T
    if abs(w[2, 2]) < 1e-14:
        raise SingularTransfer("transferred DIAC has vanishing (3,3) entry")
    return w / w[2, 2]


def stacked_residuals(cams, unknowns, f_list):
    return np.concatenate([constraint_residuals(transfer_diac(c, unknowns), f)
                           for c, f in zip(cams, f_list)])


def build_constraint_jacobian(cams, unknowns, f_list, step=FD_STEP):
    """Central-difference Jacobian (3m x 8) of the stacked constraints.

    Columns are ordered ``(w11, w12, w22, w13, w23, p1, p2, p3)``.
    """
    x0 = unknowns.to_vector()
    J = np.empty((3 * len(cams), N_UNKNOWNS))
    for k in range(N_UNKNOWNS):
        h = step * max(1.0, abs(x0[k]))
        xp, xm = x0.copy(), x0.copy()
        xp[k] += h
        xm[k] -= h
        rp = stacked_residuals(cams, CalibUnknowns.from_vector(xp), f_list)
        rm = stacked_residuals(cams, CalibUnknowns.from_vector(xm), f_list)
        J[:, k] = (rp - rm) / (xp[k] - xm[k])
    return J


def cms_nullity(cams, unknowns_at_truth, f_list, threshold=RANK_THRESHOLD, step=FD_STEP):
    """Numerical nullity of the self-calibration system at a known solution.

    A nullity of one or more means the motion is a critical motion sequence.
    """
    res = stacked_residuals(cams, unknowns_at_truth, f_list)
    if np.max(np.abs(res)) > SOLUTION_TOL:
        raise NotASolution(f"max constraint residual {np.max(np.abs(res)):.3g} > {SOLUTION_TOL}")
    J = build_constraint_jacobian(cams, unknowns_at_truth, f_list, step=step)
    sv = np.linalg.svd(J, compute_uv=False)
    # a 3m x 8 system with 3m < 8 has 8 - 3m structurally zero singular values
    sv = np.concatenate([sv, np.zeros(N_UNKNOWNS - len(sv))])
    smax = sv[0] if sv[0] > 0 else 1.0
    nullity = int(np.sum(sv < threshold * smax))
    return NullityReport(list(sv), nullity, threshold)


def projective_from_metric(Ks, Rs, ps, p_inf=None):
    """Projective cameras ``[A^i | a^i]`` with ``P^1 = [I | 0]`` from metric ground truth.

    ``Ks`` are 3x3 intrinsic matrices, ``Rs`` world-to-camera rotations and ``ps``
    camera centres. ``p_inf`` selects the projective frame; the returned
    :class:`CalibUnknowns` is the exact solution in that frame.
    """
    Ks = [np.asarray(K, dtype=float) for K in Ks]
    R1, p1 = np.asarray(Rs[0], dtype=float), np.asarray(ps[0], dtype=float)
    p_inf = np.zeros(3) if p_inf is None else np.asarray(p_inf, dtype=float)
    K1inv = np.linalg.inv(Ks[0])
    cams = []
    for K, R, p in zip(Ks, Rs, ps):
        # pose relative to camera 1, so that camera 1 is K1 [I | 0]
        Rrel = np.asarray(R) @ R1.T
        trel = -np.asarray(R) @ (np.asarray(p) - p1)
        a = K @ trel
        A = K @ Rrel @ K1inv + np.outer(a, p_inf)
        cams.append(ProjectiveCamera(A, a))
    omega1 = Ks[0] @ Ks[0].T
    return cams, CalibUnknowns(omega1 / omega1[2, 2], p_inf)


def feasibility_count(m, n_k, n_f):
    """Necessary counting condition ``m n_k + (m - 1) n_f >= 8`` for self-calibration."""
    return m * n_k + (m - 1) * n_f >= 8


def prop3_gauge_transform(points, per_cam, k):
    """One-parameter ambiguity of cameras sharing the world ``Y`` axis.

    Scales every point's ``Y`` and every camera's ``t_Y`` by ``k`` and both
    skew ``s`` and aspect ``alpha`` by ``1/k``. ``per_cam`` is a sequence of
    ``(s, alpha, t_Y)`` triples. Images are unchanged for cameras of the form
    ``K (R_y X + t)``.
    """
    pts = np.array(points, dtype=float)
    pts[..., 1] *= k
    out = [(s / k, alpha / k, k * tY) for s, alpha, tY in per_cam]
    return pts, out


def cms_check_poses(Rs, ps, params=None, threshold=RANK_THRESHOLD, p_inf=None):
    """CMS verdict for a set of camera rotations and positions.

    Works in normalized image coordinates (``f = 1``). ``params`` optionally
    supplies per-camera :class:`~rs_selfcal.rsmodels.RsParams` giving each
    imaginary camera's skew and aspect; zero distortion otherwise.
    """
    m = len(Rs)
    if params is None:
        Ks = [np.eye(3)] * m
    else:
        Ks = [ImaginaryIntrinsics(1.0, q.phi2, 1.0 - q.phi1).matrix for q in params]
    if p_inf is None:
        # a generic projective frame, fixed so the verdict is reproducible
        p_inf = np.array([0.3, -0.2, 0.1])
    cams, truth = projective_from_metric(Ks, Rs, ps, p_inf)
    return cms_nullity(cams, truth, [1.0] * m, threshold=threshold)
