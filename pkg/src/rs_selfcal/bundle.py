"""Bundle adjustment over camera poses, rolling-shutter parameters and points.

Four residual models are available (:class:`Variant`):

``no-rs``     plain pinhole projection; RS parameters are ignored.
``rs``        two-step model (distortion ``f_d`` then imaginary camera ``f_p``).
``rs-star``   as ``rs`` with ``phi1`` (and/or ``phi2``) of one camera held at 0,
              which removes the scale ambiguity along the shared y axis.
``rs-exact``  rotation-only linearized model solved exactly for the row.

The solver is Levenberg-Marquardt with Marquardt scaling. Points are eliminated
through the Schur complement, so each iteration factorizes a dense system whose
size is nine times the number of cameras.

Rotation updates are applied on the left, ``R <- exp([d]_x) R``, so the three
rotation parameters of a camera are a local axis-angle increment and the
Jacobian is taken at ``d = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (InfeasibleProblem, InsufficientObservations,
                     NumericalFailure)
from .geometry import Intrinsics, Pose, Z_MIN, rotation_from_axis_angle
from .rsmodels import RsParams
from .selfcalib import feasibility_count

log = logging.getLogger(__name__)

CAM_DOF = 9          # rotation increment (3), position (3), phi1..phi3
PT_DOF = 3
CHEIRALITY_RESIDUAL = 1e3
MIN_OBS_PER_CAMERA = 6
MIN_OBS_PER_POINT = 2


class Variant(str, Enum):
    NO_RS = "no-rs"
    TWO_STEP = "rs"
    TWO_STEP_ANCHORED = "rs-star"
    LINEARIZED_EXACT = "rs-exact"

    @property
    def uses_rs(self):
        return self is not Variant.NO_RS


@dataclass
class Camera:
    pose: Pose
    K: Intrinsics
    rs: RsParams = field(default_factory=RsParams)


@dataclass(frozen=True)
class Observation:
    cam_id: int
    pt_id: int
    u: float
    v: float
    weight: float = 1.0


@dataclass
class Problem:
    cameras: list
    points: np.ndarray
    observations: list

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float).reshape(-1, 3)

    @property
    def n_cameras(self):
        return len(self.cameras)

    @property
    def n_points(self):
        return len(self.points)

    def obs_arrays(self):
        """``(cam_idx, pt_idx, uv, weight)`` as arrays."""
        obs = self.observations
        cam = np.fromiter((o.cam_id for o in obs), dtype=np.intp, count=len(obs))
        pt = np.fromiter((o.pt_id for o in obs), dtype=np.intp, count=len(obs))
        uv = np.array([(o.u, o.v) for o in obs], dtype=float).reshape(-1, 2)
        w = np.fromiter((o.weight for o in obs), dtype=float, count=len(obs))
        return cam, pt, uv, w

    def validate(self):
        cam, pt, uv, w = self.obs_arrays()
        if len(cam) and (cam.min() < 0 or cam.max() >= self.n_cameras
                         or pt.min() < 0 or pt.max() >= self.n_points):
            raise IndexError("observation refers to a missing camera or point")
        if not np.all(np.isfinite(uv)) or np.any(w <= 0):
            raise ValueError("observations must be finite with positive weight")
        per_cam = np.bincount(cam, minlength=self.n_cameras)
        if np.any(per_cam < MIN_OBS_PER_CAMERA):
            bad = np.flatnonzero(per_cam < MIN_OBS_PER_CAMERA)
            raise InsufficientObservations(f"cameras {bad.tolist()} have < {MIN_OBS_PER_CAMERA} observations")
        per_pt = np.bincount(pt, minlength=self.n_points)
        if np.any(per_pt < MIN_OBS_PER_POINT):
            bad = np.flatnonzero(per_pt < MIN_OBS_PER_POINT)
            raise InsufficientObservations(f"{len(bad)} points are seen by fewer than {MIN_OBS_PER_POINT} cameras")

    def copy(self):
        return Problem([replace(c) for c in self.cameras], self.points.copy(), list(self.observations))


@dataclass
class LMOptions:
    max_iters: int = 200
    f_tol: float = 1e-12
    g_tol: float = 1e-10
    x_tol: float = 1e-12
    initial_damping: float = 1e-4


@dataclass
class SolverOptions:
    variant: Variant = Variant.TWO_STEP
    anchor_cam: int = 0
    # "phi1", "phi2" or "both"
    anchor_param: str = "phi1"
    gauge: str = "fix_first_pose_and_scale"
    lm: LMOptions = field(default_factory=LMOptions)
    # None or ("huber", delta) with delta in pixels
    robust_loss: tuple | None = None
    # hold every RS parameter at its starting value
    freeze_rs: bool = False

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.anchor_param not in ("phi1", "phi2", "both"):
            raise ValueError(f"anchor_param must be phi1, phi2 or both, not {self.anchor_param!r}")
        if self.gauge != "fix_first_pose_and_scale":
            raise ValueError(f"unknown gauge {self.gauge!r}")
        if self.robust_loss is not None:
            kind, delta = self.robust_loss
            if kind != "huber" or not delta > 0:
                raise ValueError("robust_loss must be None or ('huber', delta > 0)")


@dataclass
class SolveReport:
    variant: Variant
    initial_cost: float
    final_cost: float
    iterations: int
    termination: str
    cameras: list
    points: np.ndarray
    history: list

    @property
    def converged(self):
        return self.termination in ("gradient", "function", "step")

    def to_problem(self, problem):
        """``problem`` with cameras and points replaced by the estimates."""
        return Problem(self.cameras, self.points.copy(), list(problem.observations))

    def to_dict(self):
        return {
            "variant": self.variant.value,
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "termination": self.termination,
            "converged": self.converged,
            "cameras": [{"R": c.pose.R.ravel().tolist(), "p": c.pose.p.tolist(),
                         "rs": c.rs.as_array().tolist()} for c in self.cameras],
            "points": self.points.tolist(),
            "history": self.history,
        }


# --------------------------------------------------------------------------
# residual model

def _model_rows(variant, n, phi, need_jac):
    """Normalized ``(c, r)`` for pinhole coordinates ``n`` and per-row ``phi``.

    Returns ``cr (N, 2)``, ``valid (N,)`` and, if requested, ``d cr / d n``
    ``(N, 2, 2)`` and ``d cr / d phi`` ``(N, 2, 3)``.
    """
    xp, yp = n[:, 0], n[:, 1]
    N = len(n)
    valid = np.ones(N, dtype=bool)
    if variant is Variant.NO_RS:
        cr = n.copy()
        if not need_jac:
            return cr, valid, None, None
        dn = np.broadcast_to(np.eye(2), (N, 2, 2)).copy()
        return cr, valid, dn, np.zeros((N, 2, 3))

    p1, p2, p3 = phi[:, 0], phi[:, 1], phi[:, 2]
    if variant is not Variant.LINEARIZED_EXACT:
        x2 = xp - p3 * yp * yp
        y2 = yp + p3 * xp * yp
        cr = np.stack([x2 + p2 * y2, (1.0 - p1) * y2], axis=-1)
        if not need_jac:
            return cr, valid, None, None
        # d(x'', y'') / d(x', y')
        a11, a12 = np.ones(N), -2.0 * p3 * yp
        a21, a22 = p3 * yp, 1.0 + p3 * xp
        dn = np.empty((N, 2, 2))
        dn[:, 0, 0] = a11 + p2 * a21
        dn[:, 0, 1] = a12 + p2 * a22
        dn[:, 1, 0] = (1.0 - p1) * a21
        dn[:, 1, 1] = (1.0 - p1) * a22
        dphi = np.zeros((N, 2, 3))
        dphi[:, 0, 1] = y2
        dphi[:, 0, 2] = -yp * yp + p2 * xp * yp
        dphi[:, 1, 0] = -y2
        dphi[:, 1, 2] = (1.0 - p1) * xp * yp
        return cr, valid, dn, dphi

    # rotation-only model: a r^2 + b r - y' = 0, root nearest y'
    a = p1 * yp - p2 * xp
    b = 1.0 + p1 - p3 * xp
    disc = b * b + 4.0 * a * yp
    valid = disc >= 0
    sq = np.sqrt(np.where(valid, disc, 0.0))
    q = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.where(q != 0, -yp / q, 0.0)
        far = np.where(a != 0, q / a, np.inf)
    r = np.where(np.abs(near - yp) <= np.abs(far - yp), near, far)
    D = 1.0 - r * p2 * xp + r * p1 * yp
    Nn = xp - r * p3 * yp + r * p2
    valid &= np.abs(D) > 1e-12
    D = np.where(valid, D, 1.0)
    c = Nn / D
    cr = np.stack([c, r], axis=-1)
    if not need_jac:
        return cr, valid, None, None

    dF_dr = 2.0 * a * r + b
    dF_dr = np.where(np.abs(dF_dr) > 1e-300, dF_dr, 1e-300)
    # partials of F over (x', y', phi1, phi2, phi3)
    dF = np.stack([-p2 * r * r - p3 * r, p1 * r * r - 1.0,
                   yp * r * r + r, -xp * r * r, -xp * r], axis=-1)
    dr = -dF / dF_dr[:, None]
    # partials of numerator and denominator of c, holding r fixed
    dN = np.stack([np.ones(N), -r * p3, np.zeros(N), r, -r * yp], axis=-1)
    dD = np.stack([-r * p2, r * p1, r * yp, -r * xp, np.zeros(N)], axis=-1)
    dN_dr = -p3 * yp + p2
    dD_dr = -p2 * xp + p1 * yp
    dc = (dN + dN_dr[:, None] * dr - c[:, None] * (dD + dD_dr[:, None] * dr)) / D[:, None]
    full = np.stack([dc, dr], axis=1)          # (N, 2, 5)
    return cr, valid, full[:, :, :2], full[:, :, 2:]


@dataclass
class _State:
    R: np.ndarray      # (m, 3, 3)
    p: np.ndarray      # (m, 3)
    phi: np.ndarray    # (m, 3)
    X: np.ndarray      # (n, 3)

    @classmethod
    def from_problem(cls, problem):
        cams = problem.cameras
        return cls(np.array([c.pose.R for c in cams]),
                   np.array([c.pose.p for c in cams]),
                   np.array([c.rs.as_array() for c in cams]),
                   problem.points.copy())

    def vector(self):
        """Flat vector of the additive parameters (rotations enter as zeros)."""
        m = len(self.p)
        cam = np.concatenate([np.zeros((m, 3)), self.p, self.phi], axis=1)
        return np.concatenate([cam.ravel(), self.X.ravel()])

    def plus(self, delta):
        m = len(self.p)
        dc = delta[:CAM_DOF * m].reshape(m, CAM_DOF)
        dX = delta[CAM_DOF * m:].reshape(-1, 3)
        R = np.array([rotation_from_axis_angle(w) @ Ri for w, Ri in zip(dc[:, :3], self.R)])
        return _State(R, self.p + dc[:, 3:6], self.phi + dc[:, 6:9], self.X + dX)

    def cameras(self, Ks):
        return [Camera(Pose(R, p), K, RsParams(*phi))
                for R, p, phi, K in zip(self.R, self.p, self.phi, Ks)]


class _Evaluator:
    """Vectorized residuals and Jacobian blocks for one problem and variant."""

    def __init__(self, problem, variant, robust_loss=None):
        self.variant = Variant(variant)
        self.cam, self.pt, self.uv, self.w = problem.obs_arrays()
        Ks = [c.K for c in problem.cameras]
        self.f = np.array([K.f for K in Ks])[self.cam]
        self.c0 = np.array([[K.u0, K.v0] for K in Ks]).reshape(-1, 2)[self.cam]
        self.robust_loss = robust_loss

    def __call__(self, state, need_jac=True):
        R = state.R[self.cam]
        d = state.X[self.pt] - state.p[self.cam]
        x = np.einsum("nij,nj->ni", R, d)
        z = x[:, 2]
        front = z > Z_MIN
        zs = np.where(front, z, 1.0)
        n = x[:, :2] / zs[:, None]
        phi = state.phi[self.cam]
        cr, valid, dcr_dn, dcr_dphi = _model_rows(self.variant, n, phi, need_jac)
        valid &= front
        wf = (self.w * self.f)[:, None]
        res = self.w[:, None] * (self.f[:, None] * cr + self.c0 - self.uv)
        res[~valid] = CHEIRALITY_RESIDUAL
        if not need_jac:
            return res, valid, None, None

        # d n / d x
        dn_dx = np.zeros((len(x), 2, 3))
        dn_dx[:, 0, 0] = 1.0 / zs
        dn_dx[:, 1, 1] = 1.0 / zs
        dn_dx[:, 0, 2] = -n[:, 0] / zs
        dn_dx[:, 1, 2] = -n[:, 1] / zs
        G = np.einsum("nij,njk->nik", dcr_dn, dn_dx) * wf[:, :, None]   # d res / d x
        Jc = np.empty((len(x), 2, CAM_DOF))
        # d x / d rot = -[x]_x
        xs = np.zeros((len(x), 3, 3))
        xs[:, 0, 1], xs[:, 0, 2] = -x[:, 2], x[:, 1]
        xs[:, 1, 0], xs[:, 1, 2] = x[:, 2], -x[:, 0]
        xs[:, 2, 0], xs[:, 2, 1] = -x[:, 1], x[:, 0]
        Jc[:, :, 0:3] = -np.einsum("nij,njk->nik", G, xs)
        GR = np.einsum("nij,njk->nik", G, R)
        Jc[:, :, 3:6] = -GR
        Jc[:, :, 6:9] = dcr_dphi * wf[:, :, None]
        Jp = GR
        Jc[~valid] = 0.0
        Jp[~valid] = 0.0
        return res, valid, Jc, Jp

    def cost(self, res):
        s = np.sum(res * res, axis=1)
        if self.robust_loss is None:
            return float(np.sum(s))
        delta = self.robust_loss[1]
        d2 = delta * delta
        return float(np.sum(np.where(s <= d2, s, 2.0 * delta * np.sqrt(s) - d2)))

    def robust_scale(self, res):
        """Per-row factor ``sqrt(rho'(s))`` applied to residual and Jacobian."""
        if self.robust_loss is None:
            return None
        delta = self.robust_loss[1]
        norm = np.sqrt(np.sum(res * res, axis=1))
        return np.sqrt(np.where(norm <= delta, 1.0, delta / np.maximum(norm, 1e-300)))


# --------------------------------------------------------------------------
# single-observation access

def _single(problem, obs):
    return Problem(problem.cameras, problem.points, [obs])


def residual(problem, obs, variant=Variant.TWO_STEP):
    """Weighted reprojection residual ``(u_hat - u, v_hat - v)`` of one observation."""
    ev = _Evaluator(_single(problem, obs), variant)
    res, _, _, _ = ev(_State.from_problem(problem), need_jac=False)
    return res[0]


def variant_cam_columns(opts, cam_id):
    """Indices among the nine camera parameters that the variant estimates."""
    opts = opts if isinstance(opts, SolverOptions) else SolverOptions(variant=opts)
    cols = list(range(6))
    if opts.variant.uses_rs and not opts.freeze_rs:
        rs = [6, 7, 8]
        if opts.variant is Variant.TWO_STEP_ANCHORED and cam_id == opts.anchor_cam:
            if opts.anchor_param in ("phi1", "both"):
                rs.remove(6)
            if opts.anchor_param in ("phi2", "both"):
                rs.remove(7)
        cols += rs
    return cols


def jacobian(problem, obs, opts=Variant.TWO_STEP):
    """Derivative of :func:`residual` over the parameters the variant estimates.

    Columns: rotation increment (3), position (3), the active RS parameters of
    the observing camera, then the point (3).
    """
    opts = opts if isinstance(opts, SolverOptions) else SolverOptions(variant=opts)
    ev = _Evaluator(_single(problem, obs), opts.variant)
    _, _, Jc, Jp = ev(_State.from_problem(problem))
    cols = variant_cam_columns(opts, obs.cam_id)
    return np.hstack([Jc[0][:, cols], Jp[0]])


def jacobian_blocks(problem, variant):
    """Full ``(N, 2, 9)`` camera and ``(N, 2, 3)`` point Jacobians for all observations."""
    ev = _Evaluator(problem, variant)
    res, valid, Jc, Jp = ev(_State.from_problem(problem))
    return res, Jc, Jp


def perturb_problem(problem, delta):
    """Apply a full parameter increment (layout as in :func:`apply_gauge_fix`)."""
    st = _State.from_problem(problem).plus(np.asarray(delta, dtype=float))
    return Problem(st.cameras([c.K for c in problem.cameras]), st.X, list(problem.observations))


def total_cost(problem, variant, robust_loss=None):
    ev = _Evaluator(problem, variant, robust_loss)
    res, _, _, _ = ev(_State.from_problem(problem), need_jac=False)
    return ev.cost(res)


# --------------------------------------------------------------------------
# parameter masks

def apply_gauge_fix(problem, gauge="fix_first_pose_and_scale"):
    """Boolean mask over all parameters with the seven gauge freedoms frozen.

    Camera 0's pose is frozen, and the coordinate of camera 1's position along
    which it is farthest from camera 0 is held to fix the scale. Layout: nine
    entries per camera (rotation increment, position, phi1..phi3) followed by
    three per point.
    """
    if gauge != "fix_first_pose_and_scale":
        raise ValueError(f"unknown gauge {gauge!r}")
    m = problem.n_cameras
    if m < 2:
        raise InsufficientObservations("gauge fixing needs at least two cameras")
    mask = np.ones(CAM_DOF * m + PT_DOF * problem.n_points, dtype=bool)
    mask[0:6] = False
    base = problem.cameras[1].pose.p - problem.cameras[0].pose.p
    mask[CAM_DOF + 3 + int(np.argmax(np.abs(base)))] = False
    return mask


def active_mask(problem, opts):
    mask = apply_gauge_fix(problem, opts.gauge)
    m = problem.n_cameras
    for i in range(m):
        keep = set(variant_cam_columns(opts, i))
        for j in range(6, 9):
            if j not in keep:
                mask[CAM_DOF * i + j] = False
    return mask


# --------------------------------------------------------------------------
# Levenberg-Marquardt with Schur elimination of points

def _block_diag_bsr(blocks):
    n, k, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(k * n, k * n))


def _lm_step(ev, Jc, Jp, res, cam_mask, lam, m, n):
    """Damped Gauss-Newton step ``(delta_cam, delta_pts)``, or ``None`` if indefinite."""
    cam, pt = ev.cam, ev.pt
    Jc = Jc * cam_mask[cam][:, None, :]
    U = np.zeros((m, CAM_DOF, CAM_DOF))
    np.add.at(U, cam, np.einsum("nki,nkj->nij", Jc, Jc))
    V = np.zeros((n, PT_DOF, PT_DOF))
    np.add.at(V, pt, np.einsum("nki,nkj->nij", Jp, Jp))
    W = np.einsum("nki,nkj->nij", Jc, Jp)
    gc = np.zeros((m, CAM_DOF))
    np.add.at(gc, cam, np.einsum("nki,nk->ni", Jc, res))
    gp = np.zeros((n, PT_DOF))
    np.add.at(gp, pt, np.einsum("nki,nk->ni", Jp, res))

    Ud = np.zeros((CAM_DOF * m, CAM_DOF * m))
    for i in range(m):
        s = slice(CAM_DOF * i, CAM_DOF * (i + 1))
        Ud[s, s] = U[i]
    dU = np.clip(np.diag(Ud), 1e-6, 1e32)
    Ud[np.diag_indices_from(Ud)] += lam * dU
    flat_mask = cam_mask.ravel()
    Ud[~flat_mask, :] = 0.0
    Ud[:, ~flat_mask] = 0.0
    Ud[~flat_mask, ~flat_mask] = 1.0

    dV = np.clip(np.einsum("nii->ni", V), 1e-6, 1e32)
    Vd = V + lam * dV[:, :, None] * np.eye(PT_DOF)
    try:
        Vinv = np.linalg.inv(Vd)
    except np.linalg.LinAlgError:
        return None

    rows = (CAM_DOF * cam)[:, None, None] + np.arange(CAM_DOF)[None, :, None]
    cols = (PT_DOF * pt)[:, None, None] + np.arange(PT_DOF)[None, None, :]
    rows = np.broadcast_to(rows, W.shape).ravel()
    cols = np.broadcast_to(cols, W.shape).ravel()
    shape = (CAM_DOF * m, PT_DOF * n)
    Wsp = sp.csr_matrix((W.ravel(), (rows, cols)), shape=shape)
    Vinv_sp = _block_diag_bsr(Vinv)
    Y = (Wsp @ Vinv_sp).tocsr()
    S = Ud - (Y @ Wsp.T).toarray()
    rhs = -gc.ravel() + Y @ gp.ravel()
    rhs[~flat_mask] = 0.0
    try:
        factor = cho_factor(S, lower=False, check_finite=True)
    except (LinAlgError, ValueError):
        return None
    dc = cho_solve(factor, rhs)
    dc[~flat_mask] = 0.0
    dp = np.einsum("nij,nj->ni", Vinv, (-gp.ravel() - Wsp.T @ dc).reshape(n, PT_DOF))
    grad = np.concatenate([gc.ravel() * flat_mask, gp.ravel()])
    return dc, dp.ravel(), grad


def solve(problem, opts=None):
    """Minimize the (optionally robust) sum of squared reprojection residuals.

    Accepted costs never increase. RS parameters held by the variant (all of
    them for ``no-rs``, the anchored ones for ``rs-star``) are set to 0 before
    the solve and stay there.
    """
    opts = opts or SolverOptions()
    variant = opts.variant
    m, n = problem.n_cameras, problem.n_points
    n_known = 3 if variant.uses_rs else 5
    if not feasibility_count(m, n_known, 0):
        raise InfeasibleProblem(
            f"{m} cameras cannot determine the rolling-shutter parameters: "
            f"self-calibration needs m >= 3 views (m*{n_known} >= 8)")
    problem.validate()

    state = _State.from_problem(problem)
    if not variant.uses_rs:
        state.phi[:] = 0.0
    elif variant is Variant.TWO_STEP_ANCHORED:
        if not 0 <= opts.anchor_cam < m:
            raise ValueError(f"anchor_cam {opts.anchor_cam} out of range")
        if opts.anchor_param in ("phi1", "both"):
            state.phi[opts.anchor_cam, 0] = 0.0
        if opts.anchor_param in ("phi2", "both"):
            state.phi[opts.anchor_cam, 1] = 0.0

    mask = active_mask(problem, opts)
    cam_mask = mask[:CAM_DOF * m].reshape(m, CAM_DOF)
    ev = _Evaluator(problem, variant, opts.robust_loss)
    lm = opts.lm

    res, valid, Jc, Jp = ev(state)
    cost = ev.cost(res)
    initial_cost = cost
    lam = lm.initial_damping
    history = [{"iteration": 0, "cost": cost, "damping": lam, "accepted": True}]
    termination = "max_iters"
    it = 0
    while it < lm.max_iters:
        scale = ev.robust_scale(res)
        if scale is not None:
            res_w, Jc_w, Jp_w = res * scale[:, None], Jc * scale[:, None, None], Jp * scale[:, None, None]
        else:
            res_w, Jc_w, Jp_w = res, Jc, Jp

        accepted = False
        failures = 0
        while not accepted:
            step = _lm_step(ev, Jc_w, Jp_w, res_w, cam_mask, lam, m, n)
            if step is None:
                failures += 1
                lam *= 10.0
                if failures > 30:
                    raise NumericalFailure("normal equations stayed indefinite under damping")
                continue
            dc, dp, grad = step
            if np.max(np.abs(grad)) <= lm.g_tol:
                termination = "gradient"
                break
            delta = np.concatenate([dc, dp])
            new_state = state.plus(delta)
            new_res, new_valid, new_Jc, new_Jp = ev(new_state)
            new_cost = ev.cost(new_res)
            it += 1
            if new_cost < cost:
                accepted = True
                decrease = cost - new_cost
                x_norm = np.linalg.norm(state.vector())
                state, res, Jc, Jp = new_state, new_res, new_Jc, new_Jp
                cost = new_cost
                lam = max(lam / 3.0, 1e-15)
                history.append({"iteration": it, "cost": cost, "damping": lam, "accepted": True})
                if decrease <= lm.f_tol * (cost + decrease):
                    termination = "function"
                elif np.linalg.norm(delta) <= lm.x_tol * (x_norm + lm.x_tol):
                    termination = "step"
            else:
                history.append({"iteration": it, "cost": new_cost, "damping": lam, "accepted": False})
                lam *= 10.0
                if np.linalg.norm(delta) <= lm.x_tol * (np.linalg.norm(state.vector()) + lm.x_tol):
                    termination = "step"
                    break
                if lam > 1e16:
                    termination = "damping"
                    break
                if it >= lm.max_iters:
                    break
        if termination != "max_iters":
            break

    log.debug("%s: cost %.6g -> %.6g in %d iterations (%s)",
              variant.value, initial_cost, cost, it, termination)
    Ks = [c.K for c in problem.cameras]
    return SolveReport(variant, initial_cost, cost, it, termination,
                       state.cameras(Ks), state.X.copy(), history)


# --------------------------------------------------------------------------
# shared-y-axis ambiguity at the problem level

def shared_y_axis(problem, tol=1e-9):
    """Common camera y axis (world direction) if all cameras share it, else ``None``."""
    axes = np.array([c.pose.R[1] for c in problem.cameras])
    if np.all(np.linalg.norm(axes - axes[0], axis=1) <= tol):
        return axes[0]
    return None


def prop3_transform_problem(problem, k, axis=None, origin=None):
    """Stretch the scene along the shared y axis by ``k`` and rescale skew/aspect by ``1/k``.

    Points and camera centres are scaled along ``axis`` about ``origin``
    (camera 0's centre by default); ``phi2 <- phi2 / k`` and
    ``1 - phi1 <- (1 - phi1) / k``. With ``phi3 = 0`` on every camera all
    two-step projections are unchanged.
    """
    if axis is None:
        axis = shared_y_axis(problem)
        if axis is None:
            raise ValueError("cameras do not share a y axis")
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    origin = problem.cameras[0].pose.p if origin is None else np.asarray(origin, dtype=float)

    def stretch(X):
        X = np.asarray(X, dtype=float)
        return X + (k - 1.0) * ((X - origin) @ axis)[..., None] * axis

    cams = []
    for c in problem.cameras:
        rs = RsParams(1.0 - (1.0 - c.rs.phi1) / k, c.rs.phi2 / k, c.rs.phi3)
        cams.append(Camera(Pose(c.pose.R, stretch(c.pose.p)), c.K, rs))
    return Problem(cams, stretch(problem.points), list(problem.observations))
