"""Synthetic rolling-shutter data and the Monte-Carlo bundle-adjustment experiment.

A trial projects a fixed scene through randomly generated (but fixed across
trials) intra-frame motions, adds fresh pixel noise, perturbs the ground truth
to get a starting point, and runs each bundle-adjustment variant. Errors are
measured after aligning the estimated camera trajectory to the true one with
a least-squares similarity.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bundle import Camera, Observation, Problem, SolverOptions, Variant, solve
from .errors import CheiralityViolation, InsufficientCoverage, RsSelfcalError
from .geometry import Pose, rotation_angle, rotation_from_axis_angle, similarity_align
from .rsmodels import RsMotion, RsParams, full_rs_rowcoord, two_step_rowcoord

log = logging.getLogger(__name__)

MIN_OBS_PER_CAMERA = 6
METRICS = ("rot_err", "trans_err", "struct_err")
CSV_COLUMNS = ("variant", "trial", "rot_err", "trans_err", "struct_err",
               "final_cost", "iterations", "converged", "struct_err_mean")


@dataclass
class TrialConfig:
    sigma_rot: float = 0.05
    sigma_trans: float = 0.05
    pixel_noise_sigma: float = 0.5
    n_trials: int = 100
    seed: int = 0
    first_image_clean: bool = True
    # "full" projects through the exact model, "two-step" through the BA model
    model: str = "full"
    # phi3 = 0 keeps the intra-frame rotation axis in the image plane
    zero_phi3: bool = False
    # starting-point perturbation: radians, fraction of mean step, fraction of diameter
    init_rot_sigma: float = 0.01
    init_pos_sigma: float = 0.05
    init_point_sigma: float = 0.01
    # "nors": RS variants start from the no-RS solution; "perturbed": from the perturbed truth
    init: str = "nors"

    def __post_init__(self):
        if min(self.sigma_rot, self.sigma_trans, self.pixel_noise_sigma) < 0:
            raise ValueError("noise levels must be non-negative")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.model not in ("full", "two-step"):
            raise ValueError(f"unknown projection model {self.model!r}")
        if self.init not in ("nors", "perturbed"):
            raise ValueError(f"unknown init mode {self.init!r}")


@dataclass
class Metrics:
    rot_err: float
    trans_err: float
    struct_err: float
    struct_err_mean: float = float("nan")


# --------------------------------------------------------------------------
# synthesis

def _uniform_unit_vector(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def generate_rs_motion(rng, cfg, mean_step, row_extent):
    """One intra-frame motion.

    The rotation axis is uniform on the sphere and the angle swept over the
    frame, ``row_extent * |phi|``, is half-normal with scale ``sigma_rot``.
    Translation components are ``N(0, (sigma_trans * mean_step)^2)`` over the
    frame, i.e. divided by ``row_extent`` per normalized row.
    """
    if row_extent <= 0:
        raise ValueError("row_extent must be positive")
    axis = _uniform_unit_vector(rng)
    theta = abs(rng.normal(0.0, cfg.sigma_rot)) if cfg.sigma_rot > 0 else 0.0
    if cfg.zero_phi3:
        axis[2] = 0.0
        axis /= np.linalg.norm(axis)
    phi = axis * theta / row_extent
    v = rng.normal(0.0, cfg.sigma_trans * mean_step, 3) / row_extent if cfg.sigma_trans > 0 else np.zeros(3)
    return RsMotion(phi, v)


def generate_motions(rng, cfg, scene):
    motions = [generate_rs_motion(rng, cfg, scene.mean_step, scene.row_extent)
               for _ in range(scene.n_cameras)]
    if cfg.first_image_clean:
        motions[0] = RsMotion()
    return motions


def clean_projections(scene, motions, model="full"):
    """Noise-free pixel projections of every visible point.

    Returns ``(cam_idx, pt_idx, uv)``; points behind a camera or outside the
    image are dropped.
    """
    cams, pts, uvs = [], [], []
    K = scene.K
    for i, (pose, motion) in enumerate(zip(scene.trajectory, motions)):
        depth = (scene.points - pose.p) @ pose.R[2]
        idx = np.flatnonzero(depth > 1e-6)
        if model == "full":
            try:
                cr = full_rs_rowcoord(pose, motion, scene.points[idx])
            except CheiralityViolation:
                cr = np.array([full_rs_rowcoord(pose, motion, X) for X in scene.points[idx]])
        else:
            cr = two_step_rowcoord(pose, motion.params, scene.points[idx])
        uv = K.f * cr + np.array([K.u0, K.v0])
        inside = ((uv[:, 0] >= 0) & (uv[:, 0] < scene.width)
                  & (uv[:, 1] >= 0) & (uv[:, 1] < scene.height))
        cams.append(np.full(inside.sum(), i))
        pts.append(idx[inside])
        uvs.append(uv[inside])
    return np.concatenate(cams), np.concatenate(pts), np.vstack(uvs)


def synthesize_observations(scene, motions, cfg, rng=None, clean=None):
    """Observations of ``scene`` through ``motions`` plus i.i.d. Gaussian pixel noise.

    ``clean`` may carry a precomputed :func:`clean_projections` result so that
    repeated trials only redraw the noise.
    """
    if len(motions) != scene.n_cameras:
        raise ValueError("need one motion per camera")
    if cfg.first_image_clean and np.any(motions[0].phi) | np.any(motions[0].v):
        raise ValueError("first image must be distortion-free when first_image_clean is set")
    cam, pt, uv = clean if clean is not None else clean_projections(scene, motions, cfg.model)
    counts = np.bincount(cam, minlength=scene.n_cameras)
    if np.any(counts < MIN_OBS_PER_CAMERA):
        raise InsufficientCoverage(f"cameras {np.flatnonzero(counts < MIN_OBS_PER_CAMERA).tolist()} "
                                   f"see fewer than {MIN_OBS_PER_CAMERA} points")
    if cfg.pixel_noise_sigma > 0:
        if rng is None:
            raise ValueError("an rng is required for noisy synthesis")
        uv = uv + rng.normal(0.0, cfg.pixel_noise_sigma, uv.shape)
    return [Observation(int(c), int(j), float(u), float(v)) for c, j, (u, v) in zip(cam, pt, uv)]


def prune_points(observations, n_points, min_views=2):
    """Drop points seen fewer than ``min_views`` times.

    Returns the re-indexed observations and the original indices of the kept points.
    """
    counts = np.bincount([o.pt_id for o in observations], minlength=n_points)
    kept = np.flatnonzero(counts >= min_views)
    remap = -np.ones(n_points, dtype=int)
    remap[kept] = np.arange(len(kept))
    obs = [Observation(o.cam_id, int(remap[o.pt_id]), o.u, o.v, o.weight)
           for o in observations if remap[o.pt_id] >= 0]
    return obs, kept


def perturbed_problem(scene, observations, kept, rng, cfg):
    """Ground truth perturbed per ``cfg``; RS parameters start at 0."""
    cams = []
    pos_sigma = cfg.init_pos_sigma * scene.mean_step
    for pose in scene.trajectory:
        dR = rotation_from_axis_angle(rng.normal(0.0, cfg.init_rot_sigma, 3))
        cams.append(Camera(Pose(dR @ pose.R, pose.p + rng.normal(0.0, pos_sigma, 3)), scene.K, RsParams()))
    pts = scene.points[kept] + rng.normal(0.0, cfg.init_point_sigma * scene.diameter, (len(kept), 3))
    return Problem(cams, pts, observations)


# --------------------------------------------------------------------------
# metrics

def rotation_error(truth, est):
    """Mean angle of ``R_i R_hat_i^T`` over the cameras."""
    if len(truth) != len(est):
        raise ValueError("trajectories differ in length")
    return float(np.mean([rotation_angle(t.R @ e.R.T) for t, e in zip(truth, est)]))


def align_trajectory(truth, est):
    """Similarity taking estimated camera centres onto the true ones."""
    return similarity_align(np.array([e.p for e in est]), np.array([t.p for t in truth]))


def translation_error(truth, est, alignment=None):
    """Mean camera-centre distance after least-squares similarity alignment."""
    if len(truth) != len(est):
        raise ValueError("trajectories differ in length")
    T = alignment or align_trajectory(truth, est)
    aligned = T(np.array([e.p for e in est]))
    return float(np.mean(np.linalg.norm(aligned - np.array([t.p for t in truth]), axis=1)))


def structure_error(truth_pts, est_pts, alignment):
    """Sum over points of ``||X_j - T(X_hat_j)||``; correspondence by index."""
    truth_pts = np.asarray(truth_pts, dtype=float)
    est_pts = np.asarray(est_pts, dtype=float)
    if truth_pts.shape != est_pts.shape:
        raise ValueError("point sets differ in size")
    return float(np.sum(np.linalg.norm(alignment(est_pts) - truth_pts, axis=1)))


def evaluate(scene, cameras, points, kept=None):
    """All three error metrics of an estimate against the scene's ground truth."""
    truth = scene.trajectory
    est = [c.pose if hasattr(c, "pose") else c for c in cameras]
    T = align_trajectory(truth, est)
    aligned = [T.apply_to_pose(P) for P in est]
    truth_pts = scene.points if kept is None else scene.points[kept]
    s = structure_error(truth_pts, points, T)
    return Metrics(rotation_error(truth, aligned), translation_error(truth, est, T), s, s / len(truth_pts))


# --------------------------------------------------------------------------
# experiment

@dataclass
class TrialRecord:
    variant: str
    trial: int
    rot_err: float
    trans_err: float
    struct_err: float
    final_cost: float
    iterations: int
    converged: bool
    struct_err_mean: float


@dataclass
class ExperimentResult:
    records: list
    motions: list
    config: TrialConfig
    variants: list = field(default_factory=list)

    def values(self, variant, metric):
        v = Variant(variant).value
        return np.array([getattr(r, metric) for r in self.records if r.variant == v], dtype=float)

    def median(self, variant, metric):
        vals = self.values(variant, metric)
        return float(np.median(vals[np.isfinite(vals)])) if np.any(np.isfinite(vals)) else float("nan")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def histograms(self, n_bins=100, quantile=99.0):
        """Cumulative error histograms keyed by ``(variant, metric)``.

        Each value is ``(upper_edges, fraction)``: the fraction of trials whose
        error is at most the bin's upper edge. Bins are shared by all variants
        of a metric and span ``[0, 99th percentile]``.
        """
        out = {}
        for metric in METRICS:
            pooled = np.concatenate([self.values(v, metric) for v in self.variants])
            pooled = pooled[np.isfinite(pooled)]
            top = float(np.percentile(pooled, quantile)) if len(pooled) else 1.0
            top = top if top > 0 else 1.0
            edges = np.linspace(0.0, top, n_bins + 1)[1:]
            for v in self.variants:
                vals = self.values(v, metric)
                vals = np.where(np.isfinite(vals), vals, np.inf)
                frac = np.searchsorted(np.sort(vals), edges, side="right") / len(vals)
                out[(Variant(v).value, metric)] = (edges, frac)
        return out


def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _solve_safely(problem, opts):
    try:
        return solve(problem, opts)
    except RsSelfcalError as exc:
        log.warning("%s solve failed: %s", opts.variant.value, exc)
        return None


def run_trial(scene, cfg, variants, motions, clean, trial, seed_seq, solver_opts=None):
    """Run every variant on one noise/initialization draw; returns a list of records."""
    rng = np.random.default_rng(seed_seq)
    obs = synthesize_observations(scene, motions, cfg, rng, clean=clean)
    obs, kept = prune_points(obs, len(scene.points))
    init = perturbed_problem(scene, obs, kept, rng, cfg)
    base = solver_opts or {}

    reports = {}
    need_nors = Variant.NO_RS in variants or cfg.init == "nors"
    if need_nors:
        reports[Variant.NO_RS] = _solve_safely(init, SolverOptions(variant=Variant.NO_RS, **base))
    for v in variants:
        if v is Variant.NO_RS:
            continue
        start = init
        if cfg.init == "nors" and reports[Variant.NO_RS] is not None:
            start = reports[Variant.NO_RS].to_problem(init)
            start = Problem([Camera(c.pose, c.K, RsParams()) for c in start.cameras], start.points, obs)
        reports[v] = _solve_safely(start, SolverOptions(variant=v, **base))

    records = []
    for v in variants:
        rep = reports.get(v)
        if rep is None:
            nan = float("nan")
            records.append(TrialRecord(v.value, trial, nan, nan, nan, nan, 0, False, nan))
            continue
        m = evaluate(scene, rep.cameras, rep.points, kept)
        records.append(TrialRecord(v.value, trial, m.rot_err, m.trans_err, m.struct_err,
                                   float(rep.final_cost), int(rep.iterations), bool(rep.converged),
                                   m.struct_err_mean))
    return records


def run_experiment(scene, cfg, variants=tuple(Variant), threads=1, solver_opts=None):
    """Monte-Carlo comparison of bundle-adjustment variants.

    The intra-frame motions are drawn once from ``cfg.seed`` and kept for all
    trials; each trial gets its own child seed for noise and initialization,
    so results do not depend on ``threads``.
    """
    variants = [Variant(v) for v in variants]
    root = np.random.SeedSequence(cfg.seed)
    motion_seq, *trial_seqs = root.spawn(cfg.n_trials + 1)
    motions = generate_motions(np.random.default_rng(motion_seq), cfg, scene)
    clean = clean_projections(scene, motions, cfg.model)

    def one(t):
        return run_trial(scene, cfg, variants, motions, clean, t, trial_seqs[t], solver_opts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(one, range(cfg.n_trials)))
    else:
        per_trial = [one(t) for t in range(cfg.n_trials)]
    records = [r for rs in per_trial for r in rs]
    return ExperimentResult(records, motions, cfg, [v.value for v in variants])
