import numpy as np
import pytest
from scipy import stats

from rs_selfcal.bundle import Camera, SolverOptions, solve
from rs_selfcal.errors import InsufficientCoverage
from rs_selfcal.geometry import Pose, Similarity, rotation_from_axis_angle
from rs_selfcal.harness import (CSV_COLUMNS, TrialConfig, align_trajectory, clean_projections,
                                evaluate, generate_motions, generate_rs_motion, perturbed_problem,
                                prune_points, rotation_error, run_experiment, structure_error,
                                synthesize_observations, translation_error)
from rs_selfcal.rsmodels import RsMotion, project_pinhole
from rs_selfcal.scenes import PRESETS, make_scene

from conftest import random_rotation


def test_zero_sigmas_give_zero_motion(rng):
    m = generate_rs_motion(rng, TrialConfig(sigma_rot=0, sigma_trans=0), 1.0, 0.8)
    assert not m.phi.any() and not m.v.any()
    with pytest.raises(ValueError):
        generate_rs_motion(rng, TrialConfig(), 1.0, 0.0)


def test_motion_magnitude_and_axis_statistics():
    rng = np.random.default_rng(7)
    cfg = TrialConfig()
    ext = 0.8
    draws = [generate_rs_motion(rng, cfg, 2.0, ext) for _ in range(100_000)]
    phi = np.array([d.phi for d in draws])
    angle = ext * np.linalg.norm(phi, axis=1)
    assert angle.mean() == pytest.approx(0.05 * np.sqrt(2 / np.pi), rel=0.01)
    octant = ((phi > 0) * [1, 2, 4]).sum(axis=1)
    assert stats.chisquare(np.bincount(octant, minlength=8)).pvalue > 0.01
    v = np.array([d.v for d in draws]) * ext
    assert v.std() == pytest.approx(0.05 * 2.0, rel=0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(sigma_rot=-1)
    with pytest.raises(ValueError):
        TrialConfig(n_trials=0)
    with pytest.raises(ValueError):
        TrialConfig(model="brown")


def test_presets_build():
    for name in PRESETS:
        scene = make_scene(name, 6, 50)
        assert scene.n_cameras == 6 and len(scene.points) == 50
        assert scene.row_extent == pytest.approx(480 / 600)
    with pytest.raises(ValueError):
        make_scene("nowhere")


def test_y_shared_preset_shares_the_axis():
    scene = make_scene("y-shared")
    axes = np.array([P.R[1] for P in scene.trajectory])
    np.testing.assert_allclose(axes, np.broadcast_to(axes[0], axes.shape), atol=1e-12)


def test_zero_motion_zero_noise_is_pinhole():
    scene = make_scene("fountain", 5, 60)
    cfg = TrialConfig(sigma_rot=0, sigma_trans=0, pixel_noise_sigma=0)
    motions = generate_motions(np.random.default_rng(0), cfg, scene)
    obs = synthesize_observations(scene, motions, cfg)
    for o in obs[::7]:
        uv = project_pinhole(scene.trajectory[o.cam_id], scene.K, scene.points[o.pt_id])
        np.testing.assert_allclose([o.u, o.v], uv, atol=1e-9)


def test_noise_moments_and_clean_first_image():
    scene = make_scene("fountain")
    cfg = TrialConfig()
    motions = generate_motions(np.random.default_rng(1), cfg, scene)
    assert not motions[0].phi.any() and not motions[0].v.any()
    cam, pt, uv = clean_projections(scene, motions)
    obs = synthesize_observations(scene, motions, cfg, np.random.default_rng(2), (cam, pt, uv))
    noisy = np.array([(o.u, o.v) for o in obs])
    assert np.abs(noisy - uv).mean() == pytest.approx(0.5 * np.sqrt(2 / np.pi), rel=0.05)
    # camera 0 sees plain pinhole projections
    first = cam == 0
    ref = project_pinhole(scene.trajectory[0], scene.K, scene.points[pt[first]])
    np.testing.assert_allclose(uv[first], ref, atol=1e-9)


def test_dirty_first_image_is_rejected():
    scene = make_scene("fountain", 4, 50)
    cfg = TrialConfig()
    motions = [RsMotion([0.01, 0, 0])] * 4
    with pytest.raises(ValueError):
        synthesize_observations(scene, motions, cfg, np.random.default_rng(0))


def test_insufficient_coverage():
    scene = make_scene("fountain", 4, 5)
    cfg = TrialConfig(pixel_noise_sigma=0)
    motions = generate_motions(np.random.default_rng(0), cfg, scene)
    with pytest.raises(InsufficientCoverage):
        synthesize_observations(scene, motions, cfg)


def test_prune_points_reindexes():
    from rs_selfcal.bundle import Observation
    obs = [Observation(0, 0, 1, 1), Observation(1, 0, 1, 1), Observation(0, 2, 1, 1),
           Observation(0, 3, 1, 1), Observation(2, 3, 1, 1)]
    kept_obs, kept = prune_points(obs, 4)
    assert kept.tolist() == [0, 3]
    assert [o.pt_id for o in kept_obs] == [0, 0, 1, 1]


def test_rotation_error_hand_value(rng):
    truth = [Pose(random_rotation(rng), rng.normal(size=3)) for _ in range(10)]
    est = list(truth)
    est[4] = Pose(rotation_from_axis_angle([0, 0.1, 0]) @ truth[4].R, truth[4].p)
    assert rotation_error(truth, truth) == 0.0
    assert rotation_error(truth, est) == pytest.approx(0.01, abs=1e-12)


def test_metrics_vanish_under_similarity(rng):
    scene = make_scene("generic", 6, 40)
    T = Similarity(1.7, random_rotation(rng), rng.normal(size=3))
    est = [T.apply_to_pose(P) for P in scene.trajectory]
    m = evaluate(scene, est, T(scene.points))
    assert max(m.rot_err, m.trans_err, m.struct_err) < 1e-9


def test_metrics_invariant_to_similarity_of_estimate(rng):
    scene = make_scene("generic", 6, 40)
    est = [Pose(rotation_from_axis_angle(rng.normal(0, 0.02, 3)) @ P.R, P.p + rng.normal(0, 0.05, 3))
           for P in scene.trajectory]
    pts = scene.points + rng.normal(0, 0.05, scene.points.shape)
    a = evaluate(scene, est, pts)
    T = Similarity(0.3, random_rotation(rng), rng.normal(size=3))
    b = evaluate(scene, [T.apply_to_pose(P) for P in est], T(pts))
    for k in ("rot_err", "trans_err", "struct_err"):
        assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-8)


def test_translation_error_matches_brute_force_small_case():
    ang = np.linspace(0, 2 * np.pi, 4, endpoint=False)
    truth = [Pose(np.eye(3), [np.cos(a), np.sin(a), 0.1 * a]) for a in ang]
    est = list(truth)
    est[1] = Pose(np.eye(3), truth[1].p + [0.0, 0.0, 0.3])
    T = align_trajectory(truth, est)
    expect = np.mean([np.linalg.norm(T(e.p) - t.p) for t, e in zip(truth, est)])
    assert translation_error(truth, est) == pytest.approx(expect, rel=1e-12)
    assert 0 < expect < 0.3


def test_structure_error_sum_semantics():
    ident = Similarity(1.0, np.eye(3), np.zeros(3))
    X = np.zeros((3, 3))
    Y = X.copy()
    Y[1, 0] = 1.0
    assert structure_error(X, X, ident) == 0.0
    assert structure_error(X, Y, ident) == 1.0
    assert structure_error(np.vstack([X, X]), np.vstack([Y, Y]), ident) == 2.0


def test_perturbed_problem_starts_rs_at_zero(rng):
    scene = make_scene("fountain", 4, 50)
    cfg = TrialConfig(pixel_noise_sigma=0)
    motions = generate_motions(rng, cfg, scene)
    obs, kept = prune_points(synthesize_observations(scene, motions, cfg), 50)
    prob = perturbed_problem(scene, obs, kept, rng, cfg)
    assert all(not c.rs.as_array().any() for c in prob.cameras)
    assert prob.n_points == len(kept)


def test_zero_motion_experiment_is_exact():
    scene = make_scene("generic", 6, 60)
    cfg = TrialConfig(sigma_rot=0, sigma_trans=0, pixel_noise_sigma=0, n_trials=1)
    res = run_experiment(scene, cfg)
    for v in res.variants:
        for metric in ("rot_err", "trans_err", "struct_err"):
            assert res.median(v, metric) <= 1e-8, (v, metric)


def test_experiment_csv_and_histograms():
    scene = make_scene("fountain", 6, 60)
    cfg = TrialConfig(n_trials=3, seed=5)
    res = run_experiment(scene, cfg, ["no-rs", "rs"])
    lines = res.to_csv().strip().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 1 + 3 * 2
    hist = res.histograms(n_bins=10)
    edges, frac = hist[("rs", "struct_err")]
    assert len(edges) == 10 and np.all(np.diff(frac) >= 0) and frac[-1] <= 1.0
    np.testing.assert_array_equal(edges, hist[("no-rs", "struct_err")][0])


def test_motions_fixed_noise_redrawn_and_thread_independent():
    scene = make_scene("fountain", 6, 60)
    cfg = TrialConfig(n_trials=3, seed=11)
    a = run_experiment(scene, cfg, ["rs"], threads=1)
    b = run_experiment(scene, cfg, ["rs"], threads=3)
    assert a.to_csv() == b.to_csv()
    for m1, m2 in zip(a.motions, b.motions):
        np.testing.assert_array_equal(m1.phi, m2.phi)
    errs = a.values("rs", "struct_err")
    assert len(set(errs.tolist())) == 3


def test_elongation_signature_on_shared_axis():
    """rs distorts the vertical extent more than rs-star in at least 80% of trials."""
    scene = make_scene("y-shared")
    cfg = TrialConfig(seed=0)
    ms, *ts = np.random.SeedSequence(0).spawn(11)
    motions = generate_motions(np.random.default_rng(ms), cfg, scene)
    clean = clean_projections(scene, motions)
    wins = 0
    for t in ts:
        rng = np.random.default_rng(t)
        obs, kept = prune_points(synthesize_observations(scene, motions, cfg, rng, clean), len(scene.points))
        init = perturbed_problem(scene, obs, kept, rng, cfg)
        start = solve(init, SolverOptions(variant="no-rs")).to_problem(init)
        start.cameras = [Camera(c.pose, c.K) for c in start.cameras]
        dev = {}
        for v in ("rs", "rs-star"):
            rep = solve(start, SolverOptions(variant=v))
            T = align_trajectory(scene.trajectory, [c.pose for c in rep.cameras])
            ratio = np.ptp(T(rep.points)[:, 1]) / np.ptp(scene.points[kept][:, 1])
            dev[v] = abs(ratio - 1.0)
        wins += dev["rs"] > dev["rs-star"]
    assert wins >= 8
