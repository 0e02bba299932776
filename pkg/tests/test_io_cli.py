import json
import subprocess
import sys

import numpy as np
import pytest

from rs_selfcal.bundle import Observation
from rs_selfcal.cli import EXIT_CMS, main
from rs_selfcal.geometry import Intrinsics, Pose
from rs_selfcal.io import SceneFile, SceneFormatError, load_scene, save_scene, scene_from_dict, scene_to_dict
from rs_selfcal.rsmodels import RsParams, project_pinhole

from conftest import random_rotation


def _scene_file(rng, m=4, n=20):
    poses = [Pose(random_rotation(rng), rng.normal(size=3)) for _ in range(m)]
    rs = [RsParams(*rng.normal(0, 0.01, 3)) for _ in range(m)]
    obs = [Observation(i % m, i % n, *rng.uniform(0, 600, 2)) for i in range(3 * n)]
    return SceneFile(Intrinsics(612.5, 320.1, 239.7), 640, 480, poses, rng.normal(size=(n, 3)), rs, obs)


def test_scene_round_trip(tmp_path, rng):
    sf = _scene_file(rng)
    save_scene(tmp_path / "s.json", sf)
    back = load_scene(tmp_path / "s.json")
    for a, b in zip(sf.poses, back.poses):
        np.testing.assert_allclose(b.R, a.R, atol=1e-12, rtol=0)
        np.testing.assert_allclose(b.p, a.p, atol=1e-12, rtol=0)
    np.testing.assert_allclose(back.points, sf.points, atol=1e-12, rtol=0)
    assert back.rs == sf.rs and back.observations == sf.observations
    assert back.K == sf.K and (back.width, back.height) == (640, 480)


def test_non_rotation_rejected(rng):
    doc = scene_to_dict(_scene_file(rng))
    doc["cameras"][1]["R"] = [1, 0, 0, 0, 2, 0, 0, 0, 1]
    with pytest.raises(SceneFormatError, match="camera 1"):
        scene_from_dict(doc)


def test_bad_documents(rng):
    doc = scene_to_dict(_scene_file(rng))
    with pytest.raises(SceneFormatError):
        scene_from_dict({**doc, "format_version": 2})
    with pytest.raises(SceneFormatError):
        scene_from_dict({k: v for k, v in doc.items() if k != "intrinsics"})
    bad = dict(doc)
    bad["observations"] = [{"cam": 99, "pt": 0, "u": 1.0, "v": 1.0}]
    with pytest.raises(SceneFormatError):
        scene_from_dict(bad)


def test_rs_field_is_optional(rng):
    doc = scene_to_dict(_scene_file(rng))
    for c in doc["cameras"]:
        del c["rs"]
    assert all(q == RsParams() for q in scene_from_dict(doc).rs)


def test_synth_noise_free_zero_motion_is_pinhole(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--scene-preset", "fountain", "--cameras", "5", "--points", "60",
                 "--sigma-rot", "0", "--sigma-trans", "0", "--noise", "0", "--out", str(out)]) == 0
    sf = load_scene(out / "scene.json")
    for o in sf.observations:
        uv = project_pinhole(sf.poses[o.cam_id], sf.K, sf.points[o.pt_id])
        np.testing.assert_allclose([o.u, o.v], uv, atol=1e-9)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "synth" and man["seed"] == 0
    assert man["config"]["sigma_rot"] == 0.0


def test_synth_defaults_and_reproducibility(tmp_path):
    args = ["synth", "--scene-preset", "fountain", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/scene.json").read_bytes() == (tmp_path / "b/scene.json").read_bytes()
    cfg = json.loads((tmp_path / "a/manifest.json").read_text())["config"]
    assert (cfg["sigma_rot"], cfg["sigma_trans"], cfg["noise"]) == (0.05, 0.05, 0.5)


def test_synth_from_scene_file(tmp_path):
    assert main(["synth", "--scene-preset", "generic", "--noise", "0", "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--scene-in", str(tmp_path / "a/scene.json"), "--out", str(tmp_path / "b")]) == 0


def test_bad_flags_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["synth", "--noise", "-1", "--out", str(tmp_path)])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["solve", "--scene-in", "x.json", "--variant", "rs-plus", "--out", str(tmp_path)])
    assert e.value.code == 2
    assert main(["solve", "--scene-in", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_coverage_exit_3(tmp_path):
    assert main(["synth", "--scene-preset", "fountain", "--points", "5", "--out", str(tmp_path)]) == 3


def test_solve_truth_start_and_refusal(tmp_path, capsys):
    s = tmp_path / "s"
    assert main(["synth", "--scene-preset", "generic", "--cameras", "5", "--points", "60", "--model", "two-step",
                 "--sigma-trans", "0", "--noise", "0", "--out", str(s)]) == 0
    assert main(["solve", "--scene-in", str(s / "scene.json"), "--variant", "rs", "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r/report.json").read_text())
    assert rep["final_cost"] <= 1e-16
    assert load_scene(tmp_path / "r/scene.json").n_cameras == 5

    # keep two cameras only
    doc = json.loads((s / "scene.json").read_text())
    doc["cameras"] = doc["cameras"][:2]
    doc["observations"] = [o for o in doc["observations"] if o["cam"] < 2]
    (tmp_path / "two.json").write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["solve", "--scene-in", str(tmp_path / "two.json"), "--variant", "rs",
                 "--out", str(tmp_path / "r2")]) == 3
    assert "m >= 3" in capsys.readouterr().err


def test_solve_rs_star_freezes_anchor(tmp_path):
    s = tmp_path / "s"
    assert main(["synth", "--scene-preset", "fountain", "--cameras", "5", "--points", "80", "--out", str(s)]) == 0
    assert main(["solve", "--scene-in", str(s / "scene.json"), "--variant", "rs-star", "--anchor-cam", "1",
                 "--perturb", "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r/report.json").read_text())
    assert rep["cameras"][1]["rs"][0] == 0.0


def test_cms_check_exit_codes(tmp_path, capsys):
    assert main(["cms-check", "--scene-preset", "y-shared"]) == EXIT_CMS
    assert json.loads(capsys.readouterr().out)["is_cms"] is True
    assert main(["cms-check", "--scene-preset", "generic", "--cameras", "5", "--out", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["nullity"] == 0
    assert main(["cms-check", "--scene-preset", "generic", "--cameras", "2"]) == EXIT_CMS


def test_experiment_outputs(tmp_path):
    out = tmp_path / "e"
    assert main(["experiment", "--scene-preset", "generic", "--cameras", "6", "--points", "60", "--trials", "1",
                 "--sigma-rot", "0", "--sigma-trans", "0", "--noise", "0", "--out", str(out)]) == 0
    rows = (out / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 4
    for r in rows[1:]:
        f = r.split(",")
        assert max(float(f[2]), float(f[3]), float(f[4])) <= 1e-8
    hist = np.loadtxt(out / "hist_rs-star_struct_err.dat")
    assert hist.shape == (100, 2)
    assert json.loads((out / "manifest.json").read_text())["config"]["trial_config"]["n_trials"] == 1


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("RS_SELFCAL_THREADS", "zero")
    assert main(["experiment", "--scene-preset", "generic", "--trials", "1", "--out", str(tmp_path)]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "rs_selfcal.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "rs-selfcal" in r.stdout
