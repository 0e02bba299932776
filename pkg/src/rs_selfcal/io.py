"""JSON scene files, solve reports and run manifests.

A scene file holds intrinsics, camera poses (row-major ``R`` plus centre
``p``), optional per-camera RS parameters, 3D points and optional pixel
observations::

    {"format_version": 1,
     "intrinsics": {"f": .., "u0": .., "v0": .., "width": .., "height": ..},
     "cameras": [{"R": [9 reals], "p": [3 reals], "rs": [phi1, phi2, phi3]}],
     "points": [[X, Y, Z], ...],
     "observations": [{"cam": i, "pt": j, "u": .., "v": ..}]}

Floats are written with ``repr`` precision so a load/save round trip is exact.
"""
from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import Camera, Observation, Problem
from .geometry import Intrinsics, Pose
from .rsmodels import RsParams

FORMAT_VERSION = 1
ORTHO_TOL = 1e-6


class SceneFormatError(ValueError):
    """Malformed or unsupported scene document."""


@dataclass
class SceneFile:
    K: Intrinsics
    width: int
    height: int
    poses: list
    points: np.ndarray
    rs: list = None
    observations: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float).reshape(-1, 3)
        if self.rs is None:
            self.rs = [RsParams() for _ in self.poses]
        if len(self.rs) != len(self.poses):
            raise SceneFormatError("rs list length differs from camera count")

    @property
    def n_cameras(self):
        return len(self.poses)

    def to_problem(self):
        cams = [Camera(P, self.K, q) for P, q in zip(self.poses, self.rs)]
        return Problem(cams, self.points.copy(), list(self.observations))

    @classmethod
    def from_problem(cls, problem, width, height, extra=None):
        K = problem.cameras[0].K
        return cls(K, width, height, [c.pose for c in problem.cameras], problem.points,
                   [c.rs for c in problem.cameras], list(problem.observations), dict(extra or {}))


def _check_rotation(R, i):
    err = np.max(np.abs(R @ R.T - np.eye(3)))
    if err > ORTHO_TOL or np.linalg.det(R) <= 0:
        raise SceneFormatError(f"camera {i}: R is not a rotation (orthonormality error {err:.3g})")


def scene_to_dict(scene):
    cams = []
    for P, q in zip(scene.poses, scene.rs):
        cams.append({"R": [float(x) for x in P.R.ravel()],
                     "p": [float(x) for x in P.p],
                     "rs": [float(x) for x in q.as_array()]})
    doc = {"format_version": FORMAT_VERSION,
           "intrinsics": {"f": float(scene.K.f), "u0": float(scene.K.u0), "v0": float(scene.K.v0),
                          "width": int(scene.width), "height": int(scene.height)},
           "cameras": cams,
           "points": [[float(x) for x in X] for X in scene.points]}
    if scene.observations:
        doc["observations"] = [{"cam": o.cam_id, "pt": o.pt_id, "u": float(o.u), "v": float(o.v)}
                               for o in scene.observations]
    doc.update(scene.extra)
    return doc


def scene_from_dict(doc):
    if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise SceneFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    try:
        intr = doc["intrinsics"]
        K = Intrinsics(float(intr["f"]), float(intr["u0"]), float(intr["v0"]))
        width, height = int(intr["width"]), int(intr["height"])
        poses, rs = [], []
        for i, c in enumerate(doc["cameras"]):
            R = np.array(c["R"], dtype=float).reshape(3, 3)
            _check_rotation(R, i)
            poses.append(Pose(R, np.array(c["p"], dtype=float).reshape(3)))
            rs.append(RsParams(*map(float, c.get("rs", (0.0, 0.0, 0.0)))))
        points = np.array(doc.get("points", []), dtype=float).reshape(-1, 3)
        obs = [Observation(int(o["cam"]), int(o["pt"]), float(o["u"]), float(o["v"]))
               for o in doc.get("observations", [])]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SceneFormatError):
            raise
        raise SceneFormatError(f"malformed scene document: {exc}") from exc
    for o in obs:
        if not (0 <= o.cam_id < len(poses) and 0 <= o.pt_id < len(points)):
            raise SceneFormatError(f"observation refers to missing camera/point: {o}")
    known = {"format_version", "intrinsics", "cameras", "points", "observations"}
    extra = {k: v for k, v in doc.items() if k not in known}
    return SceneFile(K, width, height, poses, points, rs, obs, extra)


def save_scene(path, scene):
    write_json(path, scene_to_dict(scene))


def load_scene(path):
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, allow_nan=True)
        fh.write("\n")


def manifest(command, config, seed=None):
    """Everything needed to re-run a command: its resolved flags, seed and versions."""
    import scipy
    return {"tool": "rs-selfcal", "version": __version__, "command": command,
            "seed": seed, "config": config,
            "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "argv": list(sys.argv)}


def write_manifest(out_dir, command, config, seed=None):
    path = Path(out_dir) / "manifest.json"
    write_json(path, manifest(command, config, seed))
    return path
