"""Procedural scenes: facade-like point clouds viewed from arc trajectories.

World convention: ``Y`` points down, so a camera with zero elevation and zero
roll has its image y axis (the rolling-shutter readout direction) aligned with
world ``Y``. Trajectories whose cameras all share that axis are exactly the
critical configuration of the self-calibration problem; small elevation angles
put a trajectory close to it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics, Pose, rotation_from_axis_angle

DOWN = np.array([0.0, 1.0, 0.0])


@dataclass
class Scene:
    points: np.ndarray
    trajectory: list
    K: Intrinsics
    width: int = 640
    height: int = 480

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float).reshape(-1, 3)

    @property
    def n_cameras(self):
        return len(self.trajectory)

    @property
    def row_extent(self):
        """Height of the image in normalized rows."""
        return self.height / self.K.f

    @property
    def positions(self):
        return np.array([P.p for P in self.trajectory])

    @property
    def mean_step(self):
        """Average distance between consecutive camera positions."""
        return float(np.mean(np.linalg.norm(np.diff(self.positions, axis=0), axis=1)))

    @property
    def diameter(self):
        c = self.points.mean(axis=0)
        return 2.0 * float(np.max(np.linalg.norm(self.points - c, axis=1)))


def look_at(center, target, roll=0.0):
    """Pose at ``center`` looking at ``target`` with image y pointing down, then rolled."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(DOWN, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    if roll:
        R = rotation_from_axis_angle([0.0, 0.0, roll]) @ R
    return Pose(R, center)


def facade_points(rng, n_points, width=6.0, height=4.0, depth=3.0):
    """A back wall plus protruding blocks, centred on the origin."""
    n_wall = int(0.6 * n_points)
    wall = np.column_stack([rng.uniform(-width / 2, width / 2, n_wall),
                            rng.uniform(-height / 2, height / 2, n_wall),
                            depth / 2 + rng.normal(0, 0.05, n_wall)])
    n_rest = n_points - n_wall
    blocks = np.column_stack([rng.uniform(-0.4 * width, 0.4 * width, n_rest),
                              rng.uniform(-height / 2, height / 2, n_rest),
                              rng.uniform(-depth / 2, depth / 2, n_rest)])
    return np.vstack([wall, blocks])


def arc_scene(n_cameras=10, n_points=200, radius=10.0, arc_deg=60.0,
              elevation_deg=0.0, elevation_jitter_deg=0.0, roll_deg=0.0,
              height_jitter=0.0, f=600.0, width=640, height=480, seed=0):
    """Cameras on a horizontal arc in front of a facade.

    ``elevation_deg`` tilts every optical axis up/down by a constant amount and
    ``elevation_jitter_deg`` adds a per-camera uniform tilt; ``roll_deg`` is a
    per-camera uniform roll range. With all three zero the cameras share their
    y axis exactly, whatever ``height_jitter`` moves the centres.
    """
    rng = np.random.default_rng(seed)
    pts = facade_points(rng, n_points)
    angles = np.deg2rad(np.linspace(-arc_deg / 2, arc_deg / 2, n_cameras))
    traj = []
    for a in angles:
        c = np.array([radius * np.sin(a), rng.uniform(-height_jitter, height_jitter), -radius * np.cos(a)])
        elev = np.deg2rad(elevation_deg + rng.uniform(-elevation_jitter_deg, elevation_jitter_deg))
        # tilt the look-at target vertically to realize the elevation
        dist = np.hypot(c[0], c[2])
        target = np.array([0.0, c[1] - dist * np.tan(elev), 0.0])
        roll = np.deg2rad(rng.uniform(-roll_deg, roll_deg)) if roll_deg else 0.0
        traj.append(look_at(c, target, roll))
    return Scene(pts, traj, Intrinsics(f, width / 2, height / 2), width, height)


def generic_scene(n_cameras=10, n_points=200, radius=10.0, f=600.0, width=640, height=480, seed=0):
    """Cameras scattered over a sphere cap with large elevation and roll variation."""
    rng = np.random.default_rng(seed)
    pts = facade_points(rng, n_points)
    traj = []
    for i in range(n_cameras):
        az = np.deg2rad(rng.uniform(-35, 35))
        el = np.deg2rad(rng.uniform(-40, 40))
        c = radius * np.array([np.sin(az) * np.cos(el), np.sin(el), -np.cos(az) * np.cos(el)])
        roll = np.deg2rad(rng.uniform(-30, 30))
        traj.append(look_at(c, rng.normal(0, 0.2, 3), roll))
    return Scene(pts, traj, Intrinsics(f, width / 2, height / 2), width, height)


PRESETS = {
    # low elevation, small tilt: close to the shared-y-axis critical motion
    "fountain": dict(kind="arc", elevation_deg=1.0, elevation_jitter_deg=1.0, roll_deg=1.0, height_jitter=0.3),
    # cameras at varied heights looking down/up: far from critical
    "herz-jesu": dict(kind="arc", elevation_deg=0.0, elevation_jitter_deg=25.0, roll_deg=15.0, height_jitter=3.0),
    # exactly shared y axis, arbitrary heights
    "y-shared": dict(kind="arc", elevation_deg=0.0, elevation_jitter_deg=0.0, roll_deg=0.0, height_jitter=0.5),
    "generic": dict(kind="generic"),
}


def make_scene(preset, n_cameras=10, n_points=200, seed=0):
    try:
        kw = dict(PRESETS[preset])
    except KeyError:
        raise ValueError(f"unknown scene preset {preset!r}; choose from {sorted(PRESETS)}") from None
    kind = kw.pop("kind")
    if kind == "generic":
        return generic_scene(n_cameras, n_points, seed=seed)
    return arc_scene(n_cameras, n_points, seed=seed, **kw)
