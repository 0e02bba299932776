"""``rs-selfcal`` command line: synth, solve, experiment and cms-check.

Exit codes: 0 success, 2 bad flags or unreadable input, 3 insufficient
coverage or an infeasible problem, 4 numerical failure in the solver,
10 from ``cms-check`` when the motion is critical.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import LMOptions, SolverOptions, Variant, solve
from .errors import (InsufficientCoverage, InsufficientObservations,
                     NumericalFailure, RsSelfcalError)
from .harness import (TrialConfig, clean_projections, generate_motions,
                      perturbed_problem, prune_points, run_experiment,
                      synthesize_observations)
from .io import SceneFile, SceneFormatError, load_scene, save_scene, write_json, write_manifest
from .scenes import PRESETS, Scene, make_scene
from .selfcalib import RANK_THRESHOLD, cms_check_poses

log = logging.getLogger("rs_selfcal")

EXIT_USAGE = 2
EXIT_COVERAGE = 3
EXIT_NUMERICAL = 4
EXIT_CMS = 10
THREADS_ENV = "RS_SELFCAL_THREADS"


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _nonneg_float(s):
    x = float(s)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return x


def _pos_int(s):
    x = int(s)
    if x < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return x


def _scene_args(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--scene-preset", choices=sorted(PRESETS), help="built-in procedural scene")
    g.add_argument("--scene-in", type=Path, help="scene JSON file")
    p.add_argument("--cameras", type=_pos_int, default=10, help="cameras in a preset scene")
    p.add_argument("--points", type=_pos_int, default=200, help="points in a preset scene")
    p.add_argument("--scene-seed", type=int, default=0, help="seed of the preset scene geometry")


def _motion_args(p):
    p.add_argument("--sigma-rot", type=_nonneg_float, default=0.05, help="radians over the frame")
    p.add_argument("--sigma-trans", type=_nonneg_float, default=0.05, help="fraction of the mean camera step")
    p.add_argument("--noise", type=_nonneg_float, default=0.5, help="pixel noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=("full", "two-step"), default="full",
                   help="projection model used to synthesize observations")
    p.add_argument("--clean-first", action=argparse.BooleanOptionalAction, default=True,
                   help="leave the first image free of RS distortion")


def build_parser():
    ap = argparse.ArgumentParser(prog="rs-selfcal", description="Rolling-shutter self-calibration toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize RS observations of a scene")
    _scene_args(p)
    _motion_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("solve", help="bundle-adjust a scene file with observations")
    p.add_argument("--scene-in", type=Path, required=True)
    p.add_argument("--variant", choices=[v.value for v in Variant], default="rs")
    p.add_argument("--anchor-cam", type=int, default=0, help="camera whose phi1 rs-star freezes")
    p.add_argument("--anchor-param", choices=("phi1", "phi2", "both"), default="phi1")
    p.add_argument("--max-iters", type=_pos_int, default=200)
    p.add_argument("--huber", type=float, default=None, help="Huber threshold in pixels")
    p.add_argument("--perturb", action="store_true",
                   help="start from a seeded perturbation of the file's cameras and points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("experiment", help="Monte-Carlo comparison of the BA variants")
    _scene_args(p)
    _motion_args(p)
    p.add_argument("--trials", type=_pos_int, default=100)
    p.add_argument("--variants", nargs="+", choices=[v.value for v in Variant],
                   default=[v.value for v in Variant])
    p.add_argument("--threads", type=_pos_int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--bins", type=_pos_int, default=100)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("cms-check", help="test whether the camera motion is critical")
    _scene_args(p)
    p.add_argument("--use-rs", action="store_true", help="use the file's RS parameters as skew/aspect")
    p.add_argument("--threshold", type=float, default=RANK_THRESHOLD,
                   help="relative singular-value threshold")
    p.add_argument("--out", type=Path, default=None, help="also write the report here")
    return ap


def _scene_from_args(args):
    if args.scene_in is not None:
        sf = _load(args.scene_in)
        scene = Scene(sf.points, sf.poses, sf.K, sf.width, sf.height)
        return scene, sf
    preset = args.scene_preset or "fountain"
    return make_scene(preset, args.cameras, args.points, args.scene_seed), None


def _load(path):
    try:
        return load_scene(path)
    except (OSError, json.JSONDecodeError, SceneFormatError) as exc:
        raise CliError(EXIT_USAGE, f"cannot read scene {path}: {exc}") from exc


def _trial_config(args, n_trials=1):
    return TrialConfig(sigma_rot=args.sigma_rot, sigma_trans=args.sigma_trans,
                       pixel_noise_sigma=args.noise, n_trials=n_trials, seed=args.seed,
                       first_image_clean=args.clean_first, model=args.model)


def _config_dict(args):
    out = {}
    for k, v in vars(args).items():
        if k in ("func", "verbose"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def cmd_synth(args):
    scene, _ = _scene_from_args(args)
    cfg = _trial_config(args)
    root = np.random.SeedSequence(args.seed)
    motion_seq, noise_seq = root.spawn(2)
    motions = generate_motions(np.random.default_rng(motion_seq), cfg, scene)
    clean = clean_projections(scene, motions, cfg.model)
    obs = synthesize_observations(scene, motions, cfg, np.random.default_rng(noise_seq), clean)
    obs, kept = prune_points(obs, len(scene.points))
    extra = {"rs_motion": [{"phi": m.phi.tolist(), "v": m.v.tolist()} for m in motions],
             "point_ids": kept.tolist()}
    sf = SceneFile(scene.K, scene.width, scene.height, scene.trajectory, scene.points[kept],
                   [m.params for m in motions], obs, extra)
    args.out.mkdir(parents=True, exist_ok=True)
    save_scene(args.out / "scene.json", sf)
    write_manifest(args.out, "synth", _config_dict(args), args.seed)
    print(f"wrote {len(obs)} observations of {len(kept)} points in {scene.n_cameras} cameras to {args.out}")
    return 0


def cmd_solve(args):
    sf = _load(args.scene_in)
    if not sf.observations:
        raise CliError(EXIT_USAGE, f"{args.scene_in} has no observations")
    problem = sf.to_problem()
    if args.perturb:
        scene = Scene(sf.points, sf.poses, sf.K, sf.width, sf.height)
        rng = np.random.default_rng(args.seed)
        problem = perturbed_problem(scene, sf.observations, np.arange(len(sf.points)), rng, TrialConfig())
    opts = SolverOptions(variant=args.variant, anchor_cam=args.anchor_cam, anchor_param=args.anchor_param,
                         lm=LMOptions(max_iters=args.max_iters),
                         robust_loss=("huber", args.huber) if args.huber else None)
    rep = solve(problem, opts)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "report.json", rep.to_dict())
    est = SceneFile.from_problem(rep.to_problem(problem), sf.width, sf.height)
    save_scene(args.out / "scene.json", est)
    write_manifest(args.out, "solve", _config_dict(args), args.seed)
    print(f"{rep.variant.value}: cost {rep.initial_cost:.6g} -> {rep.final_cost:.6g} "
          f"in {rep.iterations} iterations ({rep.termination})")
    return 0


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise CliError(EXIT_USAGE, f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise CliError(EXIT_USAGE, f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    return 1


def cmd_experiment(args):
    scene, _ = _scene_from_args(args)
    cfg = _trial_config(args, args.trials)
    res = run_experiment(scene, cfg, args.variants, threads=_threads(args))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(res.to_csv(), encoding="utf-8")
    for (variant, metric), (edges, frac) in res.histograms(args.bins).items():
        lines = [f"{e!r} {f!r}" for e, f in zip(edges.tolist(), frac.tolist())]
        (out / f"hist_{variant}_{metric}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    config = _config_dict(args)
    config.pop("threads", None)
    config["trial_config"] = asdict(cfg)
    write_manifest(out, "experiment", config, args.seed)
    for v in res.variants:
        meds = "  ".join(f"{m}={res.median(v, m):.4g}" for m in ("rot_err", "trans_err", "struct_err"))
        print(f"{v:9s} {meds}")
    return 0


def cmd_cms_check(args):
    scene, sf = _scene_from_args(args)
    Rs = [P.R for P in scene.trajectory]
    ps = [P.p for P in scene.trajectory]
    params = sf.rs if (args.use_rs and sf is not None) else None
    report = cms_check_poses(Rs, ps, params, threshold=args.threshold)
    text = report.to_json(indent=1)
    print(text)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text + "\n", encoding="utf-8")
    return EXIT_CMS if report.is_cms else 0


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "experiment": cmd_experiment, "cms-check": cmd_cms_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InsufficientCoverage, InsufficientObservations) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except NumericalFailure as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, RsSelfcalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
