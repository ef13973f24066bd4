"""Command-line entry point binding the library into runnable workflows."""

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from .deform import build_system, deform, gradcheck
from .losses import FrameSample, LossWeights
from .camera import WeakPerspectiveCamera
from .mesh import (
    HandleMap,
    build_handle_map,
    farthest_point_sample,
    load_obj,
    save_obj,
)
from .observations import FrameObservation, KeypointSet, load_flo, load_mask
from .refine import RefineConfig, SequenceState, refine, refine_single_image, pca_deformations


class CliError(ValueError):
    pass


def _emit(args, obj, human):
    if getattr(args, "json", False):
        print(json.dumps(obj, sort_keys=True))
    else:
        print(human)


def cmd_init_handles(args):
    mesh = load_obj(args.mesh)
    if args.k < 1:
        raise CliError("--k must be >= 1")
    seeds = farthest_point_sample(mesh, args.k)
    handles = build_handle_map(mesh, seeds)
    handles.save(args.out)
    _emit(args, {"k": args.k, "seeds": seeds.tolist(), "out": str(args.out)},
          f"wrote {args.k} handles to {args.out}")
    return 0


def cmd_deform(args):
    mesh = load_obj(args.mesh)
    handles = HandleMap.load(args.handles)
    with open(args.offsets) as fh:
        offsets = np.asarray(json.load(fh)["offsets"], dtype=float)
    system = build_system(mesh, handles)
    out_mesh = deform(system, offsets)
    save_obj(out_mesh, args.out)
    _emit(args, {"out": str(args.out), "n_vertices": out_mesh.n_vertices},
          f"wrote deformed mesh to {args.out}")
    return 0


def cmd_gradcheck(args):
    report = gradcheck(args.seed, corrupt=args.corrupt)
    print(json.dumps(report, sort_keys=True))
    return 0 if report["pass"] else 1


def _load_project(project_dir):
    """Validate and load a refinement project; fail fast on any broken input."""
    project = Path(project_dir)
    mesh_path = project / "template.obj"
    handles_path = project / "handles.json"
    frames_dir = project / "frames"
    for p in (mesh_path, handles_path, frames_dir):
        if not p.exists():
            raise CliError(f"missing project input: {p}")
    mesh = load_obj(mesh_path)
    handles = HandleMap.load(handles_path)

    pattern = re.compile(r"frame_(\d{6})\.pgm$")
    indices = sorted(
        int(m.group(1)) for m in (pattern.match(p.name) for p in frames_dir.iterdir()) if m
    )
    if not indices:
        raise CliError(f"no frame_%06d.pgm masks in {frames_dir}")

    frames = []
    for idx in indices:
        stem = f"frame_{idx:06d}"
        mask = load_mask(frames_dir / f"{stem}.pgm")
        flow = None
        flo_path = frames_dir / f"{stem}.flo"
        if flo_path.exists():
            flow = load_flo(flo_path)
        kps = None
        kp_path = frames_dir / f"{stem}.json"
        if kp_path.exists():
            with open(kp_path) as fh:
                kps = KeypointSet.from_json(json.load(fh))
        cam_path = frames_dir / f"{stem}.camera.json"
        if cam_path.exists():
            with open(cam_path) as fh:
                cam = WeakPerspectiveCamera.from_json(json.load(fh))
        else:
            cam = WeakPerspectiveCamera(1.0, np.zeros(2), np.array([1.0, 0, 0, 0]))
        obs = FrameObservation.build(mask, kps, flow)
        frames.append(FrameSample(stem, np.zeros((handles.handle_count, 3)), cam, obs))
    return mesh, handles, frames


def cmd_refine(args):
    mesh, handles, frames = _load_project(args.project)
    if args.config:
        with open(args.config) as fh:
            cfg = RefineConfig.from_json(json.load(fh))
    else:
        cfg = RefineConfig()
    system = build_system(mesh, handles)
    seq = SequenceState(frames, system)
    if args.single_image:
        if len(frames) != 1:
            raise CliError("--single-image requires exactly one frame")
        state, report = refine_single_image(seq, cfg)
    else:
        state, report = refine(seq, cfg)

    out_dir = Path(args.out) if args.out else Path(args.project) / "output"
    out_dir.mkdir(parents=True, exist_ok=True)
    for frame in state.frames:
        out_mesh = deform(system, frame.offsets)
        save_obj(out_mesh, out_dir / f"{frame.frame_id}.obj")
        with open(out_dir / f"{frame.frame_id}.camera.json", "w") as fh:
            json.dump(frame.camera.to_json(), fh, sort_keys=True)
        with open(out_dir / f"{frame.frame_id}.offsets.json", "w") as fh:
            json.dump({"offsets": frame.offsets.tolist()}, fh, sort_keys=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_json(), fh, sort_keys=True)
    _emit(args, report.to_json(),
          f"refined {len(state.frames)} frames: total {report.initial_total:.6g} -> "
          f"{report.final_total:.6g}; outputs in {out_dir}")
    return 0


def cmd_pca(args):
    directory = Path(args.deformations)
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}")
    samples = []
    for path in sorted(directory.glob("*.json")):
        with open(path) as fh:
            samples.append(np.asarray(json.load(fh)["offsets"], dtype=float))
    if len(samples) < 2:
        raise CliError("need at least 2 deformation files")
    mean, modes, variances = pca_deformations(samples, args.modes)
    result = {
        "mean": mean.tolist(),
        "modes": [m.tolist() for m in modes],
        "variances": variances.tolist(),
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, sort_keys=True)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    mesh = load_obj(args.mesh)
    handles = HandleMap.load(args.handles)
    system = build_system(mesh, handles)
    app = create_app(system)
    uvicorn.run(app, host=args.bind, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lapdeform")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-handles", help="sample handle seeds and build the handle map")
    p.add_argument("--mesh", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_init_handles)

    p = sub.add_parser("deform", help="deform a mesh by handle offsets")
    p.add_argument("--mesh", required=True)
    p.add_argument("--handles", required=True)
    p.add_argument("--offsets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("gradcheck", help="finite-difference check of the solver backward")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("refine", help="refine per-frame handles and cameras on a project")
    p.add_argument("--project", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--single-image", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("pca", help="PCA over recovered handle deformations")
    p.add_argument("--deformations", required=True)
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("serve", help="run the HTTP deformation service")
    p.add_argument("--mesh", required=True)
    p.add_argument("--handles", required=True)
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--bind", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
