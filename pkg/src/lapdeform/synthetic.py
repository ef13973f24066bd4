"""Synthetic scene harness: render masks, flow and keypoints from known
ground-truth deformations and cameras, for recovery tests and demos."""

import numpy as np

from .camera import WeakPerspectiveCamera, project, project_with_depth
from .deform import build_system
from .mesh import build_handle_map, farthest_point_sample
from .observations import (
    FlowField,
    FrameObservation,
    KeypointSet,
    Mask,
    rasterize,
)
from .shapes import icosphere


def azimuth_camera(azimuth_rad, scale, translation):
    q = np.array([np.cos(azimuth_rad / 2), 0.0, np.sin(azimuth_rad / 2), 0.0])
    return WeakPerspectiveCamera(scale, np.asarray(translation, dtype=float), q)


def render_mask(mesh, cam, width, height):
    pts, depths = project_with_depth(cam, mesh.vertices)
    _, tri, _ = rasterize(pts, depths, mesh.faces, width, height)
    return Mask(tri >= 0)


def render_flow(mesh_t, mesh_t1, cam_t, cam_t1, width, height, invalid=1e10):
    """Ground-truth flow from surface correspondences of two deformed states."""
    pts_t, depths_t = project_with_depth(cam_t, mesh_t.vertices)
    _, tri, bary = rasterize(pts_t, depths_t, mesh_t.faces, width, height)
    vec = np.full((height, width, 2), invalid)
    ys, xs = np.nonzero(tri >= 0)
    if len(ys):
        faces = mesh_t.faces[tri[ys, xs]]  # (M,3)
        weights = bary[ys, xs]  # (M,3)
        surf_t1 = np.einsum("mi,mij->mj", weights, mesh_t1.vertices[faces])
        p1 = project(cam_t1, surf_t1)
        vec[ys, xs, 0] = p1[:, 0] - xs
        vec[ys, xs, 1] = p1[:, 1] - ys
    return FlowField(vec)


def make_keypoint_regressor(n_vertices, n_keypoints, rng):
    """Right-stochastic (J,N) regressor: convex combos of 3 random vertices each."""
    reg = np.zeros((n_keypoints, n_vertices))
    for j in range(n_keypoints):
        idx = rng.choice(n_vertices, size=3, replace=False)
        w = rng.random(3) + 0.1
        reg[j, idx] = w / w.sum()
    return reg


def keypoints_from_mesh(mesh, cam, regressor):
    pts = project(cam, regressor @ mesh.vertices)
    names = [f"kp{j}" for j in range(regressor.shape[0])]
    return KeypointSet(names, pts, np.ones(len(names), dtype=bool), regressor)


def make_scene(
    seed=0,
    n_frames=3,
    subdivisions=2,
    n_handles=8,
    n_keypoints=12,
    image_size=96,
    base_azimuth_deg=0.0,
    azimuth_step_deg=15.0,
    offset_scale=0.1,
    camera_perturb_deg=10.0,
):
    """Build a ground-truth sequence plus perturbed initialization.

    Returns a dict with the deform system, per-frame ground truth (offsets,
    cameras, meshes), observations (mask, keypoints, flow), and the perturbed
    initial cameras / zero offsets used as the refinement start.
    """
    from .deform import deform
    from .losses import FrameSample

    rng = np.random.default_rng(seed)
    template = icosphere(subdivisions)
    seeds = farthest_point_sample(template, n_handles)
    handles = build_handle_map(template, seeds)
    system = build_system(template, handles)
    bbox = template.bbox_diagonal()

    scale = 0.3 * image_size
    center = np.array([image_size / 2.0, image_size / 2.0])
    regressor = make_keypoint_regressor(template.n_vertices, n_keypoints, rng)

    gt_offsets, gt_cams, gt_meshes = [], [], []
    for f in range(n_frames):
        raw = rng.standard_normal((n_handles, 3))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        off = raw / norms * (offset_scale * bbox) * rng.random((n_handles, 1))
        az = np.deg2rad(base_azimuth_deg + f * azimuth_step_deg)
        cam = azimuth_camera(az, scale, center)
        gt_offsets.append(off)
        gt_cams.append(cam)
        gt_meshes.append(deform(system, off))

    observations = []
    for f in range(n_frames):
        mask = render_mask(gt_meshes[f], gt_cams[f], image_size, image_size)
        kps = keypoints_from_mesh(gt_meshes[f], gt_cams[f], regressor)
        flow = None
        if f + 1 < n_frames:
            flow = render_flow(
                gt_meshes[f], gt_meshes[f + 1], gt_cams[f], gt_cams[f + 1],
                image_size, image_size,
            )
        observations.append(FrameObservation.build(mask, kps, flow))

    init_frames = []
    for f in range(n_frames):
        az = np.deg2rad(
            base_azimuth_deg + f * azimuth_step_deg
            + camera_perturb_deg * (1 if f % 2 == 0 else -1)
        )
        cam = azimuth_camera(az, scale, center)
        init_frames.append(FrameSample(f"frame_{f:06d}", np.zeros((n_handles, 3)), cam,
                                       observations[f]))

    return {
        "template": template,
        "handles": handles,
        "system": system,
        "gt_offsets": gt_offsets,
        "gt_cameras": gt_cams,
        "gt_meshes": gt_meshes,
        "observations": observations,
        "init_frames": init_frames,
        "regressor": regressor,
        "image_size": image_size,
        "bbox": bbox,
    }
