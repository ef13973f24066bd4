import dataclasses

import numpy as np
import pytest

from lapdeform.camera import WeakPerspectiveCamera, project
from lapdeform.losses import (
    FrameSample,
    LossError,
    LossWeights,
    boundary_loss,
    build_neighborhoods,
    keypoint_loss,
    motion_loss,
    rigidity_loss,
    total_loss,
)
from lapdeform.mesh import TriMesh
from lapdeform.observations import (
    FlowField,
    FrameObservation,
    KeypointSet,
    Mask,
)
from lapdeform.shapes import grid, icosphere, tetrahedron
from lapdeform.synthetic import make_scene

IDENTITY_CAM = WeakPerspectiveCamera(1.0, np.zeros(2), np.array([1.0, 0, 0, 0]))


def flat_triangle():
    v = np.array([[4.0, 4.0, 1.0], [26.0, 4.0, 1.0], [14.0, 26.0, 1.0]])
    return TriMesh(v, np.array([[0, 1, 2]]))


def full_mask_obs(size, flow_vec=None, flow=None):
    mask = Mask(np.ones((size, size), dtype=bool))
    if flow is None and flow_vec is not None:
        flow = FlowField(np.tile(np.asarray(flow_vec, float), (size, size, 1)))
    return FrameObservation.build(mask, flow_to_next=flow)


# ------------------------------------------------------------------ motion


def test_motion_zero_flow_static_mesh():
    mesh = flat_triangle()
    obs = full_mask_obs(32, (0.0, 0.0))
    value, g_t, g_t1, info = motion_loss(mesh, mesh, IDENTITY_CAM, IDENTITY_CAM, obs)
    assert value == 0.0
    assert info["n_eligible"] == 3
    assert np.array_equal(g_t.d_vertices, np.zeros((3, 3)))


def test_motion_matching_translation_is_zero():
    mesh = flat_triangle()
    shifted = TriMesh(mesh.vertices + [3.0, 4.0, 0.0], mesh.faces)
    obs = full_mask_obs(32, (3.0, 4.0))
    value, _, _, info = motion_loss(mesh, shifted, IDENTITY_CAM, IDENTITY_CAM, obs)
    assert value == 0.0
    assert info["n_eligible"] == 3


def test_motion_unit_flow_static_mesh():
    # predicted flow is 0, ground truth is (1,0): residual magnitude one per vertex
    mesh = flat_triangle()
    obs = full_mask_obs(32, (1.0, 0.0))
    value, g_t, g_t1, _ = motion_loss(mesh, mesh, IDENTITY_CAM, IDENTITY_CAM, obs)
    assert value == 1.0
    assert np.allclose(g_t.d_vertices[:, 0], 1.0 / 3.0)
    assert np.allclose(g_t1.d_vertices[:, 0], -1.0 / 3.0)
    assert np.array_equal(g_t.d_vertices[:, 2], np.zeros(3))


def test_motion_mask_restricts_eligibility():
    mesh = flat_triangle()
    grid_ = np.ones((32, 32), dtype=bool)
    grid_[:, 10:] = False  # only vertex 0 at x=4 stays in the mask
    obs = FrameObservation.build(
        Mask(grid_), flow_to_next=FlowField(np.tile([1.0, 0.0], (32, 32, 1)))
    )
    value, _, _, info = motion_loss(mesh, mesh, IDENTITY_CAM, IDENTITY_CAM, obs)
    assert info["n_eligible"] == 1
    assert value == 1.0


def test_motion_no_eligible_warns():
    mesh = flat_triangle()
    obs = FrameObservation.build(
        Mask(np.ones((32, 32), dtype=bool)),
        flow_to_next=FlowField(np.full((32, 32, 2), 1e10)),
    )
    value, _, _, info = motion_loss(mesh, mesh, IDENTITY_CAM, IDENTITY_CAM, obs)
    assert value == 0.0
    assert info["warning_no_eligible"]


def test_motion_requires_flow():
    mesh = flat_triangle()
    obs = FrameObservation.build(Mask(np.ones((32, 32), dtype=bool)))
    with pytest.raises(LossError):
        motion_loss(mesh, mesh, IDENTITY_CAM, IDENTITY_CAM, obs)


# ---------------------------------------------------------------- keypoints


def one_hot_keypoints(mesh, cam, indices, visible=None, shift=(0.0, 0.0)):
    reg = np.zeros((len(indices), mesh.n_vertices))
    for j, i in enumerate(indices):
        reg[j, i] = 1.0
    pts = project(cam, reg @ mesh.vertices) + np.asarray(shift)
    vis = np.ones(len(indices), bool) if visible is None else np.asarray(visible)
    return KeypointSet([f"k{j}" for j in range(len(indices))], pts, vis, reg)


def test_keypoint_self_consistent_zero(tetra):
    kps = one_hot_keypoints(tetra, IDENTITY_CAM, [0, 1, 2])
    value, gradient = keypoint_loss(tetra, IDENTITY_CAM, kps)
    assert value == 0.0
    assert np.array_equal(gradient.d_vertices, np.zeros((4, 3)))


def test_keypoint_offset_l1():
    mesh = tetrahedron()
    kps = one_hot_keypoints(mesh, IDENTITY_CAM, [0], shift=(2.0, -1.0))
    value, gradient = keypoint_loss(mesh, IDENTITY_CAM, kps)
    assert value == 3.0
    assert np.allclose(gradient.d_vertices[0, :2], [-1.0, 1.0])


def test_keypoint_invisible_ignored():
    mesh = tetrahedron()
    kps = one_hot_keypoints(mesh, IDENTITY_CAM, [0, 1], visible=[False, True],
                            shift=(5.0, 0.0))
    value, _ = keypoint_loss(mesh, IDENTITY_CAM, kps)
    assert value == 5.0


def test_keypoint_missing_regressor(tetra):
    kps = KeypointSet(["a"], np.zeros((1, 2)), np.ones(1, bool), regressor=None)
    with pytest.raises(LossError):
        keypoint_loss(tetra, IDENTITY_CAM, kps)


# ----------------------------------------------------------------- rigidity


def test_rigidity_identity_zero(ico162):
    nbrs = build_neighborhoods(ico162)
    value, gradient = rigidity_loss(ico162.vertices, ico162.vertices, nbrs)
    assert value == 0.0
    assert np.array_equal(gradient.d_vertices, np.zeros_like(ico162.vertices))


def test_rigidity_invariant_under_rigid_motion():
    mesh = icosphere(1)
    nbrs = build_neighborhoods(mesh)
    rng = np.random.default_rng(0)
    deformed = mesh.vertices + 0.1 * rng.standard_normal(mesh.vertices.shape)
    base, _ = rigidity_loss(deformed, mesh.vertices, nbrs)
    for _ in range(50):
        q = rng.standard_normal(4)
        from lapdeform.camera import quaternion_to_matrix

        r = quaternion_to_matrix(q / np.linalg.norm(q))
        moved = deformed @ r.T + rng.standard_normal(3)
        value, _ = rigidity_loss(moved, mesh.vertices, nbrs)
        assert abs(value - base) <= 1e-9 * max(1.0, base)


def test_rigidity_uniform_scale_oracle():
    mesh = icosphere(1)
    nbrs = build_neighborhoods(mesh)
    value, _ = rigidity_loss(2.0 * mesh.vertices, mesh.vertices, nbrs)
    n = mesh.n_vertices
    expected = 0.0
    for u in range(n):
        t = mesh.vertices[u] - mesh.vertices[nbrs[u]]
        expected += np.abs(np.linalg.norm(t, axis=1)).sum() / (n * len(nbrs[u]))
    assert np.isclose(value, expected, rtol=1e-12)


def test_rigidity_two_ring_size(ico162):
    nbrs = build_neighborhoods(ico162)
    one_ring = build_neighborhoods(ico162, rings=1)
    for u in (0, 42, 100):
        assert set(one_ring[u]) < set(nbrs[u])


def test_rigidity_gradient_finite_difference():
    mesh = icosphere(1)
    nbrs = build_neighborhoods(mesh)
    rng = np.random.default_rng(1)
    v = mesh.vertices + 0.15 * rng.standard_normal(mesh.vertices.shape)
    _, gradient = rigidity_loss(v, mesh.vertices, nbrs)
    h = 1e-6
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(v.shape)
        d /= np.linalg.norm(d)
        fp, _ = rigidity_loss(v + h * d, mesh.vertices, nbrs)
        fm, _ = rigidity_loss(v - h * d, mesh.vertices, nbrs)
        fd = (fp - fm) / (2 * h)
        pred = float(np.sum(gradient.d_vertices * d))
        worst = max(worst, abs(fd - pred) / max(1.0, abs(fd)))
    assert worst < 1e-5


# ----------------------------------------------------------------- boundary


def shifted_grid_mesh():
    # 3x3 vertex grid sitting on pixels 1..3 of a 5x5 image
    mesh = grid(3, 3)
    return TriMesh(mesh.vertices + [1.0, 1.0, 0.0], mesh.faces)


def center_block_obs():
    g = np.zeros((5, 5), dtype=bool)
    g[1:4, 1:4] = True
    return FrameObservation.build(Mask(g))


def test_boundary_exact_cover_zero():
    value, gradient = boundary_loss(shifted_grid_mesh(), IDENTITY_CAM, center_block_obs())
    assert value == 0.0


def test_boundary_one_pixel_outside():
    mesh = shifted_grid_mesh()
    v = np.array(mesh.vertices)
    v[0, 0] = 0.0  # corner slides one pixel into the background
    moved = TriMesh(v, mesh.faces)
    value, _ = boundary_loss(moved, IDENTITY_CAM, center_block_obs())
    # distance-field term picks up 1/9; boundary pixel (1,1) is now one pixel
    # from each of its surviving nearest vertices, adding 1/8
    assert np.isclose(value, 1.0 / 9.0 + 1.0 / 8.0, rtol=1e-12)


def test_boundary_term2_brute_force():
    rng = np.random.default_rng(2)
    obs = center_block_obs()
    mesh = shifted_grid_mesh()
    cam = WeakPerspectiveCamera(1.013, np.array([0.37, -0.21]), rng.standard_normal(4))
    value, _ = boundary_loss(mesh, cam, obs)

    p = project(cam, mesh.vertices)
    bpts = obs.boundary_points
    term2 = 0.0
    for bx, by in bpts:
        term2 += min(((bx - px) ** 2 + (by - py) ** 2) for px, py in p)
    term2 /= len(bpts)

    dist = obs.distance_field
    term1 = 0.0
    for px, py in p:
        x = min(max(px, 0.0), 4.0)
        y = min(max(py, 0.0), 4.0)
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        x1, y1 = min(x0 + 1, 4), min(y0 + 1, 4)
        fx, fy = x - x0, y - y0
        term1 += ((1 - fy) * ((1 - fx) * dist[y0, x0] + fx * dist[y0, x1])
                  + fy * ((1 - fx) * dist[y1, x0] + fx * dist[y1, x1]))
    term1 /= mesh.n_vertices
    assert np.isclose(value, term1 + term2, rtol=1e-12)


def test_boundary_empty_mask_rejected():
    obs_mask = Mask(np.zeros((4, 4), dtype=bool))
    from lapdeform.observations import EmptyMaskError, FrameObservation as FO

    obs = FO(mask=obs_mask, keypoints=None, flow_to_next=None,
             distance_field=None, boundary_points=None)
    with pytest.raises(EmptyMaskError):
        boundary_loss(shifted_grid_mesh(), IDENTITY_CAM, obs)


# --------------------------------------------------------------- total loss


def jittered_frames(scene, rng):
    frames = []
    for f in scene["init_frames"]:
        cam = f.camera
        q = cam.q + 0.03 * rng.standard_normal(4)
        cam = WeakPerspectiveCamera(cam.s * 1.017, cam.t + [0.33, -0.41], q)
        offsets = 0.02 * scene["bbox"] * rng.standard_normal(f.offsets.shape)
        frames.append(dataclasses.replace(f, camera=cam, offsets=offsets))
    return frames


def test_total_zero_weights(ico_system):
    frames = [FrameSample("f0", np.zeros((8, 3)), IDENTITY_CAM, None)]
    out = total_loss(frames, LossWeights(0.0, 0.0, 0.0, 0.0), ico_system)
    assert out.total == 0.0
    assert np.array_equal(out.frame_grads[0]["d_dh"], np.zeros((8, 3)))


def test_total_availability_flags(ico_system):
    frames = [FrameSample("f0", np.zeros((8, 3)), IDENTITY_CAM, None)]
    out = total_loss(frames, LossWeights(), ico_system)
    assert out.flags["motion_absent"]
    assert out.flags["kp_absent"]
    assert out.flags["boundary_absent"]
    assert out.values["rigid"] <= 1e-12  # solver noise on the zero-offset fixed point


def test_total_matches_term_sum():
    scene = make_scene(seed=3, subdivisions=1, image_size=64)
    rng = np.random.default_rng(4)
    frames = jittered_frames(scene, rng)
    w = LossWeights(motion=0.7, kp=1.3, rigid=0.4, boundary=0.9)
    out = total_loss(frames, w, scene["system"])
    expected = (w.motion * out.values["motion"] + w.kp * out.values["kp"]
                + w.rigid * out.values["rigid"] + w.boundary * out.values["boundary"])
    assert np.isclose(out.total, expected, rtol=1e-12)
    assert not out.flags["kp_absent"]
    assert not out.flags["boundary_absent"]


def test_total_gradients_finite_difference():
    # generic jittered cameras keep every projection away from bilinear kinks
    # and argmin ties, so central differences see a smooth function
    scene = make_scene(seed=1, subdivisions=1, image_size=64)
    rng = np.random.default_rng(5)
    frames = jittered_frames(scene, rng)
    system = scene["system"]
    weights = LossWeights(motion=1.0, kp=1.0, rigid=0.5, boundary=1.0)

    def evaluate(fr):
        return total_loss(fr, weights, system).total

    out = total_loss(frames, weights, system)
    h = 1e-6
    worst = 0.0
    for trial in range(12):
        idx = trial % len(frames)
        which = trial % 4
        if which == 0:
            d = rng.standard_normal(frames[idx].offsets.shape)
            d /= np.linalg.norm(d)
            pred = float(np.sum(out.frame_grads[idx]["d_dh"] * d))

            def bump(sgn, d=d, idx=idx):
                fr = list(frames)
                fr[idx] = dataclasses.replace(fr[idx], offsets=fr[idx].offsets + sgn * h * d)
                return fr
        elif which == 1:
            pred = out.frame_grads[idx]["d_s"]

            def bump(sgn, idx=idx):
                fr = list(frames)
                cam = fr[idx].camera
                fr[idx] = dataclasses.replace(fr[idx], camera=cam.with_params(s=cam.s + sgn * h))
                return fr
        elif which == 2:
            d = rng.standard_normal(2)
            d /= np.linalg.norm(d)
            pred = float(out.frame_grads[idx]["d_t"] @ d)

            def bump(sgn, d=d, idx=idx):
                fr = list(frames)
                cam = fr[idx].camera
                fr[idx] = dataclasses.replace(fr[idx], camera=cam.with_params(t=cam.t + sgn * h * d))
                return fr
        else:
            d = rng.standard_normal(4)
            d /= np.linalg.norm(d)
            pred = float(out.frame_grads[idx]["d_q"] @ d)

            def bump(sgn, d=d, idx=idx):
                fr = list(frames)
                cam = fr[idx].camera
                fr[idx] = dataclasses.replace(fr[idx], camera=cam.with_params(q=cam.q + sgn * h * d))
                return fr

        fd = (evaluate(bump(+1)) - evaluate(bump(-1))) / (2 * h)
        scale = max(1.0, abs(fd), abs(pred))
        worst = max(worst, abs(fd - pred) / scale)
    assert worst < 1e-4


def test_loss_weights_validation():
    with pytest.raises(LossError):
        LossWeights(motion=-1.0)
    w = LossWeights.from_json({"motion": 2.0})
    assert w.motion == 2.0 and w.rigid == 0.5
