"""Refinement losses: motion reprojection, keypoint, rigidity, Chamfer boundary.

Every loss returns its value together with analytic gradients; gradients with
respect to handle offsets are chained through the constant fold map D, camera
gradients through the projection Jacobians.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import project, backprop_projection
from .observations import (
    EmptyMaskError,
    ObservationError,
    motion_eligibility,
    sample_flow_with_grad,
)


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    motion: float = 1.0
    kp: float = 1.0
    rigid: float = 0.5
    boundary: float = 1.0

    def __post_init__(self):
        for name in ("motion", "kp", "rigid", "boundary"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise LossError(f"weight {name} must be finite and >= 0")

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: float(obj.get(k, getattr(cls, k))) for k in ("motion", "kp", "rigid", "boundary")})

    def to_json(self):
        return {"motion": self.motion, "kp": self.kp, "rigid": self.rigid, "boundary": self.boundary}


class ParamGrad:
    """Gradient block for one frame: vertices plus camera parameters."""

    def __init__(self, n_vertices):
        self.d_vertices = np.zeros((n_vertices, 3))
        self.d_s = 0.0
        self.d_t = np.zeros(2)
        self.d_q = np.zeros(4)

    def add_scaled(self, other, scale):
        self.d_vertices += scale * other.d_vertices
        self.d_s += scale * other.d_s
        self.d_t += scale * other.d_t
        self.d_q += scale * other.d_q
        return self

    def add_projection(self, cam, points, d_points2d):
        d_x, d_s, d_t, d_q = backprop_projection(cam, points, d_points2d)
        self.d_vertices += d_x
        self.d_s += d_s
        self.d_t += d_t
        self.d_q += d_q


@dataclass
class FrameSample:
    """One frame's refinable state: handle offsets, camera, observation."""

    frame_id: str
    offsets: np.ndarray  # (K,3)
    camera: object
    observation: object = None


@dataclass
class LossBreakdown:
    values: dict
    total: float
    frame_grads: list  # per frame: {"d_dh": (K,3), "d_s": float, "d_t": (2,), "d_q": (4,)}
    flags: dict = field(default_factory=dict)


def _sign(x):
    return np.sign(x)


def motion_loss(mesh_t, mesh_t1, cam_t, cam_t1, obs_t, tau_rel=1e-3):
    """l1 flow discrepancy averaged over eligible vertices.

    Returns (value, grad_t, grad_t1, info). Ground-truth flow is sampled
    bilinearly at the frame-t projections; the sampling stencil contributes
    to the frame-t gradient.
    """
    if obs_t is None or obs_t.flow_to_next is None:
        raise LossError("frame observation has no forward flow")
    n = mesh_t.n_vertices
    grad_t, grad_t1 = ParamGrad(n), ParamGrad(n)
    gamma = motion_eligibility(mesh_t, mesh_t1, cam_t, cam_t1, obs_t.mask, tau_rel)

    p_t = project(cam_t, mesh_t.vertices)
    p_t1 = project(cam_t1, mesh_t1.vertices)
    flow = obs_t.flow_to_next
    w, h = flow.width, flow.height
    eligible = np.flatnonzero(gamma)
    # projections must be strictly samplable; rounding into the mask can still
    # leave the continuous position outside the sampling domain
    samplable = (
        (p_t[eligible, 0] >= 0) & (p_t[eligible, 0] <= w - 1)
        & (p_t[eligible, 1] >= 0) & (p_t[eligible, 1] <= h - 1)
    )
    eligible = eligible[samplable]

    d_pt = np.zeros((n, 2))
    d_pt1 = np.zeros((n, 2))
    value = 0.0
    count = 0
    for i in eligible:
        u, grad_u, avail = sample_flow_with_grad(flow, p_t[i])
        if not avail:
            continue
        utilde = p_t1[i] - p_t[i]
        r = u - utilde
        value += float(np.abs(r).sum())
        s = _sign(r)
        # d r / d p_t = grad_u + I, d r / d p_t1 = -I
        d_pt[i] += s @ (grad_u + np.eye(2))
        d_pt1[i] += -s
        count += 1
    info = {"n_eligible": count, "warning_no_eligible": count == 0}
    if count == 0:
        return 0.0, grad_t, grad_t1, info
    value /= count
    d_pt /= count
    d_pt1 /= count
    grad_t.add_projection(cam_t, mesh_t.vertices, d_pt)
    grad_t1.add_projection(cam_t1, mesh_t1.vertices, d_pt1)
    return value, grad_t, grad_t1, info


def keypoint_loss(mesh, cam, kps):
    """Sum of l1 reprojection errors of regressed keypoints (visible only)."""
    if kps is None or kps.regressor is None:
        raise LossError("keypoint set has no regressor")
    reg = kps.regressor
    if reg.shape[1] != mesh.n_vertices:
        raise LossError("regressor width does not match vertex count")
    grad = ParamGrad(mesh.n_vertices)
    pts3d = reg @ mesh.vertices  # (J,3)
    p = project(cam, pts3d)
    vis = kps.visible
    if not vis.any():
        return 0.0, grad
    res = kps.positions - p
    res[~vis] = 0.0
    value = float(np.abs(res[vis]).sum())
    d_p = np.zeros_like(p)
    d_p[vis] = -_sign(res[vis])
    d_x3, d_s, d_t, d_q = backprop_projection(cam, pts3d, d_p)
    grad.d_vertices += reg.T @ d_x3
    grad.d_s += d_s
    grad.d_t += d_t
    grad.d_q += d_q
    return value, grad


def build_neighborhoods(mesh, rings=2):
    """Per-vertex extended (ring-hop) neighborhoods on the template graph."""
    n = mesh.n_vertices
    adj = [set() for _ in range(n)]
    for i, j, k in mesh.faces:
        adj[i].update((j, k))
        adj[j].update((i, k))
        adj[k].update((i, j))
    result = []
    for v in range(n):
        frontier = {v}
        seen = {v}
        for _ in range(rings):
            frontier = {u for f in frontier for u in adj[f]} - seen
            seen |= frontier
        seen.discard(v)
        result.append(np.array(sorted(seen), dtype=np.int64))
    return result


def rigidity_loss(vertices, template_vertices, neighborhoods):
    """Mean absolute change of pairwise distances over extended neighborhoods."""
    vertices = np.asarray(vertices, dtype=np.float64)
    n = vertices.shape[0]
    grad = ParamGrad(n)
    value = 0.0
    for u in range(n):
        nbrs = neighborhoods[u]
        if len(nbrs) == 0:
            continue
        diff = vertices[u] - vertices[nbrs]  # (m,3)
        dist = np.linalg.norm(diff, axis=1)
        tdiff = template_vertices[u] - template_vertices[nbrs]
        tdist = np.linalg.norm(tdiff, axis=1)
        delta = dist - tdist
        w = 1.0 / (n * len(nbrs))
        value += w * float(np.abs(delta).sum())
        safe = dist > 1e-12
        coef = np.zeros(len(nbrs))
        coef[safe] = w * _sign(delta[safe]) / dist[safe]
        contrib = coef[:, None] * diff
        grad.d_vertices[u] += contrib.sum(axis=0)
        np.add.at(grad.d_vertices, nbrs, -contrib)
    return value, grad


def _sample_grid(grid, x, y):
    """Bilinear sample with border clamping; returns (value, d/dx, d/dy)."""
    h, w = grid.shape
    xc = min(max(x, 0.0), float(w - 1))
    yc = min(max(y, 0.0), float(h - 1))
    x0, y0 = int(np.floor(xc)), int(np.floor(yc))
    fx, fy = xc - x0, yc - y0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    v00, v10 = grid[y0, x0], grid[y0, x1]
    v01, v11 = grid[y1, x0], grid[y1, x1]
    top = (1 - fx) * v00 + fx * v10
    bot = (1 - fx) * v01 + fx * v11
    val = (1 - fy) * top + fy * bot
    dx = ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) if xc == x else 0.0
    dy = (bot - top) if yc == y else 0.0
    return float(val), float(dx), float(dy)


def boundary_loss(mesh, cam, obs):
    """Chamfer silhouette loss: distance-field coverage + boundary under-coverage.

    term1 = mean_u C_fg(pi(u)) (bilinear, border-clamped); term2 = mean over
    boundary points of the squared distance to the nearest projected vertex
    (gradient to the argmin vertex, ties to the lowest index).
    """
    if obs is None or obs.mask is None or obs.mask.empty:
        raise EmptyMaskError("boundary loss needs a non-empty mask")
    dist = obs.distance_field
    bpts = obs.boundary_points
    n = mesh.n_vertices
    grad = ParamGrad(n)
    p = project(cam, mesh.vertices)

    d_p = np.zeros_like(p)
    term1 = 0.0
    for i in range(n):
        val, dx, dy = _sample_grid(dist, p[i, 0], p[i, 1])
        term1 += val
        d_p[i, 0] += dx / n
        d_p[i, 1] += dy / n
    term1 /= n

    # nearest projected vertex per boundary point; ties to lowest vertex index
    d2 = np.sum((bpts[:, None, :] - p[None, :, :]) ** 2, axis=2)  # (B,N)
    nearest = np.argmin(d2, axis=1)
    b = bpts.shape[0]
    term2 = float(d2[np.arange(b), nearest].sum()) / b
    np.add.at(d_p, nearest, 2.0 * (p[nearest] - bpts) / b)

    grad.add_projection(cam, mesh.vertices, d_p)
    return term1 + term2, grad


def total_loss(frames, weights, system, neighborhoods=None, tau_rel=1e-3):
    """Weighted sum of available loss terms across a frame sequence."""
    from .mesh import TriMesh

    if neighborhoods is None and weights.rigid > 0:
        neighborhoods = build_neighborhoods(system.template)
    k = system.handle_count
    meshes = [
        TriMesh(system.deform_vertices(f.offsets), system.template.faces) for f in frames
    ]
    n = system.template.n_vertices
    grads = [ParamGrad(n) for _ in frames]
    values = {"motion": 0.0, "kp": 0.0, "rigid": 0.0, "boundary": 0.0}
    flags = {"motion_absent": True, "kp_absent": True, "boundary_absent": True,
             "motion_warnings": 0}

    for idx, (frame, mesh) in enumerate(zip(frames, meshes)):
        obs = frame.observation
        if weights.kp > 0 and obs is not None and obs.keypoints is not None \
                and obs.keypoints.regressor is not None:
            v, g = keypoint_loss(mesh, frame.camera, obs.keypoints)
            values["kp"] += v
            grads[idx].add_scaled(g, weights.kp)
            flags["kp_absent"] = False
        if weights.rigid > 0:
            v, g = rigidity_loss(mesh.vertices, system.template.vertices, neighborhoods)
            values["rigid"] += v
            grads[idx].add_scaled(g, weights.rigid)
        if weights.boundary > 0 and obs is not None and obs.mask is not None \
                and not obs.mask.empty:
            v, g = boundary_loss(mesh, frame.camera, obs)
            values["boundary"] += v
            grads[idx].add_scaled(g, weights.boundary)
            flags["boundary_absent"] = False

    if weights.motion > 0:
        for idx in range(len(frames) - 1):
            obs = frames[idx].observation
            if obs is None or obs.flow_to_next is None:
                continue
            v, g_t, g_t1, info = motion_loss(
                meshes[idx], meshes[idx + 1],
                frames[idx].camera, frames[idx + 1].camera, obs, tau_rel,
            )
            values["motion"] += v
            grads[idx].add_scaled(g_t, weights.motion)
            grads[idx + 1].add_scaled(g_t1, weights.motion)
            flags["motion_absent"] = False
            if info["warning_no_eligible"]:
                flags["motion_warnings"] += 1

    total = (
        weights.motion * values["motion"] + weights.kp * values["kp"]
        + weights.rigid * values["rigid"] + weights.boundary * values["boundary"]
    )
    frame_grads = []
    for g in grads:
        frame_grads.append({
            "d_dh": system.fold_map.T @ g.d_vertices,
            "d_s": g.d_s,
            "d_t": g.d_t,
            "d_q": g.d_q,
        })
    return LossBreakdown(values, total, frame_grads, flags)
