"""Weak-perspective cameras with quaternion rotation and analytic Jacobians."""

import json
from dataclasses import dataclass, field

import numpy as np


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    """scale s > 0, image translation t (2,), rotation quaternion q = (w,x,y,z)."""

    s: float
    t: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).reshape(2)
        q = np.asarray(self.q, dtype=np.float64).reshape(4)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        if self.s <= 0:
            raise CameraError("scale must be positive")
        if np.linalg.norm(q) <= 1e-9:
            raise CameraError("quaternion norm too small")

    def rotation(self):
        return quaternion_to_matrix(self.q / np.linalg.norm(self.q))

    def with_params(self, s=None, t=None, q=None):
        return WeakPerspectiveCamera(
            self.s if s is None else s,
            self.t if t is None else t,
            self.q if q is None else q,
        )

    def to_json(self):
        return {"s": self.s, "t": self.t.tolist(), "q": self.q.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["s"], np.asarray(obj["t"]), np.asarray(obj["q"]))


def quaternion_to_matrix(q):
    """Rotation matrix of a unit quaternion (w,x,y,z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _dmatrix_dquat(q):
    """d(R)/d(q_i) for a unit quaternion; stacked (4,3,3)."""
    w, x, y, z = q
    dw = 2 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)
    dx = 2 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]], dtype=float)
    dy = 2 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]], dtype=float)
    dz = 2 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]], dtype=float)
    return np.stack([dw, dx, dy, dz])


def project(cam, points):
    """p = s * (R x)_xy + t per point; points (M,3) -> (M,2)."""
    points = np.asarray(points, dtype=np.float64)
    rotated = points @ cam.rotation().T
    return cam.s * rotated[:, :2] + cam.t


def project_with_depth(cam, points):
    """As project, plus the rotated z (camera-frame depth, smaller = nearer)."""
    points = np.asarray(points, dtype=np.float64)
    rotated = points @ cam.rotation().T
    return cam.s * rotated[:, :2] + cam.t, rotated[:, 2]


def projection_jacobians(cam, points):
    """Analytic derivatives of project: (dp_ds (M,2), dp_dt (2,2), dp_dq (M,2,4), dp_dx (M,2,3))."""
    points = np.asarray(points, dtype=np.float64)
    m = points.shape[0]
    qn = np.linalg.norm(cam.q)
    qhat = cam.q / qn
    r = quaternion_to_matrix(qhat)
    rotated = points @ r.T

    dp_ds = rotated[:, :2].copy()
    dp_dt = np.eye(2)
    dp_dx = np.broadcast_to(cam.s * r[:2, :], (m, 2, 3)).copy()

    dr = _dmatrix_dquat(qhat)  # (4,3,3) wrt unit quaternion
    # chain through normalization: dqhat/dq = (I - qhat qhat^T) / |q|
    dqhat_dq = (np.eye(4) - np.outer(qhat, qhat)) / qn
    # dp/dqhat_k = s * (dR_k x)_xy
    dp_dqhat = cam.s * np.einsum("kab,mb->mka", dr[:, :2, :], points)  # (M,4,2)
    dp_dq = np.einsum("mka,kj->maj", dp_dqhat, dqhat_dq)  # (M,2,4)
    return dp_ds, dp_dt, dp_dq, dp_dx


def backprop_projection(cam, points, d_points2d):
    """Chain a gradient w.r.t. projected points back to (x, s, t, q)."""
    dp_ds, _, dp_dq, dp_dx = projection_jacobians(cam, points)
    d_points2d = np.asarray(d_points2d, dtype=np.float64)
    d_x = np.einsum("ma,maj->mj", d_points2d, dp_dx)
    d_s = float(np.sum(d_points2d * dp_ds))
    d_t = d_points2d.sum(axis=0)
    d_q = np.einsum("ma,maj->j", d_points2d, dp_dq)
    return d_x, d_s, d_t, d_q


@dataclass
class CameraHypothesis:
    camera: WeakPerspectiveCamera
    last_loss: float = np.inf


@dataclass
class CameraMultiplex:
    """Per-sample camera hypotheses with softmin probabilities; handle offsets shared."""

    hypotheses: list
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.shape[0] != len(self.hypotheses):
            raise CameraError("probability count mismatch")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise CameraError("probabilities must form a simplex")
        self.probabilities = p


def init_multiplex(n_c, template_depth_scale=1.0):
    """n_c hypotheses, azimuth 2*pi*i/n_c about the vertical (y) axis, zero elevation."""
    if n_c < 1:
        raise CameraError("n_c must be >= 1")
    hyps = []
    for i in range(n_c):
        az = 2.0 * np.pi * i / n_c
        q = np.array([np.cos(az / 2), 0.0, np.sin(az / 2), 0.0])
        cam = WeakPerspectiveCamera(template_depth_scale, np.zeros(2), q)
        hyps.append(CameraHypothesis(cam))
    return CameraMultiplex(hyps, np.full(n_c, 1.0 / n_c))


def multiplex_probabilities(losses):
    """Softmin p_i = exp(-L_i) / sum_j exp(-L_j), with shift for stability."""
    losses = np.asarray(losses, dtype=np.float64)
    if not np.isfinite(losses).all():
        raise CameraError("losses must be finite")
    shifted = -(losses - losses.min())
    w = np.exp(shifted)
    return w / w.sum()
