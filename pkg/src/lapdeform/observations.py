"""Per-frame supervision: masks, keypoints, optical flow, visibility.

Pixel convention: origin at the top-left pixel center, x rightward (columns),
y downward (rows). A grid with shape (h, w) is indexed [y, x].
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .camera import project_with_depth


class ObservationError(ValueError):
    pass


class UnsupportedFormatError(ObservationError):
    pass


class EmptyMaskError(ObservationError):
    pass


FLO_MAGIC = 202021.25
FLOW_INVALID = 1e9


@dataclass(frozen=True)
class Mask:
    grid: np.ndarray  # (h, w) bool

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=bool)
        object.__setattr__(self, "grid", g)
        if g.ndim != 2:
            raise ObservationError("mask grid must be 2-D")

    @property
    def height(self):
        return self.grid.shape[0]

    @property
    def width(self):
        return self.grid.shape[1]

    @property
    def empty(self):
        return not self.grid.any()


@dataclass(frozen=True)
class FlowField:
    vectors: np.ndarray  # (h, w, 2) float32/float64, displacement to next frame

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", v)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ObservationError("flow must be (h, w, 2)")

    @property
    def height(self):
        return self.vectors.shape[0]

    @property
    def width(self):
        return self.vectors.shape[1]

    def valid(self):
        return np.abs(self.vectors).max(axis=2) <= FLOW_INVALID


@dataclass(frozen=True)
class KeypointSet:
    names: list
    positions: np.ndarray  # (J, 2) pixel coords
    visible: np.ndarray  # (J,) bool
    regressor: np.ndarray = None  # optional (J, N) right-stochastic

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        vis = np.asarray(self.visible, dtype=bool).reshape(-1)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "visible", vis)
        if self.regressor is not None:
            reg = np.asarray(self.regressor, dtype=np.float64)
            object.__setattr__(self, "regressor", reg)
            rs = reg.sum(axis=1)
            if np.abs(rs - 1.0).max() > 1e-9:
                raise ObservationError("keypoint regressor rows must sum to 1")

    @classmethod
    def from_json(cls, obj):
        pts = obj["points"]
        reg = obj.get("regressor")
        return cls(
            [p["name"] for p in pts],
            np.array([[p["x"], p["y"]] for p in pts], dtype=float).reshape(-1, 2),
            np.array([p["visible"] for p in pts], dtype=bool),
            None if reg is None else np.asarray(reg, dtype=float),
        )

    def to_json(self):
        obj = {"points": [
            {"name": n, "x": float(x), "y": float(y), "visible": bool(v)}
            for n, (x, y), v in zip(self.names, self.positions, self.visible)
        ]}
        if self.regressor is not None:
            obj["regressor"] = self.regressor.tolist()
        return obj


@dataclass(frozen=True)
class FrameObservation:
    mask: Mask
    keypoints: KeypointSet = None
    flow_to_next: FlowField = None
    distance_field: np.ndarray = None  # derived C_fg
    boundary_points: np.ndarray = None  # derived B_fg, (B, 2) pixel centers

    @classmethod
    def build(cls, mask, keypoints=None, flow_to_next=None):
        if flow_to_next is not None and (
            flow_to_next.height != mask.height or flow_to_next.width != mask.width
        ):
            raise ObservationError("flow dimensions do not match mask")
        dist = None if mask.empty else distance_transform(mask)
        bpts = None if mask.empty else boundary_pixels(mask)
        return cls(mask, keypoints, flow_to_next, dist, bpts)


def load_mask(path):
    """Read a binary (P5) or ASCII (P2) PGM; pixels >= 128 are foreground."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise UnsupportedFormatError(f"{path}: not a P2/P5 PGM")
    magic = data[:2]

    # tokenize the header, honoring '#' comments
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ObservationError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ObservationError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: maxval must be 255")
    if width <= 0 or height <= 0:
        raise ObservationError(f"{path}: bad dimensions")

    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        raster = data[pos:pos + width * height]
        if len(raster) < width * height:
            raise ObservationError(f"{path}: truncated PGM raster")
        pix = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    else:
        try:
            values = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise ObservationError(f"{path}: malformed P2 raster") from None
        if values.size < width * height:
            raise ObservationError(f"{path}: truncated P2 raster")
        pix = values[: width * height].reshape(height, width)
    return Mask(pix >= 128)


def save_mask(mask, path):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.width} {mask.height}\n255\n".encode())
        fh.write((mask.grid.astype(np.uint8) * 255).tobytes())


def load_flo(path):
    """Read Middlebury .flo: float magic 202021.25, i32 w/h, interleaved (u,v) f32."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise ObservationError(f"{path}: truncated .flo header")
    magic = struct.unpack("<f", data[:4])[0]
    if magic != np.float32(FLO_MAGIC):
        raise ObservationError(f"{path}: bad .flo magic {magic!r}")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise ObservationError(f"{path}: bad dimensions")
    need = width * height * 2 * 4
    if len(data) - 12 < need:
        raise ObservationError(f"{path}: truncated .flo raster")
    vec = np.frombuffer(data[12:12 + need], dtype="<f4").reshape(height, width, 2)
    return FlowField(vec)


def save_flo(flow, path):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", flow.width, flow.height))
        fh.write(flow.vectors.astype("<f4").tobytes())


def distance_transform(mask):
    """Exact Euclidean distance (pixel units) to the nearest foreground pixel."""
    if mask.empty:
        raise EmptyMaskError("mask has no foreground")
    return ndimage.distance_transform_edt(~mask.grid)


def boundary_pixels(mask):
    """Foreground pixels with a 4-neighbor background or on the image border, as (x,y)."""
    if mask.empty:
        raise EmptyMaskError("mask has no foreground")
    g = mask.grid
    padded = np.pad(g, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    boundary = g & ~interior
    ys, xs = np.nonzero(boundary)
    return np.column_stack([xs, ys]).astype(np.float64)


def sample_flow(flow, p):
    """Bilinear flow sample at p = (x, y); returns (vector (2,), available)."""
    x, y = float(p[0]), float(p[1])
    h, w = flow.height, flow.width
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise ObservationError(f"sample point {p} outside image bounds")
    vec, _, avail = _bilinear_flow(flow, x, y)
    return vec, avail


def sample_flow_with_grad(flow, p):
    """As sample_flow plus d(vector)/d(p) (2,2); zero where the sample is not bilinear."""
    x, y = float(p[0]), float(p[1])
    h, w = flow.height, flow.width
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise ObservationError(f"sample point {p} outside image bounds")
    return _bilinear_flow(flow, x, y)


def _bilinear_flow(flow, x, y):
    h, w = flow.height, flow.width
    valid = flow.valid()
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    x1 = x0 if fx == 0.0 else x0 + 1
    y1 = y0 if fy == 0.0 else y0 + 1
    taps = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
    in_bounds = [(0 <= tx < w and 0 <= ty < h) for tx, ty in taps]
    tap_valid = [ib and valid[ty, tx] for (tx, ty), ib in zip(taps, in_bounds)]
    if all(tap_valid):
        v00 = flow.vectors[y0, x0]
        v10 = flow.vectors[y0, x1]
        v01 = flow.vectors[y1, x0]
        v11 = flow.vectors[y1, x1]
        top = (1 - fx) * v00 + fx * v10
        bot = (1 - fx) * v01 + fx * v11
        vec = (1 - fy) * top + fy * bot
        dvdx = (1 - fy) * (v10 - v00) + fy * (v11 - v01)
        dvdy = bot - top
        grad = np.column_stack([dvdx, dvdy])  # (2,2): grad[a, j] = d vec_a / d p_j
        return vec, grad, True
    usable = [(tx, ty) for (tx, ty), ok in zip(taps, tap_valid) if ok]
    if not usable:
        return np.zeros(2), np.zeros((2, 2)), False
    dists = [np.hypot(tx - x, ty - y) for tx, ty in usable]
    tx, ty = usable[int(np.argmin(dists))]
    return flow.vectors[ty, tx].copy(), np.zeros((2, 2)), True


def rasterize(points2d, depths, faces, width, height):
    """Depth-buffer rasterization at pixel centers (nearest depth wins).

    Returns (zbuffer (h,w), tri_index (h,w) int with -1 for empty, bary (h,w,3)).
    """
    if width <= 0 or height <= 0:
        raise ObservationError("raster resolution must be positive")
    zbuf = np.full((height, width), np.inf)
    tri = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    pts = np.asarray(points2d, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    for f_idx, (i, j, k) in enumerate(np.asarray(faces)):
        pa, pb, pc = pts[i], pts[j], pts[k]
        xmin = max(int(np.ceil(min(pa[0], pb[0], pc[0]))), 0)
        xmax = min(int(np.floor(max(pa[0], pb[0], pc[0]))), width - 1)
        ymin = max(int(np.ceil(min(pa[1], pb[1], pc[1]))), 0)
        ymax = min(int(np.floor(max(pa[1], pb[1], pc[1]))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        denom = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
        if abs(denom) < 1e-14:
            continue
        gx, gy = np.meshgrid(np.arange(xmin, xmax + 1), np.arange(ymin, ymax + 1))
        wx = gx - pa[0]
        wy = gy - pa[1]
        lb = (wx * (pc[1] - pa[1]) - wy * (pc[0] - pa[0])) / denom
        lc = (wy * (pb[0] - pa[0]) - wx * (pb[1] - pa[1])) / denom
        la = 1.0 - lb - lc
        inside = (la >= -1e-12) & (lb >= -1e-12) & (lc >= -1e-12)
        if not inside.any():
            continue
        depth = la * depths[i] + lb * depths[j] + lc * depths[k]
        sub = zbuf[ymin:ymax + 1, xmin:xmax + 1]
        better = inside & (depth < sub)
        sub[better] = depth[better]
        tri[ymin:ymax + 1, xmin:xmax + 1][better] = f_idx
        bary_sub = bary[ymin:ymax + 1, xmin:xmax + 1]
        bary_sub[better] = np.stack([la, lb, lc], axis=-1)[better]
    return zbuf, tri, bary


def vertex_visibility(mesh, cam, width, height, tau_rel=1e-3):
    """Z-buffer vertex visibility at the given raster resolution."""
    pts, depths = project_with_depth(cam, mesh.vertices)
    zbuf, _, _ = rasterize(pts, depths, mesh.faces, width, height)
    depth_range = float(depths.max() - depths.min())
    tau = tau_rel * (depth_range if depth_range > 0 else 1.0)
    px = np.rint(pts[:, 0]).astype(int)
    py = np.rint(pts[:, 1]).astype(int)
    in_bounds = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    visible = np.zeros(mesh.n_vertices, dtype=bool)
    idx = np.flatnonzero(in_bounds)
    visible[idx] = depths[idx] <= zbuf[py[idx], px[idx]] + tau
    return visible


def motion_eligibility(mesh_t, mesh_t1, cam_t, cam_t1, mask_t, tau_rel=1e-3):
    """Vertices visible in both frames whose frame-t projection is inside the mask."""
    h, w = mask_t.height, mask_t.width
    vis_t = vertex_visibility(mesh_t, cam_t, w, h, tau_rel)
    vis_t1 = vertex_visibility(mesh_t1, cam_t1, w, h, tau_rel)
    pts_t = project_with_depth(cam_t, mesh_t.vertices)[0]
    px = np.rint(pts_t[:, 0]).astype(int)
    py = np.rint(pts_t[:, 1]).astype(int)
    in_bounds = (px >= 0) & (px < w) & (py >= 0) & (py < h)
    in_mask = np.zeros(mesh_t.n_vertices, dtype=bool)
    idx = np.flatnonzero(in_bounds)
    in_mask[idx] = mask_t.grid[py[idx], px[idx]]
    return vis_t & vis_t1 & in_mask
