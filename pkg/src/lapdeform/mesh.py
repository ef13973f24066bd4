"""Triangle meshes, cotangent Laplacians, geodesics and handle maps."""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra


class MeshError(ValueError):
    pass


class DisconnectedMeshError(MeshError):
    pass


class DegenerateFaceError(MeshError):
    pass


COT_CLAMP = 1e4


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangle mesh: vertices (N,3) float64, faces (N_f,3) int."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise MeshError("vertices must be (N,3) with N >= 3")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise MeshError("faces must be (N_f,3) with N_f >= 1")
        n = v.shape[0]
        if f.min() < 0 or f.max() >= n:
            raise MeshError("face index out of range")
        if (f[:, 0] == f[:, 1]).any() or (f[:, 1] == f[:, 2]).any() or (f[:, 0] == f[:, 2]).any():
            raise MeshError("face repeats a vertex index")
        v.setflags(write=False)
        f.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def edge_graph(self):
        """Sparse symmetric matrix of Euclidean edge lengths."""
        f = self.faces
        i = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        j = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        w = np.linalg.norm(self.vertices[i] - self.vertices[j], axis=1)
        n = self.n_vertices
        g = sp.coo_matrix((w, (i, j)), shape=(n, n)).tocsr()
        g = g.maximum(g.T)
        return g

    def check_connected(self):
        n_comp, _ = connected_components(self.edge_graph(), directed=False)
        if n_comp != 1:
            raise DisconnectedMeshError(f"mesh has {n_comp} connected components")


@dataclass(frozen=True)
class SparseLaplacian:
    """Symmetric cotangent Laplacian with zero row sums, stored as CSR."""

    matrix: sp.csr_matrix

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def triplets(self):
        """Nonzero entries as (row, col, value), sorted by (row, col)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return list(zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()))

    def toarray(self):
        return self.matrix.toarray()


@dataclass(frozen=True)
class HandleMap:
    """K handles as convex combinations of vertices: right-stochastic (K,N) weights."""

    seed_vertices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.seed_vertices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "seed_vertices", s)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != s.shape[0]:
            raise MeshError("weights must be (K,N) matching seed count")
        if (w < 0).any():
            raise MeshError("handle weights must be nonnegative")
        rs = w.sum(axis=1)
        if np.abs(rs - 1.0).max() > 1e-9:
            raise MeshError("handle weight rows must sum to 1")

    @property
    def handle_count(self):
        return self.weights.shape[0]

    def handle_positions(self, vertices):
        return self.weights @ vertices

    def to_json(self):
        return {
            "k": int(self.handle_count),
            "seeds": self.seed_vertices.tolist(),
            "rows": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["seeds"]), np.asarray(obj["rows"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def load_obj(path):
    """Read a triangles-only OBJ (v/f records and # comments; 1-based indices)."""
    vertices, faces = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise MeshError(f"{path}:{lineno}: malformed vertex record")
                try:
                    vertices.append([float(x) for x in parts[1:]])
                except ValueError:
                    raise MeshError(f"{path}:{lineno}: malformed vertex record") from None
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshError(f"{path}:{lineno}: only triangle faces supported")
                try:
                    idx = [int(x) for x in parts[1:]]
                except ValueError:
                    raise MeshError(f"{path}:{lineno}: malformed face record") from None
                faces.append([i - 1 for i in idx])
            else:
                raise MeshError(f"{path}:{lineno}: unsupported record '{parts[0]}'")
    if not vertices or not faces:
        raise MeshError(f"{path}: no vertices or faces")
    faces = np.asarray(faces)
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshError(f"{path}: face index out of range")
    mesh = TriMesh(np.asarray(vertices), faces)
    mesh.check_connected()
    return mesh


def save_obj(mesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def cotangent_laplacian(mesh):
    """Symmetric cotangent Laplacian: L_ij = -w_ij off-diagonal, zero row sums.

    w_ij accumulates 1/2 cot(opposite angle) over the faces adjacent to edge
    (i,j); boundary edges get a single cotangent.
    """
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    area2 = np.linalg.norm(cross, axis=1)  # twice the face area
    gate = 1e-12 * mesh.bbox_diagonal() ** 2
    if (area2 / 2.0 < gate).any():
        raise DegenerateFaceError("face area below degeneracy gate")

    rows, cols, vals = [], [], []
    # angle at corner c is opposite edge (a, b)
    for c, a, b in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        u = v[f[:, a]] - v[f[:, c]]
        w = v[f[:, b]] - v[f[:, c]]
        cot = np.einsum("ij,ij->i", u, w) / area2
        cot = np.clip(cot, -COT_CLAMP, COT_CLAMP)
        half = 0.5 * cot
        rows.extend([f[:, a], f[:, b]])
        cols.extend([f[:, b], f[:, a]])
        vals.extend([half, half])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    w_mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    w_mat.sum_duplicates()
    lap = sp.diags(np.asarray(w_mat.sum(axis=1)).ravel()) - w_mat
    lap = lap.tocsr()
    lap.sort_indices()
    return SparseLaplacian(lap)


def geodesic_distances(mesh, source):
    """Edge-graph Dijkstra distances from one source vertex."""
    n = mesh.n_vertices
    if not 0 <= source < n:
        raise MeshError(f"source {source} out of range")
    d = dijkstra(mesh.edge_graph(), directed=False, indices=source)
    return np.asarray(d, dtype=np.float64)


def farthest_point_sample(mesh, k):
    """Greedy geodesic FPS; deterministic (centroid-farthest start, low-index ties)."""
    n = mesh.n_vertices
    if not 1 <= k <= n:
        raise MeshError(f"k={k} out of range [1, {n}]")
    centroid = mesh.vertices.mean(axis=0)
    eucl = np.linalg.norm(mesh.vertices - centroid, axis=1)
    first = int(np.flatnonzero(eucl == eucl.max())[0])
    seeds = [first]
    graph = mesh.edge_graph()
    min_dist = dijkstra(graph, directed=False, indices=first)
    for _ in range(1, k):
        nxt = int(np.flatnonzero(min_dist == min_dist.max())[0])
        seeds.append(nxt)
        min_dist = np.minimum(min_dist, dijkstra(graph, directed=False, indices=nxt))
    return np.asarray(seeds, dtype=np.int64)


def build_handle_map(mesh, seeds, eps=1e-9):
    """Softmax of inverse geodesic distance per seed; rows sum to 1.

    Logits 1/max(d, eps) with row-max subtraction, so the seed itself (d = 0)
    collapses to a one-hot row in the limit.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if len(np.unique(seeds)) != len(seeds):
        raise MeshError("duplicate seed vertices")
    if seeds.min() < 0 or seeds.max() >= mesh.n_vertices:
        raise MeshError("seed vertex out of range")
    rows = []
    for s in seeds:
        d = geodesic_distances(mesh, int(s))
        logits = 1.0 / np.maximum(d, eps)
        logits -= logits.max()
        w = np.exp(logits)
        rows.append(w / w.sum())
    return HandleMap(seeds, np.vstack(rows))
