"""Procedural fixture meshes: tetrahedron, icospheres, small grids."""

import numpy as np

from .mesh import TriMesh


def tetrahedron(scale=1.0):
    """Regular tetrahedron inscribed in a sphere of the given radius."""
    v = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]) / np.sqrt(3.0) * scale
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f)


def icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v[0])
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return TriMesh(v, f)


def icosphere(subdivisions=1, radius=1.0):
    """Icosahedron subdivided n times, projected to a sphere.

    Vertex counts: 12, 42, 162, 642 for 0..3 subdivisions.
    """
    mesh = icosahedron()
    v = [tuple(p) for p in mesh.vertices]
    faces = mesh.faces.tolist()
    for _ in range(subdivisions):
        index = {p: i for i, p in enumerate(v)}
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key in cache:
                return cache[key]
            p = np.asarray(v[a]) + np.asarray(v[b])
            p = tuple(p / np.linalg.norm(p))
            if p not in index:
                index[p] = len(v)
                v.append(p)
            cache[key] = index[p]
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = new_faces
    vertices = np.asarray(v) * radius
    return TriMesh(vertices, np.asarray(faces))


def unit_square():
    """Unit square split by the (0,0)-(1,1) diagonal; two faces, four vertices."""
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(v, f)


def grid(rows, cols, z=None):
    """Triangulated planar grid; z is an optional (rows*cols,) height array."""
    xs, ys = np.meshgrid(np.arange(cols, dtype=float), np.arange(rows, dtype=float))
    height = np.zeros(rows * cols) if z is None else np.asarray(z, dtype=float)
    vertices = np.column_stack([xs.ravel(), ys.ravel(), height])
    faces = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            i = r * cols + c
            faces.append([i, i + 1, i + cols])
            faces.append([i + 1, i + cols + 1, i + cols])
    return TriMesh(vertices, np.asarray(faces))
