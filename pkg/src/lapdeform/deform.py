"""Laplacian deformation layer: folded linear solve plus analytic backward."""

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, cotangent_laplacian, MeshError
from .spsolve import SpdMatrix, factorize, dense_oracle_solve


@dataclass(frozen=True)
class HandleTargets:
    """Per-frame handle offsets (K,3) in mesh units."""

    offsets: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "offsets", o)
        if o.ndim != 2 or o.shape[1] != 3:
            raise ValueError("offsets must be (K,3)")
        if not np.isfinite(o).all():
            raise ValueError("offsets must be finite")


class DeformSystem:
    """Prefactored deformation state.

    Minimizes 1/2 ||L V - L T||^2 + lam/2 ||A V - Htilde||^2, whose normal
    equations (L^T L + lam A^T A) V = L^T L T + lam A^T Htilde fold into the
    constant linear form V* = C + D Htilde.
    """

    def __init__(self, template, handles, handle_weight=1.0):
        template.check_connected()
        a = handles.weights
        if a.shape[1] != template.n_vertices:
            raise MeshError("handle map width does not match vertex count")
        if (a.sum(axis=1) <= 1e-12).any():
            raise MeshError("handle map has a zero row")
        self.template = template
        self.handles = handles
        self.handle_weight = float(handle_weight)
        self.laplacian = cotangent_laplacian(template)

        lap = self.laplacian.matrix
        lam = self.handle_weight
        w = (lap.T @ lap).toarray() + lam * (a.T @ a)
        self.normal_matrix = SpdMatrix(w)
        self.factorization = factorize(self.normal_matrix)
        self.rhs_const = np.asarray(lap.T @ (lap @ template.vertices))
        self.fold_offset = self.factorization.solve(self.rhs_const)  # C
        self.fold_map = lam * self.factorization.solve(np.ascontiguousarray(a.T))  # D
        self.template_handles = a @ template.vertices  # A T

    @property
    def handle_count(self):
        return self.handles.handle_count

    def targets_to_htilde(self, targets):
        if isinstance(targets, HandleTargets):
            offsets = targets.offsets
        else:
            offsets = np.asarray(targets, dtype=np.float64)
        if offsets.shape != (self.handle_count, 3):
            raise ValueError(f"offsets must be ({self.handle_count},3)")
        return self.template_handles + offsets

    def deform_vertices(self, targets):
        htilde = self.targets_to_htilde(targets)
        return self.fold_offset + self.fold_map @ htilde


def build_system(template, handles, handle_weight=1.0):
    return DeformSystem(template, handles, handle_weight=handle_weight)


def deform(system, targets):
    return TriMesh(system.deform_vertices(targets), np.array(system.template.faces))


def solver_backward(system, v_star, grad_v, targets=None):
    """Analytic gradients through the deformation solve.

    Returns (grad_htilde (K,3), grad_a (K,N)). Uses the forward factorization:
    grad_b = W^-1 grad_v, grad_htilde = A grad_b, grad_W = -grad_b V*^T, and
    grad_a = Htilde grad_b^T + A (grad_W + grad_W^T).
    """
    v_star = np.asarray(v_star, dtype=np.float64)
    grad_v = np.asarray(grad_v, dtype=np.float64)
    n = system.template.n_vertices
    if v_star.shape != (n, 3) or grad_v.shape != (n, 3):
        raise ValueError("v_star and grad_v must be (N,3)")
    if targets is not None:
        htilde = system.targets_to_htilde(targets)
    else:
        # D has full column rank, so the producing Htilde is recoverable
        htilde, *_ = np.linalg.lstsq(system.fold_map, v_star - system.fold_offset, rcond=None)
    a = system.handles.weights
    lam = system.handle_weight
    grad_b = system.factorization.solve(grad_v)
    grad_htilde = lam * (a @ grad_b)
    grad_w = -grad_b @ v_star.T
    grad_a = lam * (htilde @ grad_b.T) + lam * (a @ (grad_w + grad_w.T))
    return grad_htilde, grad_a


def _grid_mesh(rows, cols, rng):
    """Small triangulated grid with seeded height jitter, for gradient checks."""
    from .shapes import grid

    return grid(rows, cols, z=0.3 * rng.standard_normal(rows * cols))


def _dense_solve_full(template, lap, a, htilde, lam):
    w = lap.T @ lap + lam * (a.T @ a)
    b = lap.T @ (lap @ template.vertices) + lam * (a.T @ htilde)
    return dense_oracle_solve(w, b)


def gradcheck(seed, step=1e-5, corrupt=False):
    """Finite-difference check of solver_backward on a random small system.

    Probes g(V*) = sum c_ij V*_ij. The A-direction differences re-solve the
    full system per perturbed entry without re-normalizing rows.
    """
    from .mesh import farthest_point_sample, build_handle_map

    rng = np.random.default_rng(seed)
    mesh = _grid_mesh(3, 4, rng)  # N = 12
    k = 3
    seeds = farthest_point_sample(mesh, k)
    handles = build_handle_map(mesh, seeds)
    system = build_system(mesh, handles)

    offsets = 0.2 * rng.standard_normal((k, 3))
    htilde = system.targets_to_htilde(offsets)
    coeffs = rng.standard_normal((mesh.n_vertices, 3))

    v_star = system.deform_vertices(offsets)
    grad_htilde, grad_a = solver_backward(system, v_star, coeffs, targets=offsets)
    if corrupt:
        grad_htilde = grad_htilde * 1.01
        grad_a = grad_a + 0.01

    lap = system.laplacian.toarray()
    a0 = handles.weights

    def probe(a_mat, ht):
        return float(np.sum(coeffs * _dense_solve_full(mesh, lap, a_mat, ht, system.handle_weight)))

    fd_h = np.zeros_like(grad_htilde)
    for i in range(k):
        for j in range(3):
            hp, hm = htilde.copy(), htilde.copy()
            hp[i, j] += step
            hm[i, j] -= step
            fd_h[i, j] = (probe(a0, hp) - probe(a0, hm)) / (2 * step)

    fd_a = np.zeros_like(grad_a)
    for i in range(k):
        for j in range(mesh.n_vertices):
            ap, am = a0.copy(), a0.copy()
            ap[i, j] += step
            am[i, j] -= step
            fd_a[i, j] = (probe(ap, htilde) - probe(am, htilde)) / (2 * step)

    def max_rel(analytic, fd):
        denom = np.maximum(np.abs(fd), 1e-6)
        return float(np.max(np.abs(analytic - fd) / denom))

    err_h = max_rel(grad_htilde, fd_h)
    err_a = max_rel(grad_a, fd_a)
    return {
        "max_rel_err_htilde": err_h,
        "max_rel_err_a": err_a,
        "pass": bool(err_h < 1e-5 and err_a < 1e-5),
    }
