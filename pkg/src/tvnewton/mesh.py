"""Structured triangulations of the unit square and P1 element geometry."""

from dataclasses import dataclass

import numpy as np

# levels T1..T4 used throughout the experiments
LEVELS = {1: 16, 2: 32, 3: 64, 4: 128}

_BOUNDARY_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class TriMesh:
    """A triangulation with precomputed P1 geometry.

    Attributes
    ----------
    nodes : (nn, 2) float array
    triangles : (nt, 3) int array, counter-clockwise vertex order
    areas : (nt,) float array
    grad_basis : (nt, 3, 2) float array
        Constant gradient of each local nodal basis function.
    n : int
        Subdivisions per side (0 for meshes built from raw arrays).
    h : float
    boundary_nodes : (nb,) int array
    """

    nodes: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray
    grad_basis: np.ndarray
    n: int
    h: float
    boundary_nodes: np.ndarray

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @classmethod
    def from_arrays(cls, nodes, triangles, n=0, h=None):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        areas, grads = triangle_geometry(nodes[triangles])
        if np.any(areas <= 0):
            raise ValueError("triangles must be non-degenerate and counter-clockwise")
        if h is None:
            edges = nodes[triangles[:, [1, 2, 0]]] - nodes[triangles]
            h = float(np.max(np.linalg.norm(edges, axis=2)))
        on_bdry = (
            (np.abs(nodes[:, 0]) < _BOUNDARY_TOL)
            | (np.abs(nodes[:, 0] - 1) < _BOUNDARY_TOL)
            | (np.abs(nodes[:, 1]) < _BOUNDARY_TOL)
            | (np.abs(nodes[:, 1] - 1) < _BOUNDARY_TOL)
        )
        for arr in (nodes, triangles, areas, grads):
            arr.setflags(write=False)
        bnodes = np.flatnonzero(on_bdry)
        bnodes.setflags(write=False)
        return cls(nodes, triangles, areas, grads, n, h, bnodes)


def triangle_geometry(verts):
    """Areas and P1 basis gradients for a stack of triangles.

    Parameters
    ----------
    verts : (..., 3, 2) array of vertex coordinates

    Returns
    -------
    areas : (...,) signed area (positive for counter-clockwise order)
    grads : (..., 3, 2) gradients of the three nodal basis functions
    """
    verts = np.asarray(verts, dtype=float)
    x = verts[..., 0]
    y = verts[..., 1]
    # cyclic (i, j, k): grad phi_i = (y_j - y_k, x_k - x_j) / (2 area)
    j = [1, 2, 0]
    k = [2, 0, 1]
    twice_area = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (
        x[..., 2] - x[..., 0]
    ) * (y[..., 1] - y[..., 0])
    grads = np.stack([y[..., j] - y[..., k], x[..., k] - x[..., j]], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        grads /= twice_area[..., None, None]
    return 0.5 * twice_area, grads


def build_uniform_mesh(n):
    """Uniform mesh of (0,1)^2 with n x n squares, each cut along the "/" diagonal.

    Nodes are numbered lexicographically (row-major, x fastest). Triangles are
    numbered by parent square, lower triangle first.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh.from_arrays(nodes, triangles, n=n, h=1.0 / n)


def mesh_for_level(level):
    """Mesh T_level (level 1..4 gives n = 16, 32, 64, 128)."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}, got {level!r}")
    return build_uniform_mesh(LEVELS[level])


def element_geometry(mesh, t):
    """Area and the three basis gradients of triangle ``t``."""
    return float(mesh.areas[t]), mesh.grad_basis[t].copy()


def element_gradients(mesh, u):
    """Per-triangle gradient (nt, 2) of the P1 function with nodal values ``u``."""
    return np.einsum("tk,tkd->td", np.asarray(u)[mesh.triangles], mesh.grad_basis)


def dof_counts(mesh):
    """Numbers of unknowns for (p, u, lambda) and their total."""
    npt = 2 * mesh.num_triangles
    nu = mesh.num_nodes
    return {"p": npt, "u": nu, "lam": npt, "total": 2 * npt + nu}
