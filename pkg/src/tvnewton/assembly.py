"""Discrete operators and residuals of the P0-P1-P0 primal-dual system.

Unknowns are laid out as one flat vector ``[p, u, lam]``: ``p`` and ``lam``
are per-triangle 2-vectors stored triangle-major (``p[2*t + c]``), ``u`` is
the vector of nodal values. Residual functionals ("dual vectors") use the same
layout.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .local_ops import _check_beta, beta_norm, h_hat, h_matrix, h_matrix_inverse
from .mesh import element_gradients

NEWTON = "newton"
PICARD = "picard"

# 6-point degree-4 rule on the reference triangle (barycentric coords, weights sum to 1)
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
QUAD_BARY = np.array(
    [
        [_A1, _A1, 1 - 2 * _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [1 - 2 * _A1, _A1, _A1],
        [_A2, _A2, 1 - 2 * _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [1 - 2 * _A2, _A2, _A2],
    ]
)
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


@dataclass
class State:
    """Coefficients of (p_h, u_h, lambda_h)."""

    p: np.ndarray
    u: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, mesh):
        nt, nn = mesh.num_triangles, mesh.num_nodes
        return cls(np.zeros((nt, 2)), np.zeros(nn), np.zeros((nt, 2)))

    @classmethod
    def from_flat(cls, mesh, x):
        nt, nn = mesh.num_triangles, mesh.num_nodes
        x = np.asarray(x, dtype=float)
        if x.shape != (4 * nt + nn,):
            raise ValueError(f"expected vector of length {4 * nt + nn}, got {x.shape}")
        return cls(
            x[: 2 * nt].reshape(nt, 2).copy(),
            x[2 * nt : 2 * nt + nn].copy(),
            x[2 * nt + nn :].reshape(nt, 2).copy(),
        )

    def flat(self):
        return np.concatenate([self.p.ravel(), self.u, self.lam.ravel()])

    def copy(self):
        return State(self.p.copy(), self.u.copy(), self.lam.copy())

    def axpy(self, theta, other):
        """Return ``self + theta * other``."""
        return State(
            self.p + theta * other.p, self.u + theta * other.u, self.lam + theta * other.lam
        )

    def check(self, mesh):
        nt, nn = mesh.num_triangles, mesh.num_nodes
        if self.p.shape != (nt, 2) or self.lam.shape != (nt, 2) or self.u.shape != (nn,):
            raise ValueError("state dimensions do not match mesh")


def split_dual(mesh, b):
    """View a dual vector as its (R_p, R_u, R_lam) blocks."""
    nt, nn = mesh.num_triangles, mesh.num_nodes
    return b[: 2 * nt], b[2 * nt : 2 * nt + nn], b[2 * nt + nn :]


@dataclass(frozen=True)
class BlockField:
    """Per-triangle weight H(r) (Newton) or 1/|r|_b (Picard).

    ``H`` and ``Hinv`` always hold the (nt, 2, 2) matrices; for the Picard
    kind they are scalar multiples of the identity and ``scalar`` holds the
    multiplier.
    """

    kind: str
    H: np.ndarray
    Hinv: np.ndarray
    scalar: np.ndarray = None


def build_block_field(mesh, p, beta, method=NEWTON):
    """Evaluate H(p_T) or 1/|p_T|_b on every triangle."""
    _check_beta(beta)
    p = np.asarray(p, dtype=float).reshape(mesh.num_triangles, 2)
    if method == NEWTON:
        return BlockField(NEWTON, h_matrix(p, beta), h_matrix_inverse(p, beta))
    if method == PICARD:
        s = h_hat(p, beta)
        eye = np.eye(2)
        return BlockField(PICARD, s[:, None, None] * eye, (1.0 / s)[:, None, None] * eye, s)
    raise ValueError(f"unknown method {method!r}")


def _p1_pattern(mesh):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return rows, cols


def assemble_p1_mass(mesh):
    """Exact P1 mass matrix (local matrix area/12 * (1 + delta_ij))."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = (mesh.areas[:, None, None] * local).ravel()
    rows, cols = _p1_pattern(mesh)
    n = mesh.num_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_weighted_stiffness(mesh, field, alpha):
    """Matrix of <alpha H grad u, grad v> on P1 (pure Neumann, kernel = constants)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    G = mesh.grad_basis
    HG = np.einsum("tcd,tjd->tjc", field.H, G)
    local = alpha * mesh.areas[:, None, None] * np.einsum("tic,tjc->tij", G, HG)
    rows, cols = _p1_pattern(mesh)
    n = mesh.num_nodes
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    # exact symmetry; summation order otherwise leaves 1-ulp differences
    return ((K + K.T) * 0.5).tocsr()


def assemble_gradient(mesh):
    """Matrix G with (G u)[2t+c] = area_t * d_c u_h|_t, i.e. <grad u, mu> = mu . G u."""
    nt = mesh.num_triangles
    vals = mesh.areas[:, None, None] * np.transpose(mesh.grad_basis, (0, 2, 1))
    rows = np.repeat(np.arange(2 * nt).reshape(nt, 2), 3, axis=1)
    cols = np.repeat(mesh.triangles[:, None, :], 2, axis=1).reshape(nt, 6)
    return sp.csr_matrix(
        (vals.reshape(nt, 6).ravel(), (rows.ravel(), cols.ravel())),
        shape=(2 * nt, mesh.num_nodes),
    )


def p0_block_matrix(mesh, blocks):
    """Block-diagonal matrix with 2x2 blocks ``area_t * blocks[t]``."""
    nt = mesh.num_triangles
    vals = mesh.areas[:, None, None] * blocks
    idx = np.arange(2 * nt).reshape(nt, 2)
    rows = np.repeat(idx, 2, axis=1)
    cols = np.tile(idx, (1, 2))
    return sp.csr_matrix((vals.reshape(nt, 4).ravel(), (rows.ravel(), cols.ravel())),
                         shape=(2 * nt, 2 * nt))


def p0_area_diag(mesh):
    return sp.diags(np.repeat(mesh.areas, 2))


def assemble_operator(mesh, field, alpha):
    """Sparse symmetric saddle-point matrix A_h(r).

    Block layout (rows = test functions q, v, mu)::

        [ alpha*H_area    0      -D  ]
        [    0            M      G^T ]
        [   -D            G       0  ]

    with D the P0 area matrix and G from :func:`assemble_gradient`.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    Hp = p0_block_matrix(mesh, alpha * field.H)
    M = assemble_p1_mass(mesh)
    G = assemble_gradient(mesh)
    D = p0_area_diag(mesh)
    return sp.bmat([[Hp, None, -D], [None, M, G.T], [-D, G, None]], format="csr")


def apply_A(mesh, field, alpha, x):
    """Apply A_h(r) to a :class:`State` (or flat vector), returning a dual vector.

    Matrix-free evaluation of the three rows
    <alpha H p, q> - <lam, q>, <u, v> + <lam, grad v>, -<p, mu> + <grad u, mu>.
    """
    if not isinstance(x, State):
        x = State.from_flat(mesh, x)
    x.check(mesh)
    area = mesh.areas[:, None]
    Hp = np.einsum("tcd,td->tc", field.H, x.p)
    rp = area * (alpha * Hp - x.lam)
    gu = element_gradients(mesh, x.u)
    rl = area * (gu - x.p)
    ru = mass_apply(mesh, x.u) + _scatter_grad(mesh, area * x.lam)
    return np.concatenate([rp.ravel(), ru, rl.ravel()])


def mass_apply(mesh, u):
    """Matrix-free P1 mass action."""
    ut = np.asarray(u)[mesh.triangles]
    contrib = (mesh.areas / 12.0)[:, None] * (ut + ut.sum(axis=1, keepdims=True))
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)


def _scatter_grad(mesh, w):
    """sum_t w_t . grad(phi_j)|_t for every node j."""
    contrib = np.einsum("td,tkd->tk", w, mesh.grad_basis)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)


def newton_rhs(mesh, state, load, alpha, beta):
    """Residual functionals (R_p, R_u, R_lam) at ``state`` as one dual vector.

    ``load`` holds <f, phi_j> for every node. The same right-hand side serves
    the Newton and the Picard linearization.
    """
    state.check(mesh)
    load = np.asarray(load, dtype=float)
    if load.shape != (mesh.num_nodes,):
        raise ValueError("load vector length must equal number of nodes")
    area = mesh.areas[:, None]
    nb = beta_norm(state.p, beta)[:, None]
    rp = area * (-alpha * state.p / nb + state.lam)
    ru = load - mass_apply(mesh, state.u) - _scatter_grad(mesh, area * state.lam)
    rl = area * (state.p - element_gradients(mesh, state.u))
    return np.concatenate([rp.ravel(), ru, rl.ravel()])


def x_inner(mesh, x, y, field, alpha):
    """Weighted inner product (x, y)_{X_r}."""
    area = mesh.areas
    H, Hinv = field.H, field.Hinv
    t1 = alpha * np.einsum("t,tc,tcd,td->", area, x.p, H, y.p)
    t2 = x.u @ mass_apply(mesh, y.u)
    gx, gy = element_gradients(mesh, x.u), element_gradients(mesh, y.u)
    t3 = alpha * np.einsum("t,tc,tcd,td->", area, gx, H, gy)
    t4 = np.einsum("t,tc,tcd,td->", area, x.lam, Hinv, y.lam) / alpha
    return t1 + t2 + t3 + t4


def x_norm(mesh, state, field, alpha):
    """Weighted norm ||(q, v, mu)||_{X_r}."""
    return float(np.sqrt(max(x_inner(mesh, state, state, field, alpha), 0.0)))


def quadrature_points(mesh, refine=0, cells=None):
    """Physical quadrature points and weights (degree-4 rule).

    With ``refine = k > 0`` every selected triangle is split uniformly into
    4**k subtriangles and the rule is applied on each. Returns
    ``(tri_index, points, bary, weights)`` flattened over (triangle, point).
    """
    tris = np.arange(mesh.num_triangles) if cells is None else np.asarray(cells)
    bary, w = _refined_rule(refine)
    verts = mesh.nodes[mesh.triangles[tris]]  # (m, 3, 2)
    pts = np.einsum("qk,tkd->tqd", bary, verts)
    weights = mesh.areas[tris][:, None] * w[None, :]
    nq = len(w)
    return (
        np.repeat(tris, nq),
        pts.reshape(-1, 2),
        np.tile(bary, (len(tris), 1)),
        weights.ravel(),
    )


def _refined_rule(k):
    if k == 0:
        return QUAD_BARY, QUAD_WEIGHTS
    # barycentric vertices of the 4**k subtriangles
    subs = [np.eye(3)]
    for _ in range(k):
        new = []
        for s in subs:
            m01, m12, m20 = (s[0] + s[1]) / 2, (s[1] + s[2]) / 2, (s[2] + s[0]) / 2
            new += [
                np.array([s[0], m01, m20]),
                np.array([m01, s[1], m12]),
                np.array([m20, m12, s[2]]),
                np.array([m12, m20, m01]),
            ]
        subs = new
    bary = np.concatenate([QUAD_BARY @ s for s in subs])
    w = np.tile(QUAD_WEIGHTS, len(subs)) / len(subs)
    return bary, w


def load_vector(mesh, f, refine=0, cells=None):
    """<f, phi_j> by quadrature for a callable ``f(x, y)``.

    With ``cells`` only those triangles contribute (used to integrate
    discontinuous data with a refined rule on the cells it cuts).
    """
    tri, pts, bary, w = quadrature_points(mesh, refine, cells)
    fv = f(pts[:, 0], pts[:, 1]) * w
    nodes = mesh.triangles[tri]
    return np.bincount(nodes.ravel(), weights=(bary * fv[:, None]).ravel(),
                       minlength=mesh.num_nodes)


def weak_load_vector(mesh, u_exact, lam_exact):
    """<u, phi_j> + <lam, grad phi_j>, i.e. <f, phi_j> for f = u - div(lam), lam.n = 0."""
    tri, pts, bary, w = quadrature_points(mesh)
    uv = u_exact(pts[:, 0], pts[:, 1])
    lv = lam_exact(pts[:, 0], pts[:, 1])
    nodes = mesh.triangles[tri]
    contrib = bary * (uv * w)[:, None]
    contrib += np.einsum("qd,qkd->qk", lv * w[:, None], mesh.grad_basis[tri])
    return np.bincount(nodes.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)


def error_norms(mesh, state, u_exact=None, p_exact=None, lam_exact=None, grad_u_exact=None,
                refine=0, cells=None):
    """L2 errors of p, lambda, u and the H1-seminorm error of u.

    Integrals use the degree-4 rule (optionally on refined subtriangles). Any
    exact field left as None yields ``nan`` for its error. ``grad_u_exact``
    defaults to ``p_exact``.
    """
    tri, pts, bary, w = quadrature_points(mesh, refine, cells)
    x, y = pts[:, 0], pts[:, 1]
    out = {}

    def l2(diff):
        sq = diff * diff if diff.ndim == 1 else np.sum(diff * diff, axis=1)
        return float(np.sqrt(np.sum(w * sq)))

    out["p"] = l2(p_exact(x, y) - state.p[tri]) if p_exact else np.nan
    out["lam"] = l2(lam_exact(x, y) - state.lam[tri]) if lam_exact else np.nan
    if u_exact:
        uh = np.sum(bary * state.u[mesh.triangles[tri]], axis=1)
        out["u_l2"] = l2(u_exact(x, y) - uh)
    else:
        out["u_l2"] = np.nan
    gexact = grad_u_exact or p_exact
    if gexact:
        gh = element_gradients(mesh, state.u)[tri]
        out["u_h1"] = l2(gexact(x, y) - gh)
    else:
        out["u_h1"] = np.nan
    return out
