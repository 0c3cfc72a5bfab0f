"""Executable stability and consistency checks of the discrete operators.

Each check returns a :class:`CheckResult` carrying the measured quantity and
the threshold it was compared against. :func:`run_all` runs the whole suite
(used by the ``proptest`` command and the acceptance tests). All checks use
meshes with at most 32 subdivisions per side.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import (
    NEWTON,
    State,
    apply_A,
    assemble_gradient,
    assemble_operator,
    build_block_field,
    newton_rhs,
)
from .krylov import estimate_condition_number, minres
from .local_ops import h_eigenvalue_bounds, h_matrix, h_matrix_inverse
from .mesh import build_uniform_mesh, element_gradients, mesh_for_level
from .precond import build_preconditioner


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.6g} (threshold {self.threshold:.6g}) {self.detail}".rstrip()


def random_p_field(mesh, rng, scale=None):
    """Per-triangle vectors with magnitudes spread over several decades."""
    nt = mesh.num_triangles
    if scale is None:
        scale = 10.0 ** rng.uniform(-3, 3, size=nt)
    return rng.standard_normal((nt, 2)) * np.reshape(scale, (-1, 1))


def random_state(mesh, rng):
    nt, nn = mesh.num_triangles, mesh.num_nodes
    return State(rng.standard_normal((nt, 2)), rng.standard_normal(nn), rng.standard_normal((nt, 2)))


def _setup(n, alpha, beta, seed, method=NEWTON):
    mesh = build_uniform_mesh(n)
    rng = np.random.default_rng(seed)
    field = build_block_field(mesh, random_p_field(mesh, rng), beta, method)
    return mesh, rng, field


def _gram(mesh, field, alpha):
    """Dense Gram matrix of the weighted X_r inner product."""
    B = build_preconditioner(mesh, field, alpha)
    return B.forward_matrix().toarray()


# ------------------------------------------------------------- operator


def check_symmetry(n=8, alpha=1.0, beta=1e-3, seed=0, trials=20):
    """max |<Ax, y> - <x, Ay>| / (|x| |A| |y|) over random pairs."""
    mesh, rng, field = _setup(n, alpha, beta, seed)
    A = assemble_operator(mesh, field, alpha)
    anorm = sla.norm(A.toarray(), 2)
    worst = 0.0
    for _ in range(trials):
        x = random_state(mesh, rng)
        y = random_state(mesh, rng)
        Ax = apply_A(mesh, field, alpha, x)
        Ay = apply_A(mesh, field, alpha, y)
        err = abs(Ax @ y.flat() - Ay @ x.flat())
        worst = max(worst, err / (anorm * np.linalg.norm(x.flat()) * np.linalg.norm(y.flat())))
    asym = abs(A - A.T).max()
    return CheckResult("operator symmetry", worst <= 1e-12 and asym == 0.0, worst, 1e-12,
                       f"max|A-A^T|={asym:.1e}")


def check_boundedness(n=6, alpha=1.0, beta=1e-3, seed=0):
    """Largest |eig| of A relative to the X_r Gram matrix, must not exceed 2."""
    mesh, _, field = _setup(n, alpha, beta, seed)
    A = assemble_operator(mesh, field, alpha).toarray()
    X = _gram(mesh, field, alpha)
    ev = sla.eigh(A, X, eigvals_only=True)
    c = float(np.max(np.abs(ev)))
    return CheckResult("boundedness |a(x,y)| <= 2|x||y|", c <= 2.0, c, 2.0)


def check_kernel_coercivity(n=6, alpha=1.0, beta=1e-3, seed=0):
    """min of a(z, z)/||z||_X^2 over the kernel {q = grad v}, must be >= 1/2."""
    mesh, _, field = _setup(n, alpha, beta, seed)
    nt, nn = mesh.num_triangles, mesh.num_nodes
    A = assemble_operator(mesh, field, alpha).toarray()
    X = _gram(mesh, field, alpha)
    # kernel basis: q = grad v (per triangle), lam = 0
    Dinv = 1.0 / np.repeat(mesh.areas, 2)
    Gv = Dinv[:, None] * assemble_gradient(mesh).toarray()
    Z = np.vstack([Gv, np.eye(nn)])
    k = 2 * nt + nn
    Az = Z.T @ A[:k, :k] @ Z
    Xz = Z.T @ X[:k, :k] @ Z
    c = float(sla.eigh(Az, Xz, eigvals_only=True)[0])
    thr = 0.5 - 1e-10
    return CheckResult("kernel coercivity", c >= thr, c, thr)


def check_inf_sup(n=6, alpha=1.0, beta=1e-2, seed=0, trials=50):
    """Witness q = -alpha^{-1} H^{-1} mu, v = 0 for every mu; also the exact constant.

    The witness ratio is 1 in exact arithmetic for any p-field; evaluating it
    costs about ``eps * cond(H)``, so the field here keeps ``cond(H) <= 1e4``.
    """
    mesh = build_uniform_mesh(n)
    rng = np.random.default_rng(seed)
    p = random_p_field(mesh, rng, 10.0 ** rng.uniform(-1, 0, size=mesh.num_triangles))
    field = build_block_field(mesh, p, beta, NEWTON)
    nt, nn = mesh.num_triangles, mesh.num_nodes
    A = assemble_operator(mesh, field, alpha).toarray()
    X = _gram(mesh, field, alpha)
    k = 2 * nt + nn
    Bc = A[k:, :k]  # coupling rows (mu) against (q, v)
    Xv, Xw = X[:k, :k], X[k:, k:]
    worst = np.inf
    for _ in range(trials):
        mu = rng.standard_normal((nt, 2))
        q = -np.einsum("tcd,td->tc", field.Hinv, mu) / alpha
        x = np.concatenate([q.ravel(), np.zeros(nn)])
        m = mu.ravel()
        ratio = (m @ Bc @ x) / np.sqrt((x @ Xv @ x) * (m @ Xw @ m))
        worst = min(worst, ratio)
    # exact: inf_mu sup_x b(x, mu) / (|x| |mu|) = sqrt(min eig(B X^{-1} B^T, Xw))
    S = Bc @ np.linalg.solve(Xv, Bc.T)
    exact = float(np.sqrt(sla.eigh(S, Xw, eigvals_only=True)[0]))
    thr = 1.0 - 1e-10
    # the exact value is reported only: it goes through an ill-conditioned solve
    return CheckResult("inf-sup witness", worst >= thr, float(worst), thr,
                       f"exact constant {exact:.9f}")


# ------------------------------------------------------------- pointwise


def check_h_bounds(samples=10_000, seed=0):
    """Eigenvalues of H(r) within the stated bounds and H H^{-1} = I.

    The bounds are attained, so computed eigenvalues may cross them by the
    eigensolver's rounding error ``~ eps |H|``; the allowed slack is
    ``1e-10`` relative plus ``16 eps |H|``. The identity is checked
    componentwise relative to ``|H| |H^{-1}|``, the natural rounding scale of
    the product for ill-conditioned H.
    """
    eps, tiny = np.finfo(float).eps, np.finfo(float).tiny
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((samples, 2)) * 10.0 ** rng.uniform(-4, 3, size=(samples, 1))
    betas = 10.0 ** rng.uniform(-8, 2, size=samples)
    worst_bound = 0.0
    worst_inv = 0.0
    for k in range(samples):
        H = h_matrix(r[k], betas[k])
        Hi = h_matrix_inverse(r[k], betas[k])
        lo, hi = h_eigenvalue_bounds(r[k], betas[k])
        ev = np.linalg.eigvalsh(H)
        slack = 1e-10 * np.array([lo, hi]) + 16 * eps * hi
        worst_bound = max(worst_bound, float(np.max(([lo - ev[0], ev[1] - hi]) / slack)))
        err = np.abs(H @ Hi - np.eye(2)) / (np.abs(H) @ np.abs(Hi) + tiny)
        worst_inv = max(worst_inv, float(err.max()))
    ok = worst_bound <= 1.0 and worst_inv <= 1e-12
    return CheckResult("H(r) spectrum and inverse", ok, worst_inv, 1e-12,
                       f"worst bound excess / slack {worst_bound:.2f}")


# ------------------------------------------------------------- Jacobian


def check_fd_jacobian(alpha=1.0, beta=0.5, seed=0, step=1e-6, trials=10):
    """Central differences of the residual against -A(p) d on a two-triangle mesh."""
    mesh = build_uniform_mesh(1)
    rng = np.random.default_rng(seed)
    load = rng.standard_normal(mesh.num_nodes)
    worst = 0.0
    for _ in range(trials):
        s = random_state(mesh, rng)
        d = random_state(mesh, rng)
        field = build_block_field(mesh, s.p, beta, NEWTON)
        jd = -apply_A(mesh, field, alpha, d)
        fd = (newton_rhs(mesh, s.axpy(step, d), load, alpha, beta)
              - newton_rhs(mesh, s.axpy(-step, d), load, alpha, beta)) / (2 * step)
        worst = max(worst, np.linalg.norm(fd - jd) / np.linalg.norm(jd))
    return CheckResult("finite-difference Jacobian", worst <= 1e-5, float(worst), 1e-5)


# ------------------------------------------------------------- preconditioner


def smooth_p_field(mesh):
    """Element gradients of the interpolated cos(pi x) cos(pi y)."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return element_gradients(mesh, np.cos(np.pi * x) * np.cos(np.pi * y))


def condition_numbers(levels=(1, 2), alphas=(1e-3, 1.0, 1e3), betas=(1e-5, 1.0), field="random",
                      seed=0):
    """kappa(B A) by Lanczos for each (level, alpha, beta).

    ``field`` is ``"random"`` (a fixed-seed p-field with magnitudes over six
    decades) or ``"smooth"`` (:func:`smooth_p_field`).
    """
    out = []
    for lev in levels:
        mesh = mesh_for_level(lev)
        if field == "random":
            p = random_p_field(mesh, np.random.default_rng(seed))
        else:
            p = smooth_p_field(mesh)
        for alpha in alphas:
            for beta in betas:
                bf = build_block_field(mesh, p, beta, NEWTON)
                A = assemble_operator(mesh, bf, alpha)
                B = build_preconditioner(mesh, bf, alpha)
                est = estimate_condition_number(A, B, A.shape[0])
                out.append({"level": lev, "alpha": alpha, "beta": beta, "kappa": est.kappa,
                            "converged": est.converged})
    return out


def check_condition_robustness(**kw):
    rows = condition_numbers(**kw)
    kap = [r["kappa"] for r in rows]
    ratio = max(kap) / min(kap)
    ok = ratio <= 2.0 and all(r["converged"] for r in rows)
    return CheckResult("kappa(BA) variation", ok, ratio, 2.0,
                       f"kappa in [{min(kap):.3f}, {max(kap):.3f}]")


def check_minres_monotone(n=16, seed=0):
    """The preconditioned residual norm never increases, over several solves."""
    rng = np.random.default_rng(seed)
    mesh = build_uniform_mesh(n)
    worst = 0.0
    for alpha, beta in [(1.0, 1.0), (1e-3, 1e-5), (1e3, 1e-3)]:
        for method in ("newton", "picard"):
            field = build_block_field(mesh, random_p_field(mesh, rng), beta, method)
            A = assemble_operator(mesh, field, alpha)
            for mode in ("exact", "inexact"):
                B = build_preconditioner(mesh, field, alpha, mode=mode)
                _, rep = minres(A, B, rng.standard_normal(A.shape[0]), tol=1e-10)
                h = np.asarray(rep.relative_residuals)
                worst = max(worst, float(np.max(np.diff(h) / h[:-1], initial=0.0)))
    return CheckResult("MINRES residual monotone", worst <= 1e-12, worst, 1e-12)


def check_dense_oracle(alpha=0.7, beta=1e-2, seed=0):
    """Preconditioned MINRES on two triangles against a dense direct solve."""
    mesh = build_uniform_mesh(1)
    rng = np.random.default_rng(seed)
    field = build_block_field(mesh, random_p_field(mesh, rng, 1.0), beta, NEWTON)
    A = assemble_operator(mesh, field, alpha)
    B = build_preconditioner(mesh, field, alpha)
    b = rng.standard_normal(A.shape[0])
    x, _ = minres(A, B, b, tol=1e-14, maxit=100)
    ref = np.linalg.solve(A.toarray(), b)
    # the preconditioner itself against the dense inverse of the Gram matrix
    Binv = np.linalg.inv(B.forward_matrix().toarray())
    y = rng.standard_normal(A.shape[0])
    perr = np.linalg.norm(B(y) - Binv @ y) / np.linalg.norm(Binv @ y)
    err = np.linalg.norm(x - ref) / np.linalg.norm(ref)
    return CheckResult("dense-oracle preconditioned solve", max(err, perr) <= 1e-9, float(err),
                       1e-9, f"preconditioner action error {perr:.1e}")


SUITE = (
    check_symmetry,
    check_boundedness,
    check_kernel_coercivity,
    check_inf_sup,
    check_h_bounds,
    check_fd_jacobian,
    check_condition_robustness,
    check_minres_monotone,
    check_dense_oracle,
)


def run_all(checks=SUITE):
    return [c() for c in checks]
