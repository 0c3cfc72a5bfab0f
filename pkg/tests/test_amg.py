import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from tvnewton import checks
from tvnewton.amg import (
    C_NODE,
    F_NODE,
    AmgConfig,
    amg_setup,
    amg_vcycle,
    inexact_middle_solve,
    interpolation,
    rs_splitting,
    strength_of_connection,
)
from tvnewton.assembly import assemble_p1_mass, assemble_weighted_stiffness, build_block_field
from tvnewton.krylov import pcg
from tvnewton.mesh import build_uniform_mesh, mesh_for_level


def tridiag(n, diag=3.0):
    return sp.diags([-np.ones(n - 1), diag * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def model_operator(mesh, alpha=1.0, p=None, beta=1.0):
    nt = mesh.num_triangles
    field = build_block_field(mesh, np.zeros((nt, 2)) if p is None else p, beta)
    return (assemble_p1_mass(mesh) + assemble_weighted_stiffness(mesh, field, alpha)).tocsr()


@pytest.fixture(scope="module")
def s_level2():
    return model_operator(mesh_for_level(2))


def test_strength_threshold():
    A = sp.csr_matrix(np.array([[4.0, -1.0, -0.2, 0.5], [-1.0, 4.0, -1.0, 0.0],
                                [-0.2, -1.0, 4.0, -1.0], [0.5, 0.0, -1.0, 4.0]]))
    S = strength_of_connection(A, 0.25).toarray()
    assert S[0].tolist() == [0, 1, 0, 0]  # -0.2 < 0.25 * 1, positive entry ignored
    assert S[2].tolist() == [0, 1, 0, 1]
    assert np.all(np.diag(S) == 0)


def test_splitting_is_valid(s_level2):
    S = strength_of_connection(s_level2, 0.25)
    split = rs_splitting(S)
    assert set(np.unique(split)) <= {C_NODE, F_NODE}
    Sd = S.tocsr()
    for i in np.flatnonzero(split == F_NODE):
        nbrs = Sd.indices[Sd.indptr[i]:Sd.indptr[i + 1]]
        if len(nbrs):
            assert np.any(split[nbrs] == C_NODE)
    # C points are not strongly coupled to each other too often (independent-ish set)
    assert 0.2 < np.mean(split == C_NODE) < 0.7


def test_interpolation_preserves_constants_for_zero_row_sum():
    A = tridiag(40, diag=2.0).tolil()
    A[0, 0] = A[-1, -1] = 1.0
    A = A.tocsr()
    S = strength_of_connection(A, 0.25)
    split = rs_splitting(S)
    for kind in ("standard", "direct"):
        P = interpolation(A, S, split, kind)
        assert np.allclose(P @ np.ones(P.shape[1]), 1.0)
        c = np.flatnonzero(split == C_NODE)
        assert np.allclose(P[c].toarray(), np.eye(len(c)))


def test_size_64_tridiagonal():
    A = tridiag(64)
    single = amg_setup(A)
    assert len(single.levels) == 1  # at or below the coarse-size cutoff
    b = np.random.default_rng(0).standard_normal(64)
    assert np.allclose(A @ amg_vcycle(single, b), b)
    multi = amg_setup(A, config=AmgConfig(max_coarse=16))
    assert len(multi.levels) >= 2
    assert multi.sizes == sorted(multi.sizes, reverse=True)


@pytest.mark.parametrize("n", [128, 1000])
def test_galerkin_identity_1d(n):
    hier = amg_setup(tridiag(n))
    assert len(hier.levels) >= 2
    for fine, coarse in zip(hier.levels[:-1], hier.levels[1:]):
        ref = (fine.P.T @ fine.A @ fine.P).toarray()
        assert np.abs(coarse.A.toarray() - ref).max() <= 1e-12 * np.abs(ref).max()
        assert (fine.R != fine.P.T).nnz == 0


def test_galerkin_and_sizes_2d(s_level2):
    hier = amg_setup(s_level2)
    sizes = hier.sizes
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] <= 64
    for fine, coarse in zip(hier.levels[:-1], hier.levels[1:]):
        ref = fine.R @ fine.A @ fine.P
        assert abs(coarse.A - ref).max() <= 1e-12 * abs(ref).max()


def test_rejects_non_square():
    with pytest.raises(ValueError):
        amg_setup(sp.csr_matrix(np.ones((3, 4))))


def test_vcycle_zero_rhs(s_level2):
    hier = amg_setup(s_level2)
    assert not np.any(amg_vcycle(hier, np.zeros(s_level2.shape[0])))


def test_vcycle_symmetric_small_instance():
    A = model_operator(build_uniform_mesh(7))  # 64 unknowns
    hier = amg_setup(A, config=AmgConfig(max_coarse=10))
    assert len(hier.levels) >= 2
    n = A.shape[0]
    V = np.column_stack([amg_vcycle(hier, e) for e in np.eye(n)])
    assert np.abs(V - V.T).max() <= 1e-10 * np.abs(V).max()
    assert np.all(np.linalg.eigvalsh(0.5 * (V + V.T)) > 0)


def test_vcycle_error_reduction(s_level2):
    hier = amg_setup(s_level2)
    x = np.random.default_rng(1).standard_normal(s_level2.shape[0])
    y = amg_vcycle(hier, s_level2 @ x)
    assert np.linalg.norm(x - y) <= 0.5 * np.linalg.norm(x)


def test_pcg_iterations_mesh_independent():
    counts = {}
    for lev in (2, 3, 4):
        A = model_operator(mesh_for_level(lev))
        hier = amg_setup(A)
        b = np.random.default_rng(lev).standard_normal(A.shape[0])
        _, loose = pcg(A, hier.aspreconditioner(), b, tol=1e-3)
        _, tight = pcg(A, hier.aspreconditioner(), b, tol=1e-8)
        assert loose.iterations <= 20
        counts[lev] = tight.iterations
    assert counts[4] <= 1.3 * counts[2]


def test_inexact_middle_solve_random_fields():
    mesh = mesh_for_level(3)
    rng = np.random.default_rng(0)
    for alpha, beta in [(1.0, 1e-3), (1e3, 1.0), (1e-3, 1e-5)]:
        A = model_operator(mesh, alpha, checks.random_p_field(mesh, rng), beta)
        hier = amg_setup(A)
        b = rng.standard_normal(A.shape[0])
        x, rep = inexact_middle_solve(hier, b)
        assert rep.converged
        assert np.linalg.norm(A @ x - b) <= 1e-3 * np.linalg.norm(b)
    x, rep = inexact_middle_solve(hier, np.zeros(A.shape[0]))
    assert not np.any(x) and rep.converged


def _rayleigh_interval(level, trials=50):
    A = model_operator(mesh_for_level(level))
    hier = amg_setup(A)
    lu = spla.splu(A.tocsc())
    rng = np.random.default_rng(level)
    q = []
    for _ in range(trials):
        v = rng.standard_normal(A.shape[0])
        x, _ = inexact_middle_solve(hier, v)
        q.append((x @ v) / (lu.solve(v) @ v))
    return min(q), max(q)


def test_inexact_spectral_equivalence():
    lo1, hi1 = _rayleigh_interval(1)
    lo2, hi2 = _rayleigh_interval(2)
    assert 0.5 < lo1 <= hi1 < 1.5
    assert (hi2 / lo2) <= 1.25 * (hi1 / lo1)
