import numpy as np
import pytest

from tvnewton import checks
from tvnewton.assembly import (
    NEWTON,
    PICARD,
    assemble_p1_mass,
    assemble_weighted_stiffness,
    build_block_field,
)
from tvnewton.mesh import build_uniform_mesh, mesh_for_level
from tvnewton.precond import EXACT, INEXACT, apply_preconditioner, build_preconditioner


def field(mesh, beta=1e-2, seed=0, method=NEWTON):
    p = checks.random_p_field(mesh, np.random.default_rng(seed))
    return build_block_field(mesh, p, beta, method)


def test_identity_field_blocks(mesh4):
    nt = mesh4.num_triangles
    B = build_preconditioner(mesh4, np.zeros((nt, 2)), 1.0, beta=1.0)
    inv_area = (1.0 / mesh4.areas)[:, None, None] * np.eye(2)
    assert np.allclose(B.first_inv, inv_area)
    assert np.allclose(B.third_inv, inv_area)
    f = build_block_field(mesh4, np.zeros((nt, 2)), 1.0)
    S = assemble_p1_mass(mesh4) + assemble_weighted_stiffness(mesh4, f, 1.0)
    assert abs(B.S - S).max() < 1e-15


def test_alpha_scaling(mesh4):
    f = field(mesh4)
    B1 = build_preconditioner(mesh4, f, 1.0)
    B4 = build_preconditioner(mesh4, f, 4.0)
    assert np.allclose(B4.first_inv, B1.first_inv / 4)
    assert np.allclose(B4.third_inv, B1.third_inv * 4)


def test_modes_differ_only_in_middle_tolerance():
    mesh = mesh_for_level(1)
    f = field(mesh)
    Be = build_preconditioner(mesh, f, 1.0, mode=EXACT)
    Bi = build_preconditioner(mesh, f, 1.0, mode=INEXACT)
    assert np.array_equal(Be.first_inv, Bi.first_inv)
    assert np.array_equal(Be.third_inv, Bi.third_inv)
    assert (Be.S != Bi.S).nnz == 0
    assert (Be.middle_tol, Bi.middle_tol) == (1e-12, 1e-3)


def test_parameter_guards(mesh4):
    nt = mesh4.num_triangles
    with pytest.raises(ValueError):
        build_preconditioner(mesh4, np.zeros((nt, 2)), 0.0, beta=1.0)
    with pytest.raises(ValueError):
        build_preconditioner(mesh4, np.zeros((nt, 2)), 1.0)
    with pytest.raises(ValueError):
        build_preconditioner(mesh4, np.zeros((nt, 2)), 1.0, beta=-1.0)
    with pytest.raises(ValueError):
        build_preconditioner(mesh4, field(mesh4), 1.0, mode="approximate")


def test_zero_and_dimension(mesh4):
    B = build_preconditioner(mesh4, field(mesh4), 1.0)
    n = 4 * mesh4.num_triangles + mesh4.num_nodes
    assert not np.any(B(np.zeros(n)))
    with pytest.raises(ValueError):
        apply_preconditioner(B, np.zeros(n + 1))


@pytest.mark.parametrize("solver", ["pcg", "direct"])
def test_exact_mode_matches_dense_inverse(solver):
    mesh = build_uniform_mesh(1)
    f = field(mesh)
    B = build_preconditioner(mesh, f, 0.3, exact_solver=solver)
    Binv = B.forward_matrix().toarray()
    y = np.random.default_rng(0).standard_normal(Binv.shape[0])
    assert np.allclose(B(y), np.linalg.solve(Binv, y), rtol=1e-9, atol=0)


def test_forward_roundtrip_and_linearity():
    mesh = build_uniform_mesh(8)
    B = build_preconditioner(mesh, field(mesh), 2.0)
    rng = np.random.default_rng(1)
    y, z = rng.standard_normal((2, B.forward_matrix().shape[0]))
    assert np.linalg.norm(B.apply_forward(B(y)) - y) <= 1e-8 * np.linalg.norm(y)
    assert np.allclose(B(y + z), B(y) + B(z), rtol=0, atol=1e-9 * np.abs(B(y)).max())


def test_exact_mode_spd_and_symmetric():
    mesh = build_uniform_mesh(4)
    B = build_preconditioner(mesh, field(mesh), 1.0)
    n = B.forward_matrix().shape[0]
    M = np.column_stack([B(e) for e in np.eye(n)])
    assert np.abs(M - M.T).max() <= 1e-10 * np.abs(M).max()
    assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() > 0


def test_picard_field_uses_scalar_blocks(mesh4):
    f = field(mesh4, method=PICARD)
    B = build_preconditioner(mesh4, f, 1.0)
    off = B.first_inv[:, 0, 1]
    assert not np.any(off)
    assert np.allclose(B.first_inv[:, 0, 0] * mesh4.areas, 1.0 / f.scalar)


def test_middle_stats_record_inner_iterations():
    mesh = mesh_for_level(1)
    B = build_preconditioner(mesh, field(mesh), 1.0, mode=INEXACT)
    B(np.ones(B.forward_matrix().shape[0]))
    assert B.stats.calls == 1 and B.stats.inner_iterations >= 1 and B.stats.failures == 0


def test_condition_number_robust():
    r = checks.check_condition_robustness()
    assert r.passed, r.line()
