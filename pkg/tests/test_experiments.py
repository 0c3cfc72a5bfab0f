import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvnewton import experiments as E
from tvnewton.mesh import build_uniform_mesh, mesh_for_level
from tvnewton.nonlinear import SolveConfig

# ------------------------------------------------------------- smooth solution


def test_example1_values():
    u, p, lam = E.example1_exact(0.25, 0.0, 1.0, 1.0)
    assert u == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert np.allclose(p, [-np.pi * np.sqrt(0.5), 0.0], atol=1e-12)
    assert np.allclose(p, [-2.2214, 0.0], atol=1e-4)
    assert np.allclose(lam, [-0.9118, 0.0], atol=1e-4)
    u, p, lam = E.example1_exact(0.5, 0.5, 1.0, 1.0)
    assert abs(u) < 1e-15 and np.allclose(p, 0, atol=1e-15) and np.allclose(lam, 0, atol=1e-15)
    u, p, _ = E.example1_exact(0.0, 0.0, 1.0, 1.0)
    assert u == 1.0 and not np.any(p)


def test_example1_internal_consistency():
    rng = np.random.default_rng(7)
    x, y = rng.uniform(0.01, 0.99, (2, 1000))
    alpha, beta = 0.7, 0.05
    sol = E.ManufacturedSolution(alpha, beta)
    h = 1e-5
    fd = np.stack([(sol.u(x + h, y) - sol.u(x - h, y)) / (2 * h),
                   (sol.u(x, y + h) - sol.u(x, y - h)) / (2 * h)], axis=-1)
    p = sol.p(x, y)
    assert np.linalg.norm(fd - p) <= 1e-6 * np.linalg.norm(p)
    lam = sol.lam(x, y)
    assert np.allclose(lam * np.sqrt((p**2).sum(-1) + beta)[:, None], alpha * p, rtol=1e-12)


# ------------------------------------------------------------- disk


def test_example2_values():
    inside = 1 - 2 * 0.02 * 3
    outside = 2 * np.pi / 3 * 0.02 / (1 - np.pi / 9)
    assert E.example2_exact(0.5, 0.5) == pytest.approx(inside, rel=1e-14)
    assert E.example2_exact(0.05, 0.05) == pytest.approx(outside, rel=1e-14)
    assert E.example2_exact(0.05, 0.05) == pytest.approx(0.0645, abs=2e-4)
    assert E.example2_exact(0.5 + 0.5, 0.5, r=0.5) == pytest.approx(1 - 2 * 0.02 / 0.5)


def test_example2_plateaus_match_discrete_solution():
    mesh = mesh_for_level(2)
    cfg = SolveConfig(exact_solver="direct")
    rows, _ = E.run_disk([2], config=cfg)
    assert rows[0]["converged"]
    # recompute the solution to inspect plateaus away from the interface
    f = lambda x, y: E.characteristic_lp_ball(x, y)  # noqa: E731
    load = E.discontinuous_load(mesh, f, E.cut_cells(mesh, f))
    init = E.interpolant_state(mesh, f(*mesh.nodes.T), E.DISK_ALPHA, E.DISK_BETA)
    state, _ = E.nonlinear_solve(mesh, load, cfg.with_(alpha=E.DISK_ALPHA, beta=E.DISK_BETA),
                                 init)
    d = np.hypot(*(mesh.nodes - 0.5).T)
    assert np.median(state.u[d < 0.2]) == pytest.approx(E.example2_exact(0.5, 0.5), abs=0.01)
    assert np.median(state.u[d > 0.45]) == pytest.approx(E.example2_exact(0, 0), abs=0.01)


@pytest.mark.parametrize("p_index", [1, 2, np.inf, "inf", "1", "2"])
def test_lp_ball_center_and_boundary(p_index):
    assert E.characteristic_lp_ball(0.5, 0.5, p_index) == 1.0
    assert E.characteristic_lp_ball(0.5 + 1 / 3, 0.5, p_index, r=1 / 3) == 0.0


def test_lp_ball_shapes():
    pt = (0.7, 0.7)
    assert E.characteristic_lp_ball(*pt, 1) == 0.0
    assert E.characteristic_lp_ball(*pt, 2) == 1.0
    assert E.characteristic_lp_ball(*pt, "inf") == 1.0
    with pytest.raises(ValueError):
        E.characteristic_lp_ball(0.5, 0.5, 3)
    with pytest.raises(ValueError):
        E.characteristic_lp_ball(0.5, 0.5, 2, r=0.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_lp_balls_nested(x, y):
    one = E.characteristic_lp_ball(x, y, 1)
    two = E.characteristic_lp_ball(x, y, 2)
    inf = E.characteristic_lp_ball(x, y, "inf")
    assert one <= two <= inf


def test_cut_cells_are_interface_cells():
    mesh = build_uniform_mesh(16)
    f = lambda x, y: E.characteristic_lp_ball(x, y, "inf", r=0.26)  # noqa: E731
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    cut = E.cut_cells(mesh, f)
    d = np.abs(centroids[cut] - 0.5).max(axis=1)
    assert cut.size > 0 and np.all(np.abs(d - 0.26) < mesh.h)
    cut = E.cut_cells(mesh, lambda x, y: E.characteristic_lp_ball(x, y))
    assert 0 < cut.size < mesh.num_triangles
    d = np.hypot(*(centroids[cut] - 0.5).T)
    assert np.all(np.abs(d - 1 / 3) < mesh.h)


def test_discontinuous_load_total_mass():
    mesh = build_uniform_mesh(16)
    f = lambda x, y: E.characteristic_lp_ball(x, y)  # noqa: E731
    b = E.discontinuous_load(mesh, f, E.cut_cells(mesh, f), refine=5)
    assert b.sum() == pytest.approx(np.pi / 9, rel=2e-3)


# ------------------------------------------------------------- noise


def test_noise_determinism_and_statistics():
    mesh = mesh_for_level(4)
    a = E.sample_noise(mesh, 0)
    assert a.shape == (16641,)
    assert np.array_equal(a, E.sample_noise(mesh, 0))
    assert abs(a.mean()) < 0.05 and abs(a.var() - 1) < 0.1
    b = E.sample_noise(mesh, 1)
    assert np.mean(a != b) >= 0.99


def test_benchmark_problem():
    mesh = build_uniform_mesh(8)
    clean = E.BenchmarkProblem(delta=0.0)
    assert np.array_equal(clean.nodal_data(mesh), E.characteristic_lp_ball(*mesh.nodes.T))
    noisy = E.BenchmarkProblem(seed=3)
    diff = noisy.nodal_data(mesh) - clean.nodal_data(mesh)
    assert np.allclose(diff, 0.1 * E.sample_noise(mesh, 3))
    with pytest.raises(ValueError):
        E.BenchmarkProblem(delta=-1.0)
    with pytest.raises(ValueError):
        E.BenchmarkProblem(radius=0.0)


def test_nodal_image_orientation():
    mesh = build_uniform_mesh(3)
    img = E.nodal_image(mesh, mesh.nodes[:, 1])
    assert img.shape == (4, 4)
    assert np.all(img[0] == 1.0) and np.all(img[-1] == 0.0)
    img = E.nodal_image(mesh, mesh.nodes[:, 0])
    assert np.all(img[:, 0] == 0.0) and np.all(img[:, -1] == 1.0)


# ------------------------------------------------------------- orders and drivers


@settings(max_examples=50)
@given(st.lists(st.floats(1e-8, 1e3), min_size=2, max_size=6), st.floats(1e-3, 1e3))
def test_orders_scale_invariant(errors, c):
    a = E.compute_orders(errors)
    b = E.compute_orders([c * e for e in errors])
    assert a[0] is None and b[0] is None
    assert np.allclose(a[1:], b[1:], rtol=0, atol=1e-9)


def test_orders_values():
    assert E.compute_orders([1.0]) == [None]
    assert E.compute_orders([1.0, 0.25, 0.0625]) == [None, 2.0, 2.0]
    assert E.compute_orders([1.0, 0.0]) == [None, None]


def test_run_convergence_small():
    rows, reports = E.run_convergence([8, 16, 32])
    assert [r["h"] for r in rows] == pytest.approx([1 / 8, 1 / 16, 1 / 32])
    assert rows[0]["order_p"] is None
    assert all(r["converged"] for r in rows)
    assert rows[-1]["order_u_l2"] > 1.5 and rows[-1]["order_p"] > 0.8
    assert len(reports) == 3
    with pytest.raises(ValueError):
        E.run_convergence([8, 4])


def test_run_iteration_counts_small():
    rows = E.run_iteration_counts([8])
    assert rows[0]["n"] == 8 and rows[0]["converged"] and rows[0]["outer"] >= 1


def test_robustness_deterministic():
    kw = dict(alpha_grid=(1e3, 1e-3), beta_grid=(1.0, 1e-3), level=8,
              config=SolveConfig(exact_solver="direct"))
    a = E.run_robustness(**kw)
    b = E.run_robustness(**kw)
    strip = lambda cells: [{k: v for k, v in c.items() if k != "report"} for c in cells]  # noqa: E731
    assert strip(a) == strip(b)
    assert [(c["alpha"], c["beta"]) for c in a] == [(1e3, 1.0), (1e-3, 1.0), (1e3, 1e-3),
                                                     (1e-3, 1e-3)]
    with pytest.raises(ValueError):
        E.run_robustness(alpha_grid=(), level=8)


def test_robustness_records_failures():
    cells = E.run_robustness(alpha_grid=(1.0,), beta_grid=(1e-3,), level=8,
                             config=SolveConfig(nl_maxit=1, exact_solver="direct"))
    assert cells[0]["converged"] is False and cells[0]["outer"] == 1


@pytest.mark.parametrize("method", ["newton", "picard"])
def test_denoise_noise_free_range(method):
    prob = E.BenchmarkProblem(delta=0.0)
    res = E.run_denoise_full(prob, method, level=16)
    assert res.report.converged
    assert res.image.shape == (17, 17)
    assert res.image.min() >= -0.05 and res.image.max() <= 1.05
    assert (res.warmstart is None) == (method == "picard")
    state, rep, img = E.run_denoise(prob, method, level=16)
    assert np.array_equal(img, res.image)
