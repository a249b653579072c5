import math

import numpy as np
import pytest

from place3d import gp as gpm
from place3d.model import partition_from_z
from place3d.synth import SynthSpec, gen_design

from conftest import make_design, make_kind


def test_precondition_examples():
    grads = np.ones((3, 3))
    out, div = gpm.precondition(
        grads, 1.0,
        charges=np.array([0.3, 0.3, 7.0]),
        pin_degrees=np.array([5.0, 2.0, 3.0]),
        macro_flags=np.array([True, False, False]),
    )
    assert div[0] == pytest.approx(5.3)  # macro: |E| + lam q
    assert div[1] == 1.0  # cell: max(1, 0.3)
    assert div[2] == pytest.approx(7.0)  # cell: lam q > 1
    assert np.allclose(out[0], 1 / 5.3)
    # one divisor serves all three axes of an object
    assert np.allclose(out[2], 1 / 7.0)


def test_precondition_all_divisors_at_least_one():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(50, 3))
    _, div = gpm.precondition(g, 1e-6, rng.uniform(0, 5, 50),
                              rng.integers(0, 9, 50), rng.random(50) < 0.3)
    assert (div >= 1).all()


def test_lambda_init_guards():
    assert gpm.lambda_init(0.0, 5.0) == 1e-3
    assert gpm.lambda_init(5.0, 0.0) == 1e-3
    assert gpm.lambda_init(7.0, 7.0) == pytest.approx(1e-3)
    assert gpm.lambda_init(14.0, 7.0) == pytest.approx(2e-3)


def test_mu_compound_growth():
    lam = 1.0
    for _ in range(100):
        lam *= 1.02
    assert lam == pytest.approx(1.02**100)
    assert lam == pytest.approx(7.2446, rel=1e-4)


def test_mu_respects_bounds():
    cfg = gpm.GpConfig()
    for prev, cur in ((1.0, 0.5), (0.5, 0.4999), (0.5, 0.5), (math.inf, 1.0)):
        mu = gpm.mu_from_overflow(prev, cur, cfg)
        assert cfg.mu_min <= mu <= cfg.mu_max


def test_select_flow_thresholds():
    k = make_kind("c", 2, 2, [("p", 0, 0)])
    km_small = make_kind("m", 60, 58, [("p", 0, 0)])
    d = make_design([k, km_small], [k, km_small],
                    [("a", "c", False), ("m0", "m", True)],
                    [("n", [(0, "p"), (1, "p")])],
                    die=(100, 96), rows=(2, 2))
    # bottom-die macro area 60*58 = 3480 over 9600 -> 0.3625
    assert gpm.select_flow(d) == "3d"
    km_big = make_kind("m", 96, 88, [("p", 0, 0)])
    d2 = make_design([k, km_big], [k, km_big],
                     [("a", "c", False), ("m0", "m", True)],
                     [("n", [(0, "p"), (1, "p")])],
                     die=(100, 96), rows=(2, 2))
    assert d2.r_ma > 0.5
    assert gpm.select_flow(d2) == "2d"


def test_select_flow_boundary_inclusive():
    k = make_kind("c", 2, 2, [("p", 0, 0)])
    km = make_kind("m", 96, 50, [("p", 0, 0)])
    d = make_design([k, km], [k, km],
                    [("a", "c", False), ("m0", "m", True)],
                    [("n", [(0, "p"), (1, "p")])],
                    die=(96, 100), rows=(2, 2))
    assert d.r_ma == pytest.approx(0.5)
    assert gpm.select_flow(d) == "2d"


def test_alpha_published_fit_dominates_at_scale():
    # production-like geometry: dx >> dz, the fitted formula wins the floor
    k = make_kind("c", 2, 33, [("p", 0, 0)])
    d = make_design([k], [k], [("a", "c", False)], [],
                    die=(52800, 52800), rows=(33, 48), hbt=(92, 10, 10.0))
    cfg = gpm.GpConfig()
    dz = 8 * (52800 / 512)  # fine grid
    eta = 2 * 92 / (33 + 48)
    want = 3.5e-3 * (52800 * eta**2 / dz) * math.log(90 * 10 * eta - 1)
    assert gpm.alpha_value(d, dz, cfg) == pytest.approx(want)


def test_alpha_guard_clamps_log_argument():
    k = make_kind("c", 2, 33, [("p", 0, 0)])
    d = make_design([k], [k], [("a", "c", False)], [],
                    die=(528, 528), rows=(33, 48), hbt=(1, 0, 0.0))
    cfg = gpm.GpConfig()
    assert gpm.alpha_value(d, 100.0, cfg) >= 0.0  # no domain error at beta=0


def test_nesterov_zero_gradient_no_move():
    opt = gpm.NesterovOptimizer(np.array([1.0, 2.0]))
    out = opt.advance(np.zeros(2))
    assert np.array_equal(out, [1.0, 2.0])


def test_nesterov_quadratic_convergence():
    # f(x) = 0.5 (x-t)' D (x-t), closed-form minimizer t
    rng = np.random.default_rng(1)
    t = rng.uniform(-5, 5, 8)
    d = rng.uniform(0.5, 4.0, 8)
    opt = gpm.NesterovOptimizer(np.zeros(8))
    x = opt.u
    for it in range(200):
        g = d * (opt.v - t)
        x = opt.advance(g, step_scale=1.0)
        if np.abs(x - t).max() < 1e-8:
            break
    assert np.abs(x - t).max() < 1e-6
    assert it < 199


def test_nesterov_projection_clamps():
    lo = 1.0

    def proj(p):
        return np.maximum(p, lo)

    opt = gpm.NesterovOptimizer(np.array([2.0]), project=proj)
    out = opt.advance(np.array([100.0]), step_scale=1.0)
    assert out[0] == lo  # pushed below the floor -> exactly at the floor


def _mixed_design(seed=0, n=60):
    return gen_design(SynthSpec(n_insts=n, n_macros=2, r_ma=0.25, seed=seed))


def assemble_bundle(design, cfg, seed=0, lam=0.0):
    rng = np.random.default_rng(seed)
    grid = gpm.choose_grid(design, cfg)
    state = gpm.init_state(design, grid, cfg, rng)
    state.fillers = gpm.make_fillers(design, grid, rng)
    prob = gpm.Gp3dProblem(design, grid, state.fillers, cfg, state.rot)
    pos = np.zeros((prob.n_obj, 3))
    pos[: prob.n_inst] = np.c_[state.x, state.y, state.z]
    pos[prob.n_inst:] = np.c_[state.fillers.x, state.fillers.y, state.fillers.z]
    bundle, ovfl, wlx, ncross = prob.evaluate(pos, lam, grid.db)
    return prob, pos, bundle


def test_assemble_lambda_zero_pure_wirelength():
    d = _mixed_design()
    cfg = gpm.GpConfig(seed=0)
    prob, pos, bundle = assemble_bundle(d, cfg, lam=0.0)
    assert np.allclose(bundle.total, bundle.wl_grad)
    # fillers receive no wirelength force
    assert np.allclose(bundle.wl_grad[prob.n_inst:], 0.0)


def test_assemble_fillers_z_frozen():
    d = _mixed_design()
    cfg = gpm.GpConfig(seed=0)
    prob, pos, bundle = assemble_bundle(d, cfg, lam=1.0)
    assert np.allclose(bundle.dens_grad[prob.n_inst:, 2], 0.0)


def test_assemble_descent_direction_probe():
    # moving a small step against the preconditioned gradient shrinks the
    # objective for nearly all random states
    d = _mixed_design()
    cfg = gpm.GpConfig(seed=0)
    rng = np.random.default_rng(3)
    grid = gpm.choose_grid(d, cfg)
    state = gpm.init_state(d, grid, cfg, rng)
    state.fillers = gpm.make_fillers(d, grid, rng)
    prob = gpm.Gp3dProblem(d, grid, state.fillers, cfg, state.rot)
    lam = 1e-5
    hits = 0
    trials = 20
    for _ in range(trials):
        pos = np.zeros((prob.n_obj, 3))
        pos[:, 0] = rng.uniform(20, grid.dx - 20, prob.n_obj)
        pos[:, 1] = rng.uniform(20, grid.dy - 20, prob.n_obj)
        pos[:, 2] = rng.uniform(grid.dz / 4, 3 * grid.dz / 4, prob.n_obj)
        pos = prob.project(pos)
        bundle, *_ = prob.evaluate(pos, lam, grid.db)
        pre, _ = gpm.precondition(bundle.total, lam, prob.cloud(pos).charge,
                                  prob.degree_obj, prob.is_macro_obj)
        step = 1e-3 * grid.wb / max(np.abs(pre).max(), 1e-12)
        bundle2, *_ = prob.evaluate(prob.project(pos - step * pre), lam, grid.db)
        hits += bundle2.value < bundle.value
    assert hits >= 0.95 * trials


def test_run_gp3d_single_instance():
    k = make_kind("c", 4, 4, [("p", 0, 0)])
    d = make_design([k], [k], [("a", "c", False)], [("n", [(0, "p")])],
                    die=(64, 64), rows=(4, 4))
    cfg = gpm.GpConfig(seed=1, max_iters=50)
    rng = np.random.default_rng(1)
    grid = gpm.choose_grid(d, cfg)
    state = gpm.init_state(d, grid, cfg, rng)
    state, info = gpm.run_gp3d(d, state, cfg, grid=grid, rng=rng)
    assert info.final_overflow <= cfg.stop_overflow
    assert info.iterations <= 3
    assert 2 <= state.x[0] <= 62
    assert state.z[0] in (grid.dz / 4, 3 * grid.dz / 4)


def test_run_gp3d_rounds_z_and_preserves_crossings():
    d = _mixed_design(seed=4, n=50)
    cfg = gpm.GpConfig(seed=2, max_iters=300)
    rng = np.random.default_rng(2)
    grid = gpm.choose_grid(d, cfg)
    state = gpm.init_state(d, grid, cfg, rng)
    state, info = gpm.run_gp3d(d, state, cfg, grid=grid, rng=rng)
    assert set(np.unique(state.z)) <= {grid.dz / 4, 3 * grid.dz / 4}
    delta = partition_from_z(state.z, grid.dz)
    assert set(np.unique(delta)) <= {0, 1}


def test_run_gp2d_no_crossing_nets_decoupled():
    k = make_kind("c", 4, 4, [("p", 0, 0), ("q", 1, 0)])
    d = make_design(
        [k], [k],
        [("a", "c", False), ("b", "c", False), ("c0", "c", False), ("d", "c", False)],
        [("n0", [(0, "p"), (1, "q")]), ("n1", [(2, "p"), (3, "q")])],
        die=(64, 64), rows=(4, 4),
    )
    cfg = gpm.GpConfig(seed=1, max_iters=120)
    rng = np.random.default_rng(1)
    dz = 8.0
    from place3d.model import PlacementState

    state = PlacementState(
        x=np.array([20.0, 30.0, 25.0, 35.0]), y=np.full(4, 32.0),
        z=np.array([6.0, 6.0, 2.0, 2.0]), rot=np.zeros(4, dtype=int), dz=dz,
    )
    state, info, hbts = gpm.run_gp2d_multi(d, state, cfg, rng=rng)
    assert hbts == {}
    assert info.final_overflow <= cfg.stop_overflow


def test_run_gp2d_hbt_converges_to_optimal_region():
    k = make_kind("c", 4, 4, [("p", 0, 0)])
    d = make_design(
        [k], [k], [("a", "c", False), ("b", "c", False)],
        [("n", [(0, "p"), (1, "p")])], die=(64, 64), rows=(4, 4), hbt=(2, 0, 10.0),
    )
    from place3d.model import PlacementState

    dz = 8.0
    state = PlacementState(
        x=np.array([16.0, 48.0]), y=np.array([32.0, 32.0]),
        z=np.array([6.0, 2.0]), rot=np.zeros(2, dtype=int), dz=dz,
    )
    cfg = gpm.GpConfig(seed=1, max_iters=150)
    state, info, hbts = gpm.run_gp2d_multi(d, state, cfg,
                                           rng=np.random.default_rng(1))
    assert set(hbts) == {0}
    hx, hy = hbts[0]
    # optimal region on x spans the (possibly moved) pin interval; the
    # terminal must sit between the pins (zero added wirelength)
    lo, hi = sorted([state.x[0], state.x[1]])
    assert lo - 2 <= hx <= hi + 2
    assert abs(hy - 32.0) <= 4.0


def test_gamma_schedule_endpoints():
    grid = type("G", (), {"db": 2.0})()
    cfg = gpm.GpConfig()
    assert gpm.gamma_schedule(grid, 0, 100, cfg) == pytest.approx(8.0)
    assert gpm.gamma_schedule(grid, 99, 100, cfg) == pytest.approx(1.0)
    mid = gpm.gamma_schedule(grid, 50, 100, cfg)
    assert 1.0 < mid < 8.0
