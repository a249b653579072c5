import itertools

import numpy as np
import pytest

from place3d import rotation as rt
from place3d.model import PlacementState, rotate_offsets

from conftest import make_design, make_kind


def make_problem(rng, n_macros, n_nets, n_fixed=2, n_mpins=2, span=40):
    nets = []
    for _ in range(n_nets):
        k = int(rng.integers(1, n_mpins + 1))
        nets.append(rt.ObjectiveNet(
            fixed_x=rng.uniform(0, span, n_fixed),
            fixed_y=rng.uniform(0, span, n_fixed),
            macro_slot=rng.integers(0, n_macros, k),
            macro_ox=rng.uniform(-6, 6, k),
            macro_oy=rng.uniform(-6, 6, k),
        ))
    return rt.RotationProblem(
        macro_ids=np.arange(n_macros),
        macro_x=rng.uniform(0, span, n_macros),
        macro_y=rng.uniform(0, span, n_macros),
        nets=nets,
    )


def oracle_best(problem):
    """Independent exhaustive search with direct span evaluation."""
    m = problem.n_macros
    best = None
    rot = {0: (1, 0, 0, 1), 1: (0, -1, 1, 0), 2: (-1, 0, 0, -1), 3: (0, 1, -1, 0)}
    for quarters in itertools.product(range(4), repeat=m):
        total = 0.0
        for net in problem.nets:
            xs = list(net.fixed_x)
            ys = list(net.fixed_y)
            for s, ox, oy in zip(net.macro_slot, net.macro_ox, net.macro_oy):
                a, b, c, d = rot[quarters[s]]
                xs.append(problem.macro_x[s] + a * ox + b * oy)
                ys.append(problem.macro_y[s] + c * ox + d * oy)
            if len(xs) > 1:
                total += max(xs) - min(xs) + max(ys) - min(ys)
        if best is None or total < best[0] - 1e-12:
            best = (total, quarters)
    return best


def test_pin_transform_180():
    # (r, r') = (1, 1): offset (2, 0) lands at (-2, 0)
    rx, ry = rotate_offsets(2.0, 0.0, 2)
    assert (rx, ry) == (-2.0, 0.0)


def test_pin_transform_90_ccw():
    rx, ry = rotate_offsets(3.0, 1.0, 1)
    assert (rx, ry) == (-1.0, 3.0)


def test_single_macro_180_optimal():
    problem = rt.RotationProblem(
        macro_ids=np.array([5]), macro_x=np.array([0.0]), macro_y=np.array([0.0]),
        nets=[rt.ObjectiveNet(
            fixed_x=np.array([-3.0]), fixed_y=np.array([0.0]),
            macro_slot=np.array([0]), macro_ox=np.array([2.0]),
            macro_oy=np.array([0.0]),
        )],
    )
    quarters, obj = rt.solve_exact(problem)
    assert quarters[0] == 2  # 180 degrees
    assert obj == pytest.approx(1.0)
    spans = [rt.assignment_objective(problem, [q]) for q in range(4)]
    assert spans == pytest.approx([5.0, 5.0, 1.0, 5.0])


def test_tie_break_prefers_identity():
    # point-symmetric pin pair: every rotation gives the same objective
    problem = rt.RotationProblem(
        macro_ids=np.array([0]), macro_x=np.array([10.0]), macro_y=np.array([10.0]),
        nets=[rt.ObjectiveNet(
            fixed_x=np.array([0.0]), fixed_y=np.array([0.0]),
            macro_slot=np.array([0, 0]), macro_ox=np.array([2.0, -2.0]),
            macro_oy=np.array([1.0, -1.0]),
        )],
    )
    quarters, _ = rt.solve_exact(problem)
    assert quarters[0] == 0


def test_empty_problem():
    problem = rt.RotationProblem(
        macro_ids=np.zeros(0, dtype=int), macro_x=np.zeros(0),
        macro_y=np.zeros(0), nets=[],
    )
    quarters, obj = rt.solve_exact(problem)
    assert len(quarters) == 0 and obj == 0.0


def test_enumeration_matches_oracle():
    rng = np.random.default_rng(20)
    for trial in range(30):
        m = int(rng.integers(1, 4))
        problem = make_problem(rng, m, int(rng.integers(1, 7)))
        quarters, obj = rt.solve_exact(problem)
        want_obj, want_q = oracle_best(problem)
        assert obj == pytest.approx(want_obj, rel=1e-12)
        assert rt.assignment_objective(problem, quarters) == pytest.approx(want_obj)


def test_up_to_six_macros_matches_oracle():
    rng = np.random.default_rng(21)
    for trial in range(10):
        m = int(rng.integers(4, 7))
        problem = make_problem(rng, m, int(rng.integers(3, 9)))
        quarters, obj = rt.solve_exact(problem)
        want_obj, _ = oracle_best(problem)
        assert obj == pytest.approx(want_obj, rel=1e-12)


def test_branch_and_bound_equals_enumeration(monkeypatch):
    rng = np.random.default_rng(22)
    for trial in range(20):
        problem = make_problem(rng, 4, 6)
        q_enum, obj_enum = rt._solve_enumerate(problem)
        q_bb, obj_bb = rt._solve_branch_and_bound(problem)
        assert obj_bb == pytest.approx(obj_enum, rel=1e-12)
        assert np.array_equal(q_enum, q_bb)  # same lexicographic tie-break


def test_never_worse_than_identity():
    rng = np.random.default_rng(23)
    for trial in range(50):
        problem = make_problem(rng, int(rng.integers(1, 5)), int(rng.integers(1, 8)))
        _, obj = rt.solve_exact(problem)
        assert obj <= rt.assignment_objective(problem, [0] * problem.n_macros) + 1e-12


def _rotation_design():
    kc = make_kind("c", 2, 2, [("p", 0, 0)])
    km = make_kind("m", 8, 4, [("p0", 3, 1), ("p1", -3, -1)])
    return make_design(
        [kc, km], [kc, km],
        [("u0", "c", False), ("u1", "c", False), ("m0", "m", True)],
        [("n0", [(0, "p"), (2, "p0")]), ("n1", [(1, "p"), (2, "p1")])],
        die=(100, 96), rows=(2, 2), hbt=(2, 0, 10.0),
    )


def test_build_problem_no_macros():
    kc = make_kind("c", 2, 2, [("p", 0, 0)])
    d = make_design([kc], [kc], [("a", "c", False), ("b", "c", False)],
                    [("n", [(0, "p"), (1, "p")])], die=(100, 96), rows=(2, 2))
    st = PlacementState(x=np.array([1.0, 5.0]), y=np.array([1.0, 5.0]),
                        z=np.array([1.0, 1.0]), rot=np.zeros(2, dtype=int), dz=4.0)
    problem = rt.build_problem(d, st)
    assert problem.n_macros == 0 and problem.nets == []


def test_build_problem_crossing_net_splits_with_hbt():
    d = _rotation_design()
    # u0 on top with the macro, u1 at the bottom: n1 crosses
    st = PlacementState(
        x=np.array([10.0, 40.0, 20.0]), y=np.array([10.0, 40.0, 20.0]),
        z=np.array([3.0, 1.0, 3.0]), rot=np.zeros(3, dtype=int), dz=4.0,
    )
    problem = rt.build_problem(d, st)
    # n0 single-die (1 objective net), n1 crossing (2 objective nets)
    assert len(problem.nets) == 3
    crossing_sides = [n for n in problem.nets if len(n.fixed_x) and len(n.macro_slot)]
    # the macro-side partial net of n1 carries the terminal as a fixed pin
    assert any(len(n.fixed_x) == 1 and len(n.macro_slot) == 1 for n in problem.nets)


def test_apply_rotation_group_law():
    d = _rotation_design()
    st = PlacementState(x=np.zeros(3), y=np.zeros(3), z=np.zeros(3),
                        rot=np.zeros(3, dtype=int), dz=4.0)
    rt.apply_rotation(st, d, [2], [1])
    rt.apply_rotation(st, d, [2], [1])
    assert st.rot[2] == 2
    rt.apply_rotation(st, d, [2], [0])  # identity leaves it alone
    assert st.rot[2] == 2
    rt.apply_rotation(st, d, [2], [2])
    assert st.rot[2] == 0  # full turn


def test_apply_rotation_rejects_cells():
    d = _rotation_design()
    st = PlacementState(x=np.zeros(3), y=np.zeros(3), z=np.zeros(3),
                        rot=np.zeros(3, dtype=int), dz=4.0)
    with pytest.raises(ValueError, match="standard cell"):
        rt.apply_rotation(st, d, [0], [1])


def test_rotated_footprint_and_area_preserved():
    from place3d.model import rotated_dims

    w, h = rotated_dims(8.0, 4.0, 1)
    assert (w, h) == (4.0, 8.0)
    assert w * h == 32.0
    ox, oy = rotate_offsets(1.0, 0.0, 1)
    assert (ox, oy) == (0.0, 1.0)


def test_nonzero_rotation_improves_through_pipeline():
    # a macro whose pins all sit on its right edge, wired to cells on its
    # left: the solver must turn it 180 degrees, and the fully legalized
    # score must beat the unrotated pipeline
    import numpy as np

    from place3d import dp as dpm
    from place3d import legalize as lg
    from place3d.model import PlacementState, evaluate_score

    kc = make_kind("c", 4, 4, [("p", 0, 0)])
    km = make_kind("m", 20, 20, [(f"e{i}", 9, 2 * i - 3) for i in range(4)])
    insts = [(f"u{i}", "c", False) for i in range(4)] + [("m0", "m", True)]
    nets = [(f"n{i}", [(i, "p"), (4, f"e{i}")]) for i in range(4)]
    d = make_design([kc, km], [kc, km], insts, nets,
                    die=(96, 96), rows=(4, 4), util=(0.9, 0.9), hbt=(2, 1, 10.0))
    dz = 8.0
    base = PlacementState(
        x=np.array([10.0, 10.0, 10.0, 10.0, 60.0]),
        y=np.array([30.0, 40.0, 50.0, 60.0, 46.0]),
        z=np.full(5, dz / 4), rot=np.zeros(5, dtype=int), dz=dz,
    )

    def score_with(state):
        layout = lg.legalize_placement(d, state)
        st = PlacementState(
            x=layout.x + layout.width / 2, y=layout.y + layout.height / 2,
            z=np.where(layout.die == 1, 3 * dz / 4, dz / 4),
            rot=layout.rot, dz=dz,
        )
        hbt = lg.legalize_hbts(d, lg.insert_hbts(d, st))
        layout, hbt, _ = dpm.refine_with_hbt_remap(d, layout, hbt)
        return evaluate_score(d, layout.solution(hbt)).raw_score

    problem = rt.build_problem(d, base.copy())
    quarters, _ = rt.solve_exact(problem)
    assert quarters[0] == 2  # 180 degrees, pins now face the cells
    rotated = base.copy()
    rt.apply_rotation(rotated, d, problem.macro_ids, quarters)
    assert score_with(rotated) < score_with(base.copy())
