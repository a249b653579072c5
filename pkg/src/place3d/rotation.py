"""Exact macro rotation assignment.

After the first global placement the partition is fixed and each crossing net
owns a terminal at its optimal-region center, so the problem reduces to 2D:
choose a quarter-turn per macro minimizing the summed bounding-box extents of
the macro-connected nets.  Rotation of a pin offset (ox, oy) is encoded with
two binary variables (r, r'):

    x = xi + (1 - r - r') ox + (r - r') oy
    y = yi + (r' - r) ox + (1 - r - r') oy

with (0,0), (0,1), (1,1), (1,0) meaning 0, 90, 180, 270 degrees CCW.  Small
instances are solved by exhaustive enumeration (up to 4^8 assignments),
larger ones by depth-first branch and bound with per-net interval bounds.
Ties resolve to the lexicographically smallest (r, r') vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wirelength as wl
from .model import Design, PlacementState, partition_from_z, rotate_offsets

# enumeration digit -> quarter turns, in lexicographic (r, r') order
_LEX_QUARTERS = (0, 1, 3, 2)  # (0,0)->0deg, (0,1)->90, (1,0)->270, (1,1)->180
ENUMERATION_LIMIT = 65536


@dataclass
class ObjectiveNet:
    """One bounding box of the MILP objective (a partial net or a whole net)."""

    fixed_x: np.ndarray
    fixed_y: np.ndarray
    macro_slot: np.ndarray  # index into the problem's macro list
    macro_ox: np.ndarray  # current effective offsets (pre-rotation applied)
    macro_oy: np.ndarray


@dataclass
class RotationProblem:
    macro_ids: np.ndarray  # design instance indices, one slot per macro
    macro_x: np.ndarray
    macro_y: np.ndarray
    nets: list[ObjectiveNet]

    @property
    def n_macros(self):
        return len(self.macro_ids)


def build_problem(design: Design, state: PlacementState) -> RotationProblem:
    """Extract the rotation MILP from a partitioned placement.

    Crossing nets contribute their top and bottom partial nets separately,
    each including the net's terminal (at the optimal-region center) as a
    fixed pin.  Only nets touching a macro are considered.
    """
    arr = design.arrays()
    delta = partition_from_z(state.z, state.dz)
    centers = wl.optimal_hbt_centers(
        arr, state.x, state.y, state.z, state.rot, state.dz
    )
    macro_ids = design.macro_ids
    slot_of = {int(i): s for s, i in enumerate(macro_ids)}
    q = state.rot[arr.pin_inst]
    rx_t, ry_t = rotate_offsets(arr.ox_top, arr.oy_top, q)
    rx_b, ry_b = rotate_offsets(arr.ox_bot, arr.oy_bot, q)
    pin_top = delta[arr.pin_inst] == 1
    eff_ox = np.where(pin_top, rx_t, rx_b)
    eff_oy = np.where(pin_top, ry_t, ry_b)

    nets = []
    for j in design.macro_net_ids:
        lo, hi = arr.net_ptr[j], arr.net_ptr[j + 1]
        pins = np.arange(lo, hi)
        sides = [pins] if int(j) not in centers else [
            pins[pin_top[lo:hi]], pins[~pin_top[lo:hi]]
        ]
        for side in sides:
            fixed_x, fixed_y, ms, mox, moy = [], [], [], [], []
            if int(j) in centers:
                fixed_x.append(centers[int(j)][0])
                fixed_y.append(centers[int(j)][1])
            for p in side:
                i = int(arr.pin_inst[p])
                if i in slot_of:
                    ms.append(slot_of[i])
                    mox.append(eff_ox[p])
                    moy.append(eff_oy[p])
                else:
                    fixed_x.append(state.x[i] + eff_ox[p])
                    fixed_y.append(state.y[i] + eff_oy[p])
            nets.append(
                ObjectiveNet(
                    np.asarray(fixed_x, float), np.asarray(fixed_y, float),
                    np.asarray(ms, np.int64), np.asarray(mox, float),
                    np.asarray(moy, float),
                )
            )
    return RotationProblem(
        macro_ids=macro_ids,
        macro_x=state.x[macro_ids].copy(),
        macro_y=state.y[macro_ids].copy(),
        nets=nets,
    )


def _pin_candidates(problem: ObjectiveNet, macro_x, macro_y):
    """Per macro pin: the 4 candidate coordinates in enumeration-digit order."""
    cx = []
    cy = []
    for s, ox, oy in zip(problem.macro_slot, problem.macro_ox, problem.macro_oy):
        x0, y0 = macro_x[s], macro_y[s]
        per_x, per_y = [], []
        for qd in _LEX_QUARTERS:
            rx, ry = rotate_offsets(ox, oy, qd)
            per_x.append(x0 + float(rx))
            per_y.append(y0 + float(ry))
        cx.append(per_x)
        cy.append(per_y)
    return np.asarray(cx, float).reshape(-1, 4), np.asarray(cy, float).reshape(-1, 4)


def assignment_objective(problem: RotationProblem, quarters):
    """Sum of per-net (x span + y span) for a fixed rotation assignment."""
    quarters = np.asarray(quarters)
    total = 0.0
    for net in problem.nets:
        for fixed, off_sel in (
            (net.fixed_x, 0),
            (net.fixed_y, 1),
        ):
            coords = list(fixed)
            for s, ox, oy in zip(net.macro_slot, net.macro_ox, net.macro_oy):
                rx, ry = rotate_offsets(ox, oy, int(quarters[s]))
                base = problem.macro_x[s] if off_sel == 0 else problem.macro_y[s]
                coords.append(base + float(rx if off_sel == 0 else ry))
            if len(coords) > 1:
                total += max(coords) - min(coords)
    return total


def _solve_enumerate(problem: RotationProblem):
    m = problem.n_macros
    n_assign = 4**m
    digits = np.zeros((n_assign, m), dtype=np.int8)
    idx = np.arange(n_assign)
    for s in range(m):
        digits[:, m - 1 - s] = (idx >> (2 * s)) & 3
    obj = np.zeros(n_assign)
    for net in problem.nets:
        cx, cy = _pin_candidates(net, problem.macro_x, problem.macro_y)
        for fixed, cand in ((net.fixed_x, cx), (net.fixed_y, cy)):
            if len(fixed) + len(cand) <= 1:
                continue
            if len(fixed):
                hi = np.full(n_assign, fixed.max())
                lo = np.full(n_assign, fixed.min())
            else:
                hi = np.full(n_assign, -np.inf)
                lo = np.full(n_assign, np.inf)
            for p in range(cand.shape[0]):
                c = cand[p, digits[:, net.macro_slot[p]]]
                np.maximum(hi, c, out=hi)
                np.minimum(lo, c, out=lo)
            obj += hi - lo
    best = int(np.argmin(obj))  # first minimum = lexicographically smallest
    return np.array(
        [_LEX_QUARTERS[d] for d in digits[best]], dtype=np.int64
    ), float(obj[best])


def _solve_branch_and_bound(problem: RotationProblem):
    m = problem.n_macros
    cands = [
        _pin_candidates(net, problem.macro_x, problem.macro_y)
        for net in problem.nets
    ]

    def bound(assigned):
        """Interval lower bound: any feasible span covers one candidate per pin."""
        total = 0.0
        for net, (cx, cy) in zip(problem.nets, cands):
            for fixed, cand in ((net.fixed_x, cx), (net.fixed_y, cy)):
                if len(fixed) + len(cand) <= 1:
                    continue
                los, his = list(fixed), list(fixed)
                for p in range(cand.shape[0]):
                    s = net.macro_slot[p]
                    if assigned[s] >= 0:
                        v = cand[p, assigned[s]]
                        los.append(v)
                        his.append(v)
                    else:
                        los.append(cand[p].min())
                        his.append(cand[p].max())
                total += max(0.0, max(los) - min(his))
        return total

    best_obj = np.inf
    best_digits = None
    assigned = np.full(m, -1, dtype=np.int64)

    def dfs(depth):
        nonlocal best_obj, best_digits
        if depth == m:
            obj = assignment_objective(
                problem, [_LEX_QUARTERS[d] for d in assigned]
            )
            if obj < best_obj:
                best_obj = obj
                best_digits = assigned.copy()
            return
        for d in range(4):
            assigned[depth] = d
            if bound(assigned) < best_obj:
                dfs(depth + 1)
        assigned[depth] = -1

    dfs(0)
    return np.array(
        [_LEX_QUARTERS[d] for d in best_digits], dtype=np.int64
    ), float(best_obj)


def solve_exact(problem: RotationProblem):
    """Optimal quarter-turn per macro (aligned with problem.macro_ids)."""
    if problem.n_macros == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    if 4**problem.n_macros <= ENUMERATION_LIMIT:
        return _solve_enumerate(problem)
    return _solve_branch_and_bound(problem)


def apply_rotation(state: PlacementState, design: Design, macro_ids, quarters):
    """Compose the assigned quarter turns into the state (additive mod 360)."""
    quarters = np.asarray(quarters)
    for i, q in zip(np.asarray(macro_ids), quarters):
        if q % 4 and not design.insts[int(i)].is_macro:
            raise ValueError(f"rotation applied to standard cell {design.insts[int(i)].name}")
        state.rot[int(i)] = (state.rot[int(i)] + int(q)) % 4
    return state
