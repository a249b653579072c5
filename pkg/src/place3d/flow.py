"""End-to-end placement flow: global placement, exact macro rotation, a second
global pass (3D or multi-die 2D depending on the macro area ratio),
legalization, detailed placement, and reporting.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import density as dn
from . import dp as dpm
from . import gp as gpm
from . import legalize as lg
from . import rotation as rt
from .check import check_solution
from .model import Design, PlacementState, Solution, evaluate_score, partition_from_z

log = logging.getLogger("place3d")


@dataclass
class FlowReport:
    hpwl: float = 0.0
    hbt_count: int = 0
    raw_score: float = 0.0
    runtime: dict = field(default_factory=dict)
    final_overflow: float = 0.0
    flow_path: str = "3d"
    seed: int = 0
    rotation: dict = field(default_factory=dict)
    diverged: bool = False

    def as_dict(self):
        return {
            "hpwl": self.hpwl,
            "hbt_count": self.hbt_count,
            "raw_score": self.raw_score,
            "runtime": self.runtime,
            "final_overflow": self.final_overflow,
            "flow": self.flow_path,
            "seed": self.seed,
            "rotation": self.rotation,
            "diverged": self.diverged,
        }


class _Timer:
    def __init__(self, report):
        self.report = report

    def __call__(self, name):
        return _Stage(self.report, name)


class _Stage:
    def __init__(self, report, name):
        self.report = report
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.runtime[self.name] = round(time.perf_counter() - self.t0, 4)


def run_flow(design: Design, cfg: gpm.GpConfig | None = None, *,
             skip_rotation=False, collect_fields=False):
    """Run the whole pipeline; returns (solution, report, iteration rows,
    optional field maps)."""
    cfg = cfg or gpm.GpConfig()
    report = FlowReport(seed=cfg.seed)
    stage = _Timer(report)
    rows = []
    rng = np.random.default_rng(cfg.seed)
    fields = None

    grid = gpm.choose_grid(design, cfg)
    state = gpm.init_state(design, grid, cfg, rng)

    with stage("gp3d"):
        state, info = gpm.run_gp3d(design, state, cfg, grid=grid,
                                   iteration_log=rows, rng=rng)
    report.final_overflow = info.final_overflow
    report.diverged |= info.diverged

    with stage("rotation"):
        if skip_rotation or design.macro_ids.size == 0:
            report.rotation = {
                "skipped": True,
                "reason": "flag" if skip_rotation else "no macros",
            }
        else:
            problem = rt.build_problem(design, state)
            quarters, obj = rt.solve_exact(problem)
            base = rt.assignment_objective(problem, np.zeros_like(quarters))
            rt.apply_rotation(state, design, problem.macro_ids, quarters)
            report.rotation = {
                "skipped": False,
                "rotated": int(np.count_nonzero(quarters % 4)),
                "objective_before": base,
                "objective_after": obj,
            }

    path = cfg.flow if cfg.flow in ("2d", "3d") else gpm.select_flow(design)
    report.flow_path = path
    hbt_centers = None
    offset = rows[-1][0] + 1 if rows else 0
    rows2 = []
    with stage("gp_second"):
        if path == "2d":
            state, info2, hbt_centers = gpm.run_gp2d_multi(
                design, state, cfg, iteration_log=rows2, rng=rng
            )
        else:
            state, info2 = gpm.run_gp3d(design, state, cfg, grid=grid,
                                        iteration_log=rows2, rng=rng)
    rows.extend((it + offset, a, b, c) for it, a, b, c in rows2)
    report.final_overflow = info2.final_overflow
    report.diverged |= info2.diverged

    with stage("legalize"):
        lg.rebalance_partition(design, state)
        layout = lg.legalize_placement(design, state)
        legal_state = PlacementState(
            x=layout.x + layout.width / 2,
            y=layout.y + layout.height / 2,
            z=np.where(layout.die == 1, 3 * state.dz / 4, state.dz / 4),
            rot=layout.rot, dz=state.dz,
        )
        centers = lg.insert_hbts(design, legal_state)
        if hbt_centers:
            # seed unplaced crossing nets from the 2D pass where available
            for j, c in hbt_centers.items():
                centers.setdefault(j, c)
        hbt_xy = lg.legalize_hbts(design, centers)

    with stage("detailed"):
        layout, hbt_xy, _ = dpm.refine_with_hbt_remap(design, layout, hbt_xy)

    sol = layout.solution(hbt_xy)
    sol.x = np.array([float(np.floor(v + 0.5)) for v in sol.x])
    sol.y = np.array([float(np.floor(v + 0.5)) for v in sol.y])
    score = evaluate_score(design, sol)
    report.hpwl = score.hpwl
    report.hbt_count = score.hbt_count
    report.raw_score = score.raw_score

    if collect_fields:
        prob = gpm.Gp3dProblem(design, grid, state.fillers, cfg, state.rot)
        pos = np.zeros((prob.n_obj, 3))
        pos[: prob.n_inst] = np.c_[state.x, state.y, state.z]
        pos[prob.n_inst:] = np.c_[state.fillers.x, state.fillers.y, state.fillers.z]
        cloud = prob.cloud(pos)
        rho = dn.accumulate_density(grid, cloud)
        phi, coef = dn.solve_potential(rho, grid)
        ex, ey, ez = dn.electric_field(coef, grid)
        fields = {"rho": rho, "phi": phi, "ex": ex, "ey": ey, "ez": ez, "grid": grid}

    return sol, report, rows, fields


def write_outputs(design, sol, report, rows, out_path, fields=None):
    """Solution text, JSON report, iteration CSV (and optional field dumps)."""
    from .model import write_solution

    with open(out_path, "w") as fh:
        write_solution(design, sol, fh)
    with open(out_path + ".report.json", "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)
    with open(out_path + ".iters.csv", "w") as fh:
        fh.write("iter,wl,hbts,overflow\n")
        for it, wlv, nh, ov in rows:
            fh.write(f"{it},{wlv:.1f},{nh},{ov:.6f}\n")
    if fields:
        grid = fields.pop("grid")
        dn.dump_fields(out_path + ".", grid, fields)


def check_files(design, sol_stream):
    from .model import read_solution

    sol = read_solution(design, sol_stream)
    return check_solution(design, sol)
