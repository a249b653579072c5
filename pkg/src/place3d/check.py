"""Independent solution validation (built on the data model only).

Checks the placement constraints: no overlaps per die, row/site alignment of
cells, die bounds, per-die utilization, exactly one terminal per crossing net,
terminal spacing, and legal rotations.  Recomputes the score from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Design, Solution, evaluate_score, rotated_dims


@dataclass
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.message}"


@dataclass
class CheckReport:
    violations: list[Violation] = field(default_factory=list)
    hpwl: float = 0.0
    hbt_count: int = 0
    raw_score: float = 0.0

    @property
    def passed(self):
        return not self.violations

    def as_dict(self):
        return {
            "passed": self.passed,
            "violations": [str(v) for v in self.violations],
            "hpwl": self.hpwl,
            "hbt_count": self.hbt_count,
            "raw_score": self.raw_score,
        }


def _overlap_pairs(boxes, bucket):
    """Spatial-hash overlap detection; boxes are (x0, x1, y0, y1, id)."""
    grid = {}
    for b in boxes:
        i0 = int(b[0] // bucket)
        i1 = int(b[1] // bucket)
        j0 = int(b[2] // bucket)
        j1 = int(b[3] // bucket)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                grid.setdefault((i, j), []).append(b)
    seen = set()
    eps = 1e-9
    for cell in grid.values():
        for a in range(len(cell)):
            for c in range(a + 1, len(cell)):
                b1, b2 = cell[a], cell[c]
                key = (min(b1[4], b2[4]), max(b1[4], b2[4]))
                if key in seen:
                    continue
                if (b1[0] < b2[1] - eps and b2[0] < b1[1] - eps
                        and b1[2] < b2[3] - eps and b2[2] < b1[3] - eps):
                    seen.add(key)
                    yield b1, b2


def check_solution(design: Design, sol: Solution, tol=1e-6) -> CheckReport:
    rep = CheckReport()
    die = design.die
    bad = rep.violations.append

    boxes = {0: [], 1: []}
    area = {0: 0.0, 1: 0.0}
    for inst in design.insts:
        i = inst.index
        d = int(sol.die[i])
        tech = design.tech_top if d == 1 else design.tech_bottom
        kind = tech[inst.kind]
        q = int(sol.rot[i]) % 4
        if not inst.is_macro and q != 0:
            bad(Violation("rotation", f"cell {inst.name} rotated {q * 90} deg"))
        w, h = rotated_dims(kind.width, kind.height, q)
        w, h = float(w), float(h)
        x0, y0 = float(sol.x[i]), float(sol.y[i])
        if x0 < -tol or y0 < -tol or x0 + w > die.width + tol or y0 + h > die.height + tol:
            bad(Violation("bounds", f"{inst.name} at ({x0},{y0}) leaves the die"))
        if not inst.is_macro:
            rh = die.row_height(d)
            if abs(y0 / rh - round(y0 / rh)) > tol:
                bad(Violation("row", f"cell {inst.name} y={y0} off the row grid ({rh})"))
            sw = die.site_width
            if abs(x0 / sw - round(x0 / sw)) > tol:
                bad(Violation("site", f"cell {inst.name} x={x0} off the site grid"))
        boxes[d].append((x0, x0 + w, y0, y0 + h, i))
        area[d] += w * h

    bucket = max(die.width, die.height) / 32
    for d in (0, 1):
        for b1, b2 in _overlap_pairs(boxes[d], bucket):
            n1 = design.insts[b1[4]].name
            n2 = design.insts[b2[4]].name
            bad(Violation(
                "overlap",
                f"die {d}: {n1} ({b1[0]},{b1[2]}) overlaps {n2} ({b2[0]},{b2[2]})",
            ))

    for d in (0, 1):
        cap = die.max_util(d) * die.area
        if area[d] > cap * (1 + 1e-9) + tol:
            bad(Violation(
                "utilization",
                f"die {d}: area {area[d]:.0f} exceeds cap {cap:.0f}",
            ))

    # terminals: one per crossing net, none elsewhere, spaced and in bounds
    pitch = design.hbt.pitch
    min_cc = pitch + design.hbt.spacing
    for net in design.nets:
        dies = {int(sol.die[i]) for i, _ in net.pins}
        crossing = len(dies) == 2
        has = net.index in sol.hbt_xy
        if crossing and not has:
            bad(Violation("hbt", f"crossing net {net.name} has no terminal"))
        if not crossing and has:
            bad(Violation("hbt", f"single-die net {net.name} carries a terminal"))
    hbt_boxes = []
    for j, (hx, hy) in sorted(sol.hbt_xy.items()):
        if hx < -tol or hy < -tol or hx + pitch > die.width + tol or hy + pitch > die.height + tol:
            bad(Violation("hbt-bounds", f"terminal of {design.nets[j].name} leaves the die"))
        hbt_boxes.append((hx, hx + min_cc, hy, hy + min_cc, j))
    for b1, b2 in _overlap_pairs(hbt_boxes, max(min_cc * 4, 1.0)):
        dx = abs(b1[0] - b2[0])
        dy_ = abs(b1[2] - b2[2])
        if max(dx, dy_) < min_cc - tol:
            bad(Violation(
                "hbt-spacing",
                f"terminals of {design.nets[b1[4]].name} and {design.nets[b2[4]].name}"
                f" spaced {max(dx, dy_)} < {min_cc}",
            ))

    score = evaluate_score(design, sol, allow_illegal=True)
    rep.hpwl = score.hpwl
    rep.hbt_count = score.hbt_count
    rep.raw_score = score.raw_score
    return rep
