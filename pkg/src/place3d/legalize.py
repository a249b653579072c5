"""Die-by-die legalization.

Order of operations per die: macros first (constraint-graph overlap removal
with displacement polish, snapped to rows and sites), then standard cells
(Tetris row assignment + Abacus per-segment refinement around the macro
blockages), finally bonding terminals on a padded virtual grid.

All outputs are lower-left corners on integer database units when the inputs
are integral (sites, row heights, terminal pitch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import wirelength as wl
from .model import Design, PlacementState, Solution, partition_from_z, rotated_dims


class LegalizationError(RuntimeError):
    pass


def _snap(v, step):
    return round(v / step) * step


# ---------------------------------------------------------------------------
# terminals
# ---------------------------------------------------------------------------


def insert_hbts(design: Design, state: PlacementState):
    """One terminal per crossing net, centered in its optimal region."""
    arr = design.arrays()
    return wl.optimal_hbt_centers(
        arr, state.x, state.y, state.z, state.rot, state.dz
    )


def hbt_grid(design: Design):
    """Virtual terminal grid: integer pitch ceil(w'+s'), corner margin
    ceil(s'/2) inside each grid cell."""
    pitch = math.ceil(design.hbt.pitch + design.hbt.spacing)
    margin = math.ceil(design.hbt.spacing / 2)
    ngx = int(design.die.width // pitch)
    ngy = int(design.die.height // pitch)
    return pitch, margin, ngx, ngy


def legalize_hbts(design: Design, centers: dict, net_degree=None):
    """Snap terminal centers to the padded grid, greedily by net degree.

    Returns {net index: lower-left corner of the w' x w' terminal}.
    """
    pitch, margin, ngx, ngy = hbt_grid(design)
    if len(centers) > ngx * ngy:
        raise LegalizationError(
            f"{len(centers)} terminals exceed the {ngx}x{ngy} grid"
        )
    if net_degree is None:
        net_degree = {j: len(design.nets[j].pins) for j in centers}
    order = sorted(centers, key=lambda j: (-net_degree.get(j, 0), j))
    taken = set()
    out = {}
    max_ring = ngx + ngy + 1
    for j in order:
        cx, cy = centers[j]
        ti = int(np.clip(round((cx - pitch / 2) / pitch), 0, max(ngx - 1, 0)))
        tj = int(np.clip(round((cy - pitch / 2) / pitch), 0, max(ngy - 1, 0)))
        spot = None
        for r in range(max_ring):
            ring = []
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if max(abs(di), abs(dj)) != r:
                        continue
                    i2, j2 = ti + di, tj + dj
                    if 0 <= i2 < ngx and 0 <= j2 < ngy and (i2, j2) not in taken:
                        ring.append((di * di + dj * dj, i2, j2))
            if ring:
                spot = min(ring)[1:]
                break
        if spot is None:
            raise LegalizationError("no free terminal grid cell")
        taken.add(spot)
        out[j] = (spot[0] * pitch + margin, spot[1] * pitch + margin)
    return out


# ---------------------------------------------------------------------------
# macros
# ---------------------------------------------------------------------------


def _boxes_overlap(x, y, w, h, i, j, eps=1e-9):
    return (
        x[i] < x[j] + w[j] - eps and x[j] < x[i] + w[i] - eps
        and y[i] < y[j] + h[j] - eps and y[j] < y[i] + h[i] - eps
    )


def _snap_macro(x, y, w, h, die_w, die_h, row_h, site):
    x = min(max(_snap(x, site), 0.0), die_w - w)
    y = min(max(_snap(y, row_h), 0.0), max(die_h - h, 0.0))
    # keep the top edge inside even when the height is not a row multiple
    if y + h > die_h:
        y = math.floor((die_h - h) / row_h) * row_h
    return x, y


def _cluster_positions(des, widths, lo, hi, step):
    """Minimal total quadratic displacement of an ordered chain of boxes
    within [lo, hi]: pooled-adjacent-violators with widths, then snapping."""
    clusters = []  # [e, q, w, first, last]
    for k, (d, cw) in enumerate(zip(des, widths)):
        clusters.append([1.0, d, cw, k, k])
        while len(clusters) > 1:
            prev, cur = clusters[-2], clusters[-1]
            prev_pos = min(max(prev[1] / prev[0], lo), max(hi - prev[2], lo))
            cur_pos = min(max(cur[1] / cur[0], lo), max(hi - cur[2], lo))
            if prev_pos + prev[2] <= cur_pos + 1e-12:
                break
            prev[1] += cur[1] - cur[0] * prev[2]
            prev[0] += cur[0]
            prev[2] += cur[2]
            prev[4] = cur[4]
            clusters.pop()
    out = np.zeros(len(des))
    for cl in clusters:
        pos = min(max(cl[1] / cl[0], lo), max(hi - cl[2], lo))
        pos = min(max(_snap(pos, step), math.ceil(lo / step - 1e-9) * step),
                  math.floor((hi - cl[2]) / step + 1e-9) * step)
        for k in range(cl[3], cl[4] + 1):
            out[k] = pos
            pos += widths[k]
    prev_end = lo
    for k in range(len(out)):  # snapping guard
        if out[k] < prev_end - 1e-12:
            out[k] = prev_end
        prev_end = out[k] + widths[k]
    return out


def legalize_macros(die_w, die_h, row_h, site, des_x, des_y, w, h, max_passes=40):
    """Overlap-free macro placement with small displacement.

    Per overlapping pair the separating direction needing the smaller push
    picks the constraint axis; connected groups are compacted along that axis
    by quadratic-displacement chain clustering, iterating until clean.  A
    bottom-left rescue pass handles rare leftovers.  Raises LegalizationError
    when the macros cannot fit.
    """
    n = len(des_x)
    if n == 0:
        return np.zeros(0), np.zeros(0)
    if float(np.sum(np.asarray(w) * np.asarray(h))) > die_w * die_h + 1e-9:
        raise LegalizationError("total macro area exceeds the die")
    for i in range(n):
        if w[i] > die_w + 1e-9 or h[i] > die_h + 1e-9:
            raise LegalizationError("macro larger than the die")
    x = np.zeros(n)
    y = np.zeros(n)
    for i in range(n):
        x[i], y[i] = _snap_macro(des_x[i], des_y[i], w[i], h[i], die_w, die_h, row_h, site)

    def overlaps():
        pairs = []
        idx = sorted(range(n), key=lambda i: (x[i], i))
        for a in range(n):
            for b in range(a + 1, n):
                i, j = idx[a], idx[b]
                if x[j] >= x[i] + w[i]:
                    break
                if _boxes_overlap(x, y, w, h, i, j):
                    pairs.append((min(i, j), max(i, j)))
        return sorted(pairs)

    def components(pairs):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in pairs:
            parent[find(i)] = find(j)
        groups = {}
        for i, j in pairs:
            groups.setdefault(find(i), set()).update((i, j))
        return [sorted(g) for _, g in sorted(groups.items())]

    for pass_no in range(max_passes):
        pairs = overlaps()
        if not pairs:
            break
        h_pairs, v_pairs = [], []
        for i, j in pairs:
            push_x = (w[i] + w[j]) / 2 - abs((x[i] + w[i] / 2) - (x[j] + w[j] / 2))
            push_y = (h[i] + h[j]) / 2 - abs((y[i] + h[i] / 2) - (y[j] + h[j] / 2))
            # late passes alternate the preferred axis to escape livelock
            prefer_x = push_x <= push_y if pass_no < 10 else (pass_no + i + j) % 2 == 0
            (h_pairs if prefer_x else v_pairs).append((i, j))
        for sel, pos, size, extent, step in (
            (h_pairs, x, w, die_w, site),
            (v_pairs, y, h, die_h, row_h),
        ):
            for group in components(sel):
                order = sorted(group, key=lambda i: (pos[i], i))
                # pad to whole grid steps so stacked members stay aligned
                widths = [math.ceil(size[i] / step - 1e-9) * step for i in order]
                if sum(widths) > extent + 1e-9:
                    continue  # cannot chain on this axis; other axis or rescue
                new = _cluster_positions([pos[i] for i in order], widths, 0.0,
                                         extent, step)
                for i, v in zip(order, new):
                    pos[i] = v

    if overlaps():
        _bottom_left_rescue(x, y, w, h, des_x, des_y, die_w, die_h, row_h, site)
    if overlaps():
        raise LegalizationError("macro legalization failed to converge")

    # displacement polish: single-macro slides toward the desired spot
    for _ in range(3):
        moved = False
        for i in sorted(range(n), key=lambda i: -(w[i] * h[i])):
            for axis, pos, size, extent, des, step in (
                (0, x, w, die_w, des_x, site),
                (1, y, h, die_h, des_y, row_h),
            ):
                lo, hi = 0.0, extent - size[i]
                for j in range(n):
                    if j == i:
                        continue
                    other = (y, h) if axis == 0 else (x, w)
                    if other[0][j] < other[0][i] + other[1][i] - 1e-9 and other[0][i] < other[0][j] + other[1][j] - 1e-9:
                        if pos[j] + size[j] <= pos[i] + 1e-9:
                            lo = max(lo, pos[j] + size[j])
                        elif pos[j] >= pos[i] + size[i] - 1e-9:
                            hi = min(hi, pos[j] - size[i])
                lo_s = math.ceil(lo / step - 1e-9) * step
                hi_s = math.floor(hi / step + 1e-9) * step
                if lo > hi or lo_s > hi_s:
                    continue  # squeezed tight: stay put
                target = min(max(_snap(min(max(des[i], lo), hi), step), lo_s), hi_s)
                if abs(target - pos[i]) > 1e-12:
                    pos[i] = target
                    moved = True
        if not moved:
            break
    if overlaps():
        raise LegalizationError("macro polish produced overlap")
    return x, y


def _bottom_left_rescue(x, y, w, h, des_x, des_y, die_w, die_h, row_h, site):
    """Deterministic repair: re-place everything bottom-left, largest first.

    The last resort trades displacement for packing success: candidates are
    scanned lowest-leftmost first, which packs whenever row-aligned packing
    is possible for these footprints.
    """
    n = len(x)
    order = sorted(range(n), key=lambda i: (-(w[i] * h[i]), i))
    placed = []
    for i in order:
        cand_x = {0.0}
        cand_y = {0.0}
        for j in placed:
            cand_x.update((x[j] + w[j], max(x[j] - w[i], 0.0)))
            cand_y.update((y[j] + h[j], max(y[j] - h[i], 0.0)))
        cand_x.add(min(max(_snap(des_x[i], site), 0), die_w - w[i]))
        cand_y.add(min(max(_snap(des_y[i], row_h), 0), max(die_h - h[i], 0)))
        spot = None
        for cy in sorted(cand_y):
            cy = min(math.ceil(cy / row_h - 1e-9) * row_h, math.floor((die_h - h[i]) / row_h) * row_h)
            if cy < -1e-9:
                continue
            for cx in sorted(cand_x):
                cx = min(math.ceil(cx / site - 1e-9) * site, die_w - w[i])
                if cx < -1e-9:
                    continue
                ok = all(
                    not (cx < x[j] + w[j] - 1e-9 and x[j] < cx + w[i] - 1e-9
                         and cy < y[j] + h[j] - 1e-9 and y[j] < cy + h[i] - 1e-9)
                    for j in placed
                )
                if ok and (spot is None or (cy, cx) < spot):
                    spot = (cy, cx)
            if spot is not None and spot[0] <= cy:
                break  # nothing lower-left can appear in later rows
        if spot is None:
            raise LegalizationError("bottom-left rescue found no spot")
        y[i], x[i] = spot
        placed.append(i)


# ---------------------------------------------------------------------------
# standard cells
# ---------------------------------------------------------------------------


@dataclass
class Segment:
    row: int
    y: float
    x0: float
    x1: float
    cells: list[int] = field(default_factory=list)
    used: float = 0.0

    @property
    def capacity(self):
        return self.x1 - self.x0


def build_segments(die_w, die_h, row_h, site, blockages):
    """Row intervals left free by the macro blockages."""
    n_rows = int(round(die_h / row_h))
    segments = []
    for r in range(n_rows):
        y = r * row_h
        blocked = []
        for bx0, bx1, by0, by1 in blockages:
            if by0 < y + row_h - 1e-9 and by1 > y + 1e-9:
                blocked.append((max(bx0, 0.0), min(bx1, die_w)))
        blocked.sort()
        cur = 0.0
        merged = []
        for b0, b1 in blocked:
            if merged and b0 <= merged[-1][1] + 1e-9:
                merged[-1][1] = max(merged[-1][1], b1)
            else:
                merged.append([b0, b1])
        for b0, b1 in merged + [[die_w, die_w]]:
            x0 = math.ceil(cur / site - 1e-9) * site
            x1 = math.floor(b0 / site + 1e-9) * site
            if x1 - x0 > 1e-9:
                segments.append(Segment(row=r, y=y, x0=x0, x1=x1))
            cur = b1
    return segments


def _abacus_segment(seg: Segment, des_x, widths, site):
    """Classic per-row clustering: minimal total quadratic displacement of the
    committed cell order within [x0, x1], then site snapping."""
    xs = _cluster_positions(des_x, widths, seg.x0, seg.x1, site)
    if len(xs) and xs[-1] + widths[-1] > seg.x1 + 1e-6:
        raise LegalizationError("row segment overfilled")
    return xs


def legalize_cells(die_w, die_h, row_h, site, blockages, ids, des_x, des_y, widths):
    """Tetris row assignment followed by Abacus refinement per segment.

    ``des_*`` are desired lower-left corners; returns (x, y, segments).
    """
    segments = build_segments(die_w, die_h, row_h, site, blockages)
    if not segments:
        if len(ids):
            raise LegalizationError("no free row segments")
        return np.zeros(0), np.zeros(0), segments
    rows = {}
    for si, seg in enumerate(segments):
        rows.setdefault(seg.row, []).append(si)
    n_rows = int(round(die_h / row_h))
    order = sorted(range(len(ids)), key=lambda k: (des_x[k], ids[k]))
    total_cap = sum(seg.capacity for seg in segments)
    demand = float(np.sum(widths)) if len(ids) else 0.0
    # leave headroom per segment so early cells do not saturate popular rows;
    # retry with the full capacity when the headroom cannot fit everything
    targets = sorted({min(1.0, demand / max(total_cap, 1e-9) + 0.15), 1.0})
    members = None
    for fill_target in targets:
        used = {si: 0.0 for si in range(len(segments))}
        trial = {si: [] for si in range(len(segments))}
        ok = True
        for k in order:
            want_row = int(np.clip(des_y[k] // row_h, 0, n_rows - 1))
            best = None
            for dr in range(n_rows):
                cands = []
                for r in (want_row - dr, want_row + dr):
                    if 0 <= r < n_rows and (dr > 0 or r == want_row - dr):
                        cands.extend(rows.get(r, ()))
                for si in cands:
                    seg = segments[si]
                    # any subset with total width <= capacity packs in one
                    # segment, so budget by width sums, estimate x by desire
                    budget = seg.capacity * fill_target
                    if used[si] + widths[k] > max(budget, widths[k]) + 1e-9 \
                            or used[si] + widths[k] > seg.capacity + 1e-9:
                        continue
                    xp = min(max(des_x[k], seg.x0), seg.x1 - widths[k])
                    cost = (xp - des_x[k]) ** 2 + (seg.y - des_y[k]) ** 2
                    if best is None or cost < best[0]:
                        best = (cost, si, xp)
                if best is not None and dr > 0:
                    # nearest feasible row found; farther rows only cost more
                    row_gap = ((dr + 1) * row_h
                               - abs(des_y[k] - want_row * row_h)) ** 2
                    if row_gap > best[0]:
                        break
            if best is None:
                ok = False
                break
            _, si, xp = best
            used[si] += widths[k]
            trial[si].append(k)
        if ok:
            members = trial
            break
    if members is None:
        raise LegalizationError("insufficient row capacity")
    x = np.zeros(len(ids))
    y = np.zeros(len(ids))
    for si, seg in enumerate(segments):
        ks = members[si]
        if not ks:
            continue
        xs = _abacus_segment(
            seg, [des_x[k] for k in ks], [widths[k] for k in ks], site
        )
        for k, xv in zip(ks, xs):
            x[k] = xv
            y[k] = seg.y
        seg.cells = [ids[k] for k in ks]
        seg.used = float(sum(widths[k] for k in ks))
    return x, y, segments


# ---------------------------------------------------------------------------
# whole-placement legalization
# ---------------------------------------------------------------------------


@dataclass
class LegalLayout:
    """Legal corners plus per-die segment occupancy (detailed placement works
    on this view)."""

    x: np.ndarray
    y: np.ndarray
    die: np.ndarray
    rot: np.ndarray
    width: np.ndarray  # rotated, on the instance's die
    height: np.ndarray
    segments: dict[int, list[Segment]]
    macro_boxes: dict[int, list[tuple[float, float, float, float]]]

    def solution(self, hbt_xy):
        return Solution(
            die=self.die.copy(), x=self.x.copy(), y=self.y.copy(),
            rot=self.rot.copy(), hbt_xy=dict(hbt_xy),
        )


def rebalance_partition(design: Design, state: PlacementState):
    """Nudge the partition until both dies respect their utilization caps.

    Global placement enforces utilization through fillers only approximately;
    instances nearest the midplane (cheapest to flip) migrate first.
    """
    arr = design.arrays()
    die = design.die
    delta = partition_from_z(state.z, state.dz)
    for _ in range(design.n_insts + 1):
        wt, ht = rotated_dims(arr.w_top, arr.h_top, state.rot)
        wb, hb = rotated_dims(arr.w_bot, arr.h_bot, state.rot)
        area_top = float((wt * ht)[delta == 1].sum())
        area_bot = float((wb * hb)[delta == 0].sum())
        cap_top = die.max_util_top * die.area
        cap_bot = die.max_util_bottom * die.area
        if area_top <= cap_top and area_bot <= cap_bot:
            return state
        over_top = area_top - cap_top
        over_bot = area_bot - cap_bot
        if over_top > 0 and over_bot > 0:
            raise LegalizationError(
                f"utilization caps unsatisfiable (top over {over_top:.0f},"
                f" bottom over {over_bot:.0f})"
            )
        src = 1 if over_top >= over_bot else 0
        cand = np.flatnonzero(delta == src)
        if not len(cand):
            break
        # prefer cells over macros, then smallest area
        a_src = (wt * ht) if src == 1 else (wb * hb)
        key = np.lexsort((cand, a_src[cand], arr.is_macro[cand]))
        moved = cand[key[0]]
        delta[moved] = 1 - src
        state.z[moved] = 3 * state.dz / 4 if delta[moved] == 1 else state.dz / 4
    raise LegalizationError("utilization rebalancing did not converge")


def legalize_placement(design: Design, state: PlacementState) -> LegalLayout:
    """Legalize macros then cells on each die; returns the legal layout
    (terminals are placed separately)."""
    arr = design.arrays()
    die = design.die
    delta = partition_from_z(state.z, state.dz)
    wt, ht = rotated_dims(arr.w_top, arr.h_top, state.rot)
    wb, hb = rotated_dims(arr.w_bot, arr.h_bot, state.rot)
    width = np.where(delta == 1, wt, wb).astype(float)
    height = np.where(delta == 1, ht, hb).astype(float)
    x = np.zeros(design.n_insts)
    y = np.zeros(design.n_insts)
    segments = {}
    macro_boxes = {}
    for d in (0, 1):
        row_h = die.row_height(d)
        on_die = delta == d
        macros = np.flatnonzero(on_die & arr.is_macro)
        cells = np.flatnonzero(on_die & ~arr.is_macro)
        mx, my = legalize_macros(
            die.width, die.height, row_h, die.site_width,
            state.x[macros] - width[macros] / 2,
            state.y[macros] - height[macros] / 2,
            width[macros], height[macros],
        )
        x[macros], y[macros] = mx, my
        boxes = [
            (mx[k], mx[k] + width[i], my[k], my[k] + height[i])
            for k, i in enumerate(macros)
        ]
        macro_boxes[d] = boxes
        cap = die.max_util_top if d == 1 else die.max_util_bottom
        free = die.area - sum((b[1] - b[0]) * (b[3] - b[2]) for b in boxes)
        need = float((width[cells]).dot(height[cells]))
        if need > free + 1e-9:
            raise LegalizationError(f"die {d}: cell area {need} exceeds free {free}")
        cx, cy, segs = legalize_cells(
            die.width, die.height, row_h, die.site_width,
            [(b[0], b[1], b[2], b[3]) for b in boxes],
            cells.tolist(),
            state.x[cells] - width[cells] / 2,
            state.y[cells] - height[cells] / 2,
            width[cells],
        )
        x[cells], y[cells] = cx, cy
        segments[d] = segs
    return LegalLayout(
        x=x, y=y, die=delta.astype(np.int8), rot=state.rot.copy(),
        width=width, height=height, segments=segments, macro_boxes=macro_boxes,
    )
