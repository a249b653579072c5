"""Detailed placement on legal layouts: windowed reordering, global swap, and
one terminal remap iteration.  Every pass evaluates exact die-to-die HPWL
deltas over the affected nets only and accepts strict improvements, so the
score is non-increasing and legality is preserved by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import legalize as lg
from .model import Design, rotate_offsets


class DpContext:
    """Pin geometry and incidence for exact incremental HPWL on a layout."""

    def __init__(self, design: Design, layout, hbt_xy):
        self.design = design
        self.layout = layout
        arr = design.arrays()
        self.arr = arr
        q = layout.rot[arr.pin_inst]
        rx_t, ry_t = rotate_offsets(arr.ox_top, arr.oy_top, q)
        rx_b, ry_b = rotate_offsets(arr.ox_bot, arr.oy_bot, q)
        on_top = layout.die[arr.pin_inst] == 1
        self.pin_offx = (np.where(on_top, rx_t, rx_b)
                         + layout.width[arr.pin_inst] / 2).tolist()
        self.pin_offy = (np.where(on_top, ry_t, ry_b)
                         + layout.height[arr.pin_inst] / 2).tolist()
        self.pin_top = on_top
        self.pin_top_l = on_top.tolist()
        self.pin_inst_l = arr.pin_inst.tolist()
        self.nets_of = [[] for _ in range(design.n_insts)]
        for p in range(arr.n_pin):
            self.nets_of[arr.pin_inst[p]].append(int(arr.pin_net[p]))
        self.nets_of = [sorted(set(ns)) for ns in self.nets_of]
        self.set_hbts(hbt_xy)

    def set_hbts(self, hbt_xy):
        half = self.design.hbt.pitch / 2
        self.hbt_center = {
            j: (xy[0] + half, xy[1] + half) for j, xy in hbt_xy.items()
        }
        self._cache = None

    def net_hpwl(self, j):
        arr = self.arr
        lo, hi = int(arr.net_ptr[j]), int(arr.net_ptr[j + 1])
        x = self.layout.x
        y = self.layout.y
        hbt = self.hbt_center.get(int(j))
        if hbt is None:
            t = (None, None, None, None)
            b = (None, None, None, None)
        else:
            hx, hy = hbt
            t = (hx, hx, hy, hy)
            b = t
        txl, txh, tyl, tyh = t
        bxl, bxh, byl, byh = b
        t_seen = b_seen = False
        for p in range(lo, hi):
            i = self.pin_inst_l[p]
            px = x[i] + self.pin_offx[p]
            py = y[i] + self.pin_offy[p]
            if self.pin_top_l[p]:
                t_seen = True
                if txl is None:
                    txl = txh = px
                    tyl = tyh = py
                else:
                    if px < txl: txl = px
                    elif px > txh: txh = px
                    if py < tyl: tyl = py
                    elif py > tyh: tyh = py
            else:
                b_seen = True
                if bxl is None:
                    bxl = bxh = px
                    byl = byh = py
                else:
                    if px < bxl: bxl = px
                    elif px > bxh: bxh = px
                    if py < byl: byl = py
                    elif py > byh: byh = py
        spans = 0.0
        if t_seen:
            spans += (txh - txl) + (tyh - tyl)
        if b_seen:
            spans += (bxh - bxl) + (byh - byl)
        return spans

    @property
    def cache(self):
        if self._cache is None:
            self._cache = np.array(
                [self.net_hpwl(j) for j in range(self.design.n_nets)]
            )
        return self._cache

    def cached_sum(self, nets):
        c = self.cache
        return float(sum(c[j] for j in nets))

    def refresh(self, nets):
        """Recompute and store the given nets; returns their new sum."""
        c = self.cache
        total = 0.0
        for j in nets:
            v = self.net_hpwl(j)
            c[j] = v
            total += v
        return total

    def hpwl_of(self, nets):
        return sum(self.net_hpwl(j) for j in nets)

    def total_hpwl(self):
        return float(self.cache.sum())


def local_reorder(ctx: DpContext, die, k=3):
    """Exhaustive permutation of k consecutive same-row cells per window,
    packed from the window's left edge; keeps the best of {original, perms}."""
    if k <= 1:
        return 0.0
    layout = ctx.layout
    gain = 0.0
    for seg in layout.segments[die]:
        cells = seg.cells
        for s in range(max(len(cells) - k + 1, 0)):
            win = cells[s: s + k]
            nets = sorted(set(n for i in win for n in ctx.nets_of[i]))
            if not nets:
                continue
            before = ctx.cached_sum(nets)
            orig_x = [layout.x[i] for i in win]
            start = min(orig_x)
            best = (before, None)
            for perm in itertools.permutations(win):
                pos = start
                for i in perm:
                    layout.x[i] = pos
                    pos += layout.width[i]
                cost = ctx.hpwl_of(nets)
                if cost < best[0] - 1e-12:
                    best = (cost, perm)
            if best[1] is None:
                for i, xv in zip(win, orig_x):
                    layout.x[i] = xv
            else:
                perm = best[1]
                pos = start
                for i in perm:
                    layout.x[i] = pos
                    pos += layout.width[i]
                seg.cells[s: s + k] = list(perm)
                ctx.refresh(nets)
                gain += before - best[0]
    return gain


def _segment_gaps(layout, seg):
    """Free intervals of a segment from its current member positions."""
    xs = sorted((layout.x[i], layout.x[i] + layout.width[i]) for i in seg.cells)
    gaps = []
    cur = seg.x0
    for lo, hi in xs:
        if lo - cur > 1e-9:
            gaps.append((cur, lo))
        cur = max(cur, hi)
    if seg.x1 - cur > 1e-9:
        gaps.append((cur, seg.x1))
    return gaps


def global_swap(ctx: DpContext, die, max_candidates=6):
    """Equal-width pairwise swaps plus moves into free gaps, strict-improve
    only, deterministic scan order."""
    layout = ctx.layout
    design = ctx.design
    arr = ctx.arr
    site = design.die.site_width
    cells = [
        i for i in range(design.n_insts)
        if layout.die[i] == die and not arr.is_macro[i] and ctx.nets_of[i]
    ]
    by_width = {}
    for i in cells:
        by_width.setdefault(float(layout.width[i]), []).append(i)
    width_arrays = {wv: np.asarray(ids) for wv, ids in by_width.items()}
    seg_of = {}
    segs_by_row = {}
    for seg in layout.segments[die]:
        segs_by_row.setdefault(seg.row, []).append(seg)
        for i in seg.cells:
            seg_of[i] = seg
    gain = 0.0
    for i in cells:
        nets_i = ctx.nets_of[i]
        # target: center of the other pins' bounding box across i's nets
        xs, ys = [], []
        for j in nets_i:
            lo, hi = arr.net_ptr[j], arr.net_ptr[j + 1]
            for p in range(lo, hi):
                o = int(arr.pin_inst[p])
                if o != i:
                    xs.append(layout.x[o] + ctx.pin_offx[p])
                    ys.append(layout.y[o] + ctx.pin_offy[p])
        if not xs:
            continue
        tx = (min(xs) + max(xs)) / 2
        ty = (min(ys) + max(ys)) / 2
        peers = width_arrays.get(float(layout.width[i]), np.zeros(0, dtype=int))
        if len(peers) > 1:
            dist = np.abs(layout.x[peers] - tx) + np.abs(layout.y[peers] - ty)
            k = min(max_candidates + 1, len(peers))
            near = peers[np.argpartition(dist, k - 1)[:k]]
            order = np.lexsort((near, np.abs(layout.x[near] - tx)
                                + np.abs(layout.y[near] - ty)))
            cand = [(0.0, int(j)) for j in near[order] if j != i][:max_candidates]
        else:
            cand = []
        best = None
        affected_i = nets_i
        for _, j in cand:
            nets = sorted(set(affected_i) | set(ctx.nets_of[j]))
            before = ctx.cached_sum(nets)
            layout.x[i], layout.x[j] = layout.x[j], layout.x[i]
            layout.y[i], layout.y[j] = layout.y[j], layout.y[i]
            after = ctx.hpwl_of(nets)
            layout.x[i], layout.x[j] = layout.x[j], layout.x[i]
            layout.y[i], layout.y[j] = layout.y[j], layout.y[i]
            if after < before - 1e-12 and (best is None or before - after > best[0]):
                best = (before - after, "swap", j)
        # gap candidates near the target row
        row_h = design.die.row_height(die)
        want_row = int(np.clip(ty // row_h, 0, int(design.die.height / row_h) - 1))
        n_checked = 0
        near_segs = [s for r in (want_row - 1, want_row, want_row + 1)
                     for s in segs_by_row.get(r, ())]
        for seg in near_segs:
            if n_checked >= 3:
                break
            for g0, g1 in _segment_gaps(layout, seg):
                if g1 - g0 < layout.width[i] - 1e-9:
                    continue
                xp = min(max(tx - layout.width[i] / 2, g0), g1 - layout.width[i])
                xp = min(max(round(xp / site) * site, math.ceil(g0 / site - 1e-9) * site),
                         math.floor((g1 - layout.width[i]) / site + 1e-9) * site)
                if xp < g0 - 1e-9:
                    continue
                n_checked += 1
                before = ctx.cached_sum(affected_i)
                ox, oy = layout.x[i], layout.y[i]
                layout.x[i], layout.y[i] = xp, seg.y
                after = ctx.hpwl_of(affected_i)
                layout.x[i], layout.y[i] = ox, oy
                if after < before - 1e-12 and (best is None or before - after > best[0]):
                    best = (before - after, "gap", (seg, xp))
                if n_checked >= 3:
                    break
        if best is None:
            continue
        gain += best[0]
        if best[1] == "swap":
            j = best[2]
            layout.x[i], layout.x[j] = layout.x[j], layout.x[i]
            layout.y[i], layout.y[j] = layout.y[j], layout.y[i]
            ctx.refresh(sorted(set(nets_i) | set(ctx.nets_of[j])))
            si, sj = seg_of.get(i), seg_of.get(j)
            if si is not sj and si is not None and sj is not None:
                pi, pj = si.cells.index(i), sj.cells.index(j)
                si.cells[pi], sj.cells[pj] = j, i
                seg_of[i], seg_of[j] = sj, si
            elif si is sj and si is not None:
                pi, pj = si.cells.index(i), si.cells.index(j)
                si.cells[pi], si.cells[pj] = j, i
            for s in (si, sj):
                if s is not None:
                    s.cells.sort(key=lambda c: layout.x[c])
        else:
            seg, xp = best[2]
            old = seg_of.get(i)
            if old is not None:
                old.cells.remove(i)
            layout.x[i] = xp
            layout.y[i] = seg.y
            seg.cells.append(i)
            seg.cells.sort(key=lambda c: layout.x[c])
            seg_of[i] = seg
            ctx.refresh(affected_i)
    return gain


def dp_pass(ctx: DpContext, k=3):
    gain = 0.0
    for die in (0, 1):
        gain += local_reorder(ctx, die, k=k)
        gain += global_swap(ctx, die)
    return gain


def refine_with_hbt_remap(design: Design, layout, hbt_xy, k=3):
    """One DP pass, then re-center terminals in their updated optimal regions,
    re-legalize them, and run one more DP pass.  The better of the refined and
    the incoming placement is returned (score never increases).
    """
    ctx = DpContext(design, layout, hbt_xy)
    beta = design.hbt.cost
    base_score = ctx.total_hpwl() + beta * len(hbt_xy)
    snap = (layout.x.copy(), layout.y.copy(),
            {d: [list(s.cells) for s in layout.segments[d]] for d in (0, 1)},
            dict(hbt_xy))
    dp_pass(ctx, k=k)

    # terminal remap from the refined pin positions
    arr = design.arrays()
    centers = {}
    for j in list(hbt_xy):
        lo, hi = arr.net_ptr[j], arr.net_ptr[j + 1]
        tb = {True: [], False: []}
        for p in range(lo, hi):
            i = int(arr.pin_inst[p])
            tb[bool(ctx.pin_top[p])].append(
                (layout.x[i] + ctx.pin_offx[p], layout.y[i] + ctx.pin_offy[p])
            )
        if not tb[True] or not tb[False]:
            continue
        from .wirelength import optimal_region

        boxes = {}
        for side, pts in tb.items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            boxes[side] = (min(xs), max(xs), min(ys), max(ys))
        r = optimal_region(boxes[True], boxes[False])
        centers[j] = ((r[0] + r[1]) / 2, (r[2] + r[3]) / 2)
    new_hbt = lg.legalize_hbts(design, centers) if centers else {}
    for j in hbt_xy:
        if j not in new_hbt:
            new_hbt[j] = hbt_xy[j]
    ctx.set_hbts(new_hbt)
    dp_pass(ctx, k=k)
    score = ctx.total_hpwl() + beta * len(new_hbt)
    if score <= base_score + 1e-9:
        return layout, new_hbt, score
    # roll back: the refinement did not pay off
    layout.x[:], layout.y[:] = snap[0], snap[1]
    for d in (0, 1):
        for seg, cells in zip(layout.segments[d], snap[2][d]):
            seg.cells = cells
    return layout, snap[3], base_score
