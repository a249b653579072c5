"""Reproducible synthetic designs in the text input format.

Stands in for the unavailable contest benchmarks: heterogeneous row heights,
a configurable macro area ratio, and random multi-pin nets.  The same spec and
seed always produce byte-identical text.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .model import (CellKind, Design, DieSpec, HbtSpec, Instance, Net,
                    TechProfile, parse_design)


class InfeasibleSpec(ValueError):
    pass


@dataclass
class SynthSpec:
    n_insts: int = 100
    n_macros: int = 2
    r_ma: float = 0.3
    seed: int = 0
    row_top: int = 33
    row_bot: int = 48
    util_top: float = 0.8
    util_bot: float = 0.8
    hbt_pitch: int = 16
    hbt_spacing: int = 4
    beta: float = 10.0
    nets_per_inst: float = 1.3
    fill_fraction: float = 0.62  # instance area / aggregate die capacity
    local_net_fraction: float = 0.8  # nets drawn inside one logical cluster


def _pin_offsets(rng, w, h, n_pins):
    """Integer offsets strictly inside the footprint."""
    ox = rng.integers(-(int(w) // 2), int(w) // 2 + 1, n_pins)
    oy = rng.integers(-(int(h) // 2), int(h) // 2 + 1, n_pins)
    return ox, oy


def gen_synthetic(spec: SynthSpec) -> str:
    """Emit a complete input file for the given spec (deterministic)."""
    if spec.n_macros > spec.n_insts:
        raise InfeasibleSpec("more macros than instances")
    if not 0 <= spec.r_ma < 1:
        raise InfeasibleSpec("macro area ratio must be in [0, 1)")
    rng = np.random.default_rng(spec.seed)
    n_cells = spec.n_insts - spec.n_macros

    # cell library (bottom die native, top die scaled)
    n_kinds = min(6, max(1, n_cells)) if n_cells else 1
    kinds = []
    for k in range(n_kinds):
        wb = int(rng.integers(4, 19))
        hb = spec.row_bot
        wt = max(2, int(round(wb * (spec.row_top / spec.row_bot) * rng.uniform(0.9, 1.15))))
        ht = spec.row_top
        n_pins = int(rng.integers(2, 5))
        obx, oby = _pin_offsets(rng, wb, hb, n_pins)
        otx, oty = _pin_offsets(rng, wt, ht, n_pins)
        kinds.append((f"ck{k}", (wt, ht, otx, oty), (wb, hb, obx, oby), n_pins))

    cell_kind_idx = rng.integers(0, n_kinds, n_cells) if n_cells else np.zeros(0, int)
    cell_area = float(
        sum(kinds[k][2][0] * kinds[k][2][1] for k in cell_kind_idx)
    )

    capacity = spec.fill_fraction * (spec.util_top + spec.util_bot)
    if spec.r_ma >= capacity:
        raise InfeasibleSpec(
            f"macro ratio {spec.r_ma} beyond utilization capacity {capacity:.2f}"
        )
    area = cell_area / max(capacity - spec.r_ma, 0.02) if cell_area else 4e5
    lcm = spec.row_top * spec.row_bot // math.gcd(spec.row_top, spec.row_bot)
    dy = max(lcm, int(round(math.sqrt(area) / lcm)) * lcm)
    dx = max(64, int(math.ceil(area / dy)))
    if dx < dy // 2:  # keep the die from degenerating into a needle
        dx = dy // 2
    area = dx * dy

    macro_kinds = []
    if spec.n_macros:
        macro_area = spec.r_ma * area / spec.n_macros
        # prefer footprints two of which pack side by side in any orientation;
        # macros too big for that are sized to sit alone on a die
        lim_pair = 0.45 * min(dx, dy)
        lim_solo = 0.8 * min(dx, dy)
        for m in range(spec.n_macros):
            aspect = rng.uniform(0.6, 1.7)
            wb = max(8, int(round(math.sqrt(macro_area * aspect))))
            for lim in (lim_pair, lim_solo):
                w_try = min(wb, int(lim))
                h_try = max(8, int(round(macro_area / w_try)))
                if h_try <= lim:
                    wb, hb = w_try, h_try
                    break
            else:
                raise InfeasibleSpec("macro footprint too large to pack")
            st = rng.uniform(0.85, 1.2)
            wt = max(8, int(round(wb * st)))
            ht = max(8, int(round(hb * st)))
            n_pins = int(rng.integers(8, 17))
            obx, oby = _pin_offsets(rng, wb, hb, n_pins)
            otx, oty = _pin_offsets(rng, wt, ht, n_pins)
            macro_kinds.append(
                (f"mk{m}", (wt, ht, otx, oty), (wb, hb, obx, oby), n_pins)
            )
        per_die_cap = min(spec.util_top, spec.util_bot) * area
        if max(k[2][0] * k[2][1] for k in macro_kinds) > per_die_cap:
            raise InfeasibleSpec("a single macro exceeds one die's capacity")

    out = io.StringIO()
    out.write(f"DieSize {dx} {dy}\n")
    out.write(f"TopDieMaxUtil {spec.util_top}\n")
    out.write(f"BottomDieMaxUtil {spec.util_bot}\n")
    out.write(f"TopDieRowHeight {spec.row_top}\n")
    out.write(f"BottomDieRowHeight {spec.row_bot}\n")
    for tag, sel in (("TopDieTech", 1), ("BottomDieTech", 2)):
        out.write(f"{tag}\n")
        for name, top, bot, n_pins in kinds + macro_kinds:
            w, h, ox, oy = (top if sel == 1 else bot)
            out.write(f"Cell {name} {w} {h} {n_pins}\n")
            for p in range(n_pins):
                out.write(f"Pin p{p} {ox[p]} {oy[p]}\n")
    inst_kinds = []
    for i in range(n_cells):
        name = kinds[cell_kind_idx[i]][0]
        out.write(f"Inst c{i} {name} 0\n")
        inst_kinds.append((f"c{i}", kinds[cell_kind_idx[i]][3]))
    for m in range(spec.n_macros):
        out.write(f"Inst m{m} mk{m} 1\n")
        inst_kinds.append((f"m{m}", macro_kinds[m][3]))

    n_nets = max(1, int(round(spec.nets_per_inst * spec.n_insts)))
    deg_choices = np.array([2, 2, 2, 2, 2, 3, 3, 4, 5, 6])
    # real netlists are local: most nets stay inside a logical cluster
    n_clusters = max(1, spec.n_insts // 40)
    cluster_of = rng.integers(0, n_clusters, spec.n_insts)
    members_of = [np.flatnonzero(cluster_of == c) for c in range(n_clusters)]
    net_lines = []
    for j in range(n_nets):
        deg = int(deg_choices[rng.integers(0, len(deg_choices))])
        deg = min(deg, spec.n_insts)
        pool = members_of[int(rng.integers(0, n_clusters))]
        if rng.random() < spec.local_net_fraction and len(pool) >= deg:
            members = pool[rng.choice(len(pool), size=deg, replace=False)]
        else:
            members = rng.choice(spec.n_insts, size=deg, replace=False)
        if j < spec.n_macros and spec.n_insts > spec.n_macros:
            # keep every macro connected to the netlist
            if (n_cells + j) not in members:
                members[0] = n_cells + j
        pins = []
        for i in sorted(set(int(v) for v in members)):
            name, n_pins = inst_kinds[i]
            pins.append(f"{name}/p{int(rng.integers(0, n_pins))}")
        if len(pins) < 2:
            continue
        net_lines.append((f"n{j}", pins))
    for name, pins in net_lines:
        out.write(f"Net {name} {len(pins)}\n")
        for p in pins:
            out.write(f"Pin {p}\n")
    out.write(f"HBT {spec.hbt_pitch} {spec.hbt_spacing} {spec.beta}\n")
    return out.getvalue()


def gen_design(spec: SynthSpec) -> Design:
    return parse_design(gen_synthetic(spec))


def make_two_clique_design(n_per_clique=40, seed=0, util=0.5):
    """Two internally connected cell groups whose combined area exceeds one
    die's utilization cap: a correct placer must split them across the dies."""
    rng = np.random.default_rng(seed)
    row = 48
    cell_w = 12
    # each clique fills ~42% of one die: both on one die would need 84% > util
    area_clique_frac = 0.42
    n = 2 * n_per_clique
    clique_area = n_per_clique * cell_w * row
    die_area = clique_area / (area_clique_frac * util / 0.5 * 1.0)
    dy = max(row * 4, int(round(math.sqrt(die_area) / row)) * row)
    dx = max(64, int(math.ceil(die_area / dy)))
    kind = CellKind(
        name="cc", width=cell_w, height=row,
        pin_names=("a", "b"), pin_dx=(-cell_w // 2 + 1, cell_w // 2 - 1),
        pin_dy=(0.0, 0.0),
    )
    tech = TechProfile({"cc": kind})
    insts = [Instance(f"u{i}", "cc", False) for i in range(n)]
    nets = []
    for c in range(2):
        base = c * n_per_clique
        for i in range(n_per_clique - 1):
            nets.append(
                Net(f"chain{c}_{i}", [(base + i, "b"), (base + i + 1, "a")])
            )
        for e in range(n_per_clique):
            a, b = rng.choice(n_per_clique, size=2, replace=False)
            nets.append(
                Net(f"rand{c}_{e}", [(base + int(a), "a"), (base + int(b), "b")])
            )
    die = DieSpec(
        width=float(dx), height=float(dy), row_height_top=row, row_height_bottom=row,
        max_util_top=util, max_util_bottom=util,
    )
    return Design(insts, nets, tech, tech, die, HbtSpec(8, 2, 10.0))
