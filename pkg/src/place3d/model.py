"""Netlist data model, text I/O, die partitioning, and the exact score evaluator.

A design lives in a cuboid region [0,dx] x [0,dy] x [0,dz].  Instances carry a
per-die technology view (width, height, pin offsets differ between the top and
bottom die).  The bottom die is die 0, the top die is die 1.

Coordinate conventions:
  * optimization state (PlacementState) uses instance *center* coordinates,
  * Solution and the text formats use *lower-left corner* coordinates, which
    stay integral in database units for legal placements,
  * pin offsets are relative to the instance center.

Score arithmetic is exact for legal solutions: corners are integers and pin
offsets are at worst half-integers, both exactly representable in float64, so
spans and their sums incur no rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

ROT_DEGREES = (0, 90, 180, 270)


class ParseError(ValueError):
    """Malformed input text; carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DesignError(ValueError):
    """Semantically invalid design (dangling reference, bad dimension, ...)."""


class SolutionError(ValueError):
    """Solution inconsistent with its design (missing/extra HBT, bad name)."""


@dataclass(frozen=True)
class CellKind:
    """One library cell or macro footprint in a single die's technology."""

    name: str
    width: float
    height: float
    pin_names: tuple[str, ...]
    pin_dx: tuple[float, ...]  # offsets from the instance center
    pin_dy: tuple[float, ...]

    def pin_offset(self, pin_name):
        i = self.pin_names.index(pin_name)
        return self.pin_dx[i], self.pin_dy[i]


@dataclass(frozen=True)
class TechProfile:
    """Per-die library: kind name -> CellKind."""

    kinds: dict[str, CellKind]

    def __getitem__(self, kind):
        return self.kinds[kind]

    def __contains__(self, kind):
        return kind in self.kinds


@dataclass(frozen=True)
class DieSpec:
    width: float  # d_x
    height: float  # d_y
    row_height_top: float
    row_height_bottom: float
    max_util_top: float
    max_util_bottom: float
    site_width: float = 1.0

    @property
    def area(self):
        return self.width * self.height

    def row_height(self, die):
        return self.row_height_top if die == 1 else self.row_height_bottom

    def max_util(self, die):
        return self.max_util_top if die == 1 else self.max_util_bottom


@dataclass(frozen=True)
class HbtSpec:
    pitch: float  # terminal square side w'
    spacing: float  # minimum edge spacing s'
    cost: float  # score units per terminal (beta)


@dataclass
class Instance:
    name: str
    kind: str
    is_macro: bool
    index: int = -1


@dataclass
class Net:
    name: str
    pins: list[tuple[int, str]]  # (instance index, pin name)
    index: int = -1


class Design:
    """Immutable cross-linked netlist plus technology and region specs."""

    def __init__(self, insts, nets, tech_top, tech_bottom, die, hbt):
        self.insts: list[Instance] = list(insts)
        self.nets: list[Net] = list(nets)
        self.tech_top = tech_top
        self.tech_bottom = tech_bottom
        self.die = die
        self.hbt = hbt
        for i, inst in enumerate(self.insts):
            inst.index = i
        for j, net in enumerate(self.nets):
            net.index = j
        self.name_to_inst = {v.name: v.index for v in self.insts}
        if len(self.name_to_inst) != len(self.insts):
            raise DesignError("duplicate instance name")
        self.name_to_net = {e.name: e.index for e in self.nets}
        if len(self.name_to_net) != len(self.nets):
            raise DesignError("duplicate net name")
        self._validate()
        self.macro_ids = np.array(
            [v.index for v in self.insts if v.is_macro], dtype=np.int64
        )
        macro_set = set(self.macro_ids.tolist())
        self.macro_net_ids = np.array(
            [e.index for e in self.nets if any(i in macro_set for i, _ in e.pins)],
            dtype=np.int64,
        )
        self.r_ma = self._macro_area_ratio()
        self._arrays = None

    # -- construction helpers -------------------------------------------------

    def _validate(self):
        die = self.die
        if die.width <= 0 or die.height <= 0:
            raise DesignError("die extents must be positive")
        for u in (die.max_util_top, die.max_util_bottom):
            if not 0 < u <= 1:
                raise DesignError(f"utilization {u} outside (0, 1]")
        for rh in (die.row_height_top, die.row_height_bottom):
            if rh <= 0:
                raise DesignError("row height must be positive")
            n = die.height / rh
            if abs(n - round(n)) > 1e-9:
                raise DesignError(
                    f"rows of height {rh} do not tile die height {die.height}"
                )
        if self.hbt.pitch <= 0 or self.hbt.spacing < 0 or self.hbt.cost < 0:
            raise DesignError("bad HBT spec")
        for tech, tag in ((self.tech_top, "top"), (self.tech_bottom, "bottom")):
            for kind in tech.kinds.values():
                if kind.width <= 0 or kind.height <= 0:
                    raise DesignError(
                        f"{tag} kind {kind.name} has non-positive dimensions"
                    )
                for name, ox, oy in zip(kind.pin_names, kind.pin_dx, kind.pin_dy):
                    if abs(ox) > kind.width / 2 + 1e-9 or abs(oy) > kind.height / 2 + 1e-9:
                        raise DesignError(
                            f"pin {kind.name}/{name} offset outside the {tag} footprint"
                        )
        for inst in self.insts:
            if inst.kind not in self.tech_top or inst.kind not in self.tech_bottom:
                raise DesignError(f"instance {inst.name}: kind {inst.kind} missing from a die tech")
            top, bot = self.tech_top[inst.kind], self.tech_bottom[inst.kind]
            if top.pin_names != bot.pin_names:
                raise DesignError(f"kind {inst.kind}: pin lists differ between dies")
        for net in self.nets:
            if not net.pins:
                raise DesignError(f"net {net.name} has no pins")
            for inst_idx, pin in net.pins:
                if not 0 <= inst_idx < len(self.insts):
                    raise DesignError(f"net {net.name}: bad instance reference")
                kind = self.tech_bottom[self.insts[inst_idx].kind]
                if pin not in kind.pin_names:
                    raise DesignError(
                        f"net {net.name}: pin {self.insts[inst_idx].name}/{pin} undefined"
                    )

    def _macro_area_ratio(self):
        # Bottom-die footprints define the ratio.
        total = sum(
            self.tech_bottom[self.insts[i].kind].width
            * self.tech_bottom[self.insts[i].kind].height
            for i in self.macro_ids
        )
        return total / self.die.area

    # -- derived numeric views -------------------------------------------------

    @property
    def n_insts(self):
        return len(self.insts)

    @property
    def n_nets(self):
        return len(self.nets)

    def arrays(self):
        if self._arrays is None:
            self._arrays = NetlistArrays(self)
        return self._arrays


class NetlistArrays:
    """Flat numpy views of a Design for the numeric kernels.

    Pins are stored in CSR order: pins of net j occupy
    [net_ptr[j], net_ptr[j+1]) in every per-pin array.
    """

    def __init__(self, design: Design):
        n = design.n_insts
        self.n_inst = n
        self.is_macro = np.zeros(n, dtype=bool)
        self.w_top = np.zeros(n)
        self.h_top = np.zeros(n)
        self.w_bot = np.zeros(n)
        self.h_bot = np.zeros(n)
        for i, inst in enumerate(design.insts):
            kt = design.tech_top[inst.kind]
            kb = design.tech_bottom[inst.kind]
            self.is_macro[i] = inst.is_macro
            self.w_top[i], self.h_top[i] = kt.width, kt.height
            self.w_bot[i], self.h_bot[i] = kb.width, kb.height

        counts = [len(e.pins) for e in design.nets]
        self.n_net = design.n_nets
        self.net_ptr = np.zeros(self.n_net + 1, dtype=np.int64)
        np.cumsum(counts, out=self.net_ptr[1:])
        n_pin = int(self.net_ptr[-1])
        self.n_pin = n_pin
        self.pin_inst = np.zeros(n_pin, dtype=np.int64)
        self.pin_net = np.zeros(n_pin, dtype=np.int64)
        self.ox_top = np.zeros(n_pin)
        self.oy_top = np.zeros(n_pin)
        self.ox_bot = np.zeros(n_pin)
        self.oy_bot = np.zeros(n_pin)
        k = 0
        for e in design.nets:
            for inst_idx, pin in e.pins:
                inst = design.insts[inst_idx]
                self.pin_inst[k] = inst_idx
                self.pin_net[k] = e.index
                self.ox_top[k], self.oy_top[k] = design.tech_top[inst.kind].pin_offset(pin)
                self.ox_bot[k], self.oy_bot[k] = design.tech_bottom[inst.kind].pin_offset(pin)
                k += 1
        self.pin_degree = np.bincount(self.pin_inst, minlength=n).astype(np.int64)
        # nets where one instance contributes several pins need the exact
        # (slower) z-gradient path
        order = np.lexsort((self.pin_inst, self.pin_net))
        dup = np.zeros(self.n_net, dtype=bool)
        if n_pin > 1:
            same = (np.diff(self.pin_net[order]) == 0) & (np.diff(self.pin_inst[order]) == 0)
            np.logical_or.at(dup, self.pin_net[order[1:][same]], True)
        self.net_has_dup_inst = dup


def rotate_offsets(ox, oy, quarters):
    """Rotate pin offsets counterclockwise by ``quarters`` quarter turns.

    Matches the binary encoding used by the rotation solver:
    q=1 maps (ox, oy) -> (-oy, ox).
    """
    q = np.asarray(quarters) % 4
    ox = np.asarray(ox)
    oy = np.asarray(oy)
    rx = np.select([q == 0, q == 1, q == 2, q == 3], [ox, -oy, -ox, oy])
    ry = np.select([q == 0, q == 1, q == 2, q == 3], [oy, ox, -oy, -ox])
    return rx, ry


def rotated_dims(w, h, quarters):
    q = np.asarray(quarters) % 4
    odd = q % 2 == 1
    return np.where(odd, h, w), np.where(odd, w, h)


@dataclass
class PlacementState:
    """Mutable optimization state: instance centers, rotations and fillers."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    rot: np.ndarray  # quarter turns, only macros may be nonzero
    dz: float
    fillers: object = None  # density.FillerSet once global placement starts

    def copy(self):
        return PlacementState(
            self.x.copy(), self.y.copy(), self.z.copy(), self.rot.copy(), self.dz,
            self.fillers,
        )


def partition_from_z(z, dz):
    """delta_i = 1 iff z_i - dz/2 > 0 (strict: the midplane belongs to die 0)."""
    return (np.asarray(z) - dz / 2 > 0).astype(np.int8)


def derive_partition(state: PlacementState):
    return partition_from_z(state.z, state.dz)


def crossing_indicator(net: Net, delta):
    """1 iff the net touches both dies: max(delta) - min(delta) over its pins."""
    vals = [int(delta[i]) for i, _ in net.pins]
    return max(vals) - min(vals)


@dataclass
class Solution:
    """Legal placement: per-instance die tag, corner coordinates, rotation.

    ``hbt_xy`` maps net index -> lower-left corner of the terminal square.
    """

    die: np.ndarray  # 0 bottom / 1 top
    x: np.ndarray  # lower-left corners
    y: np.ndarray
    rot: np.ndarray  # quarter turns
    hbt_xy: dict[int, tuple[float, float]] = field(default_factory=dict)


@dataclass
class Score:
    hpwl: float
    hbt_count: int
    raw_score: float


def solution_pin_xy(design, sol, inst_idx, pin_name):
    """Absolute pin position in a legal solution (corner + rotated offset)."""
    inst = design.insts[inst_idx]
    tech = design.tech_top if sol.die[inst_idx] == 1 else design.tech_bottom
    kind = tech[inst.kind]
    ox, oy = kind.pin_offset(pin_name)
    q = int(sol.rot[inst_idx]) % 4
    rx, ry = rotate_offsets(ox, oy, q)
    w, h = rotated_dims(kind.width, kind.height, q)
    return sol.x[inst_idx] + float(w) / 2 + float(rx), sol.y[inst_idx] + float(h) / 2 + float(ry)


def evaluate_score(design, sol, *, allow_illegal=False):
    """Die-to-die HPWL + beta * #HBTs for a placed solution.

    Every crossing net must carry exactly one HBT and non-crossing nets none,
    unless ``allow_illegal`` permits diagnostic evaluation (missing terminals
    then simply drop out of the span).
    """
    beta = design.hbt.cost
    half = design.hbt.pitch / 2
    hpwl = 0.0
    hbt_count = 0
    for net in design.nets:
        xs = {0: [], 1: []}
        ys = {0: [], 1: []}
        for inst_idx, pin in net.pins:
            px, py = solution_pin_xy(design, sol, inst_idx, pin)
            d = int(sol.die[inst_idx])
            xs[d].append(px)
            ys[d].append(py)
        crossing = bool(xs[0]) and bool(xs[1])
        hbt = sol.hbt_xy.get(net.index)
        if not allow_illegal:
            if crossing and hbt is None:
                raise SolutionError(f"net {net.name}: crossing but no HBT")
            if not crossing and hbt is not None:
                raise SolutionError(f"net {net.name}: HBT on a single-die net")
        if hbt is not None:
            hbt_count += 1
            cx, cy = hbt[0] + half, hbt[1] + half
            for d in (0, 1):
                if crossing or xs[d]:
                    xs[d].append(cx)
                    ys[d].append(cy)
        for d in (0, 1):
            if xs[d]:
                hpwl += max(xs[d]) - min(xs[d]) + max(ys[d]) - min(ys[d])
    return Score(hpwl=hpwl, hbt_count=hbt_count, raw_score=hpwl + beta * hbt_count)


# ---------------------------------------------------------------------------
# text formats
# ---------------------------------------------------------------------------


def _tokens(stream):
    for line_no, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line_no, line.split()


def _num(tok, line_no, what="number"):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected {what}, got {tok!r}", line_no) from None
    return v


def parse_design(stream) -> Design:
    """Parse the line-oriented design format.

    Sections: DieSize, Top/BottomDieMaxUtil, Top/BottomDieRowHeight,
    Top/BottomDieTech (Cell/Pin blocks), Inst, Net (Pin lines), HBT.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    die_size = None
    util = {}
    rows = {}
    techs = {"TopDieTech": {}, "BottomDieTech": {}}
    cur_tech = None
    cur_cell = None  # [name, w, h, want, pins]
    insts: list[Instance] = []
    nets: list[Net] = []
    cur_net = None  # [name, want, pins(list of (line, text))]
    net_pin_refs = []  # resolved later
    hbt = None
    name_to_idx = {}

    def finish_cell(line_no):
        nonlocal cur_cell
        if cur_cell is None:
            return
        name, w, h, want, pins = cur_cell
        if len(pins) != want:
            raise ParseError(f"cell {name}: expected {want} pins, got {len(pins)}", line_no)
        techs[cur_tech][name] = CellKind(
            name=name,
            width=w,
            height=h,
            pin_names=tuple(p[0] for p in pins),
            pin_dx=tuple(p[1] for p in pins),
            pin_dy=tuple(p[2] for p in pins),
        )
        cur_cell = None

    def finish_net(line_no):
        nonlocal cur_net
        if cur_net is None:
            return
        name, want, pins = cur_net
        if len(pins) != want:
            raise ParseError(f"net {name}: expected {want} pins, got {len(pins)}", line_no)
        nets.append(Net(name=name, pins=[]))
        net_pin_refs.append(pins)
        cur_net = None

    last_line = 0
    for line_no, toks in _tokens(stream):
        last_line = line_no
        key = toks[0]
        if key == "Pin":
            if cur_cell is not None:
                if len(toks) != 4:
                    raise ParseError("Pin inside a Cell needs: Pin name ox oy", line_no)
                cur_cell[4].append(
                    (toks[1], _num(toks[2], line_no), _num(toks[3], line_no))
                )
            elif cur_net is not None:
                if len(toks) != 2 or "/" not in toks[1]:
                    raise ParseError("Pin inside a Net needs: Pin inst/pin", line_no)
                cur_net[2].append((line_no, toks[1]))
            else:
                raise ParseError("Pin outside of a Cell or Net block", line_no)
            continue
        # any other keyword terminates open Cell/Net blocks
        finish_cell(line_no)
        finish_net(line_no)
        if key == "DieSize":
            if len(toks) != 3:
                raise ParseError("DieSize needs two extents", line_no)
            die_size = (_num(toks[1], line_no), _num(toks[2], line_no))
        elif key in ("TopDieMaxUtil", "BottomDieMaxUtil"):
            util[key[0] == "T"] = _num(toks[1], line_no)
        elif key in ("TopDieRowHeight", "BottomDieRowHeight"):
            rows[key[0] == "T"] = _num(toks[1], line_no)
        elif key in ("TopDieTech", "BottomDieTech"):
            cur_tech = key
        elif key == "Cell":
            if cur_tech is None:
                raise ParseError("Cell outside of a tech block", line_no)
            if len(toks) != 5:
                raise ParseError("Cell needs: Cell name w h npins", line_no)
            w, h = _num(toks[2], line_no), _num(toks[3], line_no)
            if w <= 0 or h <= 0:
                raise ParseError(f"cell {toks[1]}: non-positive dimension", line_no)
            cur_cell = [toks[1], w, h, int(_num(toks[4], line_no, "pin count")), []]
        elif key == "Inst":
            if len(toks) != 4:
                raise ParseError("Inst needs: Inst name kind isMacro", line_no)
            flag = toks[3].lower()
            if flag not in ("0", "1", "true", "false"):
                raise ParseError(f"bad isMacro flag {toks[3]!r}", line_no)
            if toks[1] in name_to_idx:
                raise ParseError(f"duplicate instance {toks[1]}", line_no)
            name_to_idx[toks[1]] = len(insts)
            insts.append(Instance(toks[1], toks[2], flag in ("1", "true")))
        elif key == "Net":
            if len(toks) != 3:
                raise ParseError("Net needs: Net name npins", line_no)
            cur_net = [toks[1], int(_num(toks[2], line_no, "pin count")), []]
        elif key == "HBT":
            if len(toks) != 4:
                raise ParseError("HBT needs: HBT pitch spacing cost", line_no)
            hbt = HbtSpec(
                _num(toks[1], line_no), _num(toks[2], line_no), _num(toks[3], line_no)
            )
        else:
            raise ParseError(f"unknown directive {key!r}", line_no)
    finish_cell(last_line + 1)
    finish_net(last_line + 1)

    if die_size is None:
        raise ParseError("missing DieSize", last_line + 1)
    if True not in util or False not in util:
        raise ParseError("missing die utilization", last_line + 1)
    if True not in rows or False not in rows:
        raise ParseError("missing row heights", last_line + 1)
    if hbt is None:
        raise ParseError("missing HBT line", last_line + 1)

    for net, refs in zip(nets, net_pin_refs):
        for line_no, text in refs:
            inst_name, pin_name = text.split("/", 1)
            if inst_name not in name_to_idx:
                raise ParseError(f"net {net.name}: unknown instance {inst_name!r}", line_no)
            net.pins.append((name_to_idx[inst_name], pin_name))

    die = DieSpec(
        width=die_size[0],
        height=die_size[1],
        row_height_top=rows[True],
        row_height_bottom=rows[False],
        max_util_top=util[True],
        max_util_bottom=util[False],
    )
    try:
        return Design(
            insts,
            nets,
            TechProfile(techs["TopDieTech"]),
            TechProfile(techs["BottomDieTech"]),
            die,
            hbt,
        )
    except DesignError as exc:
        raise ParseError(str(exc)) from exc


def _round_half_up(v):
    return math.floor(v + 0.5)


def write_solution(design, sol, stream: TextIO, *, as_int=True):
    """Emit TopDiePlacement / BottomDiePlacement blocks followed by HBT lines."""

    def fmt(v):
        return str(_round_half_up(v)) if as_int else repr(float(v))

    for tag, want in (("TopDiePlacement", 1), ("BottomDiePlacement", 0)):
        stream.write(f"{tag}\n")
        for inst in design.insts:
            i = inst.index
            if int(sol.die[i]) != want:
                continue
            stream.write(
                f"Inst {inst.name} {fmt(sol.x[i])} {fmt(sol.y[i])}"
                f" {ROT_DEGREES[int(sol.rot[i]) % 4]}\n"
            )
    for net_idx in sorted(sol.hbt_xy):
        hx, hy = sol.hbt_xy[net_idx]
        stream.write(f"HBT {design.nets[net_idx].name} {fmt(hx)} {fmt(hy)}\n")


def read_solution(design, stream) -> Solution:
    """Inverse of write_solution."""
    if isinstance(stream, str):
        stream = stream.splitlines()
    n = design.n_insts
    die = np.zeros(n, dtype=np.int8)
    x = np.zeros(n)
    y = np.zeros(n)
    rot = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    hbt_xy = {}
    cur_die = None
    for line_no, toks in _tokens(stream):
        key = toks[0]
        if key == "TopDiePlacement":
            cur_die = 1
        elif key == "BottomDiePlacement":
            cur_die = 0
        elif key == "Inst":
            if cur_die is None:
                raise ParseError("Inst before a placement block", line_no)
            if len(toks) != 5:
                raise ParseError("Inst needs: Inst name x y rot", line_no)
            if toks[1] not in design.name_to_inst:
                raise ParseError(f"unknown instance {toks[1]!r}", line_no)
            i = design.name_to_inst[toks[1]]
            if seen[i]:
                raise ParseError(f"instance {toks[1]} placed twice", line_no)
            seen[i] = True
            die[i] = cur_die
            x[i] = _num(toks[2], line_no)
            y[i] = _num(toks[3], line_no)
            deg = int(_num(toks[4], line_no, "rotation"))
            if deg not in ROT_DEGREES:
                raise ParseError(f"bad rotation {deg}", line_no)
            rot[i] = ROT_DEGREES.index(deg)
        elif key == "HBT":
            if len(toks) != 4:
                raise ParseError("HBT needs: HBT net x y", line_no)
            if toks[1] not in design.name_to_net:
                raise ParseError(f"unknown net {toks[1]!r}", line_no)
            hbt_xy[design.name_to_net[toks[1]]] = (
                _num(toks[2], line_no),
                _num(toks[3], line_no),
            )
        else:
            raise ParseError(f"unknown directive {key!r}", line_no)
    if not seen.all():
        missing = design.insts[int(np.flatnonzero(~seen)[0])].name
        raise ParseError(f"instance {missing} missing from solution")
    return Solution(die=die, x=x, y=y, rot=rot, hbt_xy=hbt_xy)
