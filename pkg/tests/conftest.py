import numpy as np
import pytest

from place3d.model import (CellKind, Design, DieSpec, HbtSpec, Instance, Net,
                           TechProfile)


def make_kind(name, w, h, pins):
    """pins: list of (name, ox, oy)"""
    return CellKind(
        name=name, width=w, height=h,
        pin_names=tuple(p[0] for p in pins),
        pin_dx=tuple(float(p[1]) for p in pins),
        pin_dy=tuple(float(p[2]) for p in pins),
    )


def make_design(kinds_top, kinds_bot, insts, nets, *, die=(1000, 960),
                rows=(32, 48), util=(0.8, 0.8), hbt=(8, 2, 10.0)):
    """insts: (name, kind, is_macro); nets: (name, [(inst_idx, pin), ...])."""
    return Design(
        [Instance(*i) for i in insts],
        [Net(n, list(p)) for n, p in nets],
        TechProfile({k.name: k for k in kinds_top}),
        TechProfile({k.name: k for k in kinds_bot}),
        DieSpec(
            width=die[0], height=die[1], row_height_top=rows[0],
            row_height_bottom=rows[1], max_util_top=util[0], max_util_bottom=util[1],
        ),
        HbtSpec(*hbt),
    )


@pytest.fixture
def simple_design():
    """Two 4x4 cells with centered pins plus one asymmetric macro."""
    k = make_kind("inv", 4, 4, [("a", -1, 0), ("b", 1, 0)])
    km_t = make_kind("ram", 40, 24, [("p0", -18, -10), ("p1", 18, 10), ("p2", 0, 10)])
    km_b = make_kind("ram", 48, 32, [("p0", -20, -12), ("p1", 20, 12), ("p2", 0, 12)])
    kt = make_kind("inv", 3, 2, [("a", -1, 0), ("b", 1, 0)])
    return make_design(
        [kt, km_t], [k, km_b],
        [("u1", "inv", False), ("u2", "inv", False), ("m1", "ram", True)],
        [("n1", [(0, "a"), (1, "b"), (2, "p0")]), ("n2", [(0, "b"), (1, "a")])],
        rows=(2, 4),
    )


def random_net(rng, n_pins, span=100, allow_empty_side=True):
    """(coords, on_top) with possible boundary ties."""
    base = rng.integers(0, span, n_pins).astype(float)
    if n_pins >= 2 and rng.random() < 0.4:
        base[rng.integers(0, n_pins)] = base.max()  # force a tie at the max
    on_top = rng.random(n_pins) < rng.uniform(0.1, 0.9)
    if not allow_empty_side and (on_top.all() or not on_top.any()):
        on_top[0] = ~on_top[0]
    return base, on_top
