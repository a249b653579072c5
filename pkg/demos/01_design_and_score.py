"""Build a tiny two-die design, place it by hand, and score it.

The score is the contest objective: die-to-die HPWL plus beta per bonding
terminal.  Each crossing net must carry exactly one terminal whose center
joins both partial nets.
"""

import io

import numpy as np

from place3d.model import Solution, evaluate_score, parse_design, write_solution

CASE = """
DieSize 100 96
TopDieMaxUtil 0.8
BottomDieMaxUtil 0.8
TopDieRowHeight 32
BottomDieRowHeight 48
TopDieTech
Cell inv 4 4 2
Pin a -1 0
Pin b 1 0
BottomDieTech
Cell inv 6 6 2
Pin a -2 0
Pin b 2 0
Inst u1 inv 0
Inst u2 inv 0
Inst u3 inv 0
Net n1 2
Pin u1/b
Pin u2/a
Net n2 2
Pin u2/b
Pin u3/a
HBT 8 2 10
"""


def main():
    design = parse_design(CASE)
    print(f"parsed: {design.n_insts} instances, {design.n_nets} nets")
    print(f"die: {design.die.width} x {design.die.height}, "
          f"terminal cost beta = {design.hbt.cost}")
    print(f"the 'inv' footprint differs per die: "
          f"top {design.tech_top['inv'].width}x{design.tech_top['inv'].height}, "
          f"bottom {design.tech_bottom['inv'].width}x{design.tech_bottom['inv'].height}")

    # u1 and u2 on the bottom die, u3 on top: net n2 crosses and needs a terminal
    sol = Solution(
        die=np.array([0, 0, 1]),
        x=np.array([10.0, 40.0, 70.0]),
        y=np.array([48.0, 48.0, 32.0]),
        rot=np.zeros(3, dtype=int),
        hbt_xy={1: (56.0, 44.0)},
    )
    score = evaluate_score(design, sol)
    print(f"\nhand placement: HPWL {score.hpwl}, terminals {score.hbt_count}, "
          f"raw score {score.raw_score}")

    buf = io.StringIO()
    write_solution(design, sol, buf)
    print("\nsolution file:")
    print(buf.getvalue())


if __name__ == "__main__":
    main()
