"""place3d: analytical die-to-die 3D mixed-size placement for F2F-bonded
two-die stacks (electrostatic density, bistratal wirelength, exact macro
rotation, die-by-die legalization and detailed placement)."""

from .model import (Design, DieSpec, HbtSpec, ParseError, PlacementState,
                    Solution, TechProfile, crossing_indicator, derive_partition,
                    evaluate_score, parse_design, read_solution, write_solution)
from .gp import GpConfig, run_gp3d, run_gp2d_multi, select_flow
from .flow import run_flow
from .check import check_solution
from .synth import SynthSpec, gen_synthetic, gen_design

__all__ = [
    "Design", "DieSpec", "HbtSpec", "ParseError", "PlacementState", "Solution",
    "TechProfile", "crossing_indicator", "derive_partition", "evaluate_score",
    "parse_design", "read_solution", "write_solution", "GpConfig", "run_gp3d",
    "run_gp2d_multi", "select_flow", "run_flow", "check_solution", "SynthSpec",
    "gen_synthetic", "gen_design",
]

__version__ = "0.1.0"
