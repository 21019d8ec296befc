from .bnb import MILPProblem, MILPResult, NodeLimitError, ProblemBuilder, solve_milp
from .encoding import (EncodedNetwork, RangeResult, encode_inn, encode_network, milp_verdict, output_bounds,
                       output_range, output_ranges)
from .lp import LinearProgram, LPResult, SolverError, solve_lp
from .lpfile import to_lp_string, write_lp_file

__all__ = [
    "EncodedNetwork", "LPResult", "LinearProgram", "MILPProblem", "MILPResult", "NodeLimitError",
    "ProblemBuilder", "RangeResult", "SolverError", "encode_inn", "encode_network", "milp_verdict",
    "output_bounds", "output_range", "output_ranges", "solve_lp", "solve_milp", "to_lp_string", "write_lp_file",
]
