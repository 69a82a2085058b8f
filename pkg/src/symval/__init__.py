"""Possible-value analysis over a symbolic lattice for a small SSA language."""

from .ir import ParseError, ValidationError, build_cfg, format_program, load_program, parse_program, validate
from .interproc import AnalysisOptions, AnalysisResult, analyze_program, build_call_graph
from .solver import FunctionResult, IterationBudgetExceeded, solve_function

__all__ = [
    "ParseError", "ValidationError", "build_cfg", "format_program", "load_program",
    "parse_program", "validate", "AnalysisOptions", "AnalysisResult", "analyze_program",
    "build_call_graph", "FunctionResult", "IterationBudgetExceeded", "solve_function",
]
