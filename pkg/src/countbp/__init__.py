"""Belief propagation, lifted (counting) belief propagation and BP-guided model counting."""

from .bp import BPConfig, ForwardsBackwards, RunStats, iterate_bp, run_bp
from .cbp import iterate_cbp, run_cbp
from .cnf import (
    CnfFormula,
    brute_force_count,
    condition_and_propagate,
    exact_count,
    parse_dimacs,
    read_dimacs,
    to_factor_graph,
)
from .dmln import DmlnSpec, EvidenceSpec, generate_evidence, ground_dmln, run_comparison
from .errors import (
    BudgetExceeded,
    CompressionError,
    Conflict,
    ContradictionError,
    CountBPError,
    EvidenceError,
    GraphError,
    ParseError,
)
from .factor_graph import (
    Factor,
    FactorGraph,
    Potential,
    Variable,
    apply_evidence,
    build_graph,
    neighbors,
    parse_fgt,
    read_fgt,
)
from .lifting import CompressedFactorGraph, compress, compression_stats
from .model_count import CountConfig, CountResult, run_count

__version__ = "0.1.0"
