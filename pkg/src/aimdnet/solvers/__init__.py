from ._common import (BracketError, FixedPointResult, PreconditionError, SolverOptions,
                      solve_increasing)
from .generic import solve_bracket, solve_damped
from .linear import solve_linear
from .ring import (RingAuxiliary, estimate_contraction, solve_ring_full, solve_ring_mixed,
                   solve_ring_two)
from .scan import ScanReport, scan_multistability
from .tree import solve_tree

SPECIALIZED = {
    "tree": solve_tree,
    "linear": solve_linear,
    "ring2": solve_ring_two,
    "ring2+1": solve_ring_mixed,
    "ring2+full": solve_ring_full,
}


def solve(model, opts=None, method="specialized"):
    """Dispatch on the topology tag; custom models and ``method="generic"``
    use the bracketing iteration."""
    if method == "specialized" and model.topology in SPECIALIZED:
        return SPECIALIZED[model.topology](model, opts)
    if method not in ("specialized", "generic"):
        raise ValueError(f"unknown method {method!r}")
    return solve_bracket(model, opts)


__all__ = [
    "BracketError", "FixedPointResult", "PreconditionError", "RingAuxiliary", "ScanReport",
    "SolverOptions", "SPECIALIZED", "estimate_contraction", "scan_multistability", "solve",
    "solve_bracket", "solve_damped", "solve_increasing", "solve_linear", "solve_ring_full",
    "solve_ring_mixed", "solve_ring_two", "solve_tree",
]
