"""Finite-horizon risk-sensitive CTMDP toolkit.

Certifies drift conditions on a model with possibly unbounded rates and
costs, solves the risk-sensitive optimality equation backward in time for
the value function and a deterministic Markov policy, and cross-validates
the solution by exact thinning simulation of the controlled jump process.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .convergence import (LadderReport, RefinementTable, levels_for_windows,
                          run_step_refinement, run_truncation_ladder)
from .errors import (CertificateError, CtriskError, ModelDocumentError,
                     NumericalError, ValidationError)
from .lyapunov import (LyapunovCertificate, check_certificate,
                       derive_example_weights, export_certificate,
                       import_certificate, value_bound)
from .model import (MMInfinityParams, ModelSpec, TruncatedModel,
                    build_mm_infinity, load_model_file, load_tabular, q_star,
                    truncate)
from .simulator import (MCEstimate, PathOutcome, PolicyComparison,
                        compare_policies, estimate_value, simulate_path)
from .solver import (Policy, TimeGrid, ValueFunction, bellman_rhs,
                     constant_policy, extract_policy, linear_oracle,
                     shift_consistency, solve)

__all__ = [
    "backend_name", "LadderReport", "RefinementTable", "levels_for_windows",
    "run_step_refinement", "run_truncation_ladder", "CertificateError",
    "CtriskError", "ModelDocumentError", "NumericalError", "ValidationError",
    "LyapunovCertificate", "check_certificate", "derive_example_weights",
    "export_certificate", "import_certificate", "value_bound",
    "MMInfinityParams", "ModelSpec", "TruncatedModel", "build_mm_infinity",
    "load_model_file", "load_tabular", "q_star", "truncate", "MCEstimate",
    "PathOutcome", "PolicyComparison", "compare_policies", "estimate_value",
    "simulate_path", "Policy", "TimeGrid", "ValueFunction", "bellman_rhs",
    "constant_policy", "extract_policy", "linear_oracle", "shift_consistency",
    "solve",
]
