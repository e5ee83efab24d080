"""Power-minimizing downlink precoding for sparsely spread MC-CDMA.

Library + batch simulator for a multicarrier CDMA downlink where each of K
users is spread over L of N subcarriers and the base station precodes
discrete-alphabet (4/16-QAM) data under per-user symbol-error-probability
constraints. The transmit vector is the minimum-power point of a convex
polytope built from the users' effective channels, solved by an accelerated
dual-decomposition iteration that exploits the spreading sparsity. Zero
forcing, regularized zero forcing, and Tomlinson-Harashima baselines plus a
Monte-Carlo harness round out the toolkit.
"""

__version__ = "0.1.0"

from .signatures import SignatureMatrix, FactorGraph, generate_regular_signatures, validate_regularity
from .channel import ChannelRealization, EffectiveChannel, generate_channel, effective_channel, perturb_channel
from .constellation import (
    ConstellationSpec,
    ConstraintRegion,
    ConstraintSystem,
    q_function,
    q_inverse,
    min_scaling_4qam,
    min_scaling_16qam,
    min_scaling_replica,
    solve_delta,
    constraint_region,
    boundary_points,
    assemble_qp,
)
from .solver import SolverOptions, SolveResult, solve
from .precoders import zf_precode, rzf_precode, thp_zf_encode, thp_optimized, vblast_ordering, complex_modulo
from .harness import ExperimentConfig, ResultRow, run_power_experiment, run_ber_experiment, run_uncertainty_experiment

__all__ = [
    "__version__",
    "SignatureMatrix",
    "FactorGraph",
    "generate_regular_signatures",
    "validate_regularity",
    "ChannelRealization",
    "EffectiveChannel",
    "generate_channel",
    "effective_channel",
    "perturb_channel",
    "ConstellationSpec",
    "ConstraintRegion",
    "ConstraintSystem",
    "q_function",
    "q_inverse",
    "min_scaling_4qam",
    "min_scaling_16qam",
    "min_scaling_replica",
    "solve_delta",
    "constraint_region",
    "boundary_points",
    "assemble_qp",
    "SolverOptions",
    "SolveResult",
    "solve",
    "zf_precode",
    "rzf_precode",
    "thp_zf_encode",
    "thp_optimized",
    "vblast_ordering",
    "complex_modulo",
    "ExperimentConfig",
    "ResultRow",
    "run_power_experiment",
    "run_ber_experiment",
    "run_uncertainty_experiment",
]
