"""Low-rank matrix completion with fixed basis coefficients via rank-corrected
nuclear-norm estimation."""

from .basis import BasisSystem, MatrixSpace, make_basis
from .sampling import (
    ObservationSet,
    SampleSet,
    SamplingScheme,
    adjoint_sampling,
    apply_sampling,
    depolarize,
    observe,
    sample_indices,
)
from .spectral import (
    RankCorrectionFn,
    SpectralDecomposition,
    apply_spectral,
    correction_matrix,
    decompose,
    f_vector,
    known_rank_correction,
    phi,
)
from .solver import (
    RcsProblem,
    SolverConfig,
    SolveResult,
    check_optimality,
    objective_value,
    psd_prox,
    solve,
    svt,
)
from .diagnostics import (
    ConsistencyReport,
    TangentSpace,
    bound_profile,
    build_B1_B2,
    check_consistency_psd,
    check_consistency_rect,
    check_nondegeneracy,
    compute_am_bm,
    mu_constants,
    rho_recipe,
    tangent_projections,
)
from .datagen import GenSpec, GroundTruth, fidelity, gen_truth, relerr
from .experiments import RunConfig, bisect_rho, build_instance, pick_initial, run_chain, run_sweep

__version__ = "0.1.0"

__all__ = [
    "BasisSystem",
    "MatrixSpace",
    "make_basis",
    "ObservationSet",
    "SampleSet",
    "SamplingScheme",
    "adjoint_sampling",
    "apply_sampling",
    "depolarize",
    "observe",
    "sample_indices",
    "RankCorrectionFn",
    "SpectralDecomposition",
    "apply_spectral",
    "correction_matrix",
    "decompose",
    "f_vector",
    "known_rank_correction",
    "phi",
    "RcsProblem",
    "SolverConfig",
    "SolveResult",
    "check_optimality",
    "objective_value",
    "psd_prox",
    "solve",
    "svt",
    "ConsistencyReport",
    "TangentSpace",
    "bound_profile",
    "build_B1_B2",
    "check_consistency_psd",
    "check_consistency_rect",
    "check_nondegeneracy",
    "compute_am_bm",
    "mu_constants",
    "rho_recipe",
    "tangent_projections",
    "GenSpec",
    "GroundTruth",
    "fidelity",
    "gen_truth",
    "relerr",
    "RunConfig",
    "bisect_rho",
    "build_instance",
    "pick_initial",
    "run_chain",
    "run_sweep",
]
