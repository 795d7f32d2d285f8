"""Low-rank matrix completion with representational transfer from source matrices.

The pipeline debiases each source estimate, integrates the sources' singular
subspaces (all of them, or a selected subset per side), optionally gates the
integrated representation against the target's own estimate, and fits the
target in the chosen representation by least squares.
"""
__version__ = "0.1.0"

from .errors import (
    DegenerateDesignError,
    DegenerateInputError,
    DegenerateQueryError,
    InvalidInputError,
    MatcompError,
    NumericFailureError,
)
from .linalg import Subspace, alignment, orthonormalize, subspace_alignment, thin_svd, top_eigvecs_sym
from .completion import (
    CrudeFit,
    CrudeSolverConfig,
    DebiasedMatrix,
    ObservationSet,
    crude_complete,
    crude_fit,
    debiased_estimate,
    debiased_from_full,
    kfold_split,
)
from .subspace import (
    IntegrationResult,
    SelectionConfig,
    SourceSubspaces,
    barycenter,
    extract_subspaces,
    rectified_kmeans,
    select_cut_dim,
)
from .transfer import GateConfig, TransferModel, nora_transfer, optional_gate, oracle_transfer, target_ols
from .inference import BilinearQuery, InferenceResult, bilinear_ci, sigma_l_sq
from .simulation import (
    ExperimentResult,
    ExperimentSettings,
    GeneratorConfig,
    generate_instance,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
