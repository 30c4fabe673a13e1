"""Variable role selection for Gaussian model-based clustering and classification.

Variables are split into a clustering block, a redundant block explained by
linear regression on clustering variables, and an independent block; the
split, the number of mixture components and the covariance structures are
all chosen by maximising a BIC-type criterion.  Candidate clustering
variables are first ranked by how long their component means survive an l1
penalty over a regularisation grid.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateCovariance,
    EmptyComponent,
    InsufficientClassData,
    NotConverged,
    NumericalError,
    ParseError,
    RankDeficient,
    RefusesLargeP,
    SelectionFailed,
    SelvarError,
    SingularInput,
)
from .gaussmix import (
    IndepCovForm,
    IndepModel,
    InitPolicy,
    MixtureFit,
    MixtureForm,
    bic_clas,
    bic_clust,
    bic_indep,
    em_fit,
    fit_indep,
    fit_labeled,
    log_density,
    mixture_loglik,
    param_count,
)
from .glasso import (
    GlassoProblem,
    PrecisionEstimate,
    glasso_objective,
    glasso_path,
    glasso_solve,
    kkt_residual,
)
from .penem import (
    CenteredData,
    PenalizedFit,
    center,
    mean_update,
    penalized_classif_fit,
    penalized_em,
)
from .ranking import (
    GridFailure,
    RegularizationGrid,
    VariableRanking,
    compute_ranking,
    compute_ranking_classif,
    default_grids,
    rank_order,
)
from .roles import (
    CritRow,
    RegCovForm,
    RegressionFit,
    SRUWPartition,
    SelectionResult,
    backward_stepwise,
    bic_diff,
    bic_reg,
    exhaustive_oracle,
    finalize_partition,
    fit_regression,
    predict_classes,
    select_S,
    select_W,
    select_model,
    select_model_classif,
)
from .metrics import adjusted_rand_index, error_rate, map_classify
from .simdata import (
    SCENARIOS,
    LabeledDataset,
    classification_scenario,
    clustering_scenario,
    make_scenario,
    replicate_seed,
    write_csv,
    write_labels_csv,
)

__version__ = "0.1.0"
