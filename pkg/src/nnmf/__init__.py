"""Matrix completion with a learned interaction function.

Instead of scoring a (row, column) pair by the fixed inner product of
their latent feature vectors, the core model feeds the features (plus
element-wise interaction channels) through a small feed-forward network
that is trained jointly with the features.  PMF, BiasedMF and NTN
baselines run under the same alternating full-batch RMSProp harness,
split protocol and evaluation.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .baselines import (
    BiasedMfState,
    NtnModel,
    PmfState,
    biasedmf_predict,
    embed_nnmf_first_layer,
    init_biasedmf,
    init_ntn,
    init_pmf,
    ntn_predict,
    pmf_predict,
)
from .checkpoint import checkpoint_load, checkpoint_save, load_model, save_model
from .config import RunConfig
from .data import (
    DataSplit,
    ObservationSet,
    SplitSpec,
    ingest_edge_list,
    ingest_movielens,
    make_splits,
    mix_seed,
    read_canonical,
    write_canonical,
)
from .evaluation import ExperimentReport, rmse, run_experiment
from .gradients import (
    GradientBundle,
    backward,
    finite_diff_gradient,
    objective,
)
from .model import (
    InitSpec,
    LatentState,
    MlpNetwork,
    NnmfModel,
    build_input,
    init_model,
    predict,
    predict_batch,
)
from .optimizer import (
    LambdaGrid,
    RmspropConfig,
    RmspropState,
    TrainSchedule,
    rmsprop_step,
    select_lambda,
    train,
)

__all__ = [
    "__version__",
    "backend_name",
    "BiasedMfState", "NtnModel", "PmfState", "biasedmf_predict",
    "embed_nnmf_first_layer", "init_biasedmf", "init_ntn", "init_pmf",
    "ntn_predict", "pmf_predict",
    "checkpoint_load", "checkpoint_save", "load_model", "save_model",
    "RunConfig",
    "DataSplit", "ObservationSet", "SplitSpec", "ingest_edge_list",
    "ingest_movielens", "make_splits", "mix_seed", "read_canonical",
    "write_canonical",
    "ExperimentReport", "rmse", "run_experiment",
    "GradientBundle", "backward", "finite_diff_gradient", "objective",
    "InitSpec", "LatentState", "MlpNetwork", "NnmfModel", "build_input",
    "init_model", "predict", "predict_batch",
    "LambdaGrid", "RmspropConfig", "RmspropState", "TrainSchedule",
    "rmsprop_step", "select_lambda", "train",
]
