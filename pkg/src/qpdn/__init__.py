"""Complex-valued word states mixed into density matrices and read out by trainable measurements."""
from .shs import (
    TOL,
    DensityReport,
    PolarState,
    born_probability,
    born_probability_factored,
    interference_probability,
    mix,
    polar_add,
    pure_projector,
    superpose,
    validate_density,
    wrap_phase,
)
from .model import (
    ForwardCache,
    ParamSet,
    Variant,
    classify,
    count_parameters,
    embed_word,
    forward,
    forward_batch,
    init_params,
    measure_sentence,
    renormalize,
    sentence_rho,
    term_weights,
)
from .grad import (
    DivergenceError,
    GradSet,
    OptimizerState,
    adam_step,
    backward,
    cross_entropy,
    finite_difference_check,
    loss_and_grad,
)
from .data import Dataset, Vocabulary, build_vocab, cv_splits, idf_weights, load_dataset, load_pretrained, tokenize
from .train import TrainConfig, RunReport, cross_validate, evaluate, grid_search, run_ablation, train_model

__version__ = "0.1.0"
