"""ncap: treat neural-network training as edge dynamics on the line graph of
synaptic connections, measure the capacitance scalar beta_eff from early
training, and use it to predict final validation accuracy and rank models.
"""

__version__ = "0.1.0"

from .capacitance import BetaResult, beta_general, beta_mlp, beta_probe
from .mlp import (
    DivergenceError,
    LearningCurve,
    MlpModel,
    MlpSpec,
    backward,
    forward,
    forward_backward,
    init_kaiming_normal,
    loss_cross_entropy,
    sgd_step,
    train,
)
from .linegraph import (
    WeightedAdjacency,
    assemble_adjacency,
    build_topology,
    closed_form_degrees,
    pair_weight,
)
from .meanfield import NetworkedSystem, lp_operator, reduce_mean_field, simulate
from .predictor import (
    ObservationSeries,
    baseline_bsv,
    baseline_lsv,
    bic_select_t0,
    fit_bayesian_ridge,
    predict_at_zero,
    spearman_rho,
)

__all__ = [
    "BetaResult",
    "DivergenceError",
    "LearningCurve",
    "MlpModel",
    "MlpSpec",
    "NetworkedSystem",
    "ObservationSeries",
    "WeightedAdjacency",
    "assemble_adjacency",
    "backward",
    "baseline_bsv",
    "baseline_lsv",
    "beta_general",
    "beta_mlp",
    "beta_probe",
    "bic_select_t0",
    "build_topology",
    "closed_form_degrees",
    "fit_bayesian_ridge",
    "forward",
    "forward_backward",
    "init_kaiming_normal",
    "loss_cross_entropy",
    "lp_operator",
    "pair_weight",
    "predict_at_zero",
    "reduce_mean_field",
    "sgd_step",
    "simulate",
    "spearman_rho",
    "train",
]
