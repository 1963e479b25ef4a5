"""Parameter learning for discrete Bayesian networks from incomplete data.

Multi-start EM produces candidate estimates; they are then selected or
combined by maximum score, maximum entropy, local model averaging, or a
constrained maximum-entropy solver.
"""

from .centropy import CEntropyConfig, c_entropy_solve, penalized_objective, score_gradient
from .em import CandidateEstimate, CandidateSet, EmConfig, e_step, em_run, multi_start_em
from .experiment import (ExperimentConfig, ExperimentReport, load_config, load_preset, load_report,
                         run_experiment, with_overrides)
from .inference import (CompiledData, Factor, ImpossibleEvidence, eliminate, joint_table,
                        record_log_marginal, record_posterior)
from .metrics import friedman_test, joint_divergence, relative_medians
from .network import (MISSING, BnStructure, CptParams, IncompleteDataset, MissingnessSpec, chain,
                      forward_sample, inject_missingness, mixed_radix_index, sample_true_params)
from .scoring import (DirichletPrior, closed_form_map_update, log_likelihood, map_score,
                      param_entropy)
from .selection import (BmaWeights, ScoreSlack, bma_combine, bma_estimate, compute_bma_weights,
                        select_max_entropy, select_max_score)

__version__ = "0.1.0"

__all__ = ["bma_combine", "bma_estimate", "BmaWeights", "BnStructure", "c_entropy_solve",
           "CandidateEstimate", "CandidateSet", "CEntropyConfig", "chain", "closed_form_map_update",
           "CompiledData", "compute_bma_weights", "CptParams", "DirichletPrior", "e_step", "eliminate",
           "em_run", "EmConfig", "ExperimentConfig", "ExperimentReport", "Factor", "forward_sample",
           "friedman_test", "ImpossibleEvidence", "IncompleteDataset", "inject_missingness",
           "joint_divergence", "joint_table", "load_config", "load_preset", "load_report", "log_likelihood",
           "map_score", "MISSING", "MissingnessSpec", "mixed_radix_index", "multi_start_em", "param_entropy",
           "penalized_objective", "record_log_marginal", "record_posterior", "relative_medians",
           "run_experiment", "sample_true_params", "score_gradient", "ScoreSlack", "select_max_entropy",
           "select_max_score", "with_overrides"]
