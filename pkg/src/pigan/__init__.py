"""Privacy-regularized GANs with membership-inference attacks and fidelity metrics."""

from .attacks import (AdversaryDataset, AttackResult, mc_epsilon, mc_score, mc_set_attack,
                      mc_single_attack, tvd_attack, wb_attack, wb_score)
from .data import (LabeledDataset, PartitionedDataset, PcaProjection, make_gaussian_mixture,
                   partition_uniform, split_train_holdout)
from .divergence import (GaussianStats, cross_entropy_regularizer, entropy, frechet_distance,
                         jsd_weighted, kl, membership_posterior, mutual_information, tvd_empirical)
from .estimators import GAN, PIGAN
from .exceptions import NumericalError, TrainingDivergedError, UndefinedPosteriorError, ValidationError
from .fidelity import MLPClassifier, downstream_accuracy, fid, inception_score, intra_fid
from .harness import ExperimentConfig, ExperimentRecord, run_experiment, run_sweep
from .training import TrainConfig, train_gan_baseline, train_pigan, train_tabular_pigan

__version__ = "0.1.0"

__all__ = [
    "AdversaryDataset", "AttackResult", "ExperimentConfig", "ExperimentRecord", "GAN",
    "GaussianStats", "LabeledDataset", "MLPClassifier", "NumericalError", "PIGAN",
    "PartitionedDataset", "PcaProjection", "TrainConfig", "TrainingDivergedError",
    "UndefinedPosteriorError", "ValidationError", "cross_entropy_regularizer",
    "downstream_accuracy", "entropy", "fid", "frechet_distance", "inception_score", "intra_fid",
    "jsd_weighted", "kl", "make_gaussian_mixture", "mc_epsilon", "mc_score", "mc_set_attack",
    "mc_single_attack", "membership_posterior", "mutual_information", "partition_uniform",
    "run_experiment", "run_sweep", "split_train_holdout", "train_gan_baseline", "train_pigan",
    "train_tabular_pigan", "tvd_attack", "tvd_empirical", "wb_attack", "wb_score",
]
