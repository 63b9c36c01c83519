"""Bayesian GAN training by SGHMC weight sampling.

Generator and discriminator weights are treated as random variables:
chains of stochastic-gradient HMC samples represent their posteriors, noise
is integrated out by simple Monte Carlo, and predictions average over the
collected discriminator samples.  A degenerate configuration (single chain,
no injected noise) recovers classical MAP-trained GANs for head-to-head
comparisons.
"""

from .datagen import Dataset, LabeledSplit, SyntheticSpec, downsample, gen_synthetic, \
    gen_synthetic_classes, load_idx, make_split, write_idx
from .errors import BganError, ConfigurationError, DataError, FormatError, NumericError, \
    ShapeError, SpecMismatchError
from .evaluation import DensityGrid, MDSEmbedding, Projection2D, cluster_count, jsd, \
    kde_density, mds_embed, pca_apply, pca_fit
from .net import LossSpec, NetworkSpec, ParamVector, forward, grad_wrt_input, init_params, \
    loss_grad
from .posterior import PosteriorConfig, PriorSpec, grad_disc, grad_gen, log_cond_disc_semi, \
    log_cond_disc_unsup, log_cond_gen_semi, log_cond_gen_unsup, log_prior, \
    marginal_grad_disc, marginal_grad_gen
from .predict import Predictor, predict_bma, test_error
from .sghmc import SGHMCConfig, SGHMCState, adam_step, lr_schedule, sample_known_posterior, \
    sghmc_step
from .trainer import MetricRecord, SampleSet, TrainConfig, TrainData, load_checkpoint, \
    run_iteration, save_checkpoint, train

__version__ = "0.1.0"
