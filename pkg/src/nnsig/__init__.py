"""Significance testing of input variables in least-squares-trained MLPs.

The statistic for variable j is the sample mean of the squared partial
derivative of the fitted network with respect to x_j; its null distribution
is discretized by sampling networks, forming their Gram covariance, and
selecting argmax coordinates of multivariate normal draws.
"""

__version__ = "0.1.0"

from .data import Dataset, TargetSpec, generate, load_csv, split
from .exceptions import (
    ConfigurationError,
    DivergenceError,
    FormatError,
    IngestionError,
    InputError,
    NnsigError,
    NumericalError,
)
from .network import (
    MomentCertificate,
    Network,
    forward,
    forward_batch,
    init_glorot,
    input_gradient,
    input_gradient_batch,
    linear_network,
    load,
    save,
    second_moment,
)
from .nulldist import (
    CovMatrix,
    NullConfig,
    TestResult,
    adaptive_m,
    cholesky_with_jitter,
    empirical_covariance,
    null_distribution,
    null_sample,
    p_value_from_null,
    sample_networks,
    shrink,
    significance_test,
)
from .significance import (
    RateConstants,
    StatConfig,
    VariableStatistic,
    all_statistics,
    empirical_test_statistic,
    normalization_factor,
)
from .training import (
    ArchSpec,
    FittedModel,
    TrainConfig,
    fit_least_squares,
    quadratic_loss,
    width_schedule,
)
