"""Optimal matching, retrieval and verification strategies from noisy covariates."""

from .prob import (
    Channel,
    CovariateSpace,
    Distribution,
    DomainError,
    ModelError,
    UndefinedPosteriorError,
    WorldModel,
    binomial_pmf,
    output_marginal,
    posterior,
)
from .retrieval import (
    BudgetExceeded,
    RetrievalAnswer,
    RetrievalPolicy,
    brute_force_retrieval,
    correct_given_noisy_probe,
    gain,
    optimal_policy,
    policy_error,
)
from .simulator import SimConfig, SimReport, simulate_retrieval, simulate_verification
from .verification import (
    EerSolution,
    JointTable,
    VerificationPolicy,
    brute_force_eer,
    far,
    frr,
    joint_tables,
    optimal_eer,
)

__version__ = "0.1.0"
