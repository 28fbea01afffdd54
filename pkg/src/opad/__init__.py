"""Optimal reweighting of MCMC particles for discrete targets."""

from .core import (
    ExactTarget,
    ParticleSet,
    StateKey,
    WeightedApprox,
    frequency_weights,
    jensen_gap,
    kl_divergence,
    kl_lower_bound,
    logsumexp,
    opad_weights,
)
from .exact import SupportSpec, build_exact_target, enumerate_dags, enumerate_hypercube
from .samplers import (
    ChainTrace,
    extract_approximations,
    gamma_flip_kernel,
    ising_flip_kernel,
    run_chain,
    structure_kernel,
)
from .targets import BslModel, BvsModel, BvsParams, IsingModel, IsingParams

__version__ = "0.1.0"
