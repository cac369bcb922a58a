"""Dirichlet forms of reaction-diffusion processes on finite configuration spaces.

Modules: ``chain`` (level birth-death chain), ``measures`` (symmetric reference
families), ``configuration`` (count-vector state space), ``forms`` (reaction and
diffusion generators), ``spectral`` (gaps, phi-variances, log-Sobolev),
``transfer`` (constant transfers), ``simulate`` (Gillespie) and ``cli``.
"""
from .chain import (
    BirthDeathSpec,
    RateMatrix,
    ReversibleMeasure,
    check_detailed_balance,
    criterion_sequence,
    q_form_energy,
    reversible_measure_from_birth_death,
)
from .configuration import ConfigSpace, enumerate_configs, reference_distribution
from .errors import CapacityError, ConvergenceError, HypothesisViolation, InvalidSpecError, SymmetryError
from .forms import (
    Model,
    ReversibleGenerator,
    SingleSiteGenerator,
    assemble_model,
    build_diffusion_generator,
    build_reaction_qpair,
    chain_generator,
)
from .measures import SingleSiteMeasure, SymmetricFamily, product_family
from .spectral import PhiProfile, lambda_phi, log_sobolev_constant, phi_variance, spectral_gap

__version__ = "0.1.0"
