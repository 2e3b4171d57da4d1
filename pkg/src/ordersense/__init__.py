"""Variance-based sensitivity indices and stochastic orders between input laws."""

from ._validation import (
    DegenerateModelError,
    DomainError,
    EvaluationError,
    NumericalInstabilityError,
    SizeError,
)
from .distributions import (
    Discrete,
    Distribution,
    Exponential,
    Normal,
    Transformed,
    TruncatedExponential,
    TruncatedNormal,
    Uniform,
    expect,
    parse_law,
    sample,
)
from .experiments import RunReport, Scenario, emit_table, load_scenarios, run_counterexamples, run_scenario
from .expressions import parse_structured
from .hoeffding import (
    ClosedFormSobol,
    DecompositionResult,
    Factor,
    StructuredFunction,
    decompose,
    decompose_additive,
    decompose_product,
    decompose_sum_of_products,
    factor_moments,
    phi_mix_ratios,
    tensor_quadrature_indices,
)
from .models import HestonModel, VaRModel, VasicekModel, heston_call, var_eval, vasicek_bond
from .montecarlo import MonteCarloSobol, SobolEstimate, bootstrap_ci, estimate_indices, significant_digits
from .orders import (
    OrderReport,
    check_cx_discrete,
    check_dil,
    check_disp,
    check_ew,
    check_lorenz,
    check_order,
    check_st,
    check_star,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
