"""Deadline-differentiated pricing of deferrable electric loads."""
from .audit import (equilibrium_check, ic_audit, social_welfare, truthful_payoff,
                    deviation_payoff, search_ic_violation)
from .population import (ConsumerType, Population, UtilitySpec, aggregate_actions,
                         aggregate_truthful, truthful_action, utility_value, validate_type)
from .pricing import PriceMenu, convexity_probe, expected_firm_cost, grad_check, price_menu
from .scheduler import (consumer_delivery, edf_controls, intra_allocate, residual_trace,
                        simulate)
from .supply import (MarketConfig, SupplyModel, enumerate_scenarios, sample_path,
                     validate_model)

__version__ = "0.1.0"


def __getattr__(name):
    # keep scikit-learn off the import path of the CLI
    if name == "MarginalCostPricer":
        from .estimator import MarginalCostPricer
        return MarginalCostPricer
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
