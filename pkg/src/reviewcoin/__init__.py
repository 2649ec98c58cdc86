"""ReviewCoin: conference-owned currency for paid peer review.

Amounts are integer millicoins throughout (1 RC = 1000 mRC).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .apportion import largest_remainder
from .bootstrap import BootstrapPlan, WorkRecord, compute_sigma, plan_bootstrap
from .conference import Conference, ConferenceConfig, LoanBook, LoanPolicy
from .errors import ReviewCoinError
from .ledger import Kind, Ledger, Role, Transaction, replay, verify_chain
from .simulator import ScenarioConfig, compute_gini, run_scenario, summarize
from .tax_model import TaxSchedule, compute_tau, neurips_db_schedule, round_tau

__all__ = [
    "BootstrapPlan",
    "Conference",
    "ConferenceConfig",
    "Kind",
    "Ledger",
    "LoanBook",
    "LoanPolicy",
    "ReviewCoinError",
    "Role",
    "ScenarioConfig",
    "TaxSchedule",
    "Transaction",
    "WorkRecord",
    "compute_gini",
    "compute_sigma",
    "compute_tau",
    "largest_remainder",
    "neurips_db_schedule",
    "plan_bootstrap",
    "replay",
    "round_tau",
    "run_scenario",
    "summarize",
    "verify_chain",
]
