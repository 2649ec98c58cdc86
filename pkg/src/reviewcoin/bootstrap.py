"""Initial coin supply and the two-phase disbursement that seeds the economy."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .apportion import largest_remainder
from .errors import EmptyHistory
from .ledger import Ledger, Transaction
from .tax_model import TaxSchedule, neurips_db_schedule
from .units import MRC_PER_RC, REVIEW_PAY


def compute_sigma(n: int, rho: int, tau: int) -> int:
    """Supply sized at twice the cost of one conference: ``2 n (rho + tau)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return 2 * n * (rho * MRC_PER_RC + tau)


@dataclass(frozen=True)
class WorkRecord:
    """Volunteer work by one account: reviews written and papers handled per role."""

    account: str
    reviews: int = 0
    role_papers: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "WorkRecord":
        return cls(
            account=str(data["account"]),
            reviews=int(data.get("reviews", 0)),
            role_papers={str(k): int(v) for k, v in data.get("roles", {}).items()},
        )


def work_value(record: WorkRecord, schedule: TaxSchedule) -> Fraction:
    """Price work in mRC: 1 RC per review, role work at its pooled per-paper rate."""
    value = Fraction(record.reviews * REVIEW_PAY)
    for role_name, papers in record.role_papers.items():
        role = schedule.role(role_name)
        value += Fraction(role.per_paper_rate * papers, role.split_ways)
    return value


def _weights(records: Iterable[WorkRecord], schedule: TaxSchedule) -> dict[str, Fraction]:
    weights: dict[str, Fraction] = {}
    for rec in records:
        weights[rec.account] = weights.get(rec.account, Fraction(0)) + work_value(rec, schedule)
    return {a: w for a, w in weights.items() if w > 0}


@dataclass
class BootstrapPlan:
    sigma: int
    phase1_grants: list[tuple[str, int]]
    phase2_grants: list[tuple[str, int]] = field(default_factory=list)
    free_conference_id: str = "free"
    top_up: int = 0

    @property
    def phase1_total(self) -> int:
        return sum(a for _, a in self.phase1_grants)

    @property
    def phase2_total(self) -> int:
        return sum(a for _, a in self.phase2_grants)

    @property
    def retained(self) -> int:
        """Coins left in the treasury once both phases are paid."""
        return self.sigma + self.top_up - self.phase1_total - self.phase2_total

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma_mRC": self.sigma,
            "free_conference_id": self.free_conference_id,
            "phase1_total_mRC": self.phase1_total,
            "phase2_total_mRC": self.phase2_total,
            "top_up_mRC": self.top_up,
            "retained_mRC": self.retained,
            "phase1_grants": [{"account": a, "amount_mRC": x} for a, x in self.phase1_grants],
            "phase2_grants": [{"account": a, "amount_mRC": x} for a, x in self.phase2_grants],
        }


def _pro_rata(total: int, weights: Mapping[str, Fraction]) -> list[tuple[str, int]]:
    accounts = list(weights)
    shares = largest_remainder(total, [weights[a] for a in accounts])
    return [(a, s) for a, s in zip(accounts, shares) if s]


def plan_bootstrap(
    history: Iterable[WorkRecord],
    sigma: int,
    free_work: Iterable[WorkRecord] | None = None,
    schedule: TaxSchedule | None = None,
    free_conference_id: str = "free",
) -> BootstrapPlan:
    """Plan the seeding disbursement.

    Phase 1 splits ``sigma // 2`` pro rata over the priced historical work.
    Phase 2, when ``free_work`` is known, is added by :func:`plan_phase2`.
    """
    schedule = schedule or neurips_db_schedule()
    weights = _weights(history, schedule)
    if not weights:
        raise EmptyHistory("no priced volunteer work to disburse against")
    plan = BootstrapPlan(
        sigma=sigma,
        phase1_grants=_pro_rata(sigma // 2, weights),
        free_conference_id=free_conference_id,
    )
    if free_work is not None:
        plan = plan_phase2(plan, free_work, schedule)
    return plan


def plan_phase2(
    plan: BootstrapPlan, free_work: Iterable[WorkRecord], schedule: TaxSchedule | None = None
) -> BootstrapPlan:
    """Give the rest of ``sigma`` to the free conference's workers, pro rata.

    If their work priced at face value exceeds that rest, they are paid the
    face value instead and the difference is minted as a top-up.
    """
    schedule = schedule or neurips_db_schedule()
    weights = _weights(free_work, schedule)
    total_work = sum(weights.values(), Fraction(0))
    face_value = total_work.numerator // total_work.denominator
    remaining = plan.sigma - plan.phase1_total
    payable = max(remaining, face_value) if weights else 0
    return BootstrapPlan(
        sigma=plan.sigma,
        phase1_grants=list(plan.phase1_grants),
        phase2_grants=_pro_rata(payable, weights) if weights else [],
        free_conference_id=plan.free_conference_id,
        top_up=max(0, face_value - remaining) if weights else 0,
    )


def execute_phase1(ledger: Ledger, treasury: str, plan: BootstrapPlan) -> list[Transaction]:
    """Mint ``sigma`` into the treasury and pay the phase-1 grants from it."""
    txs = []
    if plan.sigma:
        txs.append(ledger.mint(treasury, plan.sigma, {"bootstrap": "sigma"}))
    for account, amount in plan.phase1_grants:
        txs.append(ledger.transfer(treasury, account, amount, memo={"bootstrap": "phase1"}))
    return txs


def execute_phase2(ledger: Ledger, treasury: str, plan: BootstrapPlan) -> list[Transaction]:
    txs = []
    if plan.top_up:
        txs.append(
            ledger.mint(
                treasury, plan.top_up, {"bootstrap": "top-up", "conference": plan.free_conference_id}
            )
        )
    for account, amount in plan.phase2_grants:
        txs.append(
            ledger.transfer(
                treasury,
                account,
                amount,
                memo={"bootstrap": "phase2", "conference": plan.free_conference_id},
            )
        )
    return txs


def growth_mint(ledger: Ledger, treasury: str, delta_n: int, rho: int, tau: int) -> Transaction | None:
    """Mint for community growth, sized by the supply formula on the new papers."""
    amount = compute_sigma(delta_n, rho, tau)
    if amount <= 0:
        return None
    return ledger.mint(treasury, amount, {"growth_papers": delta_n})
