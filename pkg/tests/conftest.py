from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from reviewcoin.conference import Conference, ConferenceConfig, LoanBook, LoanPolicy, open_submissions
from reviewcoin.ledger import Ledger, Role
from reviewcoin.tax_model import TaxSchedule, neurips_db_schedule

TREASURY, ESCROW = "conf:treasury", "conf:escrow"


@dataclass
class Desk:
    """A funded ledger plus one open conference."""

    ledger: Ledger
    conf: Conference
    researchers: list[str] = field(default_factory=list)

    def balance(self, account: str) -> int:
        return self.ledger.get_balance(account)

    def conserved(self) -> bool:
        return sum(self.ledger.state().balances.values()) == self.ledger.total_minted


def make_desk(
    researchers: int = 10,
    funds: int = 10_000,
    rho: int = 3,
    tau: int = 1125,
    schedule: TaxSchedule | None = None,
    loans: bool = False,
    treasury_funds: int = 100_000,
    rosters: dict[str, list[str]] | None = None,
    **config_kw,
) -> Desk:
    ledger = Ledger()
    ledger.open_account(TREASURY, Role.TREASURY)
    ledger.open_account(ESCROW, Role.ESCROW)
    names = [f"u{i:02d}" for i in range(researchers)]
    for name in names:
        ledger.open_account(name, Role.RESEARCHER)
    total = funds * researchers + treasury_funds
    if total:
        ledger.mint(TREASURY, total)
    for name in names:
        if funds:
            ledger.transfer(TREASURY, name, funds)
    config = ConferenceConfig(
        conference_id="c1",
        rho=rho,
        tau=tau,
        tax_schedule=schedule if schedule is not None else neurips_db_schedule(),
        treasury=TREASURY,
        escrow=ESCROW,
        loan_policy=LoanPolicy(enabled=loans),
        role_rosters=rosters or {},
        **config_kw,
    )
    conf = open_submissions(ledger, config, LoanBook())
    return Desk(ledger, conf, names)


def review_all(desk: Desk, paper, reviewers=None) -> list:
    """Assign (if needed), submit and approve every review on ``paper``."""
    conf = desk.conf
    if reviewers is not None:
        conf.assign_reviewers(paper, reviewers)
    return [conf.approve_review(conf.submit_review(r, paper)) for r in paper.assigned_reviewers]


@pytest.fixture
def desk() -> Desk:
    return make_desk()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
