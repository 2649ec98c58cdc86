"""Conference lifecycle: the state machine that turns review events into ledger flows.

A conference moves strictly forward through :class:`Phase`.  Submission
charges land in the conference escrow, approved reviews are paid out of it,
and :meth:`Conference.settle` distributes the remaining tax pool to the
role rosters and sweeps whatever is left to the treasury, closing escrow
at zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable

from .apportion import apportion_in_quanta
from .errors import (
    AlreadyApproved,
    ConferenceError,
    ConfigInvalid,
    ConflictOfInterest,
    EscrowMismatch,
    EscrowShort,
    InsufficientFunds,
    LoansDisabled,
    NotAssigned,
    NotLoanFunded,
    ReviewerInsolvent,
    TooManyChallenged,
    UnresolvedReviews,
    WrongCount,
    WrongPhase,
    WrongStatus,
)
from .ledger import Kind, Ledger, Role, Transaction
from .tax_model import PricingParams, TaxBreakdown, TaxSchedule, compute_tau, submission_cost
from .units import REVIEW_PAY

logger = logging.getLogger(__name__)


class Phase(Enum):
    ANNOUNCED = "Announced"
    SUBMISSIONS_OPEN = "SubmissionsOpen"
    REVIEW_IN_PROGRESS = "ReviewInProgress"
    DECISION_AND_CHALLENGE = "DecisionAndChallenge"
    SETTLEMENT = "Settlement"
    CLOSED = "Closed"

    @property
    def order(self) -> int:
        return _PHASE_ORDER[self]


_PHASE_ORDER = {p: i for i, p in enumerate(Phase)}


class PaperStatus(Enum):
    SUBMITTED = "Submitted"
    UNDER_REVIEW = "UnderReview"
    DECIDED = "Decided"
    CHALLENGED = "Challenged"
    WITHDRAWN = "Withdrawn"


class ReviewStatus(Enum):
    PENDING_APPROVAL = "PendingApproval"
    REVISION_REQUESTED = "RevisionRequested"
    APPROVED = "Approved"
    PAID = "Paid"
    CANCELLED = "Cancelled"  # unpaid review on a withdrawn paper


class ChallengeOutcome(Enum):
    PENDING = "Pending"
    UPHELD = "Upheld"
    DENIED = "Denied"


class LoanStatus(Enum):
    OPEN = "Open"
    REPAID = "Repaid"
    DEFAULTED = "Defaulted"


@dataclass
class LoanPolicy:
    enabled: bool = False
    # approved review pay is redirected to the lender until the loan clears
    redirect_reviews: bool = True


@dataclass
class ConferenceConfig:
    conference_id: str
    rho: int
    tau: int
    tax_schedule: TaxSchedule
    treasury: str
    escrow: str
    loan_policy: LoanPolicy = field(default_factory=LoanPolicy)
    role_rosters: dict[str, list[str]] = field(default_factory=dict)
    payout_quantum: int = 1
    allow_reserve_overdraw: bool = False

    def __post_init__(self) -> None:
        if not self.conference_id:
            raise ConfigInvalid("conference_id is required")
        if type(self.rho) is not int or self.rho < 1:
            raise ConfigInvalid(f"rho must be a positive integer, got {self.rho!r}")
        if self.tau < 0:
            raise ConfigInvalid("tau must be >= 0")
        if self.payout_quantum < 1:
            raise ConfigInvalid("payout_quantum must be >= 1")
        known = {r.role_name for r in self.tax_schedule.roles}
        unknown = set(self.role_rosters) - known
        if unknown:
            raise ConfigInvalid(f"rosters for roles not in schedule: {sorted(unknown)}")
        for role, roster in self.role_rosters.items():
            if len(set(roster)) != len(roster):
                raise ConfigInvalid(f"duplicate members in {role} roster")

    @property
    def max_challenge_count(self) -> int:
        return max_challenge_count(self.rho)

    @property
    def submission_cost(self) -> int:
        return submission_cost(PricingParams(rho=self.rho, tau=self.tau))


def max_challenge_count(rho: int) -> int:
    """At most ``rho/2 + 1`` reviews, and never all of them."""
    return min(rho - 1, rho // 2 + 1)


@dataclass
class Paper:
    paper_id: str
    corresponding_author: str
    charge: int
    funded_by_loan: bool = False
    loan_id: str | None = None
    status: PaperStatus = PaperStatus.SUBMITTED
    assigned_reviewers: list[str] = field(default_factory=list)
    extra_reviewers: dict[str, str | None] = field(default_factory=dict)
    decision: str | None = None
    handlers: dict[str, list[str]] = field(default_factory=dict)
    unwound: int = 0

    @property
    def active(self) -> bool:
        return self.status is not PaperStatus.WITHDRAWN


@dataclass
class Review:
    review_id: str
    paper_id: str
    reviewer: str
    extra: bool = False
    challenge_id: str | None = None
    status: ReviewStatus = ReviewStatus.PENDING_APPROVAL
    revision_count: int = 0
    payment_seq: int | None = None
    redirected: int = 0


@dataclass
class Challenge:
    challenge_id: str
    paper_id: str
    author: str
    challenged_reviews: list[str]
    stake: int
    extra_reviewers: list[str] = field(default_factory=list)
    extra_reviews: list[str] = field(default_factory=list)
    outcome: ChallengeOutcome = ChallengeOutcome.PENDING
    refunded: int = 0
    penalties: int = 0


@dataclass
class Loan:
    loan_id: str
    borrower: str
    lender: str
    principal: int
    outstanding: int
    purpose: str = "submission"
    paper_id: str | None = None
    status: LoanStatus = LoanStatus.OPEN
    written_off: int = 0


class LoanBook:
    """Loans outstanding against one or more treasuries; may span conferences."""

    def __init__(self) -> None:
        self.loans: dict[str, Loan] = {}

    def issue(
        self, borrower: str, lender: str, amount: int, purpose: str, paper_id: str | None = None
    ) -> Loan:
        loan = Loan(
            loan_id=f"loan-{len(self.loans) + 1}",
            borrower=borrower,
            lender=lender,
            principal=amount,
            outstanding=amount,
            purpose=purpose,
            paper_id=paper_id,
        )
        self.loans[loan.loan_id] = loan
        return loan

    def open_for(self, borrower: str) -> list[Loan]:
        return [
            l for l in self.loans.values() if l.borrower == borrower and l.status is LoanStatus.OPEN
        ]

    def outstanding(self, lender: str | None = None) -> int:
        return sum(
            l.outstanding
            for l in self.loans.values()
            if l.status is LoanStatus.OPEN and (lender is None or l.lender == lender)
        )


class Conference:
    """One conference cycle bound to a ledger, its treasury and its escrow."""

    def __init__(self, ledger: Ledger, config: ConferenceConfig, loans: LoanBook | None = None):
        self.ledger = ledger
        self.config = config
        self.loans = loans if loans is not None else LoanBook()
        self.phase = Phase.ANNOUNCED
        self.papers: dict[str, Paper] = {}
        self.reviews: dict[str, Review] = {}
        self.challenges: dict[str, Challenge] = {}
        self.reserve_drawn = 0
        self.settlement_report: dict[str, Any] | None = None
        self._review_index: dict[tuple[str, str], str] = {}
        self._check_accounts()

    # -- plumbing -------------------------------------------------------------

    @property
    def conference_id(self) -> str:
        return self.config.conference_id

    @property
    def n(self) -> int:
        """Papers that count toward the tax pool (withdrawn ones do not)."""
        return sum(1 for p in self.papers.values() if p.active)

    def _check_accounts(self) -> None:
        cfg = self.config
        if self.ledger.role_of(cfg.treasury) is not Role.TREASURY:
            raise ConfigInvalid(f"{cfg.treasury!r} is not a treasury account")
        if self.ledger.role_of(cfg.escrow) is not Role.ESCROW:
            raise ConfigInvalid(f"{cfg.escrow!r} is not an escrow account")
        for roster in cfg.role_rosters.values():
            for member in roster:
                self.ledger.role_of(member)

    def _memo(self, **refs: object) -> dict[str, object]:
        memo: dict[str, object] = {"conference": self.conference_id}
        memo.update({k: v for k, v in refs.items() if v is not None})
        return memo

    def _require_phase(self, *allowed: Phase) -> None:
        if self.phase not in allowed:
            names = ", ".join(p.value for p in allowed)
            raise WrongPhase(f"{self.conference_id} is {self.phase.value}; needs {names}")

    def _advance(self, src: Phase, dst: Phase) -> None:
        self._require_phase(src)
        assert dst.order > src.order
        self.phase = dst

    def _paper(self, paper: Paper | str) -> Paper:
        pid = paper if isinstance(paper, str) else paper.paper_id
        try:
            return self.papers[pid]
        except KeyError:
            raise ConferenceError(f"unknown paper {pid!r}") from None

    def _review(self, review: Review | str) -> Review:
        rid = review if isinstance(review, str) else review.review_id
        try:
            return self.reviews[rid]
        except KeyError:
            raise ConferenceError(f"unknown review {rid!r}") from None

    def _challenge(self, challenge: Challenge | str) -> Challenge:
        cid = challenge if isinstance(challenge, str) else challenge.challenge_id
        try:
            return self.challenges[cid]
        except KeyError:
            raise ConferenceError(f"unknown challenge {cid!r}") from None

    def _loan(self, loan: Loan | str) -> Loan:
        lid = loan if isinstance(loan, str) else loan.loan_id
        return self.loans.loans[lid]

    def _issue_loan(self, borrower: str, amount: int, purpose: str, paper_id: str | None) -> tuple[Loan, Transaction]:
        loan_id = f"loan-{len(self.loans.loans) + 1}"
        tx = self.ledger.transfer(
            self.config.treasury,
            borrower,
            amount,
            Kind.LOAN_ISSUE,
            self._memo(paper=paper_id, loan=loan_id, purpose=purpose),
        )
        loan = self.loans.issue(borrower, self.config.treasury, amount, purpose, paper_id)
        assert loan.loan_id == loan_id
        return loan, tx

    # -- phase transitions ------------------------------------------------------

    def open_submissions(self) -> None:
        self._require_phase(Phase.ANNOUNCED)
        if self.ledger.get_balance(self.config.escrow) != 0:
            raise ConfigInvalid(f"escrow {self.config.escrow!r} must start empty")
        self.phase = Phase.SUBMISSIONS_OPEN

    def close_submissions(self) -> None:
        self._advance(Phase.SUBMISSIONS_OPEN, Phase.REVIEW_IN_PROGRESS)

    def start_decisions(self) -> None:
        self._advance(Phase.REVIEW_IN_PROGRESS, Phase.DECISION_AND_CHALLENGE)

    def start_settlement(self) -> None:
        self._advance(Phase.DECISION_AND_CHALLENGE, Phase.SETTLEMENT)

    # -- submissions ------------------------------------------------------------

    def submit_paper(self, author: str, use_loan: bool = False) -> Paper:
        """Charge ``rho + tau`` to the corresponding author, borrowing it if asked."""
        self._require_phase(Phase.SUBMISSIONS_OPEN)
        if self.ledger.role_of(author) is not Role.RESEARCHER:
            raise ConferenceError(f"{author!r} is not a researcher account")
        cost = self.config.submission_cost
        paper_id = f"{self.conference_id}/p{len(self.papers) + 1}"
        loan = None
        if use_loan:
            if not self.config.loan_policy.enabled:
                raise LoansDisabled(self.conference_id)
            loan, _ = self._issue_loan(author, cost, "submission", paper_id)
        elif self.ledger.get_balance(author) < cost:
            raise InsufficientFunds(f"{author!r} cannot pay {cost} mRC")
        self.ledger.transfer(
            author, self.config.escrow, cost, Kind.SUBMISSION_CHARGE, self._memo(paper=paper_id)
        )
        paper = Paper(
            paper_id=paper_id,
            corresponding_author=author,
            charge=cost,
            funded_by_loan=loan is not None,
            loan_id=loan.loan_id if loan else None,
        )
        self.papers[paper_id] = paper
        return paper

    def transfer_contribution(self, src: str, dst: str, amount: int) -> Transaction:
        """A co-author chips in toward someone else's submission cost."""
        return self.ledger.transfer(src, dst, amount, Kind.TRANSFER, self._memo(purpose="contribution"))

    # -- reviewing --------------------------------------------------------------

    def assign_reviewers(self, paper: Paper | str, reviewers: Iterable[str]) -> Paper:
        self._require_phase(Phase.SUBMISSIONS_OPEN, Phase.REVIEW_IN_PROGRESS)
        p = self._paper(paper)
        if p.status is not PaperStatus.SUBMITTED:
            raise WrongStatus(f"{p.paper_id} is {p.status.value}")
        reviewers = list(reviewers)
        if len(reviewers) != self.config.rho or len(set(reviewers)) != len(reviewers):
            raise WrongCount(f"need exactly {self.config.rho} distinct reviewers")
        if p.corresponding_author in reviewers:
            raise ConflictOfInterest(f"{p.corresponding_author!r} cannot review own paper")
        for r in reviewers:
            self.ledger.role_of(r)
        p.assigned_reviewers = reviewers
        p.status = PaperStatus.UNDER_REVIEW
        return p

    def hire_extra_reviewer(
        self, paper: Paper | str, reviewer: str, challenge: Challenge | str | None = None
    ) -> None:
        """Hire a reviewer beyond the basic ``rho``; paid from the extra-review tax."""
        self._require_phase(Phase.REVIEW_IN_PROGRESS, Phase.DECISION_AND_CHALLENGE)
        p = self._paper(paper)
        if not p.active:
            raise WrongStatus(f"{p.paper_id} is withdrawn")
        if reviewer == p.corresponding_author:
            raise ConflictOfInterest(f"{reviewer!r} cannot review own paper")
        if reviewer in p.assigned_reviewers or reviewer in p.extra_reviewers:
            raise ConferenceError(f"{reviewer!r} already reviews {p.paper_id}")
        self.ledger.role_of(reviewer)
        ch = None
        if challenge is not None:
            ch = self._challenge(challenge)
            if ch.paper_id != p.paper_id or ch.outcome is not ChallengeOutcome.PENDING:
                raise WrongStatus(f"challenge {ch.challenge_id} is not open on {p.paper_id}")
            ch.extra_reviewers.append(reviewer)
        p.extra_reviewers[reviewer] = ch.challenge_id if ch else None

    def submit_review(self, reviewer: str, paper: Paper | str) -> Review:
        self._require_phase(Phase.REVIEW_IN_PROGRESS, Phase.DECISION_AND_CHALLENGE)
        p = self._paper(paper)
        if not p.active:
            raise WrongStatus(f"{p.paper_id} is withdrawn")
        extra = reviewer in p.extra_reviewers
        if reviewer not in p.assigned_reviewers and not extra:
            raise NotAssigned(f"{reviewer!r} is not reviewing {p.paper_id}")
        existing = self._review_index.get((p.paper_id, reviewer))
        if existing is not None:
            rev = self.reviews[existing]
            if rev.status in (ReviewStatus.APPROVED, ReviewStatus.PAID):
                raise AlreadyApproved(rev.review_id)
            if rev.status is not ReviewStatus.REVISION_REQUESTED:
                raise WrongStatus(f"{rev.review_id} is {rev.status.value}")
            rev.revision_count += 1
            rev.status = ReviewStatus.PENDING_APPROVAL
            return rev
        rev = Review(
            review_id=f"{self.conference_id}/r{len(self.reviews) + 1}",
            paper_id=p.paper_id,
            reviewer=reviewer,
            extra=extra,
            challenge_id=p.extra_reviewers.get(reviewer) if extra else None,
        )
        self.reviews[rev.review_id] = rev
        self._review_index[(p.paper_id, reviewer)] = rev.review_id
        if rev.challenge_id:
            self.challenges[rev.challenge_id].extra_reviews.append(rev.review_id)
        return rev

    def request_revision(self, review: Review | str) -> Review:
        rev = self._review(review)
        if rev.status is not ReviewStatus.PENDING_APPROVAL:
            raise WrongStatus(f"{rev.review_id} is {rev.status.value}")
        rev.status = ReviewStatus.REVISION_REQUESTED
        return rev

    def approve_review(self, review: Review | str) -> Transaction:
        """Pay 1 RC from escrow for an approved review.

        If the reviewer has open loans and the policy redirects review pay,
        the payment is immediately forwarded to the lender; see
        :meth:`repay_loan_via_review`.
        """
        rev = self._review(review)
        if rev.status is not ReviewStatus.PENDING_APPROVAL:
            raise WrongStatus(f"{rev.review_id} is {rev.status.value}")
        escrow = self.config.escrow
        if self.ledger.get_balance(escrow) < REVIEW_PAY:
            raise EscrowShort(f"escrow holds {self.ledger.get_balance(escrow)} mRC")
        rev.status = ReviewStatus.APPROVED
        tx = self.ledger.transfer(
            escrow,
            rev.reviewer,
            REVIEW_PAY,
            Kind.REVIEW_PAYMENT,
            self._memo(paper=rev.paper_id, review=rev.review_id),
        )
        rev.status = ReviewStatus.PAID
        rev.payment_seq = tx.seq
        if self.config.loan_policy.redirect_reviews:
            for loan in self.loans.open_for(rev.reviewer):
                if rev.redirected >= REVIEW_PAY:
                    break
                self.repay_loan_via_review(rev, loan)
        return tx

    def repay_loan_via_review(self, review: Review | str, loan: Loan | str) -> Transaction:
        """Forward (part of) one review's pay to the lender.

        Covers ``min(outstanding, unredirected pay)``; a review worth 1 RC
        against 0.5 RC outstanding sends half to the lender and leaves the
        rest with the reviewer.
        """
        rev = self._review(review)
        ln = self._loan(loan)
        if rev.status not in (ReviewStatus.APPROVED, ReviewStatus.PAID):
            raise WrongStatus(f"{rev.review_id} is {rev.status.value}")
        if ln.status is not LoanStatus.OPEN:
            raise WrongStatus(f"{ln.loan_id} is {ln.status.value}")
        if ln.borrower != rev.reviewer:
            raise WrongStatus(f"{rev.review_id} was not written by borrower {ln.borrower!r}")
        amount = min(
            ln.outstanding, REVIEW_PAY - rev.redirected, self.ledger.get_balance(rev.reviewer)
        )
        if amount <= 0:
            raise WrongStatus(f"{rev.review_id} has no pay left to redirect")
        tx = self.ledger.transfer(
            rev.reviewer,
            ln.lender,
            amount,
            Kind.LOAN_REPAYMENT,
            self._memo(review=rev.review_id, loan=ln.loan_id),
        )
        rev.redirected += amount
        ln.outstanding -= amount
        if ln.outstanding == 0:
            ln.status = LoanStatus.REPAID
        return tx

    # -- decisions and challenges -----------------------------------------------

    def decide(self, paper: Paper | str, label: str) -> Paper:
        """Record an opaque decision label (accept/reject/...)."""
        self._require_phase(Phase.DECISION_AND_CHALLENGE)
        p = self._paper(paper)
        if p.status not in (PaperStatus.UNDER_REVIEW, PaperStatus.DECIDED):
            raise WrongStatus(f"{p.paper_id} is {p.status.value}")
        p.decision = label
        p.status = PaperStatus.DECIDED
        return p

    def file_challenge(
        self, author: str, paper: Paper | str, challenged_reviews: Iterable[Review | str]
    ) -> Challenge:
        self._require_phase(Phase.DECISION_AND_CHALLENGE)
        p = self._paper(paper)
        if author != p.corresponding_author:
            raise ConflictOfInterest(f"only {p.corresponding_author!r} may challenge {p.paper_id}")
        if p.status is not PaperStatus.DECIDED:
            raise WrongStatus(f"{p.paper_id} is {p.status.value}")
        if any(c.paper_id == p.paper_id for c in self.challenges.values()):
            raise WrongStatus(f"{p.paper_id} was already challenged")
        revs = [self._review(r) for r in challenged_reviews]
        ids = [r.review_id for r in revs]
        if not ids:
            raise WrongCount("challenge at least one review")
        if len(ids) > self.config.max_challenge_count:
            raise TooManyChallenged(
                f"{len(ids)} > max {self.config.max_challenge_count} for rho={self.config.rho}"
            )
        if len(set(ids)) != len(ids):
            raise WrongCount("duplicate reviews in challenge")
        for r in revs:
            if r.paper_id != p.paper_id or r.extra or r.status is not ReviewStatus.PAID:
                raise WrongStatus(f"{r.review_id} is not a paid original review of {p.paper_id}")
        stake = REVIEW_PAY * len(ids)
        challenge_id = f"{self.conference_id}/c{len(self.challenges) + 1}"
        self.ledger.transfer(
            author,
            self.config.escrow,
            stake,
            Kind.CHALLENGE_STAKE,
            self._memo(paper=p.paper_id, challenge=challenge_id),
        )
        ch = Challenge(
            challenge_id=challenge_id,
            paper_id=p.paper_id,
            author=author,
            challenged_reviews=ids,
            stake=stake,
        )
        self.challenges[challenge_id] = ch
        p.status = PaperStatus.CHALLENGED
        return ch

    def resolve_challenge(self, challenge: Challenge | str, upheld: bool) -> list[Transaction]:
        """Settle a challenge once its extra reviews are paid.

        Upheld: each challenged reviewer forfeits 1 RC to escrow and the
        author's stake is refunded.  A reviewer without the coin is advanced
        the shortfall as a penalty loan; if the treasury cannot lend it,
        :class:`ReviewerInsolvent` is raised and nothing changes.
        Denied: the stake stays in escrow, where it paid for the extra reviews.
        """
        self._require_phase(Phase.DECISION_AND_CHALLENGE)
        ch = self._challenge(challenge)
        if ch.outcome is not ChallengeOutcome.PENDING:
            raise WrongStatus(f"{ch.challenge_id} is {ch.outcome.value}")
        if not ch.extra_reviews or len(ch.extra_reviews) < len(ch.extra_reviewers):
            raise WrongStatus(f"{ch.challenge_id} is still waiting for extra reviews")
        if any(self.reviews[r].status is not ReviewStatus.PAID for r in ch.extra_reviews):
            raise WrongStatus(f"{ch.challenge_id} has unpaid extra reviews")
        paper = self.papers[ch.paper_id]
        txs: list[Transaction] = []
        if upheld:
            offenders = [self.reviews[r].reviewer for r in ch.challenged_reviews]
            shortfalls = {
                who: max(0, REVIEW_PAY - self.ledger.get_balance(who)) for who in offenders
            }
            needed = sum(shortfalls.values())
            if needed and self.ledger.get_balance(self.config.treasury) < needed:
                raise ReviewerInsolvent(
                    f"penalty loans of {needed} mRC exceed the treasury"
                )
            for rid in ch.challenged_reviews:
                who = self.reviews[rid].reviewer
                if shortfalls[who]:
                    _, tx = self._issue_loan(who, shortfalls[who], "penalty", ch.paper_id)
                    txs.append(tx)
                    logger.info("penalty loan of %d mRC to %s", shortfalls[who], who)
                txs.append(
                    self.ledger.transfer(
                        who,
                        self.config.escrow,
                        REVIEW_PAY,
                        Kind.CHALLENGE_PENALTY,
                        self._memo(paper=ch.paper_id, challenge=ch.challenge_id, review=rid),
                    )
                )
                ch.penalties += REVIEW_PAY
            txs.append(
                self.ledger.transfer(
                    self.config.escrow,
                    ch.author,
                    ch.stake,
                    Kind.CHALLENGE_REFUND,
                    self._memo(paper=ch.paper_id, challenge=ch.challenge_id),
                )
            )
            ch.refunded = ch.stake
            ch.outcome = ChallengeOutcome.UPHELD
        else:
            ch.outcome = ChallengeOutcome.DENIED
        paper.status = PaperStatus.DECIDED
        return txs

    # -- loans and defaults -----------------------------------------------------

    def withdraw_on_default(self, paper: Paper | str) -> list[Transaction]:
        """Withdraw a loan-funded paper whose author defaulted.

        Its submission charge is unwound back to the lender, less whatever was
        already paid to its reviewers.  That paid amount is the draw on the
        default reserve and the treasury's entire loss.  Reviews already paid
        stay paid; unpaid ones are cancelled.
        """
        self._require_phase(
            Phase.SUBMISSIONS_OPEN, Phase.REVIEW_IN_PROGRESS, Phase.DECISION_AND_CHALLENGE
        )
        p = self._paper(paper)
        if not p.funded_by_loan:
            raise NotLoanFunded(p.paper_id)
        if p.status in (PaperStatus.WITHDRAWN, PaperStatus.CHALLENGED):
            raise WrongStatus(f"{p.paper_id} is {p.status.value}")
        loan = self._loan(p.loan_id)
        if loan.status is not LoanStatus.OPEN:
            raise WrongStatus(f"{loan.loan_id} is {loan.status.value}")
        paid = [
            r
            for r in self.reviews.values()
            if r.paper_id == p.paper_id and not r.extra and r.status is ReviewStatus.PAID
        ]
        payable = REVIEW_PAY * len(paid)
        unwind = p.charge - payable
        txs: list[Transaction] = []
        if unwind > 0:
            if self.ledger.get_balance(self.config.escrow) < unwind:
                raise EscrowShort(f"cannot unwind {unwind} mRC for {p.paper_id}")
            txs.append(
                self.ledger.transfer(
                    self.config.escrow,
                    loan.lender,
                    unwind,
                    Kind.DEFAULT_WRITE_OFF,
                    self._memo(
                        paper=p.paper_id, loan=loan.loan_id, charge=p.charge, reserve_draw=payable
                    ),
                )
            )
        for r in self.reviews.values():
            if r.paper_id == p.paper_id and r.status in (
                ReviewStatus.PENDING_APPROVAL,
                ReviewStatus.REVISION_REQUESTED,
            ):
                r.status = ReviewStatus.CANCELLED
        p.unwound = unwind
        p.status = PaperStatus.WITHDRAWN
        loan.written_off = loan.outstanding
        loan.status = LoanStatus.DEFAULTED
        self.reserve_drawn += payable
        return txs

    # -- settlement -------------------------------------------------------------

    def record_handler(self, paper: Paper | str, role_name: str, account: str) -> None:
        """Credit ``account`` with handling ``paper`` in ``role_name``."""
        p = self._paper(paper)
        role = self.config.tax_schedule.role(role_name)
        self.ledger.role_of(account)
        handlers = p.handlers.setdefault(role_name, [])
        if account in handlers:
            return
        if len(handlers) >= role.split_ways:
            raise WrongCount(f"{role_name} on {p.paper_id} is split {role.split_ways} ways")
        handlers.append(account)

    def expected_escrow(self) -> int:
        """Escrow balance implied by this conference's own records."""
        total = 0
        for p in self.papers.values():
            total += p.charge - p.unwound
        for r in self.reviews.values():
            if r.status is ReviewStatus.PAID:
                total -= REVIEW_PAY
        for c in self.challenges.values():
            total += c.stake - c.refunded + c.penalties
        return total

    def _role_weights(self, role_name: str, split_ways: int) -> dict[str, Fraction]:
        roster = self.config.role_rosters.get(role_name, [])
        weights: dict[str, Fraction] = {m: Fraction(0) for m in roster}
        k = min(split_ways, len(roster))
        auto = 0
        for p in self.papers.values():
            if not p.active:
                continue
            handlers = p.handlers.get(role_name)
            if not handlers:
                if not k:
                    continue
                handlers = [roster[(auto * k + t) % len(roster)] for t in range(k)]
                auto += 1
            for h in handlers:
                weights[h] = weights.get(h, Fraction(0)) + Fraction(1, len(handlers))
        return {m: w for m, w in weights.items() if w}

    def settle(self) -> list[Transaction]:
        """Pay the role rosters from the tax pool and sweep the rest to the treasury."""
        self._require_phase(Phase.SETTLEMENT)
        pending = [
            r.review_id
            for r in self.reviews.values()
            if r.status in (ReviewStatus.PENDING_APPROVAL, ReviewStatus.APPROVED)
        ]
        pending += [
            c.challenge_id for c in self.challenges.values() if c.outcome is ChallengeOutcome.PENDING
        ]
        if pending:
            raise UnresolvedReviews(", ".join(pending[:5]))
        cfg = self.config
        escrow_balance = self.ledger.get_balance(cfg.escrow)
        expected = self.expected_escrow()
        if escrow_balance != expected:
            raise EscrowMismatch(f"escrow holds {escrow_balance} mRC, records imply {expected}")
        n = self.n
        plan = TaxBreakdown.for_papers(cfg.tax_schedule, n)
        if self.reserve_drawn > plan.default_reserve and not cfg.allow_reserve_overdraw:
            raise EscrowMismatch(
                f"defaults drew {self.reserve_drawn} mRC against a {plan.default_reserve} mRC reserve"
            )

        payouts: list[tuple[str, list[tuple[str, int]]]] = []
        residue = 0
        unstaffed = 0
        for role in cfg.tax_schedule.roles:
            pool = plan.role_pools[role.role_name]
            weights = self._role_weights(role.role_name, role.split_ways)
            if not weights or pool == 0:
                unstaffed += pool
                continue
            members = list(weights)
            shares, left = apportion_in_quanta(pool, [weights[m] for m in members], cfg.payout_quantum)
            residue += left
            payouts.append((role.role_name, [(m, s) for m, s in zip(members, shares) if s]))
        paid_out = sum(s for _, lines in payouts for _, s in lines)
        sweep = escrow_balance - paid_out

        txs: list[Transaction] = []
        if sweep < 0:
            try:
                txs.append(
                    self.ledger.transfer(
                        cfg.treasury,
                        cfg.escrow,
                        -sweep,
                        Kind.TAX_DISBURSEMENT,
                        self._memo(component="treasury-topup"),
                    )
                )
            except InsufficientFunds as exc:
                raise EscrowMismatch(
                    f"tax pool short by {-sweep} mRC and the treasury cannot cover it"
                ) from exc
        disbursements = []
        for role_name, lines in payouts:
            if not lines:
                continue
            total = sum(s for _, s in lines)
            txs.append(
                self.ledger.append(
                    Kind.TAX_DISBURSEMENT,
                    [(cfg.escrow, -total)] + lines,
                    self._memo(role=role_name, n=n),
                )
            )
            disbursements += [
                {"role": role_name, "recipient": m, "amount_mRC": s} for m, s in lines
            ]
        if sweep > 0:
            txs.append(
                self.ledger.transfer(
                    cfg.escrow, cfg.treasury, sweep, Kind.TAX_DISBURSEMENT, self._memo(component="sweep")
                )
            )
        assert self.ledger.get_balance(cfg.escrow) == 0

        extra_paid = REVIEW_PAY * sum(
            1 for r in self.reviews.values() if r.extra and r.status is ReviewStatus.PAID
        )
        unspent = sum(
            REVIEW_PAY * cfg.rho
            - REVIEW_PAY
            * sum(
                1
                for r in self.reviews.values()
                if r.paper_id == p.paper_id and not r.extra and r.status is ReviewStatus.PAID
            )
            for p in self.papers.values()
            if p.active
        )
        self.settlement_report = {
            "conference_id": self.conference_id,
            "n": n,
            "rho": cfg.rho,
            "tau_mRC": cfg.tau,
            "tax_pool_mRC": cfg.tau * n,
            "disbursements": disbursements,
            "sweep_to_treasury_mRC": sweep,
            "components": {
                "role_pools_mRC": plan.role_pools,
                "extra_review_component_mRC": plan.extra_reviews,
                "extra_reviews_paid_mRC": extra_paid,
                "default_reserve_component_mRC": plan.default_reserve,
                "default_reserve_drawn_mRC": self.reserve_drawn,
                "challenge_net_mRC": sum(
                    c.stake - c.refunded + c.penalties for c in self.challenges.values()
                ),
                "unspent_review_coins_mRC": unspent,
                "tau_vs_schedule_mRC": (cfg.tau - compute_tau(cfg.tax_schedule)) * n,
                "apportionment_residue_mRC": residue,
                "unstaffed_roles_mRC": unstaffed,
            },
        }
        self.phase = Phase.CLOSED
        return txs


def open_submissions(
    ledger: Ledger, config: ConferenceConfig, loans: LoanBook | None = None
) -> Conference:
    """Create a conference against ``ledger`` and open it for submissions."""
    conf = Conference(ledger, config, loans)
    conf.open_submissions()
    return conf


def conference_accounts(ledger: Ledger, prefix: str) -> tuple[str, str]:
    """Open (or reuse) the treasury and escrow accounts for a conference series."""
    treasury, escrow = f"{prefix}:treasury", f"{prefix}:escrow"
    for account, role in ((treasury, Role.TREASURY), (escrow, Role.ESCROW)):
        if not ledger.has_account(account):
            ledger.open_account(account, role)
    return treasury, escrow
