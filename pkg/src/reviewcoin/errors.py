"""Exception hierarchy shared by every ReviewCoin module."""

from __future__ import annotations


class ReviewCoinError(Exception):
    """Base class for all domain failures."""


class ConfigInvalid(ReviewCoinError):
    pass


# -- ledger -----------------------------------------------------------------


class LedgerError(ReviewCoinError):
    pass


class UnknownAccount(LedgerError):
    pass


class DuplicateAccount(LedgerError):
    pass


class NonZeroSum(LedgerError):
    pass


class InsufficientFunds(LedgerError):
    pass


class MintToNonTreasury(LedgerError):
    pass


class MalformedTransaction(LedgerError):
    pass


class InvalidLog(LedgerError):
    def __init__(self, message: str, seq: int | None = None) -> None:
        super().__init__(message)
        self.seq = seq


# -- conference -------------------------------------------------------------


class ConferenceError(ReviewCoinError):
    pass


class WrongPhase(ConferenceError):
    pass


class LoansDisabled(ConferenceError):
    pass


class ConflictOfInterest(ConferenceError):
    pass


class WrongCount(ConferenceError):
    pass


class NotAssigned(ConferenceError):
    pass


class AlreadyApproved(ConferenceError):
    pass


class WrongStatus(ConferenceError):
    pass


class EscrowShort(ConferenceError):
    pass


class TooManyChallenged(ConferenceError):
    pass


class ReviewerInsolvent(ConferenceError):
    pass


class NotLoanFunded(ConferenceError):
    pass


class UnresolvedReviews(ConferenceError):
    pass


class EscrowMismatch(ConferenceError):
    pass


# -- bootstrap / simulator --------------------------------------------------


class EmptyHistory(ReviewCoinError):
    pass


class EmptyPopulation(ReviewCoinError):
    pass
