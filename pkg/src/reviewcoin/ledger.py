"""Append-only, hash-chained, double-entry coin ledger.

Each :class:`Transaction` carries signed per-account deltas.  Every kind
except ``Mint`` must sum to zero, so the total supply only moves at mint
time and ``sum(balances) == total_minted`` holds after every append.

The chain digest is SHA-256 over a length-prefixed big-endian encoding::

    seq            u64
    kind tag       u8   (index in ``Kind`` declaration order)
    entry count    u32
    per entry      u32 id length, id bytes (UTF-8), i64 delta
    memo length    u32
    memo bytes     compact JSON object with sorted keys, or empty
    prev_hash      32 raw bytes (all zero for seq 1)

On disk a log is JSON lines in the field order
``seq, kind, entries, memo, prev_hash, hash``; see :func:`to_json_line`.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    DuplicateAccount,
    InsufficientFunds,
    InvalidLog,
    MalformedTransaction,
    MintToNonTreasury,
    NonZeroSum,
    UnknownAccount,
)

GENESIS_HASH = "00" * 32
_HEX = frozenset("0123456789abcdef")
_I64_MIN, _I64_MAX = -(2**63), 2**63 - 1


class Role(Enum):
    RESEARCHER = "researcher"
    TREASURY = "conference-treasury"
    ESCROW = "conference-escrow"
    SPONSOR = "sponsor"


class Kind(Enum):
    MINT = "Mint"
    TRANSFER = "Transfer"
    SUBMISSION_CHARGE = "SubmissionCharge"
    REVIEW_PAYMENT = "ReviewPayment"
    TAX_DISBURSEMENT = "TaxDisbursement"
    CHALLENGE_STAKE = "ChallengeStake"
    CHALLENGE_REFUND = "ChallengeRefund"
    CHALLENGE_PENALTY = "ChallengePenalty"
    LOAN_ISSUE = "LoanIssue"
    LOAN_REPAYMENT = "LoanRepayment"
    DEFAULT_WRITE_OFF = "DefaultWriteOff"

    @property
    def tag(self) -> int:
        return _KIND_TAGS[self]


_KIND_TAGS = {kind: i for i, kind in enumerate(Kind)}
_KINDS_BY_VALUE = {kind.value: kind for kind in Kind}

Entries = tuple[tuple[str, int], ...]
Memo = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Transaction:
    seq: int
    kind: Kind
    entries: Entries
    memo: Memo
    prev_hash: str
    hash: str

    @property
    def memo_dict(self) -> dict[str, str]:
        return dict(self.memo)

    def delta_for(self, account: str) -> int:
        return sum(d for a, d in self.entries if a == account)


@dataclass
class LedgerState:
    balances: dict[str, int]
    head_hash: str = GENESIS_HASH
    total_minted: int = 0


@dataclass(frozen=True)
class ChainVerification:
    """Outcome of :func:`verify_chain`; truthy iff the log is sound."""

    ok: bool
    count: int
    first_bad_seq: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


# -- canonical encoding -----------------------------------------------------


def _memo_bytes(memo: Memo) -> bytes:
    if not memo:
        return b""
    return json.dumps(
        dict(memo), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def canonical_bytes(
    seq: int, kind: Kind, entries: Entries, memo: Memo, prev_hash: str
) -> bytes:
    parts = [struct.pack(">QBI", seq, kind.tag, len(entries))]
    for account, delta in entries:
        raw = account.encode("utf-8")
        parts.append(struct.pack(">I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(">q", delta))
    memo_raw = _memo_bytes(memo)
    parts.append(struct.pack(">I", len(memo_raw)))
    parts.append(memo_raw)
    parts.append(bytes.fromhex(prev_hash))
    return b"".join(parts)


def compute_hash(
    seq: int, kind: Kind, entries: Entries, memo: Memo, prev_hash: str
) -> str:
    return hashlib.sha256(canonical_bytes(seq, kind, entries, memo, prev_hash)).hexdigest()


def _normalize_memo(memo: Mapping[str, object] | None) -> Memo:
    if not memo:
        return ()
    return tuple(sorted((str(k), str(v)) for k, v in memo.items()))


# -- JSON lines -------------------------------------------------------------

_FIELDS = ("seq", "kind", "entries", "memo", "prev_hash", "hash")


def to_json_line(tx: Transaction) -> str:
    payload = {
        "seq": tx.seq,
        "kind": tx.kind.value,
        "entries": [[a, d] for a, d in tx.entries],
        "memo": dict(tx.memo),
        "prev_hash": tx.prev_hash,
        "hash": tx.hash,
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def _is_digest(value: object) -> bool:
    return isinstance(value, str) and len(value) == 64 and set(value) <= _HEX


def parse_line(line: str) -> Transaction:
    """Parse one serialized transaction; the line must be in canonical form.

    Anything that parses but does not re-serialize to the identical string
    (extra whitespace, reordered keys, uppercase hex) is rejected, so a
    tampered line cannot hide behind an equivalent JSON spelling.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedTransaction(f"unparseable line: {exc.msg}") from exc
    if not isinstance(obj, dict) or tuple(obj) != _FIELDS:
        raise MalformedTransaction("fields missing or out of order")
    seq, kind, entries, memo = obj["seq"], obj["kind"], obj["entries"], obj["memo"]
    if type(seq) is not int or seq < 1:
        raise MalformedTransaction("bad seq")
    if kind not in _KINDS_BY_VALUE:
        raise MalformedTransaction(f"unknown kind {kind!r}")
    if not isinstance(entries, list) or not all(
        isinstance(e, list)
        and len(e) == 2
        and isinstance(e[0], str)
        and type(e[1]) is int
        and _I64_MIN <= e[1] <= _I64_MAX
        for e in entries
    ):
        raise MalformedTransaction("bad entries")
    if not isinstance(memo, dict) or not all(isinstance(v, str) for v in memo.values()):
        raise MalformedTransaction("bad memo")
    if not (_is_digest(obj["prev_hash"]) and _is_digest(obj["hash"])):
        raise MalformedTransaction("bad digest")
    tx = Transaction(
        seq=seq,
        kind=_KINDS_BY_VALUE[kind],
        entries=tuple((a, d) for a, d in entries),
        memo=_normalize_memo(memo),
        prev_hash=obj["prev_hash"],
        hash=obj["hash"],
    )
    if to_json_line(tx) != line:
        raise MalformedTransaction("line is not in canonical form")
    return tx


def write_log(log: Iterable[Transaction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tx in log:
            fh.write(to_json_line(tx))
            fh.write("\n")


def _split_lines(data: bytes) -> list[bytes]:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return lines


def read_log(path: str | Path) -> list[Transaction]:
    """Load and parse a log file, raising :class:`InvalidLog` on the first bad line."""
    out = []
    for i, raw in enumerate(_split_lines(Path(path).read_bytes()), start=1):
        try:
            out.append(parse_line(raw.decode("utf-8")))
        except (UnicodeDecodeError, MalformedTransaction) as exc:
            raise InvalidLog(f"line {i}: {exc}", seq=i) from exc
    return out


# -- verification and replay ------------------------------------------------


def _kind_violation(tx: Transaction, roles: Mapping[str, Role] | None) -> str | None:
    if not tx.entries:
        return "no entries"
    accounts = [a for a, _ in tx.entries]
    if len(set(accounts)) != len(accounts):
        return "duplicate account in entries"
    if any(d == 0 for _, d in tx.entries):
        return "zero delta entry"
    total = sum(d for _, d in tx.entries)
    if tx.kind is Kind.MINT:
        if any(d <= 0 for _, d in tx.entries):
            return "mint with non-positive delta"
        if roles is not None and any(roles.get(a) is not Role.TREASURY for a in accounts):
            return "mint to non-treasury account"
    elif total != 0:
        return f"non-zero sum {total}"
    return None


class _Replayer:
    """Incremental chain checker shared by file and in-memory verification."""

    def __init__(self, roles: Mapping[str, Role] | None = None) -> None:
        self.roles = roles
        self.balances: dict[str, int] = {}
        self.total_minted = 0
        self.head = GENESIS_HASH
        self.count = 0

    def feed(self, tx: Transaction) -> str | None:
        expected = self.count + 1
        if tx.seq != expected:
            return f"expected seq {expected}, found {tx.seq}"
        if tx.prev_hash != self.head:
            return "prev_hash does not match previous hash"
        if compute_hash(tx.seq, tx.kind, tx.entries, tx.memo, tx.prev_hash) != tx.hash:
            return "hash does not recompute"
        problem = _kind_violation(tx, self.roles)
        if problem:
            return problem
        for account, delta in tx.entries:
            if self.roles is not None and account not in self.roles:
                return f"unknown account {account!r}"
            if self.balances.get(account, 0) + delta < 0:
                return f"balance of {account!r} would go negative"
        for account, delta in tx.entries:
            self.balances[account] = self.balances.get(account, 0) + delta
        if tx.kind is Kind.MINT:
            self.total_minted += sum(d for _, d in tx.entries)
        self.head = tx.hash
        self.count += 1
        return None

    def bad_seq(self, tx: Transaction) -> int:
        """Seq to blame for a rejected ``tx``.

        A transaction that skips ahead and does not link to the head means
        records were removed, so it is the first surviving bad one.  Any
        other fault is blamed on the expected position, which never lies
        past the tampered record.
        """
        expected = self.count + 1
        if tx.seq > expected and tx.prev_hash != self.head:
            return tx.seq
        return expected


def verify_chain(
    log: Iterable[Transaction], roles: Mapping[str, Role] | None = None
) -> ChainVerification:
    """Check digests, linkage, gapless seq, per-kind rules and non-negativity.

    ``roles`` is optional; when given, accounts must be registered and mints
    must credit treasury accounts only.
    """
    rep = _Replayer(roles)
    for tx in log:
        problem = rep.feed(tx)
        if problem:
            return ChainVerification(False, rep.count, rep.bad_seq(tx), problem)
    return ChainVerification(True, rep.count)


def verify_lines(lines: Iterable[bytes | str]) -> ChainVerification:
    """Verify serialized lines, failing at the first unparseable one too."""
    rep = _Replayer()
    for raw in lines:
        seq = rep.count + 1
        try:
            text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
            tx = parse_line(text)
        except (UnicodeDecodeError, MalformedTransaction) as exc:
            return ChainVerification(False, rep.count, seq, str(exc))
        problem = rep.feed(tx)
        if problem:
            return ChainVerification(False, rep.count, rep.bad_seq(tx), problem)
    return ChainVerification(True, rep.count)


def verify_file(path: str | Path) -> ChainVerification:
    return verify_lines(_split_lines(Path(path).read_bytes()))


def replay(log: Sequence[Transaction], accounts: Iterable[str] = ()) -> LedgerState:
    """Rebuild balances from a log.  ``accounts`` seeds zero balances."""
    rep = _Replayer()
    for tx in log:
        problem = rep.feed(tx)
        if problem:
            raise InvalidLog(problem, seq=rep.count + 1)
    balances = {a: 0 for a in accounts}
    balances.update(rep.balances)
    return LedgerState(balances=balances, head_hash=rep.head, total_minted=rep.total_minted)


# -- live ledger ------------------------------------------------------------


class Ledger:
    """Single-writer ledger; appends are serialized by an internal lock."""

    def __init__(self) -> None:
        self._roles: dict[str, Role] = {}
        self._balances: dict[str, int] = {}
        self._log: list[Transaction] = []
        self._total_minted = 0
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"<Ledger {len(self._log)} tx, {len(self._roles)} accounts>"

    def open_account(self, account_id: str, role: Role) -> None:
        if not isinstance(account_id, str) or not account_id:
            raise ValueError("account id must be a non-empty string")
        with self._lock:
            if account_id in self._roles:
                raise DuplicateAccount(account_id)
            self._roles[account_id] = role
            self._balances[account_id] = 0

    def has_account(self, account_id: str) -> bool:
        return account_id in self._roles

    def role_of(self, account_id: str) -> Role:
        try:
            return self._roles[account_id]
        except KeyError:
            raise UnknownAccount(account_id) from None

    def get_balance(self, account_id: str) -> int:
        try:
            return self._balances[account_id]
        except KeyError:
            raise UnknownAccount(account_id) from None

    @property
    def accounts(self) -> dict[str, Role]:
        return dict(self._roles)

    @property
    def log(self) -> tuple[Transaction, ...]:
        return tuple(self._log)

    @property
    def head_hash(self) -> str:
        return self._log[-1].hash if self._log else GENESIS_HASH

    @property
    def total_minted(self) -> int:
        return self._total_minted

    def __len__(self) -> int:
        return len(self._log)

    def append(
        self,
        kind: Kind,
        entries: Iterable[tuple[str, int]],
        memo: Mapping[str, object] | None = None,
    ) -> Transaction:
        """Validate, seal and apply one transaction.  Nothing changes on error."""
        entries = tuple((str(a), int(d)) for a, d in entries)
        memo_t = _normalize_memo(memo)
        with self._lock:
            self._validate(kind, entries)
            seq = len(self._log) + 1
            prev = self.head_hash
            tx = Transaction(
                seq=seq,
                kind=kind,
                entries=entries,
                memo=memo_t,
                prev_hash=prev,
                hash=compute_hash(seq, kind, entries, memo_t, prev),
            )
            for account, delta in entries:
                self._balances[account] += delta
            if kind is Kind.MINT:
                self._total_minted += sum(d for _, d in entries)
            self._log.append(tx)
        return tx

    def _validate(self, kind: Kind, entries: Entries) -> None:
        if not entries:
            raise MalformedTransaction("transaction has no entries")
        seen = set()
        for account, delta in entries:
            if account not in self._roles:
                raise UnknownAccount(account)
            if account in seen:
                raise MalformedTransaction(f"account {account!r} appears twice")
            seen.add(account)
            if delta == 0:
                raise MalformedTransaction(f"zero delta for {account!r}")
            if not _I64_MIN <= delta <= _I64_MAX:
                raise MalformedTransaction("delta does not fit in 64 bits")
        total = sum(d for _, d in entries)
        if kind is Kind.MINT:
            if any(d <= 0 for _, d in entries):
                raise NonZeroSum("mint deltas must all be positive")
            for account, _ in entries:
                if self._roles[account] is not Role.TREASURY:
                    raise MintToNonTreasury(account)
        elif total != 0:
            raise NonZeroSum(f"{kind.value} entries sum to {total}")
        for account, delta in entries:
            if self._balances[account] + delta < 0:
                raise InsufficientFunds(
                    f"{account!r} holds {self._balances[account]} mRC, needs {-delta}"
                )

    # convenience wrappers

    def mint(self, treasury: str, amount: int, memo: Mapping[str, object] | None = None) -> Transaction:
        return self.append(Kind.MINT, [(treasury, amount)], memo)

    def transfer(
        self,
        src: str,
        dst: str,
        amount: int,
        kind: Kind = Kind.TRANSFER,
        memo: Mapping[str, object] | None = None,
    ) -> Transaction:
        if amount <= 0:
            raise MalformedTransaction("transfer amount must be positive")
        return self.append(kind, [(src, -amount), (dst, amount)], memo)

    def state(self) -> LedgerState:
        return LedgerState(
            balances=dict(self._balances),
            head_hash=self.head_hash,
            total_minted=self._total_minted,
        )

    def verify(self) -> ChainVerification:
        return verify_chain(self._log, self._roles)

    def save(self, path: str | Path) -> None:
        write_log(self._log, path)

    def iter_account(self, account_id: str) -> Iterator[Transaction]:
        self.role_of(account_id)
        return (tx for tx in self._log if any(a == account_id for a, _ in tx.entries))
