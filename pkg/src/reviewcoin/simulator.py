"""Deterministic agent-based simulation of the ReviewCoin economy.

Each cycle runs one full conference through settlement on a shared ledger.
Randomness comes from :class:`RngStreams`: every draw is taken from a
numpy ``PCG64`` generator keyed by ``(seed, round, cycle, purpose, agent)``,
so the outcome for one agent in one cycle never depends on how many draws
anybody else consumed.  A scenario is therefore a pure function of its
:class:`ScenarioConfig`.
"""

from __future__ import annotations

import bisect
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from .bootstrap import (
    BootstrapPlan,
    WorkRecord,
    compute_sigma,
    execute_phase1,
    execute_phase2,
    plan_bootstrap,
    plan_phase2,
)
from .conference import (
    Conference,
    ConferenceConfig,
    LoanBook,
    LoanPolicy,
    Paper,
    ReviewerInsolvent,
    max_challenge_count,
    open_submissions,
)
from .errors import ConfigInvalid, EmptyPopulation, InsufficientFunds, InvalidLog, WrongStatus
from .ledger import Kind, Ledger, Role, replay
from .tax_model import TaxSchedule, compute_tau, neurips_db_schedule
from .units import MRC_PER_RC

logger = logging.getLogger(__name__)

ROUND_PAID, ROUND_HISTORY, ROUND_FREE = 0, 1, 2
EXCEPTION_MODES = ("stochastic", "modeled")
ASSIGNMENT_MODES = ("balanced", "uniform")


# -- configuration ------------------------------------------------------------


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigInvalid(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class AgentProfile:
    submission_rate: float = 1.0
    review_accept_prob: float = 1.0
    review_completion_prob: float = 1.0
    default_prob: float = 0.0
    sponsor_transfer_fraction: float = 0.0
    initial_balance: int = 0

    def __post_init__(self) -> None:
        if self.submission_rate < 0:
            raise ConfigInvalid("submission_rate must be >= 0")
        if self.initial_balance < 0:
            raise ConfigInvalid("initial_balance must be >= 0")
        _check_prob("review_accept_prob", self.review_accept_prob)
        _check_prob("review_completion_prob", self.review_completion_prob)
        _check_prob("default_prob", self.default_prob)
        _check_prob("sponsor_transfer_fraction", self.sponsor_transfer_fraction)


@dataclass(frozen=True)
class ConferenceTemplate:
    rho: int = 3
    tau: int | None = None  # None means the exact schedule tax
    schedule: TaxSchedule = field(default_factory=neurips_db_schedule)
    loans: bool = False
    roster_sizes: Mapping[str, int] = field(default_factory=dict)
    payout_quantum: int = 1
    allow_reserve_overdraw: bool = True

    @property
    def effective_tau(self) -> int:
        return compute_tau(self.schedule) if self.tau is None else self.tau


@dataclass(frozen=True)
class ScenarioConfig:
    population: Sequence[tuple[int, AgentProfile]]
    cycles: int = 1
    conference: ConferenceTemplate = field(default_factory=ConferenceTemplate)
    bootstrap: bool = True
    rng_seed: int = 0
    exceptions: str = "stochastic"
    treasury_seed: int = 0
    history_n: int | None = None
    assignment: str = "balanced"
    decision_accept_prob: float = 0.25
    challenge_prob: float = 0.0
    challenge_upheld_prob: float = 0.5
    max_revision_rounds: int = 3
    max_replacements: int = 2

    def validate(self) -> None:
        if self.cycles < 1:
            raise ConfigInvalid("cycles must be >= 1")
        agents = sum(c for c, _ in self.population)
        if not self.population or agents == 0:
            raise ConfigInvalid("population is empty")
        if any(c < 0 for c, _ in self.population):
            raise ConfigInvalid("population counts must be >= 0")
        if agents < self.conference.rho + 1:
            raise ConfigInvalid(f"need at least rho + 1 = {self.conference.rho + 1} agents")
        if self.conference.rho < 1:
            raise ConfigInvalid("rho must be >= 1")
        if self.exceptions not in EXCEPTION_MODES:
            raise ConfigInvalid(f"exceptions must be one of {EXCEPTION_MODES}")
        if self.assignment not in ASSIGNMENT_MODES:
            raise ConfigInvalid(f"assignment must be one of {ASSIGNMENT_MODES}")
        if self.treasury_seed < 0:
            raise ConfigInvalid("treasury_seed must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigInvalid("rng_seed must fit in 64 unsigned bits")
        for name in ("decision_accept_prob", "challenge_prob", "challenge_upheld_prob"):
            _check_prob(name, getattr(self, name))
        known = {r.role_name for r in self.conference.schedule.roles}
        if set(self.conference.roster_sizes) - known:
            raise ConfigInvalid("roster_sizes names roles missing from the schedule")

    # JSON round trip; amounts carry an explicit _mRC suffix on disk

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        try:
            population = []
            for group in data["population"]:
                prof = dict(group.get("profile", {}))
                if "initial_balance_mRC" in prof:
                    prof["initial_balance"] = prof.pop("initial_balance_mRC")
                population.append((int(group["count"]), AgentProfile(**prof)))
            conf = dict(data.get("conference", {}))
            schedule = (
                TaxSchedule.from_dict(conf["schedule"]) if "schedule" in conf else neurips_db_schedule()
            )
            template = ConferenceTemplate(
                rho=conf.get("rho", 3),
                tau=conf.get("tau_mRC"),
                schedule=schedule,
                loans=bool(conf.get("loans", False)),
                roster_sizes=dict(conf.get("roster_sizes", {})),
                payout_quantum=conf.get("payout_quantum_mRC", 1),
                allow_reserve_overdraw=bool(conf.get("allow_reserve_overdraw", True)),
            )
            known = {f.name for f in fields(cls)} - {"population", "conference"}
            extra = {k: v for k, v in data.items() if k in known}
            if "treasury_seed_mRC" in data:
                extra["treasury_seed"] = data["treasury_seed_mRC"]
            unknown = set(data) - known - {"population", "conference", "treasury_seed_mRC"}
            if unknown:
                raise ConfigInvalid(f"unknown scenario keys: {sorted(unknown)}")
            cfg = cls(population=population, conference=template, **extra)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigInvalid(f"malformed scenario: {exc!r}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "rng_seed": self.rng_seed,
            "cycles": self.cycles,
            "bootstrap": self.bootstrap,
            "exceptions": self.exceptions,
            "treasury_seed_mRC": self.treasury_seed,
            "history_n": self.history_n,
            "assignment": self.assignment,
            "decision_accept_prob": self.decision_accept_prob,
            "challenge_prob": self.challenge_prob,
            "challenge_upheld_prob": self.challenge_upheld_prob,
            "max_revision_rounds": self.max_revision_rounds,
            "max_replacements": self.max_replacements,
        }
        out["population"] = []
        for count, prof in self.population:
            p = asdict(prof)
            p["initial_balance_mRC"] = p.pop("initial_balance")
            out["population"].append({"count": count, "profile": p})
        c = self.conference
        out["conference"] = {
            "rho": c.rho,
            "tau_mRC": c.effective_tau,
            "schedule": c.schedule.to_dict(),
            "loans": c.loans,
            "roster_sizes": dict(c.roster_sizes),
            "payout_quantum_mRC": c.payout_quantum,
            "allow_reserve_overdraw": c.allow_reserve_overdraw,
        }
        return out


# -- randomness ---------------------------------------------------------------


class RngStreams:
    """Named, splittable random streams.

    ``get(round, cycle, purpose, agent)`` returns a ``numpy`` PCG64 generator
    seeded by ``SeedSequence(seed, spawn_key=(round, cycle, crc32(purpose),
    agent + 1))``; ``agent=-1`` is the cycle-wide stream for that purpose.
    The same key always yields the same generator state, so streams can be
    consumed in any order or in parallel without changing results.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._cache: dict[tuple[int, int, str, int], np.random.Generator] = {}

    def get(self, round_: int, cycle: int, purpose: str, agent: int = -1) -> np.random.Generator:
        key = (round_, cycle, purpose, agent)
        gen = self._cache.get(key)
        if gen is None:
            ss = np.random.SeedSequence(
                self.seed, spawn_key=(round_, cycle, zlib.crc32(purpose.encode()), agent + 1)
            )
            gen = np.random.Generator(np.random.PCG64(ss))
            self._cache[key] = gen
        return gen

    def release(self, round_: int, cycle: int) -> None:
        for key in [k for k in self._cache if k[0] == round_ and k[1] == cycle]:
            del self._cache[key]


class ReviewerPicker:
    """Draws reviewers uniformly among eligible agents, optionally least-loaded first."""

    def __init__(self, n_agents: int, gen: np.random.Generator, balanced: bool = True) -> None:
        self.gen = gen
        self.balanced = balanced
        self.load = [0] * n_agents
        self._buckets: dict[int, list[int]] = {0: list(range(n_agents))}

    def pick(self, exclude: set[int]) -> int | None:
        if self.balanced:
            for level in sorted(self._buckets):
                candidates = [a for a in self._buckets[level] if a not in exclude]
                if candidates:
                    break
            else:
                return None
        else:
            candidates = [a for a in range(len(self.load)) if a not in exclude]
            if not candidates:
                return None
        chosen = candidates[int(self.gen.integers(len(candidates)))]
        level = self.load[chosen]
        bucket = self._buckets[level]
        bucket.pop(bisect.bisect_left(bucket, chosen))
        if not bucket:
            del self._buckets[level]
        self.load[chosen] += 1
        bisect.insort(self._buckets.setdefault(level + 1, []), chosen)
        return chosen


# -- reports ------------------------------------------------------------------


@dataclass
class CycleReport:
    cycle: int
    submissions: int = 0
    blocked_submissions: int = 0
    blocked_agents: list[str] = field(default_factory=list)
    papers_settled: int = 0
    loans_issued: int = 0
    defaults: int = 0
    reviews_paid: int = 0
    extra_reviews: int = 0
    replacement_reviews: int = 0
    unfunded_hires: int = 0
    revisions: int = 0
    challenges_filed: int = 0
    challenges_upheld: int = 0
    penalty_loans: int = 0
    reserve_drawn_mRC: int = 0
    treasury_mRC: int = 0
    escrow_mRC: int = 0
    loans_outstanding_mRC: int = 0
    treasury_position_mRC: int = 0
    treasury_drift_mRC: int = 0
    supply_mRC: int = 0
    sponsor_mRC: int = 0
    gini: float = 0.0
    conserved: bool = True

    CSV_COLUMNS = (
        "cycle",
        "submissions",
        "blocked",
        "reviews_paid",
        "challenges_upheld",
        "defaults",
        "treasury_mRC",
        "supply_mRC",
        "gini",
    )

    def csv_row(self) -> list[Any]:
        return [
            self.cycle,
            self.submissions,
            self.blocked_submissions,
            self.reviews_paid,
            self.challenges_upheld,
            self.defaults,
            self.treasury_mRC,
            self.supply_mRC,
            repr(self.gini),
        ]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SUMMARY_SKIP = {"cycle", "blocked_agents", "conserved"}


@dataclass
class SimulationReport:
    cycles: int
    metrics: dict[str, dict[str, float]]
    supply_conserved: bool
    chain_verified: bool | None
    final: CycleReport

    def to_dict(self) -> dict[str, Any]:
        return {
            "cycles": self.cycles,
            "metrics": self.metrics,
            "audit": {
                "supply_conserved": self.supply_conserved,
                "chain_verified": self.chain_verified,
            },
            "final": self.final.to_dict(),
        }


def compute_gini(balances: Sequence[int]) -> float:
    """Gini coefficient of non-negative holdings; 0 when everybody holds the same."""
    if len(balances) == 0:
        raise EmptyPopulation("Gini of an empty population")
    xs = sorted(int(b) for b in balances)
    if xs[0] < 0:
        raise ValueError("holdings must be non-negative")
    n, total = len(xs), sum(xs)
    if total == 0:
        return 0.0
    weighted = sum(i * x for i, x in enumerate(xs, start=1))
    return (2 * weighted - (n + 1) * total) / (n * total)


def summarize(reports: Sequence[CycleReport], ledger: Ledger | None = None) -> SimulationReport:
    """Per-metric min/max/mean plus a final audit of supply and chain integrity."""
    if not reports:
        raise ValueError("nothing to summarize")
    metrics: dict[str, dict[str, float]] = {}
    for f in fields(CycleReport):
        if f.name in _SUMMARY_SKIP:
            continue
        series = [getattr(r, f.name) for r in reports]
        metrics[f.name] = {
            "min": min(series),
            "max": max(series),
            "mean": sum(series) / len(series),
        }
    conserved = all(r.conserved for r in reports)
    verified = None
    if ledger is not None:
        verified = ledger.verify().ok
        try:
            state = replay(ledger.log, ledger.accounts)
            conserved = conserved and (
                sum(state.balances.values()) == state.total_minted == reports[-1].supply_mRC
            )
        except InvalidLog:
            conserved = False
    return SimulationReport(
        cycles=len(reports),
        metrics=metrics,
        supply_conserved=conserved,
        chain_verified=verified,
        final=reports[-1],
    )


# -- the simulation -------------------------------------------------------------


@dataclass
class Agent:
    index: int
    account: str
    profile: AgentProfile
    group: int
    sponsor: str | None = None


@dataclass
class _RoundWork:
    """Review work done in a synthetic (unpaid) round."""

    n: int
    records: list[WorkRecord]
    completed_all: list[str]
    reviewed: list[str]


class Simulation:
    """One scenario run; keeps the ledger and loan book for inspection."""

    def __init__(self, config: ScenarioConfig) -> None:
        config.validate()
        self.config = config
        self.template = config.conference
        self.tau = self.template.effective_tau
        self.rng = RngStreams(config.rng_seed)
        self.ledger = Ledger()
        self.loans = LoanBook()
        self.treasury, self.escrow = "rc:treasury", "rc:escrow"
        self.ledger.open_account(self.treasury, Role.TREASURY)
        self.ledger.open_account(self.escrow, Role.ESCROW)
        self.agents: list[Agent] = []
        self.sponsors: list[str] = []
        self.bootstrap_plan: BootstrapPlan | None = None
        self.bootstrap_info: dict[str, Any] | None = None
        self.conferences: list[Conference] = []
        self._carry_extra = 0
        self._carry_reserve = 0
        self._populate()

    # setup

    def _populate(self) -> None:
        width = max(4, len(str(sum(c for c, _ in self.config.population))))
        for group, (count, profile) in enumerate(self.config.population):
            sponsor = None
            if profile.sponsor_transfer_fraction > 0 and count:
                sponsor = f"sponsor-g{group}"
                self.ledger.open_account(sponsor, Role.SPONSOR)
                self.sponsors.append(sponsor)
            for _ in range(count):
                idx = len(self.agents)
                account = f"r{idx:0{width}d}"
                self.ledger.open_account(account, Role.RESEARCHER)
                self.agents.append(Agent(idx, account, profile, group, sponsor))
        endowment = sum(a.profile.initial_balance for a in self.agents)
        if endowment:
            self.ledger.mint(self.treasury, endowment, {"purpose": "endowment"})
            for a in self.agents:
                if a.profile.initial_balance:
                    self.ledger.transfer(
                        self.treasury, a.account, a.profile.initial_balance, memo={"purpose": "endowment"}
                    )
        if self.config.treasury_seed:
            self.ledger.mint(self.treasury, self.config.treasury_seed, {"purpose": "treasury-seed"})

    # shared mechanics

    def _planned_submissions(self, round_: int, cycle: int) -> list[Agent]:
        plan = []
        for a in self.agents:
            rate = a.profile.submission_rate
            whole = math.floor(rate)
            k = whole + int(self.rng.get(round_, cycle, "submit", a.index).random() < rate - whole)
            plan.extend([a] * k)
        return plan

    def _rosters(self, round_: int, cycle: int) -> dict[str, list[str]]:
        gen = self.rng.get(round_, cycle, "roster")
        rosters = {}
        for role in self.template.schedule.roles:
            size = min(self.template.roster_sizes.get(role.role_name, role.split_ways), len(self.agents))
            chosen = gen.choice(len(self.agents), size=size, replace=False) if size else []
            rosters[role.role_name] = [self.agents[int(i)].account for i in chosen]
        return rosters

    def _picker(self, round_: int, cycle: int) -> ReviewerPicker:
        return ReviewerPicker(
            len(self.agents), self.rng.get(round_, cycle, "assign"), self.config.assignment == "balanced"
        )

    def _review_outcome(self, agent: Agent, round_: int, cycle: int) -> tuple[bool, int]:
        """Does ``agent`` deliver an approved review?  Returns (approved, revision rounds).

        The review is abandoned if never written, or if the reviewer stops
        revising or exceeds ``max_revision_rounds``.
        """
        gen = self.rng.get(round_, cycle, "review", agent.index)
        prof = agent.profile
        if gen.random() >= prof.review_completion_prob:
            return False, 0
        rounds = 0
        while gen.random() >= prof.review_accept_prob:
            rounds += 1
            if rounds > self.config.max_revision_rounds or gen.random() >= prof.review_completion_prob:
                return False, rounds
        return True, rounds

    # synthetic rounds (history and the free conference)

    def _synthetic_round(self, round_: int) -> _RoundWork:
        plan = self._planned_submissions(round_, 0)
        rho = self.template.rho
        picker = self._picker(round_, 0)
        extra_gen = self.rng.get(round_, 0, "extras")
        extra_p = self.template.schedule.extra_review_rate / MRC_PER_RC
        approved = [0] * len(self.agents)
        assigned = [0] * len(self.agents)

        def attempt(on_paper: set[int]) -> bool:
            for _ in range(1 + self.config.max_replacements):
                r = picker.pick(on_paper)
                if r is None:
                    return False
                on_paper.add(r)
                assigned[r] += 1
                ok, _ = self._review_outcome(self.agents[r], round_, 0)
                if ok:
                    approved[r] += 1
                    return True
            return False

        for author in plan:
            on_paper = {author.index}
            for _ in range(rho):
                attempt(on_paper)
            if extra_gen.random() < extra_p:
                attempt(on_paper)

        role_papers: dict[str, dict[str, int]] = {}
        for role_name, roster in self._rosters(round_, 0).items():
            role = self.template.schedule.role(role_name)
            k = min(role.split_ways, len(roster))
            for j in range(len(plan) if k else 0):
                for t in range(k):
                    member = roster[(j * k + t) % len(roster)]
                    role_papers.setdefault(member, {}).setdefault(role_name, 0)
                    role_papers[member][role_name] += 1
        records = []
        for a in self.agents:
            if approved[a.index] or a.account in role_papers:
                records.append(WorkRecord(a.account, approved[a.index], role_papers.get(a.account, {})))
        return _RoundWork(
            n=len(plan),
            records=records,
            completed_all=[
                a.account for a in self.agents if assigned[a.index] and approved[a.index] == assigned[a.index]
            ],
            reviewed=[a.account for a in self.agents if approved[a.index]],
        )

    def _bootstrap(self) -> None:
        schedule = self.template.schedule
        history = self._synthetic_round(ROUND_HISTORY)
        n_hist = self.config.history_n if self.config.history_n is not None else history.n
        sigma = compute_sigma(n_hist, self.template.rho, self.tau)
        plan = plan_bootstrap(history.records, sigma, schedule=schedule, free_conference_id="free")
        execute_phase1(self.ledger, self.treasury, plan)
        free = self._synthetic_round(ROUND_FREE)
        plan = plan_phase2(plan, free.records, schedule)
        execute_phase2(self.ledger, self.treasury, plan)
        self.bootstrap_plan = plan
        self.bootstrap_info = {
            "history_n": n_hist,
            "free_n": free.n,
            "sigma_mRC": plan.sigma,
            "phase1_total_mRC": plan.phase1_total,
            "phase2_total_mRC": plan.phase2_total,
            "top_up_mRC": plan.top_up,
            "retained_mRC": plan.retained,
            "free_reviewers": free.reviewed,
            "free_reviewers_completed_all": free.completed_all,
        }
        self.rng.release(ROUND_HISTORY, 0)
        self.rng.release(ROUND_FREE, 0)

    # paid cycles

    def _modeled_defaults(self, planned: int, eligible: int) -> tuple[int, list[int]]:
        """Pick a default count and per-default paid reviews that realize the reserve rate.

        Prefers an exact solution (both the reserve and the extra-review
        budget land on whole coins for the surviving papers); otherwise
        falls back to carrying the fractional remainder into the next cycle.
        """
        sched = self.template.schedule
        max_paid = max(1, self.template.rho - 1)
        for w in range(0, min(planned, eligible) + 1):
            active = planned - w
            res_total = sched.default_reserve_rate * active + self._carry_reserve
            ext_total = sched.extra_review_rate * active + self._carry_extra
            if res_total % MRC_PER_RC or ext_total % MRC_PER_RC:
                continue
            units = res_total // MRC_PER_RC
            if units <= w * max_paid and (units == 0 or w > 0):
                return w, _spread(units, w, max_paid)
        w = 0
        for _ in range(16):
            units = (sched.default_reserve_rate * (planned - w) + self._carry_reserve) // MRC_PER_RC
            need = min(-(-units // max_paid), eligible, planned)
            if need == w:
                break
            w = need
        units = min(units, w * max_paid)
        return w, _spread(units, w, max_paid)

    def _submit(self, conf: Conference, agent: Agent, force_loan: bool) -> Paper | None:
        cost = conf.config.submission_cost
        acct = agent.account
        loans_ok = self.template.loans and not self.loans.open_for(acct)
        if force_loan and loans_ok:
            try:
                return conf.submit_paper(acct, use_loan=True)
            except InsufficientFunds:
                pass
        balance = self.ledger.get_balance(acct)
        if balance >= cost:
            return conf.submit_paper(acct)
        if agent.sponsor and self.ledger.get_balance(agent.sponsor) >= cost - balance:
            conf.transfer_contribution(agent.sponsor, acct, cost - balance)
            return conf.submit_paper(acct)
        if loans_ok:
            try:
                return conf.submit_paper(acct, use_loan=True)
            except InsufficientFunds:
                return None
        return None

    def _paid_review(
        self, conf: Conference, paper: Paper, agent: Agent, cycle: int, report: CycleReport
    ) -> bool:
        ok, rounds = self._review_outcome(agent, ROUND_PAID, cycle)
        if not ok and rounds == 0:
            return False
        review = conf.submit_review(agent.account, paper)
        for k in range(rounds):
            conf.request_revision(review)
            report.revisions += 1
            if not ok and k == rounds - 1:
                return False
            conf.submit_review(agent.account, paper)
        conf.approve_review(review)
        return True

    def _run_cycle(self, cycle: int) -> CycleReport:
        tpl = self.template
        report = CycleReport(cycle=cycle)
        first_seq = len(self.ledger) + 1
        config = ConferenceConfig(
            conference_id=f"rc-{cycle}",
            rho=tpl.rho,
            tau=self.tau,
            tax_schedule=tpl.schedule,
            treasury=self.treasury,
            escrow=self.escrow,
            loan_policy=LoanPolicy(enabled=tpl.loans),
            role_rosters=self._rosters(ROUND_PAID, cycle),
            payout_quantum=tpl.payout_quantum,
            allow_reserve_overdraw=tpl.allow_reserve_overdraw,
        )
        conf = open_submissions(self.ledger, config, self.loans)
        self.conferences.append(conf)
        modeled = self.config.exceptions == "modeled"

        # submissions
        plan = self._planned_submissions(ROUND_PAID, cycle)
        forced: dict[int, int] = {}
        if modeled and tpl.loans:
            candidates = sorted(
                {i for i, a in enumerate(plan) if not self.loans.open_for(a.account)},
                key=lambda i: i,
            )
            first_paper_of = {}
            for i in candidates:
                first_paper_of.setdefault(plan[i].index, i)
            eligible = sorted(first_paper_of.values())
            w, paid_before = self._modeled_defaults(len(plan), len(eligible))
            gen = self.rng.get(ROUND_PAID, cycle, "modeled-defaults")
            chosen = sorted(int(eligible[j]) for j in gen.choice(len(eligible), size=w, replace=False)) if w else []
            forced = dict(zip(chosen, paid_before))
        papers: list[tuple[Paper, Agent, int | None]] = []
        delinquent: set[int] = set()
        for i, agent in enumerate(plan):
            paper = self._submit(conf, agent, force_loan=i in forced)
            if paper is None:
                report.blocked_submissions += 1
                report.blocked_agents.append(agent.account)
                continue
            default_after = None
            if paper.funded_by_loan:
                report.loans_issued += 1
                if i in forced:
                    default_after = forced[i]
                elif not modeled:
                    g = self.rng.get(ROUND_PAID, cycle, "default", agent.index)
                    if g.random() < agent.profile.default_prob:
                        default_after = int(g.integers(tpl.rho))
            if default_after is not None:
                delinquent.add(agent.index)
            papers.append((paper, agent, default_after))
        report.submissions = len(papers)
        conf.close_submissions()

        # reviewing; delinquent borrowers write no reviews this cycle
        picker = self._picker(ROUND_PAID, cycle)
        on_paper: dict[str, set[int]] = {}
        for paper, author, _ in papers:
            taken = {author.index} | delinquent
            chosen = []
            for _ in range(tpl.rho):
                r = picker.pick(taken)
                if r is None:
                    raise ConfigInvalid("not enough eligible reviewers for rho")
                taken.add(r)
                chosen.append(r)
            conf.assign_reviewers(paper, [self.agents[r].account for r in chosen])
            on_paper[paper.paper_id] = {author.index, *chosen}

        role_rate = tpl.schedule.role_rate_total

        def headroom() -> int:
            # coins left for extra hires once the role pools are set aside
            n_active = sum(1 for p, _, _ in papers if p.active)
            return (
                self.ledger.get_balance(self.escrow)
                + self.ledger.get_balance(self.treasury)
                - role_rate * n_active
            )

        def hire_until_paid(paper: Paper, is_replacement: bool) -> bool:
            for _ in range(1 + self.config.max_replacements):
                if headroom() < MRC_PER_RC:
                    report.unfunded_hires += 1
                    return False
                r = picker.pick(on_paper[paper.paper_id] | delinquent)
                if r is None:
                    return False
                on_paper[paper.paper_id].add(r)
                conf.hire_extra_reviewer(paper, self.agents[r].account)
                if is_replacement:
                    report.replacement_reviews += 1
                else:
                    report.extra_reviews += 1
                if self._paid_review(conf, paper, self.agents[r], cycle, report):
                    return True
            return False

        # original reviews and defaults first; replacements wait until the
        # budget left for them is known
        missing: list[Paper] = []
        for paper, author, default_after in papers:
            paid = 0
            for account in list(paper.assigned_reviewers):
                if default_after is not None and paid >= default_after:
                    break
                agent = self.agents[self._index_of(account)]
                if self._paid_review(conf, paper, agent, cycle, report):
                    paid += 1
                elif default_after is None:
                    missing.append(paper)
            if default_after is not None:
                try:
                    conf.withdraw_on_default(paper)
                    report.defaults += 1
                except WrongStatus:
                    logger.debug("%s repaid before defaulting", author.account)
        for paper in missing:
            hire_until_paid(paper, is_replacement=True)

        active = [(p, a) for p, a, _ in papers if p.active]
        if active:
            gen = self.rng.get(ROUND_PAID, cycle, "extras")
            if modeled:
                total = tpl.schedule.extra_review_rate * len(active) + self._carry_extra
                count, self._carry_extra = divmod(total, MRC_PER_RC)
                order = gen.permutation(max(count, len(active)))[:count]
                targets = [active[int(j) % len(active)][0] for j in order]
            else:
                p_extra = tpl.schedule.extra_review_rate / MRC_PER_RC
                targets = [p for p, _ in active if gen.random() < p_extra]
            for paper in targets:
                hire_until_paid(paper, is_replacement=False)
        if modeled and tpl.loans:
            reserve_total = tpl.schedule.default_reserve_rate * len(active) + self._carry_reserve
            self._carry_reserve = reserve_total - conf.reserve_drawn
            if not 0 <= self._carry_reserve < MRC_PER_RC:
                self._carry_reserve = reserve_total % MRC_PER_RC

        # decisions and challenges
        conf.start_decisions()
        dgen = self.rng.get(ROUND_PAID, cycle, "decision")
        for paper, _ in active:
            conf.decide(paper, "accept" if dgen.random() < self.config.decision_accept_prob else "reject")
        if self.config.challenge_prob > 0:
            self._challenges(conf, active, picker, on_paper, cycle, report)

        conf.start_settlement()
        conf.settle()

        self._sponsor_transfers(first_seq)
        self._fill_balances(conf, report)
        self.rng.release(ROUND_PAID, cycle)
        return report

    def _challenges(self, conf, active, picker, on_paper, cycle, report) -> None:
        maxc = max_challenge_count(self.template.rho)
        if maxc < 1:
            return
        for paper, author in active:
            if paper.decision != "reject":
                continue
            g = self.rng.get(ROUND_PAID, cycle, "challenge", author.index)
            if g.random() >= self.config.challenge_prob:
                continue
            paid = [
                r for r in conf.reviews.values()
                if r.paper_id == paper.paper_id and not r.extra and r.status.value == "Paid"
            ]
            count = min(int(g.integers(1, maxc + 1)), len(paid))
            if count == 0 or self.ledger.get_balance(author.account) < count * MRC_PER_RC:
                continue
            # penalty loans come out of the treasury; keep settlement solvent
            spare = (
                self.ledger.get_balance(self.escrow)
                + self.ledger.get_balance(self.treasury)
                - self.template.schedule.role_rate_total * conf.n
            )
            if spare < count * MRC_PER_RC:
                continue
            ch = conf.file_challenge(author.account, paper, paid[:count])
            report.challenges_filed += 1
            # solicited challenge reviews are always delivered
            for _ in range(count):
                r = picker.pick(on_paper[paper.paper_id])
                if r is None:
                    break
                on_paper[paper.paper_id].add(r)
                conf.hire_extra_reviewer(paper, self.agents[r].account, challenge=ch)
                conf.approve_review(conf.submit_review(self.agents[r].account, paper))
                report.extra_reviews += 1
            upheld = g.random() < self.config.challenge_upheld_prob
            before = len(self.loans.loans)
            try:
                conf.resolve_challenge(ch, upheld)
            except ReviewerInsolvent:
                upheld = False
                conf.resolve_challenge(ch, False)
            report.penalty_loans += len(self.loans.loans) - before
            report.challenges_upheld += int(upheld)

    def _index_of(self, account: str) -> int:
        return int(account[1:])

    def _sponsor_transfers(self, first_seq: int) -> None:
        income: dict[str, int] = {}
        credited = (Kind.REVIEW_PAYMENT, Kind.TAX_DISBURSEMENT, Kind.CHALLENGE_REFUND)
        for tx in self.ledger.log[first_seq - 1:]:
            if tx.kind in credited:
                for account, delta in tx.entries:
                    if delta > 0:
                        income[account] = income.get(account, 0) + delta
        for agent in self.agents:
            frac = agent.profile.sponsor_transfer_fraction
            if not agent.sponsor or frac <= 0:
                continue
            share = Fraction(frac).limit_denominator(10**6) * income.get(agent.account, 0)
            amount = min(math.floor(share), self.ledger.get_balance(agent.account))
            if amount > 0:
                self.ledger.transfer(agent.account, agent.sponsor, amount, memo={"purpose": "sponsor"})

    def _treasury_position(self) -> int:
        return self.ledger.get_balance(self.treasury) + self.loans.outstanding(self.treasury)

    def _fill_balances(self, conf: Conference, report: CycleReport) -> None:
        ledger = self.ledger
        report.papers_settled = conf.n
        report.reviews_paid = sum(1 for r in conf.reviews.values() if r.status.value == "Paid")
        report.reserve_drawn_mRC = conf.reserve_drawn
        report.treasury_mRC = ledger.get_balance(self.treasury)
        report.escrow_mRC = ledger.get_balance(self.escrow)
        report.loans_outstanding_mRC = self.loans.outstanding(self.treasury)
        report.treasury_position_mRC = self._treasury_position()
        report.treasury_drift_mRC = report.treasury_position_mRC - self._last_position
        self._last_position = report.treasury_position_mRC
        report.supply_mRC = ledger.total_minted
        report.sponsor_mRC = sum(ledger.get_balance(s) for s in self.sponsors)
        report.gini = compute_gini([ledger.get_balance(a.account) for a in self.agents])
        report.conserved = sum(ledger.state().balances.values()) == ledger.total_minted

    def run(self) -> list[CycleReport]:
        if self.config.bootstrap:
            self._bootstrap()
        self._last_position = self._treasury_position()
        return [self._run_cycle(c) for c in range(1, self.config.cycles + 1)]


def _spread(units: int, slots: int, cap: int) -> list[int]:
    out = []
    for _ in range(slots):
        take = min(cap, units)
        out.append(take)
        units -= take
    return out


def run_scenario(config: ScenarioConfig) -> list[CycleReport]:
    return Simulation(config).run()
