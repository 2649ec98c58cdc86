"""Submission pricing: the per-paper tax, submission cost and total outlay.

All amounts are millicoins.  The tax is kept exact; rounding to whole
coins is a separate, explicit policy step (:func:`round_tau`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import ConfigInvalid
from .units import MRC_PER_RC


@dataclass(frozen=True)
class RoleRate:
    """Pay accrued by one conference role for every submitted paper.

    ``per_paper_rate`` is pooled: when ``split_ways`` people share a paper
    (three track chairs, say) they split that one rate between them.
    """

    role_name: str
    per_paper_rate: int
    split_ways: int = 1

    def __post_init__(self) -> None:
        if not self.role_name:
            raise ConfigInvalid("role needs a name")
        if self.per_paper_rate <= 0:
            raise ConfigInvalid(f"{self.role_name}: per_paper_rate must be > 0")
        if self.split_ways < 1:
            raise ConfigInvalid(f"{self.role_name}: split_ways must be >= 1")


@dataclass(frozen=True)
class TaxSchedule:
    roles: tuple[RoleRate, ...] = ()
    extra_review_rate: int = 0
    default_reserve_rate: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "roles", tuple(self.roles))
        if self.extra_review_rate < 0 or self.default_reserve_rate < 0:
            raise ConfigInvalid("tax components must be non-negative")
        names = [r.role_name for r in self.roles]
        if len(set(names)) != len(names):
            raise ConfigInvalid("duplicate role names in schedule")

    @property
    def role_rate_total(self) -> int:
        return sum(r.per_paper_rate for r in self.roles)

    def role(self, name: str) -> RoleRate:
        for r in self.roles:
            if r.role_name == name:
                return r
        raise KeyError(name)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TaxSchedule":
        try:
            roles = tuple(
                RoleRate(
                    role_name=str(r["role_name"]),
                    per_paper_rate=_as_int(r["per_paper_rate"]),
                    split_ways=_as_int(r.get("split_ways", 1)),
                )
                for r in data.get("roles", [])
            )
            return cls(
                roles=roles,
                extra_review_rate=_as_int(data.get("extra_review_rate", 0)),
                default_reserve_rate=_as_int(data.get("default_reserve_rate", 0)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigInvalid(f"malformed tax schedule: {exc!r}") from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "roles": [
                {
                    "role_name": r.role_name,
                    "per_paper_rate": r.per_paper_rate,
                    "split_ways": r.split_ways,
                }
                for r in self.roles
            ],
            "extra_review_rate": self.extra_review_rate,
            "default_reserve_rate": self.default_reserve_rate,
        }


def _as_int(value: Any) -> int:
    if type(value) is not int:
        raise ConfigInvalid(f"expected integer millicoins, got {value!r}")
    return value


@dataclass(frozen=True)
class PricingParams:
    rho: int
    tau: int
    n: int = 0

    def __post_init__(self) -> None:
        if self.rho < 1:
            raise ConfigInvalid("rho must be >= 1")
        if self.tau < 0:
            raise ConfigInvalid("tau must be >= 0")
        if self.n < 0:
            raise ConfigInvalid("n must be >= 0")


def neurips_db_schedule() -> TaxSchedule:
    """Pay schedule modeled on the NeurIPS 2024 Datasets & Benchmarks track."""
    return TaxSchedule(
        roles=(
            RoleRate("Track Chairs", 125, split_ways=3),
            RoleRate("Senior Area Chairs", 250),
            RoleRate("Area Chairs", 500),
        ),
        extra_review_rate=200,
        default_reserve_rate=50,
    )


def compute_tau(schedule: TaxSchedule) -> int:
    return schedule.role_rate_total + schedule.extra_review_rate + schedule.default_reserve_rate


def round_tau(tau_exact: int) -> int:
    """Round to the nearest whole coin, ties to even."""
    if tau_exact < 0:
        raise ValueError("tau must be non-negative")
    whole, rem = divmod(tau_exact, MRC_PER_RC)
    if rem * 2 > MRC_PER_RC or (rem * 2 == MRC_PER_RC and whole % 2 == 1):
        whole += 1
    return whole * MRC_PER_RC


def submission_cost(params: PricingParams) -> int:
    return params.rho * MRC_PER_RC + params.tau


def total_outlay(params: PricingParams) -> int:
    return params.n * submission_cost(params)


@dataclass
class TaxBreakdown:
    """Where the tax pool of one settled conference is meant to go."""

    n: int
    role_pools: dict[str, int] = field(default_factory=dict)
    extra_reviews: int = 0
    default_reserve: int = 0

    @classmethod
    def for_papers(cls, schedule: TaxSchedule, n: int) -> "TaxBreakdown":
        return cls(
            n=n,
            role_pools={r.role_name: r.per_paper_rate * n for r in schedule.roles},
            extra_reviews=schedule.extra_review_rate * n,
            default_reserve=schedule.default_reserve_rate * n,
        )

    @property
    def total(self) -> int:
        return sum(self.role_pools.values()) + self.extra_reviews + self.default_reserve
