"""Largest-remainder (Hamilton) apportionment over exact rationals."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def largest_remainder(total: int, weights: Sequence[int | Fraction]) -> list[int]:
    """Split ``total`` integer units among ``weights`` pro rata.

    Each share is first floored; the units left over go one apiece to the
    largest fractional remainders, ties broken by lower index.  The result
    always sums to ``total`` and every share is within one unit of its
    exact quota.
    """
    if total < 0:
        raise ValueError("total must be non-negative")
    if not weights:
        raise ValueError("no weights to apportion over")
    fweights = [Fraction(w) for w in weights]
    if any(w < 0 for w in fweights):
        raise ValueError("weights must be non-negative")
    weight_sum = sum(fweights)
    if weight_sum == 0:
        raise ValueError("weights sum to zero")

    quotas = [total * w / weight_sum for w in fweights]
    shares = [q.numerator // q.denominator for q in quotas]
    leftover = total - sum(shares)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - shares[i]), i))
    for i in order[:leftover]:
        shares[i] += 1
    return shares


def apportion_in_quanta(
    total: int, weights: Sequence[int | Fraction], quantum: int = 1
) -> tuple[list[int], int]:
    """Apportion ``total`` in whole multiples of ``quantum``.

    Returns ``(shares, residue)`` where ``residue = total mod quantum`` is
    the part that cannot be paid out in whole quanta.
    """
    if quantum < 1:
        raise ValueError("quantum must be >= 1")
    units, residue = divmod(total, quantum)
    return [s * quantum for s in largest_remainder(units, weights)], residue
