"""Fixed-point coin amounts.

Every amount in the package is an ``int`` counted in millicoins (mRC);
``1 RC == 1000 mRC``.  Conversion to and from human-readable RC strings
goes through :class:`decimal.Decimal` so no float ever touches a balance.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation

MRC_PER_RC = 1000
REVIEW_PAY = MRC_PER_RC  # one approved review earns one coin


def rc(value: int | str | Decimal) -> int:
    """Convert an RC quantity to millicoins, refusing anything finer than 1 mRC.

    >>> rc("1.125")
    1125
    >>> rc(4)
    4000
    """
    try:
        dec = Decimal(str(value))
    except InvalidOperation as exc:
        raise ValueError(f"not a coin amount: {value!r}") from exc
    scaled = dec * MRC_PER_RC
    if scaled != scaled.to_integral_value():
        raise ValueError(f"{value!r} RC is not a whole number of millicoins")
    return int(scaled)


def format_rc(mrc: int) -> str:
    """Render millicoins as RC with exactly three decimals."""
    sign = "-" if mrc < 0 else ""
    whole, frac = divmod(abs(mrc), MRC_PER_RC)
    return f"{sign}{whole}.{frac:03d}"
