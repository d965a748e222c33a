"""Small shared helpers."""

import math


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero (for x >= 0).

    All token-budget arithmetic in this package uses this one convention so
    that selector budgets, baseline budgets, and sequence-length predictions
    agree exactly. The input is first rounded to 9 decimals so that products
    of decimal rates (e.g. (1 - 0.9) * 5) land on their intended value
    rather than on float representation noise.
    """
    if x < 0:
        raise ValueError(f"expected a non-negative value, got {x}")
    return int(math.floor(round(x, 9) + 0.5))


def ceil_fraction(x: float) -> int:
    """Ceiling after absorbing float representation noise (9 decimals)."""
    if x < 0:
        raise ValueError(f"expected a non-negative value, got {x}")
    return int(math.ceil(round(x, 9)))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)
