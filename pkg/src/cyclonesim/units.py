"""Unit parsing at the data/config boundary.

All model code works in SI. Quantities in data and scenario files are
strings such as ``"0.9452 bar"`` or ``"321.65 degC"``; :func:`to_si`
converts them to a float in the requested SI unit.
"""
from functools import lru_cache

import pint

ureg = pint.UnitRegistry()
Q_ = ureg.Quantity


class UnitError(ValueError):
    pass


@lru_cache(maxsize=4096)
def _parse(text):
    text = text.strip()
    head, _, unit = text.partition(" ")
    try:
        magnitude = float(head)
    except ValueError:
        raise UnitError(f"cannot read a number from {text!r}") from None
    unit = unit.strip()
    if not unit:
        return Q_(magnitude, "dimensionless")
    try:
        return Q_(magnitude, unit)
    except (pint.errors.UndefinedUnitError, AttributeError, TypeError) as exc:
        raise UnitError(f"unknown unit in {text!r}: {exc}") from None


def to_si(value, unit):
    """Convert a ``"<number> <unit>"`` string (or bare number) to ``unit``.

    Bare numbers are taken to already be in ``unit``.
    """
    if isinstance(value, bool):
        raise UnitError(f"expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"expected a quantity string, got {value!r}")
    q = _parse(value)
    try:
        return float(q.to(unit).magnitude)
    except pint.errors.DimensionalityError:
        raise UnitError(f"{value!r} is not convertible to {unit}") from None


def fmt(value, unit, digits=17):
    """Format a float as a quantity string, round-trip exact by default."""
    return f"{value:.{digits}g} {unit}"
