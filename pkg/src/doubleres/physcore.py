"""Physical constants, unit-tagged quantities and the quantity text grammar.

A :class:`Quantity` is a plain ``(value, dimension)`` pair stored in base SI
units. Logarithmic power (dBm) is its own dimension and must be converted
explicitly with :func:`dbm_to_watts` before it can be combined with linear
powers.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import scipy.constants as _sc

__all__ = [
    "Dimension",
    "Quantity",
    "QuantityParseError",
    "DimensionError",
    "H",
    "MU_B",
    "K_B",
    "C",
    "MUB_OVER_H",
    "parse_quantity",
    "format_quantity",
    "dbm_to_watts",
    "watts_to_dbm",
    "apply_attenuation",
    "parse_unit_header",
]

# CODATA values as shipped with scipy
H = _sc.h
MU_B = _sc.physical_constants["Bohr magneton"][0]
K_B = _sc.k
C = _sc.c
MUB_OVER_H = MU_B / H  # Hz/T


class Dimension(enum.Enum):
    FREQUENCY = "frequency"
    MAGNETIC_FLUX_DENSITY = "magnetic-flux-density"
    POWER = "power"
    POWER_LOG = "power-log"
    TEMPERATURE = "temperature"
    TIME = "time"
    LENGTH = "length"
    DIMENSIONLESS = "dimensionless"


class DimensionError(ValueError):
    """Raised when quantities of different dimensions are combined."""


class QuantityParseError(ValueError):
    """Malformed quantity text.

    ``kind`` is one of ``"empty"``, ``"number"`` or ``"unit"``; ``offset`` is
    the byte offset into the original text where the problem starts.
    """

    def __init__(self, kind: str, offset: int, text: str):
        self.kind = kind
        self.offset = offset
        self.text = text
        super().__init__(f"{kind} error at offset {offset} in {text!r}")


# unit -> (dimension, scale to base SI)
_UNITS: dict[str, tuple[Dimension, float]] = {
    "Hz": (Dimension.FREQUENCY, 1.0),
    "kHz": (Dimension.FREQUENCY, 1e3),
    "MHz": (Dimension.FREQUENCY, 1e6),
    "GHz": (Dimension.FREQUENCY, 1e9),
    "THz": (Dimension.FREQUENCY, 1e12),
    "T": (Dimension.MAGNETIC_FLUX_DENSITY, 1.0),
    "mT": (Dimension.MAGNETIC_FLUX_DENSITY, 1e-3),
    "W": (Dimension.POWER, 1.0),
    "mW": (Dimension.POWER, 1e-3),
    "dBm": (Dimension.POWER_LOG, 1.0),
    "K": (Dimension.TEMPERATURE, 1.0),
    "s": (Dimension.TIME, 1.0),
    "ms": (Dimension.TIME, 1e-3),
    "m": (Dimension.LENGTH, 1.0),
    "mm": (Dimension.LENGTH, 1e-3),
    "ppm": (Dimension.DIMENSIONLESS, 1e-6),
    "%": (Dimension.DIMENSIONLESS, 1e-2),
    "": (Dimension.DIMENSIONLESS, 1.0),
}

_BASE_UNIT = {
    Dimension.FREQUENCY: "Hz",
    Dimension.MAGNETIC_FLUX_DENSITY: "T",
    Dimension.POWER: "W",
    Dimension.POWER_LOG: "dBm",
    Dimension.TEMPERATURE: "K",
    Dimension.TIME: "s",
    Dimension.LENGTH: "m",
    Dimension.DIMENSIONLESS: "",
}

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(frozen=True)
class Quantity:
    value: float
    dimension: Dimension

    def _check(self, other: "Quantity") -> None:
        if not isinstance(other, Quantity):
            raise TypeError(f"expected Quantity, got {type(other).__name__}")
        if other.dimension is not self.dimension:
            raise DimensionError(
                f"cannot combine {self.dimension.value} with {other.dimension.value}"
            )
        if self.dimension is Dimension.POWER_LOG:
            raise DimensionError("dBm values do not add linearly; convert to W first")

    def __add__(self, other: "Quantity") -> "Quantity":
        self._check(other)
        return Quantity(self.value + other.value, self.dimension)

    def __sub__(self, other: "Quantity") -> "Quantity":
        self._check(other)
        return Quantity(self.value - other.value, self.dimension)

    def __mul__(self, factor: float) -> "Quantity":
        if isinstance(factor, Quantity):
            raise DimensionError("quantity products are outside the fixed dimension set")
        if self.dimension is Dimension.POWER_LOG:
            raise DimensionError("scaling a dBm value is ambiguous; convert to W first")
        return Quantity(self.value * factor, self.dimension)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Quantity):
            if other.dimension is not self.dimension:
                raise DimensionError(
                    f"cannot divide {self.dimension.value} by {other.dimension.value}"
                )
            return self.value / other.value
        return self * (1.0 / other)

    def __neg__(self) -> "Quantity":
        return self * -1.0

    def __lt__(self, other: "Quantity") -> bool:
        if other.dimension is not self.dimension:
            raise DimensionError("cannot compare different dimensions")
        return self.value < other.value

    def __float__(self) -> float:
        return float(self.value)

    def to(self, unit: str) -> float:
        """Numeric value expressed in ``unit`` (which must share the dimension)."""
        dim, scale = _UNITS[unit]
        if dim is not self.dimension:
            raise DimensionError(f"{unit!r} is not a {self.dimension.value} unit")
        return self.value / scale


def parse_quantity(text: str) -> Quantity:
    """Parse ``"<decimal><whitespace?><unit>"`` into a base-SI :class:`Quantity`."""
    if not isinstance(text, str):
        raise TypeError("quantity text must be a string")
    start = len(text) - len(text.lstrip())
    body = text.strip()
    if not body:
        raise QuantityParseError("empty", 0, text)
    m = _NUMBER.match(body)
    if m is None:
        raise QuantityParseError("number", _byte_offset(text, start), text)
    unit_pos = m.end()
    rest = body[unit_pos:]
    unit = rest.strip()
    if rest and not rest[0].isspace() and rest[0] not in "%" and not rest[0].isalpha():
        # e.g. "1.2.3 GHz" or "5e GHz"
        raise QuantityParseError("number", _byte_offset(text, start + unit_pos), text)
    if unit not in _UNITS:
        unit_start = start + unit_pos + (len(rest) - len(rest.lstrip()))
        raise QuantityParseError("unit", _byte_offset(text, unit_start), text)
    dim, scale = _UNITS[unit]
    return Quantity(float(m.group(0)) * scale, dim)


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def format_quantity(q: Quantity) -> str:
    """Canonical text form, parseable by :func:`parse_quantity` without loss."""
    unit = _BASE_UNIT[q.dimension]
    number = repr(float(q.value))
    return f"{number} {unit}" if unit else number


def unit_info(unit: str) -> tuple[Dimension, float]:
    """``(dimension, scale)`` for a unit symbol of the quantity grammar."""
    try:
        return _UNITS[unit]
    except KeyError:
        raise QuantityParseError("unit", 0, unit) from None


def parse_unit_header(header: str) -> tuple[str, str]:
    """Split a CSV header ``name(unit)`` into ``(name, unit)``."""
    m = re.fullmatch(r"\s*([^()]+?)\s*\(([^()]*)\)\s*", header)
    if m is None:
        raise QuantityParseError("unit", 0, header)
    name, unit = m.group(1), m.group(2).strip()
    if unit not in _UNITS:
        raise QuantityParseError("unit", header.index("(") + 1, header)
    return name, unit


def dbm_to_watts(p: Quantity) -> Quantity:
    if p.dimension is not Dimension.POWER_LOG:
        raise DimensionError("dbm_to_watts expects a dBm quantity")
    return Quantity(1e-3 * 10.0 ** (p.value / 10.0), Dimension.POWER)


def watts_to_dbm(p: Quantity) -> Quantity:
    if p.dimension is not Dimension.POWER:
        raise DimensionError("watts_to_dbm expects a power in W")
    if p.value <= 0:
        raise ValueError("dBm is undefined for non-positive power")
    return Quantity(10.0 * math.log10(p.value / 1e-3), Dimension.POWER_LOG)


def apply_attenuation(p: Quantity, loss_db: float) -> Quantity:
    """Power after ``loss_db`` decibels of insertion loss."""
    if p.dimension is not Dimension.POWER:
        raise DimensionError("attenuation applies to linear power")
    if loss_db < 0:
        raise ValueError("loss must be non-negative")
    return Quantity(p.value * 10.0 ** (-loss_db / 10.0), Dimension.POWER)


def as_watts(p: Quantity | float) -> float:
    """Linear power in W from a W or dBm quantity (floats are taken as W)."""
    if isinstance(p, Quantity):
        if p.dimension is Dimension.POWER_LOG:
            return dbm_to_watts(p).value
        if p.dimension is not Dimension.POWER:
            raise DimensionError("expected a power")
        return p.value
    return float(p)
