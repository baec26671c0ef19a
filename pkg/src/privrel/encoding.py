"""Fixed-point decimal encoding of reals as integers with an explicit scale.

An ``EncodedValue(m, s)`` stands for ``m * 10**-s``.  Sums require equal
scales; products add scales.  Encoding rounds half away from zero and is
exact: the binary float is converted to a Decimal without loss first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext

from privrel.errors import InputError, PrecisionError


@dataclass(frozen=True)
class EncodedValue:
    integer: int
    scale: int

    def __post_init__(self):
        if self.scale < 0:
            raise PrecisionError(f"scale must be non-negative, got {self.scale}")

    def __add__(self, other: "EncodedValue") -> "EncodedValue":
        return add(self, other)

    def __mul__(self, other: "EncodedValue") -> "EncodedValue":
        return multiply(self, other)

    def __float__(self) -> float:
        return decode(self)

    def __str__(self) -> str:
        return to_decimal_string(self)


def encode(y: float, kappa: int) -> EncodedValue:
    """round(10**kappa * y), ties away from zero."""
    if kappa < 0:
        raise PrecisionError(f"kappa must be non-negative, got {kappa}")
    if not math.isfinite(y):
        raise InputError(f"cannot encode non-finite value {y!r}")
    exact = Decimal(y)
    with localcontext() as ctx:
        # enough digits that neither scaling nor quantizing rounds early
        ctx.prec = len(exact.as_tuple().digits) + kappa + 8
        ctx.Emax = ctx.prec + kappa + 400
        m = int(exact.scaleb(kappa).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return EncodedValue(m, kappa)


def decode(v: EncodedValue) -> float:
    # int / int is correctly rounded in Python
    return v.integer / 10**v.scale


def add(a: EncodedValue, b: EncodedValue) -> EncodedValue:
    if a.scale != b.scale:
        raise PrecisionError(
            f"cannot add values at scales {a.scale} and {b.scale}; encodings with different "
            "precision need an explicit adjustment first"
        )
    return EncodedValue(a.integer + b.integer, a.scale)


def multiply(a: EncodedValue, b: EncodedValue) -> EncodedValue:
    return EncodedValue(a.integer * b.integer, a.scale + b.scale)


def rescale(v: EncodedValue, scale: int) -> EncodedValue:
    """Exact move to a larger scale (multiplies the integer by a power of ten)."""
    if scale < v.scale:
        raise PrecisionError(f"cannot lower scale {v.scale} to {scale} without rounding")
    return EncodedValue(v.integer * 10 ** (scale - v.scale), scale)


def to_decimal_string(v: EncodedValue) -> str:
    """Exact decimal rendering, e.g. (13, 2) -> '0.13'."""
    sign = "-" if v.integer < 0 else ""
    digits = str(abs(v.integer))
    if v.scale == 0:
        return sign + digits
    digits = digits.rjust(v.scale + 1, "0")
    return f"{sign}{digits[:-v.scale]}.{digits[-v.scale:]}"


def from_decimal_string(text: str) -> EncodedValue:
    """Inverse of ``to_decimal_string``; the scale is the number of fraction digits."""
    try:
        d = Decimal(text.strip())
    except Exception:
        raise InputError(f"not a decimal number: {text!r}") from None
    if not d.is_finite():
        raise InputError(f"not a finite decimal: {text!r}")
    sign, digits, exponent = d.as_tuple()
    scale = max(0, -exponent)
    m = int("".join(map(str, digits)) or "0") * 10 ** max(0, exponent)
    return EncodedValue(-m if sign else m, scale)
