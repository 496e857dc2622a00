"""Text formatting of floats for machine-readable output."""

from __future__ import annotations

import math

MIN_SIG_DIGITS = 10


def format_float(x: float) -> str:
    """Shortest round-trip repr, widened to at least ten significant digits.

    Non-finite values come back as ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    r = repr(x)
    mantissa = r.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
    if len(mantissa) >= MIN_SIG_DIGITS:
        return r
    # trailing zeros only; the value is unchanged
    return f"{x:#.{MIN_SIG_DIGITS}g}"
