import math

from .errors import ParameterError


def normal_sf(z: float) -> float:
    """Upper tail of the standard normal, via ``erfc``."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def two_proportion_ztest(k1: int, n1: int, k2: int, n2: int):
    """Pooled two-proportion z-test; returns ``(z, two_sided_p)``.

    If the pooled proportion is 0 or 1 the standard error vanishes; equal
    rates then give ``z = 0, p = 1``.
    """
    if n1 < 1 or n2 < 1:
        raise ParameterError("sample sizes must be at least 1")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ParameterError(f"successes must lie in [0, n]: got {k1}/{n1}, {k2}/{n2}")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0.0:
        # pooled rate of 0 or 1 forces p1 == p2
        return 0.0, 1.0
    z = (p1 - p2) / se
    return z, min(1.0, 2.0 * normal_sf(abs(z)))


def parse_proportion(text: str):
    """``"8/10"`` -> ``(8, 10)``."""
    try:
        k, n = text.split("/")
        return int(k), int(n)
    except ValueError:
        raise ParameterError(f"expected a proportion like 8/10, got {text!r}") from None
