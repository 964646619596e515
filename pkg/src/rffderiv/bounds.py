"""Finite-sample uniform error bound for RFF kernel-derivative estimates.

With probability at least ``1 - 2 exp(-t)`` over ``m`` i.i.d. frequencies,

    sup_{x,y in S} |d^{p,q}k - estimate|
        < sigma_pq * ( C3 sqrt(d ln(16 |S| C_pq + 4)) / sqrt(m)
                       + C1 / sqrt(m) + C2 / m
                       + 24 sqrt(6) / sqrt(m) * (sqrt(t) + L_m t / 2) )

where ``C1 = 14 sqrt(6 ln 2) + 1``, ``C2 = 36 K (ln 2 + 1)``,
``C3 = 7 sqrt(6) (1 + sqrt(pi) / ln(2)^1.5)`` and ``L_m = sqrt(6) K / (2 sqrt(m))``,
provided the Bernstein condition holds with constant ``K``.  The constants
are evaluated as stated, without tightening.
"""

import json
import math
from dataclasses import asdict, dataclass, replace

from .errors import InvalidArgument, Unreachable

LN2 = math.log(2.0)
C1 = 14.0 * math.sqrt(6.0 * LN2) + 1.0
C3 = 7.0 * math.sqrt(6.0) * (1.0 + math.sqrt(math.pi) / LN2 ** 1.5)
DEVIATION_SCALE = 24.0 * math.sqrt(6.0)

_M_LIMIT = 2 ** 62


def c2_constant(K):
    return 36.0 * K * (LN2 + 1.0)


def lipschitz_scale(K, m):
    """``L_m = sqrt(6) K / (2 sqrt(m))``."""
    return math.sqrt(6.0) * K / (2.0 * math.sqrt(m))


@dataclass(frozen=True)
class BoundInputs:
    m: int
    diameter: float
    d: int
    sigma_pq: float
    c_pq: float
    K: float
    t: float

    def validate(self):
        if not self.m > 0:
            raise InvalidArgument(f"m must be positive, got {self.m}")
        if not self.t > 0:
            raise InvalidArgument(f"t must be positive, got {self.t}")
        if not self.diameter >= 0:
            raise InvalidArgument(f"diameter must be non-negative, got {self.diameter}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgument(f"d must be a positive integer, got {self.d}")
        if not self.sigma_pq > 0:
            raise InvalidArgument(f"sigma_pq must be positive, got {self.sigma_pq}")
        if not self.c_pq > 0:
            raise InvalidArgument(f"c_pq must be positive, got {self.c_pq}")
        if not self.K >= 1:
            raise InvalidArgument(f"K must be >= 1, got {self.K}")
        return self


@dataclass(frozen=True)
class BoundReport:
    """Bound value with its additive breakdown (before scaling by ``sigma_pq``).

    ``total = volume_factor * sigma_pq * (entropy_term + c1_term + c2_term
    + deviation_term)``; ``volume_factor`` is 1 for the uniform bound.
    """

    total: float
    entropy_term: float
    c1_term: float
    c2_term: float
    deviation_term: float
    C1: float
    C2: float
    C3: float
    L_m: float
    failure_probability: float
    sigma_pq: float
    volume_factor: float = 1.0
    r: float | None = None

    @property
    def terms(self):
        return {
            "entropy_term": self.entropy_term,
            "c1_term": self.c1_term,
            "c2_term": self.c2_term,
            "deviation_term": self.deviation_term,
        }

    @property
    def constants(self):
        return {"C1": self.C1, "C2": self.C2, "C3": self.C3, "L_m": self.L_m}

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _report(inputs, entropy_multiplier, volume_factor=1.0, r=None):
    inputs.validate()
    m = float(inputs.m)
    sqrt_m = math.sqrt(m)
    c2 = c2_constant(inputs.K)
    l_m = lipschitz_scale(inputs.K, m)
    log_arg = 16.0 * inputs.diameter * inputs.c_pq + 4.0
    entropy = C3 * math.sqrt(entropy_multiplier * inputs.d * math.log(log_arg)) / sqrt_m
    c1_term = C1 / sqrt_m
    c2_term = c2 / m
    deviation = DEVIATION_SCALE / sqrt_m * (math.sqrt(inputs.t) + 0.5 * l_m * inputs.t)
    total = volume_factor * inputs.sigma_pq * (entropy + c1_term + c2_term + deviation)
    return BoundReport(
        total=total,
        entropy_term=entropy,
        c1_term=c1_term,
        c2_term=c2_term,
        deviation_term=deviation,
        C1=C1,
        C2=c2,
        C3=C3,
        L_m=l_m,
        failure_probability=2.0 * math.exp(-inputs.t),
        sigma_pq=inputs.sigma_pq,
        volume_factor=volume_factor,
        r=r,
    )


def uniform_bound(inputs):
    """Sup-norm bound over ``S x S`` holding with probability ``>= 1 - 2e^-t``."""
    return _report(inputs, 1.0)


def volume_factor(diameter, d, r):
    """``[pi^(d/2) |S|^d / (2^d Gamma(d/2 + 1))]^(2/r)``, the ball-volume bound on vol(S)^(2/r)."""
    base = math.pi ** (0.5 * d) * diameter ** d / (2.0 ** d * math.gamma(0.5 * d + 1.0))
    return base ** (2.0 / r)


def lr_bound(inputs, r):
    """``L^r(S x S)`` bound for ``1 <= r < inf``.

    Multiplies the uniform-bound structure by :func:`volume_factor`.  The
    entropy term carries ``sqrt(2 d ln(...))`` rather than the uniform
    bound's ``sqrt(d ln(...))``; the factor is kept as published even though
    the volume argument alone would not produce it.
    """
    if not r >= 1:
        raise InvalidArgument(f"r must be >= 1, got {r}")
    inputs.validate()
    return _report(inputs, 2.0, volume_factor(inputs.diameter, inputs.d, r), r)


def required_m(inputs, target_error):
    """Smallest ``m`` with ``uniform_bound(...).total <= target_error``.

    ``inputs.m`` is ignored.  Doubling locates a bracket, bisection then
    finds the threshold; correctness relies on the bound decreasing in ``m``.
    """
    if not target_error > 0:
        raise InvalidArgument(f"target_error must be positive, got {target_error}")

    def total(m):
        return uniform_bound(replace(inputs, m=m)).total

    if total(1) <= target_error:
        return 1
    hi = 2
    while total(hi) > target_error:
        if hi >= _M_LIMIT:
            raise Unreachable(f"bound stays above {target_error} for all m <= 2**62")
        hi *= 2
    lo = hi // 2  # total(lo) > target
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if total(mid) <= target_error:
            hi = mid
        else:
            lo = mid
    return hi


__all__ = [
    "C1",
    "C3",
    "LN2",
    "DEVIATION_SCALE",
    "c2_constant",
    "lipschitz_scale",
    "BoundInputs",
    "BoundReport",
    "uniform_bound",
    "lr_bound",
    "volume_factor",
    "required_m",
]
