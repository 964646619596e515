"""Spectral measures of shift-invariant kernels.

A kernel ``k(x, y) = E_w cos(w^T (x - y))`` is described here by its
spectral probability measure, restricted to products of one-dimensional
marginals from two families:

* ``Gaussian(sigma)``: centered normal with variance ``sigma**2``
  (the Gaussian kernel ``exp(-sigma**2 z**2 / 2)``);
* ``GeneralizedGaussian(ell)``: density ``c_ell * exp(-w**(2 ell))`` with
  ``c_ell = ell / Gamma(1 / (2 ell))``.

Besides sampling, the module evaluates absolute moments in closed form and
certifies the Bernstein moment-growth condition

    A_{r,n} <= n!/2 * K**(n-2),   n = 2, 3, ...

numerically, where ``A_{r,n} = E|w|^(rn) / (E|w|^(2r))^(n/2)``.  All
factorial and Gamma arithmetic is carried out in log space.
"""

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammainccinv, gammaln

from ._stream import UniformStream
from .errors import InvalidArgument, OutOfScopeOrder, UnsupportedDimension

#: Positive root of the digamma function, where Gamma attains its minimum on (0, inf).
Z_MIN = 1.4616321449683623

_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)

# log-space comparisons use this slack so that exact equalities such as
# A_{r,2} = 1 = 2!/2 are not flagged by rounding in lgamma
_LOG_TOL = 1e-12


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Centered normal marginal with standard deviation ``sigma``."""

    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidArgument(f"sigma must be positive and finite, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))

    kind = "gaussian"

    def pdf(self, w):
        w = np.asarray(w, dtype=float) / self.sigma
        return np.exp(-0.5 * w * w) / (self.sigma * math.sqrt(2.0 * math.pi))

    def log_abs_moment(self, n):
        # E|X|^n = sigma^n 2^(n/2) Gamma((n+1)/2) / sqrt(pi), which is
        # sigma^n (n-1)!! for even n and sigma^n (n-1)!! sqrt(2/pi) for odd n
        n = float(n)
        return n * math.log(self.sigma) + 0.5 * n * _LOG_2 + gammaln(0.5 * (n + 1.0)) - 0.5 * _LOG_PI

    def tail_cutoff(self, n, tol):
        """Smallest ``U`` with ``int_U^inf w**n pdf(w) dw <= tol``."""
        a = 0.5 * (n + 1.0)
        x = _inverse_tail(a, self.log_abs_moment(n), tol)
        return self.sigma * math.sqrt(2.0 * x)

    def draw(self, stream, m):
        return self.sigma * stream.normal(m)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class GeneralizedGaussian:
    """Marginal with density ``c_ell * exp(-w**(2*ell))``."""

    ell: int = 1

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidArgument(f"ell must be a positive integer, got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))

    kind = "gengauss"

    @property
    def normalizer(self):
        return self.ell / math.gamma(1.0 / (2 * self.ell))

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        return self.normalizer * np.exp(-np.abs(w) ** (2 * self.ell))

    def log_abs_moment(self, n):
        two_ell = 2.0 * self.ell
        return gammaln((float(n) + 1.0) / two_ell) - gammaln(1.0 / two_ell)

    def tail_cutoff(self, n, tol):
        """Smallest ``U`` with ``int_U^inf w**n pdf(w) dw <= tol``."""
        a = (n + 1.0) / (2.0 * self.ell)
        x = _inverse_tail(a, self.log_abs_moment(n), tol)
        return x ** (1.0 / (2.0 * self.ell))

    def draw(self, stream, m):
        # y = |w|^(2 ell) ~ Gamma(1/(2 ell), 1); the sign is an independent coin
        a = 1.0 / (2.0 * self.ell)
        mag = stream.gamma_root(a, a, m)
        sign = np.where(stream.uniform(m) < 0.5, -1.0, 1.0)
        return sign * mag

    def to_dict(self):
        return {"kind": self.kind, "ell": self.ell}


def _inverse_tail(a, log_moment, tol):
    # the one-sided tail of w^n equals 0.5 * E|w|^n * Q(a, x) after the
    # substitution x = (w/sigma)^2/2 or x = w^(2 ell)
    level = tol / (0.5 * math.exp(log_moment))
    if level >= 1.0:
        return 0.0
    return float(gammainccinv(a, level))


Marginal = Gaussian | GeneralizedGaussian


def marginal_from_dict(obj):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidArgument(f"marginal descriptor needs a 'kind': {obj!r}")
    kind = obj["kind"]
    if kind == "gaussian":
        return Gaussian(float(obj.get("sigma", 1.0)))
    if kind == "gengauss":
        return GeneralizedGaussian(int(obj.get("ell", 1)))
    raise InvalidArgument(f"unknown marginal kind {kind!r}")


# ---------------------------------------------------------------------------
# product measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralMeasure:
    """Product probability measure on R^d built from 1-d marginals."""

    marginals: tuple

    def __post_init__(self):
        margs = tuple(self.marginals)
        if len(margs) < 1:
            raise InvalidArgument("a spectral measure needs at least one marginal")
        for mg in margs:
            if not isinstance(mg, (Gaussian, GeneralizedGaussian)):
                raise InvalidArgument(f"unsupported marginal {mg!r}")
        object.__setattr__(self, "marginals", margs)

    @classmethod
    def gaussian(cls, sigma=1.0, d=1):
        return cls((Gaussian(sigma),) * d)

    @classmethod
    def gengauss(cls, ell, d=1):
        return cls((GeneralizedGaussian(ell),) * d)

    @property
    def d(self):
        return len(self.marginals)

    @property
    def is_gaussian(self):
        return all(isinstance(mg, Gaussian) for mg in self.marginals)

    def to_dict(self):
        return {"d": self.d, "marginals": [mg.to_dict() for mg in self.marginals]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise InvalidArgument(f"measure descriptor must be an object, got {obj!r}")
        if "marginals" not in obj:
            # a bare marginal descriptor, optionally replicated d times
            d = int(obj.get("d", 1))
            return cls((marginal_from_dict(obj),) * d)
        margs = tuple(marginal_from_dict(mg) for mg in obj["marginals"])
        if "d" in obj and int(obj["d"]) != len(margs):
            raise InvalidArgument(f"descriptor says d={obj['d']} but lists {len(margs)} marginals")
        return cls(margs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------


def as_multi_index(p, d=None):
    """Normalize ``p`` to a tuple of non-negative ints.

    Accepts an int (1-d), a sequence, or a comma separated string.  When
    ``d`` is given an int ``0`` is broadcast to ``d`` zeros.
    """
    if isinstance(p, str):
        p = [int(tok) for tok in p.split(",") if tok.strip()]
    elif isinstance(p, (int, np.integer)):
        p = [int(p)] if d is None or d == 1 or p != 0 else [0] * d
    entries = tuple(int(v) for v in p)
    if any(v != orig for v, orig in zip(entries, p)):
        raise InvalidArgument(f"multi-index entries must be integers: {p!r}")
    if any(v < 0 for v in entries):
        raise InvalidArgument(f"multi-index entries must be non-negative: {entries}")
    if d is not None and len(entries) != d:
        raise InvalidArgument(f"multi-index {entries} has length {len(entries)}, expected {d}")
    return entries


def order(p):
    """Total order ``|p|``."""
    return int(sum(p))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrequencySample:
    """``m`` i.i.d. frequencies drawn from ``measure`` with ``seed``."""

    frequencies: np.ndarray
    seed: int
    measure: SpectralMeasure

    @property
    def m(self):
        return self.frequencies.shape[0]

    @property
    def d(self):
        return self.frequencies.shape[1]


def sample(measure, m, seed):
    """Draw ``m`` frequencies from ``measure``.

    Coordinates are generated column by column from a single
    :class:`~rffderiv._stream.UniformStream`, so the output is a pure
    function of ``(measure, m, seed)``.
    """
    m = int(m)
    if m < 1:
        raise InvalidArgument(f"m must be >= 1, got {m}")
    stream = UniformStream(seed)
    cols = [mg.draw(stream, m) for mg in measure.marginals]
    freqs = np.column_stack(cols)
    freqs.setflags(write=False)
    return FrequencySample(freqs, int(seed), measure)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def log_abs_moment(measure, exponents):
    exponents = _exponent_vector(measure, exponents)
    return float(sum(mg.log_abs_moment(a) for mg, a in zip(measure.marginals, exponents)))


def abs_moment(measure, exponents):
    """``E prod_j |w_j|**a_j`` under the product measure."""
    return math.exp(log_abs_moment(measure, exponents))


def _exponent_vector(measure, exponents):
    if np.isscalar(exponents):
        exponents = [exponents]
    exponents = [float(a) for a in exponents]
    if len(exponents) != measure.d:
        raise InvalidArgument(f"exponent vector has length {len(exponents)}, measure has d={measure.d}")
    if any(a < 0 for a in exponents):
        raise InvalidArgument(f"exponents must be non-negative: {exponents}")
    return exponents


def sigma_pq(measure, p, q):
    """L2 norm of ``w**(p+q)``, the scale of the derivative estimator."""
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    a = [2 * (pi + qi) for pi, qi in zip(p, q)]
    return math.exp(0.5 * log_abs_moment(measure, a))


def c_pq(measure, p, q):
    """Lipschitz-scale constant ``sqrt(E |w^(p+q)|^2 ||w||^2) / sigma_pq``.

    ``||w||^2`` is expanded coordinate-wise, which factorizes under the
    product measure.
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    base = [2 * (pi + qi) for pi, qi in zip(p, q)]
    total = 0.0
    for j in range(measure.d):
        a = list(base)
        a[j] += 2
        total += abs_moment(measure, a)
    return math.sqrt(total) / sigma_pq(measure, p, q)


# ---------------------------------------------------------------------------
# Bernstein condition
# ---------------------------------------------------------------------------


def _require_1d(measure):
    if measure.d != 1:
        raise UnsupportedDimension(f"Bernstein analysis is one-dimensional; measure has d={measure.d}")
    return measure.marginals[0]


def log_bernstein_ratio(measure, r, n):
    """``log A_{r,n}``."""
    mg = _require_1d(measure)
    if r < 1:
        raise InvalidArgument(f"r must be >= 1, got {r}")
    if n < 2:
        raise InvalidArgument(f"n must be >= 2, got {n}")
    return mg.log_abs_moment(r * n) - 0.5 * n * mg.log_abs_moment(2 * r)


def bernstein_ratio(measure, r, n):
    """Normalized moment ratio ``A_{r,n}``; ``inf`` if it overflows a double.

    Use :func:`log_bernstein_ratio` for the log value.
    """
    lv = log_bernstein_ratio(measure, r, n)
    return math.exp(lv) if lv < 709.0 else math.inf


def _log_bernstein_rhs(n, K):
    # log(n!/2 * K^(n-2))
    return float(gammaln(n + 1.0)) - _LOG_2 + (n - 2) * math.log(K)


@dataclass
class BernsteinReport:
    """Outcome of testing the Bernstein condition for ``n = 2..n_max``."""

    r: int
    K: float
    n_max: int
    log_ratios: list
    first_violating_n: int | None = None
    log_violation_ratio: float | None = None

    @property
    def passed(self):
        return self.first_violating_n is None

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    @property
    def ratios(self):
        return [math.exp(v) if v < 709.0 else math.inf for v in self.log_ratios]

    @property
    def violation_ratio(self):
        """``A_{r,n} / (n!/2 K^(n-2))`` at the first violation."""
        if self.log_violation_ratio is None:
            return None
        return math.exp(min(self.log_violation_ratio, 709.0))

    def to_dict(self):
        out = {
            "r": self.r,
            "K": self.K,
            "n_max": self.n_max,
            "verdict": self.verdict,
            "ratios": [v if math.isfinite(v) else None for v in self.ratios],
            "log_ratios": list(self.log_ratios),
        }
        if not self.passed:
            out["first_violating_n"] = self.first_violating_n
            out["violation_ratio"] = self.violation_ratio
            out["log_violation_ratio"] = self.log_violation_ratio
        return out


def bernstein_check(measure, r, K, n_max):
    """Test ``A_{r,n} <= n!/2 K^(n-2)`` for ``n = 2, ..., n_max``.

    Parameters
    ----------
    measure : SpectralMeasure
        One-dimensional measure.
    r : int
        Derivative order ``|p + q| >= 1``.
    K : float
        Candidate constant; must be at least 1.
    n_max : int
        Largest moment index tested.

    Returns
    -------
    BernsteinReport
        ``pass`` if no tested ``n`` violates the inequality; otherwise the
        smallest violating ``n`` and the ratio of both sides there.
    """
    if not K >= 1.0:
        raise InvalidArgument(f"Bernstein constant must satisfy K >= 1, got {K}")
    if n_max < 2:
        raise InvalidArgument(f"n_max must be >= 2, got {n_max}")
    log_ratios = []
    first = None
    excess = None
    for n in range(2, int(n_max) + 1):
        lv = log_bernstein_ratio(measure, r, n)
        log_ratios.append(lv)
        gap = lv - _log_bernstein_rhs(n, K)
        if first is None and gap > _LOG_TOL:
            first, excess = n, gap
    return BernsteinReport(int(r), float(K), int(n_max), log_ratios, first, excess)


class AppendixConstant(NamedTuple):
    K: float
    n_s: int
    c_r: float


def appendix_K(ell, r):
    """Bernstein constant for ``GeneralizedGaussian(ell)`` and order ``r <= 2 ell``.

    Uses the ratio ``B_{r,n} = A_{r,n+1} / A_{r,n}`` bound: with
    ``c_r = Gamma((2r+1)/(2ell)) / Gamma(1/(2ell))``,
    ``n_s = ceil(2 ell Z_MIN - 2)`` and, for ``2 <= n < n_s``,
    ``D_{r,n} = Gamma((rn+1)/(2ell) + 1) / Gamma((rn+1)/(2ell) + r/(2ell))``,
    returns ``K_r = max(D_{r,2}/sqrt(c_r), ..., D_{r,n_s-1}/sqrt(c_r), 1/sqrt(c_r), 1)``.
    """
    ell = int(ell)
    r = int(r)
    if ell < 1:
        raise InvalidArgument(f"ell must be >= 1, got {ell}")
    if r < 1:
        raise InvalidArgument(f"r must be >= 1, got {r}")
    if r > 2 * ell:
        raise OutOfScopeOrder(f"construction covers r <= 2*ell = {2 * ell}, got r={r}")
    two_ell = 2.0 * ell
    log_c = gammaln((2 * r + 1) / two_ell) - gammaln(1.0 / two_ell)
    inv_sqrt_c = math.exp(-0.5 * log_c)
    n_s = math.ceil(two_ell * Z_MIN - 2.0)
    candidates = [inv_sqrt_c, 1.0]
    for n in range(2, n_s):
        base = (r * n + 1) / two_ell
        log_D = gammaln(base + 1.0) - gammaln(base + r / two_ell)
        candidates.append(math.exp(log_D) * inv_sqrt_c)
    return AppendixConstant(max(candidates), n_s, math.exp(log_c))


def certified_K(measure, p, q, n_max=50):
    """A Bernstein constant known to work for ``(measure, p, q)``, or ``None``.

    Order 0 is trivially certified with ``K = 1``.  For one-dimensional
    measures: Gaussian orders 1 and 2 use ``K = 1`` and ``K = 2``;
    generalized Gaussians use :func:`appendix_K` for ``r <= 2 ell``.  Every
    candidate is re-checked numerically up to ``n_max``.
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    r = order(p) + order(q)
    if r == 0:
        return 1.0
    if measure.d != 1:
        return None
    mg = measure.marginals[0]
    if isinstance(mg, Gaussian):
        K = {1: 1.0, 2: 2.0}.get(r)
    elif r <= 2 * mg.ell:
        K = appendix_K(mg.ell, r).K
    else:
        K = None
    if K is None or not bernstein_check(measure, r, K, n_max).passed:
        return None
    return K


__all__ = [
    "Z_MIN",
    "Gaussian",
    "GeneralizedGaussian",
    "Marginal",
    "SpectralMeasure",
    "FrequencySample",
    "BernsteinReport",
    "AppendixConstant",
    "as_multi_index",
    "order",
    "sample",
    "abs_moment",
    "log_abs_moment",
    "sigma_pq",
    "c_pq",
    "bernstein_ratio",
    "log_bernstein_ratio",
    "bernstein_check",
    "appendix_K",
    "certified_K",
    "marginal_from_dict",
]
