"""Exact kernel derivatives for the supported spectral families.

Under a product spectral measure the kernel factorizes,
``k(x, y) = prod_j kt_j(x_j - y_j)`` with ``kt_j(z) = E cos(w_j z)``, hence

    d^{p,q} k(x, y) = (-1)^|q| prod_j kt_j^{(p_j + q_j)}(x_j - y_j)

and ``kt^{(n)}(z) = E[w^n c_n(w z)]``.  Gaussian marginals use the Hermite
closed form; any marginal can be integrated numerically.
"""

import functools
import itertools
import math

import numpy as np
from scipy.integrate import quad

from .errors import InvalidArgument, NumericFailure
from .spectral import as_multi_index, order

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"

_TAIL_TOL = 1e-13
_CONVERGENCE_TOL = 1e-11
_FD_MAX_ORDER = 4


def hermite_he(n, u):
    """Probabilists' Hermite polynomial ``He_n(u)`` by the three-term recurrence."""
    u = np.asarray(u, dtype=float)
    prev, cur = np.ones_like(u), u.copy()
    if n == 0:
        return prev
    for k in range(1, n):
        prev, cur = cur, u * cur - k * prev
    return cur


def gaussian_kernel_derivative(sigma, n, z):
    """``d^n/dz^n exp(-sigma^2 z^2 / 2) = (-sigma)^n He_n(sigma z) exp(-sigma^2 z^2 / 2)``."""
    z = np.asarray(z, dtype=float)
    u = sigma * z
    return (-sigma) ** n * hermite_he(n, u) * np.exp(-0.5 * u * u)


# sign and trig branch of c_n, indexed by n mod 4
_PHASE = {0: (1.0, "cos"), 1: (-1.0, "sin"), 2: (-1.0, "cos"), 3: (1.0, "sin")}


def _half_line_integral(marginal, n, z, upper):
    sign, trig = _PHASE[n % 4]
    if trig == "sin":
        # integrand is odd in z
        if z == 0.0:
            return 0.0, 0.0
        sign = sign if z > 0 else -sign
    z = abs(z)

    def f(w):
        return w ** n * float(marginal.pdf(w))

    if z == 0.0:
        res = quad(f, 0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=200, full_output=1)
    else:
        res = quad(f, 0.0, upper, weight=trig, wvar=z, epsabs=1e-14, epsrel=1e-12,
                   limit=200, full_output=1)
    if len(res) > 3:
        raise NumericFailure(
            f"quadrature did not converge for n={n}, z={z}",
            {"marginal": marginal.to_dict(), "n": n, "z": z, "upper": upper,
             "estimate": res[0], "abserr": res[1], "message": res[3]},
        )
    return sign * 2.0 * res[0], 2.0 * res[1]


@functools.lru_cache(maxsize=65536)
def spectral_derivative_1d(marginal, n, z):
    """``E[w^n c_n(w z)]`` for a 1-d marginal by adaptive Gauss-Kronrod.

    The half line is truncated at ``U`` where the analytic tail bound of
    ``|w|^n`` drops below 1e-13; the result is recomputed on ``[0, 2U]`` and
    the two values must agree.
    """
    z = float(z)
    upper = max(marginal.tail_cutoff(n, 0.5 * _TAIL_TOL), 1.0)
    val, err = _half_line_integral(marginal, n, z, upper)
    val2, err2 = _half_line_integral(marginal, n, z, 2.0 * upper)
    if abs(val - val2) > _CONVERGENCE_TOL:
        raise NumericFailure(
            "truncated integrals disagree",
            {"marginal": marginal.to_dict(), "n": n, "z": z, "upper": upper,
             "value": val, "value_doubled": val2, "abserr": max(err, err2)},
        )
    return val2


class KernelOracle:
    """Exact evaluation of a kernel and its derivatives.

    Parameters
    ----------
    measure : SpectralMeasure
        Spectral measure of the kernel.
    method : {"closed_form", "quadrature"}, optional
        Defaults to the closed form when every marginal is Gaussian.
    """

    def __init__(self, measure, method=None):
        if method is None:
            method = CLOSED_FORM if measure.is_gaussian else QUADRATURE
        if method not in (CLOSED_FORM, QUADRATURE):
            raise InvalidArgument(f"unknown method {method!r}")
        if method == CLOSED_FORM and not measure.is_gaussian:
            raise InvalidArgument("closed form is only available for Gaussian marginals")
        self.measure = measure
        self.method = method

    @property
    def d(self):
        return self.measure.d

    def _diff(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if y.ndim == 0:
            y = y.reshape(1)
        if x.shape[-1] != self.d or y.shape[-1] != self.d:
            raise InvalidArgument(
                f"points have dimensions {x.shape[-1]} and {y.shape[-1]}, expected {self.d}"
            )
        return x - y

    def _factor(self, j, n, zj):
        mg = self.measure.marginals[j]
        if self.method == CLOSED_FORM:
            return gaussian_kernel_derivative(mg.sigma, n, zj)
        flat = np.ravel(zj)
        vals = np.array([spectral_derivative_1d(mg, n, float(v)) for v in flat])
        return vals.reshape(np.shape(zj))

    def derivative_at(self, p, q, z):
        """``d^{p,q} k`` at differences ``z`` (shape ``(..., d)``)."""
        p = as_multi_index(p, self.d)
        q = as_multi_index(q, self.d)
        z = np.asarray(z, dtype=float)
        out = (-1.0) ** order(q)
        for j in range(self.d):
            out = out * self._factor(j, p[j] + q[j], z[..., j])
        return out

    def exact_kernel(self, x, y):
        """``k(x, y)``; scalar for single points, array for batches."""
        return _scalar(self.derivative_at((0,) * self.d, (0,) * self.d, self._diff(x, y)))

    def exact_derivative(self, p, q, x, y):
        """``d^{p,q} k(x, y)``."""
        return _scalar(self.derivative_at(p, q, self._diff(x, y)))

    def finite_difference_derivative(self, p, q, x, y, h=None):
        """Central finite differences of :meth:`exact_kernel`.

        One difference with step ``h`` per unit of ``p`` (in ``x``) and of
        ``q`` (in ``y``); each contributes ``O(h^2)`` truncation error.
        ``h`` defaults to ``1e-4 * max(1, max|x - y|)``.  Total order above
        4 is refused.
        """
        p = as_multi_index(p, self.d)
        q = as_multi_index(q, self.d)
        total = order(p) + order(q)
        if total > _FD_MAX_ORDER:
            raise InvalidArgument(
                f"finite differences limited to total order {_FD_MAX_ORDER}, got {total}"
            )
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        self._diff(x, y)
        if h is None:
            h = 1e-4 * max(1.0, float(np.max(np.abs(x - y))))
        if not h > 0:
            raise InvalidArgument(f"step must be positive, got {h}")
        ops = [(0, j) for j in range(self.d) for _ in range(p[j])]
        ops += [(1, j) for j in range(self.d) for _ in range(q[j])]
        if not ops:
            return self.exact_kernel(x, y)
        acc = 0.0
        for signs in itertools.product((1.0, -1.0), repeat=len(ops)):
            xs, ys = x.copy(), y.copy()
            for s, (which, j) in zip(signs, ops):
                (xs if which == 0 else ys)[j] += s * h
            acc += math.prod(signs) * self.exact_kernel(xs, ys)
        return acc / (2.0 * h) ** len(ops)


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


__all__ = [
    "CLOSED_FORM",
    "QUADRATURE",
    "KernelOracle",
    "hermite_he",
    "gaussian_kernel_derivative",
    "spectral_derivative_1d",
]
