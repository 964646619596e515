"""Derivative random Fourier feature maps.

For frequencies ``w_1..w_m`` and a multi-index ``p`` the feature map is

    phi_p(x) = m**-0.5 * (w_j**p * [c_|p|(w_j.x); c_{3+|p|}(w_j.x)])_j

with ``c_n(u) = cos(pi n / 2 + u)`` the n-th derivative of cosine, so that
``phi_p = d^p phi_0``.  ``<phi_p(x), phi_q(y)>`` estimates the kernel
derivative ``d^{p,q} k(x, y)``.

Layout: one block of two entries per frequency, in frequency order, the
cosine branch first.  Row ``i`` of a feature matrix is ``phi_p(xs[i])``.
"""

import io
import json

import numpy as np

from .errors import InvalidArgument, ParseError
from .spectral import SpectralMeasure, as_multi_index, order


def phase_derivative(n, u):
    """``c_n(u) = cos(pi*n/2 + u)`` via the period-4 table (no pi multiples)."""
    n = int(n) % 4
    if n == 0:
        return np.cos(u)
    if n == 1:
        return -np.sin(u)
    if n == 2:
        return -np.cos(u)
    return np.sin(u)


def monomial(freqs, p):
    """``w**p`` for each row of ``freqs`` (``0**0 == 1``)."""
    freqs = np.asarray(freqs, dtype=float)
    out = np.ones(freqs.shape[0])
    for j, pj in enumerate(p):
        if pj:
            out = out * freqs[:, j] ** pj
    return out


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != d:
        raise InvalidArgument(f"points have dimension {x.shape[-1]}, expected {d}")
    return x


class FeatureMap:
    """The map ``phi_p`` for a fixed frequency sample.

    Parameters
    ----------
    sample : FrequencySample
        Frequencies ``w_1..w_m``.
    p : multi-index
        Derivative order; ``0`` gives the classical RFF map.
    """

    def __init__(self, sample, p=0):
        self.sample = sample
        self.p = as_multi_index(p, sample.d)
        self._weights = monomial(sample.frequencies, self.p)

    @property
    def m(self):
        return self.sample.m

    @property
    def d(self):
        return self.sample.d

    @property
    def dim(self):
        return 2 * self.m

    def __call__(self, x):
        """Feature vector for one point of dimension ``d``."""
        x = _points(x, self.d)
        if x.ndim != 1:
            raise InvalidArgument("phi takes a single point; use transform for batches")
        return self.transform(x[None, :])[0]

    def transform(self, xs):
        """Feature matrix of shape ``(n, 2m)`` for points ``xs`` of shape ``(n, d)``."""
        return self.unscaled(xs) / np.sqrt(self.m)

    def unscaled(self, xs):
        """``sqrt(m) * transform(xs)``; inner products of these divided by ``m``
        avoid rounding in the ``1/sqrt(m)`` factors."""
        xs = _points(xs, self.d)
        if xs.ndim == 1:
            xs = xs[None, :]
        u = xs @ self.sample.frequencies.T
        k = order(self.p)
        out = np.empty((xs.shape[0], 2 * self.m))
        out[:, 0::2] = phase_derivative(k, u) * self._weights
        out[:, 1::2] = phase_derivative(k + 3, u) * self._weights
        return out


def approx_derivative(sample, p, q, x, y, form="inner"):
    """RFF estimate of ``d^{p,q} k(x, y)``.

    ``form="inner"`` evaluates ``<phi_p(x), phi_q(y)>``; ``form="cosine"``
    evaluates the algebraically equal
    ``mean_j w_j**p (-w_j)**q c_{|p+q|}(w_j.(x - y))``.
    """
    if form == "inner":
        return float(approx_gram(sample, p, q, x, y)[0, 0])
    if form == "cosine":
        x = _points(x, sample.d)
        y = _points(y, sample.d)
        return float(cosine_estimate(sample, p, q, (x - y)[None, :])[0])
    raise InvalidArgument(f"unknown form {form!r}")


def cosine_estimate(sample, p, q, zs):
    """Estimator at differences ``zs`` (shape ``(n, d)``) in cosine form."""
    p = as_multi_index(p, sample.d)
    q = as_multi_index(q, sample.d)
    zs = _points(zs, sample.d)
    w = sample.frequencies
    coef = monomial(w, p) * monomial(-w, q)
    return phase_derivative(order(p) + order(q), zs @ w.T) @ coef / sample.m


def approx_gram(sample, p, q, xs, ys):
    """Matrix of ``approx_derivative(sample, p, q, xs[i], ys[j])``."""
    fx = FeatureMap(sample, p).unscaled(xs)
    fy = FeatureMap(sample, q).unscaled(ys)
    return (fx @ fy.T) / sample.m


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "# rffderiv-features "


def write_feature_matrix(path_or_buf, fmap, xs):
    """Write ``fmap.transform(xs)`` as delimited text with a JSON header line."""
    mat = fmap.transform(xs)
    header = {
        "d": fmap.d,
        "m": fmap.m,
        "p": list(fmap.p),
        "seed": fmap.sample.seed,
        "measure": fmap.sample.measure.to_dict(),
    }
    buf = io.StringIO()
    buf.write(_HEADER_PREFIX + json.dumps(header, sort_keys=True) + "\n")
    np.savetxt(buf, mat, fmt="%.17g", delimiter=",")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            fh.write(text)
    return mat


def read_feature_matrix(path):
    """Inverse of :func:`write_feature_matrix`; returns ``(header, matrix)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith(_HEADER_PREFIX):
            raise ParseError("missing feature-matrix header", line=1)
        try:
            header = json.loads(first[len(_HEADER_PREFIX):])
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad header JSON: {exc.msg}", line=1) from exc
        rows = fh.read()
    mat = np.loadtxt(io.StringIO(rows), delimiter=",", ndmin=2)
    if mat.size and mat.shape[1] != 2 * header["m"]:
        raise ParseError(f"expected {2 * header['m']} columns, found {mat.shape[1]}", field="m")
    header["measure"] = SpectralMeasure.from_dict(header["measure"])
    return header, mat


__all__ = [
    "phase_derivative",
    "monomial",
    "FeatureMap",
    "approx_derivative",
    "cosine_estimate",
    "approx_gram",
    "write_feature_matrix",
    "read_feature_matrix",
]
