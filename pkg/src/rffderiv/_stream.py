"""Seeded uniform stream and the fixed transforms built on top of it.

The stream is numpy's Philox4x64-10 counter-based generator read through
``random_raw``; every 64-bit word is mapped to a double in the open interval
(0, 1) as ``((w >> 11) + 0.5) * 2**-53``.  Normal and Gamma variates are
derived from that stream by inverse CDF and by Marsaglia-Tsang rejection
respectively, so the frequencies produced for a given seed only depend on
the Philox counter sequence and IEEE arithmetic.
"""

import math

import numpy as np
from scipy.special import ndtri

_INV_2_53 = 2.0 ** -53


class UniformStream:
    """Sequential source of open-interval uniforms for one seed."""

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self._bitgen = np.random.Philox(seed)

    def uniform(self, size):
        words = self._bitgen.random_raw(int(size))
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53

    def normal(self, size):
        return ndtri(self.uniform(size))

    def gamma(self, shape, size):
        """Gamma(shape, rate=1) variates.

        Marsaglia & Tsang (2000) for shape >= 1; for shape < 1 the usual
        boost ``G(shape + 1) * U**(1/shape)`` is applied.  Prefer
        :meth:`gamma_root` when only a power of the variate is needed.
        """
        if shape < 1.0:
            g = self._gamma_ge1(shape + 1.0, size)
            return g * self.uniform(size) ** (1.0 / shape)
        return self._gamma_ge1(shape, size)

    def gamma_root(self, shape, power, size):
        """``Y**power`` for ``Y ~ Gamma(shape)``.

        For shape < 1 the boost is applied after taking the power,
        ``G**power * U**(power/shape)``, so ``U**(1/shape)`` never underflows.
        """
        if shape < 1.0:
            g = self._gamma_ge1(shape + 1.0, size)
            u = self.uniform(size)
            return g ** power * u ** (power / shape)
        return self._gamma_ge1(shape, size) ** power

    def _gamma_ge1(self, shape, size):
        size = int(size)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            # acceptance is > 95% for shape >= 1; a fixed batch rule keeps
            # the stream consumption deterministic
            batch = need + need // 8 + 16
            x = self.normal(batch)
            u = self.uniform(batch)
            v = 1.0 + c * x
            ok = v > 0.0
            v = np.where(ok, v, 1.0) ** 3
            with np.errstate(divide="ignore", invalid="ignore"):
                accept = ok & (
                    (u < 1.0 - 0.0331 * x ** 4)
                    | (np.log(u) < 0.5 * x * x + d * (1.0 - v + np.log(v)))
                )
            got = (d * v)[accept][:need]
            out[filled:filled + got.size] = got
            filled += got.size
        return out
