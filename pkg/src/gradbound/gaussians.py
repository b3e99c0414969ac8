"""Diagonal Gaussian families over flat weight vectors.

Randomness policy
-----------------
Every draw in the package comes from the counter-based Philox generator
keyed by a (seed, stream) pair of 64-bit integers, mapped to normals by the
inverse Gaussian CDF applied to 52-bit uniforms.  Weight sample ``i`` of a
family uses stream ``i``, so draw i is a pure function of (seed, i): sample
streams are prefix-stable (the i-th draw does not depend on how many draws
are requested) and may be generated in parallel.  Streams at and above
``RESERVED_STREAM_BASE`` are reserved for non-sampling uses (batch
shuffling, synthetic data) so they never collide with weight draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .nets import MlpArchitecture, ParamVector

RESERVED_STREAM_BASE = 1 << 48

_U52 = np.uint64(1) << np.uint64(52)


class LayoutMismatchError(ValueError):
    """Raised when two families disagree on architecture or shape."""


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(stream & (2**64 - 1))])
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal(seed: int, stream: int, n: int) -> np.ndarray:
    """n deterministic N(0,1) draws from the (seed, stream) Philox stream.

    Uses u = (r + 1/2) / 2^52 with r a 52-bit integer, so u lies strictly
    inside (0, 1) and ndtri(u) is always finite (|z| <= 8.13).
    """
    rng = stream_rng(seed, stream)
    r = rng.integers(0, _U52, size=n, dtype=np.uint64)
    u = (r.astype(np.float64) + 0.5) / float(_U52)
    return ndtri(u)


@dataclass(frozen=True, eq=False)
class GaussianFamily:
    """Diagonal Gaussian over the flat parameter vector of ``layout``.

    ``stddev`` is either a scalar (broadcast over coordinates) or a flat
    array matching the parameter count; entries must be strictly positive.
    """

    mean: np.ndarray
    stddev: np.ndarray | float
    layout: MlpArchitecture

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        object.__setattr__(self, "mean", mean)
        n = self.layout.param_count()
        if mean.shape != (n,):
            raise ValueError(f"mean has length {mean.shape[0]}, expected {n}")
        sd = np.asarray(self.stddev, dtype=np.float64)
        if sd.ndim == 0:
            sd = float(sd)
        else:
            sd = sd.ravel()
            if sd.shape != (n,):
                raise ValueError(f"stddev has length {sd.shape[0]}, expected {n}")
        object.__setattr__(self, "stddev", sd)
        if np.any(np.asarray(sd) <= 0.0):
            raise ValueError("stddev entries must be strictly positive")

    def stddev_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.stddev, dtype=np.float64),
                               self.mean.shape).copy()


def prior_family(arch: MlpArchitecture, sigma: float) -> GaussianFamily:
    """Zero-mean isotropic family N(0, sigma^2 I) over the architecture."""
    return GaussianFamily(np.zeros(arch.param_count()), float(sigma), arch)


def posterior_family(params: ParamVector, sigma: float) -> GaussianFamily:
    """Isotropic family centered on given weights, N(w, sigma^2 I)."""
    return GaussianFamily(params.values, float(sigma), params.layout)


def sample(family: GaussianFamily, seed: int, count: int) -> list[ParamVector]:
    """``count`` deterministic draws; draw i depends only on (seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = family.mean.shape[0]
    sd = family.stddev
    out = []
    for i in range(count):
        z = standard_normal(seed, i, n)
        out.append(ParamVector(family.mean + sd * z, family.layout))
    return out


def kl_divergence(q: GaussianFamily, p: GaussianFamily) -> float:
    """KL(q || p) for diagonal Gaussians, summed over coordinates.

    Per coordinate: log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2.
    """
    if q.layout != p.layout or q.mean.shape != p.mean.shape:
        raise LayoutMismatchError("families have different layouts")
    sq = q.stddev_vector()
    sp = p.stddev_vector()
    terms = np.log(sp / sq) + (sq**2 + (q.mean - p.mean) ** 2) / (2.0 * sp**2) - 0.5
    return float(np.sum(terms))
