"""Counter-based random streams and the variate families used by the samplers.

A :class:`RngStream` is a value: ``(seed, stream_id)`` is the Philox key, and
``block`` selects a disjoint region of the counter space. Monte-Carlo work is
split into fixed-size blocks, so results do not depend on how blocks are
distributed over workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "Normal",
    "ChiSquare",
    "NoncentralChiSquare",
    "Gamma",
    "Poisson",
    "NegBinomial",
    "Beta",
    "BetaTypeII",
    "Dirichlet",
    "ExpLocation",
    "sample",
]

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """Identifies a reproducible, independent stream of random numbers."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < _U64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self, block: int = 0) -> np.random.Generator:
        """A fresh generator positioned at the start of counter block ``block``."""
        if not 0 <= block < _U64:
            raise DomainError(f"block must be an unsigned 64-bit integer, got {block!r}")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, block, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _check_positive(**values):
    for name, value in values.items():
        if np.any(~(np.asarray(value, dtype=float) > 0)):
            raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class Normal:
    """N_d(mean, var * I); a scalar mean gives univariate draws."""

    mean: float | Sequence[float]
    var: float = 1.0

    def __post_init__(self):
        _check_positive(var=self.var)

    def draw(self, gen: np.random.Generator, count: int) -> np.ndarray:
        mean = np.asarray(self.mean, dtype=float)
        z = gen.standard_normal((count,) + mean.shape)
        return mean + np.sqrt(self.var) * z


@dataclass(frozen=True)
class ChiSquare:
    df: float

    def __post_init__(self):
        _check_positive(df=self.df)

    def draw(self, gen, count):
        return gen.chisquare(self.df, count)


@dataclass(frozen=True)
class NoncentralChiSquare:
    """chi^2_df(nc), drawn as a Poisson mixture of central chi-squares."""

    df: float
    nc: float

    def __post_init__(self):
        _check_positive(df=self.df)
        if not self.nc >= 0:
            raise DomainError(f"nc must be >= 0, got {self.nc!r}")

    def draw(self, gen, count):
        return noncentral_chisquare(gen, self.df, np.full(count, float(self.nc)))


def noncentral_chisquare(gen: np.random.Generator, df: float, nc) -> np.ndarray:
    """One draw per entry of ``nc``: chi^2(df + 2K) with K ~ Poisson(nc / 2)."""
    nc = np.asarray(nc, dtype=float)
    k = gen.poisson(nc / 2.0)
    return gen.chisquare(df + 2.0 * k)


@dataclass(frozen=True)
class Gamma:
    """Gamma with density proportional to t^(shape-1) exp(-rate t)."""

    shape: float
    rate: float = 1.0

    def __post_init__(self):
        _check_positive(shape=self.shape, rate=self.rate)

    def draw(self, gen, count):
        return gen.standard_gamma(self.shape, count) / self.rate


@dataclass(frozen=True)
class Poisson:
    mean: float

    def __post_init__(self):
        _check_positive(mean=self.mean)

    def draw(self, gen, count):
        return gen.poisson(self.mean, count)


@dataclass(frozen=True)
class NegBinomial:
    """Counts with mean ``mean`` and variance mean (mean + r) / r."""

    r: float
    mean: float

    def __post_init__(self):
        _check_positive(r=self.r, mean=self.mean)

    def draw(self, gen, count):
        return gen.negative_binomial(self.r, self.r / (self.r + self.mean), count)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        _check_positive(a=self.a, b=self.b)

    def draw(self, gen, count):
        return gen.beta(self.a, self.b, count)


@dataclass(frozen=True)
class BetaTypeII:
    """B2(a, b, scale): density proportional to y^(a-1) / (scale + y)^(a+b)."""

    a: float
    b: float
    scale: float = 1.0

    def __post_init__(self):
        _check_positive(a=self.a, b=self.b, scale=self.scale)

    def draw(self, gen, count):
        g1 = gen.standard_gamma(self.a, count)
        g2 = gen.standard_gamma(self.b, count)
        return self.scale * g1 / g2


@dataclass(frozen=True)
class Dirichlet:
    weights: Sequence[float]

    def __post_init__(self):
        _check_positive(weights=self.weights)

    def draw(self, gen, count):
        w = np.asarray(self.weights, dtype=float)
        g = gen.standard_gamma(w, (count, w.size))
        return g / g.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ExpLocation:
    """Unit-scale exponential shifted to start at ``location``."""

    location: float

    def draw(self, gen, count):
        return self.location + gen.standard_exponential(count)


def sample(dist, rng: RngStream, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. variates of ``dist`` from the start of ``rng``."""
    if count < 1:
        raise DomainError(f"count must be positive, got {count!r}")
    return dist.draw(rng.generator(), count)
