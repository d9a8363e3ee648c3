"""Sampling models, conjugate priors and their posterior updates.

Parameter conventions: scalar-parameter models take a float ``theta``;
``NormalKnownVar`` and ``MultiPoisson`` take a length-d vector;
``NormalUnknownVar`` takes the pair ``(mu, sigma2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from . import rng as _rng
from .errors import DomainError, UnsupportedError
from .specfun import log_pochhammer

__all__ = [
    "NormalKnownVar",
    "NormalUnknownVar",
    "GammaModel",
    "PoissonModel",
    "MultiPoisson",
    "NegBinomial",
    "ExpLocation",
    "NormalSufficient",
    "NormalPrior",
    "UniformPrior",
    "GammaPrior",
    "InverseScalePrior",
    "BetaIIPrior",
    "ImproperBetaIIPrior",
    "NormalGammaPrior",
    "MultiPoissonGammaTotal",
    "ImproperGammaTotal",
    "NormalPosterior",
    "GammaPosterior",
    "BetaIIPosterior",
    "ScaledBetaPosterior",
    "NormalGammaPosterior",
    "DirichletGammaPosterior",
    "posterior",
    "sample_model",
]


def _require(cond: bool, message: str):
    if not cond:
        raise DomainError(message)


def _require_count(value, name):
    _require(isinstance(value, (int, np.integer)) and value >= 1, f"{name} must be an integer >= 1, got {value!r}")


class NormalSufficient(NamedTuple):
    """Sufficient statistics (sample mean, within sum of squares) of an i.i.d. N_d sample."""

    xbar: np.ndarray
    s: np.ndarray | float


# -- models -------------------------------------------------------------------


@dataclass(frozen=True)
class NormalKnownVar:
    """X ~ N_d(theta, sigma2 I)."""

    d: int
    sigma2: float = 1.0

    def __post_init__(self):
        _require_count(self.d, "d")
        _require(self.sigma2 > 0, f"sigma2 must be > 0, got {self.sigma2!r}")

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        _require(theta.shape == (self.d,), f"theta must have shape ({self.d},), got {theta.shape}")
        return theta

    def draw(self, theta, gen, count):
        theta = self.check_theta(theta)
        return theta + math.sqrt(self.sigma2) * gen.standard_normal((count, self.d))

    def batch_shape(self, x):
        return np.shape(x)[:-1]


@dataclass(frozen=True)
class NormalUnknownVar:
    """n i.i.d. draws from N_d(mu, sigma2 I), observed through (xbar, S)."""

    d: int
    n: int

    def __post_init__(self):
        _require_count(self.d, "d")
        _require(isinstance(self.n, (int, np.integer)) and self.n >= 2, f"n must be an integer >= 2, got {self.n!r}")

    @property
    def k(self) -> int:
        """Degrees of freedom of S / sigma2."""
        return (self.n - 1) * self.d

    def check_theta(self, theta):
        mu, sigma2 = theta
        mu = np.asarray(mu, dtype=float)
        _require(mu.shape == (self.d,), f"mu must have shape ({self.d},), got {mu.shape}")
        _require(sigma2 > 0, f"sigma2 must be > 0, got {sigma2!r}")
        return mu, float(sigma2)

    def draw(self, theta, gen, count):
        mu, sigma2 = self.check_theta(theta)
        xbar = mu + math.sqrt(sigma2 / self.n) * gen.standard_normal((count, self.d))
        s = gen.standard_gamma(self.k / 2.0, count) * (2.0 * sigma2)
        return NormalSufficient(xbar, s)

    def batch_shape(self, x):
        return np.shape(x.s)


@dataclass(frozen=True)
class GammaModel:
    """X ~ G(alpha, theta) with unknown rate theta."""

    alpha: float

    def __post_init__(self):
        _require(self.alpha > 0, f"alpha must be > 0, got {self.alpha!r}")

    def check_theta(self, theta):
        _require(np.ndim(theta) == 0 and theta > 0, f"theta must be a positive scalar, got {theta!r}")
        return float(theta)

    def draw(self, theta, gen, count):
        theta = self.check_theta(theta)
        return gen.standard_gamma(self.alpha, count) / theta

    def batch_shape(self, x):
        return np.shape(x)

    def loglik(self, theta, x):
        return self.alpha * np.log(theta) - theta * x

    def support(self, x):
        return 0.0, math.inf


@dataclass(frozen=True)
class PoissonModel:
    """X ~ Poisson(theta)."""

    def check_theta(self, theta):
        _require(np.ndim(theta) == 0 and theta > 0, f"theta must be a positive scalar, got {theta!r}")
        return float(theta)

    def draw(self, theta, gen, count):
        return gen.poisson(self.check_theta(theta), count)

    def batch_shape(self, x):
        return np.shape(x)

    def loglik(self, theta, x):
        return x * np.log(theta) - theta

    def support(self, x):
        return 0.0, math.inf


@dataclass(frozen=True)
class MultiPoisson:
    """Independent X_i ~ Poisson(theta_i), i = 1..d."""

    d: int

    def __post_init__(self):
        _require_count(self.d, "d")

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        _require(theta.shape == (self.d,), f"theta must have shape ({self.d},), got {theta.shape}")
        _require(bool(np.all(theta > 0)), "theta components must be > 0")
        return theta

    def draw(self, theta, gen, count):
        return gen.poisson(self.check_theta(theta), (count, self.d))

    def batch_shape(self, x):
        return np.shape(x)[:-1]


@dataclass(frozen=True)
class NegBinomial:
    """NB(r, theta) counts with mean theta and variance theta (theta + r) / r."""

    r: float

    def __post_init__(self):
        _require(self.r > 0, f"r must be > 0, got {self.r!r}")

    def check_theta(self, theta):
        _require(np.ndim(theta) == 0 and theta > 0, f"theta must be a positive scalar, got {theta!r}")
        return float(theta)

    def draw(self, theta, gen, count):
        theta = self.check_theta(theta)
        return gen.negative_binomial(self.r, self.r / (self.r + theta), count)

    def batch_shape(self, x):
        return np.shape(x)

    def loglik(self, theta, x):
        return x * np.log(theta) - (x + self.r) * np.log(theta + self.r)

    def support(self, x):
        return 0.0, math.inf


@dataclass(frozen=True)
class ExpLocation:
    """n i.i.d. draws with density exp(-(t - theta)) on (theta, inf), theta > 0."""

    n: int

    def __post_init__(self):
        _require_count(self.n, "n")

    def check_theta(self, theta):
        _require(np.ndim(theta) == 0 and theta > 0, f"theta must be a positive scalar, got {theta!r}")
        return float(theta)

    def draw(self, theta, gen, count):
        theta = self.check_theta(theta)
        return theta + gen.standard_exponential((count, self.n))

    def batch_shape(self, x):
        return np.shape(x)[:-1]

    def loglik(self, theta, x):
        x_min = float(np.min(x))
        return np.where(theta < x_min, self.n * theta, -np.inf)

    def support(self, x):
        return 0.0, float(np.min(x))


# -- priors -------------------------------------------------------------------


@dataclass(frozen=True)
class NormalPrior:
    """theta ~ N_d(mu, tau2 I)."""

    mu: Sequence[float] | np.ndarray
    tau2: float

    def __post_init__(self):
        _require(0 < self.tau2 < math.inf, f"tau2 must be positive and finite, got {self.tau2!r}")


@dataclass(frozen=True)
class UniformPrior:
    """Flat improper density: Lebesgue on R^d (normal) or on (0, inf) (Poisson)."""

    def logpdf(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class GammaPrior:
    """theta ~ G(a, b), density proportional to theta^(a-1) exp(-b theta)."""

    a: float
    b: float

    def __post_init__(self):
        _require(self.a > 0 and self.b > 0, f"a and b must be > 0, got a={self.a!r}, b={self.b!r}")

    def logpdf(self, theta):
        return (self.a - 1.0) * np.log(theta) - self.b * theta


@dataclass(frozen=True)
class InverseScalePrior:
    """Improper density 1/theta on (0, inf); the a = b = 0 limit of G(a, b)."""

    def logpdf(self, theta):
        return -np.log(theta)


@dataclass(frozen=True)
class BetaIIPrior:
    """theta ~ B2(a, b, scale)."""

    a: float
    b: float
    scale: float

    def __post_init__(self):
        _require(self.a > 0 and self.b > 0 and self.scale > 0, "B2 hyperparameters must be > 0")

    def logpdf(self, theta):
        return (self.a - 1.0) * np.log(theta) - (self.a + self.b) * np.log(self.scale + theta)


@dataclass(frozen=True)
class ImproperBetaIIPrior:
    """The improper B2(1, 0, scale) density 1 / (scale + theta)."""

    scale: float

    def __post_init__(self):
        _require(self.scale > 0, f"scale must be > 0, got {self.scale!r}")

    a = 1.0
    b = 0.0

    def logpdf(self, theta):
        return -np.log(self.scale + theta)


@dataclass(frozen=True)
class NormalGammaPrior:
    """theta_1 | theta_2 ~ N_d(xi, theta_2^2 / c I), 1 / theta_2^2 ~ G(a, b)."""

    xi: Sequence[float] | np.ndarray
    c: float
    a: float
    b: float

    def __post_init__(self):
        _require(self.c > 0 and self.a > 0 and self.b > 0, "c, a and b must be > 0")


@dataclass(frozen=True)
class MultiPoissonGammaTotal:
    """Total S = sum(theta_i) ~ G(a, b), shares U = theta / S uniform on the simplex."""

    a: float
    b: float

    def __post_init__(self):
        _require(self.a >= 1 and self.b > 0, f"need a >= 1 and b > 0, got a={self.a!r}, b={self.b!r}")


@dataclass(frozen=True)
class ImproperGammaTotal:
    """The b = 0 limit of :class:`MultiPoissonGammaTotal`: S has density s^(a-1)."""

    a: float

    def __post_init__(self):
        _require(self.a >= 1, f"need a >= 1, got {self.a!r}")

    b = 0.0


# -- posteriors ---------------------------------------------------------------


@dataclass(frozen=True)
class NormalPosterior:
    """theta | x ~ N_d(mean, var I)."""

    mean: np.ndarray
    var: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        return self.mean + math.sqrt(self.var) * gen.standard_normal((count,) + self.mean.shape)


@dataclass(frozen=True)
class GammaPosterior:
    """theta | x ~ G(shape, rate)."""

    shape: float
    rate: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        return gen.standard_gamma(self.shape, count) / self.rate

    def mean(self):
        return self.shape / self.rate

    def moment(self, p):
        """E(theta^p | x), for shape + p > 0."""
        return math.exp(log_pochhammer(self.shape, p) - p * math.log(self.rate))


@dataclass(frozen=True)
class BetaIIPosterior:
    """theta | x ~ B2(a, b, scale)."""

    a: float
    b: float
    scale: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        return _rng.BetaTypeII(self.a, self.b, self.scale).draw(gen, count)

    def ratio_moment(self, g1, g2):
        """E(theta^g1 / (scale + theta)^g2 | x), for g1 > -a and g2 > g1 - b."""
        _require(g1 > -self.a and g2 > g1 - self.b, f"moment ({g1}, {g2}) does not exist")
        log_value = (
            log_pochhammer(self.a, g1)
            - log_pochhammer(self.a + self.b, g2)
            + log_pochhammer(self.b, g2 - g1)
            - (g2 - g1) * math.log(self.scale)
        )
        return math.exp(log_value)

    def mean(self):
        return self.ratio_moment(1.0, 0.0)


@dataclass(frozen=True)
class ScaledBetaPosterior:
    """theta | x ~ upper * U with U ~ Beta(a, 1)."""

    a: float
    upper: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        return self.upper * gen.beta(self.a, 1.0, count)

    def mean(self):
        return self.upper * self.a / (self.a + 1.0)


@dataclass(frozen=True)
class NormalGammaPosterior:
    """theta | x ~ NG(xi, c, a, b); samples are (mu, sigma2) pairs."""

    xi: np.ndarray
    c: float
    a: float
    b: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        precision = gen.standard_gamma(self.a, count) / self.b
        sigma2 = 1.0 / precision
        z = gen.standard_normal((count,) + self.xi.shape)
        mu = self.xi + np.sqrt(sigma2 / self.c)[:, None] * z
        return mu, sigma2


@dataclass(frozen=True)
class DirichletGammaPosterior:
    """theta = S * U with U ~ Dirichlet(alpha) and S ~ G(shape, rate) independent."""

    alpha: np.ndarray
    shape: float
    rate: float
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def sample(self, gen, count):
        u = _rng.Dirichlet(tuple(self.alpha)).draw(gen, count)
        s = gen.standard_gamma(self.shape, count) / self.rate
        return s[:, None] * u

    def total(self) -> GammaPosterior:
        return GammaPosterior(self.shape, self.rate)


# -- conjugate updates ----------------------------------------------------------


def _count(x, name="x") -> int:
    value = np.asarray(x)
    _require(value.ndim == 0 and float(value) >= 0 and float(value) == int(value), f"{name} must be a count, got {x!r}")
    return int(value)


def _normal_known(model: NormalKnownVar, prior, x):
    x = np.asarray(x, dtype=float)
    _require(x.shape == (model.d,), f"x must have shape ({model.d},), got {x.shape}")
    if isinstance(prior, UniformPrior):
        return NormalPosterior(x.copy(), model.sigma2, {"x": x})
    mu = np.broadcast_to(np.asarray(prior.mu, dtype=float), (model.d,))
    t2, s2 = prior.tau2, model.sigma2
    mean = (t2 * x + s2 * mu) / (t2 + s2)
    return NormalPosterior(mean, t2 * s2 / (t2 + s2), {"x": x})


def _poisson(model, prior, x):
    x = _count(x)
    a, b = (1.0, 0.0) if isinstance(prior, UniformPrior) else (prior.a, prior.b)
    return GammaPosterior(a + x, 1.0 + b, {"x": x})


def _gamma(model: GammaModel, prior, x):
    _require(np.ndim(x) == 0 and x > 0, f"x must be a positive scalar, got {x!r}")
    a, b = (0.0, 0.0) if isinstance(prior, InverseScalePrior) else (prior.a, prior.b)
    return GammaPosterior(model.alpha + a, float(x) + b, {"x": float(x)})


def _negbinomial(model: NegBinomial, prior, x):
    x = _count(x)
    _require(prior.scale == model.r, f"B2 prior scale must equal r={model.r}, got {prior.scale}")
    _require(prior.a + x > 0, "posterior shape must be positive")
    return BetaIIPosterior(prior.a + x, prior.b + model.r, model.r, {"x": x})


def _explocation(model: ExpLocation, prior: GammaPrior, x):
    x = np.asarray(x, dtype=float)
    _require(x.shape == (model.n,), f"x must have shape ({model.n},), got {x.shape}")
    _require(bool(np.all(x > 0)), "observations must be > 0")
    _require(prior.b == model.n, f"the Gamma prior rate must equal n={model.n}, got b={prior.b}")
    x_min = float(np.min(x))
    return ScaledBetaPosterior(prior.a, x_min, {"x_min": x_min})


def _normal_unknown(model: NormalUnknownVar, prior: NormalGammaPrior, x):
    xbar, s = x
    xbar = np.asarray(xbar, dtype=float)
    _require(xbar.shape == (model.d,), f"xbar must have shape ({model.d},), got {xbar.shape}")
    _require(np.ndim(s) == 0 and s > 0, f"S must be a positive scalar, got {s!r}")
    n, c = model.n, prior.c
    xi0 = np.broadcast_to(np.asarray(prior.xi, dtype=float), (model.d,))
    xi = (n * xbar + c * xi0) / (n + c)
    a = prior.a + (model.d + model.k) / 2.0
    b = (s + 2.0 * prior.b + n * c / (n + c) * float(np.sum((xbar - xi0) ** 2))) / 2.0
    return NormalGammaPosterior(xi, c + n, a, b, {"xbar": xbar, "S": float(s)})


def _multipoisson(model: MultiPoisson, prior, x):
    x = np.asarray(x)
    _require(x.shape == (model.d,), f"x must have shape ({model.d},), got {x.shape}")
    _require(bool(np.all((x >= 0) & (x == np.floor(x)))), "x must hold counts")
    z = int(np.sum(x))
    return DirichletGammaPosterior(x.astype(float) + 1.0, prior.a + z, prior.b + 1.0, {"Z": z})


_CONJUGATE = {
    (NormalKnownVar, NormalPrior): _normal_known,
    (NormalKnownVar, UniformPrior): _normal_known,
    (PoissonModel, GammaPrior): _poisson,
    (PoissonModel, UniformPrior): _poisson,
    (GammaModel, GammaPrior): _gamma,
    (GammaModel, InverseScalePrior): _gamma,
    (NegBinomial, BetaIIPrior): _negbinomial,
    (NegBinomial, ImproperBetaIIPrior): _negbinomial,
    (ExpLocation, GammaPrior): _explocation,
    (NormalUnknownVar, NormalGammaPrior): _normal_unknown,
    (MultiPoisson, MultiPoissonGammaTotal): _multipoisson,
    (MultiPoisson, ImproperGammaTotal): _multipoisson,
}


def posterior(model, prior, x):
    """Exact conjugate posterior of theta given one observation ``x``."""
    try:
        update = _CONJUGATE[type(model), type(prior)]
    except KeyError:
        raise UnsupportedError(
            f"no conjugate update for {type(model).__name__} with {type(prior).__name__}"
        ) from None
    return update(model, prior, x)


def sample_model(model, theta, rng: _rng.RngStream, count: int):
    """``count`` i.i.d. observations from the model at parameter ``theta``."""
    _require_count(count, "count")
    return model.draw(theta, rng.generator(), count)
