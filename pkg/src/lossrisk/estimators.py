"""Closed-form Bayes, generalized Bayes and minimax (estimate, loss estimate) pairs.

Every pair maps an observation (or a batch of observations stacked on the
leading axis) to the first-stage estimate and to the reported loss ``Lhat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, stats

from . import losses as ls
from . import models as md
from .errors import DomainError, MomentError, UnsupportedError
from .rng import RngStream
from .specfun import digamma, log_pochhammer, trigamma

__all__ = [
    "EstimatorPair",
    "PriorSequence",
    "MinimaxSolution",
    "beta_moment",
    "beta_log_moment",
    "beta_log_variance",
    "loss_law_constants",
    "normal_conjugate_pair",
    "poisson_pair",
    "multipoisson_pair",
    "negbinomial_pair",
    "gamma_pair",
    "explocation_pair",
    "normal_unknownvar_pair",
    "normal_minimax",
    "gamma_minimax",
    "rukhin_solution",
    "bayes_estimate",
    "posterior_loss_sampler",
]


@dataclass(frozen=True)
class EstimatorPair:
    """First-stage estimator ``gamma_hat`` together with a loss estimator ``l_hat``."""

    gamma_hat: Callable[[Any], Any]
    l_hat: Callable[[Any], Any]
    l_hat_constant: float | None
    provenance: str

    def __call__(self, x):
        return self.gamma_hat(x), self.l_hat(x)


@dataclass(frozen=True)
class PriorSequence:
    """A prior family indexed by n >= 1, e.g. N_d(0, n sigma2 I)."""

    family: str
    prior: Callable[[int], Any]

    def __getitem__(self, n: int):
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise DomainError(f"sequence index must be an integer >= 1, got {n!r}")
        return self.prior(int(n))


@dataclass(frozen=True)
class MinimaxSolution:
    pair: EstimatorPair
    risk_bar: float
    prior_sequence: PriorSequence
    first: Any
    second: Any = None
    first_risk: float | None = None
    details: dict[str, Any] = field(default_factory=dict, compare=False)


def _constant_batched(value: float, event_ndim: int):
    """Constant ``Lhat`` that returns one value per observation in a batch."""

    def l_hat(x):
        if isinstance(x, md.NormalSufficient):
            shape = np.shape(x.s)
        else:
            shape = np.shape(x)[: np.ndim(x) - event_ndim] if event_ndim else np.shape(x)
        return value if shape == () else np.full(shape, value)

    return l_hat


# -- moments of beta(Z), Z ~ chi^2_d ------------------------------------------------


def _chi2_quad(func, d: float) -> float:
    dist = stats.chi2(d)

    def integrand(z):
        return func(z) * dist.pdf(z)

    # split at the mode region so quad sees the bulk of the mass
    mid = max(d, 1.0)
    left, err1 = integrate.quad(integrand, 0.0, mid, limit=200)
    right, err2 = integrate.quad(integrand, mid, math.inf, limit=200)
    total = left + right
    if not math.isfinite(total) or err1 + err2 > 1e-8 * max(abs(total), 1.0):
        raise MomentError(f"chi-square expectation did not converge (error estimate {err1 + err2:.3g})")
    return total


def beta_moment(beta, d: int, p: float) -> float:
    """E beta(Z)^p for Z ~ chi^2_d."""
    if p == 0:
        return 1.0
    if isinstance(beta, (ls.Identity, ls.Power)):
        q = 1.0 if isinstance(beta, ls.Identity) else beta.q
        if not d / 2.0 + q * p > 0:
            raise MomentError(f"E beta(Z)^{p} is infinite for d={d}, q={q}")
        return math.exp(q * p * math.log(2.0) + log_pochhammer(d / 2.0, q * p))
    if isinstance(beta, ls.MonotoneTable):
        if beta.values[0] == 0 and not d / 2.0 + p > 0:
            raise MomentError(f"E beta(Z)^{p} is infinite for d={d}")
        return _chi2_quad(lambda z: beta(z) ** p, d)
    raise UnsupportedError(f"unsupported beta map {beta!r}")


def beta_log_moment(beta, d: int) -> float:
    """E log beta(Z) for Z ~ chi^2_d."""
    if isinstance(beta, (ls.Identity, ls.Power)):
        q = 1.0 if isinstance(beta, ls.Identity) else beta.q
        return q * (math.log(2.0) + digamma(d / 2.0))
    if isinstance(beta, ls.MonotoneTable):
        return _chi2_quad(lambda z: np.log(beta(z)), d)
    raise UnsupportedError(f"unsupported beta map {beta!r}")


def beta_log_variance(beta, d: int) -> float:
    """Var log beta(Z) for Z ~ chi^2_d."""
    if isinstance(beta, (ls.Identity, ls.Power)):
        q = 1.0 if isinstance(beta, ls.Identity) else beta.q
        return q * q * trigamma(d / 2.0)
    mean = beta_log_moment(beta, d)
    return _chi2_quad(lambda z: (np.log(beta(z)) - mean) ** 2, d)


def loss_law_constants(moment, log_mean, log_var, second):
    """(Lhat, risk) for a loss law given through its moment functions."""
    if isinstance(second, ls.SquaredErrorW):
        m1 = moment(1.0)
        return m1, moment(2.0) - m1 * m1
    if isinstance(second, ls.RhoM):
        m = second.m
        mm = moment(-m)
        return mm ** (-1.0 / m), m * log_mean() + math.log(mm)
    if isinstance(second, ls.RhoA):
        m = second.m
        m1, m2 = moment(-m), moment(-2.0 * m)
        return (m1 / m2) ** (1.0 / m), 1.0 - m1 * m1 / m2
    if isinstance(second, ls.RhoB):
        up, down = moment(1.0), moment(-1.0)
        return math.sqrt(up / down), 2.0 * (math.sqrt(up * down) - 1.0)
    if isinstance(second, ls.RhoC):
        return math.exp(log_mean()), log_var()
    raise UnsupportedError(f"unsupported second-stage loss {second!r}")


# -- normal model with known variance -----------------------------------------------


def _scaled_chi2_lhat(d: int, tau0sq: float, second) -> float:
    """Bayes Lhat when L | x ~ tau0sq * chi^2_d."""
    half = d / 2.0
    if isinstance(second, ls.SquaredErrorW):
        return d * tau0sq
    if isinstance(second, ls.RhoA):
        m = second.m
        if not d > 4 * m:
            raise DomainError(f"RhoA(m={m}) needs d > 4m, got d={d}")
        return 2.0 * tau0sq * math.exp(log_pochhammer(half - 2 * m, m) / m)
    if isinstance(second, ls.RhoM):
        m = second.m
        if not d > 2 * m:
            raise DomainError(f"RhoM(m={m}) needs d > 2m, got d={d}")
        return 2.0 * tau0sq * math.exp(log_pochhammer(half - m, m) / m)
    if isinstance(second, ls.RhoB):
        if d < 3:
            raise DomainError(f"RhoB needs d >= 3, got d={d}")
        return tau0sq * math.sqrt(d * (d - 2.0))
    if isinstance(second, ls.RhoC):
        return 2.0 * tau0sq * math.exp(digamma(half))
    raise UnsupportedError(f"unsupported second-stage loss {second!r}")


def normal_conjugate_pair(d: int, sigma2: float, prior, second) -> EstimatorPair:
    """Posterior-mean estimate of theta and the Bayes estimate of ||gamma_hat - theta||^2.

    ``prior`` is a :class:`~lossrisk.models.NormalPrior` or the flat
    :class:`~lossrisk.models.UniformPrior`.
    """
    model = md.NormalKnownVar(d, sigma2)
    if isinstance(prior, md.UniformPrior):
        tau0sq = sigma2
        shrink, offset = 1.0, np.zeros(d)
    elif isinstance(prior, md.NormalPrior):
        mu = np.broadcast_to(np.asarray(prior.mu, dtype=float), (d,))
        tau0sq = prior.tau2 * sigma2 / (prior.tau2 + sigma2)
        shrink = prior.tau2 / (prior.tau2 + sigma2)
        offset = sigma2 * mu / (prior.tau2 + sigma2)
    else:
        raise UnsupportedError(f"unsupported prior {prior!r} for the normal model")
    value = _scaled_chi2_lhat(model.d, tau0sq, second)

    def gamma_hat(x):
        return shrink * np.asarray(x, dtype=float) + offset

    return EstimatorPair(gamma_hat, _constant_batched(value, 1), value, f"normal conjugate, {type(second).__name__}")


# -- Poisson, negative binomial, gamma, location exponential ------------------------


def poisson_pair(a: float, b: float) -> EstimatorPair:
    """Bayes pair under normalized first-stage loss and squared-error second stage."""
    improper = a == 1 and b == 0
    if not improper and not (a > 2 and b >= 0):
        raise DomainError(f"need a > 2 and b >= 0, or (a, b) = (1, 0); got a={a!r}, b={b!r}")
    value = 1.0 / (1.0 + b)

    def gamma_hat(x):
        return (a + np.asarray(x, dtype=float) - 1.0) / (1.0 + b)

    return EstimatorPair(gamma_hat, _constant_batched(value, 0), value, "Poisson-Gamma")


def multipoisson_pair(d: int, a: float, b: float) -> EstimatorPair:
    """Clevenson-Zidek type estimate and its Bayes loss estimate (depends on Z = sum x)."""
    if not (isinstance(d, (int, np.integer)) and d >= 1 and a >= 1 and b >= 0):
        raise DomainError(f"need d >= 1, a >= 1, b >= 0; got d={d!r}, a={a!r}, b={b!r}")

    def _z(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (d,):
            raise DomainError(f"observations must have trailing dimension {d}")
        return x, x.sum(axis=-1)

    def gamma_hat(x):
        x, z = _z(x)
        denom = z + d - 1.0
        # x_i (a + Z - 1) / (Z + d - 1); the only 0/0 case is d = 1, x = 0, whose limit is a - 1
        safe = np.where(denom > 0, denom, 1.0)
        factor = np.where(denom > 0, (a + z - 1.0) / safe, 0.0)
        est = x * factor[..., None]
        est = np.where((denom > 0)[..., None], est, a - 1.0)
        return est / (b + 1.0)

    def l_hat(x):
        _, z = _z(x)
        # (dZ + a(d-1)) / (Z + d - 1) = d - (d - a)(d - 1) / (Z + d - 1)
        excess = (d - a) * (d - 1.0)
        denom = z + d - 1.0
        corr = np.where(excess == 0, 0.0, excess / np.where(denom > 0, denom, 1.0))
        return (d - corr) / (b + 1.0) if np.ndim(corr) else float((d - corr) / (b + 1.0))

    constant = d / (b + 1.0) if (a == d or d == 1) else None
    return EstimatorPair(gamma_hat, l_hat, constant, "multivariate Poisson, Gamma total")


def negbinomial_pair(r: float, a: float, b: float) -> EstimatorPair:
    """Bayes pair for NB(r, theta) with a B2(a, b, r) prior under normalized loss."""
    if not (r > 0 and a >= 1 and b >= 0):
        raise DomainError(f"need r > 0, a >= 1, b >= 0; got r={r!r}, a={a!r}, b={b!r}")
    value = 1.0 / (b + r + 1.0)

    def gamma_hat(x):
        return r * (a + np.asarray(x, dtype=float) - 1.0) / (b + r + 1.0)

    return EstimatorPair(gamma_hat, _constant_batched(value, 0), value, "negative binomial, Beta type II")


def _gamma_constants(shape: float, m: float) -> tuple[float, float]:
    """k and E(rho_m loss | x) for a G(shape, .) posterior."""
    if m == 0 or not m < shape:
        raise DomainError(f"need m != 0 and m < {shape}, got m={m!r}")
    lp = log_pochhammer(shape - m, m)  # ln Gamma(shape) / Gamma(shape - m)
    return math.exp(lp / m), m * digamma(shape) - lp


def gamma_pair(alpha: float, a: float, b: float, m: float) -> EstimatorPair:
    """Entropy-loss Bayes estimate k / (x + b) and its Bayes loss estimate.

    ``a = b = 0`` is the improper 1/theta prior.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha!r}")
    if not ((a == 0 and b == 0) or (a > 0 and b > 0)):
        raise DomainError(f"need a, b > 0 or a = b = 0; got a={a!r}, b={b!r}")
    k, value = _gamma_constants(a + alpha, m)

    def gamma_hat(x):
        return k / (np.asarray(x, dtype=float) + b)

    return EstimatorPair(gamma_hat, _constant_batched(value, 0), value, "Gamma-Gamma, entropy loss")


def explocation_pair(n: int, a: float) -> EstimatorPair:
    """Location-exponential model with G(a, n) prior; first-stage loss EntropyScale(-1)."""
    md.ExpLocation(n)
    if not a > 0:
        raise DomainError(f"a must be > 0, got {a!r}")
    value = 1.0 / a - math.log1p(1.0 / a)

    def gamma_hat(x):
        return a / (a + 1.0) * np.min(np.asarray(x, dtype=float), axis=-1)

    return EstimatorPair(gamma_hat, _constant_batched(value, 1), value, "location exponential, Gamma prior")


def normal_unknownvar_pair(d: int, n: int, xi, c: float, a: float, b: float, second=None) -> EstimatorPair:
    """Normal-gamma Bayes pair for first-stage loss ||gamma_hat - mu||^2 / sigma2.

    The posterior loss law is chi^2_d / (n + c); ``second`` defaults to squared error.
    """
    md.NormalUnknownVar(d, n)
    md.NormalGammaPrior(xi, c, a, b)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (d,))
    value = _scaled_chi2_lhat(d, 1.0 / (n + c), second or ls.SquaredErrorW())

    def gamma_hat(x):
        xbar = x.xbar if isinstance(x, md.NormalSufficient) else x[0]
        return (n * np.asarray(xbar, dtype=float) + c * xi) / (n + c)

    return EstimatorPair(gamma_hat, _constant_batched(value, 1), value, "normal-gamma")


# -- minimax solutions --------------------------------------------------------------


def _identity_gamma(x):
    if isinstance(x, md.NormalSufficient):
        return np.asarray(x.xbar, dtype=float)
    return np.asarray(x, dtype=float)


def normal_minimax(d: int, beta, second, sigma2: float = 1.0) -> MinimaxSolution:
    """Generalized Bayes (uniform prior) estimate of L = beta(||x - theta||^2 / sigma2)."""
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise DomainError(f"d must be an integer >= 1, got {d!r}")
    value, risk = loss_law_constants(
        lambda p: beta_moment(beta, d, p),
        lambda: beta_log_moment(beta, d),
        lambda: beta_log_variance(beta, d),
        second,
    )
    pair = EstimatorPair(_identity_gamma, _constant_batched(value, 1), value, "normal minimax, uniform prior")
    seq = PriorSequence("N_d(0, n sigma2 I)", lambda n: md.NormalPrior(np.zeros(d), n * sigma2))
    return MinimaxSolution(pair, risk, seq, ls.BetaComposed(beta, sigma2), second, details={"d": d, "beta": beta})


def gamma_minimax(alpha: float, m: float) -> MinimaxSolution:
    """Minimax estimate of the entropy loss of k / X under squared-error second stage."""
    if m == 0 or not alpha > 2 * m or not alpha > 0:
        raise DomainError(f"need m != 0 and alpha > 2m, got alpha={alpha!r}, m={m!r}")
    k, value = _gamma_constants(alpha, m)
    # ratios of Gamma functions at alpha - m and alpha - 2m relative to alpha
    r1 = math.exp(log_pochhammer(alpha, -m))
    r2 = math.exp(log_pochhammer(alpha, -2 * m))
    km = k**m
    risk = (
        km * km * (r2 - r1 * r1)
        + m * m * trigamma(alpha)
        + 2 * m * km * r1 * (digamma(alpha - m) - digamma(alpha))
    )

    def gamma_hat(x):
        return k / np.asarray(x, dtype=float)

    pair = EstimatorPair(gamma_hat, _constant_batched(value, 0), value, "Gamma minimax, prior 1/theta")
    seq = PriorSequence("G(1/n, 1/n)", lambda n: md.GammaPrior(1.0 / n, 1.0 / n))
    return MinimaxSolution(
        pair, risk, seq, ls.EntropyScale(m), ls.SquaredErrorW(), details={"alpha": alpha, "m": m, "k": k}
    )


def rukhin_solution(model, h=None, *, m: float | None = None, beta=None) -> MinimaxSolution:
    """Minimax (estimate, loss estimate) pair under the Rukhin joint loss with function ``h``.

    ``model`` is a NormalKnownVar (optionally with ``beta``), GammaModel (needs ``m``),
    MultiPoisson or NegBinomial instance.
    """
    rukhin = ls.RukhinLoss(h or ls.Sqrt2())
    if isinstance(model, md.NormalKnownVar):
        beta = beta or ls.Identity()
        c = beta_moment(beta, model.d, 1.0)
        pair = EstimatorPair(_identity_gamma, _constant_batched(c, 1), c, "normal, uniform prior")
        first = ls.BetaComposed(beta, model.sigma2)
        d, s2 = model.d, model.sigma2
        seq = PriorSequence("N_d(0, n sigma2 I)", lambda n: md.NormalPrior(np.zeros(d), n * s2))
        first_risk = c
    elif isinstance(model, md.GammaModel):
        if m is None:
            raise DomainError("the Gamma model needs the entropy exponent m")
        k, c = _gamma_constants(model.alpha, m)
        pair = EstimatorPair(lambda x: k / np.asarray(x, dtype=float), _constant_batched(c, 0), c, "Gamma, prior 1/theta")
        first = ls.EntropyScale(m)
        seq = PriorSequence("G(1/n, 1/n)", lambda n: md.GammaPrior(1.0 / n, 1.0 / n))
        first_risk = c
    elif isinstance(model, md.MultiPoisson):
        d = model.d
        c = float(d)
        pair = EstimatorPair(lambda x: np.asarray(x, dtype=float), _constant_batched(c, 1), c, "multivariate Poisson")
        first = ls.MultiPoissonNormalized()
        seq = PriorSequence("S ~ G(d, 1/n)", lambda n: md.MultiPoissonGammaTotal(d, 1.0 / n))
        first_risk = c
    elif isinstance(model, md.NegBinomial):
        r = model.r
        c = 1.0 / (r + 1.0)
        pair = EstimatorPair(lambda x: r * np.asarray(x, dtype=float) / (r + 1.0), _constant_batched(c, 0), c, "negative binomial, B2(1, 0, r)")
        first = ls.NBNormalized(r)
        seq = PriorSequence("B2(1, 1/n, r)", lambda n: md.BetaIIPrior(1.0, 1.0 / n, r))
        first_risk = c
    else:
        raise UnsupportedError(f"no Rukhin solution for {type(model).__name__}")
    risk = rukhin.constant_risk(c, first_risk)
    return MinimaxSolution(pair, risk, seq, first, rukhin, first_risk, details={"model": model, "m": m, "beta": beta})


# -- posterior loss laws --------------------------------------------------------------


def bayes_estimate(first, post):
    """Closed-form Bayes estimate of gamma(theta) under ``first`` for a conjugate posterior."""
    if isinstance(post, md.NormalPosterior) and isinstance(first, (ls.SquaredError, ls.ScaledSquaredError, ls.BetaComposed)):
        return post.mean
    if isinstance(post, md.NormalGammaPosterior) and isinstance(first, ls.LocationScale):
        return post.xi
    if isinstance(post, md.GammaPosterior):
        if isinstance(first, ls.SquaredError):
            return post.mean()
        if isinstance(first, ls.PoissonNormalized):
            return 1.0 / post.moment(-1.0)
        if isinstance(first, ls.EntropyScale):
            return post.moment(-first.m) ** (-1.0 / first.m)
    if isinstance(post, md.BetaIIPosterior) and isinstance(first, ls.NBNormalized):
        return post.ratio_moment(0.0, 1.0) / post.ratio_moment(-1.0, 1.0)
    if isinstance(post, md.ScaledBetaPosterior) and isinstance(first, ls.EntropyScale):
        if not post.a > first.m:
            raise MomentError("the Bayes estimate needs a > m")
        return post.upper * (post.a / (post.a - first.m)) ** (-1.0 / first.m)
    if isinstance(post, md.DirichletGammaPosterior) and isinstance(first, ls.MultiPoissonNormalized):
        alpha = post.alpha
        total = alpha.sum()
        return (alpha - 1.0) / (total - 1.0) * (post.shape - 1.0) / post.rate
    raise UnsupportedError(f"no closed-form Bayes estimate for {type(first).__name__} with {type(post).__name__}")


def posterior_loss_sampler(model, prior, x, first, rng: RngStream, count: int) -> np.ndarray:
    """Draws of L(theta, gamma_hat(x)) with theta from the posterior and gamma_hat Bayes for ``first``."""
    if not (isinstance(count, (int, np.integer)) and count >= 1):
        raise DomainError(f"count must be a positive integer, got {count!r}")
    post = md.posterior(model, prior, x)
    est = bayes_estimate(first, post)
    theta = post.sample(rng.generator(), count)
    return np.asarray(first(theta, est), dtype=float)
