"""Numerical ground truth for the closed-form catalog.

The quadrature path rebuilds the posterior from prior density times likelihood,
finds the Bayes first-stage estimate and the Bayes loss estimate by direct
minimisation of posterior expected loss, and never reads a catalog constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from . import models as md
from .errors import DivergenceError, DomainError, MomentError, UnsupportedError
from .rng import RngStream

__all__ = [
    "QuadratureSpec",
    "OracleEstimate",
    "oracle_bayes_loss_estimate",
    "SampleLaw",
    "DensityLaw",
    "PointMassLaw",
    "PosteriorLossLaw",
    "posterior_loss_law",
    "oracle_closed_second_stage",
    "GammaLaw",
    "BetaIILaw",
    "LogNormalLaw",
    "MomentCheck",
    "moment_inequality_check",
    "cutoff_m0",
    "noncentral_second_moment",
    "appendix_moment_gap",
]


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.max_subdivisions >= 1):
            raise DomainError("tolerances and subdivision count must be positive")


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    method: str

    def __float__(self):
        return self.value


# -- 1-D posterior by quadrature ------------------------------------------------------


class _Posterior1D:
    """Normalised posterior expectations on (0, inf) or (0, upper)."""

    def __init__(self, model, prior, x, quad: QuadratureSpec):
        if not hasattr(prior, "logpdf"):
            raise UnsupportedError(f"prior {type(prior).__name__} has no density")
        self.quad = quad
        lo, hi = model.support(x)
        self.bounded = math.isfinite(hi)
        self.upper = hi

        def logpost(theta):
            return float(prior.logpdf(theta) + model.loglik(theta, x))

        self._logpost = logpost
        if self.bounded:
            # density in t = theta / upper
            grid = np.linspace(1e-6, 1 - 1e-6, 401)
            vals = [logpost(self.upper * t) for t in grid]
            self.shift = max(vals)
            self.scale = self.upper
            self.breaks = [float(grid[int(np.argmax(vals))])]
        else:
            # mode of the density of log(theta)
            res = optimize.minimize_scalar(lambda u: -(logpost(math.exp(u)) + u), bracket=(-5.0, 5.0))
            self.scale = math.exp(res.x)
            self.shift = -res.fun
            self.breaks = [0.5]
        self.norm = self._integrate(lambda theta: 1.0)
        if not (self.norm > 0 and math.isfinite(self.norm)):
            raise DivergenceError("posterior is not normalisable")

    def _theta_and_weight(self, t):
        if self.bounded:
            theta = self.upper * t
            log_jac = math.log(self.upper)
        else:
            theta = self.scale * t / (1.0 - t)
            log_jac = math.log(self.scale) - 2.0 * math.log1p(-t)
        return theta, math.exp(self._logpost(theta) - self.shift + log_jac - math.log(self.scale))

    def _to_unit(self, theta):
        if self.bounded:
            return theta / self.upper
        return theta / (theta + self.scale)

    def _integrate(self, func, extra=()):
        points = sorted(set(self.breaks) | {float(p) for p in extra if 0.0 < p < 1.0})

        def integrand(t):
            if t <= 0.0 or t >= 1.0:
                return 0.0
            theta, weight = self._theta_and_weight(t)
            if weight == 0.0:
                return 0.0
            return func(theta) * weight

        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.quad(
                    integrand,
                    0.0,
                    1.0,
                    points=points,
                    epsrel=self.quad.rel_tol,
                    epsabs=self.quad.abs_tol,
                    limit=self.quad.max_subdivisions,
                )
            except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError) as exc:
                raise DivergenceError(f"posterior integral did not converge: {exc}") from None
        if not math.isfinite(value):
            raise DivergenceError("posterior integral is not finite")
        return value

    def expect(self, func, at=()):
        """Posterior mean of ``func``; ``at`` lists theta values to use as breakpoints."""
        return self._integrate(func, [self._to_unit(th) for th in at]) / self.norm


def _minimize_positive(objective, gradient, scale: float, rel_tol: float = 1e-8) -> float:
    """Minimise a bowl-shaped objective over (0, inf).

    A log-grid over [1e-8, 1e3] * scale (widened tenfold up to five times on
    boundary hits) brackets the minimum, golden-section search refines it and
    a root of the derivative polishes it to ``rel_tol``.
    """
    lo, hi = 1e-8 * scale, 1e3 * scale
    for _ in range(6):
        grid = np.geomspace(lo, hi, 45)
        values = []
        for g in grid:
            try:
                values.append(objective(g))
            except DivergenceError:
                values.append(math.inf)
        values = np.asarray(values)
        if not np.any(np.isfinite(values)):
            raise DivergenceError("posterior expected loss is infinite on the whole search grid")
        i = int(np.argmin(values))
        if i == 0:
            lo /= 10.0
        elif i == grid.size - 1:
            hi *= 10.0
        else:
            break
    else:
        raise DivergenceError("no interior minimum of the posterior expected loss")
    a, b, c = math.log(grid[i - 1]), math.log(grid[i]), math.log(grid[i + 1])
    res = optimize.minimize_scalar(lambda u: objective(math.exp(u)), bracket=(a, b, c), method="golden")
    best = math.exp(res.x)
    g_lo, g_hi = gradient(grid[i - 1]), gradient(grid[i + 1])
    if g_lo < 0 < g_hi:
        best = optimize.brentq(gradient, grid[i - 1], grid[i + 1], xtol=1e-300, rtol=max(rel_tol, 4 * np.finfo(float).eps))
    return float(best)


_SCALAR_MODELS = (md.PoissonModel, md.GammaModel, md.NegBinomial, md.ExpLocation)


def oracle_bayes_loss_estimate(
    model,
    prior,
    x,
    first,
    second,
    quad: QuadratureSpec = QuadratureSpec(),
    *,
    rng: RngStream | None = None,
    n: int = 1_000_000,
) -> OracleEstimate:
    """Bayes loss estimate found by numerically minimising E(W(L, Lhat) | x).

    Scalar-parameter models use quadrature; vector models draw posterior loss
    samples (needs ``rng``) and solve the sample first-order condition.
    """
    if isinstance(model, _SCALAR_MODELS):
        return _oracle_quadrature(model, prior, x, first, second, quad)
    if isinstance(model, (md.NormalKnownVar, md.MultiPoisson, md.NormalUnknownVar)):
        if rng is None:
            raise DomainError("the Monte-Carlo oracle path needs an RngStream")
        from .estimators import posterior_loss_sampler

        samples = posterior_loss_sampler(model, prior, x, first, rng, n)
        return _oracle_from_samples(samples, second)
    raise UnsupportedError(f"no oracle for {type(model).__name__}")


def _bayes_first_stage(post, first, rel_tol):
    return _minimize_positive(
        lambda g: post.expect(lambda th: float(first(th, g))),
        lambda g: post.expect(lambda th: float(first.grad(th, g))),
        post.scale,
        rel_tol,
    )


def _oracle_quadrature(model, prior, x, first, second, quad):
    post = _Posterior1D(model, prior, x, quad)
    gamma_hat = _bayes_first_stage(post, first, quad.rel_tol)

    def loss(theta):
        return float(first(theta, gamma_hat))

    log_scale = post.expect(lambda th: math.log(max(loss(th), 1e-300)))
    # the loss vanishes at theta = gamma_hat; keep quadrature nodes off that point
    at = (gamma_hat,)
    lhat = _minimize_positive(
        lambda l: post.expect(lambda th: float(second(loss(th), l)), at),
        lambda l: post.expect(lambda th: float(second.grad(loss(th), l)), at),
        math.exp(log_scale),
        quad.rel_tol,
    )
    risk = post.expect(lambda th: float(second(loss(th), lhat)))
    if not math.isfinite(risk):
        raise DivergenceError("posterior expected second-stage loss is infinite")
    return OracleEstimate(lhat, 0.0, "quadrature")


def _oracle_from_samples(samples: np.ndarray, second) -> OracleEstimate:
    samples = np.asarray(samples, dtype=float)
    scale = float(np.exp(np.mean(np.log(samples))))

    def fbar(l):
        return float(np.mean(second.grad(samples, l)))

    lo, hi = scale, scale
    while fbar(lo) > 0:
        lo /= 2.0
    while fbar(hi) < 0:
        hi *= 2.0
    lhat = lo if lo == hi else optimize.brentq(fbar, lo, hi, rtol=1e-12)
    psi = np.asarray(second.grad(samples, lhat), dtype=float)
    step = 1e-6 * lhat
    slope = (fbar(lhat + step) - fbar(lhat - step)) / (2.0 * step)
    se = float(np.std(psi, ddof=1) / math.sqrt(samples.size) / abs(slope))
    return OracleEstimate(float(lhat), se, "monte-carlo")


# -- second-stage Bayes rules straight from loss-law moments ----------------------


@dataclass(frozen=True)
class SampleLaw:
    values: Sequence[float] | np.ndarray

    def expect(self, func):
        return float(np.mean(func(np.asarray(self.values, dtype=float))))


@dataclass(frozen=True)
class DensityLaw:
    pdf: Callable[[float], float]
    lower: float = 0.0
    upper: float = math.inf

    def expect(self, func):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.quad(lambda t: func(t) * self.pdf(t), self.lower, self.upper, limit=200, epsrel=1e-12)
            except integrate.IntegrationWarning as exc:
                raise MomentError(f"moment integral did not converge: {exc}") from None
        if not math.isfinite(value):
            raise MomentError("moment is infinite")
        return value


@dataclass(frozen=True)
class PointMassLaw:
    value: float

    def expect(self, func):
        return float(func(np.float64(self.value)))


@dataclass(frozen=True)
class PosteriorLossLaw:
    """Law of L(theta, gamma_hat) under a 1-D posterior, integrated by quadrature.

    ``gamma_hat`` is the numerically minimised Bayes estimate under ``first``.
    """

    post: _Posterior1D
    first: object
    gamma_hat: float

    def expect(self, func):
        return self.post.expect(
            lambda th: float(func(np.float64(self.first(th, self.gamma_hat)))), at=(self.gamma_hat,)
        )


def posterior_loss_law(model, prior, x, first, quad: QuadratureSpec = QuadratureSpec()) -> PosteriorLossLaw:
    if not isinstance(model, _SCALAR_MODELS):
        raise UnsupportedError(f"no quadrature posterior for {type(model).__name__}")
    post = _Posterior1D(model, prior, x, quad)
    return PosteriorLossLaw(post, first, _bayes_first_stage(post, first, quad.rel_tol))


def oracle_closed_second_stage(law, second) -> float:
    """Bayes estimate of L under ``second`` evaluated from moments of the law of L."""
    from . import losses as ls

    def moment(p):
        value = law.expect(lambda t: np.power(t, p))
        if not (math.isfinite(value) and value > 0):
            raise MomentError(f"E L^{p} is not finite and positive")
        return value

    if isinstance(second, ls.SquaredErrorW):
        return moment(1.0)
    if isinstance(second, ls.RhoM):
        return moment(-second.m) ** (-1.0 / second.m)
    if isinstance(second, ls.RhoA):
        return (moment(-second.m) / moment(-2.0 * second.m)) ** (1.0 / second.m)
    if isinstance(second, ls.RhoB):
        return math.sqrt(moment(1.0) / moment(-1.0))
    if isinstance(second, ls.RhoC):
        return math.exp(law.expect(np.log))
    raise UnsupportedError(f"unsupported second-stage loss {second!r}")


# -- moment inequality E T^-m / E T^-2m <= (E T)^m ------------------------------------


@dataclass(frozen=True)
class GammaLaw:
    shape: float
    rate: float = 1.0

    def moment(self, p):
        if not self.shape + p > 0:
            raise MomentError(f"E T^{p} is infinite for shape {self.shape}")
        return math.exp(special.gammaln(self.shape + p) - special.gammaln(self.shape) - p * math.log(self.rate))

    def sample(self, gen, count):
        return gen.standard_gamma(self.shape, count) / self.rate


@dataclass(frozen=True)
class BetaIILaw:
    a: float
    b: float
    scale: float = 1.0

    def moment(self, p):
        if not -self.a < p < self.b:
            raise MomentError(f"E T^{p} is infinite for B2({self.a}, {self.b})")
        lg = special.gammaln
        return math.exp(lg(self.a + p) + lg(self.b - p) - lg(self.a) - lg(self.b) + p * math.log(self.scale))

    def sample(self, gen, count):
        return self.scale * gen.standard_gamma(self.a, count) / gen.standard_gamma(self.b, count)


@dataclass(frozen=True)
class LogNormalLaw:
    mu: float = 0.0
    sigma: float = 1.0

    def moment(self, p):
        return math.exp(p * self.mu + 0.5 * (p * self.sigma) ** 2)

    def sample(self, gen, count):
        return np.exp(self.mu + self.sigma * gen.standard_normal(count))


@dataclass(frozen=True)
class MomentCheck:
    m: float
    lhs: float
    rhs: float
    std_error: float
    passed: bool


def _check_m(m):
    if not (m > 0 or m <= -1):
        raise DomainError(f"m must lie in (0, inf) or (-inf, -1], got {m!r}")


def moment_inequality_check(law, m_grid: Sequence[float], rng: RngStream | None = None, n: int = 1_000_000) -> list[MomentCheck]:
    """Check E(T^-m) / E(T^-2m) <= (E T)^m for each m.

    Without ``rng`` the law's exact moments are used; with it, a Monte-Carlo
    estimate with a 4-standard-error allowance.
    """
    for m in m_grid:
        _check_m(m)
    out = []
    if rng is None:
        for m in m_grid:
            lhs = law.moment(-m) / law.moment(-2.0 * m)
            rhs = law.moment(1.0) ** m
            out.append(MomentCheck(m, lhs, rhs, 0.0, lhs <= rhs * (1.0 + 1e-12)))
        return out
    t = np.asarray(law.sample(rng.generator(), n), dtype=float)
    for m in m_grid:
        cols = np.column_stack([t ** (-m), t ** (-2.0 * m), t])
        if not np.all(np.isfinite(cols)):
            raise MomentError("non-finite simulated power")
        a, b, c = cols.mean(axis=0)
        grad = np.array([-1.0 / b, a / b**2, m * c ** (m - 1.0)])
        cov = np.cov(cols, rowvar=False)
        se = float(math.sqrt(max(grad @ cov @ grad, 0.0) / n))
        lhs, rhs = a / b, c**m
        out.append(MomentCheck(m, float(lhs), float(rhs), se, rhs - lhs >= -4.0 * se))
    return out


# -- cutoff between shrinking and expanding RhoA estimates -------------------------------


def _rho_a_lhat(m, d):
    return 2.0 * math.exp((special.gammaln(d / 2.0 - m) - special.gammaln(d / 2.0 - 2.0 * m)) / m)


def cutoff_m0(d: int) -> float:
    """Root in (-1, 0) of Lhat_RhoA(m) - d for the normal model with tau0^2 = 1."""
    if not (isinstance(d, (int, np.integer)) and d >= 5):
        raise DomainError(f"d must be an integer >= 5, got {d!r}")

    def f(m):
        return _rho_a_lhat(m, d) - d

    lo, hi = -1.0, -1e-10
    if not (f(lo) > 0 > f(hi)):
        raise DivergenceError(f"no sign change of Lhat_RhoA(m) - d on (-1, 0) for d={d}")
    return float(optimize.bisect(f, lo, hi, xtol=1e-12))


# -- noncentral chi-square limit ----------------------------------------------------


def noncentral_second_moment(d: int, y: float, n: int) -> float:
    """E Z_n^2 for Z_n ~ (n / (n + 1)) chi^2_d(y / n)."""
    lam = y / n
    c = n / (n + 1.0)
    return c * c * (2.0 * d + 4.0 * lam + (d + lam) ** 2)


def appendix_moment_gap(d: int, y: float, n: int) -> float:
    """|E Z_n^2 - E Z^2| with Z ~ chi^2_d."""
    return abs(noncentral_second_moment(d, y, n) - d * (d + 2.0))
