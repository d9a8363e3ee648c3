"""Monte-Carlo frequentist risk, integrated Bayes risk sequences and unbiasedness checks.

Simulation work is cut into fixed blocks of ``BLOCK`` draws; block ``j`` always
uses counter block ``j`` of the caller's stream and block summaries are merged in
index order, so results are bit-identical for any number of worker threads
(``LOSSRISK_THREADS``).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, stats

from . import estimators as est
from . import losses as ls
from . import models as md
from .errors import DivergenceError, DomainError, UnsupportedError
from .rng import RngStream, noncentral_chisquare
from .specfun import digamma, log_gamma, log_pochhammer, trigamma

__all__ = [
    "BLOCK",
    "RiskEstimate",
    "ConvergenceReport",
    "UnbiasednessRow",
    "worker_count",
    "block_moments",
    "mc_risk",
    "mc_rukhin_risk",
    "unbiasedness_check",
    "default_tolerance",
    "normal_bayes_risk_sequence",
    "gamma_bayes_risk_sequence",
    "rukhin_bayes_risk_sequence",
    "DEFAULT_N_LIST",
]

BLOCK = 1 << 16
DEFAULT_N_LIST = (1, 2, 5, 10, 50, 100, 1000, 10000)


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    std_error: float
    n_samples: int
    theta: Any = None


@dataclass(frozen=True)
class ConvergenceReport:
    sequence: list[tuple[int, float]]
    target: float
    final_gap: float
    converged: bool
    tolerance: float
    std_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "sequence": [[int(n), float(r)] for n, r in self.sequence],
            "target": float(self.target),
            "final_gap": float(self.final_gap),
            "converged": bool(self.converged),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class UnbiasednessRow:
    """Signed gap E(Lhat) - E(L) at one theta, with the standard error of the paired difference."""

    theta: Any
    lhat_mean: float
    loss_mean: float
    gap: float
    std_error: float
    biased: bool
    conservative: bool


def worker_count() -> int:
    raw = os.environ.get("LOSSRISK_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise DomainError(f"LOSSRISK_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise DomainError(f"LOSSRISK_THREADS must be a positive integer, got {raw!r}")
    return value


def _summarize(values: np.ndarray):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return values.shape[0], mean, m2


def _merge(a, b):
    n_a, mean_a, m2_a = a
    n_b, mean_b, m2_b = b
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return n, mean, m2


def block_moments(draw: Callable[[np.random.Generator, int], np.ndarray], rng: RngStream, n: int, block: int = BLOCK):
    """Column means and standard errors of ``n`` simulated rows.

    ``draw(gen, count)`` returns ``count`` rows (1-D or 2-D). Returns
    ``(mean, std_error)`` arrays, one entry per column.
    """
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    sizes = [block] * (n // block)
    if n % block:
        sizes.append(n % block)

    def run(j):
        values = draw(rng.generator(block=j), sizes[j])
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite simulated value in block {j}")
        return _summarize(values)

    workers = min(worker_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(j) for j in range(len(sizes))]
    acc = parts[0]
    for part in parts[1:]:
        acc = _merge(acc, part)
    count, mean, m2 = acc
    se = np.sqrt(m2 / (count - 1) / count)
    return mean, se


def _check_n(n):
    if not (isinstance(n, (int, np.integer)) and n >= 100):
        raise DomainError(f"n must be an integer >= 100, got {n!r}")


def _joint_draw(model, theta, pair, first):
    theta_checked = model.check_theta(theta)

    def draw(gen, count):
        x = model.draw(theta_checked, gen, count)
        g = pair.gamma_hat(x)
        lhat = np.broadcast_to(np.asarray(pair.l_hat(x), dtype=float), model.batch_shape(x))
        loss = np.asarray(first(theta_checked, g), dtype=float)
        return loss, lhat

    return draw


def mc_risk(model, theta, pair, first, second, rng: RngStream, n: int) -> RiskEstimate:
    """Monte-Carlo estimate of E_theta W(L(theta, gamma_hat(X)), Lhat(X))."""
    _check_n(n)
    joint = _joint_draw(model, theta, pair, first)

    def draw(gen, count):
        loss, lhat = joint(gen, count)
        return np.asarray(second(loss, lhat), dtype=float)

    mean, se = block_moments(draw, rng, n)
    return RiskEstimate(float(mean[0]), float(se[0]), n, theta)


def mc_rukhin_risk(model, theta, pair, first, rukhin: ls.RukhinLoss, rng: RngStream, n: int) -> RiskEstimate:
    """Monte-Carlo estimate of the joint Rukhin risk of (gamma_hat, Lhat)."""
    return mc_risk(model, theta, pair, first, rukhin, rng, n)


def unbiasedness_check(model, pair, first, theta_grid: Sequence, rng: RngStream, n: int) -> list[UnbiasednessRow]:
    """Compare E_theta Lhat(X) with E_theta L(theta, gamma_hat(X)) on common draws.

    A row is flagged ``biased`` when the gap exceeds 4 standard errors and
    ``conservative`` when Lhat does not fall short of the loss by more than that.
    """
    _check_n(n)
    if len(theta_grid) == 0:
        raise DomainError("theta_grid must be nonempty")
    rows = []
    for theta in theta_grid:
        joint = _joint_draw(model, theta, pair, first)

        def draw(gen, count, joint=joint):
            loss, lhat = joint(gen, count)
            return np.column_stack([lhat, loss, lhat - loss])

        mean, se = block_moments(draw, rng, n)
        gap = float(mean[2])
        rows.append(
            UnbiasednessRow(
                theta,
                float(mean[0]),
                float(mean[1]),
                gap,
                float(se[2]),
                abs(gap) > 4.0 * float(se[2]),
                gap >= -4.0 * float(se[2]),
            )
        )
    return rows


def default_tolerance(target: float, std_error: float = 0.0) -> float:
    return max(1e-3 * abs(target), 3.0 * std_error)


def _report(sequence, target, std_error, tolerance):
    ns = [n for n, _ in sequence]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("n_list must be strictly increasing")
    gap = abs(sequence[-1][1] - target)
    tol = default_tolerance(target, std_error) if tolerance is None else tolerance
    return ConvergenceReport(list(sequence), float(target), float(gap), bool(gap <= tol), float(tol), float(std_error))


def _check_n_list(n_list):
    n_list = list(n_list)
    if not n_list or any(not (isinstance(n, (int, np.integer)) and n >= 1) for n in n_list):
        raise DomainError("n_list must hold integers >= 1")
    return n_list


# -- normal model: Z_n | y ~ c chi^2_d(y / n), c = n / (n + 1) --------------------------


class _NoncentralLogMoments:
    """Exact moments of W ~ chi^2_d(lam) through its Poisson mixture over central chi-squares."""

    def __init__(self, d: int, lam: float):
        mu = lam / 2.0
        if mu == 0:
            k = np.zeros(1)
            w = np.ones(1)
        else:
            spread = 12.0 * math.sqrt(mu) + 40.0
            lo = max(0.0, math.floor(mu - spread))
            k = np.arange(lo, math.ceil(mu + spread) + 1.0)
            logw = k * math.log(mu) - mu - np.asarray(log_gamma(k + 1.0))
            w = np.exp(logw)
            keep = w > 0
            k, w = k[keep], w[keep]
        self.half = d / 2.0 + k
        self.w = w / w.sum()

    def power(self, s: float) -> float:
        terms = np.exp(s * math.log(2.0) + np.asarray(log_pochhammer(self.half, s)))
        return float(np.dot(self.w, terms))

    def log_mean(self) -> float:
        return float(np.dot(self.w, math.log(2.0) + np.asarray(digamma(self.half))))

    def log_var(self) -> float:
        means = math.log(2.0) + np.asarray(digamma(self.half))
        overall = float(np.dot(self.w, means))
        return float(np.dot(self.w, np.asarray(trigamma(self.half)) + (means - overall) ** 2))


def _power_exponent(beta) -> float:
    if isinstance(beta, ls.Identity):
        return 1.0
    if isinstance(beta, ls.Power):
        return beta.q
    raise UnsupportedError("exact inner moments need an Identity or Power beta")


def _posterior_risk_exact(d, beta, second, n, y):
    q = _power_exponent(beta)
    c = n / (n + 1.0)
    mix = _NoncentralLogMoments(d, y / n)
    return est.loss_law_constants(
        lambda p: c ** (q * p) * mix.power(q * p),
        lambda: q * (math.log(c) + mix.log_mean()),
        lambda: q * q * mix.log_var(),
        second,
    )[1]


def _posterior_risk_samples(values: np.ndarray, second) -> float:
    logs = np.log(values)
    return est.loss_law_constants(
        lambda p: float(np.mean(values**p)),
        lambda: float(np.mean(logs)),
        lambda: float(np.var(logs)),
        second,
    )[1]


def normal_bayes_risk_sequence(
    d: int,
    beta,
    second,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    *,
    rng: RngStream | None = None,
    outer: int = 10_000,
    inner: int = 1_000,
    tolerance: float | None = None,
) -> ConvergenceReport:
    """Integrated Bayes risks r_n under the N_d(0, n sigma2 I) priors, against the minimax risk.

    Identity and Power maps use exact inner moments and quadrature over
    Y ~ chi^2_d; other maps use nested Monte Carlo and need ``rng``.
    """
    n_list = _check_n_list(n_list)
    target = est.normal_minimax(d, beta, second).risk_bar
    chi2 = stats.chi2(d)
    sequence = []
    final_se = 0.0
    exact = isinstance(beta, (ls.Identity, ls.Power))
    if not exact and rng is None:
        raise DomainError("nested Monte Carlo needs an RngStream")
    for n in n_list:
        if exact:

            def integrand(y, n=n):
                return _posterior_risk_exact(d, beta, second, n, y) * chi2.pdf(y)

            mid = float(d)
            left, e1 = integrate.quad(integrand, 0.0, mid, limit=200, epsrel=1e-10)
            right, e2 = integrate.quad(integrand, mid, math.inf, limit=200, epsrel=1e-10)
            value = left + right
            if not math.isfinite(value):
                raise DivergenceError(f"r_n integral diverged at n={n}")
            sequence.append((n, value))
        else:
            c = n / (n + 1.0)

            def draw(gen, count, n=n, c=c):
                y = gen.chisquare(d, count)
                out = np.empty(count)
                for i in range(count):
                    z = c * noncentral_chisquare(gen, d, np.full(inner, y[i] / n))
                    out[i] = _posterior_risk_samples(np.asarray(beta(z), dtype=float), second)
                return out

            mean, se = block_moments(draw, rng, outer, block=1024)
            sequence.append((n, float(mean[0])))
            final_se = float(se[0])
    return _report(sequence, target, final_se, tolerance)


# -- Gamma model --------------------------------------------------------------------


def gamma_bayes_risk_sequence(
    alpha: float, m: float, n_list: Sequence[int] = DEFAULT_N_LIST, *, tolerance: float | None = None
) -> ConvergenceReport:
    """Closed-form integrated Bayes risks under G(1/n, 1/n) priors for the Gamma minimax problem."""
    n_list = _check_n_list(n_list)
    solution = est.gamma_minimax(alpha, m)
    k = solution.details["k"]
    sequence = []
    for n in n_list:
        shape = alpha + 1.0 / n
        r1 = math.exp(log_pochhammer(shape, -m))
        c_n = math.exp(log_pochhammer(shape, -2.0 * m)) - r1 * r1
        d_n = r1 * (digamma(shape - m) - digamma(shape))

        def y_moment(h):
            return k**h * math.exp(log_pochhammer(alpha, -h) - log_pochhammer(shape, -h))

        r_n = c_n * y_moment(2.0 * m) + m * m * trigamma(shape) + 2.0 * m * d_n * y_moment(m)
        sequence.append((n, r_n))
    return _report(sequence, solution.risk_bar, 0.0, tolerance)


# -- Rukhin joint loss --------------------------------------------------------------


def _rukhin_c_n(model, n, m, beta):
    if isinstance(model, md.NormalKnownVar):
        beta = beta or ls.Identity()
        c = n / (n + 1.0)
        if isinstance(beta, (ls.Identity, ls.Power)):
            return c ** _power_exponent(beta) * est.beta_moment(beta, model.d, 1.0)
        return est._chi2_quad(lambda z: beta(c * z), model.d)
    if isinstance(model, md.GammaModel):
        return est.gamma_pair(model.alpha, 1.0 / n, 1.0 / n, m).l_hat_constant
    if isinstance(model, md.MultiPoisson):
        return est.multipoisson_pair(model.d, model.d, 1.0 / n).l_hat_constant
    if isinstance(model, md.NegBinomial):
        return est.negbinomial_pair(model.r, 1.0, 1.0 / n).l_hat_constant
    raise UnsupportedError(f"no Rukhin prior sequence for {type(model).__name__}")


def rukhin_bayes_risk_sequence(
    model,
    h=None,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    *,
    m: float | None = None,
    beta=None,
    tolerance: float | None = None,
) -> ConvergenceReport:
    """Integrated Rukhin risks r^W_n = h'(c_n) r_n - c_n h'(c_n) + h(c_n).

    The Bayes loss estimate c_n is free of x, so the first-stage integrated
    risk r_n equals c_n.
    """
    n_list = _check_n_list(n_list)
    solution = est.rukhin_solution(model, h, m=m, beta=beta)
    rukhin = solution.second
    sequence = []
    for n in n_list:
        c_n = _rukhin_c_n(model, n, m, beta)
        sequence.append((n, rukhin.constant_risk(c_n, c_n)))
    return _report(sequence, solution.risk_bar, 0.0, tolerance)
