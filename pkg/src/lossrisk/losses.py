"""First-stage losses L(theta, estimate), second-stage losses W(L, Lhat), Rukhin joint losses.

Losses are small frozen dataclasses. Calling one evaluates it (vectorised over
leading axes), ``grad`` differentiates with respect to the estimate being scored.
Vector-parameter losses reduce over the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "Identity",
    "Power",
    "MonotoneTable",
    "SquaredError",
    "ScaledSquaredError",
    "BetaComposed",
    "WeightedSquaredError",
    "PoissonNormalized",
    "MultiPoissonNormalized",
    "NBNormalized",
    "EntropyScale",
    "LocationScale",
    "SquaredErrorW",
    "RhoA",
    "RhoM",
    "RhoB",
    "RhoC",
    "Sqrt2",
    "LogH",
    "RukhinLoss",
    "eval_first",
    "eval_second",
    "eval_rukhin",
]


def _pos(value, name):
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be > 0")
    return arr


def _out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


# -- monotone maps applied to a squared distance ----------------------------------


@dataclass(frozen=True)
class Identity:
    def __call__(self, t):
        return np.asarray(t, dtype=float)

    def deriv(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Power:
    """beta(t) = t^q, q > 0."""

    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise DomainError(f"q must be > 0, got {self.q!r}")

    def __call__(self, t):
        return np.asarray(t, dtype=float) ** self.q

    def deriv(self, t):
        return self.q * np.asarray(t, dtype=float) ** (self.q - 1.0)


@dataclass(frozen=True)
class MonotoneTable:
    """Piecewise-linear strictly increasing map through ``(knots, values)``.

    Beyond the last knot the final segment is extended linearly.
    """

    knots: Sequence[float]
    values: Sequence[float]

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise DomainError("knots and values must be 1-D of equal length >= 2")
        if k[0] != 0.0 or np.any(np.diff(k) <= 0) or np.any(np.diff(v) <= 0) or v[0] < 0:
            raise DomainError("table must start at t=0 and be strictly increasing and nonnegative")

    def __call__(self, t):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(t, dtype=float)
        slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
        return np.where(t <= k[-1], np.interp(t, k, v), v[-1] + slope * (t - k[-1]))

    def deriv(self, t):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        slopes = np.diff(v) / np.diff(k)
        idx = np.clip(np.searchsorted(k, np.asarray(t, dtype=float), side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]


# -- first-stage losses -------------------------------------------------------------


def _sqdist(theta, est):
    diff = np.asarray(est, dtype=float) - np.asarray(theta, dtype=float)
    return np.sum(diff * diff, axis=-1), diff


@dataclass(frozen=True)
class SquaredError:
    """||est - theta||^2 over the last axis."""

    def __call__(self, theta, est):
        return _out(_sqdist(theta, est)[0])

    def grad(self, theta, est):
        return _out(2.0 * (np.asarray(est, dtype=float) - np.asarray(theta, dtype=float)))


@dataclass(frozen=True)
class ScaledSquaredError:
    """||est - theta||^2 / sigma2."""

    sigma2: float = 1.0

    def __post_init__(self):
        _pos(self.sigma2, "sigma2")

    def __call__(self, theta, est):
        return _out(_sqdist(theta, est)[0] / self.sigma2)

    def grad(self, theta, est):
        return _out(2.0 * (np.asarray(est, dtype=float) - np.asarray(theta, dtype=float)) / self.sigma2)


@dataclass(frozen=True)
class BetaComposed:
    """beta(||est - theta||^2 / sigma2) for a monotone map beta."""

    beta: Identity | Power | MonotoneTable = Identity()
    sigma2: float = 1.0

    def __post_init__(self):
        _pos(self.sigma2, "sigma2")

    def __call__(self, theta, est):
        return _out(self.beta(_sqdist(theta, est)[0] / self.sigma2))

    def grad(self, theta, est):
        t, diff = _sqdist(theta, est)
        scale = self.beta.deriv(t / self.sigma2) * 2.0 / self.sigma2
        return _out(np.asarray(scale)[..., None] * diff)


@dataclass(frozen=True)
class WeightedSquaredError:
    """weight(theta) * (est - theta)^2 for scalar theta."""

    weight: Callable[[np.ndarray], np.ndarray]

    def __call__(self, theta, est):
        theta = np.asarray(theta, dtype=float)
        return _out(self.weight(theta) * (np.asarray(est, dtype=float) - theta) ** 2)

    def grad(self, theta, est):
        theta = np.asarray(theta, dtype=float)
        return _out(2.0 * self.weight(theta) * (np.asarray(est, dtype=float) - theta))


@dataclass(frozen=True)
class PoissonNormalized:
    """(est - theta)^2 / theta."""

    def __call__(self, theta, est):
        theta = _pos(theta, "theta")
        return _out((np.asarray(est, dtype=float) - theta) ** 2 / theta)

    def grad(self, theta, est):
        theta = _pos(theta, "theta")
        return _out(2.0 * (np.asarray(est, dtype=float) - theta) / theta)


@dataclass(frozen=True)
class MultiPoissonNormalized:
    """sum_i (est_i - theta_i)^2 / theta_i."""

    def __call__(self, theta, est):
        theta = _pos(theta, "theta")
        return _out(np.sum((np.asarray(est, dtype=float) - theta) ** 2 / theta, axis=-1))

    def grad(self, theta, est):
        theta = _pos(theta, "theta")
        return _out(2.0 * (np.asarray(est, dtype=float) - theta) / theta)


@dataclass(frozen=True)
class NBNormalized:
    """(est - theta)^2 / (theta (theta + r))."""

    r: float

    def __post_init__(self):
        _pos(self.r, "r")

    def __call__(self, theta, est):
        theta = _pos(theta, "theta")
        return _out((np.asarray(est, dtype=float) - theta) ** 2 / (theta * (theta + self.r)))

    def grad(self, theta, est):
        theta = _pos(theta, "theta")
        return _out(2.0 * (np.asarray(est, dtype=float) - theta) / (theta * (theta + self.r)))


def _rho_m(t, m):
    # e^s - s - 1 with s = m log t; the series avoids cancellation near t = 1
    s = m * np.log(t)
    small = np.abs(s) < 1e-3
    series = s * s * (0.5 + s * (1.0 / 6.0 + s * (1.0 / 24.0 + s / 120.0)))
    return np.where(small, series, np.expm1(s) - s)


@dataclass(frozen=True)
class EntropyScale:
    """rho_m(est / theta) with rho_m(t) = t^m - m log t - 1.

    m = -1 gives theta/est - log(theta/est) - 1.
    """

    m: float

    def __post_init__(self):
        if self.m == 0 or not math.isfinite(self.m):
            raise DomainError(f"m must be finite and nonzero, got {self.m!r}")

    def __call__(self, theta, est):
        t = _pos(est, "estimate") / _pos(theta, "theta")
        return _out(_rho_m(t, self.m))

    def grad(self, theta, est):
        est = _pos(est, "estimate")
        t = est / _pos(theta, "theta")
        return _out(self.m * (t**self.m - 1.0) / est)


@dataclass(frozen=True)
class LocationScale:
    """beta(scale * ||est - mu||^2 / sigma2) with theta = (mu, sigma2).

    ``scale=1`` and identity beta give ||est - mu||^2 / sigma2; ``scale=n`` measures
    the error of a sample mean in units of its own variance.
    """

    beta: Identity | Power | MonotoneTable = Identity()
    scale: float = 1.0

    def __post_init__(self):
        _pos(self.scale, "scale")

    def __call__(self, theta, est):
        mu, sigma2 = theta
        sigma2 = _pos(sigma2, "sigma2")
        return _out(self.beta(self.scale * _sqdist(mu, est)[0] / sigma2))

    def grad(self, theta, est):
        mu, sigma2 = theta
        sigma2 = _pos(sigma2, "sigma2")
        t, diff = _sqdist(mu, est)
        factor = self.beta.deriv(self.scale * t / sigma2) * 2.0 * self.scale / sigma2
        return _out(np.asarray(factor)[..., None] * diff)


# -- second-stage losses ------------------------------------------------------------


def _ratio(L, Lhat):
    return _pos(Lhat, "Lhat") / _pos(L, "L")


@dataclass(frozen=True)
class SquaredErrorW:
    """(Lhat - L)^2."""

    def __call__(self, L, Lhat):
        return _out((np.asarray(Lhat, dtype=float) - np.asarray(L, dtype=float)) ** 2)

    def grad(self, L, Lhat):
        return _out(2.0 * (np.asarray(Lhat, dtype=float) - np.asarray(L, dtype=float)))


@dataclass(frozen=True)
class RhoA:
    """(t^m - 1)^2 with t = Lhat / L."""

    m: float

    def __post_init__(self):
        if self.m == 0 or not math.isfinite(self.m):
            raise DomainError(f"m must be finite and nonzero, got {self.m!r}")

    def __call__(self, L, Lhat):
        return _out((_ratio(L, Lhat) ** self.m - 1.0) ** 2)

    def grad(self, L, Lhat):
        tm = _ratio(L, Lhat) ** self.m
        return _out(2.0 * self.m * (tm - 1.0) * tm / np.asarray(Lhat, dtype=float))


@dataclass(frozen=True)
class RhoM:
    """t^m - m log t - 1 with t = Lhat / L."""

    m: float

    def __post_init__(self):
        if self.m == 0 or not math.isfinite(self.m):
            raise DomainError(f"m must be finite and nonzero, got {self.m!r}")

    def __call__(self, L, Lhat):
        return _out(_rho_m(_ratio(L, Lhat), self.m))

    def grad(self, L, Lhat):
        tm = _ratio(L, Lhat) ** self.m
        return _out(self.m * (tm - 1.0) / np.asarray(Lhat, dtype=float))


@dataclass(frozen=True)
class RhoB:
    """t + 1/t - 2 with t = Lhat / L."""

    def __call__(self, L, Lhat):
        t = _ratio(L, Lhat)
        return _out(t + 1.0 / t - 2.0)

    def grad(self, L, Lhat):
        L = _pos(L, "L")
        Lhat = _pos(Lhat, "Lhat")
        return _out(1.0 / L - L / Lhat**2)


@dataclass(frozen=True)
class RhoC:
    """(log t)^2 with t = Lhat / L."""

    def __call__(self, L, Lhat):
        return _out(np.log(_ratio(L, Lhat)) ** 2)

    def grad(self, L, Lhat):
        return _out(2.0 * np.log(_ratio(L, Lhat)) / np.asarray(Lhat, dtype=float))


# -- Rukhin joint losses --------------------------------------------------------------


@dataclass(frozen=True)
class Sqrt2:
    """h(t) = 2 sqrt(t)."""

    def __call__(self, t):
        return 2.0 * np.sqrt(t)

    def deriv(self, t):
        return 1.0 / np.sqrt(t)


@dataclass(frozen=True)
class LogH:
    """h(t) = log t."""

    def __call__(self, t):
        return np.log(t)

    def deriv(self, t):
        return 1.0 / np.asarray(t, dtype=float)


@dataclass(frozen=True)
class RukhinLoss:
    """h'(Lhat) L - h'(Lhat) Lhat + h(Lhat) for increasing concave h."""

    h: Sqrt2 | LogH = Sqrt2()

    def __call__(self, L, Lhat):
        L = np.asarray(L, dtype=float)
        if np.any(L < 0):
            raise DomainError("L must be >= 0")
        Lhat = _pos(Lhat, "Lhat")
        slope = self.h.deriv(Lhat)
        return _out(slope * (L - Lhat) + self.h(Lhat))

    def constant_risk(self, c: float, risk_bar: float) -> float:
        """Risk of a pair whose Lhat is the constant c and whose first-stage risk is risk_bar."""
        return float(self(risk_bar, c))


def eval_first(loss, theta, est):
    return loss(theta, est)


def eval_second(loss, L, Lhat):
    return loss(L, Lhat)


def eval_rukhin(loss: RukhinLoss, L, Lhat):
    return loss(L, Lhat)
