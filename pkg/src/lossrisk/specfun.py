"""Log-gamma, digamma, trigamma and Pochhammer ratios.

All functions accept scalars or array-likes and return a float for scalar
input, an ``ndarray`` otherwise. Arguments must be strictly positive.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = ["log_gamma", "digamma", "trigamma", "log_pochhammer", "pochhammer"]

# Godfrey's coefficients for g = 607/128.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS = (
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Recurrence shift threshold for the asymptotic series.
_ASYMPTOTIC_FROM = 10.0


def _positive(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be > 0, got {x!r}")
    return arr


def _out(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def _lanczos_sum(x: np.ndarray) -> np.ndarray:
    total = np.zeros_like(x)
    for i in range(len(_LANCZOS) - 1, 0, -1):
        total += _LANCZOS[i] / (x + i)
    return total + _LANCZOS[0]


def log_gamma(x):
    """Natural log of the gamma function for x > 0."""
    x = _positive(x)
    small = x < 0.5
    # ln G(x) = ln G(x + 1) - ln x keeps the Lanczos argument >= 0.5
    z = np.where(small, x + 1.0, x)
    tmp = z + _LANCZOS_G + 0.5
    out = (z + 0.5) * np.log(tmp) - tmp + _HALF_LOG_2PI + np.log(_lanczos_sum(z) / z)
    out = np.where(small, out - np.log(x), out)
    return _out(out)


def digamma(x):
    """Psi(x) = d/dx ln Gamma(x), x > 0."""
    x = _positive(x).copy()
    acc = np.zeros_like(x)
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not np.any(low):
            break
        acc = np.where(low, acc - 1.0 / x, acc)
        x = np.where(low, x + 1.0, x)
    r2 = 1.0 / (x * x)
    series = r2 * (
        1.0 / 12
        - r2 * (1.0 / 120
        - r2 * (1.0 / 252
        - r2 * (1.0 / 240
        - r2 * (1.0 / 132
        - r2 * (691.0 / 32760
        - r2 * (1.0 / 12)))))))
    return _out(acc + np.log(x) - 0.5 / x - series)


def trigamma(x):
    """Psi'(x), x > 0."""
    x = _positive(x).copy()
    acc = np.zeros_like(x)
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not np.any(low):
            break
        acc = np.where(low, acc + 1.0 / (x * x), acc)
        x = np.where(low, x + 1.0, x)
    r = 1.0 / x
    r2 = r * r
    series = r * (
        1.0
        + r * (0.5
        + r * (1.0 / 6
        - r2 * (1.0 / 30
        - r2 * (1.0 / 42
        - r2 * (1.0 / 30
        - r2 * (5.0 / 66
        - r2 * (691.0 / 2730
        - r2 * (7.0 / 6)))))))))
    return _out(acc + series)


def log_pochhammer(alpha, m):
    """ln of (alpha)_m = Gamma(alpha + m) / Gamma(alpha).

    Requires alpha > 0 and alpha + m > 0; m may be negative or fractional.
    """
    alpha = _positive(alpha, "alpha")
    m = np.asarray(m, dtype=float)
    end = alpha + m
    if np.any(~(end > 0)):
        raise DomainError(f"alpha + m must be > 0, got alpha={alpha!r}, m={m!r}")
    out = np.where(m == 0, 0.0, np.asarray(log_gamma(end)) - np.asarray(log_gamma(alpha)))
    return _out(np.asarray(out, dtype=float))


def pochhammer(alpha, m):
    """(alpha)_m, evaluated through :func:`log_pochhammer`."""
    return _out(np.exp(np.asarray(log_pochhammer(alpha, m))))
