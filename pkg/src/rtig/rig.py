"""Inverse Gaussian kernel in classic (mean, shape) and mode/variability form.

Notation used throughout:

* ``xi``, ``delta`` -- classic mean and shape.
* ``mu``, ``lam`` -- mode and variability ``lam = xi**2 / delta``.
  The two are linked by ``xi**2 = mu * (3 * lam + mu)``.
* A priority *level* is described by its utilization ``u`` and variability
  ``lam``; a component of the response-time mixture adds a location ``theta``
  with mean ``theta / (1 - u)``.

Density: ``sqrt(delta / (2 pi x^3)) exp(-delta (x - xi)^2 / (2 x xi^2))``.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, log_ndtr, ndtr, ndtri

from .errors import DegenerateLevel, ValidationError

_LOG_2PI = math.log(2.0 * math.pi)


def _require_positive_lam(lam):
    if np.any(np.asarray(lam) <= 0):
        raise DegenerateLevel("degenerate distribution: variability is zero (point mass)")


@dataclass(frozen=True)
class RigParams:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0 or not self.lam >= 0:
            raise ValidationError("need mu > 0 and lam >= 0")

    @property
    def mean(self) -> float:
        return math.sqrt(self.mu * (3.0 * self.lam + self.mu))

    @property
    def shape(self) -> float:
        if self.lam == 0:
            return math.inf
        return self.mu * (3.0 * self.lam + self.mu) / self.lam

    def to_classic(self):
        return self.mean, self.shape

    @classmethod
    def from_classic(cls, xi, delta):
        lam = xi * xi / delta
        return cls(mode_from_mean(xi, lam), lam)


def mode_from_mean(xi, lam):
    """Mode of an IG with mean ``xi`` and variability ``lam``.

    Written as ``xi^2 / (sqrt(xi^2 + 9 lam^2 / 4) + 3 lam / 2)`` to avoid
    cancellation when ``lam >> xi``.
    """
    xi = np.asarray(xi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    out = xi * xi / (np.sqrt(xi * xi + 2.25 * lam * lam) + 1.5 * lam)
    return out[()] if out.ndim == 0 else out


def rig_logpdf(x, mu, lam):
    _require_positive_lam(lam)
    x = np.asarray(x, dtype=float)
    q = mu * (3.0 * lam + mu)
    xi = np.sqrt(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(x > 0, x, 1.0)
        out = (0.5 * (np.log(q) - np.log(lam) - _LOG_2PI) - 1.5 * np.log(safe)
               - (safe - xi) ** 2 / (2.0 * lam * safe))
    out = np.where(x > 0, out, -np.inf)
    return out[()] if out.ndim == 0 else out


def rig_pdf(x, mu, lam):
    return np.exp(rig_logpdf(x, mu, lam))


def dlogpdf_dmu(x, mu, lam):
    """Derivative of the log-density with respect to the mode."""
    x = np.asarray(x, dtype=float)
    s = 3.0 * lam + mu
    out = (-1.5 / x - mu / (x * lam) + 1.0 / s + 3.0 * lam / (2.0 * mu * s)
           + np.sqrt(mu) / (2.0 * lam * np.sqrt(s)) + np.sqrt(s) / (2.0 * lam * np.sqrt(mu)))
    return out[()] if np.ndim(out) == 0 else out


def _dlogpdf_dmu_parts(mu, lam):
    """Split ``dlogpdf_dmu = a / x + b`` so weighted sums need only ``sum(w / x)``."""
    q = mu * (3.0 * lam + mu)
    dq = 3.0 * lam + 2.0 * mu
    a = -dq / (2.0 * lam)
    b = dq / (2.0 * q) + dq / (2.0 * lam * math.sqrt(q))
    return a, b


def _d2logpdf_dmu2_parts(mu, lam):
    q = mu * (3.0 * lam + mu)
    dq = 3.0 * lam + 2.0 * mu
    a = -1.0 / lam
    b = (2.0 * q - dq * dq) / (2.0 * q * q) + (4.0 * q - dq * dq) / (4.0 * lam * q ** 1.5)
    return a, b


def d2logpdf_dmu2(x, mu, lam):
    a, b = _d2logpdf_dmu2_parts(mu, lam)
    return a / np.asarray(x, dtype=float) + b


# --- level parameterization -------------------------------------------------

def _check_u(u):
    if np.any(np.asarray(u) >= 1.0):
        raise ValidationError("level utilization must be < 1")


def mode_from_theta(theta, u, lam):
    _check_u(u)
    return mode_from_mean(np.asarray(theta, dtype=float) / (1.0 - u), lam)


def dmode_dtheta(theta, u, lam):
    _check_u(u)
    a = 1.0 / (1.0 - u)
    theta = np.asarray(theta, dtype=float)
    out = a * a * theta / np.sqrt((a * theta) ** 2 + 2.25 * lam * lam)
    return out[()] if out.ndim == 0 else out


def d2mode_dtheta2(theta, u, lam):
    a = 1.0 / (1.0 - u)
    b = 2.25 * lam * lam
    return a * a * b / ((a * theta) ** 2 + b) ** 1.5


@dataclass(frozen=True)
class LevelParam:
    u: float
    lam: float
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.u < 1.0:
            raise ValidationError("level utilization must lie in [0, 1)")
        if not self.lam >= 0 or not self.theta > 0:
            raise ValidationError("need lam >= 0 and theta > 0")

    @property
    def mean(self) -> float:
        return self.theta / (1.0 - self.u)

    @property
    def shape(self) -> float:
        return math.inf if self.lam == 0 else self.mean ** 2 / self.lam

    @property
    def mode(self) -> float:
        return float(mode_from_theta(self.theta, self.u, self.lam))


def level_logpdf(x, lp: LevelParam):
    return rig_logpdf(x, mode_from_theta(lp.theta, lp.u, lp.lam), lp.lam)


def level_pdf(x, lp: LevelParam):
    return np.exp(level_logpdf(x, lp))


def chi2_stat(x, theta, u, lam):
    """``(x - mean)^2 / (lam x)``; chi-squared(1) distributed under the level IG."""
    _check_u(u)
    _require_positive_lam(lam)
    x = np.asarray(x, dtype=float)
    out = (x - theta / (1.0 - u)) ** 2 / (lam * x)
    return out[()] if out.ndim == 0 else out


def chi2_cdf_1df(y):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    out = erf(np.sqrt(y / 2.0))
    return out[()] if out.ndim == 0 else out


def chi2_sf_1df(y):
    """Upper tail, accurate far below machine epsilon."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    out = erfc(np.sqrt(y / 2.0))
    return out[()] if out.ndim == 0 else out


def chi2_ppf_1df(p):
    p = np.asarray(p, dtype=float)
    out = ndtri((1.0 + p) / 2.0) ** 2
    return out[()] if out.ndim == 0 else out


def ig_cdf_classic(x, xi, delta):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(x > 0, x, 1.0)
        r = np.sqrt(delta / safe)
        first = ndtr(r * (safe / xi - 1.0))
        second = np.exp(2.0 * delta / xi + log_ndtr(-r * (safe / xi + 1.0)))
    out = np.where(x > 0, np.clip(first + second, 0.0, 1.0), 0.0)
    return out[()] if out.ndim == 0 else out


def ig_cdf(x, lp: LevelParam):
    _require_positive_lam(lp.lam)
    return ig_cdf_classic(x, lp.mean, lp.shape)


def sample_ig(lp: LevelParam, n: int, seed=None):
    """Michael-Schucany-Haas transform sampler; ``seed`` may be an int or a Generator."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    xi = lp.mean
    if lp.lam == 0:
        return np.full(n, xi)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = rng.standard_normal(n) ** 2
    w = xi * y / (2.0 * lp.shape)
    x = xi / (1.0 + w + np.sqrt(w * (w + 2.0)))
    take_small = rng.uniform(size=n) <= xi / (xi + x)
    return np.where(take_small, x, xi * xi / x)
