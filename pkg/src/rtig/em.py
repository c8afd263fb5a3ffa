"""EM estimation of a fixed-variability inverse Gaussian mixture.

Every component shares the level's utilization ``u`` and variability ``lam``;
only the weights ``pi`` and locations ``theta`` are estimated, so a
``k``-component model has ``2k - 1`` free parameters.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import rig
from .errors import DegenerateLevel, NumericalError, RtigError, ValidationError

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_EPS = np.finfo(float).eps


@dataclass
class EmConfig:
    epsilon: float = 1e-8
    max_iter: int = 1000
    k_max: int = 10
    kmeans_restarts: int = 10
    newton_max_iter: int = 50
    newton_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")


@dataclass
class RigMixtureModel:
    u: float
    lam: float
    weights: np.ndarray
    thetas: np.ndarray
    level: Optional[int] = None
    loglik: float = math.nan
    bic: float = math.nan
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list, repr=False)
    task_id: Optional[str] = None
    selection: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.thetas = np.asarray(self.thetas, dtype=float)
        if self.weights.shape != self.thetas.shape or self.weights.ndim != 1 or self.weights.size == 0:
            raise ValidationError("weights and thetas must be nonempty vectors of equal length")
        if not 0.0 <= self.u < 1.0:
            raise ValidationError("level utilization must lie in [0, 1)")
        if not self.lam > 0:
            raise DegenerateLevel("level has zero variability; response time equals execution time")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def means(self) -> np.ndarray:
        return self.thetas / (1.0 - self.u)

    def components(self):
        return [rig.LevelParam(self.u, self.lam, float(t)) for t in self.thetas]

    def component_logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _component_logpdf(x, np.log(x), self.means, self.lam)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return logsumexp(self.component_logpdf(x) + np.log(self.weights), axis=1)

    def pdf(self, x):
        return np.exp(self.logpdf(np.atleast_1d(x)))

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for w, lp in zip(self.weights, self.components()):
            out += w * rig.ig_cdf(x, lp)
        return out

    def sample(self, n, seed=None):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        labels = rng.choice(self.k, size=n, p=self.weights / self.weights.sum())
        out = np.empty(n)
        for j, lp in enumerate(self.components()):
            idx = np.flatnonzero(labels == j)
            if idx.size:
                out[idx] = rig.sample_ig(lp, idx.size, rng)
        return out

    def to_dict(self) -> dict:
        d = {
            "level": self.level,
            "u": self.u,
            "lambda": self.lam,
            "k": self.k,
            "pi": self.weights.tolist(),
            "theta": self.thetas.tolist(),
            "loglik": None if math.isnan(self.loglik) else self.loglik,
            "bic": None if math.isnan(self.bic) else self.bic,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if self.task_id is not None:
            d["task_id"] = self.task_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RigMixtureModel":
        try:
            m = cls(u=float(d["u"]), lam=float(d["lambda"]), weights=d["pi"], thetas=d["theta"],
                    level=d.get("level"), iterations=int(d.get("iterations", 0)),
                    converged=bool(d.get("converged", False)), task_id=d.get("task_id"))
        except KeyError as e:
            raise ValidationError(f"model document missing {e.args[0]!r}") from None
        m.loglik = math.nan if d.get("loglik") is None else float(d["loglik"])
        m.bic = math.nan if d.get("bic") is None else float(d["bic"])
        if m.k != int(d.get("k", m.k)):
            raise ValidationError("model 'k' does not match the number of components")
        return m

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "RigMixtureModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read model {path}: {e}") from None


def _component_logpdf(x, logx, means, lam):
    """n x k matrix of component log-densities."""
    x = x[:, None]
    xi = np.asarray(means)[None, :]
    return (np.log(xi) - 0.5 * (math.log(lam) + _LOG_2PI) - 1.5 * logx[:, None]
            - (x - xi) ** 2 / (2.0 * lam * x))


def _validate_sample(sample):
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("empty sample")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValidationError("response times must be finite and > 0")
    return x


def _check_level(u, lam):
    if not u < 1.0:
        raise ValidationError("level utilization >= 1: response times are not stationary")
    if not lam > 0:
        raise DegenerateLevel("level has zero variability; response time equals execution time")


# --- closed form and M-step -------------------------------------------------

def closed_form_theta(sample, u, lam, weights=None) -> float:
    """Weighted maximum-likelihood location of a single component.

    With ``W = sum(w)`` and ``S = sum(w / x)`` the score in the mean ``xi``
    is ``W / xi + W / lam - xi * S / lam``, whose positive root is
    ``(W + sqrt(W^2 + 4 lam S W)) / (2 S)``.  At ``lam = 0`` this is the
    weighted harmonic mean.
    """
    x = _validate_sample(sample)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or np.any(w < 0) or not w.sum() > 0:
        raise ValidationError("weights must be nonnegative, match the sample and not all vanish")
    if not u < 1.0:
        raise ValidationError("level utilization must be < 1")
    W = float(w.sum())
    S = float(np.dot(w, 1.0 / x))
    xi = (W + math.sqrt(W * W + 4.0 * lam * S * W)) / (2.0 * S)
    return (1.0 - u) * xi


def _log_score(eta, W, S, u, lam):
    """Score of the weighted log-likelihood w.r.t. ``log theta`` and its derivative.

    Scalar re-statement of the chain rule ``dmode_dtheta * dlogpdf_dmu`` summed
    over observations; ``dlogpdf_dmu`` is affine in ``1/x`` so only
    ``W = sum(z)`` and ``S = sum(z / x)`` are needed.
    """
    theta = math.exp(eta)
    a = 1.0 / (1.0 - u)
    b = 2.25 * lam * lam
    r = math.sqrt((a * theta) ** 2 + b)
    mu = (a * theta) ** 2 / (r + 1.5 * lam)
    dmu = a * a * theta / r
    d2mu = a * a * b / r ** 3
    a1, b1 = rig._dlogpdf_dmu_parts(mu, lam)
    a2, b2 = rig._d2logpdf_dmu2_parts(mu, lam)
    s1 = a1 * S + b1 * W
    s2 = a2 * S + b2 * W
    g = dmu * s1
    dg = d2mu * s1 + dmu * dmu * s2
    return theta * g, theta * g + theta * theta * dg


def _solve_theta(W, S, u, lam, theta0, cfg: EmConfig, n):
    """Safeguarded Newton on the log-theta score with a bisection fallback."""
    tol = cfg.newton_tol * max(n, 1)
    eta0 = math.log(theta0)
    f0, df0 = _log_score(eta0, W, S, u, lam)
    if abs(f0) < tol:
        return theta0

    lo = hi = eta0
    flo = fhi = f0
    span = math.log(1e6)
    step = math.log(10.0)
    while flo <= 0 and lo > eta0 - span:
        lo -= step
        flo = _log_score(lo, W, S, u, lam)[0]
    while fhi >= 0 and hi < eta0 + span:
        hi += step
        fhi = _log_score(hi, W, S, u, lam)[0]
    if not (flo > 0 > fhi):
        raise NumericalError(f"score has no root: f(lo)={flo:.3g}, f(hi)={fhi:.3g}")
    # tighten the bracket around the start
    if f0 > 0:
        lo, flo = eta0, f0
    else:
        hi, fhi = eta0, f0

    eta, f, df = eta0, f0, df0
    for _ in range(cfg.newton_max_iter):
        newton_ok = df < 0 and math.isfinite(df)
        nxt = eta - f / df if newton_ok else None
        if nxt is None or not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        eta = nxt
        f, df = _log_score(eta, W, S, u, lam)
        if abs(f) < tol:
            break
        if f > 0:
            lo = eta
        else:
            hi = eta
        if hi - lo < 1e-12 * max(1.0, abs(eta)):
            break
    return math.exp(eta)


def m_step_weights(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z.mean(axis=0)


def m_step_theta(sample, z_column, u, lam, cfg: Optional[EmConfig] = None, theta0=None) -> float:
    """Root of the responsibility-weighted score in ``theta``.

    Newton starts from ``theta0``; by default the moment estimate
    ``(1 - u) * weighted_mean``.  Zero-weight observations do not contribute.
    """
    cfg = cfg or EmConfig()
    x = _validate_sample(sample)
    z = np.asarray(z_column, dtype=float)
    _check_level(u, lam)
    W = float(z.sum())
    if not W > 0:
        raise ValidationError("component has no weight")
    S = float(np.dot(z, 1.0 / x))
    if theta0 is None:
        theta0 = (1.0 - u) * float(np.dot(z, x)) / W
    return _solve_theta(W, S, u, lam, theta0, cfg, x.size)


# --- E-step, likelihood, stopping -------------------------------------------

class _Prepared:
    """Per-sample quantities reused across EM iterations at fixed ``lam``."""

    def __init__(self, x, lam):
        self.x = x
        self.inv_x = 1.0 / x
        self.h = self.inv_x / (2.0 * lam)
        # observation-only part of every component log-density
        self.row_total = float(np.sum(-1.5 * np.log(x))) - 0.5 * x.size * (math.log(lam) + _LOG_2PI)


def _estep(prep: _Prepared, means, weights):
    """Responsibilities (k x n) and observed log-likelihood, computed in log space."""
    with np.errstate(divide="ignore"):
        col = (np.log(means) + np.log(weights))[:, None]
    d = np.subtract.outer(means, prep.x)
    np.square(d, out=d)
    d *= prep.h
    np.subtract(col, d, out=d)
    top = d.max(axis=0)
    if not np.all(np.isfinite(top)):
        raise NumericalError("observation outside model support")
    d -= top
    np.exp(d, out=d)
    tot = d.sum(axis=0)
    d /= tot
    ll = prep.row_total + float(np.sum(top) + np.sum(np.log(tot)))
    return d, ll


def e_step(sample, model: RigMixtureModel) -> np.ndarray:
    x = _validate_sample(sample)
    z, _ = _estep(_Prepared(x, model.lam), model.means, model.weights)
    return np.ascontiguousarray(z.T)


def log_likelihood(sample, model: RigMixtureModel) -> float:
    x = _validate_sample(sample)
    return float(model.logpdf(x).sum())


def bic_score(loglik, k, n) -> float:
    """Larger is better: ``2 loglik - (2k - 1) log n``."""
    return 2.0 * loglik - (2 * k - 1) * math.log(n)


def aitken_converged(l_s, l_s1, l_s2, epsilon, prev_linf=None):
    """Aitken stopping rule on three consecutive log-likelihoods.

    Returns ``(converged, linf)``.  ``prev_linf`` is the estimate from the
    previous call; without it the rule cannot fire except on a plateau.
    When the acceleration ratio is >= 1 the previous estimate is passed
    through unchanged.
    """
    d1 = l_s1 - l_s
    if abs(d1) < 10.0 * _EPS * abs(l_s1) or d1 == 0.0:
        return True, l_s2
    a = (l_s2 - l_s1) / d1
    if a >= 1.0:
        return False, prev_linf
    linf = l_s1 + (l_s2 - l_s1) / (1.0 - a)
    if prev_linf is None:
        return False, linf
    return abs(linf - prev_linf) < epsilon, linf


# --- initialization -----------------------------------------------------------

def _lloyd_1d(xs, centers, max_iter=300):
    """Lloyd iterations on sorted data; clusters are contiguous runs of ``xs``."""
    csum = np.concatenate(([0.0], np.cumsum(xs)))
    bounds = None
    for _ in range(max_iter):
        cuts = 0.5 * (centers[:-1] + centers[1:])
        new = np.concatenate(([0], np.searchsorted(xs, cuts, side="right"), [xs.size]))
        counts = np.diff(new)
        if np.any(counts == 0):
            break
        if bounds is not None and np.array_equal(new, bounds):
            break
        bounds = new
        centers = np.diff(csum[bounds]) / counts
    if bounds is None:
        return None, None, math.inf
    labels = np.repeat(np.arange(centers.size), np.diff(bounds))
    inertia = float(np.sum((xs - centers[labels]) ** 2))
    return labels, centers, inertia


def kmeans_init(sample, k, *, u, lam, restarts=10, seed=0) -> RigMixtureModel:
    """1-D Lloyd k-means with quantile seeding; keeps the lowest-inertia restart.

    Restart 0 seeds at evenly spaced quantiles of the distinct values, later
    restarts at uniformly drawn quantile levels.
    """
    x = np.sort(_validate_sample(sample))
    distinct = np.unique(x)
    if k < 1 or k > distinct.size:
        raise ValidationError("too many components for sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = distinct.size
    best = (None, None, math.inf)
    for r in range(max(1, restarts)):
        levels = (np.arange(k) + 0.5) / k if r == 0 else np.sort(rng.uniform(size=k))
        idx = np.unique(np.minimum((levels * m).astype(int), m - 1))
        if idx.size < k:
            continue
        labels, centers, inertia = _lloyd_1d(x, distinct[idx].astype(float))
        if inertia < best[2]:
            best = (labels, centers, inertia)
    labels = best[0]
    if labels is None:
        raise NumericalError("k-means produced an empty cluster on every restart")
    weights = np.bincount(labels, minlength=k) / x.size
    thetas = np.array([closed_form_theta(x[labels == j], u, lam) for j in range(k)])
    return RigMixtureModel(u=u, lam=lam, weights=weights, thetas=thetas)


# --- EM driver ---------------------------------------------------------------

def fit_mixture(sample, u, lam, k, cfg: Optional[EmConfig] = None, *, level=None, seed=None) -> RigMixtureModel:
    """Fit a ``k``-component mixture at fixed ``(u, lam)``.

    The observed log-likelihood of every iterate is kept in ``model.history``.
    Components whose weight drops below ``1 / (10 n)`` are frozen: their
    location is no longer updated but they stay in the model.
    """
    cfg = cfg or EmConfig()
    x = _validate_sample(sample)
    _check_level(u, lam)
    n = x.size
    if n < 2 * k:
        raise ValidationError(f"sample size {n} too small for {k} components")
    prep = _Prepared(x, lam)

    model = kmeans_init(x, k, u=u, lam=lam, restarts=cfg.kmeans_restarts,
                        seed=cfg.seed if seed is None else seed)
    model.level = level
    z, ll = _estep(prep, model.means, model.weights)
    history = [ll]
    linf = None
    converged = False
    frozen_below = 1.0 / (10.0 * n)

    it = 0
    for it in range(1, cfg.max_iter + 1):
        W = z.sum(axis=1)
        S = z @ prep.inv_x
        M = z @ x
        weights = W / n
        thetas = model.thetas.copy()
        for j in range(k):
            if weights[j] < frozen_below:
                continue
            theta0 = (1.0 - u) * M[j] / W[j]
            thetas[j] = _solve_theta(W[j], S[j], u, lam, theta0, cfg, n)
        model = RigMixtureModel(u=u, lam=lam, weights=weights, thetas=thetas, level=level)
        z, ll = _estep(prep, model.means, model.weights)
        history.append(ll)
        if len(history) >= 3:
            converged, linf = aitken_converged(history[-3], history[-2], history[-1], cfg.epsilon, linf)
            if converged:
                break

    model.loglik = history[-1]
    model.bic = bic_score(model.loglik, k, n)
    model.iterations = it
    model.converged = converged
    model.history = history
    if not converged:
        log.info("EM did not converge in %d iterations (k=%d)", cfg.max_iter, k)
    return model


def select_k(sample, u, lam, cfg: Optional[EmConfig] = None, *, level=None, k_values=None) -> RigMixtureModel:
    """Fit ``k = 1..k_max`` and keep the BIC-maximizing model (ties go to smaller k).

    Each ``k`` draws its k-means seed from ``SeedSequence([cfg.seed, k])`` so
    results do not depend on evaluation order.  Per-k outcomes are stored in
    ``model.selection``.
    """
    cfg = cfg or EmConfig()
    x = _validate_sample(sample)
    _check_level(u, lam)
    best = None
    diagnostics = {}
    for k in (k_values or range(1, cfg.k_max + 1)):
        seed = np.random.default_rng(np.random.SeedSequence([cfg.seed, k]))
        try:
            model = fit_mixture(x, u, lam, k, cfg, level=level, seed=seed)
        except RtigError as e:
            diagnostics[k] = f"{e.code}: {e}"
            continue
        diagnostics[k] = model.bic
        if best is None or model.bic > best.bic:
            best = model
    if best is None:
        raise NumericalError("every candidate k failed: " + "; ".join(f"k={k}: {v}" for k, v in diagnostics.items()))
    best.selection = diagnostics
    return best
