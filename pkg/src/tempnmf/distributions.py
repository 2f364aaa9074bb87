"""Seeded sampling and log-densities for the laws used by the chains.

All samplers take an explicit ``numpy.random.Generator``; nothing here touches
global random state. Gamma laws use the shape/rate parametrization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln, gammaln


class ParameterError(ValueError):
    """Raised when a distribution parameter is outside its domain."""


_TINY = np.finfo(float).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


def make_rng(seed: int | np.random.SeedSequence | None = 0) -> np.random.Generator:
    if isinstance(seed, (int, np.integer)) and not 0 <= int(seed) < 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams derived deterministically from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class GammaParams:
    shape: float
    rate: float
    loc: float = 0.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0 and self.loc >= 0):
            raise ParameterError(
                f"invalid Gamma parameters shape={self.shape}, rate={self.rate}, loc={self.loc}"
            )

    @property
    def mean(self) -> float:
        return self.loc + self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2


@dataclass(frozen=True)
class BetaPrimeParams:
    alpha: float
    beta: float
    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.p, self.q) <= 0:
            raise ParameterError(f"Beta-Prime parameters must be positive: {self}")


def sample_gamma(params: GammaParams, rng: np.random.Generator, size=None):
    # numpy's sampler boosts shapes below one, so any shape > 0 is exact
    return params.loc + rng.gamma(params.shape, 1.0 / params.rate, size=size)


def sample_beta(a: float, b: float, rng: np.random.Generator, size=None):
    if not (a > 0 and b > 0):
        raise ParameterError(f"Beta parameters must be positive, got a={a}, b={b}")
    x = rng.beta(a, b, size=size)
    # with a small parameter a draw can round to exactly 0 or 1 in double precision
    return np.clip(x, _TINY, _BELOW_ONE)


def sample_poisson(mean, rng: np.random.Generator, size=None):
    mean = np.asarray(mean, dtype=float)
    if np.any(mean < 0) or not np.all(np.isfinite(mean)):
        raise ParameterError("Poisson mean must be finite and non-negative")
    out = rng.poisson(mean, size=size)
    return int(out) if np.ndim(out) == 0 else out


def log_pdf_gamma(x, params: GammaParams):
    """Exact log-density; ``-inf`` at or below ``loc``."""
    x = np.asarray(x, dtype=float)
    a, b = params.shape, params.rate
    y = x - params.loc
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * np.log(b) - gammaln(a) + (a - 1) * np.log(y) - b * y
    out = np.where(y > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def log_beta_prime_pdf(x, params: BetaPrimeParams):
    x = np.asarray(x, dtype=float)
    a, b, p, q = params.alpha, params.beta, params.p, params.q
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.log(x) - np.log(q)
        # log(1 + (x/q)^p) computed stably for large arguments
        out = (np.log(p) - np.log(q) - betaln(a, b)
               + (a * p - 1) * u - (a + b) * np.logaddexp(0.0, p * u))
    out = np.where(x > 0, out, -np.inf)
    if a * p == 1:
        out = np.where(x == 0, np.log(p) - np.log(q) - betaln(a, b), out)
    elif a * p < 1:
        out = np.where(x == 0, np.inf, out)
    out = np.where(x < 0, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def beta_prime_pdf(x, params: BetaPrimeParams):
    """Density of the four-parameter Beta-Prime law; raises for x < 0."""
    if np.any(np.asarray(x) < 0):
        raise ParameterError("Beta-Prime support is [0, inf)")
    return np.exp(log_beta_prime_pdf(x, params))


def beta_prime_cdf(x, params: BetaPrimeParams):
    """CDF via the regularized incomplete beta function."""
    x = np.asarray(x, dtype=float)
    t = (np.clip(x, 0, None) / params.q) ** params.p
    return betainc(params.alpha, params.beta, t / (1.0 + t))
