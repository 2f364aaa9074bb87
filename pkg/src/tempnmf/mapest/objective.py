"""Negative log joint density of (V, H, aux) given W.

Every normalizing constant that depends only on hyperparameters is kept
(log Gamma terms, rate powers), so values from different hyperparameters are
on the same scale. Two exceptions, both for the GaP prior: with beta = 0 the
improper prior drops its normalizer, and entries h = 0 (allowed by the GaP
clamp) contribute only the normalizer.

``objective`` validates supports and reports the first offending index;
the ``*_terms`` helpers return +inf instead and are used by the batched
driver.
"""
from __future__ import annotations

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from .priors import BGARPrior, GaPPrior, HierRatePrior, RatePrior, ShapePrior


class SupportError(ValueError):
    """A variable lies where its density is zero (objective would be +inf)."""


def _check(cond, label):
    if not np.all(cond):
        idx = tuple(int(i) for i in np.argwhere(~cond)[0])
        raise SupportError(f"{label} out of support at index {idx}")


def likelihood_terms(V, WH, mask=None, likelihood: str = "poisson",
                     constant: bool = True) -> np.ndarray:
    """Elementwise negative log-likelihood, broadcast over a leading batch axis.

    ``constant=False`` drops the data-only log v! term of the Poisson case.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        if likelihood == "poisson":
            # xlogy(v, 0) = -inf for v > 0, so impossible counts give +inf
            out = WH - xlogy(V, WH)
            if constant:
                out = out + gammaln(V + 1)
        elif likelihood == "exponential":
            out = np.where(WH > 0, np.log(WH) + V / WH, np.inf)
        else:
            raise ValueError(f"unknown likelihood {likelihood!r}")
    if mask is not None:
        out = np.where(np.broadcast_to(mask, out.shape) > 0, out, 0.0)
    return out


def _col(v):
    return v[:, None]


def prior_row_terms(H, prior, aux=None) -> np.ndarray:
    """Negative log-prior of each row of H (with its aux row); +inf off support."""
    K, N = H.shape
    v = prior.vectors(K)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(prior, GaPPrior):
            a, b = _col(v["alpha"]), _col(v["beta"])
            logh = np.where(H > 0, np.log(np.where(H > 0, H, 1.0)), 0.0)
            norm = np.where(b > 0, gammaln(a) - a * np.log(np.where(b > 0, b, 1.0)), 0.0)
            t = -(a - 1) * logh + b * H + norm
            t = np.where((H < 0) | ((H == 0) & (a > 1)), np.inf, t)
            return _rowsum(t)

        logh = np.where(H > 0, np.log(np.where(H > 0, H, 1.0)), -np.inf)
        hbad = ~(H > 0).all(axis=1)
        prev, cur = H[:, :-1], H[:, 1:]
        if isinstance(prior, RatePrior):
            a, b = _col(v["alpha"]), _col(v["beta"])
            t = (-(a - 1) * logh[:, 1:] + b * cur / prev - a * np.log(b)
                 + a * logh[:, :-1] + gammaln(a))
            out = _rowsum(t)
        elif isinstance(prior, HierRatePrior):
            az, bz, ah, bh = (_col(v[k]) for k in ("alpha_z", "beta_z", "alpha_h", "beta_h"))
            if N == 1:
                return np.where(hbad, np.inf, 0.0)
            Z = aux[:, 1:]
            logz = np.where(Z > 0, np.log(np.where(Z > 0, Z, 1.0)), -np.inf)
            zt = -(az - 1) * logz + bz * prev * Z - az * (np.log(bz) + logh[:, :-1]) + gammaln(az)
            ht = -(ah - 1) * logh[:, 1:] + bh * Z * cur - ah * (np.log(bh) + logz) + gammaln(ah)
            out = np.where((Z > 0).all(axis=1), _rowsum(zt + ht), np.inf)
        elif isinstance(prior, ShapePrior):
            a, b = _col(v["alpha"]), _col(v["beta"])
            shape = a * prev
            t = -(shape - 1) * logh[:, 1:] + b * cur - shape * np.log(b) + gammaln(shape)
            out = _rowsum(t)
        elif isinstance(prior, BGARPrior):
            a, b, g, e = (_col(v[k]) for k in ("alpha", "beta", "gamma", "eta"))
            first = (-(a - 1) * logh[:, :1] + b * H[:, :1] - a * np.log(b) + gammaln(a))[:, 0]
            if N == 1:
                return np.where(hbad, np.inf, first)
            B = aux[:, 1:]
            eps = cur - B * prev
            ok = ((B > 0) & (B < 1) & (eps > 0)).all(axis=1)
            Bs = np.where((B > 0) & (B < 1), B, 0.5)
            es = np.where(eps > 0, eps, 1.0)
            bt = -(e - 1) * np.log(Bs) - (g - 1) * np.log1p(-Bs) + betaln(e, g)
            et = -(g - 1) * np.log(es) + b * es - g * np.log(b) + gammaln(g)
            out = np.where(ok, first + _rowsum(bt + et), np.inf)
        else:
            raise TypeError(f"unsupported prior {type(prior).__name__}")
    return np.where(hbad, np.inf, out)


def _rowsum(t):
    out = t.sum(axis=1)
    return np.where(np.isnan(out), np.inf, out)


def check_support(V, W, H, prior, aux=None, mask=None, likelihood: str = "poisson"):
    """Raise SupportError naming the first variable with zero density."""
    WH = W @ H
    obs = np.ones(V.shape, bool) if mask is None else mask > 0
    if likelihood == "poisson":
        _check(~(obs & (V > 0)) | (WH > 0), "[WH] (zero rate with positive count)")
    else:
        _check(~obs | (WH > 0), "[WH] (zero scale)")
    if isinstance(prior, GaPPrior):
        a = _col(prior.vectors(H.shape[0])["alpha"])
        _check(H >= 0, "H")
        _check((H > 0) | (a <= 1), "H (zero entry with alpha > 1)")
        return
    _check(H > 0, "H")
    if H.shape[1] == 1:
        return
    if isinstance(prior, HierRatePrior):
        _check(aux[:, 1:] > 0, "Z (columns 2..N)")
    if isinstance(prior, BGARPrior):
        B = aux[:, 1:]
        _check((B > 0) & (B < 1), "B (columns 2..N)")
        _check(H[:, 1:] - B * H[:, :-1] > 0, "h_n - b_n h_(n-1)")


def neg_log_likelihood(V, W, H, mask=None, likelihood: str = "poisson") -> float:
    return float(np.sum(likelihood_terms(V, W @ H, mask, likelihood)))


def neg_log_prior(H, prior, aux=None) -> float:
    return float(np.sum(prior_row_terms(H, prior, aux)))


def objective(V, W, H, prior, aux=None, mask=None, likelihood: str = "poisson") -> float:
    """Criterion minimized by ``fit``: -log p(V | W, H) - log p(H, aux)."""
    V = np.asarray(V, dtype=float)
    check_support(V, W, H, prior, aux, mask, likelihood)
    return neg_log_likelihood(V, W, H, mask, likelihood) + neg_log_prior(H, prior, aux)
