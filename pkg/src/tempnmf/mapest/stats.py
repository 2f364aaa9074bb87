"""Sufficient statistics of the Jensen-type majorizers of the likelihood.

Poisson: the H-majorizer is  sum_kn -p_kn log h_kn + q_kn h_kn  and the
W-majorizer is  sum_fk -p'_fk log w_fk + q'_fk w_fk.
Exponential: the H-majorizer is  sum_kn p_kn / h_kn + q_kn h_kn  (same for W).
A mask ``M`` (1 = observed) weights every data term; ``mask=None`` is the
fully observed case. W and H may carry a leading batch axis (G, F, K) and
(G, K, N); V and the mask then broadcast against (G, F, N).
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln


class DegeneracyError(FloatingPointError):
    """A model entry [WH]_fn vanishes where observed data needs it positive."""


def _ratio(V, WH, mask, power: int = 1):
    """Elementwise m v / [WH]^power, defined as 0 wherever m v = 0."""
    num = V if mask is None else mask * V
    bad = (num > 0) & (WH <= 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegeneracyError(f"[WH] is zero at observed entry {idx} with v={np.broadcast_to(V, bad.shape)[idx]}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(num > 0, num / WH**power, 0.0)
    return out


def _mask_over(WH, mask, power: int = 1):
    """Elementwise m / [WH]^power, 0 where unobserved."""
    m = np.ones_like(WH) if mask is None else np.broadcast_to(mask, WH.shape)
    bad = (m > 0) & (WH <= 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegeneracyError(f"[WH] is zero at observed entry {idx}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(m > 0, m / WH**power, 0.0)


def _t(A):
    return np.swapaxes(A, -1, -2)


def majorize_h_stats(V, W, H, mask=None):
    """Return (P, Q), both K x N, for the Poisson H-majorizer at H."""
    R = _ratio(V, W @ H, mask)
    P = H * (_t(W) @ R)
    if mask is None:
        Q = np.broadcast_to(W.sum(axis=-2)[..., None], H.shape).copy()
    else:
        Q = _t(W) @ mask
    return P, Q


def majorize_w_stats(V, W, H, mask=None):
    """Return (P', Q'), both F x K, for the Poisson W-majorizer at W."""
    R = _ratio(V, W @ H, mask)
    Pp = W * (R @ _t(H))
    if mask is None:
        Qp = np.broadcast_to(H.sum(axis=-1)[..., None, :], W.shape).copy()
    else:
        Qp = mask @ _t(H)
    return Pp, Qp


def majorize_h_stats_exp(V, W, H, mask=None):
    """(P, Q) for the exponential-likelihood H-majorizer at H."""
    WH = W @ H
    P = H**2 * (_t(W) @ _ratio(V, WH, mask, power=2))
    Q = _t(W) @ _mask_over(WH, mask)
    return P, Q


def majorize_w_stats_exp(V, W, H, mask=None):
    WH = W @ H
    Pp = W**2 * (_ratio(V, WH, mask, power=2) @ _t(H))
    Qp = _mask_over(WH, mask) @ _t(H)
    return Pp, Qp


def h_majorizer_constant(V, W, H, mask=None) -> float:
    """Additive constant making the Poisson H-majorizer equal the full negative
    log-likelihood (including log v!) at the expansion point H.

    With lambda_fkn = w_fk h_kn / [WH]_fn the constant is
    sum_fn m v (sum_k lambda log(lambda / w_fk)) + sum_fn m log Gamma(v + 1).
    """
    WH = W @ H
    m = np.ones_like(V) if mask is None else mask
    R = _ratio(V, WH, mask)
    total = 0.0
    for k in range(W.shape[1]):
        # lambda log(lambda / w) = lambda log(h / WH)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(R > 0, np.outer(W[:, k], H[k]) / WH, 0.0)
            term = np.where(lam > 0, lam * np.log(np.where(lam > 0, H[k][None, :] / WH, 1.0)), 0.0)
        total += float(np.sum(m * V * term))
    return total + float(np.sum(m * gammaln(V + 1)))


def w_majorizer_constant(V, W, H, mask=None) -> float:
    """Same constant for the W-majorizer (symmetric in the roles of W and H)."""
    return h_majorizer_constant(V.T, H.T, W.T, None if mask is None else mask.T)


def h_majorizer_constant_exp(V, W, H, mask=None) -> float:
    """Constant for the exponential H-majorizer: sum_fn m (log [WH] - 1)."""
    WH = W @ H
    m = np.ones_like(V) if mask is None else mask
    return float(np.sum(m * (np.log(np.where(m > 0, WH, 1.0)) - 1.0)))
