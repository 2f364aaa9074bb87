"""Coordinate-wise minimizers of majorizer + negative log-prior.

All H updates take the majorizer statistics ``(P, Q)`` (K x N) computed at the
current H and return a new array; inputs are never modified. Temporal chains
are swept Gauss-Seidel along n (ascending, freshest neighbours), vectorized
across the K independent rows.
"""
from __future__ import annotations

import numpy as np

from ..polysolve import BracketError, digamma, psi_pair, real_roots_batch, solve_increasing
from .priors import BGARPrior, GaPPrior, HierRatePrior, HyperparameterError, RatePrior, ShapePrior

FLOOR = 1e-12


class DegenerateComponentError(FloatingPointError):
    pass


class InvariantViolation(ArithmeticError):
    pass


# --------------------------------------------------------------------------- W

def _simplex_lagrange(P: np.ndarray, Q: np.ndarray, power: float) -> np.ndarray:
    """Minimize each column of a W-majorizer on the probability simplex.

    Stationarity gives w_f = (p_f / (q_f + lam)) ** power, with power 1
    (Poisson) or 1/2 (exponential), and lam fixed by sum_f w_f = 1. The
    multiplier solves s(lam)^(-1/power) = 1, where s is the column sum; this
    is increasing in lam and is solved by safeguarded Newton from the right.
    Entries with p_f = 0 stay at 0 unless the KKT conditions pin lam at
    -q_f, in which case they absorb the leftover mass.
    """
    F, C = P.shape
    pos = P > 0
    if not np.all(pos.any(axis=0)):
        raise DegenerateComponentError("W column statistics are all zero")
    inf = np.inf
    qpos = np.where(pos, Q, inf).min(axis=0)
    qzero = np.where(pos, inf, Q).min(axis=0)
    floor = np.maximum(-qpos, -qzero)
    Pw = np.where(pos, P, 0.0) ** power

    def s_and_ds(lam):
        d = np.where(pos, Q + lam, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(pos, Pw * d ** (-power), 0.0)
            return t.sum(axis=0), -power * np.where(pos, t / d, 0.0).sum(axis=0)

    s_floor = s_and_ds(np.where(np.isfinite(floor), floor, 0.0))[0]
    clamp = (floor > -qpos) & (s_floor <= 1.0)

    lo = floor.copy()
    hi = np.maximum(Pw.sum(axis=0) ** (1 / power) - qpos, lo)
    lam = hi.copy()
    done = clamp.copy()
    for _ in range(200):
        sv, dsv = s_and_ds(lam)
        g = sv ** (-1 / power) - 1.0
        dg = -(1 / power) * sv ** (-1 / power - 1) * dsv
        lo = np.where(g < 0, lam, lo)
        hi = np.where(g > 0, lam, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = lam - g / dg
        step = np.where((step > lo) & (step < hi), step, 0.5 * (lo + hi))
        step = np.where((g == 0) | done, lam, step)
        scale = np.maximum(np.abs(lam), qpos)
        done |= np.abs(step - lam) <= 4 * np.finfo(float).eps * scale
        lam = step
        if done.all():
            break
    lam = np.where(clamp, floor, lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(pos, Pw * np.where(pos, Q + lam, 1.0) ** (-power), 0.0)
    if clamp.any():
        free = ~pos & (Q == qzero) & clamp
        left = np.maximum(0.0, 1.0 - W.sum(axis=0))
        W = W + free * (left / np.maximum(free.sum(axis=0), 1))
    return W / W.sum(axis=0)


def _constant_columns(Qp: np.ndarray) -> np.ndarray:
    return np.ptp(Qp, axis=0) <= 1e-13 * np.abs(Qp).max(axis=0)


def update_w(Pp: np.ndarray, Qp: np.ndarray | None = None) -> np.ndarray:
    """Minimize the Poisson W-majorizer subject to unit l1-norm columns.

    Columns whose ``Qp`` is constant (always the case without a mask, or with
    whole-column masks) reduce to plain normalization of ``Pp``; the others
    go through the Lagrange solve.
    """
    col = Pp.sum(axis=0)
    if np.any(~(col > 0)):
        k = int(np.argmin(col))
        raise DegenerateComponentError(f"W column {k} has zero majorizer mass")
    W = Pp / col
    if Qp is not None:
        varying = ~_constant_columns(Qp)
        if varying.any():
            W[:, varying] = _simplex_lagrange(Pp[:, varying], Qp[:, varying], 1.0)
    return W


def update_w_exp(Pp: np.ndarray, Qp: np.ndarray) -> np.ndarray:
    """Exponential-likelihood W step: minimize sum p/w + q w on the simplex."""
    col = Pp.sum(axis=0)
    if np.any(~(col > 0)):
        raise DegenerateComponentError(f"W column {int(np.argmin(col))} has zero majorizer mass")
    return _simplex_lagrange(Pp, Qp, 0.5)


# -------------------------------------------------------------------- GaP

def update_h_gap(P, Q, prior: GaPPrior) -> np.ndarray:
    v = prior.vectors(P.shape[0])
    a, b = v["alpha"][:, None], v["beta"][:, None]
    num = P + a - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(num > 0, num / (Q + b), 0.0)


def update_h_gap_exp(P, Q, prior: GaPPrior) -> np.ndarray:
    """Positive root of (q + beta) h^2 - (alpha - 1) h - p = 0, or 0."""
    v = prior.vectors(P.shape[0])
    am1, s = v["alpha"][:, None] - 1, Q + v["beta"][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        root = (am1 + np.sqrt(am1**2 + 4 * s * P)) / (2 * s)
    return np.where((P > 0) | (am1 > 0), root, 0.0)


# ------------------------------------------------------------------- Rate

def _positive_quadratic_root(a2, a1, a0):
    """The non-negative root of a2 h^2 + a1 h + a0 with a2 >= 0 > a0."""
    sd = np.sqrt(a1 * a1 - 4 * a2 * a0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(a1 <= 0, (-a1 + sd) / (2 * a2), -2 * a0 / (a1 + sd))
    if not np.all(np.isfinite(r) & (r > 0)):
        raise InvariantViolation(f"no positive root for quadratic ({a2}, {a1}, {a0})")
    return r


def rate_coefficients(n: int, N: int, p, q, alpha, beta, h_prev=None, h_next=None):
    """Quadratic coefficients (a2, a1, a0) for h_kn under the rate chain (n 0-based)."""
    if n == 0:
        return q, alpha - p, -beta * h_next
    if n < N - 1:
        return q + beta / h_prev, 1 - p, -beta * h_next
    return 0.0 * q, q + beta / h_prev, 1 - alpha - p


def update_h_rate(P, Q, H, prior: RatePrior) -> np.ndarray:
    K, N = H.shape
    v = prior.vectors(K)
    a, b = v["alpha"], v["beta"]
    H = H.copy()
    if N == 1:
        H[:, 0] = np.maximum(P[:, 0] / Q[:, 0], FLOOR)
        return H
    for n in range(N):
        if n == N - 1:
            _, a1, a0 = rate_coefficients(n, N, P[:, n], Q[:, n], a, b, h_prev=H[:, n - 1])
            H[:, n] = np.maximum(-a0 / a1, FLOOR)
            continue
        a2, a1, a0 = rate_coefficients(n, N, P[:, n], Q[:, n], a, b,
                                       h_prev=H[:, n - 1] if n else None, h_next=H[:, n + 1])
        H[:, n] = _positive_quadratic_root(a2, a1, a0)
    return H


# ------------------------------------------------------- Hierarchical rate

def update_z_hier(H, prior: HierRatePrior) -> np.ndarray:
    """Closed-form Z given H; column 0 carries no variable and is NaN."""
    K, N = H.shape
    v = prior.vectors(K)
    az, bz, ah, bh = (v[k][:, None] for k in ("alpha_z", "beta_z", "alpha_h", "beta_h"))
    Z = np.full((K, N), np.nan)
    Z[:, 1:] = (az + ah - 1) / (bz * H[:, :-1] + bh * H[:, 1:])
    return Z


def update_hier_rate(P, Q, H, Z, prior: HierRatePrior):
    """Z first, then every h_kn in closed form (h only couples through Z)."""
    K, N = H.shape
    v = prior.vectors(K)
    if np.any(v["alpha_h"] < 1):
        raise HyperparameterError("hierarchical-rate MAP updates need alpha_h >= 1")
    az, bz, ah, bh = (v[k][:, None] for k in ("alpha_z", "beta_z", "alpha_h", "beta_h"))
    Z = update_z_hier(H, prior)
    Hn = np.empty_like(H)
    if N == 1:
        Hn[:, :1] = np.maximum(P / Q, FLOOR)
        return Hn, Z
    Hn[:, :1] = (P[:, :1] + az) / (Q[:, :1] + bz * Z[:, 1:2])
    Hn[:, 1:-1] = (P[:, 1:-1] + ah + az - 1) / (Q[:, 1:-1] + bh * Z[:, 1:-1] + bz * Z[:, 2:])
    Hn[:, -1:] = np.maximum((P[:, -1:] + ah - 1) / (Q[:, -1:] + bh * Z[:, -1:]), FLOOR)
    return Hn, Z


# ------------------------------------------------------------------ Shape

def shape_stationarity(n: int, N: int, h, p, q, alpha, beta, h_prev=None, h_next=None):
    """Left-hand side of the first-order condition for h_kn, multiplied by h.

    Rows 0 and 1..N-2 carry the digamma term; the last row is linear.
    """
    if n == 0:
        return -p + (q - alpha * np.log(beta * h_next) + alpha * digamma(alpha * h)) * h
    if n < N - 1:
        return ((1 - alpha * h_prev - p)
                + (q + beta - alpha * np.log(beta * h_next)) * h
                + alpha * digamma(alpha * h) * h)
    return (1 - alpha * h_prev - p) + (q + beta) * h


def update_h_shape(P, Q, H, prior: ShapePrior) -> np.ndarray:
    K, N = H.shape
    v = prior.vectors(K)
    a, b = v["alpha"], v["beta"]
    H = H.copy()
    if N == 1:
        H[:, 0] = np.maximum(P[:, 0] / Q[:, 0], FLOOR)
        return H
    for n in range(N):
        p, q = P[:, n], Q[:, n]
        if n == N - 1:
            H[:, n] = np.maximum((p + a * H[:, n - 1] - 1) / (q + b), FLOOR)
            continue
        lin = q - a * np.log(b * H[:, n + 1]) + (b if n else 0.0)
        c = p if n == 0 else p + a * H[:, n - 1] - 1

        # h times the coordinate derivative: same sign and root, no pole at 0
        def fdf(h, c=c, lin=lin):
            psi, psi1 = psi_pair(a * h)
            base = lin + a * psi
            return -c + base * h, base + a * a * h * psi1

        try:
            H[:, n] = solve_increasing(fdf, H[:, n], lower=FLOOR)
        except BracketError as exc:
            raise BracketError(f"shape update, column {n}: {exc}") from exc
    return H


# ------------------------------------------------------------------- BGAR

def _bgar_h_objective(h, p, q, exp_lik, alpha, beta, gamma, c=None, h_next=None, b_next=None):
    """Per-coordinate objective for h_kn under BGAR, vectorized over candidates.

    ``c`` is None for the first column (Gamma(alpha, beta) prior on h_1);
    ``h_next``/``b_next`` are None for the last column.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (p / h if exp_lik else -p * np.log(h)) + q * h + beta * h
        if c is None:
            out = out - (alpha - 1) * np.log(h)
        else:
            out = out - (gamma - 1) * np.log(h - c)
        if h_next is not None:
            out = out - (gamma - 1) * np.log(h_next - b_next * h) - beta * b_next * h
    return np.where(np.isnan(out), np.inf, out)


def _bgar_b_objective(b, h_prev, h_cur, beta, gamma, eta):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (-(gamma - 1) * np.log(h_cur - b * h_prev) - beta * b * h_prev
               - (eta - 1) * np.log(b) - (gamma - 1) * np.log1p(-b))
    return np.where(np.isnan(out), np.inf, out)


def _pick(roots, lo, hi, current, objective):
    """Lowest-objective root strictly inside (lo, hi); keep ``current`` if none is better.

    Returns the new values and a flag per row marking rows with no admissible root.
    """
    lo, hi = lo[:, None], hi[:, None]
    ok = np.isfinite(roots) & (roots > lo) & (roots < hi)
    cand = np.where(ok, roots, current[:, None])
    vals = np.where(ok, objective(cand), np.inf)
    cur = objective(current[:, None])[:, 0]
    best = np.argmin(vals, axis=1)
    rows = np.arange(len(best))
    take = vals[rows, best] <= cur
    return np.where(take, cand[rows, best], current), ~ok.any(axis=1)


def _count(diag, key, flags):
    if diag is not None:
        diag[key] = diag.get(key, 0) + flags.astype(int)


def bgar_b_coefficients(h_prev, h_cur, beta, gamma, eta):
    """Cubic (a3, a2, a1, a0) for b_kn on [0, min(1, x)], x = h_kn / h_k(n-1)."""
    x = h_cur / h_prev
    bh = beta * h_prev
    return np.stack([
        -bh,
        2 * (1 - gamma) + (1 - eta) + bh * (x + 1),
        -(1 - gamma) * (x + 1) - (1 - eta) * (x + 1) - bh * x,
        (1 - eta) * x,
    ], axis=-1)


def update_b_bgar(H, B, prior: BGARPrior, diag=None) -> np.ndarray:
    K, N = H.shape
    B = B.copy()
    if N == 1:
        return B
    v = prior.vectors(K)
    shape = (K, N - 1)
    beta, gamma, eta = (np.broadcast_to(v[k][:, None], shape).ravel() for k in ("beta", "gamma", "eta"))
    hp, hc = H[:, :-1].ravel(), H[:, 1:].ravel()
    coeffs = bgar_b_coefficients(hp, hc, beta, gamma, eta)
    roots = real_roots_batch(coeffs)
    upper = np.minimum(1.0, hc / hp)

    def obj(b):
        return _bgar_b_objective(b, hp[:, None], hc[:, None], beta[:, None], gamma[:, None], eta[:, None])

    new, fb = _pick(roots, np.zeros_like(upper), upper, B[:, 1:].ravel(), obj)
    _count(diag, "b_fallbacks", fb.reshape(shape).sum(axis=1))
    B[:, 1:] = new.reshape(shape)
    return B


def bgar_h_coefficients(n: int, N: int, p, q, alpha, beta, gamma, c=None, d=None,
                        b_next=None, exp_lik=False):
    """Polynomial coefficients (highest degree first) for h_kn under BGAR.

    Poisson rows are cubics (quadratics at the ends); the exponential
    likelihood raises every degree by one.
    """
    one_g = 1 - gamma
    if N == 1:
        s = q + beta
        if exp_lik:
            return np.stack([s, -(alpha - 1), -p], axis=-1)
        return np.stack([s, -(p + alpha - 1)], axis=-1)
    if n == 0:
        A = q + beta * (1 - b_next)
        if exp_lik:
            return np.stack([-A, A * d - (1 - alpha) - one_g, (1 - alpha) * d + p, -p * d], axis=-1)
        return np.stack([-A, -(1 - alpha - p) + A * d - one_g, (1 - alpha - p) * d], axis=-1)
    if n < N - 1:
        A = q + beta * (1 - b_next)
        s = c + d
        if exp_lik:
            return np.stack([-A, A * s - 2 * one_g, -c * d * A + p + one_g * s, -p * s, p * c * d], axis=-1)
        return np.stack([-A, p - 2 * one_g + A * s, -p * s + one_g * s - A * c * d, p * c * d], axis=-1)
    s = q + beta
    if exp_lik:
        return np.stack([s, -s * c + one_g, -p, c * p], axis=-1)
    return np.stack([s, -p - c * s + one_g, c * p], axis=-1)


def _update_h_bgar_sweep(P, Q, H, B, prior: BGARPrior, exp_lik: bool, diag=None):
    K, N = H.shape
    v = prior.vectors(K)
    alpha, beta, gamma = v["alpha"], v["beta"], v["gamma"]
    H = H.copy()
    for n in range(N):
        p, q = P[:, n], Q[:, n]
        c = B[:, n] * H[:, n - 1] if n > 0 else None
        last = n == N - 1
        b_next = None if last else B[:, n + 1]
        h_next = None if last else H[:, n + 1]
        d = None if last else h_next / b_next
        coeffs = bgar_h_coefficients(n, N, p, q, alpha, beta, gamma, c=c, d=d,
                                     b_next=b_next, exp_lik=exp_lik)
        roots = real_roots_batch(coeffs)
        lo = np.zeros(K) if c is None else c
        hi = np.full(K, np.inf) if last else d

        def obj(h, p=p, q=q, c=c, h_next=h_next, b_next=b_next):
            col = (lambda x: None if x is None else x[:, None])
            return _bgar_h_objective(h, p[:, None], q[:, None], exp_lik, alpha[:, None],
                                     beta[:, None], gamma[:, None], col(c), col(h_next), col(b_next))

        H[:, n], fb = _pick(roots, lo, hi, H[:, n], obj)
        _count(diag, "h_fallbacks", fb)
    return H


def _check_bgar(prior: BGARPrior, K: int):
    v = prior.vectors(K)
    if not (np.all(v["gamma"] > 1) and np.all(v["eta"] > 1)):
        prior.validate(K)  # raises with the offending pair


def update_bgar(P, Q, H, B, prior: BGARPrior, diag=None):
    """B coordinates first (independent given H), then a Gauss-Seidel H sweep."""
    _check_bgar(prior, H.shape[0])
    B = update_b_bgar(H, B, prior, diag)
    return _update_h_bgar_sweep(P, Q, H, B, prior, exp_lik=False, diag=diag), B


def update_bgar_exp(P, Q, H, B, prior: BGARPrior, diag=None):
    """Exponential-likelihood variant: quartic h-solves, same b-cubic."""
    _check_bgar(prior, H.shape[0])
    B = update_b_bgar(H, B, prior, diag)
    return _update_h_bgar_sweep(P, Q, H, B, prior, exp_lik=True, diag=diag), B


def init_b_bgar(H) -> np.ndarray:
    K, N = H.shape
    B = np.full((K, N), np.nan)
    if N > 1:
        B[:, 1:] = np.minimum(0.5, 0.5 * H[:, 1:] / H[:, :-1])
    return B
