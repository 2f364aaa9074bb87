"""Independent reference minimizers for the coordinate updates.

Every coordinate objective here is assembled from textbook Gamma and Beta
log-densities (checked against ``scipy.stats`` in the tests) and the
majorizer's data term, then minimized numerically: a log-spaced grid
locates the best basin and bounded Brent refines it. The W oracle uses SLSQP
on the simplex. None of this shares code with the package.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy import optimize
from scipy.special import betaln, gammaln, xlogy

TINY = 1e-300
# priors with support h > 0 keep every coordinate at or above this value
FLOOR = 1e-12


def data_term(h, p, q, exp_lik=False):
    h = np.maximum(h, TINY)
    return p / h + q * h if exp_lik else -p * np.log(h) + q * h


def nlg(x, shape, rate):
    """Negative Gamma(shape, rate) log-density; +inf off the support."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(shape * np.log(rate) - gammaln(shape) + xlogy(shape - 1, x) - rate * x)
    return np.where(x > 0, out, np.inf)


def nlbeta(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(xlogy(a - 1, x) + (b - 1) * np.log1p(-x) - betaln(a, b))
    return np.where((x > 0) & (x < 1), out, np.inf)


def minimize_1d(f, lo, hi, n_grid=1500):
    """Global minimum of a scalar function on (lo, hi); returns (x, f(x))."""
    lo = max(lo, 1e-14 * max(hi, 1.0) if np.isfinite(hi) else 1e-14)
    if not np.isfinite(hi):
        hi = 1e8
    if lo > 0:
        grid = np.geomspace(lo, hi, n_grid)
    else:
        grid = np.linspace(lo, hi, n_grid)
    # endpoints of open intervals evaluate to +inf and are never selected
    with np.errstate(all="ignore"):
        vals = np.asarray(f(grid), dtype=float)
    vals = np.where(np.isnan(vals), np.inf, vals)
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)] if i > 0 else lo
    b = grid[min(i + 1, len(grid) - 1)] if i < len(grid) - 1 else hi
    best_x, best_f = grid[i], vals[i]
    if b > a:
        with np.errstate(all="ignore"):
            r = optimize.minimize_scalar(lambda x: float(f(x)), bounds=(a, b), method="bounded",
                                         options={"xatol": 1e-13 * max(1.0, abs(b)), "maxiter": 500})
        if r.fun < best_f:
            best_x, best_f = r.x, r.fun
    return float(best_x), float(best_f)


def simplex_min(f, grad, x0):
    """Minimize f over the probability simplex with SLSQP."""
    F = len(x0)
    cons = [{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(F)}]
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r = optimize.minimize(f, x0, jac=grad, method="SLSQP", bounds=[(1e-300, 1.0)] * F,
                              constraints=cons, options={"ftol": 1e-15, "maxiter": 1000})
    w = np.clip(r.x, 0, None)
    w /= w.sum()
    return w, f(w)


def rel_gap(f_ours, f_ref):
    """How much worse (relative) our objective value is than the oracle's."""
    if f_ours == -np.inf:
        return 0.0
    return (f_ours - f_ref) / max(1.0, abs(f_ref))


# ---------------------------------------------------------- coordinate objectives

def gap_obj(p, q, alpha, beta, exp_lik=False):
    return lambda h: data_term(h, p, q, exp_lik) + nlg(np.maximum(h, TINY), alpha, beta)


def rate_obj(n, N, p, q, alpha, beta, h_prev, h_next):
    def f(h):
        out = data_term(h, p, q)
        if n > 0:
            out += nlg(h, alpha, beta / h_prev)
        if n < N - 1:
            out += nlg(h_next, alpha, beta / h)
        return out
    return f


def hier_h_obj(n, N, p, q, az, bz, ah, bh, z_cur, z_next):
    def f(h):
        out = data_term(h, p, q)
        if n > 0:
            out += nlg(h, ah, bh * z_cur)
        if n < N - 1:
            out += nlg(z_next, az, bz * h)
        return out
    return f


def hier_z_obj(az, bz, ah, bh, h_prev, h_cur):
    return lambda z: nlg(z, az, bz * h_prev) + nlg(h_cur, ah, bh * z)


def shape_obj(n, N, p, q, alpha, beta, h_prev, h_next):
    def f(h):
        out = data_term(h, p, q)
        if n > 0:
            out += nlg(h, alpha * h_prev, beta)
        if n < N - 1:
            out += nlg(h_next, alpha * h, beta)
        return out
    return f


def bgar_h_obj(n, N, p, q, alpha, beta, rho, h_prev=None, b_cur=None, h_next=None, b_next=None,
               exp_lik=False):
    gamma = alpha * (1 - rho)

    def f(h):
        out = data_term(h, p, q, exp_lik)
        out += nlg(h, alpha, beta) if n == 0 else nlg(h - b_cur * h_prev, gamma, beta)
        if n < N - 1:
            out += nlg(h_next - b_next * h, gamma, beta)
        return out
    return f


def bgar_h_interval(n, N, h_prev=None, b_cur=None, h_next=None, b_next=None):
    lo = 0.0 if n == 0 else b_cur * h_prev
    hi = np.inf if n == N - 1 else h_next / b_next
    return lo, hi


def bgar_b_obj(alpha, beta, rho, h_prev, h_cur):
    gamma, eta = alpha * (1 - rho), alpha * rho
    return lambda b: nlbeta(b, eta, gamma) + nlg(h_cur - b * h_prev, gamma, beta)


def w_obj(p, q, exp_lik=False):
    if exp_lik:
        return (lambda w: np.sum(p / np.maximum(w, TINY) + q * w),
                lambda w: -p / np.maximum(w, TINY) ** 2 + q)
    return (lambda w: np.sum(-p * np.log(np.maximum(w, TINY)) + q * w),
            lambda w: -p / np.maximum(w, TINY) + q)


# ------------------------------------------------------------- rule checkers
#
# Each checker draws M random instances of one family of coordinate updates,
# applies the package's update and returns, per instance, the relative amount
# by which its objective value exceeds the oracle's (negative: package better).

def _gap_prior(K, rng):
    from tempnmf.mapest.priors import GaPPrior
    return GaPPrior(alpha=rng.uniform(0.1, 10, K), beta=rng.uniform(0.05, 10, K))


def _stats(shape, rng, scale=5.0, zeros=0.1):
    P = rng.gamma(1.0, scale, shape) * (rng.random(shape) > zeros)
    Q = rng.uniform(0.1, 5, shape)
    return P, Q


def check_gap(M, rng, exp_lik=False):
    from tempnmf.mapest import updates
    prior = _gap_prior(M, rng)
    P, Q = _stats((M, 1), rng)
    fn = updates.update_h_gap_exp if exp_lik else updates.update_h_gap
    ours = fn(P, Q, prior)[:, 0]
    out = []
    for i in range(M):
        f = gap_obj(P[i, 0], Q[i, 0], prior.alpha[i], prior.beta[i], exp_lik)
        out.append(rel_gap(float(f(ours[i])), minimize_1d(f, 0.0, np.inf)[1]))
    return np.array(out)


def check_rate(M, rng):
    from tempnmf.mapest import updates
    from tempnmf.mapest.priors import RatePrior
    a, b = rng.uniform(0.5, 20, M), rng.uniform(0.5, 20, M)
    prior = RatePrior(alpha=a, beta=b)
    H = rng.gamma(2.0, 1.0, (M, 3))
    P, Q = _stats((M, 3), rng)
    Hn = updates.update_h_rate(P, Q, H, prior)
    out = []
    for i in range(M):
        nb = [(None, H[i, 1]), (Hn[i, 0], H[i, 2]), (Hn[i, 1], None)]
        for n, (hp, hx) in enumerate(nb):
            f = rate_obj(n, 3, P[i, n], Q[i, n], a[i], b[i], hp, hx)
            out.append(rel_gap(float(f(Hn[i, n])), minimize_1d(f, FLOOR, np.inf)[1]))
    return np.array(out)


def check_hier(M, rng):
    from tempnmf.mapest import updates
    from tempnmf.mapest.priors import HierRatePrior
    az, bz = rng.uniform(0.5, 20, M), rng.uniform(0.5, 20, M)
    ah, bh = rng.uniform(1.0, 20, M), rng.uniform(0.5, 20, M)
    prior = HierRatePrior(alpha_z=az, beta_z=bz, alpha_h=ah, beta_h=bh)
    H = rng.gamma(2.0, 1.0, (M, 3))
    P, Q = _stats((M, 3), rng)
    Hn, Zn = updates.update_hier_rate(P, Q, H, updates.update_z_hier(H, prior), prior)
    out = []
    for i in range(M):
        for n in (1, 2):
            f = hier_z_obj(az[i], bz[i], ah[i], bh[i], H[i, n - 1], H[i, n])
            out.append(rel_gap(float(f(Zn[i, n])), minimize_1d(f, FLOOR, np.inf)[1]))
        zs = [(None, Zn[i, 1]), (Zn[i, 1], Zn[i, 2]), (Zn[i, 2], None)]
        for n, (zc, zx) in enumerate(zs):
            f = hier_h_obj(n, 3, P[i, n], Q[i, n], az[i], bz[i], ah[i], bh[i], zc, zx)
            out.append(rel_gap(float(f(Hn[i, n])), minimize_1d(f, FLOOR, np.inf)[1]))
    return np.array(out)


def check_shape(M, rng):
    from tempnmf.mapest import updates
    from tempnmf.mapest.priors import ShapePrior
    a, b = rng.uniform(0.2, 10, M), rng.uniform(0.2, 10, M)
    prior = ShapePrior(alpha=a, beta=b)
    H = rng.gamma(2.0, 1.0, (M, 3))
    P, Q = _stats((M, 3), rng)
    Hn = updates.update_h_shape(P, Q, H, prior)
    out = []
    for i in range(M):
        nb = [(None, H[i, 1]), (Hn[i, 0], H[i, 2]), (Hn[i, 1], None)]
        for n, (hp, hx) in enumerate(nb):
            f = shape_obj(n, 3, P[i, n], Q[i, n], a[i], b[i], hp, hx)
            out.append(rel_gap(float(f(Hn[i, n])), minimize_1d(f, FLOOR, np.inf)[1]))
    return np.array(out)


def bgar_state(M, N, rng):
    """Admissible BGAR hyperparameters per row and a feasible (H, B)."""
    from tempnmf.mapest.priors import BGARPrior
    rho = rng.uniform(0.1, 0.95, M)
    alpha = rng.uniform(1.05, 20, M) * np.maximum(1 / (1 - rho), 1 / rho)
    beta = rng.uniform(0.1, 10, M)
    gamma, eta = alpha * (1 - rho), alpha * rho
    H = np.empty((M, N))
    B = np.full((M, N), np.nan)
    H[:, 0] = rng.gamma(alpha, 1 / beta)
    for n in range(1, N):
        B[:, n] = rng.beta(eta, gamma)
        H[:, n] = B[:, n] * H[:, n - 1] + rng.gamma(gamma, 1 / beta)
    return BGARPrior(alpha=alpha, beta=beta, rho=rho), H, B


def check_bgar_h(M, rng, exp_lik=False):
    from tempnmf.mapest import updates
    prior, H, B = bgar_state(M, 3, rng)
    scale = (prior.alpha / prior.beta)[:, None]
    P = rng.gamma(2.0, 1.0, (M, 3)) * (scale if not exp_lik else scale**2)
    Q = rng.uniform(0.1, 3, (M, 3))
    if exp_lik:
        Q = Q / scale
    Hn = updates._update_h_bgar_sweep(P, Q, H, B, prior, exp_lik=exp_lik)
    out = []
    for i in range(M):
        a, be, r = prior.alpha[i], prior.beta[i], prior.rho[i]
        ctx = [dict(h_next=H[i, 1], b_next=B[i, 1]),
               dict(h_prev=Hn[i, 0], b_cur=B[i, 1], h_next=H[i, 2], b_next=B[i, 2]),
               dict(h_prev=Hn[i, 1], b_cur=B[i, 2])]
        for n, kw in enumerate(ctx):
            f = bgar_h_obj(n, 3, P[i, n], Q[i, n], a, be, r, exp_lik=exp_lik, **kw)
            lo, hi = bgar_h_interval(n, 3, **kw)
            out.append(rel_gap(float(f(Hn[i, n])), minimize_1d(f, lo, hi)[1]))
    return np.array(out)


def check_bgar_b(M, rng):
    from tempnmf.mapest import updates
    prior, H, B = bgar_state(M, 3, rng)
    Bn = updates.update_b_bgar(H, B, prior)
    out = []
    for i in range(M):
        for n in (1, 2):
            f = bgar_b_obj(prior.alpha[i], prior.beta[i], prior.rho[i], H[i, n - 1], H[i, n])
            hi = min(1.0, H[i, n] / H[i, n - 1])
            out.append(rel_gap(float(f(Bn[i, n])), minimize_1d(f, 0.0, hi)[1]))
    return np.array(out)


def check_w(M, rng, kind="poisson"):
    """``kind``: 'poisson' (column-constant Q'), 'masked' (varying Q'), 'exponential'."""
    from tempnmf.mapest import updates
    F = 6
    Pp = rng.gamma(1.0, 3.0, (F, M)) * (rng.random((F, M)) > 0.15)
    Pp[0] += 0.1  # every column keeps some mass
    if kind == "poisson":
        Qp = np.broadcast_to(rng.uniform(0.5, 20, M), (F, M)).copy()
        ours = updates.update_w(Pp, Qp)
    elif kind == "masked":
        Qp = rng.uniform(0.5, 20, (F, M))
        ours = updates.update_w(Pp, Qp)
    else:
        Qp = rng.uniform(0.5, 20, (F, M))
        ours = updates.update_w_exp(Pp, Qp)
    out = []
    for k in range(M):
        f, g = w_obj(Pp[:, k], Qp[:, k], kind == "exponential")
        # the best of several starts guards against a poor SLSQP run
        ref = min(simplex_min(f, g, x0)[1] for x0 in (np.full(F, 1 / F), (Pp[:, k] + 1e-3) / (Pp[:, k] + 1e-3).sum()))
        out.append(rel_gap(float(f(ours[:, k])), ref))
    return np.array(out)


RULES = {
    "gap": check_gap,
    "gap-exponential": lambda M, rng: check_gap(M, rng, exp_lik=True),
    "rate": check_rate,
    "hier": check_hier,
    "shape": check_shape,
    "bgar-h": check_bgar_h,
    "bgar-h-exponential": lambda M, rng: check_bgar_h(M, rng, exp_lik=True),
    "bgar-b": check_bgar_b,
    "w": check_w,
    "w-masked": lambda M, rng: check_w(M, rng, "masked"),
    "w-exponential": lambda M, rng: check_w(M, rng, "exponential"),
}
