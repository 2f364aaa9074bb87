"""Block-coordinate MM driver.

``fit_many`` runs G independent fits of one prior family in lock-step: the
rows of all H matrices are stacked into one (G*K, N) array and every
coordinate update is vectorized across them. A group stops changing once it
converges, so each result equals the corresponding single fit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import gammaln

from ..distributions import make_rng
from ..polysolve import BracketError
from . import stats, updates
from .objective import check_support, likelihood_terms, prior_row_terms
from .priors import BGARPrior, GaPPrior, HierRatePrior, RatePrior, ShapePrior

LIKELIHOODS = ("poisson", "exponential")


class ConfigurationError(ValueError):
    pass


class NumericalFailure(FloatingPointError):
    pass


@dataclass(frozen=True)
class FitConfig:
    K: int
    tol: float = 1e-5
    max_iters: int = 1000
    seed: int = 0
    likelihood: str = "poisson"

    def validate(self):
        if not (isinstance(self.K, (int, np.integer)) and self.K >= 1):
            raise ConfigurationError(f"K must be a positive integer, got {self.K!r}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be non-negative")
        if self.likelihood not in LIKELIHOODS:
            raise ConfigurationError(f"likelihood must be one of {LIKELIHOODS}, got {self.likelihood!r}")


@dataclass
class FitResult:
    W: np.ndarray
    H: np.ndarray
    aux: np.ndarray | None
    objective_trace: list[float]
    iterations: int
    converged: bool
    prior: object
    likelihood: str = "poisson"
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        def arr(a):
            if a is None:
                return None
            return [[float(x) if math.isfinite(x) else None for x in row] for row in np.asarray(a)]

        F, K = self.W.shape
        return {
            "F": F, "K": K, "N": self.H.shape[1],
            "prior": self.prior.to_dict(),
            "likelihood": self.likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "error": self.error,
            "objective_trace": [float(x) for x in self.objective_trace],
            "diagnostics": self.diagnostics,
            "W": arr(self.W),
            "H": arr(self.H),
            "aux": arr(self.aux),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _check_data(V, mask):
    V = np.asarray(V, dtype=float)
    if V.ndim not in (2, 3) or min(V.shape) < 1:
        raise ConfigurationError(f"V must be a non-empty 2-D array, got shape {V.shape}")
    if not np.all(np.isfinite(V)) or np.any(V < 0):
        raise ConfigurationError("V must be finite and non-negative")
    if mask is not None:
        mask = np.asarray(mask, dtype=float)
        if mask.shape[-2:] != V.shape[-2:]:
            raise ConfigurationError(f"mask shape {mask.shape} does not match data shape {V.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ConfigurationError("mask entries must be 0 or 1")
    return V, mask


def initialize(F: int, N: int, K: int, seed, prior):
    """Gamma(1, 1) draws for W and H, W columns normalized, aux from H."""
    rng = make_rng(seed)
    W = rng.gamma(1.0, 1.0, size=(F, K))
    H = rng.gamma(1.0, 1.0, size=(K, N))
    W /= W.sum(axis=0)
    return W, H, init_aux(H, prior)


def init_aux(H, prior):
    if isinstance(prior, BGARPrior):
        return updates.init_b_bgar(H)
    if isinstance(prior, HierRatePrior):
        return updates.update_z_hier(H, prior)
    return None


def stack_priors(priors, K: int):
    """One prior of the shared family whose hyperparameters vary by stacked row."""
    cls = type(priors[0])
    if any(type(p) is not cls for p in priors):
        raise ConfigurationError("fit_many needs priors of a single family")
    names = [f.name for f in fields(cls)]
    vals = {n: np.concatenate([np.asarray(p.vectors(K)[n]) for p in priors]) for n in names}
    return cls(**{n: v if v.size > 1 else float(v[0]) for n, v in vals.items()})


def _h_step(V, W, H, aux, mask, prior, likelihood, diag):
    """Aux update (if any) and one H sweep; H and aux are stacked (G*K, N)."""
    G, F, K = W.shape
    N = H.shape[1]
    Hb = H.reshape(G, K, N)
    if likelihood == "poisson":
        P, Q = stats.majorize_h_stats(V, W, Hb, mask)
    else:
        P, Q = stats.majorize_h_stats_exp(V, W, Hb, mask)
    P, Q = P.reshape(G * K, N), Q.reshape(G * K, N)
    if isinstance(prior, GaPPrior):
        fn = updates.update_h_gap if likelihood == "poisson" else updates.update_h_gap_exp
        return fn(P, Q, prior), aux
    if isinstance(prior, RatePrior):
        return updates.update_h_rate(P, Q, H, prior), aux
    if isinstance(prior, HierRatePrior):
        return updates.update_hier_rate(P, Q, H, aux, prior)
    if isinstance(prior, ShapePrior):
        return updates.update_h_shape(P, Q, H, prior), aux
    if isinstance(prior, BGARPrior):
        fn = updates.update_bgar if likelihood == "poisson" else updates.update_bgar_exp
        return fn(P, Q, H, aux, prior, diag)
    raise ConfigurationError(f"unsupported prior {type(prior).__name__}")


def _w_step(V, W, H, mask, likelihood):
    G, F, K = W.shape
    Hb = H.reshape(G, K, -1)
    if likelihood == "poisson":
        Pp, Qp = stats.majorize_w_stats(V, W, Hb, mask)
    else:
        Pp, Qp = stats.majorize_w_stats_exp(V, W, Hb, mask)
    cols = (lambda A: A.transpose(1, 0, 2).reshape(F, G * K))
    Pc, Qc = cols(Pp), cols(Qp)
    live = Pc.sum(axis=0) > 0
    # a component whose activations are all zero leaves the likelihood untouched
    dead_active = ~live & np.any(H > 0, axis=1)
    if dead_active.any():
        k = int(np.flatnonzero(dead_active)[0])
        raise updates.DegenerateComponentError(f"W column {k % K} (fit {k // K}) has zero majorizer mass")
    Wc = cols(W).copy()
    if live.any():
        if likelihood == "poisson":
            Wc[:, live] = updates.update_w(Pc[:, live], Qc[:, live])
        else:
            Wc[:, live] = updates.update_w_exp(Pc[:, live], Qc[:, live])
    return Wc.reshape(F, G, K).transpose(1, 0, 2)


def _data_constant(V, mask, likelihood, G):
    if likelihood != "poisson":
        return np.zeros(G)
    lg = gammaln(V + 1)
    if mask is not None:
        lg = lg * mask
    return np.broadcast_to(lg.sum(axis=(-2, -1)), (G,)).copy()


def _values(V, W, H, aux, mask, prior, likelihood, const):
    G, F, K = W.shape
    WH = W @ H.reshape(G, K, -1)
    lik = likelihood_terms(V, WH, mask, likelihood, constant=False).sum(axis=(1, 2)) + const
    pri = prior_row_terms(H, prior, aux).reshape(G, K).sum(axis=1)
    out = lik + pri
    return np.where(np.isnan(out), np.inf, out)


_STEP_ERRORS = (stats.DegeneracyError, updates.DegenerateComponentError,
                updates.InvariantViolation, BracketError, FloatingPointError)


def fit_many(V, priors, config: FitConfig, masks=None, seeds=None, inits=None,
             callback=None) -> list[FitResult]:
    """Run ``len(priors)`` fits in lock-step and return one FitResult each.

    ``V`` is (F, N) shared by all fits or (G, F, N); ``masks`` likewise, or
    None. ``seeds`` gives per-fit initialization seeds (default
    ``config.seed``); ``inits`` may instead supply ``(W, H, aux)`` per fit.
    A fit whose objective turns non-finite is frozen and reported through
    ``FitResult.error``. ``callback(it, W, H, aux, values, active)`` sees the
    stacked state after every outer iteration.
    """
    config.validate()
    V, masks = _check_data(V, masks)
    priors = list(priors)
    G, K = len(priors), config.K
    if G == 0:
        return []
    if config.likelihood == "exponential" and not isinstance(priors[0], (BGARPrior, GaPPrior)):
        raise ConfigurationError("the exponential likelihood is only supported with the bgar and gap priors")
    for p in priors:
        p.validate(K)
    prior = stack_priors(priors, K)
    F, N = V.shape[-2:]
    if inits is None:
        seeds = [config.seed] * G if seeds is None else list(seeds)
        inits = [initialize(F, N, K, s, p) for s, p in zip(seeds, priors)]
    W = np.stack([np.array(i[0], dtype=float) for i in inits])
    H = np.concatenate([np.array(i[1], dtype=float) for i in inits])
    aux = None if inits[0][2] is None else np.concatenate([np.array(i[2], dtype=float) for i in inits])
    if V.ndim == 3 and V.shape[0] != G or masks is not None and masks.ndim == 3 and masks.shape[0] != G:
        raise ConfigurationError("batched V or masks must have one slice per prior")

    for g in range(G):
        Vg = V if V.ndim == 2 else V[g]
        mg = None if masks is None else (masks if masks.ndim == 2 else masks[g])
        check_support(Vg, W[g], H[g * K:(g + 1) * K], priors[g],
                      None if aux is None else aux[g * K:(g + 1) * K], mg, config.likelihood)

    const = _data_constant(V, masks, config.likelihood, G)
    vals = _values(V, W, H, aux, masks, prior, config.likelihood, const)
    traces = [[float(v)] for v in vals]
    errors: list[str | None] = [None if math.isfinite(v) else "non-finite initial objective" for v in vals]
    active = np.array([e is None for e in errors])
    converged = np.zeros(G, bool)
    iters = np.zeros(G, int)
    bgar = isinstance(prior, BGARPrior)
    diag = {"h_fallbacks": np.zeros(G * K, int), "b_fallbacks": np.zeros(G * K, int)} if bgar else None

    cur_idx = None
    for it in range(1, config.max_iters + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        if cur_idx is None or not np.array_equal(idx, cur_idx):
            # only fits still running are computed
            cur_idx, rows = idx, _rows(idx, K)
            sprior = prior if len(idx) == G else stack_priors([priors[g] for g in idx], K)
            sV = V if V.ndim == 2 else V[idx]
            smask = masks if masks is None or masks.ndim == 2 else masks[idx]
            sconst = const[idx]
        step_diag = {} if bgar else None
        Ws, Hs = W[idx], H[rows]
        auxs = None if aux is None else aux[rows]
        try:
            Hn, auxn = _h_step(sV, Ws, Hs, auxs, smask, sprior, config.likelihood, step_diag)
            Wn = _w_step(sV, Ws, Hn, smask, config.likelihood)
        except _STEP_ERRORS as exc:
            if G == 1 or callback is not None:
                raise NumericalFailure(str(exc)) from exc
            # isolate the failing fit by rerunning every fit on its own
            return [_fit_one_safe(V, masks, g, priors[g], config, inits[g]) for g in range(G)]
        newvals = _values(sV, Wn, Hn, auxn, smask, sprior, config.likelihood, sconst)
        ok = np.isfinite(newvals)
        for j in np.flatnonzero(~ok):
            errors[idx[j]] = f"objective became non-finite at iteration {it}"
        okrow = np.repeat(ok, K)
        W[idx[ok]] = Wn[ok]
        H[rows[okrow]] = Hn[okrow]
        if aux is not None:
            aux[rows[okrow]] = auxn[okrow]
        if bgar:
            for key in diag:
                diag[key][rows[okrow]] += np.asarray(step_diag.get(key, np.zeros(len(rows), int)))[okrow]
        for j, g in enumerate(idx):
            if not ok[j]:
                active[g] = False
                continue
            prev = traces[g][-1]
            traces[g].append(float(newvals[j]))
            iters[g] = it
            if (prev - newvals[j]) < config.tol * abs(prev):
                converged[g] = True
                active[g] = False
        if callback is not None:
            callback(it, W, H, aux, np.array([t[-1] for t in traces]), active.copy())

    out = []
    for g in range(G):
        sl = slice(g * K, (g + 1) * K)
        d = {}
        if bgar:
            d = {key: int(diag[key][sl].sum()) for key in diag}
        out.append(FitResult(W=W[g], H=H[sl], aux=None if aux is None else aux[sl],
                             objective_trace=traces[g], iterations=int(iters[g]),
                             converged=bool(converged[g]), prior=priors[g],
                             likelihood=config.likelihood, diagnostics=d, error=errors[g]))
    return out


def _rows(idx, K):
    return (idx[:, None] * K + np.arange(K)).ravel()


def _fit_one_safe(V, masks, g, prior, config, init) -> FitResult:
    Vg = V if V.ndim == 2 else V[g]
    mg = None if masks is None else (masks if masks.ndim == 2 else masks[g])
    try:
        return fit_many(Vg, [prior], config, mg, inits=[init])[0]
    except NumericalFailure as exc:
        W, H, aux = init
        return FitResult(W=np.asarray(W), H=np.asarray(H), aux=aux, objective_trace=[],
                         iterations=0, converged=False, prior=prior,
                         likelihood=config.likelihood, error=str(exc))


def fit(V, prior, config: FitConfig, mask=None, init=None, callback=None) -> FitResult:
    """MAP estimate of (W, H[, aux]) by block-coordinate MM.

    Each outer iteration updates the auxiliary variables, sweeps H, then
    updates W, and stops once the relative objective decrease falls below
    ``config.tol``. ``callback(iteration, W, H, aux, value)`` runs after
    every iteration.
    """
    cb = None
    if callback is not None:
        def cb(it, W, H, aux, vals, active):
            callback(it, W[0], H, aux, float(vals[0]))
    res = fit_many(V, [prior], config, masks=mask, inits=None if init is None else [init], callback=cb)[0]
    if res.error is not None:
        raise NumericalFailure(res.error)
    return res
