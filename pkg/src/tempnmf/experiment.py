"""Prediction experiment: splits, rank selection, grid search and reporting.

Columns are 0-based throughout; column 0 is never hidden and column N-1 is
always a test column.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from .dataio import DataError, load_count_matrix  # noqa: F401  (re-exported)
from .mapest.fit import ConfigurationError, FitConfig, FitResult, fit_many
from .mapest.priors import BGARPrior, GaPPrior, HierRatePrior, RatePrior, ShapePrior

METHODS = ("gap", "rate", "hier", "shape", "bgar")
TEMPORAL = ("rate", "hier", "shape", "bgar")


class ExperimentError(RuntimeError):
    pass


class ProtocolError(ValueError):
    pass


class InfiniteDivergenceError(ValueError):
    pass


def default_grids() -> dict[str, list]:
    """Hyperparameter grids, constant over k."""
    return {
        "gap": [GaPPrior(a, b) for a in (0.1, 1.0, 10.0) for b in (0.1, 1.0, 10.0)],
        "rate": [RatePrior(v, v) for v in (1.5, 10.0, 100.0)],
        "hier": [HierRatePrior(alpha_z=az, beta_z=az, alpha_h=ah, beta_h=ah)
                 for ah in (1.5, 10.0, 100.0) for az in (1.5, 10.0, 100.0)],
        "shape": [ShapePrior(v, v) for v in (0.1, 1.0, 10.0)],
        "bgar": [BGARPrior(a, b, 0.9) for a in (11.0, 110.0, 1100.0) for b in (0.1, 1.0, 10.0)],
    }


# ---------------------------------------------------------------- metrics

def kle(V, Vhat, where=None) -> float:
    """Generalized KL error sum v log(v / vhat) - v + vhat over ``where``.

    ``where`` is a boolean array broadcastable to V (None = all entries).
    """
    V = np.asarray(V, dtype=float)
    Vhat = np.asarray(Vhat, dtype=float)
    sel = np.ones(V.shape, bool) if where is None else np.broadcast_to(where, V.shape)
    v, vh = V[sel], Vhat[sel]
    if np.any((v > 0) & ~(vh > 0)):
        raise InfiniteDivergenceError("positive count predicted with zero intensity")
    return float(np.sum(xlogy(v, v) - xlogy(v, vh) - v + vh))


def column_mask(F: int, N: int, hidden) -> np.ndarray:
    """Observation mask with the listed columns fully hidden."""
    m = np.ones((F, N))
    m[:, list(hidden)] = 0.0
    return m


# ----------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    train_cols: tuple
    val_cols: tuple
    test_cols: tuple
    seed: int

    def check(self, N: int):
        hidden = sorted(self.val_cols + self.test_cols)
        if len(set(hidden)) != len(hidden) or set(hidden) & set(self.train_cols):
            raise ProtocolError("column sets overlap")
        if sorted(hidden + list(self.train_cols)) != list(range(N)):
            raise ProtocolError("column sets do not cover 0..N-1")
        if 0 in hidden:
            raise ProtocolError("the first column cannot be hidden")
        if N - 1 not in self.test_cols:
            raise ProtocolError("the last column must be a test column")
        if any(b - a == 1 for a, b in zip(hidden, hidden[1:])):
            raise ProtocolError("hidden columns must be pairwise non-adjacent")


def n_hidden(N: int) -> int:
    return math.ceil(0.2 * N)


def make_splits(N: int, n_splits: int, seed: int) -> list[SplitSpec]:
    """Random splits hiding ceil(0.2 N) pairwise non-adjacent columns.

    Column N-1 is always hidden and goes to the test set; the other hidden
    columns are drawn uniformly among non-adjacent subsets of 1..N-3 (a
    stars-and-bars bijection, so no rejection loop), and half of all hidden
    columns (rounded down) form the validation set.
    """
    m = n_hidden(N) - 1          # hidden columns besides the last one
    slots = N - 3                # candidates 1..N-3 (N-2 touches the last column)
    if N < 3 or m < 0 or slots - m + 1 < m:
        raise ConfigurationError(
            f"N={N} is too small to hide {n_hidden(N)} pairwise non-adjacent columns")
    out = []
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_splits)):
        rng = np.random.default_rng(ss)
        picks = np.sort(rng.choice(slots - m + 1, size=m, replace=False))
        others = picks + np.arange(m) + 1
        hidden = np.append(others, N - 1)
        n_val = len(hidden) // 2
        val = np.sort(rng.choice(others, size=n_val, replace=False))
        test = np.setdiff1d(hidden, val)
        train = np.setdiff1d(np.arange(N), hidden)
        spec = SplitSpec(tuple(int(x) for x in train), tuple(int(x) for x in val),
                         tuple(int(x) for x in test), seed=int(ss.generate_state(1)[0]))
        spec.check(N)
        out.append(spec)
    return out


# --------------------------------------------------------------- baseline

def gap_baseline_fill(H, missing) -> np.ndarray:
    """Interpolate hidden columns of a GaP activation matrix from neighbours."""
    H = np.array(H, dtype=float, copy=True)
    N = H.shape[1]
    miss = sorted(set(int(n) for n in missing))
    if any(b - a == 1 for a, b in zip(miss, miss[1:])):
        raise ProtocolError(f"adjacent hidden columns {miss} cannot be interpolated")
    for n in miss:
        if n == 0:
            raise ProtocolError("the first column has no left neighbour")
        if n == N - 1:
            H[:, n] = H[:, n - 1]
        else:
            H[:, n] = 0.5 * (H[:, n - 1] + H[:, n + 1])
    return H


def reconstruct(res: FitResult, hidden) -> np.ndarray:
    H = gap_baseline_fill(res.H, hidden) if isinstance(res.prior, GaPPrior) else res.H
    return res.W @ H


# ---------------------------------------------------------- rank selection

def _entry_mask(rng, shape, keep=0.8):
    # every row and column keeps at least one observed entry
    for _ in range(1000):
        m = (rng.random(shape) < keep).astype(float)
        if m.any(axis=0).all() and m.any(axis=1).all():
            return m
    raise ConfigurationError("could not draw a training mask covering every row and column")


def select_rank(V, K_grid, n_trials: int = 10, seed: int = 0, tol: float = 1e-5,
                max_iters: int = 1000, return_scores: bool = False):
    """Pick K by held-out KLE of plain KL-NMF under random 80/20 entry masks."""
    V = np.asarray(V, dtype=float)
    Ks = sorted({int(k) for k in K_grid})
    if not Ks or Ks[0] < 1:
        raise ConfigurationError("K grid must contain positive integers")
    if len(Ks) == 1:
        return (Ks[0], {Ks[0]: float("nan")}) if return_scores else Ks[0]
    ss = np.random.SeedSequence(seed)
    mask_ss, init_ss = ss.spawn(2)
    masks = np.stack([_entry_mask(np.random.default_rng(s), V.shape) for s in mask_ss.spawn(n_trials)])
    seeds = [int(s.generate_state(1)[0]) for s in init_ss.spawn(n_trials)]
    scores = {}
    flat = GaPPrior(1.0, 0.0)
    for K in Ks:
        res = fit_many(V, [flat] * n_trials, FitConfig(K=K, tol=tol, max_iters=max_iters),
                       masks=masks, seeds=seeds)
        errs = []
        for r, m in zip(res, masks):
            if r.error is None:
                try:
                    errs.append(kle(V, r.W @ r.H, m == 0))
                except InfiniteDivergenceError:
                    pass
        scores[K] = float(np.mean(errs)) if errs else math.inf
    best = min(Ks, key=lambda k: (scores[k], k))
    return (best, scores) if return_scores else best


# ------------------------------------------------------------ grid search

def grid_search(V, split: SplitSpec, init_seed: int, family: str, grid=None, K: int = 3,
                tol: float = 1e-5, max_iters: int = 1000):
    """Fit every grid point on the training columns; keep the best validation KLE."""
    grid = default_grids()[family] if grid is None else list(grid)
    V = np.asarray(V, dtype=float)
    F, N = V.shape
    hidden = split.val_cols + split.test_cols
    mask = column_mask(F, N, hidden)
    res = fit_many(V, grid, FitConfig(K=K, tol=tol, max_iters=max_iters), masks=mask,
                   seeds=[init_seed] * len(grid))
    best, best_kle = None, math.inf
    for r in res:
        if r.error is not None:
            continue
        try:
            val = kle(V, reconstruct(r, hidden), _cols(F, N, split.val_cols))
        except InfiniteDivergenceError:
            continue
        if val < best_kle:
            best, best_kle = r, val
    if best is None:
        raise ExperimentError(f"every {family} fit failed for split seed {split.seed}")
    return best.prior, best


def _cols(F, N, cols):
    sel = np.zeros((F, N), bool)
    sel[:, list(cols)] = True
    return sel


# ------------------------------------------------------------- experiment

@dataclass
class ExperimentConfig:
    K: int
    n_splits: int = 5
    n_inits: int = 5
    methods: tuple = METHODS
    seed: int = 0
    tol: float = 1e-5
    max_iters: int = 1000
    threads: int = 1
    grids: dict | None = None
    max_batch_entries: int = 20_000_000

    def validate(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown method(s) {bad}; valid names are {list(METHODS)}")
        if self.n_splits < 1 or self.n_inits < 1:
            raise ConfigurationError("n_splits and n_inits must be positive")
        if self.threads < 1:
            raise ConfigurationError("threads must be positive")


@dataclass
class ExperimentReport:
    methods: list
    runs: list                      # one dict per (method, split, init)
    summary: dict                   # method -> metric -> {mean, std, n}
    runtimes: dict
    config: dict = field(default_factory=dict)

    def rows(self):
        for m in self.methods:
            for metric in ("KLE-S", "KLE-F"):
                s = self.summary[m][metric]
                yield m, metric, s["mean"], s["std"]

    def write(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "metric", "mean", "std"])
            for m, metric, mean, std in self.rows():
                w.writerow([m, metric, repr(mean), repr(std)])
        body = {"config": self.config, "summary": self.summary, "runtimes": self.runtimes,
                "runs": [{k: v for k, v in r.items() if k != "fit"} for r in self.runs]}
        (outdir / "report.json").write_text(json.dumps(_jsonable(body), indent=1))
        for r in self.runs:
            if r.get("fit") is not None:
                d = outdir / "runs" / f"{r['method']}_split{r['split']}_init{r['init']}"
                d.mkdir(parents=True, exist_ok=True)
                (d / "fit.json").write_text(json.dumps(r["fit"]))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def _experiment_seeds(seed, n_splits, n_inits):
    split_ss, init_ss, ctrl_ss = np.random.SeedSequence(seed).spawn(3)
    split_seed = int(split_ss.generate_state(1)[0])
    inits = [int(s.generate_state(1)[0]) for s in init_ss.spawn(n_inits)]
    return split_seed, inits, ctrl_ss


def _run_method(V, method, grid, splits, init_seeds, cfg: ExperimentConfig, ctrl_seeds):
    """All (split, init, grid point) fits of one method, batched, then selection."""
    F, N = V.shape
    tasks = [(s, i, p) for s in range(len(splits)) for i in range(len(init_seeds)) for p in grid]
    hidden = [sp.val_cols + sp.test_cols for sp in splits]
    masks = np.stack([column_mask(F, N, h) for h in hidden])
    per_batch = max(1, cfg.max_batch_entries // (F * N * max(cfg.K, 1)))
    results: list[FitResult] = []
    t0 = time.perf_counter()
    for b in range(0, len(tasks), per_batch):
        chunk = tasks[b:b + per_batch]
        results += fit_many(V, [t[2] for t in chunk], FitConfig(K=cfg.K, tol=cfg.tol, max_iters=cfg.max_iters),
                            masks=masks[[t[0] for t in chunk]], seeds=[init_seeds[t[1]] for t in chunk])
    elapsed = time.perf_counter() - t0

    runs = []
    per_pair = len(grid)
    for j in range(0, len(tasks), per_pair):
        s, i, _ = tasks[j]
        sp = splits[s]
        best, best_val, n_failed = None, math.inf, 0
        for r in results[j:j + per_pair]:
            if r.error is not None:
                n_failed += 1
                continue
            try:
                val = kle(V, reconstruct(r, hidden[s]), _cols(F, N, sp.val_cols))
            except InfiniteDivergenceError:
                n_failed += 1
                continue
            if val < best_val:
                best, best_val = r, val
        run = {"method": method, "split": s, "init": i, "failed_grid_points": n_failed}
        if best is None:
            run.update(failed=True, error="every grid point failed")
            runs.append(run)
            continue
        Vhat = reconstruct(best, hidden[s])
        smooth = [c for c in sp.test_cols if c != N - 1]
        rng = np.random.default_rng(ctrl_seeds[s * len(init_seeds) + i])
        shuffled = Vhat[:, rng.permutation(N)]
        try:
            run.update(
                failed=False,
                hyperparameters=best.prior.to_dict(),
                val_kle=best_val,
                kle_s=kle(V, Vhat, _cols(F, N, smooth)),
                kle_f=kle(V, Vhat, _cols(F, N, [N - 1])),
                control_kle_s=_safe_kle(V, shuffled, _cols(F, N, smooth)),
                iterations=best.iterations,
                converged=best.converged,
                fit=best.to_dict(),
            )
        except InfiniteDivergenceError as exc:
            run.update(failed=True, error=str(exc))
        runs.append(run)
    return runs, elapsed


def _safe_kle(V, Vhat, where):
    try:
        return kle(V, Vhat, where)
    except InfiniteDivergenceError:
        return math.inf


def _summarize(runs, methods):
    summary = {}
    for m in methods:
        ok = [r for r in runs if r["method"] == m and not r["failed"]]
        entry = {}
        for metric, key in (("KLE-S", "kle_s"), ("KLE-F", "kle_f")):
            vals = np.array([r[key] for r in ok], dtype=float)
            entry[metric] = {
                "mean": float(vals.mean()) if len(vals) else math.nan,
                "std": float(vals.std(ddof=1)) if len(vals) > 1 else math.nan,
                "n": int(len(vals)),
            }
        entry["failed_runs"] = sum(1 for r in runs if r["method"] == m and r["failed"])
        entry["beats_shuffled_control"] = sum(1 for r in ok if r["kle_s"] < r["control_kle_s"])
        summary[m] = entry
    return summary


def run_experiment(V, config: ExperimentConfig) -> ExperimentReport:
    """Full protocol: splits x initializations x methods, selection on validation KLE."""
    config.validate()
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or np.any(V < 0) or not np.all(np.isfinite(V)):
        raise DataError("data must be a finite non-negative matrix")
    F, N = V.shape
    grids = default_grids()
    if config.grids:
        grids.update(config.grids)
    split_seed, init_seeds, ctrl_ss = _experiment_seeds(config.seed, config.n_splits, config.n_inits)
    splits = make_splits(N, config.n_splits, split_seed)
    ctrl_seeds = [int(s.generate_state(1)[0]) for s in ctrl_ss.spawn(config.n_splits * config.n_inits)]
    methods = list(dict.fromkeys(config.methods))

    jobs = [(V, m, grids[m], splits, init_seeds, config, ctrl_seeds) for m in methods]
    if config.threads > 1 and len(methods) > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, len(methods))) as ex:
            outs = list(ex.map(_run_method, *zip(*jobs)))
    else:
        outs = [_run_method(*j) for j in jobs]

    runs, runtimes = [], {}
    for m, (r, t) in zip(methods, outs):
        runs += r
        runtimes[m] = t
    cfg = {"K": config.K, "n_splits": config.n_splits, "n_inits": config.n_inits, "seed": config.seed,
           "tol": config.tol, "max_iters": config.max_iters, "methods": methods,
           "splits": [{"train": s.train_cols, "val": s.val_cols, "test": s.test_cols} for s in splits],
           "init_seeds": init_seeds,
           "grids": {m: [p.to_dict() for p in grids[m]] for m in methods}}
    return ExperimentReport(methods=methods, runs=runs, summary=_summarize(runs, methods),
                            runtimes=runtimes, config=cfg)
