"""Prior families on the rows of H.

Each hyperparameter is either a scalar (shared by all K rows) or a length-K
sequence. ``vectors(K)`` broadcasts them to float arrays of shape (K,).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np


class HyperparameterError(ValueError):
    pass


def _as_vec(x, K: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.size == 1:
        a = np.full(K, a[0])
    if a.size != K:
        raise HyperparameterError(f"{name} has {a.size} entries, expected 1 or K={K}")
    return a


@dataclass(frozen=True)
class _Prior:
    family: ClassVar[str] = ""
    temporal: ClassVar[bool] = True

    def vectors(self, K: int) -> dict[str, np.ndarray]:
        return {f.name: _as_vec(getattr(self, f.name), K, f.name) for f in fields(self)}

    def validate(self, K: int | None = None) -> None:
        vals = self.vectors(K or self._size())
        for name, v in vals.items():
            if not np.all(np.isfinite(v)):
                raise HyperparameterError(f"{name} must be finite")
        self._check(vals)

    def _size(self) -> int:
        return max(np.asarray(getattr(self, f.name)).size for f in fields(self))

    def _check(self, vals):
        for name, v in vals.items():
            if np.any(v <= 0):
                raise HyperparameterError(f"{self.family}: {name} must be positive")

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for k, v in asdict(self).items():
            out[k] = np.asarray(v, dtype=float).tolist()
        return out


@dataclass(frozen=True)
class GaPPrior(_Prior):
    """Independent Gamma(alpha, beta) entries; beta = 0 gives the flat-prior limit."""
    alpha: float = 1.0
    beta: float = 0.0
    family: ClassVar[str] = "gap"
    temporal: ClassVar[bool] = False

    def _check(self, vals):
        if np.any(vals["alpha"] <= 0) or np.any(vals["beta"] < 0):
            raise HyperparameterError("gap: alpha must be positive and beta non-negative")


@dataclass(frozen=True)
class RatePrior(_Prior):
    alpha: float = 1.5
    beta: float = 1.5
    family: ClassVar[str] = "rate"


@dataclass(frozen=True)
class HierRatePrior(_Prior):
    alpha_z: float = 1.5
    beta_z: float = 1.5
    alpha_h: float = 1.5
    beta_h: float = 1.5
    family: ClassVar[str] = "hier"

    def _check(self, vals):
        super()._check(vals)
        if np.any(vals["alpha_h"] < 1):
            raise HyperparameterError("hier: MAP updates require alpha_h >= 1")


@dataclass(frozen=True)
class ShapePrior(_Prior):
    alpha: float = 1.0
    beta: float = 1.0
    family: ClassVar[str] = "shape"


@dataclass(frozen=True)
class BGARPrior(_Prior):
    alpha: float = 11.0
    beta: float = 1.0
    rho: float = 0.9
    family: ClassVar[str] = "bgar"

    def _check(self, vals):
        if np.any(vals["alpha"] <= 0) or np.any(vals["beta"] <= 0):
            raise HyperparameterError("bgar: alpha and beta must be positive")
        for a, r in zip(vals["alpha"], vals["rho"]):
            ok, reason = validate_bgar_hyperparams(a, r)
            if not ok:
                raise HyperparameterError(f"bgar: {reason}")

    def vectors(self, K: int) -> dict[str, np.ndarray]:
        v = super().vectors(K)
        v["gamma"] = v["alpha"] * (1 - v["rho"])
        v["eta"] = v["alpha"] * v["rho"]
        return v


Prior = GaPPrior | RatePrior | HierRatePrior | ShapePrior | BGARPrior

PRIOR_FAMILIES: dict[str, type] = {
    cls.family: cls for cls in (GaPPrior, RatePrior, HierRatePrior, ShapePrior, BGARPrior)
}


def make_prior(family: str, **hyper) -> Prior:
    try:
        cls = PRIOR_FAMILIES[family]
    except KeyError:
        raise HyperparameterError(
            f"unknown prior family {family!r}; expected one of {sorted(PRIOR_FAMILIES)}") from None
    return cls(**hyper)


def prior_from_dict(d: dict) -> Prior:
    d = dict(d)
    return make_prior(d.pop("family"), **d)


def validate_bgar_hyperparams(alpha: float, rho: float) -> tuple[bool, str]:
    """Admissible region alpha*(1 - rho) > 1 and alpha*rho > 1 (both strict)."""
    if not (alpha > 0 and 0 <= rho < 1):
        return False, f"need alpha > 0 and 0 <= rho < 1 (alpha={alpha}, rho={rho})"
    gamma, eta = alpha * (1 - rho), alpha * rho
    if not gamma > 1:
        return False, (f"alpha*(1-rho) = {gamma:g} must exceed 1; with rho={rho:g} "
                       f"this needs alpha > {1 / (1 - rho):g}")
    if not eta > 1:
        return False, (f"alpha*rho = {eta:g} must exceed 1; with rho={rho:g} "
                       f"this needs alpha > {math.inf if rho == 0 else 1 / rho:g}")
    return True, "admissible"
