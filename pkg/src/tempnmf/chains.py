"""The five non-negative Markov chains: simulation and analytic moments.

Traces are 0-based arrays; ``h[0]`` is the chain's first value h_1.
Every simulator is vectorized over independent replicas and sequential in n.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import asdict, dataclass
from typing import ClassVar, TextIO

import numpy as np

from .distributions import ParameterError


class ChainKind(str, enum.Enum):
    RATE = "rate"
    HIER_RATE = "hier_rate"
    SHAPE = "shape"
    HIER_SHAPE = "hier_shape"
    BGAR = "bgar"


class DomainError(ValueError):
    """An analytic formula is evaluated outside its validity domain."""


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise ParameterError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class RateParams:
    alpha: float
    beta: float
    kind: ClassVar[ChainKind] = ChainKind.RATE

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True)
class HierRateParams:
    alpha_z: float
    beta_z: float
    alpha_h: float
    beta_h: float
    kind: ClassVar[ChainKind] = ChainKind.HIER_RATE

    def __post_init__(self):
        _positive(alpha_z=self.alpha_z, beta_z=self.beta_z,
                  alpha_h=self.alpha_h, beta_h=self.beta_h)


@dataclass(frozen=True)
class ShapeParams:
    alpha: float
    beta: float
    kind: ClassVar[ChainKind] = ChainKind.SHAPE

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True)
class HierShapeParams:
    alpha: float
    beta: float
    kind: ClassVar[ChainKind] = ChainKind.HIER_SHAPE

    def __post_init__(self):
        # alpha = 0 is allowed: the chain is then absorbed at 0 once z_n = 0
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ParameterError(f"alpha must be non-negative, got {self.alpha}")
        _positive(beta=self.beta)


@dataclass(frozen=True)
class BGARParams:
    alpha: float
    beta: float
    rho: float
    kind: ClassVar[ChainKind] = ChainKind.BGAR

    def __post_init__(self):
        _positive(alpha=self.alpha, beta=self.beta)
        if not 0 <= self.rho < 1:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")


ChainParams = RateParams | HierRateParams | ShapeParams | HierShapeParams | BGARParams

PARAM_TYPES: dict[ChainKind, type] = {
    ChainKind.RATE: RateParams,
    ChainKind.HIER_RATE: HierRateParams,
    ChainKind.SHAPE: ShapeParams,
    ChainKind.HIER_SHAPE: HierShapeParams,
    ChainKind.BGAR: BGARParams,
}


def make_params(kind: ChainKind | str, **values) -> ChainParams:
    return PARAM_TYPES[ChainKind(kind)](**values)


@dataclass
class ChainTrace:
    h: np.ndarray
    params: ChainParams
    h1: float
    aux: np.ndarray | None = None  # z_2..z_N or b_2..b_N

    @property
    def n(self) -> int:
        return len(self.h)


def _check_length(N: int, h1: float | None):
    if N < 1:
        raise ParameterError(f"chain length must be >= 1, got {N}")
    if h1 is not None and not (h1 > 0 and math.isfinite(h1)):
        raise ParameterError(f"h1 must be positive, got {h1}")


def simulate_batch(params: ChainParams, N: int, replicas: int, rng: np.random.Generator,
                   h1: float | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Simulate ``replicas`` independent chains of length ``N``.

    Returns ``(h, aux)`` with ``h`` of shape ``(replicas, N)`` and ``aux`` of
    shape ``(replicas, N - 1)`` for the hierarchical chains and BGAR, else None.
    ``h1`` is ignored for BGAR, whose first value is drawn from Gamma(alpha, beta).
    """
    kind = params.kind
    _check_length(N, None if kind is ChainKind.BGAR else h1)
    h = np.empty((replicas, N))
    aux = np.empty((replicas, N - 1)) if kind in (
        ChainKind.HIER_RATE, ChainKind.HIER_SHAPE, ChainKind.BGAR) else None

    if kind is ChainKind.BGAR:
        a, b, rho = params.alpha, params.beta, params.rho
        h[:, 0] = rng.gamma(a, 1.0 / b, size=replicas)
        for n in range(1, N):
            bn = (rng.beta(a * rho, a * (1 - rho), size=replicas) if rho > 0
                  else np.zeros(replicas))
            eps = rng.gamma(a * (1 - rho), 1.0 / b, size=replicas)
            h[:, n] = bn * h[:, n - 1] + eps
            aux[:, n - 1] = bn
        return h, aux

    h[:, 0] = h1
    for n in range(1, N):
        prev = h[:, n - 1]
        if kind is ChainKind.RATE:
            h[:, n] = prev * rng.gamma(params.alpha, 1.0 / params.beta, size=replicas)
        elif kind is ChainKind.HIER_RATE:
            z = rng.gamma(params.alpha_z, 1.0, size=replicas) / (params.beta_z * prev)
            h[:, n] = rng.gamma(params.alpha_h, 1.0, size=replicas) / (params.beta_h * z)
            aux[:, n - 1] = z
        elif kind is ChainKind.SHAPE:
            shape = params.alpha * prev
            h[:, n] = np.where(shape > 0, rng.gamma(np.where(shape > 0, shape, 1.0)), 0.0) / params.beta
        elif kind is ChainKind.HIER_SHAPE:
            z = rng.poisson(params.beta * prev)
            shape = params.alpha + z
            draw = rng.gamma(np.where(shape > 0, shape, 1.0))
            h[:, n] = np.where(shape > 0, draw, 0.0) / params.beta
            aux[:, n - 1] = z
    return h, aux


def _single(params, N, rng, h1) -> ChainTrace:
    h, aux = simulate_batch(params, N, 1, rng, h1)
    return ChainTrace(h=h[0], params=params, h1=float(h[0, 0]),
                      aux=None if aux is None else aux[0])


def simulate_rate_chain(h1, alpha, beta, N, rng) -> ChainTrace:
    return _single(RateParams(alpha, beta), N, rng, h1)


def simulate_hier_rate_chain(h1, alpha_z, beta_z, alpha_h, beta_h, N, rng) -> ChainTrace:
    return _single(HierRateParams(alpha_z, beta_z, alpha_h, beta_h), N, rng, h1)


def simulate_shape_chain(h1, alpha, beta, N, rng) -> ChainTrace:
    return _single(ShapeParams(alpha, beta), N, rng, h1)


def simulate_hier_shape_chain(h1, alpha, beta, N, rng) -> ChainTrace:
    return _single(HierShapeParams(alpha, beta), N, rng, h1)


def simulate_bgar(alpha, beta, rho, N, rng) -> ChainTrace:
    return _single(BGARParams(alpha, beta, rho), N, rng, None)


def analytic_moments(params: ChainParams, n: int, h1: float = 1.0) -> tuple[float, float]:
    """Closed-form marginal mean and variance of h_n (n is 1-based)."""
    if n < 1:
        raise ParameterError(f"index n must be >= 1, got {n}")
    m = n - 1
    kind = params.kind
    if kind is ChainKind.RATE:
        a, b = params.alpha, params.beta
        mean = h1 * (a / b) ** m
        var = h1**2 * (((a * a + a) / b**2) ** m - (a * a / b**2) ** m)
    elif kind is ChainKind.HIER_RATE:
        az, ah = params.alpha_z, params.alpha_h
        bt = params.beta_z / params.beta_h
        if az <= 2:
            raise DomainError(
                f"hierarchical-rate variance is undefined for alpha_z <= 2 (alpha_z={az})")
        mean = h1 * (bt * ah / (az - 1)) ** m
        first = ah**2 / (az - 1) ** 2
        cond = ah * (ah + az - 1) / ((az - 1) ** 2 * (az - 2))
        var = h1**2 * bt ** (2 * m) * ((first + cond) ** m - first**m)
    elif kind is ChainKind.SHAPE:
        r = params.alpha / params.beta
        mean = h1 * r**m
        var = h1 / params.beta * r**m * sum(r**i for i in range(m))
    elif kind is ChainKind.HIER_SHAPE:
        a, b = params.alpha, params.beta
        mean = h1 + m * a / b
        var = m * 2 / b * h1 + m**2 * a / b**2
    else:
        mean, var = params.alpha / params.beta, params.alpha / params.beta**2
    return float(mean), float(var)


def analytic_mean(params: ChainParams, n: int, h1: float = 1.0) -> float:
    """Marginal mean alone; for the hierarchical-rate chain it only needs alpha_z > 1."""
    if params.kind is ChainKind.HIER_RATE:
        az = params.alpha_z
        if az <= 1:
            raise DomainError(f"hierarchical-rate mean is undefined for alpha_z <= 1 (alpha_z={az})")
        return h1 * (params.beta_z / params.beta_h * params.alpha_h / (az - 1)) ** (n - 1)
    return analytic_moments(params, n, h1)[0]


class RateRegime(str, enum.Enum):
    BOTH_TO_ZERO = "both->0"
    VAR_TO_ONE = "var->1/mean->0"
    VAR_DIVERGES_MEAN_TO_ZERO = "var->inf/mean->0"
    MEAN_ONE_VAR_DIVERGES = "mean=1/var->inf"
    BOTH_DIVERGE = "both->inf"


def classify_rate_regime(alpha: float, beta: float) -> RateRegime:
    """Long-run behaviour of the rate chain started at h1 = 1."""
    _positive(alpha=alpha, beta=beta)
    crit = math.sqrt(alpha * (alpha + 1))
    if math.isclose(beta, crit, rel_tol=1e-12):
        return RateRegime.VAR_TO_ONE
    if math.isclose(beta, alpha, rel_tol=1e-12):
        return RateRegime.MEAN_ONE_VAR_DIVERGES
    if beta > crit:
        return RateRegime.BOTH_TO_ZERO
    if beta > alpha:
        return RateRegime.VAR_DIVERGES_MEAN_TO_ZERO
    return RateRegime.BOTH_DIVERGE


def bgar_autocorrelation(rho: float, r: int) -> float:
    if not 0 <= rho < 1:
        raise ParameterError(f"rho must lie in [0, 1), got {rho}")
    if r < 1:
        raise ParameterError(f"lag must be >= 1, got {r}")
    return rho**r


def write_traces_csv(fh: TextIO, h: np.ndarray, aux: np.ndarray | None = None) -> int:
    """Write ``replica,n,h[,aux]`` rows (n is 1-based); returns the row count.

    The aux column is empty at n = 1, where no auxiliary variable exists.
    """
    h = np.atleast_2d(h)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["replica", "n", "h"] + (["aux"] if aux is not None else []))
    rows = 0
    for r in range(h.shape[0]):
        for n in range(h.shape[1]):
            row = [r, n + 1, repr(float(h[r, n]))]
            if aux is not None:
                row.append("" if n == 0 else repr(float(np.atleast_2d(aux)[r, n - 1])))
            writer.writerow(row)
            rows += 1
    return rows


def params_dict(params: ChainParams) -> dict:
    return {"kind": params.kind.value, **asdict(params)}
