"""One-dimensional mark, offspring, and waiting-time laws.

All sampling is by inverse CDF: each scalar draw consumes exactly one
uniform, so stream consumption is deterministic and replications are
reproducible draw-for-draw.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigurationError

__all__ = [
    "TailLaw",
    "JointMarkSpec",
    "WaitLaw",
    "poisson_inverse",
    "empirical_tail_ratio",
]

PARETO = "pareto"
EXPONENTIAL = "exponential"
DETERMINISTIC = "deterministic"

INDEPENDENT_LIGHT_K = "independent_light_k"
COMONOTONE = "comonotone"
HEAVY_K_LIGHT_X = "heavy_k_light_x"


@dataclass(frozen=True)
class TailLaw:
    """Parametric law with closed-form tail and quantile.

    family:
        ``pareto``        P(X > x) = (x/scale)^(-alpha) for x >= scale
        ``exponential``   P(X > x) = exp(-x/scale), scale = mean
        ``deterministic`` point mass at ``scale``
    """

    family: str
    scale: float
    alpha: float | None = None

    def __post_init__(self):
        if self.family not in (PARETO, EXPONENTIAL, DETERMINISTIC):
            raise ConfigurationError(f"unknown law family {self.family!r}")
        if self.scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")
        if self.family == PARETO:
            if self.alpha is None or self.alpha <= 0:
                raise ConfigurationError(f"pareto requires alpha > 0, got {self.alpha}")

    @property
    def heavy(self) -> bool:
        return self.family == PARETO

    def tail(self, x):
        """P(X > x); total on the reals, 1 left of the support."""
        x = np.asarray(x, dtype=float)
        if self.family == PARETO:
            out = np.where(x < self.scale, 1.0, np.power(np.maximum(x, self.scale) / self.scale, -self.alpha))
        elif self.family == EXPONENTIAL:
            out = np.where(x < 0.0, 1.0, np.exp(-np.maximum(x, 0.0) / self.scale))
        else:
            out = np.where(x < self.scale, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def quantile(self, u):
        """inf{x : CDF(x) >= u} for u in [0, 1)."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0.0) or np.any(u >= 1.0):
            raise ValueError("quantile requires 0 <= u < 1")
        if self.family == PARETO:
            out = self.scale * np.power(1.0 - u, -1.0 / self.alpha)
        elif self.family == EXPONENTIAL:
            out = -self.scale * np.log1p(-u)
        else:
            out = np.full_like(u, self.scale)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        """Draw by quantile transform: one uniform per value."""
        u = rng.random(size)
        return self.quantile(u)

    def mean(self) -> float:
        if self.family == PARETO:
            if self.alpha <= 1:
                return np.inf
            return self.alpha * self.scale / (self.alpha - 1.0)
        return self.scale  # exponential mean and point mass both equal scale


def poisson_inverse(u: float, mu: float) -> int:
    """Smallest k with Poisson(mu) CDF >= u (single-uniform inversion)."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return 0
    if mu > 50.0:
        # scan would be slow; scipy's ppf is the same inversion
        return int(stats.poisson.ppf(u, mu))
    k = 0
    pmf = np.exp(-mu)
    cdf = pmf
    while cdf < u:
        k += 1
        pmf *= mu / k
        cdf += pmf
        if k > 10_000_000:  # unreachable for mu <= 50, guards FP stall
            break
    return k


def ceil_count(eta: float, x) -> np.ndarray:
    """ceil(eta * x) as the comonotone offspring count."""
    return np.ceil(eta * np.asarray(x, dtype=float)).astype(np.int64)


@dataclass(frozen=True)
class JointMarkSpec:
    """Joint law of (mark X, offspring budget K, fertility kappa = phi * X).

    dependence:
        ``independent_light_k``  K ~ Poisson(k_param), independent of X
        ``comonotone``           K = ceil(k_param * X)
        ``heavy_k_light_x``      K = floor of a Pareto variable with tail
                                  constant k_param and index k_alpha,
                                  independent of X
    """

    x_law: TailLaw
    dependence: str = INDEPENDENT_LIGHT_K
    k_param: float = 0.0
    phi: float = 0.0
    k_alpha: float | None = None

    def __post_init__(self):
        if self.dependence not in (INDEPENDENT_LIGHT_K, COMONOTONE, HEAVY_K_LIGHT_X):
            raise ConfigurationError(f"unknown dependence {self.dependence!r}")
        if self.k_param < 0:
            raise ConfigurationError(f"k_param must be nonnegative, got {self.k_param}")
        if self.phi < 0:
            raise ConfigurationError(f"phi must be nonnegative, got {self.phi}")
        if self.dependence == HEAVY_K_LIGHT_X:
            if self.k_alpha is None or self.k_alpha <= 1:
                raise ConfigurationError("heavy_k_light_x requires k_alpha > 1")
        if self.phi > 0:
            ex = self.x_law.mean()
            if not self.phi * ex < 1.0:
                raise ConfigurationError(
                    f"supercritical fertility: phi*E[X] = {self.phi * ex:.6g} >= 1"
                )

    @property
    def mean_fertility(self) -> float:
        """E[kappa] = phi * E[X]; branching is subcritical when < 1."""
        return self.phi * self.x_law.mean()

    def mean_offspring(self) -> float:
        """E[K] for the configured dependence."""
        if self.dependence == INDEPENDENT_LIGHT_K:
            return self.k_param
        if self.dependence == COMONOTONE:
            return mean_ceil(self.k_param, self.x_law)
        # heavy K: E[K] = sum_{k>=1} P(K >= k), K = floor(Y), P(Y > y) = min(1, c y^-a)
        c, a = self.k_param, self.k_alpha
        if c == 0.0:
            return 0.0
        k0 = max(1, int(np.ceil(c ** (1.0 / a))))  # below k0 the tail saturates at 1
        return (k0 - 1) + c * float(special.zeta(a, k0))

    def offspring_count(self, x, rng: np.random.Generator) -> int:
        """Draw K conditionally on the mark value ``x``."""
        if self.dependence == COMONOTONE:
            return int(ceil_count(self.k_param, x))
        if self.dependence == INDEPENDENT_LIGHT_K:
            return poisson_inverse(rng.random(), self.k_param)
        return int(self._heavy_counts(rng.random()))

    def offspring_counts(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Vectorized K draws given marks ``x`` (batch lane)."""
        x = np.asarray(x, dtype=float)
        if self.dependence == COMONOTONE:
            return ceil_count(self.k_param, x)
        if self.dependence == INDEPENDENT_LIGHT_K:
            return rng.poisson(self.k_param, size=x.shape).astype(np.int64)
        return self._heavy_counts(rng.random(x.shape))

    def _heavy_counts(self, u) -> np.ndarray:
        # quantile of floor(Y): P(K > k) = min(1, c (k+1)^-a) for integer k
        c, a = self.k_param, self.k_alpha
        if c == 0.0:
            return np.zeros(np.shape(u), dtype=np.int64)
        y = np.power(c / (1.0 - np.asarray(u, dtype=float)), 1.0 / a)
        return np.floor(y).astype(np.int64)

    def sample(self, rng: np.random.Generator) -> tuple[float, int, float]:
        """One joint draw (X, K, kappa)."""
        x = float(self.x_law.sample(rng))
        k = self.offspring_count(x, rng)
        return x, k, self.phi * x


def mean_ceil(eta: float, law: TailLaw) -> float:
    """E[ceil(eta * X)] in closed form per family."""
    if eta == 0.0:
        return 0.0
    if law.family == DETERMINISTIC:
        return float(np.ceil(eta * law.scale))
    if law.family == EXPONENTIAL:
        # sum_{k>=0} P(X > k/eta) = sum exp(-k/(eta*scale)) = 1/(1-exp(-1/(eta*scale)))
        return 1.0 / -np.expm1(-1.0 / (eta * law.scale))
    # Pareto: E[ceil(eta X)] = sum_{k>=0} P(X > k/eta); tail saturates at 1 for k/eta < scale
    a = law.alpha
    if a <= 1:
        return np.inf
    k0 = max(1, int(np.ceil(eta * law.scale)))  # first k with k/eta >= scale
    head = k0  # terms k = 0..k0-1 have tail equal to 1
    tail = (eta * law.scale) ** a * float(special.zeta(a, k0))
    return head + tail


@dataclass(frozen=True)
class WaitLaw:
    """Offspring waiting-time law; optionally conditioned on the parent mark.

    With ``conditional_on_mark`` set the law must be exponential and the
    conditional mean is scale/(1+mark): a conditionally-i.i.d. family.
    """

    law: TailLaw
    conditional_on_mark: bool = False

    def __post_init__(self):
        if self.conditional_on_mark and self.law.family != EXPONENTIAL:
            raise ConfigurationError("conditional_on_mark requires an exponential wait law")

    @property
    def integrable(self) -> bool:
        """Whether E[W] < infinity (required for admissible experiment laws)."""
        if self.law.family == PARETO:
            return self.law.alpha > 1
        return True

    def mean(self, mark: float | None = None) -> float:
        if self.conditional_on_mark:
            return self.law.scale / (1.0 + mark)
        return self.law.mean()

    def sample(self, rng: np.random.Generator, mark=None, size=None):
        if not self.conditional_on_mark:
            return self.law.sample(rng, size)
        u = rng.random(size)
        scale = self.law.scale / (1.0 + np.asarray(mark, dtype=float))
        out = -scale * np.log1p(-u)
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, s, mark=None):
        """P(W <= s | mark)."""
        s = np.asarray(s, dtype=float)
        if self.conditional_on_mark:
            scale = self.law.scale / (1.0 + np.asarray(mark, dtype=float))
            out = np.where(s < 0, 0.0, -np.expm1(-np.maximum(s, 0.0) / scale))
            return float(out) if out.ndim == 0 else out
        out = 1.0 - self.law.tail(s)
        return float(out) if np.ndim(out) == 0 else out

    def tail(self, s):
        t = 1.0 - self.cdf(s) if self.conditional_on_mark else self.law.tail(s)
        return t


def empirical_tail_ratio(samples: np.ndarray, ref: TailLaw, x_grid) -> np.ndarray:
    """Empirical tail of ``samples`` over the reference tail, per grid point."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    srt = np.sort(samples)
    n = samples.size
    exceed = n - np.searchsorted(srt, x_grid, side="right")
    emp = exceed / n
    return emp / ref.tail(x_grid)
