"""
Gaussian quasi-likelihood of tvARCH(p) data and of its stationary approximation.

For a parameter vector ``alpha = (alpha_0, ..., alpha_p)`` the conditional
variance proxy at time k is ``w_k = alpha_0 + sum_j alpha_j X_{k-j}^2`` and
the pointwise contrast is ``l_k = (log w_k + X_k^2 / w_k) / 2``.  Weighted
sums are accumulated with ``math.fsum`` (exactly rounded), so results do not
depend on summation order.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from tvarch.kernel import KernelSpec, Weights, weights
from tvarch.model import TvArchSpec, eval_coefficients
from tvarch.simulate import simulate_stationary, simulate_tvarch

__all__ = [
    "LocalData",
    "bias_statistic",
    "cond_variance",
    "local_data",
    "loglik_point",
    "stationary_likelihood",
    "weighted_likelihood",
]


def cond_variance(alpha, lags) -> float:
    """``alpha_0 + sum_j alpha_j lags[j-1]``."""
    a = np.asarray(alpha, dtype=float)
    lags = np.asarray(lags, dtype=float).reshape(-1)
    if lags.size != a.size - 1:
        raise ValueError(f"expected {a.size - 1} lags, got {lags.size}")
    return math.fsum(np.concatenate(([a[0]], a[1:] * lags)))


def loglik_point(alpha, x2_k: float, lags) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of the pointwise contrast at one time point."""
    a = np.asarray(alpha, dtype=float)
    g = np.concatenate(([1.0], np.asarray(lags, dtype=float).reshape(-1)))
    w = cond_variance(a, g[1:])
    value = 0.5 * (math.log(w) + x2_k / w)
    grad = 0.5 * (1.0 / w - x2_k / (w * w)) * g
    hess = 0.5 * (-1.0 / (w * w) + 2.0 * x2_k / (w * w * w)) * np.outer(g, g)
    return value, grad, hess


@dataclass(frozen=True)
class LocalData:
    """
    Observations entering the local contrast at anchor ``t0``.

    ``y[i]`` is X_k^2 and ``design[i]`` is ``(1, X_{k-1}^2, ..., X_{k-p}^2)``
    for ``k = weights.k[i]``.
    """

    y: np.ndarray
    design: np.ndarray
    weights: Weights
    t0: int
    N: int
    kernel: KernelSpec

    @property
    def p(self) -> int:
        return self.design.shape[1] - 1

    @property
    def w(self) -> np.ndarray:
        return self.weights.w

    def weighted_mean_x2(self) -> float:
        return math.fsum(self.w * self.y) / math.fsum(self.w)


def local_data(x2, kernel: KernelSpec, t0: int, p: int, policy: str = "strict", N: int | None = None) -> LocalData:
    """
    Cut the window around ``t0`` out of a full series ``x2`` (``x2[t-1]`` is X_t^2).

    ``N`` defaults to ``len(x2)``; a shorter array is allowed as long as it
    covers the kernel support.
    """
    x2 = np.asarray(x2, dtype=float)
    if np.any(x2 < 0):
        raise ValueError("squared observations must be non-negative")
    N = len(x2) if N is None else int(N)
    wts = weights(kernel, t0, N, p, policy)
    if wts.k[-1] > len(x2):
        raise ValueError("series does not cover the kernel support")
    idx = wts.k - 1
    cols = [np.ones(idx.size)] + [x2[idx - j] for j in range(1, p + 1)]
    return LocalData(x2[idx], np.column_stack(cols), wts, int(t0), N, kernel)


def _contrast(y, design, wt, alpha, order: int = 2):
    a = np.asarray(alpha, dtype=float)
    w = design @ a
    value = math.fsum(wt * 0.5 * (np.log(w) + y / w))
    if order == 0:
        return value, None, None
    c1 = wt * 0.5 * (1.0 / w - y / (w * w))
    grad = np.array([math.fsum(c1 * design[:, i]) for i in range(design.shape[1])])
    if order == 1:
        return value, grad, None
    c2 = wt * 0.5 * (2.0 * y / (w * w * w) - 1.0 / (w * w))
    m = design.shape[1]
    hess = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            hess[i, j] = hess[j, i] = math.fsum(c2 * design[:, i] * design[:, j])
    return value, grad, hess


def weighted_likelihood(data: LocalData, alpha, order: int = 2) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """
    Kernel-weighted contrast ``sum_k (1/bN) W((t0-k)/bN) l_k(alpha)`` with derivatives.

    ``order`` limits the work: 0 returns only the value, 1 adds the gradient.
    """
    return _contrast(data.y, data.design, data.w, alpha, order)


def stationary_likelihood(
    spec: TvArchSpec,
    u0: float,
    alpha,
    N: int,
    seed: int,
    kernel: KernelSpec,
    t0: int,
    order: int = 2,
):
    """The same weighted contrast evaluated on the stationary approximation at ``u0``."""
    path = simulate_stationary(spec, u0, N, seed)
    data = local_data(path.x2, kernel, t0, spec.p)
    return weighted_likelihood(data, alpha, order)


def bias_statistic(
    spec: TvArchSpec,
    u0: float,
    t0: int,
    N: int,
    seed: int,
    kernel: KernelSpec,
    alpha=None,
) -> np.ndarray:
    """
    Pathwise nonstationarity bias of the score.

    Gradient of the contrast on tvARCH data minus the gradient on the
    stationary approximation at ``u0``, both driven by the same innovations.
    ``alpha`` defaults to the true coefficients at ``u0``.
    """
    if alpha is None:
        alpha = eval_coefficients(spec, u0)
    tv = simulate_tvarch(spec, N, seed, "stationary-start")
    st = simulate_stationary(spec, u0, N, seed)
    _, g_tv, _ = weighted_likelihood(local_data(tv.x2, kernel, t0, spec.p), alpha, 1)
    _, g_st, _ = weighted_likelihood(local_data(st.x2, kernel, t0, spec.p), alpha, 1)
    return g_tv - g_st
