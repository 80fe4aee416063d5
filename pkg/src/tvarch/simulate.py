"""
Path generation for tvARCH(p) processes and their stationary approximations.

All generators draw innovations from the named streams of :mod:`tvarch.rng`,
so calls sharing a seed share Z_1..Z_N (and the pre-sample Z_0, Z_{-1}, ...).
Batch variants take a list of seeds and return ``(reps, n)`` arrays; each row
is bit-identical to the single-path call with that seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import math
from typing import Sequence

import numpy as np

from tvarch import rng
from tvarch.model import TvArchSpec, coefficient_matrix

__all__ = [
    "DEFAULT_R",
    "DerivativePath",
    "PathBatch",
    "SamplePath",
    "START_MODES",
    "TaylorSummary",
    "burn_in_length",
    "companion_U",
    "derivative_path",
    "draw_innovations",
    "path_to_csv",
    "simulate_stationary",
    "simulate_stationary_batch",
    "simulate_tvarch",
    "simulate_tvarch_batch",
    "stationary_derivatives_batch",
    "taylor_residual",
    "volterra_stationary",
    "volterra_truncated",
]

START_MODES = ("paper-exact", "stationary-start")
DEFAULT_R = 30


def burn_in_length(p: int) -> int:
    return max(512, 20 * p)


@dataclass(frozen=True)
class SamplePath:
    """One realisation; arrays are indexed so that ``x2[t-1]`` is X_t^2."""

    N: int
    x2: np.ndarray
    sigma2: np.ndarray
    z: np.ndarray
    seed: int
    start_mode: str
    burn_in: int
    u0: float | None = None

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self.x2) + 1)


@dataclass(frozen=True)
class PathBatch:
    """Replicated paths, shape ``(reps, n)``."""

    N: int
    x2: np.ndarray
    sigma2: np.ndarray
    z: np.ndarray
    seeds: tuple[int, ...]
    start_mode: str
    burn_in: int
    u0: float | None = None

    def path(self, i: int) -> SamplePath:
        return SamplePath(
            self.N, self.x2[i], self.sigma2[i], self.z[i], self.seeds[i], self.start_mode, self.burn_in, self.u0
        )


@dataclass(frozen=True)
class DerivativePath:
    """Derivative in u of the stationary approximation's squares at ``u0``."""

    N: int
    u0: float
    order: int
    values: np.ndarray
    base: SamplePath


# ---------------------------------------------------------------------------
# innovations and the core recursion
# ---------------------------------------------------------------------------


def draw_innovations(spec: TvArchSpec, seeds: Sequence[int], n: int, presample: int = 0) -> np.ndarray:
    """
    Time-major innovations of shape ``(presample + n, reps)``.

    Row ``presample + t - 1`` holds Z_t; rows above it hold Z_0, Z_{-1}, ...
    """
    reps = len(seeds)
    out = np.empty((presample + n, reps))
    for i, seed in enumerate(seeds):
        out[presample:, i] = spec.innovation.draw(rng.stream(seed, "z"), n)
        if presample:
            pre = spec.innovation.draw(rng.stream(seed, "z-presample"), presample)
            out[:presample, i] = pre[::-1]
    return out


def _arch_recursion(coef: np.ndarray, z2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    sigma2_i = a_0[i] + sum_j a_j[i] x2_{i-j};  x2_i = z2_i sigma2_i, zero history.

    ``coef`` is ``(T, p+1)``, ``z2`` is ``(T, reps)``.
    """
    T, reps = z2.shape
    p = coef.shape[1] - 1
    if p == 0:
        sigma2 = np.repeat(coef[:, :1], reps, axis=1)
        return z2 * sigma2, sigma2
    x2 = np.zeros((T, reps))
    sigma2 = np.empty((T, reps))
    for i in range(T):
        s = np.full(reps, coef[i, 0])
        for j in range(1, min(p, i) + 1):
            s = s + coef[i, j] * x2[i - j]
        sigma2[i] = s
        x2[i] = z2[i] * s
    return x2, sigma2


def _tvarch_coef(spec: TvArchSpec, N: int, presample: int, n: int, convention: str) -> np.ndarray:
    t = np.arange(-presample + 1, n + 1)
    return coefficient_matrix(spec, t / N, 0, convention)


def _check_mode(start_mode: str) -> None:
    if start_mode not in START_MODES:
        raise ValueError(f"unknown start mode {start_mode!r}; expected one of {START_MODES}")


def _check_length(spec: TvArchSpec, N: int) -> None:
    if N < spec.p + 1:
        raise ValueError(f"N must be at least p + 1 = {spec.p + 1}")


# ---------------------------------------------------------------------------
# recursive simulation
# ---------------------------------------------------------------------------


def simulate_tvarch_batch(
    spec: TvArchSpec,
    N: int,
    seeds: Sequence[int],
    start_mode: str = "stationary-start",
    n_steps: int | None = None,
) -> PathBatch:
    """
    Simulate X_{t,N}^2 for t = 1..n_steps (default N) for each seed.

    ``paper-exact`` starts from X_t^2 = 0 for t <= 0.  ``stationary-start``
    extends the curves constantly below u = 0 and runs a discarded
    pre-sample of ``max(512, 20p)`` steps.
    """
    _check_mode(start_mode)
    _check_length(spec, N)
    n = N if n_steps is None else int(n_steps)
    if not 1 <= n <= N:
        raise ValueError("n_steps must lie in 1..N")
    seeds = tuple(int(s) for s in seeds)
    burn = burn_in_length(spec.p)
    pre = burn if start_mode == "stationary-start" else 0
    z = draw_innovations(spec, seeds, n, pre)
    coef = _tvarch_coef(spec, N, pre, n, "clamped")
    x2, sigma2 = _arch_recursion(coef, z * z)
    return PathBatch(N, x2[pre:].T.copy(), sigma2[pre:].T.copy(), z[pre:].T.copy(), seeds, start_mode, pre)


def simulate_tvarch(spec: TvArchSpec, N: int, seed: int, start_mode: str = "stationary-start") -> SamplePath:
    return simulate_tvarch_batch(spec, N, [seed], start_mode).path(0)


def _frozen_coef(spec: TvArchSpec, u0: float, T: int, order: int = 0) -> np.ndarray:
    row = coefficient_matrix(spec, [u0], order)[0]
    return np.tile(row, (T, 1))


def simulate_stationary_batch(
    spec: TvArchSpec, u0: float, N: int, seeds: Sequence[int], n_steps: int | None = None
) -> PathBatch:
    """Stationary ARCH(p) paths with coefficients frozen at ``u0``."""
    _check_length(spec, N)
    n = N if n_steps is None else int(n_steps)
    seeds = tuple(int(s) for s in seeds)
    burn = burn_in_length(spec.p)
    z = draw_innovations(spec, seeds, n, burn)
    x2, sigma2 = _arch_recursion(_frozen_coef(spec, u0, burn + n), z * z)
    return PathBatch(N, x2[burn:].T.copy(), sigma2[burn:].T.copy(), z[burn:].T.copy(), seeds, "stationary-start", burn, u0)


def simulate_stationary(spec: TvArchSpec, u0: float, N: int, seed: int) -> SamplePath:
    return simulate_stationary_batch(spec, u0, N, [seed]).path(0)


# ---------------------------------------------------------------------------
# Volterra expansions and the companion process
# ---------------------------------------------------------------------------


def _shift(v: np.ndarray, j: int) -> np.ndarray:
    out = np.zeros_like(v)
    out[j:] = v[:-j]
    return out


def _volterra(coef: np.ndarray, z2: np.ndarray, r: int) -> np.ndarray:
    """Sum of the Volterra terms m(0..r), computed with m(k)_t = z2_t sum_j a_j[t] m(k-1)_{t-j}."""
    p = coef.shape[1] - 1
    term = coef[:, 0] * z2
    total = term.copy()
    if p == 0:
        return total
    for _ in range(r):
        acc = np.zeros_like(term)
        for j in range(1, p + 1):
            acc = acc + coef[:, j] * _shift(term, j)
        term = z2 * acc
        total = total + term
    return total


def volterra_truncated(spec: TvArchSpec, N: int, r: int = DEFAULT_R, seed: int = 0) -> SamplePath:
    """
    Time-varying Volterra series of X_{t,N}^2 truncated after ``r`` product terms.

    Coefficients vanish for t <= 0, matching the ``paper-exact`` recursion; the
    innovation stream is the one used by :func:`simulate_tvarch`.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    _check_length(spec, N)
    z = draw_innovations(spec, [seed], N)[:, 0]
    coef = _tvarch_coef(spec, N, 0, N, "paper-exact")
    x2 = _volterra(coef, z * z, r)
    sigma2 = np.divide(x2, z * z, out=np.full(N, np.nan), where=z != 0)
    return SamplePath(N, x2, sigma2, z, int(seed), "paper-exact", 0)


def volterra_stationary(spec: TvArchSpec, u0: float, N: int, r: int = DEFAULT_R, seed: int = 0) -> SamplePath:
    """Truncated Volterra series of the stationary approximation at ``u0`` (uses pre-sample innovations)."""
    if r < 1:
        raise ValueError("r must be at least 1")
    _check_length(spec, N)
    pre = max(burn_in_length(spec.p), r * spec.p)
    z = draw_innovations(spec, [seed], N, pre)[:, 0]
    x2 = _volterra(_frozen_coef(spec, u0, pre + N), z * z, r)[pre:]
    zs = z[pre:]
    sigma2 = np.divide(x2, zs * zs, out=np.full(N, np.nan), where=zs != 0)
    return SamplePath(N, x2, sigma2, zs, int(seed), "stationary-start", pre, u0)


def companion_U(spec: TvArchSpec, N: int, r: int = DEFAULT_R, seed: int = 0) -> np.ndarray:
    """
    Truncated companion process U_t, t = 1..N.

    ``U_t = Z_t^2 + sum_{k=1}^r Q^(k-1) k B_t(k)`` where ``A_t(k)`` and
    ``B_t(k)`` accumulate, over lag paths of length k ending at t, the
    products of Z^2 weighted by 1/ell and (for B) by the path's time span.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    p = spec.p
    pre = max(burn_in_length(p), r * p)
    z = draw_innovations(spec, [seed], N, pre)[:, 0]
    z2 = z * z
    U = z2.copy()
    if p == 0:
        return U[pre:]
    inv_ell = 1.0 / spec.regularity.ell.values(p)
    Q = spec.regularity.Q
    A = z2.copy()
    B = np.zeros_like(z2)
    for k in range(1, r + 1):
        newA = np.zeros_like(z2)
        newB = np.zeros_like(z2)
        for j in range(1, p + 1):
            sA = _shift(A, j)
            newA += inv_ell[j - 1] * sA
            newB += inv_ell[j - 1] * (j * sA + _shift(B, j))
        A = z2 * newA
        B = z2 * newB
        U = U + Q ** (k - 1) * k * B
    return U[pre:]


# ---------------------------------------------------------------------------
# derivative processes
# ---------------------------------------------------------------------------


def stationary_derivatives_batch(
    spec: TvArchSpec, u0: float, N: int, seeds: Sequence[int], order: int = 2, n_steps: int | None = None
) -> tuple[PathBatch, np.ndarray, np.ndarray | None]:
    """
    Stationary paths at ``u0`` with their first (and second) u-derivative processes.

    Returns ``(base, d1, d2)``; ``d2`` is None for ``order=1``.  The base
    paths are bit-identical to :func:`simulate_stationary_batch`.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    _check_length(spec, N)
    n = N if n_steps is None else int(n_steps)
    seeds = tuple(int(s) for s in seeds)
    burn = burn_in_length(spec.p)
    T = burn + n
    z = draw_innovations(spec, seeds, n, burn)
    z2 = z * z
    a = _frozen_coef(spec, u0, T)
    x2, sigma2 = _arch_recursion(a, z2)
    a1 = coefficient_matrix(spec, [u0], 1)[0]
    a2 = coefficient_matrix(spec, [u0], 2)[0] if order == 2 else None
    a = a[0]
    p = spec.p
    if p == 0:
        d1 = a1[0] * z2
        d2 = a2[0] * z2 if order == 2 else None
    else:
        d1 = np.zeros_like(z2)
        d2 = np.zeros_like(z2) if order == 2 else None
        for i in range(T):
            s1 = np.full(z2.shape[1], a1[0])
            if order == 2:
                s2 = np.full(z2.shape[1], a2[0])
            for j in range(1, min(p, i) + 1):
                s1 = s1 + a1[j] * x2[i - j] + a[j] * d1[i - j]
                if order == 2:
                    s2 = s2 + a2[j] * x2[i - j] + 2.0 * a1[j] * d1[i - j] + a[j] * d2[i - j]
            d1[i] = z2[i] * s1
            if order == 2:
                d2[i] = z2[i] * s2
    base = PathBatch(N, x2[burn:].T.copy(), sigma2[burn:].T.copy(), z[burn:].T.copy(), seeds, "stationary-start", burn, u0)
    return base, d1[burn:].T.copy(), (None if d2 is None else d2[burn:].T.copy())


def derivative_path(spec: TvArchSpec, u0: float, N: int, seed: int, order: int = 1) -> DerivativePath:
    """
    Derivative process of order 1 or 2 at ``u0``.

    Order 1 solves ``D_t = Z_t^2 (a_0' + sum a_j' X_{t-j}^2 + sum a_j D_{t-j})``;
    order 2 differentiates that recursion once more in u.
    """
    if order > spec.max_order:
        from tvarch.exceptions import NotDifferentiable

        raise NotDifferentiable(f"curves are not differentiable to order {order}")
    base, d1, d2 = stationary_derivatives_batch(spec, u0, N, [seed], order)
    values = d1[0] if order == 1 else d2[0]
    return DerivativePath(N, float(u0), order, values, base.path(0))


@dataclass(frozen=True)
class TaylorSummary:
    u0: float
    t: int
    distance: float
    residuals: np.ndarray = field(repr=False)
    mean_abs: float = 0.0
    stderr: float = 0.0


def taylor_residual(
    spec: TvArchSpec, u0: float, t_over_N: float, N: int, seed: int, reps: int = 1
) -> TaylorSummary:
    """
    Residual of the second-order expansion of X_{t,N}^2 around the stationary path at ``u0``.

    For each replication ``r`` (seed ``derive_seed(seed, r)``; with ``reps=1``
    the seed itself) the residual at ``t = round(t_over_N * N)`` is
    ``X_{t,N}^2 - [X~_t(u0)^2 + d D_t + d^2/2 D2_t]`` with ``d = t/N - u0``.
    """
    t = int(round(t_over_N * N))
    if not 1 <= t <= N:
        raise ValueError("t_over_N * N must fall in 1..N")
    seeds = [int(seed)] if reps == 1 else [rng.derive_seed(seed, r) for r in range(reps)]
    tv = simulate_tvarch_batch(spec, N, seeds, "stationary-start", n_steps=t)
    base, d1, d2 = stationary_derivatives_batch(spec, u0, N, seeds, 2, n_steps=t)
    d = t / N - u0
    approx = base.x2[:, t - 1] + d * d1[:, t - 1] + 0.5 * d * d * d2[:, t - 1]
    res = tv.x2[:, t - 1] - approx
    absr = np.abs(res)
    se = float(np.std(absr, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return TaylorSummary(float(u0), t, d, res, math.fsum(absr) / reps, se)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def path_to_csv(path: SamplePath, out=None) -> str:
    """
    Render a path as CSV: a ``#`` metadata line, then ``t,x2,sigma2,z`` rows.

    Floats use ``repr`` so values round-trip exactly.
    """
    buf = io.StringIO()
    u0 = "" if path.u0 is None else f",u0={path.u0!r}"
    buf.write(f"# seed={path.seed},mode={path.start_mode},N={path.N},burn_in={path.burn_in}{u0}\n")
    buf.write("t,x2,sigma2,z\n")
    for t, (x, s, z) in enumerate(zip(path.x2.tolist(), path.sigma2.tolist(), path.z.tolist()), start=1):
        buf.write(f"{t},{x!r},{s!r},{z!r}\n")
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
