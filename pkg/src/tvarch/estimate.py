"""
Local quasi-maximum-likelihood fits over the parameter polytope Omega.

The minimiser is a projected Newton method: the analytic Hessian (shifted
Levenberg-style when not positive definite) defines a quadratic model, the
step minimises that model over Omega, and a backtracking line search on the
contrast keeps every accepted iterate feasible and non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import io
import itertools
import logging
import math
from typing import Sequence

import numpy as np

from tvarch.exceptions import BoundaryViolation, NotConverged, SingularSigma
from tvarch.kernel import KernelSpec
from tvarch.likelihood import LocalData, local_data, weighted_likelihood
from tvarch.model import OmegaSpace, omega_project

__all__ = ["FitOptions", "FitResult", "fit_local", "fit_path", "fits_to_csv", "standard_errors"]

logger = logging.getLogger(__name__)

SIGMA_COND_MAX = 1e12


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 200
    multistart: bool = True
    start: tuple[float, ...] | None = None
    raise_on_failure: bool = False


@dataclass(frozen=True)
class FitResult:
    """Local estimate at anchor ``t0`` with solver diagnostics."""

    t0: int
    u0: float
    b: float
    estimate: np.ndarray
    value: float
    gradient_norm: float
    hessian_at_opt: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    active_constraints: tuple[str, ...] = ()
    stderr: np.ndarray | None = None
    varz2_hat: float | None = None
    flags: tuple[str, ...] = ()
    error: str | None = None


# ---------------------------------------------------------------------------
# constraint algebra
# ---------------------------------------------------------------------------


def _constraints(omega: OmegaSpace) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``A alpha <= c`` describing Omega."""
    m = omega.p + 1
    rows, rhs = [], []
    e0 = np.zeros(m)
    e0[0] = 1.0
    rows += [-e0, e0]
    rhs += [-omega.rho1, omega.rho2]
    for i in range(1, m):
        e = np.zeros(m)
        e[i] = -1.0
        rows.append(e)
        rhs.append(-omega.rho1)
    if omega.p:
        s = np.ones(m)
        s[0] = 0.0
        rows.append(s)
        rhs.append(1.0)
    return np.array(rows), np.array(rhs)


def _qp_step(H: np.ndarray, g: np.ndarray, alpha: np.ndarray, A: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Minimise ``g'd + d'Hd/2`` subject to ``A(alpha + d) <= c`` for positive definite H.

    The problem has at most p+3 constraints, so the KKT system is solved for
    every candidate active set, smallest sets first.
    """
    m = len(g)
    slack = c - A @ alpha
    tol = 1e-12 * (1.0 + np.abs(c))
    n_con = A.shape[0]
    for size in range(0, min(m, n_con) + 1):
        for S in itertools.combinations(range(n_con), size):
            S = list(S)
            if size:
                AS = A[S]
                K = np.block([[H, AS.T], [AS, np.zeros((size, size))]])
                rhs = np.concatenate([-g, slack[S]])
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(sol)):
                    continue
                d, lam = sol[:m], sol[m:]
                if np.any(lam < -1e-10):
                    continue
            else:
                d = np.linalg.solve(H, -g)
            if np.all(A @ d <= slack + tol):
                return d
    # unreachable for positive definite H and nonempty Omega; fall back to a projected gradient direction
    return -g


def _projected_gradient_norm(alpha: np.ndarray, grad: np.ndarray, omega: OmegaSpace) -> float:
    return float(np.linalg.norm(alpha - omega_project(alpha - grad, omega)))


def _shifted(H: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    lam = 0.0
    for _ in range(60):
        Hs = H + lam * np.eye(len(H))
        try:
            np.linalg.cholesky(Hs)
            return Hs
        except np.linalg.LinAlgError:
            lam = max(2.0 * lam, 1e-10 * scale)
    return H + lam * np.eye(len(H))


@dataclass
class _Run:
    alpha: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    pgn: float
    iterations: int
    converged: bool
    values: list[float]


def _minimise(data: LocalData, omega: OmegaSpace, start, tol: float, max_iter: int) -> _Run:
    A, c = _constraints(omega)
    alpha = omega_project(np.asarray(start, dtype=float), omega)
    f, g, H = weighted_likelihood(data, alpha)
    values = [f]
    pgn = _projected_gradient_norm(alpha, g, omega)
    it = 0
    while pgn > tol and it < max_iter:
        it += 1
        Hs = _shifted(H)
        try:
            d = np.linalg.solve(Hs, -g)
            if not omega.contains(alpha + d):
                d = _qp_step(Hs, g, alpha, A, c)
        except np.linalg.LinAlgError:
            d = -g
        accepted = False
        for direction in (d, -g):
            s = 1.0
            for _ in range(60):
                trial = omega_project(alpha + s * direction, omega)
                ft, _, _ = weighted_likelihood(data, trial, 0)
                if ft <= f + 1e-4 * float(g @ (trial - alpha)):
                    accepted = True
                    break
                s *= 0.5
            if accepted:
                break
        if not accepted:
            break
        alpha = trial
        f, g, H = weighted_likelihood(data, alpha)
        values.append(f)
        pgn = _projected_gradient_norm(alpha, g, omega)
    if pgn <= tol:
        alpha, f, g, H, pgn = _polish(data, omega, alpha, f, g, H, pgn)
    return _Run(alpha, f, g, H, pgn, it, pgn <= tol, values)


def _polish(data, omega, alpha, f, g, H, pgn):
    # one extra full Newton step at an interior optimum brings the estimate to
    # rounding level, which the gradient tolerance alone does not guarantee
    if omega.active_constraints(alpha):
        return alpha, f, g, H, pgn
    try:
        trial = alpha + np.linalg.solve(H, -g)
    except np.linalg.LinAlgError:
        return alpha, f, g, H, pgn
    if not omega.contains(trial):
        return alpha, f, g, H, pgn
    ft, gt, Ht = weighted_likelihood(data, trial)
    pt = _projected_gradient_norm(trial, gt, omega)
    if ft <= f + 4 * np.finfo(float).eps * abs(f) and pt <= pgn:
        return trial, ft, gt, Ht, pt
    return alpha, f, g, H, pgn


def _starts(data: LocalData, omega: OmegaSpace) -> list[np.ndarray]:
    wm = data.weighted_mean_x2()
    p = omega.p
    if p == 0:
        raw = [(0.5 * wm,), (wm,), (0.2 * wm,), (2.0 * wm,)]
    else:
        raw = [
            (0.5 * wm,) + (0.5 / p,) * p,
            (0.9 * wm,) + (0.1 / p,) * p,
            (0.7 * wm,) + (0.3 / p,) * p,
            (0.2 * wm,) + (0.8 / p,) * p,
        ]
    return [omega_project(np.array(r), omega) for r in raw]


def fit_local(data: LocalData, omega: OmegaSpace, opts: FitOptions | None = None) -> FitResult:
    """
    Minimise the local contrast over Omega.

    The default start sets alpha_0 to half the weighted mean of X^2 and splits
    0.5 evenly across the lag coefficients.  If that run does not converge,
    three further feasible starts are tried; the best run is chosen by lowest
    value, then lexicographically smallest estimate.  A result that still
    fails to converge is returned with ``converged=False`` (or raised as
    :class:`NotConverged` when ``opts.raise_on_failure``).
    """
    opts = opts or FitOptions()
    if data.p != omega.p:
        raise ValueError(f"data has p={data.p} but Omega has p={omega.p}")
    starts = _starts(data, omega)
    if opts.start is not None:
        starts = [omega_project(np.asarray(opts.start, dtype=float), omega)] + starts[1:]
    runs = [_minimise(data, omega, starts[0], opts.tol, opts.max_iter)]
    if not runs[0].converged and opts.multistart:
        for s in starts[1:]:
            runs.append(_minimise(data, omega, s, opts.tol, opts.max_iter))
    pool = [r for r in runs if r.converged] or runs
    best = min(pool, key=lambda r: (r.value, tuple(r.alpha)))
    flags = []
    if len(runs) > 1:
        flags.append("multistart")
    if np.linalg.cond(best.hess) > SIGMA_COND_MAX:
        flags.append("singular-hessian")
    if data.weights.renormalized:
        flags.append("boundary-renormalized")
    result = FitResult(
        t0=data.t0,
        u0=data.t0 / data.N,
        b=data.kernel.bandwidth,
        estimate=best.alpha,
        value=best.value,
        gradient_norm=best.pgn,
        hessian_at_opt=best.hess,
        iterations=sum(r.iterations for r in runs),
        converged=best.converged,
        active_constraints=tuple(omega.active_constraints(best.alpha)),
        flags=tuple(flags),
    )
    if not result.converged:
        logger.debug("fit at t0=%d did not converge (pg norm %.3g)", data.t0, best.pgn)
        if opts.raise_on_failure:
            raise NotConverged(f"no convergence at t0={data.t0}", result)
    return result


def standard_errors(fit: FitResult, data: LocalData, kernel: KernelSpec | None = None) -> FitResult:
    """
    Plug-in standard errors ``sqrt(w2 varz2 / 2 (Sigma^-1)_ii / (bN))``.

    Sigma is the weighted average of ``grad_w grad_w' / (2 w^2)`` at the
    estimate and var(Z^2) the weighted variance of the residuals
    ``X_k^2 / w_k``.  Fits that did not converge or sit on a constraint are
    returned unchanged (no standard errors).
    """
    kernel = kernel or data.kernel
    if not fit.converged or fit.active_constraints:
        return fit
    wt = data.w
    tot = math.fsum(wt)
    w = data.design @ fit.estimate
    G = data.design / w[:, None]
    m = G.shape[1]
    sigma = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            sigma[i, j] = sigma[j, i] = 0.5 * math.fsum(wt * G[:, i] * G[:, j]) / tot
    if np.linalg.cond(sigma) > SIGMA_COND_MAX:
        raise SingularSigma(f"Sigma condition number exceeds {SIGMA_COND_MAX:g} at t0={fit.t0}")
    resid = data.y / w
    mean = math.fsum(wt * resid) / tot
    varz2 = math.fsum(wt * (resid - mean) ** 2) / tot
    bN = kernel.bandwidth * data.N
    inv_diag = np.diag(np.linalg.inv(sigma))
    se = np.sqrt(kernel.w2 * varz2 / 2.0 * inv_diag / bN)
    return replace(fit, stderr=se, varz2_hat=varz2)


def _failed(t0: int, N: int, kernel: KernelSpec, p: int, message: str) -> FitResult:
    nan = np.full(p + 1, np.nan)
    return FitResult(t0, t0 / N, kernel.bandwidth, nan, math.nan, math.nan, np.full((p + 1, p + 1), np.nan), 0, False, error=message)


def fit_path(
    x2,
    grid: Sequence[int],
    kernel: KernelSpec,
    omega: OmegaSpace,
    opts: FitOptions | None = None,
    warm_start: bool = True,
    policy: str = "strict",
    with_stderr: bool = True,
) -> list[FitResult]:
    """
    Fit every anchor in ``grid``; each anchor's start is the previous estimate when ``warm_start``.

    Per-anchor failures (boundary violations, singular Sigma) are recorded in
    ``FitResult.error`` instead of being raised.
    """
    opts = opts or FitOptions()
    x2 = np.asarray(x2, dtype=float)
    N = len(x2)
    out: list[FitResult] = []
    prev = None
    for t0 in grid:
        try:
            data = local_data(x2, kernel, int(t0), omega.p, policy)
        except BoundaryViolation as exc:
            out.append(_failed(int(t0), N, kernel, omega.p, str(exc)))
            continue
        run_opts = opts if prev is None or not warm_start else replace(opts, start=tuple(prev))
        fit = fit_local(data, omega, run_opts)
        if with_stderr:
            try:
                fit = standard_errors(fit, data, kernel)
            except SingularSigma as exc:
                fit = replace(fit, error=str(exc))
        if fit.converged:
            prev = fit.estimate
        out.append(fit)
    return out


def fits_to_csv(fits: Sequence[FitResult], out=None) -> str:
    """Columns ``t0,u0,b,a0..ap,se0..sep,converged,value`` with round-trip float rendering."""
    if not fits:
        raise ValueError("no fits to write")
    m = len(fits[0].estimate)
    buf = io.StringIO()
    cols = ["t0", "u0", "b"] + [f"a{i}" for i in range(m)] + [f"se{i}" for i in range(m)] + ["converged", "value"]
    buf.write(",".join(cols) + "\n")
    for f in fits:
        se = f.stderr if f.stderr is not None else np.full(m, np.nan)
        row = [str(f.t0), repr(float(f.u0)), repr(float(f.b))]
        row += [repr(float(v)) for v in f.estimate] + [repr(float(v)) for v in se]
        row += [str(bool(f.converged)).lower(), repr(float(f.value))]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
