"""
Limit-theory constants of the local estimator.

``Sigma(u0)`` is the information matrix of the stationary approximation,
``mu(u0)`` the leading nonstationarity bias (already premultiplied by
``Sigma^-1``, so the estimator bias is ``-b^2 mu``) and ``b_opt`` the
bandwidth minimising the conjectured mean squared error expansion
``b^4 |mu|^2 + w2 var(Z^2) tr(Sigma^-1) / (2bN)``.

Monte Carlo estimates average over replications seeded by
:func:`tvarch.rng.derive_seed`; every stencil point reuses the same seeds,
so the innovations are common across the stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import math

import numpy as np
from scipy.stats import norm

from tvarch.exceptions import StencilOutOfRange
from tvarch.estimate import FitResult
from tvarch.kernel import KernelSpec
from tvarch.model import TvArchSpec, eval_coefficients
from tvarch.rng import derive_seed
from tvarch.simulate import simulate_stationary_batch

__all__ = [
    "AsymptoticsReport",
    "BandwidthResult",
    "MCSettings",
    "MuEstimate",
    "SigmaEstimate",
    "asymptotics_report",
    "bias_mu",
    "confidence_intervals",
    "mse_objective",
    "optimal_bandwidth",
    "sigma_of_u",
]

CONJECTURED = "conjectured"


@dataclass(frozen=True)
class MCSettings:
    """Path length, replication count and base seed for Monte Carlo constants."""

    N: int = 20000
    reps: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.N < 100 or self.reps < 1:
            raise ValueError("need N >= 100 and reps >= 1")

    def seeds(self) -> list[int]:
        return [derive_seed(self.seed, r) for r in range(self.reps)]


@dataclass(frozen=True)
class SigmaEstimate:
    matrix: np.ndarray
    stderr: np.ndarray
    method: str

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class MuEstimate:
    mu: np.ndarray
    stderr: np.ndarray
    method: str
    stencil_error: np.ndarray = field(default=None)


def _mean_and_se(per_rep: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean over axis 0 and its standard error (batch means inside the path when there is one replication)."""
    mean = per_rep.mean(axis=0)
    n = per_rep.shape[0]
    if n < 2:
        return mean, np.full(mean.shape, np.nan)
    return mean, per_rep.std(axis=0, ddof=1) / math.sqrt(n)


def _design(x2: np.ndarray, p: int) -> np.ndarray:
    """(reps, T-p, p+1) array of ``(1, x2_{t-1}, ..., x2_{t-p})``."""
    reps, T = x2.shape
    cols = [np.ones((reps, T - p))] + [x2[:, p - j : T - j] for j in range(1, p + 1)]
    return np.stack(cols, axis=-1)


def _sigma_closed(a0: float) -> SigmaEstimate:
    return SigmaEstimate(np.array([[0.5 / (a0 * a0)]]), np.zeros((1, 1)), "closed-form")


def sigma_of_u(spec: TvArchSpec, u0: float, mc: MCSettings | None = None, closed_form: bool = True) -> SigmaEstimate:
    """
    ``Sigma(u0) = E[grad_w grad_w' / (2 w^2)]`` at the true coefficients.

    For p = 0 the closed form ``1/(2 a0(u0)^2)`` is returned unless
    ``closed_form=False``.  Otherwise the expectation is a Monte Carlo
    average over stationary paths, with the standard error of each entry
    taken across replications.
    """
    alpha = eval_coefficients(spec, u0)
    if spec.p == 0 and closed_form:
        return _sigma_closed(float(alpha[0]))
    mc = mc or MCSettings()
    batch = simulate_stationary_batch(spec, u0, mc.N, mc.seeds())
    p = spec.p
    G = _design(batch.x2, p)
    w = G @ alpha
    G = G / w[..., None]
    per_rep = 0.5 * np.einsum("rti,rtj->rij", G, G) / G.shape[1]
    mean, se = _mean_and_se(per_rep)
    mean = 0.5 * (mean + mean.T)
    return SigmaEstimate(mean, se, "monte-carlo")


def _stencil_offsets() -> np.ndarray:
    return np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def bias_mu(
    spec: TvArchSpec,
    u0: float,
    kernel: KernelSpec,
    mc: MCSettings | None = None,
    du: float = 0.02,
    closed_form: bool = True,
    sigma: SigmaEstimate | None = None,
) -> MuEstimate:
    """
    Leading bias ``mu(u0) = w(2)/2 Sigma^-1 g''(u0)`` with ``g(u) = E grad l(u, a_{u0})``.

    ``g`` is estimated on the five-point stencil ``u0 + {-2,-1,0,1,2} du``
    with common innovations and differentiated by the fourth-order central
    formula.  ``stencil_error`` is the gap to the three-point formula, a
    conservative size for the differencing error.  For p = 0 the closed
    form ``-w(2) a0''(u0) / 2`` is used unless ``closed_form=False``.

    Raises
    ------
    StencilOutOfRange
        If ``u0 +- 2 du`` leaves (0, 1).
    """
    if not 0 < du:
        raise ValueError("du must be positive")
    lo, hi = u0 - 2 * du, u0 + 2 * du
    if not (0 < lo and hi < 1):
        raise StencilOutOfRange(f"stencil [{lo:g}, {hi:g}] leaves (0, 1)")
    w2nd = kernel.w2nd
    if spec.p == 0 and closed_form:
        mu = np.array([-0.5 * w2nd * float(eval_coefficients(spec, u0, 2)[0])])
        return MuEstimate(mu, np.zeros(1), "closed-form", np.zeros(1))
    mc = mc or MCSettings()
    if sigma is None:
        sigma = sigma_of_u(spec, u0, mc, closed_form=closed_form)
    alpha = eval_coefficients(spec, u0)
    seeds = mc.seeds()
    g = []
    for off in _stencil_offsets():
        batch = simulate_stationary_batch(spec, u0 + off * du, mc.N, seeds)
        G = _design(batch.x2, spec.p)
        w = G @ alpha
        y = batch.x2[:, spec.p :]
        score = 0.5 * (1.0 / w - y / (w * w))[..., None] * G
        g.append(score.mean(axis=1))
    gm2, gm1, g0, gp1, gp2 = g
    # symmetric pairs first, so equal stencil values cancel exactly
    g2_5 = (16.0 * (gp1 + gm1) - (gp2 + gm2) - 30.0 * g0) / (12.0 * du * du)
    g2_3 = ((gp1 + gm1) - 2.0 * g0) / (du * du)
    inv = np.linalg.inv(sigma.matrix)
    mu_r = 0.5 * w2nd * g2_5 @ inv.T
    mu, se = _mean_and_se(mu_r)
    mu3 = 0.5 * w2nd * inv @ g2_3.mean(axis=0)
    return MuEstimate(mu, se, "monte-carlo", np.abs(mu3 - mu))


def mse_objective(b, N: int, kernel: KernelSpec, sigma, mu, var_z2: float):
    """The conjectured MSE expansion ``b^4 |mu|^2 + w2 var(Z^2) tr(Sigma^-1) / (2 b N)``."""
    b = np.asarray(b, dtype=float)
    tr = float(np.trace(np.linalg.inv(np.atleast_2d(sigma))))
    m2 = float(np.sum(np.square(mu)))
    return b**4 * m2 + kernel.w2 * var_z2 * tr / (2.0 * b * N)


@dataclass(frozen=True)
class BandwidthResult:
    b: float
    zero_bias: bool
    clipped: bool
    label: str = CONJECTURED


def optimal_bandwidth(
    spec: TvArchSpec,
    u0: float,
    N: int,
    kernel: KernelSpec,
    sigma,
    mu,
    var_z2: float | None = None,
) -> BandwidthResult:
    """
    Minimiser of :func:`mse_objective` over (0, 0.5].

    ``b^5 = w2 var(Z^2) tr(Sigma^-1) / (8 N |mu|^2)``.  A zero bias has no
    interior minimum; the result is then ``b = 0.5`` with ``zero_bias`` set.
    ``var_z2`` defaults to the innovation law's value.
    """
    sigma = np.atleast_2d(np.asarray(getattr(sigma, "matrix", sigma), dtype=float))
    mu = np.asarray(getattr(mu, "mu", mu), dtype=float)
    v = spec.innovation.var_z2 if var_z2 is None else float(var_z2)
    m2 = float(np.sum(mu * mu))
    if m2 == 0.0:
        return BandwidthResult(0.5, True, True)
    tr = float(np.trace(np.linalg.inv(sigma)))
    b = (kernel.w2 * v * tr / (8.0 * N * m2)) ** 0.2
    if b > 0.5:
        return BandwidthResult(0.5, False, True)
    return BandwidthResult(b, False, False)


def confidence_intervals(
    fit: FitResult,
    level: float = 0.95,
    mu=None,
    b: float | None = None,
) -> np.ndarray:
    """
    Normal intervals ``a_hat + b^2 mu +- q stderr``, one row per coefficient.

    Without ``mu`` the intervals are uncorrected, which is valid when
    ``b^3`` is small against ``1/N``.  ``b`` defaults to the fit's bandwidth.
    """
    if not 0.5 < level < 1:
        raise ValueError("level must lie in (0.5, 1)")
    if fit.stderr is None:
        raise ValueError("fit has no standard errors")
    q = float(norm.ppf(0.5 + level / 2.0))
    centre = np.array(fit.estimate, dtype=float)
    if mu is not None:
        bb = fit.b if b is None else b
        centre = centre + bb * bb * np.asarray(getattr(mu, "mu", mu), dtype=float)
    half = q * np.asarray(fit.stderr, dtype=float)
    return np.column_stack([centre - half, centre + half])


@dataclass(frozen=True)
class AsymptoticsReport:
    u0: float
    N: int
    kernel: KernelSpec
    sigma: SigmaEstimate
    mu: MuEstimate
    bandwidth: BandwidthResult

    def items(self) -> list[tuple[str, str]]:
        m = self.sigma.matrix.shape[0]
        out = [("u0", repr(float(self.u0))), ("N", str(self.N)), ("kernel", self.kernel.family)]
        for i in range(m):
            for j in range(m):
                out.append((f"sigma_{i}{j}", repr(float(self.sigma.matrix[i, j]))))
                out.append((f"sigma_{i}{j}_se", repr(float(self.sigma.stderr[i, j]))))
        out.append(("sigma_method", self.sigma.method))
        for i, ev in enumerate(self.sigma.eigenvalues):
            out.append((f"sigma_eig_{i}", repr(float(ev))))
        for i in range(m):
            out.append((f"mu_{i}", repr(float(self.mu.mu[i]))))
            out.append((f"mu_{i}_se", repr(float(self.mu.stderr[i]))))
            out.append((f"mu_{i}_stencil_error", repr(float(self.mu.stencil_error[i]))))
        out.append(("mu_method", self.mu.method))
        out += [
            ("b_opt", repr(float(self.bandwidth.b))),
            ("b_opt_label", self.bandwidth.label),
            ("zero_bias", str(self.bandwidth.zero_bias).lower()),
            ("b_opt_clipped", str(self.bandwidth.clipped).lower()),
        ]
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def to_csv(self) -> str:
        items = self.items()
        buf = io.StringIO()
        buf.write(",".join(k for k, _ in items) + "\n")
        buf.write(",".join(v for _, v in items) + "\n")
        return buf.getvalue()


def asymptotics_report(
    spec: TvArchSpec,
    u0: float,
    N: int,
    kernel: KernelSpec,
    mc: MCSettings | None = None,
    du: float = 0.02,
) -> AsymptoticsReport:
    """Sigma, mu and b_opt at ``u0`` for sample size ``N``."""
    sigma = sigma_of_u(spec, u0, mc)
    mu = bias_mu(spec, u0, kernel, mc, du, sigma=sigma)
    bw = optimal_bandwidth(spec, u0, N, kernel, sigma, mu)
    return AsymptoticsReport(float(u0), int(N), kernel, sigma, mu, bw)
