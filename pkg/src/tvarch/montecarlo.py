"""
Replicated experiments at desk scale.

Replication ``r`` uses seed ``derive_seed(base_seed, r)``.  Replications are
processed in chunks of fixed size (independent of the worker count), results
are reassembled in replication order and every cell statistic is reduced
with ``math.fsum``, so a summary is bit-identical for any number of threads.

Experiment kinds
----------------
``bias-law``, ``clt-coverage``, ``bandwidth-sweep``
    simulate tvARCH paths, fit at ``t0 = round(u0 N)`` for every bandwidth
    (paths are shared across bandwidths) and summarise ``a_hat - a(t0/N)``.
``approximation-rate``
    mean ``|X_{t,N}^2 - X_t(u0)^2|`` at ``t = round((u0 + d) N)`` for each
    distance ``d``, with common innovations.
``ergodic-sum``
    kernel-weighted average of the stationary ``X_t(u0)^2`` around
    ``N/2`` against its mean ``a0 / (1 - sum a_j)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import io
import logging
import math
import time
from typing import Sequence

import numpy as np
from scipy.stats import norm

from tvarch.estimate import FitOptions, fit_local, standard_errors
from tvarch.exceptions import ConfigError, ExperimentFailed, TvArchError
from tvarch.kernel import KernelSpec, weights
from tvarch.likelihood import local_data
from tvarch.model import OmegaSpace, TvArchSpec, eval_coefficients, validate_moment_conditions
from tvarch.rng import derive_seed
from tvarch.simulate import simulate_stationary_batch, simulate_tvarch_batch

__all__ = [
    "BandwidthRule",
    "CHUNK",
    "EXPERIMENT_KINDS",
    "ExperimentConfig",
    "ExperimentSummary",
    "derive_seed",
    "run_experiment",
]

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("bias-law", "clt-coverage", "approximation-rate", "bandwidth-sweep", "ergodic-sum")
FIT_KINDS = ("bias-law", "clt-coverage", "bandwidth-sweep")
CHUNK = 64
LEVELS = (0.90, 0.95, 0.99)
MAX_FAIL_FRACTION = 0.01
MIN_BN = 50


@dataclass(frozen=True)
class BandwidthRule:
    """Either fixed ``values`` or ``b = c N^-gamma``."""

    values: tuple[float, ...] | None = None
    c: float | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        fixed = self.values is not None
        power = self.c is not None or self.gamma is not None
        if fixed == power:
            raise ConfigError("bandwidth rule needs either values or (c, gamma)")
        if fixed:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values or any(not 0 < v < 1 for v in self.values):
                raise ConfigError("fixed bandwidths must lie in (0, 1)")
        elif self.c is None or self.gamma is None or self.c <= 0 or self.gamma <= 0:
            raise ConfigError("power rule needs c > 0 and gamma > 0")

    @classmethod
    def default(cls, kind: str) -> "BandwidthRule":
        return cls(c=1.0, gamma=0.2 if kind == "bandwidth-sweep" else 0.4)

    def bandwidths(self, N: int) -> tuple[float, ...]:
        if self.values is not None:
            return self.values
        return (self.c * N ** (-self.gamma),)

    def to_dict(self) -> dict:
        if self.values is not None:
            return {"values": list(self.values)}
        return {"c": self.c, "gamma": self.gamma}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's summary."""

    spec: TvArchSpec
    kind: str
    u0: tuple[float, ...] = (0.5,)
    N: tuple[int, ...] = (4000,)
    b_rule: BandwidthRule | None = None
    kernel: str = "rectangular"
    reps: int = 100
    base_seed: int = 0
    omega: OmegaSpace | None = None
    start_mode: str = "stationary-start"
    distances: tuple[float, ...] = (0.05, 0.1, 0.2)
    policy: str = "strict"

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        object.__setattr__(self, "u0", tuple(float(u) for u in np.atleast_1d(self.u0)))
        object.__setattr__(self, "N", tuple(int(n) for n in np.atleast_1d(self.N)))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if self.b_rule is None:
            object.__setattr__(self, "b_rule", BandwidthRule.default(self.kind))
        if self.omega is None:
            sup = self.spec.sup_a0()
            object.__setattr__(self, "omega", OmegaSpace(self.spec.p, 1e-3, max(100.0, 100.0 * sup)))
        if self.omega.p != self.spec.p:
            raise ConfigError("omega and model disagree on p")
        for u in self.u0:
            if not 0 < u < 1:
                raise ConfigError("u0 must lie in (0, 1)")
        if self.kind == "approximation-rate":
            for u in self.u0:
                for d in self.distances:
                    if not 0 < u + d <= 1:
                        raise ConfigError(f"u0 + distance = {u + d} leaves (0, 1]")
        else:
            for n in self.N:
                for b in self.b_rule.bandwidths(n):
                    if b * n < MIN_BN:
                        raise ConfigError(f"bN = {b * n:g} < {MIN_BN} for N = {n}, b = {b:g}")

    def seeds(self) -> list[int]:
        return [derive_seed(self.base_seed, r) for r in range(self.reps)]

    def to_dict(self) -> dict:
        return {
            "model": self.spec.to_dict(),
            "kind": self.kind,
            "u0": list(self.u0),
            "N": list(self.N),
            "b_rule": self.b_rule.to_dict(),
            "kernel": self.kernel,
            "reps": self.reps,
            "base_seed": self.base_seed,
            "omega": self.omega.to_dict(),
            "start_mode": self.start_mode,
            "distances": list(self.distances),
            "policy": self.policy,
        }


@dataclass
class ExperimentSummary:
    """One ordered dict of statistics per cell; ``runtime`` is kept out of the CSV."""

    config: ExperimentConfig
    cells: list[dict]
    runtime: float = 0.0
    failures: dict = field(default_factory=dict)

    def to_csv(self, out=None) -> str:
        buf = io.StringIO()
        cols = list(self.cells[0].keys())
        buf.write(",".join(cols) + "\n")
        for cell in self.cells:
            buf.write(",".join(_fmt(cell[c]) for c in cols) + "\n")
        text = buf.getvalue()
        if out is not None:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _mean(x) -> float:
    x = list(x)
    return math.fsum(x) / len(x) if x else math.nan


def _mean_se(x) -> tuple[float, float]:
    x = [float(v) for v in x]
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(x) / n
    if n < 2:
        return m, math.nan
    var = math.fsum((v - m) ** 2 for v in x) / (n - 1)
    return m, math.sqrt(var / n)


def _cov(rows: np.ndarray) -> np.ndarray:
    n, m = rows.shape
    if n < 2:
        return np.full((m, m), math.nan)
    means = [math.fsum(rows[:, i]) / n for i in range(m)]
    out = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            out[i, j] = out[j, i] = math.fsum((rows[:, i] - means[i]) * (rows[:, j] - means[j])) / (n - 1)
    return out


# ---------------------------------------------------------------------------
# chunk workers
# ---------------------------------------------------------------------------


def _fit_chunk(cfg: ExperimentConfig, N: int, seeds: Sequence[int], cells: list[tuple[float, float, int]]):
    """Per replication, per cell: (ok, estimate, stderr)."""
    p = cfg.spec.p
    half_max = max(int(math.floor(b * N / 2.0)) + 1 for _, b, _ in cells)
    n_steps = min(N, max(t0 for _, _, t0 in cells) + half_max)
    batch = simulate_tvarch_batch(cfg.spec, N, seeds, cfg.start_mode, n_steps)
    opts = FitOptions()
    out = []
    for i in range(len(seeds)):
        x2 = batch.x2[i]
        row = []
        for _, b, t0 in cells:
            kernel = KernelSpec(cfg.kernel, b)
            try:
                data = local_data(x2, kernel, t0, p, cfg.policy, N=N)
                fit = fit_local(data, cfg.omega, opts)
                if not fit.converged:
                    row.append((False, None, None))
                    continue
                fit = standard_errors(fit, data, kernel)
                row.append((True, fit.estimate, fit.stderr))
            except TvArchError as exc:
                logger.debug("replication failed: %s", exc)
                row.append((False, None, None))
        out.append(row)
    return out


def _approx_chunk(cfg: ExperimentConfig, N: int, seeds: Sequence[int]):
    spec = cfg.spec
    tv = simulate_tvarch_batch(spec, N, seeds, cfg.start_mode).x2
    out = []
    for u0 in cfg.u0:
        st = simulate_stationary_batch(spec, u0, N, seeds).x2
        ts = [int(round((u0 + d) * N)) for d in cfg.distances]
        out.append(np.stack([np.abs(tv[:, t - 1] - st[:, t - 1]) for t in ts], axis=1))
    return [[out[k][i] for k in range(len(cfg.u0))] for i in range(len(seeds))]


def _ergodic_chunk(cfg: ExperimentConfig, N: int, seeds: Sequence[int], bws: Sequence[float]):
    t0 = N // 2
    res = []
    for u0 in cfg.u0:
        wts = [weights(KernelSpec(cfg.kernel, b), t0, N, 0, cfg.policy) for b in bws]
        n_steps = max(int(w.k[-1]) for w in wts)
        x2 = simulate_stationary_batch(cfg.spec, u0, N, seeds, n_steps).x2
        res.append([[math.fsum(w.w * x2[i, w.k - 1]) for w in wts] for i in range(len(seeds))])
    return [[res[k][i] for k in range(len(cfg.u0))] for i in range(len(seeds))]


def _chunks(seeds: list[int]) -> list[list[int]]:
    return [seeds[i : i + CHUNK] for i in range(0, len(seeds), CHUNK)]


def _map(threads: int, fn, chunks):
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


# ---------------------------------------------------------------------------
# cell summaries
# ---------------------------------------------------------------------------


def _fit_cell(cfg: ExperimentConfig, u0: float, N: int, b: float, t0: int, results) -> dict:
    m = cfg.spec.p + 1
    truth = eval_coefficients(cfg.spec, t0 / N)
    ok = [r for r in results if r[0]]
    n_fail = len(results) - len(ok)
    cell = {"kind": cfg.kind, "u0": u0, "N": N, "b": b, "t0": t0, "n_ok": len(ok), "n_failed": n_fail}
    err = np.array([r[1] - truth for r in ok]).reshape(len(ok), m)
    for i in range(m):
        cell[f"true_{i}"] = float(truth[i])
    for i in range(m):
        bias, se = _mean_se(err[:, i])
        cell[f"bias_{i}"] = bias
        cell[f"bias_se_{i}"] = se
    for i in range(m):
        mse, se = _mean_se(err[:, i] ** 2)
        cell[f"mse_{i}"] = mse
        cell[f"mse_se_{i}"] = se
    cov = _cov(math.sqrt(b * N) * err)
    for i in range(m):
        for j in range(m):
            cell[f"cov_{i}{j}"] = float(cov[i, j])
    with_se = [r for r in ok if r[2] is not None]
    cell["n_with_se"] = len(with_se)
    for level in LEVELS:
        q = float(norm.ppf(0.5 + level / 2.0))
        tag = f"{int(round(level * 100))}"
        for i in range(m):
            hits = [1.0 if abs(r[1][i] - truth[i]) <= q * r[2][i] else 0.0 for r in with_se]
            c = _mean(hits)
            cell[f"cover{tag}_{i}"] = c
            cell[f"cover{tag}_se_{i}"] = math.sqrt(c * (1 - c) / len(hits)) if hits else math.nan
    return cell


def _check_failures(cells: list[dict], reps: int) -> dict:
    worst = max(c["n_failed"] for c in cells)
    if worst > MAX_FAIL_FRACTION * reps:
        raise ExperimentFailed(f"{worst} of {reps} replications failed in some cell (limit {MAX_FAIL_FRACTION:.0%})")
    return {f"{c['u0']}/{c['N']}/{c['b']}": c["n_failed"] for c in cells if c["n_failed"]}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentSummary:
    """
    Run every cell of ``config``.

    Raises
    ------
    ExperimentFailed
        When more than 1% of the replications of any cell fail.
    ConfigError
        When the model fails the moment conditions the kind relies on.
    """
    level = "bias" if config.kind == "bias-law" else "clt"
    for check in validate_moment_conditions(config.spec, level):
        if not check.passed:
            raise ConfigError(f"moment condition fails: {check.describe()}")
    start = time.perf_counter()
    seeds = config.seeds()
    chunks = _chunks(seeds)
    cells: list[dict] = []
    for N in config.N:
        if config.kind in FIT_KINDS:
            grid = [(u0, b, int(round(u0 * N))) for u0 in config.u0 for b in config.b_rule.bandwidths(N)]
            per_chunk = _map(threads, lambda c: _fit_chunk(config, N, c, grid), chunks)
            rows = [r for chunk in per_chunk for r in chunk]
            for k, (u0, b, t0) in enumerate(grid):
                cells.append(_fit_cell(config, u0, N, b, t0, [row[k] for row in rows]))
        elif config.kind == "approximation-rate":
            per_chunk = _map(threads, lambda c: _approx_chunk(config, N, c), chunks)
            rows = [r for chunk in per_chunk for r in chunk]
            for k, u0 in enumerate(config.u0):
                for j, d in enumerate(config.distances):
                    mean, se = _mean_se(row[k][j] for row in rows)
                    cells.append(
                        {"kind": config.kind, "u0": u0, "N": N, "distance": d, "t": int(round((u0 + d) * N)),
                         "n_ok": len(rows), "n_failed": 0, "mean_abs_diff": mean, "mean_abs_diff_se": se}
                    )
        else:
            bws = config.b_rule.bandwidths(N)
            per_chunk = _map(threads, lambda c: _ergodic_chunk(config, N, c, bws), chunks)
            rows = [r for chunk in per_chunk for r in chunk]
            for k, u0 in enumerate(config.u0):
                a = eval_coefficients(config.spec, u0)
                target = float(a[0] / (1.0 - math.fsum(a[1:])))
                for j, b in enumerate(bws):
                    vals = [row[k][j] for row in rows]
                    mean, se = _mean_se(vals)
                    mse, mse_se = _mean_se((v - target) ** 2 for v in vals)
                    rmse = math.sqrt(mse)
                    cells.append(
                        {"kind": config.kind, "u0": u0, "N": N, "b": b, "bN": b * N, "n_ok": len(vals), "n_failed": 0,
                         "target": target, "mean": mean, "mean_se": se, "rmse": rmse,
                         "rmse_se": mse_se / (2 * rmse) if rmse > 0 else math.nan}
                    )
    failures = _check_failures(cells, config.reps)
    return ExperimentSummary(config, cells, time.perf_counter() - start, failures)
