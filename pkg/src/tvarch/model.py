"""
Model specification for time-varying ARCH(p) processes.

A model is a list of coefficient curves ``a_0(u), ..., a_p(u)`` on rescaled
time ``u = t/N``, an innovation law with mean zero and unit variance, and the
regularity constants (rho, Q, nu, M, ell) that bound the curves.  The
parameter space used by the estimator is :class:`OmegaSpace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from tvarch.exceptions import (
    AssumptionViolation,
    InfeasibleOmega,
    NotDifferentiable,
    UnsupportedLaw,
)

__all__ = [
    "CURVE_FAMILIES",
    "Check",
    "InnovationLaw",
    "LagWeights",
    "OmegaSpace",
    "ParameterCurve",
    "Regularity",
    "TvArchSpec",
    "assumption_report",
    "build_spec",
    "coefficient_matrix",
    "eval_coefficients",
    "omega_project",
    "validate_moment_conditions",
]

CURVE_FAMILIES = ("constant", "polynomial", "sinusoid", "piecewise-linear")
GRID_POINTS = 1001
CLT_DELTA = 0.1
MAX_POLY_DEGREE = 6


# ---------------------------------------------------------------------------
# Coefficient curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterCurve:
    """
    Coefficient function on rescaled time.

    Parameters
    ----------
    family : str
        One of ``constant``, ``polynomial``, ``sinusoid``, ``piecewise-linear``.
    coefficients : tuple of float
        ``constant``: ``(c,)``.  ``polynomial``: ``(c_0, ..., c_d)`` with
        value ``sum c_i u**i`` and ``d <= 6``.  ``sinusoid``: ``(a, b, c, k)``
        with value ``a + b cos(2 pi k u) + c sin(2 pi k u)``.
        ``piecewise-linear``: the values at ``knots``.
    knots : tuple of float, optional
        Increasing breakpoints, piecewise-linear family only.  The curve is
        extended constantly outside the knot range.
    """

    family: str
    coefficients: tuple[float, ...]
    knots: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        coefs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coefs)
        if not all(math.isfinite(c) for c in coefs):
            raise ValueError("curve coefficients must be finite")
        fam = self.family
        if fam == "constant":
            if len(coefs) != 1:
                raise ValueError("constant curve takes exactly one coefficient")
        elif fam == "polynomial":
            if not 1 <= len(coefs) <= MAX_POLY_DEGREE + 1:
                raise ValueError("polynomial curve takes 1 to 7 coefficients")
        elif fam == "sinusoid":
            if len(coefs) != 4:
                raise ValueError("sinusoid curve takes (a, b, c, k)")
        elif fam == "piecewise-linear":
            if self.knots is None:
                raise ValueError("piecewise-linear curve requires knots")
            knots = tuple(float(k) for k in self.knots)
            object.__setattr__(self, "knots", knots)
            if len(knots) < 2 or len(knots) != len(coefs):
                raise ValueError("need at least two knots, one value per knot")
            if any(b <= a for a, b in zip(knots, knots[1:])):
                raise ValueError("knots must be strictly increasing")
        else:
            raise ValueError(f"unknown curve family {fam!r}; expected one of {CURVE_FAMILIES}")
        if fam != "piecewise-linear" and self.knots is not None:
            raise ValueError("knots only apply to piecewise-linear curves")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "ParameterCurve":
        return cls("constant", (c,))

    @classmethod
    def polynomial(cls, *coefficients: float) -> "ParameterCurve":
        return cls("polynomial", tuple(coefficients))

    @classmethod
    def sinusoid(cls, a: float, b: float, c: float = 0.0, k: float = 1.0) -> "ParameterCurve":
        return cls("sinusoid", (a, b, c, k))

    @classmethod
    def piecewise_linear(cls, knots: Sequence[float], values: Sequence[float]) -> "ParameterCurve":
        return cls("piecewise-linear", tuple(values), tuple(knots))

    # -- evaluation -------------------------------------------------------
    @property
    def max_order(self) -> int:
        """Highest derivative order available (3 means smooth for our purposes)."""
        return 1 if self.family == "piecewise-linear" else 3

    def __call__(self, u, order: int = 0):
        return self.evaluate(u, order)

    def evaluate(self, u, order: int = 0):
        """Value (``order=0``) or derivative of order 1-3 at ``u``."""
        if order not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0..3")
        if order > self.max_order:
            raise NotDifferentiable(
                f"{self.family} curve has no derivative of order {order}"
            )
        u_arr = np.asarray(u, dtype=float)
        c = self.coefficients
        if self.family == "constant":
            out = np.full(u_arr.shape, c[0] if order == 0 else 0.0)
        elif self.family == "polynomial":
            poly = np.polynomial.Polynomial(c)
            out = poly.deriv(order)(u_arr) if order else poly(u_arr)
            out = np.asarray(out, dtype=float) * np.ones(u_arr.shape)
        elif self.family == "sinusoid":
            a, b, s, k = c
            omega = 2.0 * math.pi * k
            phase = omega * u_arr + order * math.pi / 2.0
            scale = omega**order
            out = b * scale * np.cos(phase) + s * scale * np.sin(phase)
            if order == 0:
                out = a + out
        else:
            knots = np.asarray(self.knots)
            vals = np.asarray(c)
            if order == 0:
                out = np.interp(u_arr, knots, vals)
            else:
                slopes = np.diff(vals) / np.diff(knots)
                idx = np.searchsorted(knots, u_arr, side="right") - 1
                inside = (idx >= 0) & (idx < len(slopes))
                out = np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)
        if np.ndim(u) == 0:
            return float(out)
        return out

    def d1(self, u):
        return self.evaluate(u, 1)

    def d2(self, u):
        return self.evaluate(u, 2)

    def d3(self, u):
        return self.evaluate(u, 3)

    def critical_points(self) -> np.ndarray:
        """Points in [0, 1] where the curve may attain an extremum (besides the ends)."""
        pts: list[float] = []
        if self.family == "polynomial" and len(self.coefficients) > 2:
            roots = np.polynomial.Polynomial(self.coefficients).deriv().roots()
            pts = [r.real for r in roots if abs(r.imag) < 1e-12]
        elif self.family == "sinusoid":
            _, b, s, k = self.coefficients
            if k != 0 and (b != 0 or s != 0):
                omega = 2.0 * math.pi * k
                base = math.atan2(s, b)
                n_max = int(math.ceil(abs(omega) / math.pi)) + 2
                pts = [(base + n * math.pi) / omega for n in range(-n_max, n_max + 1)]
        elif self.family == "piecewise-linear":
            pts = list(self.knots)
        return np.array(sorted(x for x in pts if 0.0 <= x <= 1.0))

    def to_dict(self) -> dict:
        out = {"family": self.family, "coefficients": list(self.coefficients)}
        if self.knots is not None:
            out["knots"] = list(self.knots)
        return out


# ---------------------------------------------------------------------------
# Innovations and regularity constants
# ---------------------------------------------------------------------------

LAWS = ("gaussian", "student-t", "two-point")


@dataclass(frozen=True)
class InnovationLaw:
    """Standardised innovation law (mean 0, variance 1 by construction)."""

    law: str = "gaussian"
    df: float | None = None

    def __post_init__(self) -> None:
        if self.law not in LAWS:
            raise UnsupportedLaw(f"unknown innovation law {self.law!r}")
        if self.law == "student-t":
            if self.df is None or not self.df > 8:
                raise ValueError("standardised Student-t innovations need df > 8")
            object.__setattr__(self, "df", float(self.df))
        elif self.df is not None:
            raise ValueError("df only applies to the student-t law")

    def abs_moment(self, q: float) -> float:
        """E|Z|^q in closed form (``inf`` when the moment does not exist)."""
        if q < 0:
            raise ValueError("moment order must be non-negative")
        if self.law == "two-point":
            return 1.0
        if self.law == "gaussian":
            return math.exp(0.5 * q * math.log(2.0) + gammaln((q + 1) / 2) - 0.5 * math.log(math.pi))
        nu = self.df
        if q >= nu:
            return math.inf
        log_m = (
            0.5 * q * math.log(nu - 2.0)
            + gammaln((q + 1) / 2)
            + gammaln((nu - q) / 2)
            - 0.5 * math.log(math.pi)
            - gammaln(nu / 2)
        )
        return math.exp(log_m)

    @property
    def var_z2(self) -> float:
        """var(Z^2) = E Z^4 - 1."""
        if self.law == "two-point":
            return 0.0
        if self.law == "gaussian":
            return 2.0
        nu = self.df
        return 3.0 * (nu - 2.0) / (nu - 4.0) - 1.0

    def draw(self, gen: np.random.Generator, size) -> np.ndarray:
        if self.law == "gaussian":
            return gen.standard_normal(size)
        if self.law == "student-t":
            return gen.standard_t(self.df, size) * math.sqrt((self.df - 2.0) / self.df)
        return np.where(gen.random(size) < 0.5, -1.0, 1.0)

    def to_dict(self) -> dict:
        return {"law": self.law} if self.df is None else {"law": self.law, "df": self.df}


@dataclass(frozen=True)
class LagWeights:
    """
    The weight sequence ell(j), j >= 1.

    ``unit``: ell(j) = 1.  ``log``: ell(1) = 1, ell(j) = j^2 log^(1+kappa) j.
    ``geometric``: ell(j) = eta^j with eta > 1.
    """

    kind: str = "unit"
    param: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "unit":
            if self.param is not None:
                raise ValueError("unit weights take no parameter")
        elif self.kind == "log":
            if self.param is None or not self.param > 0:
                raise ValueError("log weights need kappa > 0")
        elif self.kind == "geometric":
            if self.param is None or not self.param > 1:
                raise ValueError("geometric weights need eta > 1")
        else:
            raise ValueError(f"unknown ell kind {self.kind!r}")

    def __call__(self, j: int) -> float:
        if j < 1:
            raise ValueError("ell(j) is defined for j >= 1")
        if self.kind == "unit":
            return 1.0
        if self.kind == "geometric":
            return float(self.param**j)
        if j == 1:
            return 1.0
        return j**2 * math.log(j) ** (1.0 + self.param)

    def values(self, p: int) -> np.ndarray:
        return np.array([self(j) for j in range(1, p + 1)], dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.param is None else {"kind": self.kind, "param": self.param}


@dataclass(frozen=True)
class Regularity:
    rho: float
    Q: float
    nu: float
    M: float
    ell: LagWeights = field(default_factory=LagWeights)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "Q": self.Q, "nu": self.nu, "M": self.M, "ell": self.ell.to_dict()}


@dataclass(frozen=True)
class TvArchSpec:
    """tvARCH(p) model: curves a_0..a_p, innovation law and regularity block."""

    curves: tuple[ParameterCurve, ...]
    innovation: InnovationLaw
    regularity: Regularity

    def __post_init__(self) -> None:
        object.__setattr__(self, "curves", tuple(self.curves))
        if len(self.curves) < 1:
            raise ValueError("at least the intercept curve a_0 is required")

    @property
    def p(self) -> int:
        return len(self.curves) - 1

    @property
    def max_order(self) -> int:
        return min(c.max_order for c in self.curves)

    def coefficients(self, u: float, order: int = 0, convention: str = "clamped") -> np.ndarray:
        return eval_coefficients(self, u, order, convention)

    def sup_a0(self) -> float:
        grid = _check_grid(self.curves[0])
        return float(np.max(self.curves[0](grid)))

    def lag_bound_sum(self) -> float:
        """Q * sum_{j<=p} 1/ell(j)."""
        if self.p == 0:
            return 0.0
        return self.regularity.Q * float(np.sum(1.0 / self.regularity.ell.values(self.p)))

    def to_dict(self) -> dict:
        return {
            "curves": [c.to_dict() for c in self.curves],
            "innovation": self.innovation.to_dict(),
            "regularity": self.regularity.to_dict(),
        }


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """One numeric inequality with both sides and, if local, where it was worst."""

    name: str
    lhs: float
    rhs: float
    passed: bool
    u: float | None = None

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = "" if self.u is None else f" at u={self.u:.6g}"
        return f"{status} {self.name}: lhs={self.lhs!r} rhs={self.rhs!r}{where}"


def _check_grid(curve: ParameterCurve, n: int = GRID_POINTS) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, n)
    extra = curve.critical_points()
    if extra.size:
        grid = np.union1d(grid, extra)
    return grid


def assumption_report(spec: TvArchSpec, grid_points: int = GRID_POINTS) -> list[Check]:
    """
    Evaluate every regularity inequality on a dense grid of [0, 1].

    The grid has ``grid_points`` equispaced nodes plus the analytic critical
    points of each curve, so sup/inf checks are exact for polynomial,
    sinusoid and piecewise-linear families.  Lipschitz bounds are sampled on
    adjacent grid pairs.
    """
    reg = spec.regularity
    checks: list[Check] = []
    for name, val in (("rho > 0", reg.rho), ("Q > 0", reg.Q), ("M > 0", reg.M)):
        checks.append(Check(name, float(val), 0.0, bool(val > 0)))
    checks.append(Check("0 < nu < 1", float(reg.nu), 1.0, bool(0 < reg.nu < 1)))

    a0 = spec.curves[0]
    g0 = _check_grid(a0, grid_points)
    v0 = a0(g0)
    i = int(np.argmin(v0))
    checks.append(Check("inf_u a_0(u) > rho", float(v0[i]), float(reg.rho), bool(v0[i] > reg.rho), float(g0[i])))

    for j, curve in enumerate(spec.curves[1:], start=1):
        grid = _check_grid(curve, grid_points)
        vals = curve(grid)
        k = int(np.argmin(vals))
        checks.append(Check(f"a_{j}(u) >= 0", float(vals[k]), 0.0, bool(vals[k] >= 0), float(grid[k])))
        bound = reg.Q / reg.ell(j)
        k = int(np.argmax(vals))
        checks.append(
            Check(f"sup_u a_{j}(u) <= Q/ell({j})", float(vals[k]), bound, bool(vals[k] <= bound), float(grid[k]))
        )
        # Lipschitz on adjacent pairs; constant curves give exact zeros
        du = np.diff(grid)
        ratio = np.abs(np.diff(vals)) / du
        k = int(np.argmax(ratio))
        lip = reg.M / reg.ell(j)
        checks.append(
            Check(
                f"|a_{j}(u)-a_{j}(v)| <= M|u-v|/ell({j})",
                float(ratio[k]),
                lip,
                bool(ratio[k] <= lip * (1 + 1e-12)),
                float(grid[k]),
            )
        )

    total = spec.lag_bound_sum()
    checks.append(Check("Q sum 1/ell(j) <= 1 - nu", total, 1.0 - reg.nu, bool(total <= 1.0 - reg.nu)))
    return checks


def build_spec(
    curves: Sequence[ParameterCurve],
    innovation: InnovationLaw | str = "gaussian",
    regularity: Regularity | None = None,
    grid_points: int = GRID_POINTS,
) -> TvArchSpec:
    """
    Assemble a model and verify the regularity inequalities on a grid.

    Raises
    ------
    AssumptionViolation
        Naming the first failing inequality and where on [0, 1] it fails.
    """
    if regularity is None:
        raise ValueError("regularity constants are required")
    if isinstance(innovation, str):
        innovation = InnovationLaw(innovation)
    spec = TvArchSpec(tuple(curves), innovation, regularity)
    for check in assumption_report(spec, grid_points):
        if not check.passed:
            raise AssumptionViolation(check.name, check.u, check.lhs, check.rhs)
    return spec


def validate_moment_conditions(spec: TvArchSpec, level: str = "clt") -> list[Check]:
    """
    Innovation moment conditions.

    ``level="clt"`` requires E|Z|^(4(1+delta)) < inf with delta = 0.1.
    ``level="bias"`` requires (E Z^12)^(1/6) * Q * sum 1/ell(j) <= 1 - nu.
    """
    law = spec.innovation
    if law.law not in LAWS:
        raise UnsupportedLaw(law.law)
    if level == "clt":
        q = 4.0 * (1.0 + CLT_DELTA)
        m = law.abs_moment(q)
        return [Check(f"E|Z|^{q:g} < inf", m, math.inf, bool(math.isfinite(m)))]
    if level == "bias":
        m12 = law.abs_moment(12.0)
        lhs = m12 ** (1.0 / 6.0) * spec.lag_bound_sum() if math.isfinite(m12) else math.inf
        rhs = 1.0 - spec.regularity.nu
        return [
            Check("E Z^12 < inf", m12, math.inf, bool(math.isfinite(m12))),
            Check("(E Z^12)^(1/6) Q sum 1/ell(j) <= 1 - nu", lhs, rhs, bool(lhs <= rhs)),
        ]
    raise ValueError(f"unknown level {level!r}; expected 'clt' or 'bias'")


# ---------------------------------------------------------------------------
# Coefficient evaluation
# ---------------------------------------------------------------------------

CONVENTIONS = ("clamped", "paper-exact")


def coefficient_matrix(spec: TvArchSpec, u, order: int = 0, convention: str = "clamped") -> np.ndarray:
    """Coefficients (or their derivatives) on a vector of times, shape ``(len(u), p+1)``."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    neg = u < 0
    u_eval = np.where(neg, 0.0, u)
    out = np.column_stack([c.evaluate(u_eval, order) for c in spec.curves])
    if convention == "paper-exact" and neg.any():
        out[neg] = 0.0
    return out


def eval_coefficients(spec: TvArchSpec, u: float, deriv_order: int = 0, convention: str = "clamped") -> np.ndarray:
    """
    ``(d^s a_0/du^s, ..., d^s a_p/du^s)`` at ``u``.

    For ``u < 0`` the ``paper-exact`` convention returns zeros while
    ``clamped`` returns the curves evaluated at ``u = 0``.
    """
    if not 0 <= deriv_order <= 3:
        raise ValueError("deriv_order must be 0..3")
    return coefficient_matrix(spec, [u], deriv_order, convention)[0]


# ---------------------------------------------------------------------------
# Parameter space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OmegaSpace:
    """
    Compact parameter set ``{rho1 <= alpha_0 <= rho2, alpha_i >= rho1, sum_{i>=1} alpha_i <= 1}``.
    """

    p: int
    rho1: float
    rho2: float

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError("p must be non-negative")
        if not (0 < self.rho1 <= self.rho2 < math.inf):
            raise InfeasibleOmega(f"need 0 < rho1 <= rho2 < inf, got rho1={self.rho1}, rho2={self.rho2}")
        if self.p * self.rho1 > 1:
            raise InfeasibleOmega(f"p*rho1 = {self.p * self.rho1} > 1 leaves Omega empty")

    @property
    def kappa(self) -> float:
        return (self.rho2 + 1.0) / self.rho1

    def contains(self, alpha, strict: bool = False) -> bool:
        a = np.asarray(alpha, dtype=float)
        if a.shape != (self.p + 1,):
            return False
        lags = a[1:]
        if strict:
            return bool(
                self.rho1 < a[0] < self.rho2 and np.all(lags > self.rho1) and math.fsum(lags) < 1.0
            )
        return bool(
            self.rho1 <= a[0] <= self.rho2 and np.all(lags >= self.rho1) and math.fsum(lags) <= 1.0
        )

    def active_constraints(self, alpha, tol: float = 1e-9) -> list[str]:
        a = np.asarray(alpha, dtype=float)
        active = []
        if a[0] <= self.rho1 + tol:
            active.append("alpha_0 >= rho1")
        if a[0] >= self.rho2 - tol:
            active.append("alpha_0 <= rho2")
        for i in range(1, self.p + 1):
            if a[i] <= self.rho1 + tol:
                active.append(f"alpha_{i} >= rho1")
        if self.p and math.fsum(a[1:]) >= 1.0 - tol:
            active.append("sum alpha_i <= 1")
        return active

    def interior_report(self, spec: TvArchSpec, grid_points: int = GRID_POINTS) -> Check:
        """Whether ``a_u`` lies in the interior of Omega at every grid point."""
        grid = np.linspace(0.0, 1.0, grid_points)
        coefs = coefficient_matrix(spec, grid)
        ok = np.array([self.contains(c, strict=True) for c in coefs])
        bad = np.flatnonzero(~ok)
        if bad.size:
            return Check("a_u in Int(Omega)", 0.0, 1.0, False, float(grid[bad[0]]))
        return Check("a_u in Int(Omega)", 1.0, 1.0, True)

    def to_dict(self) -> dict:
        return {"rho1": self.rho1, "rho2": self.rho2}


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0, sum x = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def omega_project(alpha, omega: OmegaSpace) -> np.ndarray:
    """
    Euclidean projection onto Omega.

    Feasible input is returned unchanged.  The intercept constraint separates
    from the lag block, which is a shifted simplex-or-below projection.
    """
    a = np.array(alpha, dtype=float)
    if a.shape != (omega.p + 1,):
        raise ValueError(f"alpha must have length {omega.p + 1}")
    if omega.contains(a):
        return a
    out = a.copy()
    out[0] = min(max(a[0], omega.rho1), omega.rho2)
    if omega.p == 0:
        return out
    lags = a[1:]
    room = 1.0 - omega.p * omega.rho1
    shifted = np.maximum(lags - omega.rho1, 0.0)
    if math.fsum(shifted) > room:
        shifted = _project_simplex(lags - omega.rho1, room)
    res = omega.rho1 + shifted
    # floating-point cleanup so the result passes the exact feasibility test
    for _ in range(8):
        excess = math.fsum(res) - 1.0
        if excess <= 0:
            break
        k = int(np.argmax(res))
        res[k] = max(omega.rho1, np.nextafter(res[k] - excess, -np.inf))
    out[1:] = res
    return out
