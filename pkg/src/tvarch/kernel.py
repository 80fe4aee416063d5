"""Kernels on [-1/2, 1/2] and the discrete local weights built from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from tvarch.exceptions import BoundaryViolation

__all__ = ["KERNEL_FAMILIES", "KernelMoments", "KernelSpec", "Weights", "kernel_moments", "weights"]

KERNEL_FAMILIES = ("rectangular", "epanechnikov-rescaled", "triangular")
_EDGE_TOL = 1e-12


def _kernel_values(family: str, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= 0.5 + _EDGE_TOL
    if family == "rectangular":
        w = np.ones_like(x)
    elif family == "epanechnikov-rescaled":
        w = 1.5 * (1.0 - 4.0 * x * x)
    elif family == "triangular":
        w = 2.0 - 4.0 * np.abs(x)
    else:
        raise ValueError(f"unknown kernel family {family!r}; expected one of {KERNEL_FAMILIES}")
    return np.where(inside, np.maximum(w, 0.0), 0.0)


@dataclass(frozen=True)
class KernelMoments:
    w1: float
    xw: float
    w2: float
    w2nd: float


@lru_cache(maxsize=None)
def kernel_moments(family: str) -> KernelMoments:
    """
    Integral, first moment, squared integral and second moment of W.

    Uses 64-point Gauss-Legendre on each half of the support, which is exact
    for the piecewise-polynomial families offered here.
    """
    nodes, wts = np.polynomial.legendre.leggauss(64)
    parts = []
    for lo, hi in ((-0.5, 0.0), (0.0, 0.5)):
        x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        parts.append((x, 0.5 * (hi - lo) * wts))
    x = np.concatenate([p[0] for p in parts])
    q = np.concatenate([p[1] for p in parts])
    W = _kernel_values(family, x)
    return KernelMoments(
        w1=math.fsum(q * W),
        xw=math.fsum(q * x * W),
        w2=math.fsum(q * W * W),
        w2nd=math.fsum(q * x * x * W),
    )


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth ``b`` in (0, 1)."""

    family: str = "rectangular"
    bandwidth: float = 0.1
    moments: KernelMoments = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if not 0 < self.bandwidth < 1:
            raise ValueError("bandwidth must lie in (0, 1)")
        object.__setattr__(self, "moments", kernel_moments(self.family))

    @property
    def w2(self) -> float:
        return self.moments.w2

    @property
    def w2nd(self) -> float:
        return self.moments.w2nd

    def __call__(self, x):
        return _kernel_values(self.family, x)

    def with_bandwidth(self, b: float) -> "KernelSpec":
        return KernelSpec(self.family, b)

    def to_dict(self) -> dict:
        return {"family": self.family, "bandwidth": self.bandwidth}


@dataclass(frozen=True)
class Weights:
    """Nonzero local weights ``w[i]`` attached to times ``k[i]`` (1-based)."""

    k: np.ndarray
    w: np.ndarray
    t0: int
    N: int
    renormalized: bool = False

    @property
    def total(self) -> float:
        return math.fsum(self.w)


def weights(kernel: KernelSpec, t0: int, N: int, p: int = 0, policy: str = "strict") -> Weights:
    """
    Local weights ``(1/(bN)) W((t0 - k)/(bN))`` for ``k = p+1..N``.

    ``policy="strict"`` raises :class:`BoundaryViolation` when any nonzero
    weight would fall outside ``p+1..N``.  ``policy="renormalize"`` clips the
    support, rescales the weights to sum to exactly one and always sets the
    ``renormalized`` flag.
    """
    if policy not in ("strict", "renormalize"):
        raise ValueError("policy must be 'strict' or 'renormalize'")
    t0 = int(t0)
    bN = kernel.bandwidth * N
    half = int(math.floor(bN / 2.0 + _EDGE_TOL))
    k_all = np.arange(t0 - half, t0 + half + 1)
    w_all = _kernel_values(kernel.family, (t0 - k_all) / bN) / bN
    keep = w_all > 0
    k_all, w_all = k_all[keep], w_all[keep]
    inside = (k_all >= p + 1) & (k_all <= N)
    if policy == "strict":
        if inside.all():
            return Weights(k_all, w_all, t0, N)
        raise BoundaryViolation(
            f"kernel support [{k_all[0]}, {k_all[-1]}] around t0={t0} exceeds the usable sample [{p + 1}, {N}]"
        )
    # renormalizing mode always flags its output, clipped or not
    k_in, w_in = k_all[inside], w_all[inside]
    if k_in.size == 0:
        raise BoundaryViolation(f"no kernel weight falls inside the sample for t0={t0}")
    return Weights(k_in, w_in / math.fsum(w_in), t0, N, renormalized=True)
