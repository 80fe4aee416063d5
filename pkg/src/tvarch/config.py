"""
YAML run configuration.

The file is parsed with ``yaml.safe_load`` (plain data only, no tags that
construct objects).  Grammar, every block optional except ``model``::

    seed: 1                      # base seed, unsigned 64-bit
    model:
      curves:                    # a_0, a_1, ..., a_p
        - {family: sinusoid, coefficients: [2, 1, 0, 1]}
        - {family: polynomial, coefficients: [0.15, 0.05]}
        - {family: piecewise-linear, knots: [0, 1], coefficients: [0.1, 0.2]}
      innovation: {law: gaussian}          # or {law: student-t, df: 10}, {law: two-point}
      regularity: {rho: 0.1, Q: 0.6, nu: 0.3, M: 20, ell: {kind: unit}}
    omega: {rho1: 0.001, rho2: 100}
    kernel: {family: rectangular, bandwidth: 0.2}
    simulate: {N: 4000, mode: stationary-start}
    experiment:
      kind: bias-law
      u0: [0.5]
      N: [4000]
      b: {values: [0.1, 0.2]}              # or {c: 0.8, gamma: 0.4}
      reps: 2000
      distances: [0.05, 0.1, 0.2]          # approximation-rate only
    asymptotics: {u0: 0.5, N: 4000, du: 0.02, mc: {N: 20000, reps: 20}}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import yaml

from tvarch.exceptions import ConfigError
from tvarch.kernel import KernelSpec
from tvarch.model import (
    InnovationLaw,
    LagWeights,
    OmegaSpace,
    ParameterCurve,
    Regularity,
    TvArchSpec,
)

__all__ = [
    "config_digest",
    "load_config",
    "parse_config",
    "parse_experiment",
    "parse_kernel",
    "parse_model",
    "parse_omega",
]


def load_config(path) -> dict:
    """
    Read and parse a YAML file into plain data.

    Raises ``OSError`` if the file cannot be read and :class:`ConfigError` if
    it is not valid YAML or not a mapping.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text)


def parse_config(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at top level")
    return data


def config_digest(cfg: dict) -> str:
    """sha256 of the canonical JSON rendering (sorted keys), so key order in the file is irrelevant."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=str)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def _block(cfg: dict, name: str, required: bool = False) -> dict:
    block = cfg.get(name)
    if block is None:
        if required:
            raise ConfigError(f"missing '{name}' block")
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    return block


def _wrap(fn, what: str, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc


def parse_model(cfg: dict) -> TvArchSpec:
    """Build the model without running the assumption checks (see :func:`tvarch.model.assumption_report`)."""
    model = _block(cfg, "model", required=True)
    curves_raw = model.get("curves")
    if not isinstance(curves_raw, list) or not curves_raw:
        raise ConfigError("model.curves must be a non-empty list")
    curves = []
    for i, c in enumerate(curves_raw):
        if not isinstance(c, dict):
            raise ConfigError(f"model.curves[{i}] must be a mapping")
        extra = set(c) - {"family", "coefficients", "knots"}
        if extra:
            raise ConfigError(f"model.curves[{i}] has unknown keys {sorted(extra)}")
        curves.append(
            _wrap(ParameterCurve, f"curve a_{i}", c.get("family"), tuple(c.get("coefficients") or ()), c.get("knots"))
        )
    inn = model.get("innovation", {"law": "gaussian"})
    if isinstance(inn, str):
        inn = {"law": inn}
    innovation = _wrap(InnovationLaw, "innovation", inn.get("law", "gaussian"), inn.get("df"))
    reg = model.get("regularity")
    if not isinstance(reg, dict):
        raise ConfigError("model.regularity must be a mapping with rho, Q, nu, M")
    ell_raw = reg.get("ell", {"kind": "unit"})
    ell = _wrap(LagWeights, "ell", ell_raw.get("kind", "unit"), ell_raw.get("param"))
    try:
        regularity = Regularity(float(reg["rho"]), float(reg["Q"]), float(reg["nu"]), float(reg["M"]), ell)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad regularity block: {exc}") from exc
    return TvArchSpec(tuple(curves), innovation, regularity)


def parse_omega(cfg: dict, p: int) -> OmegaSpace | None:
    block = _block(cfg, "omega")
    if not block:
        return None
    try:
        return OmegaSpace(p, float(block["rho1"]), float(block["rho2"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad omega block: {exc}") from exc


def parse_kernel(cfg: dict) -> KernelSpec:
    block = _block(cfg, "kernel")
    return _wrap(KernelSpec, "kernel", block.get("family", "rectangular"), float(block.get("bandwidth", 0.1)))


def parse_experiment(cfg: dict, spec: TvArchSpec | None = None, seed: int | None = None):
    """Turn the ``experiment`` block into a :class:`tvarch.montecarlo.ExperimentConfig`."""
    from tvarch.montecarlo import BandwidthRule, ExperimentConfig

    spec = spec or parse_model(cfg)
    block = _block(cfg, "experiment", required=True)
    if "kind" not in block:
        raise ConfigError("experiment.kind is required")
    b = block.get("b")
    rule = None
    if b is not None:
        if not isinstance(b, dict):
            raise ConfigError("experiment.b must be a mapping")
        rule = BandwidthRule(values=b.get("values"), c=b.get("c"), gamma=b.get("gamma"))
    kernel = _block(cfg, "kernel").get("family", "rectangular")
    sim = _block(cfg, "simulate")
    kwargs = dict(
        spec=spec,
        kind=block["kind"],
        u0=tuple(block.get("u0", (0.5,))),
        N=tuple(block.get("N", (sim.get("N", 4000),))),
        b_rule=rule,
        kernel=kernel,
        reps=int(block.get("reps", 100)),
        base_seed=int(seed if seed is not None else cfg.get("seed", 0)),
        omega=parse_omega(cfg, spec.p),
        start_mode=sim.get("mode", "stationary-start"),
    )
    if "distances" in block:
        kwargs["distances"] = tuple(block["distances"])
    return _wrap(ExperimentConfig, "experiment", **kwargs)
