"""Run configuration as plain ``key = value`` text.

Grammar: one assignment per line; ``#`` starts a comment; blank lines are
ignored; keys are case-sensitive and must be known.  Values:

=================  ==========================================  ===========
key                value                                       default
=================  ==========================================  ===========
kernel             kernel spec (``linear``, ``family:...``)    linear
N                  basis degree                                6
delta              float or ``default`` (= |gap|/16)           default
initial            ``zero`` | ``gap-eigvec`` | ``random(k)``   gap-eigvec
                   | ``product-gaussian(s1,s2,s3)``
scale              initial norm as a multiple of delta         1
t_end              time horizon                                15
dt_out             uniform output spacing                      0.0625
geometric_start    first point of the geometric grid           0.001
dt                 initial integrator step                      0.0625
tol                step-halving tolerance on theta             1e-8
picard_window      Picard window length                        1
picard_dt          Picard quadrature step                      0.015625
picard_tol         Picard stopping distance                    1e-13
l1                 compute L1 estimates (true/false)           true
l1_stride          evaluate L1 on every k-th grid point        1
output_dir         directory for artifacts                     boltzgap-out
seed               RNG seed for randomized checks              0
=================  ==========================================  ===========

``scale`` is ignored for product-Gaussian data, whose norm is fixed by
the variances.  The environment variable ``BOLTZGAP_OUTPUT_DIR``
overrides ``output_dir``.
"""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .basis import HermiteBasis, StateVector, product_gaussian_state, project_H0

__all__ = ["ConfigError", "RunConfig", "OUTPUT_ENV", "parse_config", "load_config", "initial_state"]

OUTPUT_ENV = "BOLTZGAP_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kernel: str = "linear"
    N: int = 6
    delta: float | None = None
    initial: str = "gap-eigvec"
    scale: float = 1.0
    t_end: float = 15.0
    dt_out: float = 0.0625
    geometric_start: float = 1e-3
    dt: float = 0.0625
    tol: float = 1e-8
    picard_window: float = 1.0
    picard_dt: float = 0.015625
    picard_tol: float = 1e-13
    l1: bool = True
    l1_stride: int = 1
    output_dir: str = "boltzgap-out"
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("N must be at least 2")
        if self.t_end <= 0 or self.dt <= 0 or self.dt_out <= 0 or self.picard_dt <= 0:
            raise ConfigError("times and steps must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.l1_stride < 1:
            raise ConfigError("l1_stride must be >= 1")
        parse_initial(self.initial)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "default"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_INITIAL = re.compile(r"^(zero|gap-eigvec|random\((\d+)\)|product-gaussian\(([^)]*)\))$")


def parse_initial(spec: str) -> tuple:
    m = _INITIAL.match(spec.replace(" ", ""))
    if not m:
        raise ConfigError(f"bad initial condition {spec!r}")
    if m.group(2) is not None:
        return ("random", int(m.group(2)))
    if m.group(3) is not None:
        try:
            s = tuple(float(x) for x in m.group(3).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad variances in {spec!r}") from exc
        if len(s) != 3:
            raise ConfigError("product-gaussian needs three variances")
        return ("product-gaussian", s)
    return (m.group(1),)


def _convert(name: str, kind, raw: str):
    if name == "delta":
        return None if raw == "default" else float(raw)
    if kind in (bool, "bool"):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(raw)
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def parse_config(text: str, **overrides) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, types[key], raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path: str | os.PathLike, **overrides) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


def initial_state(cfg: RunConfig, basis: HermiteBasis, L=None, delta: float | None = None) -> StateVector:
    """Initial perturbation described by ``cfg.initial``.

    ``gap-eigvec`` needs the assembled L.  Norms are ``cfg.scale * delta``.
    """
    kind = parse_initial(cfg.initial)
    radius = cfg.scale * delta if delta is not None else None
    if kind[0] == "zero":
        return StateVector.zeros(basis)
    if kind[0] == "product-gaussian":
        return project_H0(product_gaussian_state(kind[1], basis))
    if kind[0] == "gap-eigvec":
        if L is None:
            raise ConfigError("gap-eigvec initial data needs the assembled operator")
        state = StateVector(basis, L.gap_eigenvector())
    else:
        rng = np.random.default_rng(kind[1])
        Q = basis.projector.complement_basis()
        state = StateVector(basis, Q @ rng.standard_normal(Q.shape[1]))
    return state.scaled_to(radius) if radius is not None else state
