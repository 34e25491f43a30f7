"""Run configuration: flat key-value files with dotted sections, parsed into
a typed RunConfig and from there into executable scenarios.

Format: one ``key = value`` assignment per line, ``#`` comments, values in
JSON syntax (numbers, strings, lists) with bare words accepted as strings.
Scenarios have around fifteen parameters, so a diffable file stored next to
the outputs beats positional flags.

Recognized keys
---------------
* ``dim``, ``T``, ``mu0`` (rows ``[x0, .., x{d-1}, w]``), optional ``nu0``
* ``mvf.kind`` = ``lipschitz_field`` | ``barycenter`` | ``broken_marginal``
  with ``mvf.cs`` and, for fields, ``mvf.v.kind`` = ``constant`` | ``affine``
  (``mvf.v.value`` resp. ``mvf.v.scale`` / ``mvf.v.offset``); the field's
  Lipschitz constant is inferred from the spec and can be overridden with
  ``mvf.lip``.
* ``c.kind`` = ``none`` | ``constant`` | ``affine`` | ``mass_coupled`` with
  ``c.kappa`` / ``c.offset`` / ``c.slope`` / ``c.bound`` / ``c.lip``
* ``s.kind`` = ``none`` | ``fixed`` | ``scaled`` with ``s.atoms`` and
  optional ``s.radius`` / ``s.lip`` overrides
* numerics: ``n``, ``n_list``, ``probe_times``, ``seed``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .measures import DiscreteMeasure
from .mvf import (GrowthFunction, MeasureVectorField, SourceOperator,
                  affine_growth, barycenter_mvf, broken_marginal_mvf,
                  constant_growth, fixed_source, lipschitz_field_mvf,
                  mass_coupled_growth, scaled_source)
from .scheme import Scenario

__all__ = ["RunConfig", "parse_config_text", "load_config"]


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a flat dict; errors carry line numbers."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = json.loads(val)
        except json.JSONDecodeError:
            values[key] = val  # bare word
    return values


def _atoms_to_measure(rows, dim: int, where: str) -> DiscreteMeasure:
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected rows [x0..x{dim - 1}, w]") from exc
    if arr.ndim != 2 or arr.shape[1] != dim + 1:
        raise ConfigError(f"{where}: rows must have {dim + 1} entries [x.., w]")
    return DiscreteMeasure(dim, arr[:, :dim], arr[:, dim])


@dataclass(frozen=True)
class RunConfig:
    """Typed view of one configuration file."""

    raw: dict
    name: str
    dim: int
    horizon: float
    mu0: DiscreteMeasure
    nu0: DiscreteMeasure | None
    n: int
    n_list: tuple
    probe_times: tuple
    seed: int
    certify_samples: int = 100

    def require_nu0(self) -> DiscreteMeasure:
        if self.nu0 is None:
            raise ConfigError("this command needs a 'nu0' entry (perturbed data)")
        return self.nu0

    # -- component builders -----------------------------------------------
    def build_mvf(self) -> MeasureVectorField:
        kind = self.raw.get("mvf.kind")
        if kind == "barycenter":
            if self.dim != 1:
                raise ConfigError("the barycenter field is one-dimensional")
            return barycenter_mvf()
        if kind == "broken_marginal":
            return broken_marginal_mvf(float(self.raw.get("mvf.cs", 1.0)))
        if kind != "lipschitz_field":
            raise ConfigError(f"unknown mvf.kind {kind!r}")
        if "mvf.cs" not in self.raw:
            raise ConfigError("lipschitz_field requires a declared 'mvf.cs'")
        c_s = float(self.raw["mvf.cs"])
        vkind = self.raw.get("mvf.v.kind")
        if vkind == "constant":
            value = np.atleast_1d(np.asarray(self.raw.get("mvf.v.value", 0.0),
                                             dtype=float))
            if value.size == 1:
                value = np.full(self.dim, float(value[0]))
            if value.size != self.dim:
                raise ConfigError("mvf.v.value must have one entry per dimension")
            fieldfn = lambda pts, v=value: np.broadcast_to(v, pts.shape).copy()
            lip = 0.0
        elif vkind == "affine":
            scale = np.atleast_1d(np.asarray(self.raw.get("mvf.v.scale", 0.0),
                                             dtype=float))
            if scale.size == 1:
                scale = np.full(self.dim, float(scale[0]))
            offset = np.atleast_1d(np.asarray(self.raw.get("mvf.v.offset", 0.0),
                                              dtype=float))
            if offset.size == 1:
                offset = np.full(self.dim, float(offset[0]))
            if scale.size != self.dim or offset.size != self.dim:
                raise ConfigError("mvf.v.scale/offset must match the dimension")
            fieldfn = lambda pts, a=scale, b=offset: pts * a + b
            lip = float(np.max(np.abs(scale)))
        else:
            raise ConfigError(f"unknown mvf.v.kind {vkind!r}")
        lip = float(self.raw.get("mvf.lip", lip))
        return lipschitz_field_mvf(fieldfn, lip, c_s)

    def build_growth(self) -> GrowthFunction | None:
        kind = self.raw.get("c.kind", "none")
        if kind == "none":
            return None
        if kind == "constant":
            return constant_growth(float(self.raw["c.kappa"]))
        if kind == "affine":
            if "c.bound" not in self.raw:
                raise ConfigError("affine growth requires a declared 'c.bound'")
            slope = np.atleast_1d(np.asarray(self.raw.get("c.slope", 0.0), dtype=float))
            if slope.size == 1:
                slope = np.full(self.dim, float(slope[0]))
            return affine_growth(float(self.raw.get("c.offset", 0.0)), slope,
                                 float(self.raw["c.bound"]))
        if kind == "mass_coupled":
            if "c.bound" not in self.raw:
                raise ConfigError("mass_coupled growth requires a declared 'c.bound'")
            return mass_coupled_growth(float(self.raw["c.kappa"]),
                                       float(self.raw["c.bound"]))
        raise ConfigError(f"unknown c.kind {kind!r}")

    def build_source(self) -> SourceOperator | None:
        kind = self.raw.get("s.kind", "none")
        if kind == "none":
            return None
        sigma = _atoms_to_measure(self.raw.get("s.atoms"), self.dim, "s.atoms")
        radius = self.raw.get("s.radius")
        radius = None if radius is None else float(radius)
        if kind == "fixed":
            return fixed_source(sigma, radius)
        if kind == "scaled":
            src = scaled_source(sigma, radius)
            if "s.lip" in self.raw:
                src = SourceOperator(src.name, float(self.raw["s.lip"]), src.radius,
                                     src._fn)
            return src
        raise ConfigError(f"unknown s.kind {kind!r}")

    def build_scenario(self) -> Scenario:
        return Scenario(name=self.name, mvf=self.build_mvf(),
                        growth=self.build_growth(), source=self.build_source(),
                        mu0=self.mu0, horizon=self.horizon)


def _as_int_list(val, key: str) -> tuple:
    if isinstance(val, (int, float)):
        val = [val]
    try:
        out = tuple(int(v) for v in val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a list of integers") from exc
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{key} must be strictly ascending")
    return out


def from_values(values: dict, name: str = "run") -> RunConfig:
    """Build a RunConfig from parsed key-value pairs."""
    for key in ("dim", "T", "mu0", "mvf.kind"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    dim = int(values["dim"])
    if dim < 1:
        raise ConfigError("dim must be a positive integer")
    horizon = float(values["T"])
    mu0 = _atoms_to_measure(values["mu0"], dim, "mu0")
    nu0 = None
    if "nu0" in values:
        nu0 = _atoms_to_measure(values["nu0"], dim, "nu0")
    n = int(values.get("n", 8))
    n_list = _as_int_list(values.get("n_list", [n]), "n_list")
    probes = values.get("probe_times", [horizon])
    if isinstance(probes, (int, float)):
        probes = [probes]
    probe_times = tuple(float(t) for t in probes)
    if any(t < 0 or t > horizon + 1e-12 for t in probe_times):
        raise ConfigError("probe_times must lie in [0, T]")
    cfg = RunConfig(raw=dict(values), name=str(values.get("name", name)), dim=dim,
                    horizon=horizon, mu0=mu0, nu0=nu0, n=n, n_list=n_list,
                    probe_times=probe_times, seed=int(values.get("seed", 0)),
                    certify_samples=int(values.get("certify_samples", 100)))
    cfg.build_scenario()  # fail early on bad component specs
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    import os
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return from_values(parse_config_text(text), name=name)
