"""Flat ``dotted.key = value`` run configuration.

Lines starting with ``#`` are comments. Values are typed by the key they
belong to; unknown ``geometry.*`` and ``kernel.*`` keys are passed through to
the geometry generator and kernel factory.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .geometry import KINDS, GeometrySpec
from .reports import digest


class ConfigError(ValueError):
    pass


def parse_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected key = value")
        out[key] = val.strip()
    return out


def _scalar(v: str):
    low = v.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def _floats(v) -> list:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(";", ",").split(",") if x.strip()]


@dataclass
class RunConfig:
    geometry: GeometrySpec = field(default_factory=lambda: GeometrySpec("line"))
    cloud: str | None = None
    dim: float = 1.0
    kernel: str = "riesz-grad"
    kernel_params: dict = field(default_factory=dict)
    kappa: float = 1.0
    depth: int = 5
    c_assign: float = 8.0
    truncation_radius: float | None = None
    eps_min: float | None = None
    p: float = 2.0
    hp_p: float = 0.8
    p_list: list = field(default_factory=lambda: [1.5, 2.0, 3.0, 4.0])
    radii: list = field(default_factory=lambda: [0.1, 0.2, 0.4])
    family: list = field(default_factory=lambda: ["indicators", "signs", "bumps"])
    n_signs: int = 64
    n_bumps: int = 16
    atoms: int = 32
    C0: float = 20.0
    c0: float = 0.25
    C_A: float = 8.0
    witness: str = "labels"
    eta: float = 0.5
    seed: int = 0
    threads: int | None = None
    output_dir: str = "."

    def validate(self):
        g = self.geometry
        if g.kind != "cantor4" and g.resolution < 16:
            raise ConfigError("geometry.resolution must be at least 16")
        checks = [
            (self.kappa > 0, "experiment.kappa must be positive"),
            (0 <= self.depth <= 16, "lattice.depth must lie in [0, 16]"),
            (self.c_assign > 0, "lattice.c_assign must be positive"),
            (self.truncation_radius is None or self.truncation_radius > 0,
             "cover.truncation_radius must be positive"),
            (self.eps_min is None or self.eps_min > 0, "cover.eps_min must be positive"),
            (self.p > 0, "experiment.p must be positive"),
            (self.hp_p > 0, "experiment.hp_p must be positive"),
            (all(p > 0 for p in self.p_list), "experiment.p_list entries must be positive"),
            (all(r > 0 for r in self.radii), "experiment.radii must be positive"),
            (self.n_signs >= 0 and self.n_bumps >= 0, "family sizes must be >= 0"),
            (self.atoms >= 1, "experiment.atoms must be >= 1"),
            (self.C0 >= 1, "experiment.C0 must be >= 1"),
            (0 < self.c0 <= 1, "experiment.c0 must lie in (0, 1]"),
            (self.C_A > 1, "experiment.C_A must exceed 1"),
            (0 <= self.eta <= 1, "experiment.eta must lie in [0, 1]"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.threads is None or self.threads >= 1, "runtime.threads must be >= 1"),
            (self.dim > 0, "geometry.dim must be positive"),
            (self.witness in ("labels", "full", "half", "lipschitz"),
             "experiment.witness must be labels, full, half or lipschitz"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        bad = set(self.family) - {"indicators", "signs", "bumps", "zero"}
        if bad or not self.family:
            raise ConfigError(f"unknown family members {sorted(bad)}")
        for v in (self.kappa, self.p, self.C0, self.C_A):
            if not math.isfinite(v):
                raise ConfigError("numeric settings must be finite")
        return self

    def to_dict(self) -> dict:
        return {"geometry": self.geometry.to_dict(), "cloud": self.cloud, "dim": self.dim,
                "kernel": self.kernel, "kernel_params": dict(self.kernel_params),
                "kappa": self.kappa, "depth": self.depth, "c_assign": self.c_assign,
                "truncation_radius": self.truncation_radius, "eps_min": self.eps_min,
                "p": self.p, "hp_p": self.hp_p, "p_list": list(self.p_list), "radii": list(self.radii),
                "family": list(self.family), "n_signs": self.n_signs, "n_bumps": self.n_bumps,
                "atoms": self.atoms, "C0": self.C0, "c0": self.c0, "C_A": self.C_A,
                "witness": self.witness, "eta": self.eta, "seed": self.seed,
                "threads": self.threads, "output_dir": self.output_dir}

    def geometry_digest(self) -> str:
        return digest(self.geometry.to_dict())

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        return digest(d)


_KEYS = {
    "experiment.kappa": ("kappa", float), "experiment.p": ("p", float),
    "experiment.hp_p": ("hp_p", float),
    "experiment.p_list": ("p_list", _floats), "experiment.radii": ("radii", _floats),
    "experiment.signs": ("n_signs", int), "experiment.bumps": ("n_bumps", int),
    "experiment.atoms": ("atoms", int), "experiment.C0": ("C0", float),
    "experiment.c0": ("c0", float), "experiment.C_A": ("C_A", float),
    "experiment.witness": ("witness", str), "experiment.eta": ("eta", float),
    "experiment.family": ("family", lambda v: [s.strip() for s in str(v).split(",") if s.strip()]),
    "experiment.seed": ("seed", int), "seed": ("seed", int),
    "lattice.depth": ("depth", int), "lattice.c_assign": ("c_assign", float),
    "cover.truncation_radius": ("truncation_radius", float),
    "cover.eps_min": ("eps_min", float),
    "runtime.threads": ("threads", int), "output.dir": ("output_dir", str),
    "geometry.cloud": ("cloud", str), "geometry.dim": ("dim", float),
    "kernel.name": ("kernel", str),
}


def from_mapping(values: dict) -> RunConfig:
    cfg = RunConfig()
    gkind, gres, gseed, gparams = "line", 1024, 0, {}
    for key, raw in values.items():
        try:
            if key in _KEYS:
                attr, cast = _KEYS[key]
                setattr(cfg, attr, cast(raw))
            elif key == "geometry.kind":
                gkind = str(raw)
            elif key == "geometry.resolution":
                gres = int(raw)
            elif key == "geometry.seed":
                gseed = int(raw)
            elif key.startswith("geometry."):
                gparams[key.split(".", 1)[1]] = _scalar(str(raw))
            elif key.startswith("kernel."):
                cfg.kernel_params[key.split(".", 1)[1]] = _scalar(str(raw))
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if gkind not in KINDS:
        raise ConfigError(f"unknown geometry kind {gkind!r}")
    cfg.geometry = GeometrySpec(gkind, gparams, gres, gseed)
    return cfg


def load(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            values.update(parse_text(fh.read()))
    values.update(overrides or {})
    return from_mapping(values).validate()
