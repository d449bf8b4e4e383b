"""TOML run configuration.

Example::

    coarse_n = 48
    fine_factor = 4
    dirichlet_sides = ["bottom"]
    mu = 0.5
    lam = 1.0
    noise = 0.05
    seed = 0
    snapshot_stride = 500

    [inversion]
    gamma = 0.05
    tau_init = 1e-3

    [[measurement]]
    load = "g1"

    [[measurement]]
    load = "g2"

    [[shape]]
    kind = "disk"
    center = [0.0, 0.0]
    radius = 0.3
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..fem import IsotropicMaterial, get_load
from ..inversion import InversionConfig
from ..mesh import SIDES, ShapeSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


_INVERSION_KEYS = {f.name for f in dataclasses.fields(InversionConfig)} - {"material", "seed"}
_TOP_KEYS = {"coarse_n", "fine_factor", "dirichlet_sides", "mu", "lam", "noise", "seed",
             "snapshot_stride", "out", "inversion", "measurement", "shape"}
_SHAPE_PARAMS = {
    "disk": ("radius",),
    "ellipse": ("a", "b"),
    "rectangle": ("hx", "hy"),
    "bean": ("scale",),
}


@dataclass
class RunConfig:
    coarse_n: int
    material: IsotropicMaterial
    loads: list
    shapes: list = field(default_factory=list)
    fine_factor: int = 4
    dirichlet_sides: tuple = ("bottom",)
    noise: float = 0.0
    seed: int = 0
    snapshot_stride: int = 500
    out: str | None = None
    inversion: InversionConfig = field(default_factory=InversionConfig)

    @property
    def fine_n(self) -> int:
        return self.coarse_n * self.fine_factor


def _require(table, key, where=""):
    if key not in table:
        name = f"{where}.{key}" if where else key
        raise ConfigError(f"missing required key '{name}'", name)
    return table[key]


def _number(value, key, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number", key)
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"'{key}' must be an integer", key)
        return int(value)
    return float(value)


def parse_shape(table: dict, index: int = 0) -> ShapeSpec:
    where = f"shape[{index}]"
    kind = _require(table, "kind", where)
    if kind not in _SHAPE_PARAMS:
        raise ConfigError(f"{where}: unknown kind {kind!r}", f"{where}.kind")
    center = table.get("center", [0.0, 0.0])
    if not isinstance(center, list) or len(center) != 2:
        raise ConfigError(f"{where}.center must be a pair", f"{where}.center")
    center = tuple(_number(c, f"{where}.center") for c in center)
    size = tuple(_number(_require(table, p, where), f"{where}.{p}") for p in _SHAPE_PARAMS[kind])
    angle = _number(table.get("angle", 0.0), f"{where}.angle")
    try:
        return ShapeSpec(kind, center, size, angle)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}", where) from exc


def parse_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document; raises ConfigError naming the bad key."""
    unknown = set(data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}'", key)
    coarse_n = _number(_require(data, "coarse_n"), "coarse_n", int)
    if coarse_n < 2:
        raise ConfigError("coarse_n must be at least 2", "coarse_n")
    mu = _number(_require(data, "mu"), "mu")
    lam = _number(_require(data, "lam"), "lam")
    try:
        material = IsotropicMaterial(mu, lam)
    except ValueError as exc:
        raise ConfigError(str(exc), "lam") from exc

    meas = _require(data, "measurement")
    if not isinstance(meas, list) or not meas:
        raise ConfigError("at least one [[measurement]] table is required", "measurement")
    loads = []
    for i, m in enumerate(meas):
        name = _require(m, "load", f"measurement[{i}]")
        try:
            loads.append(get_load(name))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"measurement[{i}]: unknown load {name!r}", f"measurement[{i}].load") from exc

    shapes = [parse_shape(s, i) for i, s in enumerate(data.get("shape", []))]
    sides = data.get("dirichlet_sides", ["bottom"])
    if isinstance(sides, str):
        sides = [sides]
    if not sides or any(s not in SIDES for s in sides):
        raise ConfigError(f"dirichlet_sides must be a non-empty subset of {SIDES}", "dirichlet_sides")

    inv = dict(data.get("inversion", {}))
    bad = set(inv) - _INVERSION_KEYS
    if bad:
        key = "inversion." + sorted(bad)[0]
        raise ConfigError(f"unknown key '{key}'", key)
    for k in ("n_ref", "max_iterations", "max_rejections"):
        if k in inv:
            inv[k] = _number(inv[k], f"inversion.{k}", int)
    if "refine" in inv and not isinstance(inv["refine"], bool):
        raise ConfigError("'inversion.refine' must be true or false", "inversion.refine")
    for k in sorted(set(inv) - {"n_ref", "max_iterations", "max_rejections", "refine"}):
        inv[k] = _number(inv[k], f"inversion.{k}")
    seed = _number(data.get("seed", 0), "seed", int)
    try:
        inversion = InversionConfig(material=material, seed=seed, **inv)
        noise = _number(data.get("noise", 0.0), "noise")
        if noise < 0:
            raise ValueError("noise must be non-negative")
    except ValueError as exc:
        raise ConfigError(f"invalid inversion settings: {exc}", "inversion") from exc

    fine_factor = _number(data.get("fine_factor", 4), "fine_factor", int)
    if fine_factor < 2:
        raise ConfigError("fine_factor must be at least 2", "fine_factor")
    stride = _number(data.get("snapshot_stride", 500), "snapshot_stride", int)
    if stride < 1:
        raise ConfigError("snapshot_stride must be positive", "snapshot_stride")
    return RunConfig(coarse_n, material, loads, shapes, fine_factor, tuple(sides), noise, seed,
                     stride, data.get("out"), inversion)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
