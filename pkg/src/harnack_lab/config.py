"""Flat ``key = value`` scenario files.

Keys are dotted (``manifold.kappa``, ``operator.Lambda``); ``#`` starts a
comment.  Unknown keys are errors so typos do not pass silently.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from . import geometry as geo
from . import harness as HN
from .pucci import Ellipticity, OperatorSpec


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


KEYS = {
    "manifold.dim": int,
    "manifold.kappa": float,
    "operator.kind": str,
    "operator.lambda": float,
    "operator.Lambda": float,
    "grid.h": float,
    "grid.radius": float,
    "cfl": float,
    "horizon": float,
    "frames": int,
    "seed": int,
    "initial.kind": str,
    "initial.offset": float,
    "initial.shift": float,
    "initial.base": float,
    "initial.amplitude": float,
    "initial.width": float,
    "initial.value": float,
    "source.kind": str,
    "source.value": float,
    "harnack.R": float,
    "harnack.R0": float,
    "harnack.t0": float,
    "harnack.center": _floats,
    "harnack.mode": str,
    "harnack.p": _floats,
}


def parse_config(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keep operator.lambda and operator.Lambda apart
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    out = {}
    for key, raw in cp["config"].items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            out[key] = KEYS[key](raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return out


def load_config(path) -> dict:
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def scenario_from_config(cfg: dict, grid_scale: float = 1.0) -> HN.HarnackScenario:
    g = cfg.get
    try:
        M = geo.ModelManifold(g("manifold.dim", 2), g("manifold.kappa", 0.0))
        kind = g("operator.kind", "laplacian")
        lam, Lam = g("operator.lambda", 1.0), g("operator.Lambda", 1.0)
        op = OperatorSpec(kind, Ellipticity(lam, Lam))
        ini = HN.InitialData(
            g("initial.kind", "heat_kernel"),
            offset=g("initial.offset", 0.0),
            shift=g("initial.shift", 0.5),
            base=g("initial.base", 0.0),
            amplitude=g("initial.amplitude", 1.0),
            width=g("initial.width", 0.5),
            value=g("initial.value", 1.0),
        )
        src = HN.Source(g("source.kind", "zero"), g("source.value", 0.0))
        return HN.HarnackScenario(
            M,
            op,
            R=g("harnack.R", 1.0),
            R0=g("harnack.R0"),
            center=g("harnack.center", ()),
            t0=g("harnack.t0", 0.0),
            initial=ini,
            source=src,
            h=g("grid.h", 0.1) * grid_scale,
            cfl=g("cfl", 0.4),
            mode=g("harnack.mode", "solve"),
            frames=g("frames", 201),
            seed=g("seed", 0),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
