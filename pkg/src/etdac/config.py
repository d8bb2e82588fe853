"""Run configuration: defaults, JSON files, flag overrides, object builders.

A config is a plain dict with the keys below; a JSON file supplies some of
them and every CLI flag overrides the corresponding key.  Builders turn the
resolved dict into mesh, potential, plan, scheme, and initial field.

Random initial data uses numpy's seedable, platform-independent PCG64
generator, mapped uniformly into (-beta + delta, beta - delta) with
delta = 1e-12, then scaled by the configured amplitude fraction.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .grid import Field, Mesh2D, read_field_csv
from .potentials import FloryHuggins, GinzburgLandau
from .scheme import NODE_KINDS, make_scheme
from .spectral import SpectralPlan
from .stepper import StepContext

__all__ = ["ConfigError", "default_config", "load_config", "resolve_config", "validate_config",
           "build_potential", "build_mesh", "build_plan", "build_context", "initial_field"]

RANDOM_MARGIN = 1e-12


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


def default_config() -> dict:
    return {
        "lx": 2.0 * math.pi,
        "ly": 2.0 * math.pi,
        "nx": 128,
        "ny": 128,
        "eps": 0.1,
        "potential": {"kind": "gl"},
        "kappa": None,
        "order": 2,
        "nodes": "uniform",
        "rescaled": True,
        "tau": 0.1,
        "t_end": 2.0,
        "init": {"kind": "sinprod", "amplitude": 0.5},
        "out": "out",
    }


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def resolve_config(args) -> dict:
    """defaults <- config file <- individual flags <- --paper-scale."""
    cfg = default_config()
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, val in file_cfg.items():
            if key in ("potential", "init") and isinstance(val, dict):
                cfg[key] = dict(val)
            else:
                cfg[key] = val

    if getattr(args, "order", None) is not None:
        cfg["order"] = args.order
    if getattr(args, "rescaled", None) is not None:
        cfg["rescaled"] = args.rescaled
    if getattr(args, "tau", None) is not None:
        cfg["tau"] = args.tau
    if getattr(args, "t_end", None) is not None:
        cfg["t_end"] = args.t_end
    if getattr(args, "grid", None) is not None:
        cfg["nx"] = cfg["ny"] = args.grid
    if getattr(args, "eps", None) is not None:
        cfg["eps"] = args.eps
    if getattr(args, "potential", None) is not None:
        cfg["potential"] = {"kind": args.potential}
    if getattr(args, "theta", None) is not None:
        cfg["potential"]["theta"] = args.theta
    if getattr(args, "theta_c", None) is not None:
        cfg["potential"]["theta_c"] = args.theta_c
    if getattr(args, "kappa", None) is not None:
        cfg["kappa"] = args.kappa
    if getattr(args, "nodes", None) is not None:
        cfg["nodes"] = args.nodes
    if getattr(args, "seed", None) is not None:
        init = dict(cfg["init"])
        if init.get("kind") != "random":
            init = {"kind": "random", "amplitude": 1.0}
        init["seed"] = args.seed
        cfg["init"] = init
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    if getattr(args, "paper_scale", False):
        cfg["nx"] = cfg["ny"] = 512

    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if cfg["nx"] < 2 or cfg["ny"] < 2 or cfg["nx"] != int(cfg["nx"]) or cfg["ny"] != int(cfg["ny"]):
        raise ConfigError("grid sizes must be integers >= 2")
    if not (cfg["lx"] > 0 and cfg["ly"] > 0):
        raise ConfigError("domain edge lengths must be positive")
    if cfg["eps"] <= 0:
        raise ConfigError("eps must be positive")
    if cfg["order"] < 1 or cfg["order"] != int(cfg["order"]):
        raise ConfigError("order must be an integer >= 1")
    if cfg["nodes"] not in NODE_KINDS:
        raise ConfigError(f"nodes must be one of {NODE_KINDS}")
    if cfg["tau"] <= 0:
        raise ConfigError("tau must be positive")
    if cfg["t_end"] < 0:
        raise ConfigError("t_end must be nonnegative")
    pot = cfg["potential"]
    if not isinstance(pot, dict) or pot.get("kind") not in ("gl", "fh"):
        raise ConfigError('potential must be {"kind": "gl"} or {"kind": "fh", ...}')
    init = cfg["init"]
    if not isinstance(init, dict) or init.get("kind") not in ("sinprod", "random", "csv"):
        raise ConfigError('init kind must be "sinprod", "random", or "csv"')
    if init["kind"] == "random" and "seed" not in init:
        raise ConfigError("random init requires a seed")
    if init["kind"] == "csv" and "path" not in init:
        raise ConfigError("csv init requires a path")


def build_potential(cfg: dict):
    pot = cfg["potential"]
    if pot["kind"] == "gl":
        return GinzburgLandau()
    try:
        return FloryHuggins(pot.get("theta", 0.8), pot.get("theta_c", 1.6))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_mesh(cfg: dict) -> Mesh2D:
    return Mesh2D(cfg["lx"], cfg["ly"], int(cfg["nx"]), int(cfg["ny"]))


def effective_kappa(cfg: dict, potential) -> float:
    """The configured stabilizer; overriding below the minimum is rejected."""
    if cfg["kappa"] is None:
        return potential.kappa_min
    kappa = float(cfg["kappa"])
    if kappa < potential.kappa_min - 1e-12:
        raise ConfigError(
            f"kappa={kappa} is below the potential's minimum stabilizer {potential.kappa_min:.6g}"
        )
    return kappa


def build_plan(cfg: dict, mesh: Mesh2D, potential) -> SpectralPlan:
    return SpectralPlan(mesh, cfg["eps"], effective_kappa(cfg, potential))


def build_context(cfg: dict, plan: SpectralPlan, potential, *, order=None, rescaled=None, tau=None) -> StepContext:
    order = cfg["order"] if order is None else order
    rescaled = cfg["rescaled"] if rescaled is None else rescaled
    tau = cfg["tau"] if tau is None else tau
    spec = make_scheme(int(order), plan.kappa, cfg["nodes"])
    return StepContext(plan, potential, spec, tau, rescaled=rescaled)


def initial_field(cfg: dict, mesh: Mesh2D, potential) -> Field:
    init = cfg["init"]
    if init["kind"] == "sinprod":
        amp = float(init.get("amplitude", 0.5))
        x, y = mesh.cell_centers()
        return Field(mesh, (amp * np.sin(x) * np.sin(y)).reshape(mesh.ncells))
    if init["kind"] == "random":
        amp = float(init.get("amplitude", 1.0))
        hi = amp * (potential.beta - RANDOM_MARGIN)
        rng = np.random.default_rng(int(init["seed"]))
        return Field(mesh, rng.uniform(-hi, hi, mesh.ncells))
    return read_field_csv(mesh, init["path"])
