"""Scenario files: YAML documents validated against a JSON schema.

Powers are given in dBm (noise, circuit power, budget) and the SINR target in
dB; they are converted to watts / linear once, here.  Example::

    mode: multi
    users: {count: 2, seed: 7, drops: 10}
    system: {power_budget_dbm: 30, n_pas: 3}
    beta: {start: 0.0, stop: 1.0, step: 0.05}
    baseline: true
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np
import yaml

from .errors import ConfigInvalid
from .model import SystemParams, db_to_linear, dbm_to_watt
from .multi_user import PsoConfig

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_scalar_or_list = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["single", "multi"]},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "carrier_frequency_hz": _pos,
                "n_eff": _pos,
                "noise_power_dbm": _scalar_or_list,
                "fixed_circuit_power_dbm": _num,
                "rate_power_coeff": {"type": "number", "minimum": 0},
                "power_budget_dbm": _num,
                "sinr_threshold_db": _scalar_or_list,
                "min_spacing_m": _pos,
                "region_x_m": _pos,
                "region_y_m": _pos,
                "height_m": _pos,
                "n_waveguides": _int1,
                "n_pas": _int1,
            },
        },
        "users": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": _int1,
                "positions": {
                    "type": "array",
                    "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                },
                "seed": {"type": "integer", "minimum": 0},
                "drops": _int1,
            },
        },
        "beta": {
            "oneOf": [
                {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["step"],
                    "properties": {
                        "start": {"type": "number", "minimum": 0, "maximum": 1},
                        "stop": {"type": "number", "minimum": 0, "maximum": 1},
                        "step": _pos,
                    },
                },
            ]
        },
        "pso": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "particles": _int1,
                "iterations": _int1,
                "inertia": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "cognitive": {"type": "number", "minimum": 0},
                "social": {"type": "number", "minimum": 0},
                "tau": _pos,
                "velocity_clamp": _pos,
                "tol": _pos,
                "max_sweeps": _int1,
                "stall_iterations": _int1,
            },
        },
        "algorithm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"enum": [1, 2]},
                "sca_tol": _pos,
                "bcd_tol": _pos,
                "max_outer": _int1,
                "consolidate": {"type": "boolean"},
            },
        },
        "baseline": {"type": "boolean"},
        "workers": _int1,
        "output_dir": {"type": "string"},
    },
}

_SYSTEM_KEYS = {
    "carrier_frequency_hz": "carrier_frequency",
    "n_eff": "n_eff",
    "rate_power_coeff": "rate_power_coeff",
    "min_spacing_m": "min_spacing",
    "region_x_m": "region_x",
    "region_y_m": "region_y",
    "height_m": "height",
    "n_waveguides": "n_waveguides",
    "n_pas": "n_pas",
}


def beta_grid(start: float = 0.0, stop: float = 1.0, step: float = 0.05) -> List[float]:
    """Inclusive grid start, start + step, ..., stop (rounded to kill drift)."""
    if step <= 0:
        raise ConfigInvalid("beta step must be > 0")
    n = int(np.floor((stop - start) / step + 1e-9))
    vals = [round(start + i * step, 12) for i in range(n + 1)]
    if stop - vals[-1] > 1e-9:
        vals.append(stop)
    return vals


@dataclass
class ScenarioConfig:
    params: SystemParams = field(default_factory=SystemParams)
    mode: str = "multi"
    K: int = 2
    positions: Optional[np.ndarray] = None
    seed: int = 0
    drops: int = 1
    betas: List[float] = field(default_factory=beta_grid)
    pso: PsoConfig = field(default_factory=PsoConfig)
    order: int = 1
    sca_tol: float = 1e-6
    bcd_tol: float = 1e-6
    max_outer: int = 50
    consolidate: bool = True
    baseline: bool = False
    workers: int = 1
    output_dir: str = "out"

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        p = self.params
        return {
            "mode": self.mode, "K": self.K, "seed": self.seed, "drops": self.drops,
            "positions": None if self.positions is None else np.asarray(self.positions).tolist(),
            "betas": list(self.betas), "order": self.order, "sca_tol": self.sca_tol,
            "bcd_tol": self.bcd_tol, "max_outer": self.max_outer, "consolidate": self.consolidate,
            "baseline": self.baseline, "workers": self.workers,
            "pso": dict(vars(self.pso)),
            "system": {
                "carrier_frequency": p.carrier_frequency, "n_eff": p.n_eff,
                "noise_power": p.noise_power, "fixed_circuit_power": p.fixed_circuit_power,
                "rate_power_coeff": p.rate_power_coeff, "power_budget": p.power_budget,
                "sinr_threshold": p.sinr_threshold, "min_spacing": p.min_spacing,
                "region_x": p.region_x, "region_y": p.region_y, "height": p.height,
                "n_waveguides": p.n_waveguides, "n_pas": p.n_pas,
            },
        }


def parse_config(doc: Optional[dict]) -> ScenarioConfig:
    """Validate a parsed document and build a :class:`ScenarioConfig`."""
    doc = {} if doc is None else doc
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    sysd = doc.get("system", {})
    kw = {_SYSTEM_KEYS[k]: v for k, v in sysd.items() if k in _SYSTEM_KEYS}
    if "noise_power_dbm" in sysd:
        v = dbm_to_watt(sysd["noise_power_dbm"])
        kw["noise_power"] = float(v) if np.ndim(v) == 0 else tuple(v.tolist())
    if "fixed_circuit_power_dbm" in sysd:
        kw["fixed_circuit_power"] = float(dbm_to_watt(sysd["fixed_circuit_power_dbm"]))
    if "power_budget_dbm" in sysd:
        kw["power_budget"] = float(dbm_to_watt(sysd["power_budget_dbm"]))
    if "sinr_threshold_db" in sysd:
        v = db_to_linear(sysd["sinr_threshold_db"])
        kw["sinr_threshold"] = float(v) if np.ndim(v) == 0 else tuple(v.tolist())
    try:
        params = SystemParams(**kw)
        pso = PsoConfig(**doc.get("pso", {}))
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None

    mode = doc.get("mode", "multi")
    users = doc.get("users", {})
    positions = None
    if "positions" in users:
        positions = np.asarray(users["positions"], dtype=float)
        if positions.size == 0:
            positions = None
    K = int(users.get("count", len(positions) if positions is not None else (1 if mode == "single" else 2)))
    if positions is not None and len(positions) != K:
        raise ConfigInvalid(f"users.count = {K} but {len(positions)} positions given")
    if positions is not None and np.any((positions < 0) | (positions > [params.region_x, params.region_y])):
        raise ConfigInvalid("explicit user positions must lie inside the region")
    if mode == "single" and K != 1:
        raise ConfigInvalid("single-user mode needs exactly one user")
    if mode == "multi" and K > params.n_waveguides:
        raise ConfigInvalid(f"ZF needs K <= M (K={K}, M={params.n_waveguides})")

    beta = doc.get("beta", {"step": 0.05})
    betas = sorted(set(beta)) if isinstance(beta, list) else beta_grid(
        beta.get("start", 0.0), beta.get("stop", 1.0), beta["step"])
    algo = doc.get("algorithm", {})
    return ScenarioConfig(
        params=params, mode=mode, K=K, positions=positions,
        seed=int(users.get("seed", 0)), drops=int(users.get("drops", 1)),
        betas=[float(b) for b in betas], pso=pso, order=int(algo.get("order", 1)),
        sca_tol=float(algo.get("sca_tol", 1e-6)), bcd_tol=float(algo.get("bcd_tol", 1e-6)),
        max_outer=int(algo.get("max_outer", 50)), consolidate=bool(algo.get("consolidate", True)),
        baseline=bool(doc.get("baseline", False)), workers=int(doc.get("workers", 1)),
        output_dir=str(doc.get("output_dir", "out")),
    )


def load_config(path) -> ScenarioConfig:
    """Read and validate a YAML scenario file."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigInvalid("top level of a scenario file must be a mapping")
    return parse_config(doc)
