"""Bundled example configuration and data collection helpers."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .trajectory import (ConfigError, ConstraintSets, LpvPlant, Trajectory, constraints_from_dict,
                         generate_excitation, load_config, plant_from_dict, simulate)

BUNDLED = ("double_integrator",)


def bundled_config(name: str = "double_integrator") -> dict:
    if name not in BUNDLED:
        raise ConfigError(f"unknown bundled config {name!r}; available: {', '.join(BUNDLED)}")
    text = resources.files("lpv_rci").joinpath("data", f"{name}.json").read_text()
    return json.loads(text)


def resolve_config(ref: str | Path | None) -> dict:
    """A bundled config by name, or a JSON file by path (``None`` gives the default)."""
    if ref is None:
        return bundled_config()
    if str(ref) in BUNDLED:
        return bundled_config(str(ref))
    return load_config(ref)


@dataclass
class Setup:
    config: dict
    plant: LpvPlant | None
    constraints: ConstraintSets

    def C(self, nc: int | None = None) -> np.ndarray:
        presets = self.config.get("C_presets", {})
        key = str(nc if nc is not None else self.config.get("default_nc", ""))
        if key not in presets:
            if nc is None and "C" in self.config:
                return np.array(self.config["C"], dtype=float)
            raise ConfigError(f"no C preset for n_c={key}; available: {sorted(presets)}")
        return np.array(presets[key], dtype=float)

    @property
    def excitation(self) -> dict:
        return self.config.get("excitation", {})

    def collect(self, T: int | None = None, seed: int | None = None) -> Trajectory:
        """Excite the plant with uniform inputs, scheduling and disturbances."""
        if self.plant is None:
            raise ConfigError("config has no plant; cannot generate data")
        exc = self.excitation
        T = int(exc.get("T", 20) if T is None else T)
        seed = int(exc.get("seed", 0) if seed is None else seed)
        box = exc.get("input_box", [[-1.0, 1.0]] * self.plant.m)
        x0 = np.asarray(exc.get("x0", np.zeros(self.plant.n)), dtype=float)
        u, p, w = generate_excitation(T, box, self.constraints.scheduling_vertices, seed,
                                      H_w=self.constraints.H_w)
        return simulate(self.plant, x0, u, p, w, self.constraints.scheduling_vertices)


def setup_from_config(cfg: dict) -> Setup:
    plant = plant_from_dict(cfg) if "plant" in cfg else None
    return Setup(cfg, plant, constraints_from_dict(cfg))


def load_setup(ref: str | Path | None = None) -> Setup:
    return setup_from_config(resolve_config(ref))
