"""Scenario configuration: the JSON schema, the shipped catalog, and the
construction of runtime objects (actions, samplings, probes, Hamiltonians)
from a validated config."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .actions import (free_particle_action, heisenberg_weyl_action,
                      metaplectic_action, oscillator_action, so2_rotor_action,
                      translations_r2_action)
from .dynamics import (ClassicalState, cubic_perturbed_spec,
                       quadratic_hamiltonian_spec)
from .errors import ConfigError
from .fiber import DimConfig
from .gauge import (GaugeBundle, action_shift_gauge, phase_shift_gauge,
                    u1_phase_gauge)
from .groups import LieGroup, builtin_group_ids, get_group, register_group
from .sections import LatticeAxis, OrbitSampling

__all__ = ["Scenario", "load_scenario", "catalog_names", "SEED_ENV_VAR"]

SEED_ENV_VAR = "SCBUNDLE_SEED"

_ACTION_BUILDERS = {
    "oscillator": oscillator_action,
    "free-particle": free_particle_action,
    "heisenberg-weyl": heisenberg_weyl_action,
    "translations-r2": translations_r2_action,
    "so2-rotor": so2_rotor_action,
    "metaplectic": metaplectic_action,
}

_GAUGE_BUILDERS = {
    "u1_phase": u1_phase_gauge,
    "action_shift": action_shift_gauge,
    "phase_shift": phase_shift_gauge,
}

_KNOWN_SUITES = {"lie", "dynamics", "sections", "generators",
                 "reconstruction", "gauge"}


@dataclass
class Scenario:
    """Validated scenario configuration."""

    name: str
    group_id: str
    action_name: Optional[str]
    gauge_id: Optional[str]
    hamiltonian: Optional[dict]
    fiber: DimConfig
    anchor: ClassicalState
    lattice: list
    generator_lattice: Optional[list]
    numerics: dict
    probes: dict
    kernel_radius: Optional[list]
    suites: list
    strict_group_law: bool
    dynamics: dict
    gauge_cfg: dict
    eps_list: list
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def seed(self) -> int:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            return int(env)
        return int(self.numerics.get("seed", 1234))

    @property
    def dt(self) -> float:
        return float(self.numerics.get("dt", 1e-3))

    @property
    def fd_tau(self) -> float:
        return float(self.numerics.get("fd_tau", 1e-3))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def grid(self) -> np.ndarray:
        g = self.numerics.get("grid", {"lo": -16.0, "hi": 16.0, "points": 8192})
        return np.linspace(float(g["lo"]), float(g["hi"]), int(g["points"]))

    # -- runtime objects ----------------------------------------------------

    def build_action(self, drift: bool = False):
        if self.action_name is None:
            raise ConfigError(f"scenario {self.name!r} declares no bundle action")
        builder = _ACTION_BUILDERS[self.action_name]
        if self.action_name == "metaplectic":
            return builder(self.fiber, drift=drift)
        return builder(self.fiber)

    def build_gauge(self):
        if self.gauge_id is None:
            raise ConfigError(f"scenario {self.name!r} declares no gauge group")
        return _GAUGE_BUILDERS[self.gauge_id]()

    def _axes(self, spec_list) -> list:
        axes = []
        for item in spec_list:
            if item["kind"] == "line":
                axes.append(LatticeAxis.line(float(item["spacing"]),
                                             int(item["lo"]), int(item["hi"])))
            elif item["kind"] == "cycle":
                axes.append(LatticeAxis.cycle(2 * np.pi, int(item["count"])))
            else:
                raise ConfigError(f"unknown lattice axis kind {item['kind']!r}")
        return axes

    def build_sampling(self, action, generator_scale: bool = False) -> OrbitSampling:
        spec_list = self.lattice
        if generator_scale and self.generator_lattice is not None:
            spec_list = self.generator_lattice
        return OrbitSampling(action, self.anchor, self._axes(spec_list))

    def build_hamiltonian(self):
        if self.hamiltonian is None:
            raise ConfigError(f"scenario {self.name!r} declares no Hamiltonian")
        kind = self.hamiltonian["kind"]
        if kind == "quadratic":
            omega2 = float(self.hamiltonian.get("omega2", 1.0))
            return quadratic_hamiltonian_spec([[omega2]])
        if kind == "cubic-perturbed":
            return cubic_perturbed_spec(float(self.hamiltonian.get("omega2", 1.0)),
                                        float(self.hamiltonian.get("cubic", 0.1)))
        raise ConfigError(f"unknown Hamiltonian kind {kind!r}")

    def build_gauge_bundle(self) -> GaugeBundle:
        _, family = self.build_action(drift=True)
        cfg = self.gauge_cfg
        return GaugeBundle(
            family, self.build_gauge(), self.anchor,
            theta_nodes=int(cfg.get("theta_nodes", 48)),
            gauge_step=np.pi / int(cfg.get("gauge_step_divisor", 8)),
            gauge_window=int(cfg.get("gauge_window", 10)))


def _validate(cfg: dict, origin: str) -> Scenario:
    def need(key):
        if key not in cfg:
            raise ConfigError(f"{origin}: missing required field {key!r}")
        return cfg[key]

    name = str(need("name"))
    group_def = cfg.get("group_def")
    if group_def is not None:
        _register_from_config(group_def)
    group_id = str(need("group_id"))
    try:
        get_group(group_id)
    except Exception as err:
        raise ConfigError(f"{origin}: group {group_id!r} not registered "
                          f"(built-ins: {builtin_group_ids()})") from err

    gauge_id = cfg.get("gauge_id")
    if gauge_id is not None and gauge_id not in _GAUGE_BUILDERS:
        raise ConfigError(f"{origin}: unknown gauge {gauge_id!r}")

    fiber_cfg = need("fiber")
    n_cut = int(fiber_cfg.get("n_cut", 0))
    if n_cut < 4:
        raise ConfigError(f"{origin}: n_cut must be at least 4, got {n_cut}")
    fiber = DimConfig(int(fiber_cfg.get("n", 1)), n_cut)

    numerics = dict(cfg.get("numerics", {}))
    for key in ("dt", "fd_tau"):
        if key in numerics and not float(numerics[key]) > 0:
            raise ConfigError(f"{origin}: numerics.{key} must be positive")

    suites = list(cfg.get("suites", []))
    unknown = set(suites) - _KNOWN_SUITES
    if unknown:
        raise ConfigError(f"{origin}: unknown suites {sorted(unknown)}")

    action_name = cfg.get("action")
    if action_name is not None and action_name not in _ACTION_BUILDERS:
        raise ConfigError(f"{origin}: unknown action {action_name!r}")

    anchor_cfg = cfg.get("anchor", {"S": 0.0, "P": [0.0], "Q": [1.0]})
    anchor = ClassicalState(float(anchor_cfg["S"]),
                            np.asarray(anchor_cfg["P"], dtype=float),
                            np.asarray(anchor_cfg["Q"], dtype=float))

    return Scenario(
        name=name,
        group_id=group_id,
        action_name=action_name,
        gauge_id=gauge_id,
        hamiltonian=cfg.get("hamiltonian"),
        fiber=fiber,
        anchor=anchor,
        lattice=list(cfg.get("lattice", [])),
        generator_lattice=cfg.get("generator_lattice"),
        numerics=numerics,
        probes=dict(cfg.get("probes", {})),
        kernel_radius=cfg.get("kernel_radius"),
        suites=suites,
        strict_group_law=bool(cfg.get("strict_group_law", False)),
        dynamics=dict(cfg.get("dynamics", {})),
        gauge_cfg=dict(cfg.get("gauge", {})),
        eps_list=[float(e) for e in cfg.get("eps_list", [])],
        raw=cfg,
    )


def _register_from_config(group_def: dict) -> None:
    """Consume the group-registration schema: basis matrices as row-major
    arrays, a group id, and the factorization domain radius."""
    group_id = str(group_def["group_id"])
    try:
        get_group(group_id)
        return    # already registered
    except Exception:
        pass
    dim = int(group_def["rep_dim"])
    rows = group_def["basis"]
    basis = np.array([np.asarray(b, dtype=float).reshape(dim, dim) for b in rows])
    radius = float(group_def.get("factorization_radius", 1.0))
    register_group(LieGroup(group_id, basis, factorization_radius=radius))


def catalog_names() -> tuple:
    files = resources.files("scbundle").joinpath("scenarios")
    return tuple(sorted(p.name[:-5] for p in files.iterdir()
                        if p.name.endswith(".json")))


def load_scenario(spec: str) -> Scenario:
    """Load a scenario from a config path or from the shipped catalog."""
    path = Path(spec)
    if path.exists():
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{spec}: invalid JSON ({err})") from err
        return _validate(cfg, str(path))
    files = resources.files("scbundle").joinpath("scenarios")
    candidate = files.joinpath(spec + ".json")
    if candidate.is_file():
        cfg = json.loads(candidate.read_text())
        return _validate(cfg, spec)
    raise ConfigError(
        f"no such scenario config: {spec!r} (catalog: {catalog_names()})")
