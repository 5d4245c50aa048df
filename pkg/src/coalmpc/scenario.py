"""Scenario files: YAML documents with a fixed schema (``.scn``)."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .closed_loop import DesignConfig, SwitchConfig
from .game import GameConfig, Profile
from .mpc import MpcConfig
from .partitions import Partition
from .sets import SymBox
from .system import SubsystemModel, SystemModel, discretize_zoh, mass_spring_chain

SECTIONS = {"name", "system", "mpc", "design", "game", "switch", "simulation", "fixed", "labels"}


class ScenarioError(ValueError):
    pass


def _need(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"missing '{key}' in {where}")
    return d[key]


def _matrix(v, where):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric array") from exc
    return np.atleast_2d(a)


def _pair(entry, M, where):
    i, j = int(_need(entry, "i", where)), int(_need(entry, "j", where))
    if not (1 <= i <= M and 1 <= j <= M) or i == j:
        raise ScenarioError(f"{where}: subsystem pair ({i}, {j}) out of range for M={M}")
    return i - 1, j - 1


def _build_system(spec) -> SystemModel:
    kind = _need(spec, "type", "system")
    try:
        if kind == "discrete":
            subs_spec = _need(spec, "subsystems", "system")
            subs = []
            for k, s in enumerate(subs_spec):
                w = f"system.subsystems[{k}]"
                subs.append(SubsystemModel(_matrix(_need(s, "A", w), w), _matrix(_need(s, "B", w), w),
                                           SymBox(_need(s, "x_bounds", w)), SymBox(_need(s, "u_bounds", w)),
                                           _matrix(_need(s, "Q", w), w), _matrix(_need(s, "R", w), w)))
            couplings = {}
            for e in spec.get("couplings", []) or []:
                couplings[_pair(e, len(subs), "system.couplings")] = _matrix(_need(e, "A", "coupling"), "coupling")
            return SystemModel(tuple(subs), couplings)
        if kind == "mass_spring_chain":
            masses = [float(m) for m in _need(spec, "masses", "system")]
            M = len(masses)
            springs, dampers = {}, {}
            for e in _need(spec, "links", "system"):
                p = _pair(e, M, "system.links")
                springs[p] = float(_need(e, "k", "link"))
                dampers[p] = float(e.get("c", 0.0))
            A, B = mass_spring_chain(masses, springs, dampers, float(spec.get("input_gain", 100.0)))
            Ts = float(_need(spec, "Ts", "system"))
            X = [SymBox(_need(spec, "x_bounds", "system"))] * M
            U = [SymBox(_need(spec, "u_bounds", "system"))] * M
            Q = [_matrix(_need(spec, "Q", "system"), "Q")] * M
            R = [_matrix(_need(spec, "R", "system"), "R")] * M
            return discretize_zoh(A, B, Ts, X=X, U=U, Q=Q, R=R,
                                  input_coupling=spec.get("input_coupling", "reject"))
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(f"system: {exc}") from exc
    raise ScenarioError(f"unknown system type {kind!r}")


def _partition(text, M, where):
    try:
        C = Partition.parse(str(text))
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    if C.M != M:
        raise ScenarioError(f"{where}: partition {C} does not cover {M} subsystems")
    return C


@dataclass(eq=False)
class Scenario:
    spec: dict
    name: str = ""
    system: SystemModel = None
    mpc: MpcConfig = None
    design: DesignConfig = field(default_factory=DesignConfig)
    game: GameConfig = field(default_factory=GameConfig)
    switch: SwitchConfig = field(default_factory=SwitchConfig)
    T: int = 100
    x0: np.ndarray = None
    opinions: Profile | None = None
    initial_partition: Partition | None = None
    fixed_T: int = 100
    fixed_x0: np.ndarray = None
    labels: dict = field(default_factory=dict)

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.spec == other.spec

    def partition(self, name: str) -> Partition:
        """Resolve a label (``C2``), a text partition, ``cen`` or ``dec``."""
        M = self.system.M
        if name in self.labels:
            return self.labels[name]
        if name in ("cen", "centralized"):
            return Partition.centralized(M)
        if name in ("dec", "decentralized"):
            return Partition.decentralized(M)
        return _partition(name, M, "partition")

    def label_of(self, C: Partition) -> str:
        for k, v in self.labels.items():
            if v == C:
                return k
        return C.key


def from_dict(spec: dict) -> Scenario:
    if not isinstance(spec, dict):
        raise ScenarioError("scenario must be a mapping")
    unknown = set(spec) - SECTIONS
    if unknown:
        raise ScenarioError(f"unknown sections: {sorted(unknown)}")
    spec = copy.deepcopy(spec)
    sysm = _build_system(_need(spec, "system", "scenario"))
    M, n = sysm.M, sysm.n
    try:
        mp = _need(spec, "mpc", "scenario")
        mpc = MpcConfig(int(_need(mp, "N", "mpc")), int(mp["H"]) if "H" in mp else None)
        design = DesignConfig(**(spec.get("design") or {}))
        g = dict(spec.get("game") or {})
        sig = g.get("sigma", 1.0)
        if isinstance(sig, list):
            g["sigma"] = {_pair(e, M, "game.sigma"): float(_need(e, "value", "sigma")) for e in sig}
        game = GameConfig(**g)
        switch = SwitchConfig(**(spec.get("switch") or {}))
    except TypeError as exc:
        raise ScenarioError(f"bad option: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if design.w_hat not in ("exact", "outer"):
        raise ScenarioError(f"design.w_hat must be 'exact' or 'outer', got {design.w_hat!r}")

    def state(v, where):
        x = np.asarray(v, dtype=float).ravel()
        if x.size != n:
            raise ScenarioError(f"{where}: state has {x.size} entries, system has {n}")
        return x

    sim = spec.get("simulation") or {}
    fixed = spec.get("fixed") or {}
    opinions = None
    if "opinions" in sim:
        ops = sim["opinions"]
        if len(ops) != M:
            raise ScenarioError(f"simulation.opinions needs {M} entries")
        opinions = Profile(tuple(_partition(o, M, "simulation.opinions") for o in ops))
    init = _partition(sim["initial_partition"], M, "simulation.initial_partition") \
        if "initial_partition" in sim else None
    labels = {str(k): _partition(v, M, f"labels.{k}") for k, v in (spec.get("labels") or {}).items()}
    return Scenario(
        spec=spec, name=str(spec.get("name", "")), system=sysm, mpc=mpc, design=design, game=game,
        switch=switch, T=int(sim.get("T", 100)),
        x0=state(sim["x0"], "simulation.x0") if "x0" in sim else np.zeros(n),
        opinions=opinions, initial_partition=init, fixed_T=int(fixed.get("T", 100)),
        fixed_x0=state(fixed["x0"], "fixed.x0") if "x0" in fixed else np.zeros(n), labels=labels,
    )


def loads(text: str) -> Scenario:
    try:
        spec = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from exc
    return from_dict(spec)


def load(path) -> Scenario:
    """Load a scenario file, or a shipped one by bare name (``four_mass``)."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.parent == Path("."):
        return load_builtin(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def load_builtin(name: str) -> Scenario:
    res = resources.files("coalmpc") / "scenarios" / f"{name}.scn"
    if not res.is_file():
        raise ScenarioError(f"no shipped scenario named {name!r}")
    return loads(res.read_text())


def dumps(sc: Scenario) -> str:
    return yaml.safe_dump(sc.spec, sort_keys=True)
