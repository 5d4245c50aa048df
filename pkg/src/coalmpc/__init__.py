"""Coalitional tube MPC with game-theoretic partition selection."""
from .partitions import Partition, bell, delta_neighborhood, enumerate_partitions
from .sets import SymBox, Zonotope
from .system import SubsystemModel, SystemModel, build_coalition
from .rci import design_partition, solve_rci_lp
from .mpc import MpcConfig, solve_primary, solve_secondary, is_strongly_feasible
from .game import ConsensusGame, GameConfig, Profile
from .closed_loop import DesignConfig, SwitchConfig, fixed_partition_run, run
from .scenario import load as load_scenario

__all__ = [
    "Partition", "bell", "delta_neighborhood", "enumerate_partitions", "SymBox", "Zonotope",
    "SubsystemModel", "SystemModel", "build_coalition", "design_partition", "solve_rci_lp",
    "MpcConfig", "solve_primary", "solve_secondary", "is_strongly_feasible", "ConsensusGame",
    "GameConfig", "Profile", "DesignConfig", "SwitchConfig", "fixed_partition_run", "run",
    "load_scenario",
]
