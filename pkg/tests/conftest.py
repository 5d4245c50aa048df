import numpy as np
import pytest

from coalmpc.closed_loop import DesignCache
from coalmpc.scenario import load_builtin
from coalmpc.sets import SymBox
from coalmpc.system import SubsystemModel, SystemModel


@pytest.fixture(scope="session")
def three():
    return load_builtin("three_scalar")


@pytest.fixture(scope="session")
def four():
    return load_builtin("four_mass")


@pytest.fixture(scope="session")
def three_designs(three):
    return DesignCache(three.system, three.design)


@pytest.fixture(scope="session")
def four_designs(four):
    return DesignCache(four.system, four.design)


def scalar_system(a=0.6, b=1.0, x=2.0, u=0.5, couplings=None, M=3):
    subs = tuple(SubsystemModel([[a]], [[b]], SymBox([x]), SymBox([u]), [[1.0]], [[1.0]]) for _ in range(M))
    return SystemModel(subs, {k: np.array([[v]]) for k, v in (couplings or {}).items()})
