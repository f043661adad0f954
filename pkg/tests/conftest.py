import os
import tempfile

import pytest

# the ledger and report directory are read at import time
_WORKDIR = tempfile.mkdtemp(prefix="lab-tests-")
os.environ.setdefault("DATABASE_URL", f"sqlite:///{os.path.join(_WORKDIR, 'lab.db')}")
os.environ.setdefault("LAB_RESULTS_DIR", os.path.join(_WORKDIR, "results"))
os.environ.setdefault("INIT_DB", "true")

import numpy as np

from app.services.cycle import FoliatedCycleLocal
from app.services.lamination import Transversal, family_from_text
from app.services.measures import AtomicMeasure, DensityMeasure


@pytest.fixture
def pencil():
    return family_from_text("a1", 1, Transversal.disc(1.0))


@pytest.fixture
def shear():
    return family_from_text("a1 + 0.3*a1*z1", 1, Transversal.disc(0.75))


@pytest.fixture
def flat_pencil(pencil):
    return FoliatedCycleLocal.build(pencil, DensityMeasure.lebesgue(pencil.transversal.region))


@pytest.fixture
def atom_leaf(pencil):
    return FoliatedCycleLocal.build(pencil, AtomicMeasure.dirac([0.0]))


@pytest.fixture
def two_atoms(pencil):
    return FoliatedCycleLocal.build(pencil, AtomicMeasure(np.array([[-0.25], [0.25]]), [0.5, 0.5]))


@pytest.fixture
def shear_cycle(shear):
    return FoliatedCycleLocal.build(shear, DensityMeasure.lebesgue(shear.transversal.region))


@pytest.fixture
def small_config(tmp_path):
    def make(scenario, **overrides):
        data = {"scenario": scenario, "samples": 4096, "quad_order": 8, "out": str(tmp_path / scenario)}
        data.update(overrides)
        return data
    return make
