from math import pi, sqrt

import numpy as np
import pytest

from app.exceptions import DomainError, LabError, NotFoundError
from app.schemas.scenarios import MeasureSpec, TransversalSpec
from app.services.measures import AtomicMeasure, CantorMeasure, DensityMeasure
from app.services.scenarios import (
    ahlfors_ratios,
    build_cycle,
    build_measure,
    build_transversal,
    builtin_scenarios,
    get_scenario,
    scenario_summaries,
)

NAMES = ["flat-pencil", "atom-leaf", "cantor-pencil", "shear", "nonsmooth-lipschitz", "two-atoms"]


def test_builtin_catalogue():
    assert [spec.name for spec in builtin_scenarios()] == NAMES
    summaries = {s.name: s for s in scenario_summaries()}
    assert summaries["cantor-pencil"].measure == "cantor"
    assert summaries["two-atoms"].expected == "eventually-constant"


@pytest.mark.parametrize("name", NAMES)
def test_every_scenario_builds(name):
    spec = get_scenario(name)
    T = build_cycle(spec)
    assert (T.n, T.q) == (spec.n, spec.q)
    assert T.box.rho == 0.5


@pytest.mark.parametrize("name, variant", [
    ("flat-pencil", DensityMeasure),
    ("atom-leaf", AtomicMeasure),
    ("cantor-pencil", CantorMeasure),
])
def test_scenario_measures(name, variant):
    assert isinstance(build_cycle(get_scenario(name)).measure, variant)


def test_unknown_scenario():
    with pytest.raises(NotFoundError) as info:
        get_scenario("spiral")
    assert "flat-pencil" in info.value.detail


def test_measure_needs_a_matching_transversal():
    disc = build_transversal(TransversalSpec(kind="disc", radius=0.5))
    with pytest.raises(LabError):
        build_measure(MeasureSpec(kind="cantor"), disc)
    points = build_transversal(TransversalSpec(kind="points", points=[(0.1, 0.0), (0.2, 0.0)]))
    assert points.grid(10).shape == (2, 1)
    with pytest.raises(LabError):
        build_measure(MeasureSpec(kind="lebesgue"), points)


def test_ahlfors_ratio_of_a_line():
    rows = ahlfors_ratios([1.0, 0.0], [1.0, 10.0])
    assert rows[1].area == pytest.approx(100 * pi, rel=1e-12)
    assert rows[1].length == pytest.approx(20 * pi, rel=1e-12)
    assert rows[1].ratio == pytest.approx(0.2, abs=1e-6)
    for row in rows:
        assert row.ratio == pytest.approx(row.closed_form, rel=1e-10)


def test_ahlfors_ratio_of_a_parametrized_line():
    rows = ahlfors_ratios(
        [1.0, 1j],
        [2.0, 4.0],
        parametrization=lambda zeta: zeta * np.array([1.0, 1j]),
    )
    for row in rows:
        assert row.closed_form is None
        assert row.ratio == pytest.approx(2.0 / (row.r * sqrt(2.0)), rel=1e-9)


@pytest.mark.parametrize("v, radii", [
    ([0.0, 0.0], [1.0, 2.0]),
    ([1.0, 0.0], [2.0, 1.0]),
    ([1.0, 0.0], [0.0, 1.0]),
])
def test_ahlfors_rejects_bad_input(v, radii):
    with pytest.raises(DomainError):
        ahlfors_ratios(v, radii)
