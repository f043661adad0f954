from math import pi

import numpy as np
import pytest

from app.exceptions import DomainError, SupportError
from app.services.cycle import (
    FoliatedCycleLocal,
    ProductMeasure,
    TestForm,
    atom_split,
    cantor_product_oracle,
    center_cycle,
    default_odd_form,
    diagonal_mass,
    form_battery,
    holonomy_check,
    pair,
    split_measure,
    stokes_residual,
    trace_form,
    trace_mass,
)
from app.services.lamination import Transversal, family_from_text
from app.services.measures import AtomicMeasure, CantorMeasure, DensityMeasure, MixedMeasure
from app.services.numerics import Region


def test_flat_pencil_trace_mass(flat_pencil):
    region = Region.polydisc([0.0, 0.0], [0.5, 0.5])
    assert trace_mass(flat_pencil, region) == pytest.approx(pi / 8, rel=1e-10)


def test_flat_pencil_pairs_with_trace_form(flat_pencil):
    assert pair(flat_pencil, trace_form(2, 1)) == pytest.approx(2 * pi, rel=1e-10)


def test_atom_leaf_trace_mass(atom_leaf):
    region = Region.polydisc([0.0, 0.0], [0.5, 0.5])
    assert trace_mass(atom_leaf, region) == pytest.approx(pi / 2)


def test_pairing_checks_the_form(flat_pencil):
    with pytest.raises(DomainError):
        pair(flat_pencil, trace_form(3, 1))
    with pytest.raises(SupportError):
        pair(flat_pencil, trace_form(2, 1, radii=[1.5, 1.0]))


def test_form_construction_is_checked():
    support = Region.polydisc([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        TestForm(2, 1, {((0,), (0, 1)): lambda x: np.ones(x.shape[:-1])}, support)
    with pytest.raises(SupportError):
        TestForm(2, 1, {}, Region.ball([0.0, 0.0], 1.0))


def test_sum_of_forms_pairs_linearly(flat_pencil):
    form = trace_form(2, 1) + trace_form(2, 1).scaled(-0.5)
    assert pair(flat_pencil, form) == pytest.approx(pi, rel=1e-10)


@pytest.mark.parametrize("cycle", ["flat_pencil", "shear_cycle"])
def test_stokes_residual_vanishes(cycle, request):
    T = request.getfixturevalue(cycle)
    assert stokes_residual(T, default_odd_form(2, 1), order=24) <= 1e-8


def test_split_of_mixed_measure(pencil):
    diffuse = DensityMeasure.lebesgue(pencil.transversal.region, mass=0.5)
    mu = MixedMeasure([diffuse, AtomicMeasure.dirac([0.1], weight=0.25)])
    d, a = split_measure(mu)
    assert d is diffuse
    assert a.total_mass == 0.25
    split = atom_split(FoliatedCycleLocal.build(pencil, mu))
    assert split.atom_mass == 0.25 and split.diffuse_mass == 0.5


def test_atoms_only(two_atoms):
    split = atom_split(two_atoms)
    assert split.diffuse is None
    assert len(split.atoms) == 2 and split.atom_mass == pytest.approx(1.0)


def test_product_atoms(two_atoms):
    product = ProductMeasure(two_atoms.measure)
    alphas, weights = product.atoms()
    assert alphas.shape == (4, 2) and weights.sum() == pytest.approx(1.0)
    point = diagonal_mass(product, 0.25)
    assert point.exact and point.value == pytest.approx(0.5)
    assert diagonal_mass(product, 0.6).value == pytest.approx(1.0)


def test_diagonal_mass_rejects_nonpositive_width(two_atoms):
    with pytest.raises(DomainError):
        diagonal_mass(ProductMeasure(two_atoms.measure), 0.0)


def test_monte_carlo_diagonal_is_deterministic():
    product = ProductMeasure(DensityMeasure.lebesgue(Region.polydisc([0.0], [1.0])))
    first = diagonal_mass(product, 0.1, samples=20000, seed=3)
    second = diagonal_mass(product, 0.1, samples=20000, seed=3)
    assert first == second
    assert not first.exact and first.stderr > 0


def test_cantor_oracle_agrees_with_sampling():
    product = ProductMeasure(CantorMeasure(depth=12))
    eps = 0.05
    oracle = cantor_product_oracle(product, eps)
    estimate = diagonal_mass(product, eps, samples=1 << 16, seed=1)
    assert abs(estimate.value - oracle) <= 5 * estimate.stderr + 0.01


def test_cantor_oracle_needs_a_cantor_measure(flat_pencil):
    with pytest.raises(DomainError):
        cantor_product_oracle(ProductMeasure(flat_pencil.measure), 0.1)


def test_rotating_the_transversal_keeps_the_current(flat_pencil):
    turn = np.exp(0.7j)
    change = holonomy_check(
        flat_pencil,
        lambda a: turn * np.asarray(a),
        lambda s: np.asarray(s) / turn,
        battery=form_battery(2, 1, count=4),
        order=8,
    )
    assert change < 1e-9


def test_relabeling_without_pushing_the_measure_changes_the_current(flat_pencil):
    change = holonomy_check(
        flat_pencil,
        lambda a: 0.5 * np.asarray(a),
        lambda s: 2.0 * np.asarray(s),
        push_measure=False,
        battery=[trace_form(2, 1)],
        order=8,
    )
    assert change > 0.1


def test_center_cycle_pushes_atoms():
    raw = family_from_text("2*a1 + z1^2", 1, Transversal.disc(0.25))
    T = FoliatedCycleLocal.build(raw, AtomicMeasure(np.array([[-0.1], [0.1]]), [0.5, 0.5]))
    centered = center_cycle(T)
    locations = sorted(float(loc[0].real) for loc, _ in centered.measure.atoms())
    assert locations == [pytest.approx(-0.2), pytest.approx(0.2)]


def test_centered_cycle_is_unchanged(flat_pencil):
    assert center_cycle(flat_pencil) is flat_pencil


def test_trace_mass_on_nested_polydiscs(flat_pencil):
    radii = [0.2, 0.5, 0.9]
    masses = [trace_mass(flat_pencil, Region.polydisc([0.0, 0.0], [r, r])) for r in radii]
    assert masses == sorted(masses)
    for r, mass in zip(radii, masses):
        assert mass == pytest.approx(2 * pi * r ** 4, rel=1e-10)


def test_trace_mass_on_a_ball_inside_a_polydisc(shear_cycle):
    inner = trace_mass(shear_cycle, Region.ball([0.0, 0.0], 0.5), order=12)
    outer = trace_mass(shear_cycle, Region.polydisc([0.0, 0.0], [0.5, 0.5]), order=12)
    assert 0.0 < inner < outer


def test_trace_mass_vanishes_away_from_the_plaques(flat_pencil, shear_cycle):
    far = Region.polydisc([3.0, 0.0], [0.1, 0.1])
    assert trace_mass(flat_pencil, far) == 0.0
    assert trace_mass(shear_cycle, far, order=8) == 0.0


@pytest.mark.parametrize("mu", [
    DensityMeasure.lebesgue(Region.polydisc([0.0], [1.0])),
    CantorMeasure(depth=12),
])
def test_diagonal_mass_shrinks_with_the_width(mu):
    product = ProductMeasure(mu)
    points = [diagonal_mass(product, eps, samples=1 << 14, seed=5) for eps in (0.5, 0.25, 0.125, 0.0625)]
    values = [p.value for p in points]
    assert values == sorted(values, reverse=True)
    assert values[-1] < values[0]
