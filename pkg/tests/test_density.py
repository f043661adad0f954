from math import pi

import numpy as np
import pytest

from app.exceptions import DomainError, LipschitzViolation, ProductInvariantError, ZeroCurrentError
from app.services.cycle import FoliatedCycleLocal
from app.services.density import (
    GraphPiece,
    ProductFamily,
    build_product,
    decay_curve,
    far_mass_zero_box,
    far_stratum_check,
    fit_inequality,
    h_dimension_probe,
    lelong,
    near_stratum_sup,
    rescaled_graph_mass,
    slice_invariance_check,
    tangent_pieces,
)
from app.services.lamination import CallableFamily, Transversal, family_from_text
from app.services.measures import AtomicMeasure, DensityMeasure, MixedMeasure
from app.services.numerics import Region

LAMBDAS = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]


def test_single_leaf_mass_is_constant(atom_leaf):
    report = decay_curve(atom_leaf, lambda_grid=LAMBDAS, order=8)
    assert report.method == "exact"
    for row in report.rows:
        assert row.mass_total == pytest.approx(pi ** 2 / 2, rel=1e-12)
        assert row.mass_near == row.mass_total
        assert row.mass_far == 0.0 and row.stderr == 0.0


def test_two_leaves_separate_after_the_first_dilation(two_atoms):
    report = decay_curve(two_atoms, lambda_grid=LAMBDAS, order=8)
    assert report.rows[0].mass_total == pytest.approx(pi ** 2 / 2, rel=1e-12)
    for row in report.rows[1:]:
        assert row.mass_total == pytest.approx(pi ** 2 / 4, rel=1e-12)
    assert all(row.mass_far == 0.0 for row in report.rows)


@pytest.mark.parametrize("lam", [1.0, 4.0])
def test_flat_pencil_decays_like_lambda_squared(flat_pencil, lam):
    report = decay_curve(flat_pencil, lambda_grid=[lam])
    assert report.method == "rqmc"
    assert report.rows[0].mass_total == pytest.approx(pi ** 2 / (32 * lam ** 2), rel=0.06)


def test_decay_is_reproducible_across_workers(flat_pencil):
    one = decay_curve(flat_pencil, lambda_grid=[2.0], samples=4096, seed=7, order=8)
    two = decay_curve(flat_pencil, lambda_grid=[2.0], samples=4096, seed=7, order=8, workers=2)
    assert one.rows == two.rows


def test_mixed_measure_combines_exact_and_sampled_parts(pencil):
    mu = MixedMeasure([
        DensityMeasure.lebesgue(pencil.transversal.region, mass=0.5),
        AtomicMeasure.dirac([0.0], weight=0.5),
    ])
    report = decay_curve(FoliatedCycleLocal.build(pencil, mu), lambda_grid=[1.0], samples=2048, order=8)
    assert report.method == "exact+monte-carlo"
    assert report.rows[0].mass_total >= 0.25 * pi ** 2 / 2 * (1 - 1e-12)
    assert report.rows[0].stderr > 0


def test_dilation_below_one_is_rejected(atom_leaf):
    with pytest.raises(DomainError):
        decay_curve(atom_leaf, lambda_grid=[0.5])
    with pytest.raises(DomainError):
        rescaled_graph_mass(build_product(atom_leaf.family, 0.5), [0.0, 0.0], 0.5, Region.polydisc(np.zeros(4), np.full(4, 0.5)))


def test_product_structure_is_checked(pencil):
    with pytest.raises(DomainError):
        build_product(pencil, 0.6)
    with pytest.raises(ProductInvariantError) as info:
        build_product(family_from_text("2*a1", 1, Transversal.disc(0.5)), 0.5)
    assert info.value.prop == "1"
    with pytest.raises(ProductInvariantError) as info:
        build_product(family_from_text("a1", 1, Transversal.disc(0.5, codim=2)), 0.5)
    assert info.value.prop == "1"


def test_shear_inequality_constants(shear):
    fit = fit_inequality(build_product(shear, 0.5))
    assert fit.c1 == pytest.approx(0.85, abs=1e-9)
    assert fit.c3 == pytest.approx(1.15, abs=1e-9)
    assert fit.k == pytest.approx(0.3, abs=1e-6)
    assert fit.c2 == pytest.approx(fit.k / fit.c1)
    assert fit.worst_slack >= -1e-12


def test_far_stratum_is_empty_on_the_shrunken_box(shear):
    P = build_product(shear, 0.5)
    fit = fit_inequality(P)
    K = far_mass_zero_box(fit)
    check = far_stratum_check(P, K, samples=60, order=8)
    assert check.samples == 60
    assert check.max_mass == 0.0 and check.nonzero == 0


def test_non_lipschitz_family_is_reported():
    def fn(a, z):
        modulus = np.maximum(np.abs(a), 1e-300)
        return a * modulus ** (0.8 * z)

    family = CallableFamily(fn, 1, 1, Transversal.segment(-0.5, 0.5))
    with pytest.raises(LipschitzViolation) as info:
        fit_inequality(ProductFamily(family, 0.5))
    assert info.value.witness["ratios"][-1] > info.value.witness["ratios"][0]


def test_near_stratum_sup(pencil):
    P = build_product(pencil, 0.5)
    assert near_stratum_sup(P, [[0.0, 0.1]], 4.0) == pytest.approx(0.4)
    assert near_stratum_sup(P, [[0.0, 0.5]], 4.0) == 0.0


def test_lelong_of_a_single_leaf(atom_leaf):
    estimate = lelong(atom_leaf)
    assert estimate.ratios == [pytest.approx(1.0, rel=1e-12)] * 3
    assert estimate.estimate == pytest.approx(1.0, rel=1e-12)
    assert estimate.warnings == []


def test_lelong_of_the_flat_pencil_vanishes(flat_pencil):
    estimate = lelong(flat_pencil)
    assert estimate.ratios == [pytest.approx(r ** 2 / 2, rel=1e-10) for r in (0.4, 0.2, 0.1)]
    assert estimate.estimate == pytest.approx(0.0, abs=1e-10)
    assert len(estimate.warnings) == 2


def test_lelong_radii_must_decrease(atom_leaf):
    with pytest.raises(DomainError):
        lelong(atom_leaf, r_grid=[0.1, 0.2])


@pytest.mark.parametrize("lam", [2.0, 4.0, 8.0])
def test_slice_identity_for_the_flat_pencil(flat_pencil, lam):
    assert slice_invariance_check(flat_pencil, lam, 0.5) == 0.0


def test_tangent_pieces_of_a_pencil_are_vertical(two_atoms):
    pieces = tangent_pieces(two_atoms, 4.0)
    assert len(pieces) == 2
    result = h_dimension_probe(pieces, base_dim=1)
    assert result.h_dimension == 0
    assert result.masses[1] == 0.0


def test_horizontal_piece_has_full_h_dimension():
    piece = GraphPiece(
        Region.polydisc([0.0], [0.5]),
        lambda s: np.concatenate([s, np.zeros_like(s)], axis=-1),
        lambda s: np.broadcast_to(np.array([[1.0], [0.0]], dtype=complex), s.shape[:-1] + (2, 1)),
    )
    result = h_dimension_probe([piece], base_dim=1)
    assert result.h_dimension == 1
    assert result.masses[1] == pytest.approx(result.masses[0])


def test_empty_current_has_no_h_dimension():
    with pytest.raises(ZeroCurrentError):
        h_dimension_probe([], base_dim=1)
