import numpy as np
import pytest

from app.exceptions import DegenerateTransversalError, DomainError, LabError
from app.services.lamination import (
    CallableFamily,
    FlowBox,
    Transversal,
    cantor_points,
    center_family,
    check_family_invariants,
    derivative_bound,
    estimate_bilipschitz,
    family_from_text,
    is_pencil,
    one_sided_slopes,
    verify_holomorphy,
)


def test_pencil_passes_invariants(pencil):
    report = check_family_invariants(pencil)
    assert report.passed, report.failures
    assert report.zero_plaque == 0.0
    assert is_pencil(pencil)


def test_shear_passes_invariants(shear):
    report = check_family_invariants(shear)
    assert report.passed, report.failures
    assert report.bound <= 0.75 * 1.3 + 1e-12
    assert not is_pencil(shear)


def test_translated_family_fails_invariants():
    family = family_from_text("a1 + 0.5*z1", 1, Transversal.disc(1.0))
    report = check_family_invariants(family)
    assert not report.passed
    assert any("h_0" in failure for failure in report.failures)
    assert any("unit polydisc" in failure for failure in report.failures)


def test_expression_dimensions_are_checked():
    with pytest.raises(DomainError):
        family_from_text("a1 + z2", 1, Transversal.disc(1.0))
    with pytest.raises(DomainError):
        family_from_text("a2", 1, Transversal.disc(1.0))


def test_transversal_kinds():
    with pytest.raises(LabError):
        Transversal("annulus")
    cantor = Transversal.cantor(-0.5, 0.5)
    grid = cantor.grid(64)
    assert grid.shape == (64, 1)
    assert np.all(cantor.contains(grid))
    finite = Transversal.finite([0.1, -0.2j])
    assert finite.dim == 1 and finite.grid(5).shape == (2, 1)


def test_cantor_points_endpoints():
    zeros = np.zeros((1, 30), dtype=bool)
    ones = np.ones((1, 30), dtype=bool)
    assert cantor_points(zeros, 0.0, 0.5)[0] == -0.5
    assert cantor_points(ones, 0.0, 0.5)[0] == pytest.approx(0.5, abs=1e-12)


def test_flow_box_radius():
    with pytest.raises(DomainError):
        FlowBox(family_from_text("a1"), rho=0.6)
    with pytest.raises(DomainError):
        FlowBox(family_from_text("a1"), rho=0.0)


def test_pencil_is_isometric_in_the_parameter(pencil):
    estimate = estimate_bilipschitz(pencil, 0.5, sample_pairs=64)
    assert estimate.c_lower == pytest.approx(1.0, abs=1e-12)
    assert estimate.c_upper == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        estimate_bilipschitz(pencil, 1.0)


def test_derivative_bounds(pencil):
    assert derivative_bound(pencil, 0.5, samples=64) == 0.0
    family = family_from_text("a1 + 0.3*a1*z1", 1, Transversal.disc(1.0))
    k = derivative_bound(family, 0.5, samples=64)
    assert 0.0 < k <= 0.3 + 1e-12


def test_abs_kink_shows_in_one_sided_slopes():
    family = family_from_text("a1 + 0.25*abs(a1)*z1", 1, Transversal.box(0.5))
    left, right = one_sided_slopes(family, [0.0], [1.0], [0.5])
    assert right[0].real == pytest.approx(1.125)
    assert left[0].real == pytest.approx(0.875)
    assert abs(right[0] - left[0]) > 0.2


def test_holomorphy_residual():
    good = CallableFamily(lambda a, z: a * (1 + 0.2 * z ** 2), 1, 1, Transversal.disc(0.5))
    bad = CallableFamily(lambda a, z: a + 0.2 * np.conj(z), 1, 1, Transversal.disc(0.5))
    assert verify_holomorphy(good, [0.3]) < 1e-12
    assert verify_holomorphy(bad, [0.3]) > 1e-2


def test_centering_reindexes_by_the_plaque_center():
    raw = family_from_text("2*a1 + z1^2", 1, Transversal.disc(0.25))
    centered = center_family(raw)
    assert centered is not raw
    s = np.array([[0.3 + 0.1j], [-0.2j]])
    assert np.allclose(centered.center(s), s, atol=1e-9)
    assert centered.transversal.region.radius == pytest.approx(0.5, rel=1e-6)


def test_centered_family_is_returned_unchanged(pencil):
    assert center_family(pencil) is pencil


def test_collapsing_family_is_degenerate():
    raw = family_from_text("0*a1 + z1", 1, Transversal.disc(0.5))
    with pytest.raises(DegenerateTransversalError):
        center_family(raw)
