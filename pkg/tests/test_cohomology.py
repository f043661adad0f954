from math import pi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from app.exceptions import DomainError, PositivityError
from app.schemas.cohomology import HermitianClass, PnClass
from app.services.cohomology import (
    ExtElement,
    directedness_residual,
    ext_wedge,
    generator,
    herm_wedge_square_norm,
    hirz_classify,
    kahler_verdict,
    pn_cup,
    pn_verdict,
    rank1_decompose,
    surface_leaf_verdict,
    torus_certificate,
)


@pytest.mark.parametrize("n, q, verdict", [
    (2, 1, "contradiction"),
    (3, 1, "no-obstruction"),
    (3, 2, "contradiction"),
    (4, 1, "no-obstruction"),
    (4, 2, "contradiction"),
    (5, 2, "no-obstruction"),
])
def test_projective_space_verdicts(n, q, verdict):
    result = pn_verdict(n, q, 1.5)
    assert result.verdict == verdict
    assert result.cycle_class.p == n - q
    assert result.square.vanishes == (verdict == "no-obstruction")
    assert result.chain


def test_projective_space_rejects_bad_input():
    with pytest.raises(DomainError):
        pn_verdict(2, 2, 1.0)
    with pytest.raises(DomainError):
        pn_verdict(3, 1, 0.0)


def test_cup_product_truncates():
    omega = PnClass(n=2, p=1, c=2.0)
    assert pn_cup(omega, omega) == PnClass(n=2, p=2, c=4.0)
    top = pn_cup(PnClass(n=2, p=2, c=1.0), omega)
    assert top.c == 0.0 and top.vanishes
    with pytest.raises(DomainError):
        pn_cup(omega, PnClass(n=3, p=1, c=1.0))
    with pytest.raises(ValidationError):
        PnClass(n=2, p=5, c=1.0)


@pytest.mark.parametrize("n, q, h_pp, verdict", [
    (4, 1, 1, "no-obstruction"),
    (4, 2, 1, "contradiction"),
    (3, 2, 1, "contradiction"),
    (3, 2, 2, "no-verdict"),
])
def test_kahler_verdicts(n, q, h_pp, verdict):
    assert kahler_verdict(n, q, h_pp, 1.0).verdict == verdict


@pytest.mark.parametrize("mass", [0.0, -1.0])
def test_kahler_verdict_needs_positive_mass(mass):
    with pytest.raises(DomainError):
        kahler_verdict(2, 1, 1, mass)
    with pytest.raises(DomainError):
        kahler_verdict(4, 2, 2, mass)


def test_surface_leaf_verdicts():
    assert not surface_leaf_verdict(1, False).parabolic_leaf_possible
    assert surface_leaf_verdict(2, False).parabolic_leaf_possible
    assert surface_leaf_verdict(1, True).parabolic_leaf_possible


@pytest.mark.parametrize("n, a, b, status", [
    (1, 2.0, 0.0, "accepted"),
    (3, 0.0, 0.0, "accepted"),
    (2, 1.0, 1.0, "rejected"),
    (4, 6.0, 3.0, "rejected"),
    (1, 1.0, 1.0, "outside-hypothesis"),
    (1, -1.0, 0.0, "outside-hypothesis"),
    (0, -1.0, 0.0, "outside-hypothesis"),
])
def test_hirzebruch_table(n, a, b, status):
    assert hirz_classify(n, a, b).status == status


def test_product_of_lines_is_a_pullback():
    first = hirz_classify(0, 3.0, 0.0)
    second = hirz_classify(0, 0.0, 2.0)
    assert first.status == second.status == "accepted"
    assert "F1" in first.conclusion and "F2" in second.conclusion


@given(st.integers(min_value=1, max_value=6), st.floats(min_value=0.1, max_value=100.0))
@settings(max_examples=50)
def test_balanced_classes_are_rejected(n, b):
    cert = hirz_classify(n, b * n / 2.0, b)
    assert cert.status == "rejected"
    assert cert.dot_c == pytest.approx(-b * n / 2.0, rel=1e-9)


@given(st.integers(min_value=1, max_value=6), st.floats(min_value=0.0, max_value=100.0))
@settings(max_examples=50)
def test_fibre_multiples_are_accepted(n, a):
    assert hirz_classify(n, a, 0.0).status == "accepted"


def test_exterior_products():
    dz = generator(2, 0)
    dzbar = generator(2, 0, conjugate=True)
    assert ext_wedge(dz, dz).terms == {}
    assert ext_wedge(dz, dzbar).terms == {(0, 2): 1.0}
    assert ext_wedge(dzbar, dz).terms == {(0, 2): -1.0}
    with pytest.raises(DomainError):
        ExtElement(2, {(2, 0): 1.0})


def _random_class(rng, n, k):
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    return HermitianClass.from_array(g @ g.conj().T)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_torus_rank_one_classes(n):
    rng = np.random.default_rng(n)
    for _ in range(100):
        H = _random_class(rng, n, 1)
        cert = torus_certificate(H)
        assert cert.positive and cert.criteria_agree
        assert cert.rank1.success and cert.leaf_direction is not None
        assert cert.minors_norm <= 1e-10
        assert cert.rank1.reconstruction_error <= 1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_torus_rank_two_classes(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(100):
        H = _random_class(rng, n, 2)
        cert = torus_certificate(H)
        assert cert.positive and cert.criteria_agree
        assert not cert.rank1.success
        assert cert.minors_norm > 1e-10 and cert.ext_square_norm > 1e-10
        assert cert.leaf_direction is None


def test_indefinite_class():
    H = HermitianClass.from_array(np.diag([1.0, -1.0]))
    with pytest.raises(PositivityError):
        rank1_decompose(H)
    cert = torus_certificate(H)
    assert not cert.positive and cert.rank1 is None


def test_zero_class():
    cert = torus_certificate(HermitianClass.from_array(np.zeros((2, 2))))
    assert cert.conclusion == "zero class"
    assert herm_wedge_square_norm(np.zeros((3, 3))) == 0.0


def test_matrix_must_be_hermitian():
    with pytest.raises(ValidationError):
        HermitianClass.from_array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        HermitianClass(matrix=[[(1.0, 0.0)], [(0.0, 0.0)]])


def test_directedness_of_a_horizontal_leaf(atom_leaf):
    assert directedness_residual(atom_leaf, [0.0, 1.0]) == pytest.approx(0.0, abs=1e-14)
    assert directedness_residual(atom_leaf, [1.0, 0.0]) == pytest.approx(2 * pi, rel=1e-12)
    with pytest.raises(DomainError):
        directedness_residual(atom_leaf, [1.0, 0.0, 0.0])
