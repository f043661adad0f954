import numpy as np
import pytest

from app.exceptions import LabError, ResourceError, SupportError
from app.services.lamination import Transversal
from app.services.measures import (
    AtomicMeasure,
    CantorMeasure,
    DensityMeasure,
    MixedMeasure,
    PushforwardMeasure,
    cantor_diagonal_mass,
    cantor_interval_mass,
    check_support,
    integrate_measure,
)
from app.services.numerics import Region, rng_stream

UNIT_DISC = Region.polydisc([0.0], [1.0])


def _modulus_squared(a):
    return np.abs(a[:, 0]) ** 2


def test_normalized_lebesgue_moments():
    mu = DensityMeasure.lebesgue(UNIT_DISC)
    assert mu.total_mass == 1.0
    assert integrate_measure(mu, lambda a: np.ones(a.shape[0])) == pytest.approx(1.0, rel=1e-12)
    assert integrate_measure(mu, _modulus_squared) == pytest.approx(0.5, rel=1e-12)


def test_integration_shrinks_to_a_concentric_disc():
    mu = DensityMeasure.lebesgue(UNIT_DISC)
    inner = Region.polydisc([0.0], [0.5])
    value = mu.integrate(lambda a: np.where(inner.contains(a), 1.0, 0.0), within=inner)
    assert value == pytest.approx(0.25, rel=1e-12)


def test_weighted_density_is_normalized():
    mu = DensityMeasure(UNIT_DISC, _modulus_squared, mass=2.0)
    assert integrate_measure(mu, lambda a: np.ones(a.shape[0])) == pytest.approx(2.0, rel=1e-12)
    assert mu.pdf(np.array([[2.0]]))[0] == 0.0
    samples = mu.sample(rng_stream(0, 0), 500)
    assert samples.shape == (500, 1) and np.all(np.abs(samples) <= 1.0)


def test_density_must_be_positive():
    with pytest.raises(LabError):
        DensityMeasure(UNIT_DISC, lambda a: -np.ones(a.shape[0]))
    with pytest.raises(LabError):
        DensityMeasure.lebesgue(UNIT_DISC, mass=0.0)


def test_atomic_measure_validation():
    with pytest.raises(LabError):
        AtomicMeasure([0.1, 0.2], [1.0])
    with pytest.raises(LabError):
        AtomicMeasure([0.1, 0.1], [0.5, 0.5])
    with pytest.raises(LabError):
        AtomicMeasure([0.1], [-1.0])
    zero = AtomicMeasure.zero()
    assert zero.total_mass == 0.0 and zero.diffuse
    assert integrate_measure(zero, _modulus_squared) == 0.0


def test_dirac_integrates_by_evaluation():
    mu = AtomicMeasure.dirac([0.5j], weight=3.0)
    assert integrate_measure(mu, _modulus_squared) == pytest.approx(0.75)
    assert not mu.diffuse and mu.atoms()[0][1] == 3.0


def test_cantor_cylinders():
    mu = CantorMeasure(depth=10)
    points, mass = mu.cylinders()
    assert points.size == 2 ** 10 and mass.sum() == pytest.approx(1.0)
    assert np.all(np.diff(points) > 0)
    assert cantor_interval_mass(mu, -0.5, 0.0) == pytest.approx(0.5)
    assert cantor_interval_mass(mu, -1.0 / 6.0 + 1e-9, 1.0 / 6.0 - 1e-9) == 0.0


def test_cantor_diagonal_at_zero_width():
    mu = CantorMeasure(depth=8)
    assert cantor_diagonal_mass(mu, 0.0) == pytest.approx(2.0 ** -8)
    assert cantor_diagonal_mass(mu, 1.0) == pytest.approx(1.0)


def test_cantor_limits_and_chunks():
    with pytest.raises(ResourceError):
        CantorMeasure(depth=31)
    with pytest.raises(LabError):
        CantorMeasure(weights=(0.7, 0.7))
    deep = CantorMeasure(depth=21)
    assert deep.integrate(lambda a: np.ones(a.shape[0])) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ResourceError):
        deep.discretize()


def test_cantor_samples_lie_on_the_transversal():
    mu = CantorMeasure(depth=12)
    samples = mu.sample(rng_stream(3, 0), 1000)
    assert np.all(Transversal.cantor(-0.5, 0.5).contains(samples))
    # middle third is empty
    assert not np.any(np.abs(samples.real) < 1.0 / 6.0 - 1e-12)


def test_support_check():
    check_support(CantorMeasure(), Transversal.cantor(-0.5, 0.5))
    with pytest.raises(SupportError):
        check_support(CantorMeasure(), Transversal.segment(-0.25, 0.25))
    with pytest.raises(SupportError):
        check_support(AtomicMeasure.dirac([0.9]), Transversal.disc(0.5))


def test_mixed_measure():
    diffuse = DensityMeasure.lebesgue(UNIT_DISC, mass=0.5)
    atoms = AtomicMeasure.dirac([0.0], weight=0.5)
    mu = MixedMeasure([diffuse, atoms, AtomicMeasure.zero()])
    assert len(mu.parts) == 2
    assert mu.total_mass == pytest.approx(1.0)
    assert not mu.diffuse
    assert integrate_measure(mu, _modulus_squared) == pytest.approx(0.25, rel=1e-12)
    assert mu.sample(rng_stream(0, 1), 64).shape == (64, 1)


def test_pushforward_moves_atoms_and_integrals():
    mu = PushforwardMeasure(AtomicMeasure([0.1, 0.2], [0.5, 0.5]), lambda a: 2 * a)
    assert [loc[0] for loc, _ in mu.atoms()] == [pytest.approx(0.2), pytest.approx(0.4)]
    lebesgue = PushforwardMeasure(DensityMeasure.lebesgue(UNIT_DISC), lambda a: 0.5 * a)
    assert integrate_measure(lebesgue, _modulus_squared) == pytest.approx(0.125, rel=1e-12)
