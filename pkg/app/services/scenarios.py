import logging
from math import pi
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.exceptions import DomainError, LabError, NotFoundError
from app.schemas.scenarios import AhlforsRow, MeasureSpec, ScenarioSpec, ScenarioSummary, TransversalSpec
from app.services.cycle import FoliatedCycleLocal
from app.services.lamination import Transversal, check_family_invariants, family_from_text
from app.services.measures import AtomicMeasure, CantorMeasure, DensityMeasure, TransverseMeasure
from app.services.numerics import Region, gauss_grid, holo_jacobian

logger = logging.getLogger(__name__)

DYADIC_GRID = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
TRIADIC_GRID = [float(3 ** k) for k in range(8)]

_UNIT_DISC = TransversalSpec(kind="disc", radius=1.0)

BUILTIN_SCENARIOS: Dict[str, ScenarioSpec] = {
    spec.name: spec
    for spec in [
        ScenarioSpec(
            name="flat-pencil",
            n=2, q=1,
            family="a1",
            transversal=_UNIT_DISC,
            measure=MeasureSpec(kind="lebesgue"),
            lambda_grid=DYADIC_GRID,
            expected="decay-quadratic",
            description="Parallel lines {z2 = a} with normalized Lebesgue measure on the unit disc",
        ),
        ScenarioSpec(
            name="atom-leaf",
            n=2, q=1,
            family="a1",
            transversal=_UNIT_DISC,
            measure=MeasureSpec(kind="atoms", points=[(0.0, 0.0)], weights=[1.0]),
            lambda_grid=DYADIC_GRID,
            expected="constant",
            description="A single compact leaf: the Dirac mass at a = 0",
        ),
        ScenarioSpec(
            name="cantor-pencil",
            n=2, q=1,
            family="a1",
            transversal=TransversalSpec(kind="cantor", lo=-0.5, hi=0.5),
            measure=MeasureSpec(kind="cantor", depth=12),
            lambda_grid=TRIADIC_GRID,
            expected="decay-slow",
            description="Diffuse singular transverse measure on the middle-thirds set",
        ),
        ScenarioSpec(
            name="shear",
            n=2, q=1,
            family="a1 + 0.3*a1*z1",
            transversal=TransversalSpec(kind="disc", radius=0.75),
            measure=MeasureSpec(kind="lebesgue"),
            lambda_grid=DYADIC_GRID,
            expected="decay-quadratic",
            description="Plaques tilting with the parameter, normalized Lebesgue on the disc of radius 3/4",
        ),
        ScenarioSpec(
            name="nonsmooth-lipschitz",
            n=2, q=1,
            family="a1 + 0.25*abs(a1)*z1",
            transversal=TransversalSpec(kind="box", radius=0.5),
            measure=MeasureSpec(kind="lebesgue"),
            lambda_grid=DYADIC_GRID,
            expected="decay-quadratic",
            description="Transversally Lipschitz but not smooth at a = 0, Lebesgue on the square of half-width 1/2",
        ),
        ScenarioSpec(
            name="two-atoms",
            n=2, q=1,
            family="a1",
            transversal=_UNIT_DISC,
            measure=MeasureSpec(kind="atoms", points=[(-0.25, 0.0), (0.25, 0.0)], weights=[0.5, 0.5]),
            lambda_grid=DYADIC_GRID,
            expected="eventually-constant",
            description="Two compact leaves of weight 1/2",
        ),
    ]
}


def builtin_scenarios() -> List[ScenarioSpec]:
    return list(BUILTIN_SCENARIOS.values())


def scenario_summaries() -> List[ScenarioSummary]:
    return [
        ScenarioSummary(name=s.name, family=s.family, measure=s.measure.kind, expected=s.expected)
        for s in builtin_scenarios()
    ]


def get_scenario(name: str) -> ScenarioSpec:
    """
    Get a built-in scenario by name
    """
    spec = BUILTIN_SCENARIOS.get(name)
    if spec is None:
        raise NotFoundError(f"Scenario '{name}' not found; known: {', '.join(BUILTIN_SCENARIOS)}")
    return spec


def build_transversal(spec: TransversalSpec, codim: int = 1) -> Transversal:
    if spec.kind == "disc":
        return Transversal.disc(spec.radius or 1.0, codim)
    if spec.kind == "box":
        return Transversal.box(spec.radius or 0.5, codim)
    if spec.kind == "segment":
        return Transversal.segment(spec.lo, spec.hi)
    if spec.kind == "cantor":
        return Transversal.cantor(spec.lo, spec.hi)
    return Transversal.finite([complex(*p) for p in spec.points or []])


def build_measure(spec: MeasureSpec, transversal: Transversal) -> TransverseMeasure:
    if spec.kind == "atoms":
        points = np.array([[complex(*p)] for p in spec.points or []])
        return AtomicMeasure(points, spec.weights or [])
    if spec.kind == "cantor":
        if transversal.kind != "cantor":
            raise LabError("A Cantor measure needs a Cantor transversal")
        c = float(transversal.region.center[0].real)
        h = float(transversal.region.radii[0])
        return CantorMeasure(center=c, half_width=h, depth=spec.depth)
    if transversal.kind == "points":
        raise LabError("Lebesgue measure needs a continuous transversal")
    return DensityMeasure.lebesgue(transversal.region)


def build_cycle(spec: ScenarioSpec, check: bool = True) -> FoliatedCycleLocal:
    """
    Family, transversal and measure of a scenario as a foliated cycle in one flow box
    """
    transversal = build_transversal(spec.transversal, spec.n - spec.q)
    family = family_from_text(spec.family, spec.q, transversal, label=spec.name)
    if check:
        report = check_family_invariants(family)
        if not report.passed:
            raise LabError(f"Scenario '{spec.name}' family fails its invariants: {'; '.join(report.failures)}")
    measure = build_measure(spec.measure, transversal)
    logger.info(f"Built scenario {spec.name}: family '{spec.family}', {measure.variant} measure")
    return FoliatedCycleLocal.build(family, measure, spec.rho, label=spec.name)


# Ahlfors ratios

def ahlfors_ratios(
    v: Sequence[complex],
    r_grid: Sequence[float],
    parametrization: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    order: int = 64,
) -> List[AhlforsRow]:
    """
    Area a_r and boundary length l_r of phi(D(r)) in the flat metric, for phi(zeta) = zeta v by default
    """
    v = np.asarray(v, dtype=complex)
    radii = [float(r) for r in r_grid]
    if any(r <= 0 for r in radii) or any(x >= y for x, y in zip(radii, radii[1:])):
        raise DomainError(f"Radii must be positive and increasing, got {radii}")
    if parametrization is None:
        if not np.any(v):
            raise DomainError("The direction v must be nonzero")

        def derivative(zeta):
            return np.broadcast_to(v, zeta.shape[:-1] + v.shape)
    elif derivative is None:
        def derivative(zeta):
            jet = holo_jacobian(parametrization, zeta, circle_radius=0.25)
            return np.asarray(jet.jacobian)[..., 0]

    speed = float(np.sqrt(np.sum(np.abs(v) ** 2)))
    rows = []
    for r in radii:
        grid = gauss_grid(order, Region.polydisc([0.0], [r]))
        area = float(np.dot(grid.weights, np.sum(np.abs(derivative(grid.nodes)) ** 2, axis=-1)))
        theta = 2 * pi * np.arange(4 * order) / (4 * order)
        circle = (r * np.exp(1j * theta))[:, None]
        # periodic trapezoid rule
        length = float(2 * pi * r * np.mean(np.sqrt(np.sum(np.abs(derivative(circle)) ** 2, axis=-1))))
        closed = 2.0 / (r * speed) if parametrization is None else None
        rows.append(AhlforsRow(r=r, area=area, length=length, ratio=length / area, closed_form=closed))
    return rows
