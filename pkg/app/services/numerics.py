import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial, gamma, pi
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.exceptions import DomainError, InvalidRegionError, ResourceError

logger = logging.getLogger(__name__)

REGION_KINDS = ("polydisc", "box", "ball")
MAX_GRID_NODES = 1 << 22

HoloMap = Callable[[np.ndarray], np.ndarray]
Indicator = Callable[[np.ndarray, np.ndarray], np.ndarray]


# Regions

@dataclass(frozen=True, eq=False)
class Region:
    """
    Closed polydisc, box or Euclidean ball in C^m (or R^m when real is set).

    For a ball every entry of radii is the same radius.
    """
    kind: str
    center: np.ndarray
    radii: np.ndarray
    real: bool = False

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise InvalidRegionError(f"Unknown region kind '{self.kind}'")
        center = np.atleast_1d(np.asarray(self.center, dtype=complex))
        radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        if radii.size == 1 and center.size > 1:
            radii = np.full(center.size, float(radii[0]))
        if center.ndim != 1 or radii.shape != center.shape:
            raise InvalidRegionError(
                f"Region center and radii disagree: {center.shape} vs {radii.shape}"
            )
        if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
            raise InvalidRegionError(f"Region radii must be positive, got {radii.tolist()}")
        if self.kind == "ball" and not np.allclose(radii, radii[0]):
            raise InvalidRegionError("A ball needs a single radius")
        center.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def polydisc(cls, center, radii) -> "Region":
        return cls("polydisc", center, radii)

    @classmethod
    def box(cls, center, half_widths, real: bool = False) -> "Region":
        return cls("box", center, half_widths, real=real)

    @classmethod
    def ball(cls, center, radius: float) -> "Region":
        return cls("ball", center, radius)

    @classmethod
    def segment(cls, lo: float, hi: float) -> "Region":
        if hi <= lo:
            raise InvalidRegionError(f"Empty segment [{lo}, {hi}]")
        return cls("box", [(lo + hi) / 2.0], [(hi - lo) / 2.0], real=True)

    @property
    def dim(self) -> int:
        return int(self.center.size)

    @property
    def radius(self) -> float:
        return float(self.radii.max())

    def key(self) -> tuple:
        return (
            self.kind,
            tuple(complex(c) for c in self.center),
            tuple(float(r) for r in self.radii),
            self.real,
        )

    def contains(self, points) -> np.ndarray:
        """
        Vectorised closed-region membership for points of shape (..., m)
        """
        p = np.asarray(points, dtype=complex) - self.center
        if self.real:
            flat = np.abs(p.imag) <= 1e-12
            x = np.abs(p.real)
            if self.kind == "ball":
                inside = np.sum(x ** 2, axis=-1) <= self.radii[0] ** 2
            else:
                inside = np.all(x <= self.radii, axis=-1)
            return inside & np.all(flat, axis=-1)
        if self.kind == "polydisc":
            return np.all(np.abs(p) <= self.radii, axis=-1)
        if self.kind == "box":
            return np.all((np.abs(p.real) <= self.radii) & (np.abs(p.imag) <= self.radii), axis=-1)
        return np.sum(np.abs(p) ** 2, axis=-1) <= self.radii[0] ** 2

    def volume(self) -> float:
        m = self.dim
        if self.real:
            if self.kind == "ball":
                return pi ** (m / 2.0) * self.radii[0] ** m / gamma(m / 2.0 + 1.0)
            return float(np.prod(2.0 * self.radii))
        if self.kind == "polydisc":
            return float(np.prod(pi * self.radii ** 2))
        if self.kind == "box":
            return float(np.prod(4.0 * self.radii ** 2))
        return pi ** m * self.radii[0] ** (2 * m) / factorial(m)

    def project(self, axes: Sequence[int]) -> "Region":
        axes = list(axes)
        return Region(self.kind, self.center[axes], self.radii[axes], real=self.real)

    def scaled(self, factor: float) -> "Region":
        return Region(self.kind, self.center, self.radii * factor, real=self.real)

    def __repr__(self) -> str:
        return f"Region({self.kind}, center={self.center.tolist()}, radii={self.radii.tolist()}, real={self.real})"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    domain: Region

    @property
    def size(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class HoloJet:
    value: np.ndarray
    jacobian: np.ndarray


@dataclass(frozen=True)
class QuadratureEstimate:
    value: float
    tolerance: float
    order: int


# Quadrature

def _polar_rule(order: int, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    r = radius * (x + 1.0) / 2.0
    wr = radius / 2.0 * w * r
    theta = 2.0 * pi * np.arange(order) / order
    points = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = (wr[:, None] * np.full(order, 2.0 * pi / order)[None, :]).ravel()
    return points, weights


def _square_rule(order: int, half_width: float) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    t = half_width * x
    wt = half_width * w
    points = (t[:, None] + 1j * t[None, :]).ravel()
    weights = (wt[:, None] * wt[None, :]).ravel()
    return points, weights


def _tensor(rules: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    nodes = np.zeros((1, 0), dtype=complex)
    weights = np.ones(1)
    for pts, wts in rules:
        k = pts.size
        nodes = np.concatenate(
            [np.repeat(nodes, k, axis=0), np.tile(pts, nodes.shape[0])[:, None]], axis=1
        )
        weights = (weights[:, None] * wts[None, :]).ravel()
    return nodes, weights


def _ball_rule(order: int, radius: float, m: int) -> Tuple[np.ndarray, np.ndarray]:
    # nested polar coordinates: each radial range shrinks to the remaining radius
    x, w = leggauss(order)
    theta = np.exp(2j * pi * np.arange(order) / order)
    remaining = np.array([radius ** 2])
    coords = np.zeros((1, 0), dtype=complex)
    weights = np.ones(1)
    for _ in range(m):
        s = np.sqrt(np.maximum(remaining, 0.0))
        r = s[:, None] * (x + 1.0) / 2.0
        wr = s[:, None] / 2.0 * w[None, :] * r
        pts = r[:, :, None] * theta[None, None, :]
        wts = wr[:, :, None] * np.full(order, 2.0 * pi / order)[None, None, :]
        count = order * order
        coords = np.concatenate(
            [np.repeat(coords, count, axis=0), pts.reshape(-1, 1)], axis=1
        )
        weights = (weights[:, None] * wts.reshape(weights.size, count)).ravel()
        remaining = (remaining[:, None, None] - r[:, :, None] ** 2 + 0.0 * wts).reshape(-1)
    return coords, weights


@lru_cache(maxsize=64)
def _grid_cached(order: int, key: tuple) -> Tuple[np.ndarray, np.ndarray]:
    kind, center, radii, real = key
    m = len(center)
    if real:
        if kind == "ball":
            raise InvalidRegionError("Quadrature on real balls is not supported")
        x, w = leggauss(order)
        rules = [(r * x + 0j, r * w) for r in radii]
        nodes, weights = _tensor(rules)
    elif kind == "polydisc":
        nodes, weights = _tensor([_polar_rule(order, r) for r in radii])
    elif kind == "box":
        nodes, weights = _tensor([_square_rule(order, r) for r in radii])
    else:
        nodes, weights = _ball_rule(order, radii[0], m)
    nodes = nodes + np.asarray(center, dtype=complex)[None, :]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def grid_size(order: int, domain: Region) -> int:
    per_axis = order if domain.real else order * order
    return per_axis ** domain.dim


def gauss_grid(order: int, domain: Region) -> QuadratureGrid:
    """
    Tensor Gauss-Legendre x uniform angular grid over a region
    """
    if order < 2:
        raise DomainError(f"Quadrature order must be at least 2, got {order}")
    size = grid_size(order, domain)
    if size > MAX_GRID_NODES:
        raise ResourceError(
            f"Quadrature grid of order {order} over a {domain.dim}-dimensional region needs {size} nodes"
        )
    nodes, weights = _grid_cached(int(order), domain.key())
    return QuadratureGrid(nodes=nodes, weights=weights, order=int(order), domain=domain)


# Holomorphic differentiation

def distance_to_boundary(points: np.ndarray, domain: Region) -> np.ndarray:
    p = np.asarray(points, dtype=complex) - domain.center
    if domain.kind == "ball":
        return domain.radii[0] - np.sqrt(np.sum(np.abs(p) ** 2, axis=-1))
    if domain.kind == "box":
        gap = np.minimum(domain.radii - np.abs(p.real), domain.radii - np.abs(p.imag))
        return np.min(gap, axis=-1)
    return np.min(domain.radii - np.abs(p), axis=-1)


def holo_jacobian(
    f: HoloMap,
    point,
    circle_radius: Optional[float] = None,
    nodes: int = 16,
    domain: Optional[Region] = None,
) -> HoloJet:
    """
    Value and Jacobian of a holomorphic map by trapezoid quadrature of Cauchy's integral.

    point has shape (..., m); f maps (..., m) to (..., N).
    """
    if nodes < 8:
        raise DomainError(f"Cauchy quadrature needs at least 8 nodes, got {nodes}")
    p = np.asarray(point, dtype=complex)
    if p.ndim == 0:
        p = p.reshape(1)
    m = p.shape[-1]
    if circle_radius is None:
        if domain is None:
            raise DomainError("Either a circle radius or a holomorphy domain is required")
        radius = 0.4 * distance_to_boundary(p, domain)
        if np.any(radius <= 0):
            raise DomainError("Point lies outside the declared holomorphy domain")
    else:
        if circle_radius <= 0:
            raise DomainError(f"Circle radius must be positive, got {circle_radius}")
        radius = np.full(p.shape[:-1], float(circle_radius))
        if domain is not None and np.any(distance_to_boundary(p, domain) < circle_radius):
            raise DomainError(
                f"Circle of radius {circle_radius} leaves the declared holomorphy domain"
            )
    value = np.asarray(f(p))
    omega = np.exp(2j * pi * np.arange(nodes) / nodes)
    eye = np.eye(m)
    # shape (..., m, nodes, m): shift coordinate k by radius * omega_j
    shifts = radius[..., None, None, None] * omega[None, :, None] * eye[:, None, :]
    samples = np.asarray(f(p[..., None, None, :] + shifts))
    if samples.ndim == p.ndim + 1:
        samples = samples[..., None]
    derivative = np.mean(samples * np.conj(omega)[:, None], axis=-2) / radius[..., None, None]
    jacobian = np.swapaxes(derivative, -1, -2)
    if value.ndim == p.ndim - 1:
        jacobian = jacobian[..., 0, :]
    return HoloJet(value=value, jacobian=jacobian)


# Graph integrals

def graph_integral(
    f: HoloMap,
    domain: Region,
    density: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    indicator: Optional[Indicator] = None,
    order: int = 16,
    jacobian: Optional[HoloMap] = None,
    holomorphy: Optional[Region] = None,
):
    """
    Integral over the domain of density(x, f(x), Df(x)) restricted by the indicator
    """
    grid = gauss_grid(order, domain)
    x = grid.nodes
    y = np.asarray(f(x))
    if y.ndim == 1:
        y = y[:, None]
    mask = np.ones(x.shape[0], dtype=bool) if indicator is None else np.asarray(indicator(x, y), dtype=bool)
    if not np.any(mask):
        return 0.0
    xm, ym = x[mask], y[mask]
    if jacobian is not None:
        jm = np.asarray(jacobian(xm)).reshape(xm.shape[0], ym.shape[1], x.shape[1])
    else:
        jet = holo_jacobian(f, xm, domain=holomorphy or domain)
        jm = np.asarray(jet.jacobian).reshape(xm.shape[0], ym.shape[1], x.shape[1])
    values = np.asarray(density(xm, ym, jm))
    return np.dot(grid.weights[mask], values)


def volume_density(x: np.ndarray, y: np.ndarray, jac: np.ndarray) -> np.ndarray:
    m = jac.shape[-1]
    gram = np.eye(m) + np.conj(np.swapaxes(jac, -1, -2)) @ jac
    return np.real(np.linalg.det(gram))


def graph_volume(
    f: HoloMap,
    domain: Region,
    indicator: Optional[Indicator] = None,
    order: int = 16,
    jacobian: Optional[HoloMap] = None,
    holomorphy: Optional[Region] = None,
) -> float:
    """
    Riemannian volume of the graph of f over the domain portion selected by the indicator
    """
    value = graph_integral(f, domain, volume_density, indicator, order, jacobian, holomorphy)
    return float(np.real(value))


def restrict_base(domain: Region, region: Region, fiber_offset: Optional[float] = None) -> Tuple[Optional[Region], bool]:
    """
    Shrink a polydisc base domain to its intersection with the base projection of region.

    Returns (base region or None when empty, exact) where exact means the returned
    region is the whole base intersection. fiber_offset is |y - c_fiber| for
    constant graphs and enables the ball slice radius.
    """
    m = domain.dim
    if domain.kind != "polydisc" or domain.real or region.real:
        return domain, False
    concentric = np.allclose(region.center[:m], domain.center, atol=1e-14)
    if not concentric:
        return domain, False
    if region.kind == "polydisc":
        radii = np.minimum(domain.radii, region.radii[:m])
        return Region.polydisc(domain.center, radii), True
    if region.kind == "ball":
        r = region.radii[0]
        if fiber_offset is not None:
            slack = r ** 2 - fiber_offset ** 2
            if slack <= 0:
                return None, True
            r = np.sqrt(slack)
        if m == 1:
            return Region.polydisc(domain.center, np.minimum(domain.radii, r)), fiber_offset is not None
        if r <= domain.radii.min():
            return Region.ball(domain.center, r), fiber_offset is not None
        if r ** 2 >= np.sum(domain.radii ** 2):
            return domain, fiber_offset is not None
        return domain, False
    return domain, False


def trace_mass_graph(
    f: HoloMap,
    domain: Region,
    region: Region,
    m: Optional[int] = None,
    order: int = 16,
    jacobian: Optional[HoloMap] = None,
    constant_value=None,
    holomorphy: Optional[Region] = None,
) -> float:
    """
    Mass of the graph of f over the domain inside region against beta^m
    """
    m = domain.dim if m is None else m
    if m != domain.dim:
        raise DomainError(f"Graph dimension {m} does not match the {domain.dim}-dimensional domain")
    scale = factorial(m) * 2.0 ** m
    if constant_value is not None:
        y0 = np.atleast_1d(np.asarray(constant_value, dtype=complex))
        offset = None
        if region.kind == "ball":
            offset = float(np.sqrt(np.sum(np.abs(y0 - region.center[m:]) ** 2)))
        elif not region.project(range(m, region.dim)).contains(y0):
            return 0.0
        base, exact = restrict_base(domain, region, offset)
        if base is None:
            return 0.0
        if exact:
            return scale * base.volume()

        def constant_indicator(x, y):
            return region.contains(np.concatenate([x, np.broadcast_to(y0, (x.shape[0], y0.size))], axis=1))

        return scale * graph_volume(
            lambda x: np.broadcast_to(y0, x.shape[:-1] + y0.shape),
            base,
            constant_indicator,
            order,
            jacobian=lambda x: np.zeros(x.shape[:-1] + (y0.size, m), dtype=complex),
        )
    base, _ = restrict_base(domain, region)
    if base is None:
        return 0.0

    def inside(x, y):
        return region.contains(np.concatenate([x, y], axis=1))

    return scale * graph_volume(f, base, inside, order, jacobian, holomorphy or domain)


def trace_mass_graph_estimate(
    f: HoloMap,
    domain: Region,
    region: Region,
    order: int = 16,
    jacobian: Optional[HoloMap] = None,
    constant_value=None,
) -> QuadratureEstimate:
    """
    trace_mass_graph at order and 2 * order over the whole domain; the change is reported as the tolerance
    """
    coarse = trace_mass_graph(f, domain, region, order=order, jacobian=jacobian, constant_value=constant_value)
    fine = trace_mass_graph(f, domain, region, order=2 * order, jacobian=jacobian, constant_value=constant_value)
    return QuadratureEstimate(value=fine, tolerance=abs(fine - coarse), order=2 * order)


# Random streams

def rng_stream(seed: int, index: int) -> np.random.Generator:
    """
    Generator depending only on (seed, index)
    """
    sequence = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(int(index) & ((1 << 64) - 1),))
    return np.random.default_rng(sequence)


def pairwise_total(values) -> float:
    """
    Index-ordered reduction shared by every Monte Carlo estimator
    """
    return float(np.sum(np.asarray(values, dtype=float)))
