import logging
from math import pi
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import LabError, ResourceError, SupportError
from app.services.numerics import Region, gauss_grid

logger = logging.getLogger(__name__)

MAX_CANTOR_DEPTH = 30
CANTOR_CHUNK_DEPTH = 20
SAMPLE_DIGITS = 34

ParamFunction = Callable[[np.ndarray], np.ndarray]


class TransverseMeasure:
    """
    Positive measure on a transversal, parameters of shape (..., d)
    """
    variant = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def total_mass(self) -> float:
        raise NotImplementedError

    @property
    def diffuse(self) -> bool:
        return True

    @property
    def resolution(self) -> float:
        """
        Spacing of the discretisation used by integrate
        """
        return 0.0

    def discretize(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Points (P, d) and weights (P,) with integrate(f) = weights @ f(points)
        """
        raise NotImplementedError

    def integrate(self, f: ParamFunction, within: Optional[Region] = None):
        points, weights = self.discretize()
        if points.shape[0] == 0:
            return 0.0
        return np.tensordot(weights, np.asarray(f(points)), axes=(0, 0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def atoms(self) -> List[Tuple[np.ndarray, float]]:
        return []

    def support_sample(self) -> np.ndarray:
        return self.discretize()[0]


class AtomicMeasure(TransverseMeasure):
    variant = "atomic"

    def __init__(self, locations, weights):
        locations = np.asarray(locations, dtype=complex)
        if locations.ndim == 1:
            locations = locations[:, None]
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if locations.shape[0] != weights.size:
            raise LabError(f"{locations.shape[0]} atoms but {weights.size} weights")
        if np.any(weights <= 0):
            raise LabError("Atom weights must be positive")
        if locations.shape[0] > 1:
            gaps = np.max(np.abs(locations[:, None, :] - locations[None, :, :]), axis=-1)
            gaps[np.diag_indices(locations.shape[0])] = np.inf
            if gaps.min() == 0.0:
                raise LabError("Atom locations must be pairwise distinct")
        self.locations = locations
        self.weights = weights

    @classmethod
    def zero(cls, dim: int = 1) -> "AtomicMeasure":
        """
        The zero measure, used for empty diffuse or atomic parts
        """
        return cls(np.zeros((0, dim), dtype=complex), np.zeros(0))

    @classmethod
    def dirac(cls, location, weight: float = 1.0) -> "AtomicMeasure":
        return cls(np.atleast_2d(np.asarray(location, dtype=complex)), [weight])

    @property
    def dim(self) -> int:
        return int(self.locations.shape[1])

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def diffuse(self) -> bool:
        return self.locations.shape[0] == 0

    def discretize(self):
        return self.locations, self.weights

    def sample(self, rng, n):
        p = self.weights / self.weights.sum()
        return self.locations[rng.choice(self.weights.size, size=n, p=p)]

    def atoms(self):
        return [(loc, float(w)) for loc, w in zip(self.locations, self.weights)]


class DensityMeasure(TransverseMeasure):
    """
    density(a) da on a region; the density is scaled so the total mass is `mass`
    """
    variant = "density"

    def __init__(
        self,
        region: Region,
        density: Optional[ParamFunction] = None,
        order: int = 32,
        mass: float = 1.0,
    ):
        if mass <= 0:
            raise LabError(f"Total mass must be positive, got {mass}")
        self.region = region
        self.order = order
        self._raw = density
        grid = gauss_grid(order, region)
        raw = self._raw_density(grid.nodes)
        if np.any(raw < -1e-14):
            raise LabError("Density is negative on the quadrature grid")
        raw_total = float(np.dot(grid.weights, raw))
        if raw_total <= 0:
            raise LabError("Density integrates to zero")
        self.scale = mass / raw_total
        self._mass = float(mass)
        self.envelope = float(raw.max()) * 1.1

    @classmethod
    def lebesgue(cls, region: Region, order: int = 32, mass: float = 1.0) -> "DensityMeasure":
        return cls(region, None, order=order, mass=mass)

    def _raw_density(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if self._raw is None:
            return np.ones(a.shape[:-1])
        return np.real(np.asarray(self._raw(a), dtype=complex))

    @property
    def dim(self) -> int:
        return self.region.dim

    @property
    def total_mass(self) -> float:
        return self._mass

    @property
    def uniform(self) -> bool:
        return self._raw is None

    @property
    def resolution(self) -> float:
        return self.region.radius / self.order

    def pdf(self, a) -> np.ndarray:
        """
        Scaled density, zero outside the region
        """
        a = np.asarray(a, dtype=complex)
        return np.where(self.region.contains(a), self.scale * self._raw_density(a), 0.0)

    def discretize(self, region: Optional[Region] = None):
        grid = gauss_grid(self.order, region or self.region)
        return grid.nodes, grid.weights * self.scale * self._raw_density(grid.nodes)

    def integrate(self, f, within: Optional[Region] = None):
        """
        Quadrature; a concentric polydisc `within` the integrand vanishes outside shrinks the grid
        """
        region = self.region
        if within is not None and self.region.kind == "polydisc" and within.kind in ("polydisc", "ball") \
                and within.dim == self.region.dim and not within.real \
                and np.allclose(within.center, self.region.center, atol=1e-14):
            if within.kind == "polydisc" or within.dim == 1:
                region = Region.polydisc(self.region.center, np.minimum(self.region.radii, within.radii))
        points, weights = self.discretize(region)
        return np.tensordot(weights, np.asarray(f(points)), axes=(0, 0))

    def sample_uniform(self, u: np.ndarray) -> np.ndarray:
        """
        Map unit-cube points (n, 2d) (first d columns for real-only regions) onto the region uniformly
        """
        c, r, d = self.region.center, self.region.radii, self.dim
        if self.region.real:
            return c + r * (2.0 * u[:, :d] - 1.0) + 0j
        if self.region.kind == "polydisc":
            return c + r * np.sqrt(u[:, :d]) * np.exp(2j * pi * u[:, d:2 * d])
        if self.region.kind == "box":
            return c + r * ((2.0 * u[:, :d] - 1.0) + 1j * (2.0 * u[:, d:2 * d] - 1.0))
        raise LabError("Uniform sampling of balls is not supported")

    def sample(self, rng, n):
        d = self.dim
        if self.uniform:
            return self.sample_uniform(rng.random((n, 2 * d)))
        out = np.empty((0, d), dtype=complex)
        while out.shape[0] < n:
            draw = self.sample_uniform(rng.random((2 * n, 2 * d)))
            keep = rng.random(2 * n) * self.envelope < self._raw_density(draw)
            out = np.concatenate([out, draw[keep]], axis=0)
        return out[:n]

    def support_sample(self):
        return gauss_grid(min(self.order, 8), self.region).nodes


class CantorMeasure(TransverseMeasure):
    """
    Self-similar measure on the middle-thirds set of [center - h, center + h]
    """
    variant = "cantor"

    def __init__(self, center: float = 0.0, half_width: float = 0.5, depth: int = 12, weights=(0.5, 0.5)):
        if depth > MAX_CANTOR_DEPTH:
            raise ResourceError(f"Cantor depth {depth} exceeds the limit {MAX_CANTOR_DEPTH}")
        if depth < 1:
            raise LabError(f"Cantor depth must be positive, got {depth}")
        w = np.asarray(weights, dtype=float)
        if w.shape != (2,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise LabError(f"Cantor branch weights must be two positive numbers summing to 1, got {list(weights)}")
        if half_width <= 0:
            raise LabError(f"Cantor half width must be positive, got {half_width}")
        self.center = float(center)
        self.half_width = float(half_width)
        self.depth = int(depth)
        self.weights = w

    @property
    def dim(self) -> int:
        return 1

    @property
    def total_mass(self) -> float:
        return 1.0

    @property
    def resolution(self) -> float:
        return 2.0 * self.half_width * 3.0 ** -self.depth

    def cylinders(self, depth: Optional[int] = None, prefix: Sequence[int] = ()) -> Tuple[np.ndarray, np.ndarray]:
        """
        Midpoints and masses of the depth-level cylinders below a digit prefix, in increasing order
        """
        depth = self.depth if depth is None else depth
        free = depth - len(prefix)
        idx = np.arange(2 ** free)
        tail = ((idx[:, None] >> np.arange(free - 1, -1, -1)) & 1).astype(np.int8)
        head = np.broadcast_to(np.asarray(prefix, dtype=np.int8), (idx.size, len(prefix)))
        digits = np.concatenate([head, tail], axis=1)
        scales = 2.0 * 3.0 ** -np.arange(1, depth + 1)
        unit = digits @ scales + 0.5 * 3.0 ** -depth
        ones = digits.sum(axis=1)
        mass = self.weights[1] ** ones * self.weights[0] ** (depth - ones)
        return self.center - self.half_width + 2.0 * self.half_width * unit, mass

    def discretize(self):
        if self.depth > CANTOR_CHUNK_DEPTH:
            raise ResourceError(f"Cantor depth {self.depth} is integrated in chunks; discretize is limited to {CANTOR_CHUNK_DEPTH}")
        points, mass = self.cylinders()
        return points[:, None] + 0j, mass

    def integrate(self, f, within=None):
        if self.depth <= CANTOR_CHUNK_DEPTH:
            return super().integrate(f)
        lead = self.depth - CANTOR_CHUNK_DEPTH
        total = 0.0
        for k in range(2 ** lead):
            prefix = [(k >> (lead - 1 - j)) & 1 for j in range(lead)]
            points, mass = self.cylinders(prefix=prefix)
            total = total + np.tensordot(mass, np.asarray(f(points[:, None] + 0j)), axes=(0, 0))
        return total

    def sample(self, rng, n):
        digits = (rng.random((n, SAMPLE_DIGITS)) < self.weights[1]).astype(float)
        scales = 2.0 * 3.0 ** -np.arange(1, SAMPLE_DIGITS + 1)
        unit = digits @ scales
        return (self.center - self.half_width + 2.0 * self.half_width * unit)[:, None] + 0j

    def support_sample(self):
        points, _ = self.cylinders(min(self.depth, 10))
        return points[:, None] + 0j


class MixedMeasure(TransverseMeasure):
    variant = "mixed"

    def __init__(self, parts: Sequence[TransverseMeasure]):
        parts = [p for p in parts if p.total_mass > 0]
        if not parts:
            raise LabError("A mixed measure needs at least one part with positive mass")
        if len({p.dim for p in parts}) != 1:
            raise LabError("Mixed measure parts live on transversals of different dimension")
        self.parts = list(parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    @property
    def total_mass(self) -> float:
        return float(sum(p.total_mass for p in self.parts))

    @property
    def diffuse(self) -> bool:
        return all(p.diffuse for p in self.parts)

    @property
    def resolution(self) -> float:
        return max(p.resolution for p in self.parts)

    def discretize(self):
        chunks = [p.discretize() for p in self.parts]
        return np.concatenate([c[0] for c in chunks], axis=0), np.concatenate([c[1] for c in chunks])

    def integrate(self, f, within=None):
        return sum(p.integrate(f, within) for p in self.parts)

    def sample(self, rng, n):
        masses = np.array([p.total_mass for p in self.parts])
        which = rng.choice(len(self.parts), size=n, p=masses / masses.sum())
        out = np.empty((n, self.dim), dtype=complex)
        for k, part in enumerate(self.parts):
            hits = np.flatnonzero(which == k)
            if hits.size:
                out[hits] = part.sample(rng, hits.size)
        return out

    def atoms(self):
        return [atom for p in self.parts for atom in p.atoms()]

    def support_sample(self):
        return np.concatenate([p.support_sample() for p in self.parts], axis=0)


class PushforwardMeasure(TransverseMeasure):
    """
    Image of a measure under a parameter bijection
    """
    variant = "pushforward"

    def __init__(self, base: TransverseMeasure, forward: ParamFunction):
        self.base = base
        self.forward = forward

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def total_mass(self) -> float:
        return self.base.total_mass

    @property
    def diffuse(self) -> bool:
        return self.base.diffuse

    @property
    def resolution(self) -> float:
        return self.base.resolution

    def discretize(self):
        points, weights = self.base.discretize()
        return np.asarray(self.forward(points), dtype=complex), weights

    def integrate(self, f, within=None):
        return self.base.integrate(lambda t: f(np.asarray(self.forward(t), dtype=complex)))

    def sample(self, rng, n):
        return np.asarray(self.forward(self.base.sample(rng, n)), dtype=complex)

    def atoms(self):
        return [(np.asarray(self.forward(loc[None, :]))[0], w) for loc, w in self.base.atoms()]

    def support_sample(self):
        return np.asarray(self.forward(self.base.support_sample()), dtype=complex)


def integrate_measure(mu: TransverseMeasure, f: ParamFunction, within: Optional[Region] = None):
    """
    Integral of a vectorised parameter function against a transverse measure
    """
    return mu.integrate(f, within)


def check_support(mu: TransverseMeasure, transversal) -> None:
    points = mu.support_sample()
    if points.shape[0] == 0:
        return
    if points.shape[1] != transversal.dim:
        raise SupportError(f"Measure lives in dimension {points.shape[1]}, transversal in {transversal.dim}")
    outside = ~np.asarray(transversal.contains(points), dtype=bool)
    if np.any(outside):
        witness = points[np.argmax(outside)]
        raise SupportError(f"Measure charges the parameter {witness.tolist()} outside the transversal")


# Cantor oracles

def cantor_interval_mass(mu: CantorMeasure, lo, hi, depth: Optional[int] = None) -> np.ndarray:
    """
    Exact mass of [lo, hi] counted over depth-level cylinder midpoints
    """
    midpoints, mass = mu.cylinders(depth)
    cumulative = np.concatenate([[0.0], np.cumsum(mass)])
    left = np.searchsorted(midpoints, np.asarray(lo, dtype=float), side="left")
    right = np.searchsorted(midpoints, np.asarray(hi, dtype=float), side="right")
    return cumulative[right] - cumulative[left]


def cantor_diagonal_mass(mu: CantorMeasure, eps: float, depth: Optional[int] = None) -> float:
    """
    (mu x mu){|b - a| <= eps} by enumeration of depth-level cylinders
    """
    midpoints, mass = mu.cylinders(depth)
    near = cantor_interval_mass(mu, midpoints - eps, midpoints + eps, depth)
    return float(np.dot(mass, near))
