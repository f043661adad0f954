import logging
from dataclasses import dataclass, field
from math import ceil, log2, pi, sqrt
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from app.exceptions import DegenerateTransversalError, DomainError, LabError
from app.services.expressions import FamilyExpression, parse_family
from app.services.numerics import Region, holo_jacobian, rng_stream

logger = logging.getLogger(__name__)

TRANSVERSAL_KINDS = ("disc", "box", "segment", "cantor", "points")
PAIR_SEPARATION_FLOOR = 1e-9
PLAQUE_SEPARATION_FLOOR = 1e-10
GOLDEN_ANGLE = pi * (3.0 - sqrt(5.0))


def block_norm(x: np.ndarray) -> np.ndarray:
    """
    Max modulus over the last axis
    """
    return np.max(np.abs(x), axis=-1)


# Transversals

@dataclass(frozen=True, eq=False)
class Transversal:
    """
    Parameter set of a plaque family
    """
    kind: str
    region: Optional[Region] = None
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in TRANSVERSAL_KINDS:
            raise LabError(f"Unknown transversal kind '{self.kind}'")
        if self.kind == "points":
            pts = np.asarray(self.points, dtype=complex)
            if pts.ndim == 1:
                pts = pts[:, None]
            object.__setattr__(self, "points", pts)
        elif self.region is None:
            raise LabError(f"A {self.kind} transversal needs a region")

    @classmethod
    def disc(cls, radius: float = 1.0, codim: int = 1, center=None) -> "Transversal":
        center = np.zeros(codim) if center is None else center
        return cls("disc", Region.polydisc(center, [radius] * codim))

    @classmethod
    def box(cls, half_width: float = 0.5, codim: int = 1, center=None) -> "Transversal":
        center = np.zeros(codim) if center is None else center
        return cls("box", Region.box(center, [half_width] * codim))

    @classmethod
    def segment(cls, lo: float, hi: float) -> "Transversal":
        return cls("segment", Region.segment(lo, hi))

    @classmethod
    def cantor(cls, lo: float, hi: float) -> "Transversal":
        return cls("cantor", Region.segment(lo, hi))

    @classmethod
    def finite(cls, points) -> "Transversal":
        return cls("points", points=points)

    @property
    def dim(self) -> int:
        if self.kind == "points":
            return int(self.points.shape[1])
        return self.region.dim

    @property
    def is_real(self) -> bool:
        return self.kind in ("segment", "cantor")

    def contains(self, a, tol: float = 1e-12) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if self.kind == "points":
            gaps = block_norm(a[..., None, :] - self.points)
            return np.min(gaps, axis=-1) <= tol
        grown = Region(self.region.kind, self.region.center, self.region.radii + tol, real=self.region.real)
        return grown.contains(a)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.dim
        if self.kind == "points":
            return self.points[rng.integers(0, self.points.shape[0], size=n)]
        c, r = self.region.center, self.region.radii
        if self.kind == "disc":
            radius = r * np.sqrt(rng.random((n, d)))
            return c + radius * np.exp(2j * pi * rng.random((n, d)))
        if self.kind == "box":
            return c + r * ((2 * rng.random((n, d)) - 1) + 1j * (2 * rng.random((n, d)) - 1))
        if self.kind == "segment":
            return c + r * (2 * rng.random((n, d)) - 1) + 0j
        digits = rng.random((n, 24)) < 0.5
        return cantor_points(digits, float(c[0].real), float(r[0]))[:, None] + 0j

    def grid(self, count: int) -> np.ndarray:
        """
        Deterministic sample of about count parameters, center included when it belongs
        """
        d = self.dim
        if self.kind == "points":
            return self.points
        c, r = self.region.center, self.region.radii
        if self.kind == "cantor":
            depth = max(1, ceil(log2(max(count, 2))))
            digits = ((np.arange(2 ** depth)[:, None] >> np.arange(depth - 1, -1, -1)) & 1).astype(bool)
            return cantor_points(digits, float(c[0].real), float(r[0]), midpoint=True)[:count, None] + 0j
        if d > 1:
            pts = self.sample(rng_stream(0, d), max(count - 1, 1))
            return np.concatenate([c[None, :], pts], axis=0)
        if self.kind == "disc":
            k = np.arange(count)
            radius = r[0] * np.sqrt(k / max(count - 1, 1))
            return (c[0] + radius * np.exp(1j * GOLDEN_ANGLE * k))[:, None]
        if self.kind == "segment":
            n = count if count % 2 else count + 1
            return (c[0] + np.linspace(-r[0], r[0], n) + 0j)[:, None]
        side = max(3, ceil(sqrt(count)))
        side = side if side % 2 else side + 1
        t = np.linspace(-r[0], r[0], side)
        return (c[0] + (t[:, None] + 1j * t[None, :]).ravel())[:, None]


def cantor_points(digits: np.ndarray, center: float, half_width: float, midpoint: bool = False) -> np.ndarray:
    """
    Points of the middle-thirds set in [center - h, center + h] from binary digits (n, depth)
    """
    depth = digits.shape[-1]
    scales = 2.0 * 3.0 ** -np.arange(1, depth + 1)
    unit = digits.astype(float) @ scales
    if midpoint:
        unit = unit + 0.5 * 3.0 ** -depth
    return center - half_width + 2.0 * half_width * unit


# Families

class PlaqueFamily:
    """
    Chart-local lamination: a ↦ (z' ↦ h_a(z')) with values in C^codim
    """

    def __init__(
        self,
        q: int,
        codim: int,
        transversal: Transversal,
        holomorphy_radius: float = 1.0,
        label: str = "",
    ):
        if q < 1 or codim < 1:
            raise DomainError(f"Leaf dimension and codimension must be positive, got q={q}, codim={codim}")
        self.q = q
        self.codim = codim
        self.transversal = transversal
        self.holomorphy_radius = float(holomorphy_radius)
        self.label = label

    @property
    def n(self) -> int:
        return self.q + self.codim

    @property
    def z_free(self) -> bool:
        return False

    @property
    def holomorphy_domain(self) -> Region:
        return Region.polydisc(np.zeros(self.q), [self.holomorphy_radius] * self.q)

    def plaque_domain(self, radius: Optional[float] = None) -> Region:
        return Region.polydisc(np.zeros(self.q), [radius or self.holomorphy_radius] * self.q)

    def evaluate(self, a, z) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, a, z) -> np.ndarray:
        """
        Dh_a(z') of shape (..., codim, q)
        """
        a = np.asarray(a, dtype=complex)
        z = np.asarray(z, dtype=complex)
        shape = np.broadcast_shapes(a.shape[:-1], z.shape[:-1])
        a = np.broadcast_to(a, shape + a.shape[-1:])
        z = np.broadcast_to(z, shape + z.shape[-1:])
        jet = holo_jacobian(lambda pts: self.evaluate(a[..., None, None, :], pts) if pts.ndim > z.ndim else self.evaluate(a, pts),
                            z, domain=self.holomorphy_domain)
        return np.asarray(jet.jacobian).reshape(shape + (self.codim, self.q))

    def center(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        return self.evaluate(a, np.zeros(a.shape[:-1] + (self.q,), dtype=complex))

    def graph_map(self, a) -> Callable[[np.ndarray], np.ndarray]:
        a = np.asarray(a, dtype=complex)
        return lambda z: self.evaluate(a, z)

    def graph_jacobian(self, a) -> Callable[[np.ndarray], np.ndarray]:
        a = np.asarray(a, dtype=complex)
        return lambda z: self.jacobian(a, z)

    def bound(self, count: int = 32) -> float:
        params = self.transversal.grid(count)
        z = _disc_samples(self.q, self.holomorphy_radius, count)
        return float(np.max(block_norm(self.evaluate(params[:, None, :], z[None, :, :]))))


class ExpressionFamily(PlaqueFamily):
    def __init__(
        self,
        expressions: Sequence[FamilyExpression],
        q: int,
        transversal: Transversal,
        holomorphy_radius: float = 1.0,
        label: str = "",
    ):
        super().__init__(q, len(expressions), transversal, holomorphy_radius, label)
        self.expressions = list(expressions)
        for expr in self.expressions:
            if expr.max_index("z") > q:
                raise DomainError(f"Expression {expr} uses z{expr.max_index('z')} but the leaf dimension is {q}")
            if expr.max_index("a") > transversal.dim:
                raise DomainError(
                    f"Expression {expr} uses a{expr.max_index('a')} but the transversal has dimension {transversal.dim}"
                )

    @property
    def z_free(self) -> bool:
        return not any(expr.uses_z for expr in self.expressions)

    def evaluate(self, a, z) -> np.ndarray:
        return np.stack([expr.evaluate(a, z) for expr in self.expressions], axis=-1)

    def jacobian(self, a, z) -> np.ndarray:
        return np.stack([expr.evaluate_with_gradient(a, z)[1] for expr in self.expressions], axis=-2)

    def __repr__(self) -> str:
        return f"ExpressionFamily({[str(e) for e in self.expressions]}, q={self.q})"


class CallableFamily(PlaqueFamily):
    def __init__(
        self,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        q: int,
        codim: int,
        transversal: Transversal,
        holomorphy_radius: float = 1.0,
        label: str = "",
        jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    ):
        super().__init__(q, codim, transversal, holomorphy_radius, label)
        self.fn = fn
        self._jacobian = jacobian

    def evaluate(self, a, z) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        z = np.asarray(z, dtype=complex)
        shape = np.broadcast_shapes(a.shape[:-1], z.shape[:-1])
        return np.broadcast_to(np.asarray(self.fn(a, z), dtype=complex), shape + (self.codim,))

    def jacobian(self, a, z) -> np.ndarray:
        if self._jacobian is not None:
            return np.asarray(self._jacobian(a, z), dtype=complex)
        return super().jacobian(a, z)


class RelabeledFamily(PlaqueFamily):
    """
    Same plaques, parameters moved by a bijection s = forward(t)
    """

    def __init__(
        self,
        base: PlaqueFamily,
        forward: Callable[[np.ndarray], np.ndarray],
        inverse: Callable[[np.ndarray], np.ndarray],
        transversal: Transversal,
        label: str = "",
    ):
        super().__init__(base.q, base.codim, transversal, base.holomorphy_radius, label or base.label)
        self.base = base
        self.forward = forward
        self.inverse = inverse

    @property
    def z_free(self) -> bool:
        return self.base.z_free

    def evaluate(self, a, z) -> np.ndarray:
        return self.base.evaluate(self.inverse(np.asarray(a, dtype=complex)), z)

    def jacobian(self, a, z) -> np.ndarray:
        return self.base.jacobian(self.inverse(np.asarray(a, dtype=complex)), z)


class NumericInverse:
    """
    Inverse of t ↦ forward(t) by least squares, seeded from a sampled table
    """

    def __init__(self, forward: Callable[[np.ndarray], np.ndarray], table_t: np.ndarray, real: bool):
        self.forward = forward
        self.table_t = np.asarray(table_t, dtype=complex)
        self.table_s = np.asarray(forward(self.table_t), dtype=complex)
        self.real = real
        self._cache: Dict[bytes, np.ndarray] = {}

    def _solve(self, s: np.ndarray) -> np.ndarray:
        key = s.tobytes()
        if key in self._cache:
            return self._cache[key]
        start = self.table_t[np.argmin(block_norm(self.table_s - s))]
        d = s.size

        if self.real:
            def residual(x):
                out = self.forward((x + 0j)[None, :])[0] - s
                return np.concatenate([out.real, out.imag])
            x0 = start.real
        else:
            def residual(x):
                out = self.forward((x[:d] + 1j * x[d:])[None, :])[0] - s
                return np.concatenate([out.real, out.imag])
            x0 = np.concatenate([start.real, start.imag])
        result = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        t = (result.x + 0j) if self.real else result.x[:d] + 1j * result.x[d:]
        self._cache[key] = t
        return t

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        flat = s.reshape(-1, s.shape[-1])
        out = np.array([self._solve(row) for row in flat])
        return out.reshape(s.shape[:-1] + (out.shape[-1],))


@dataclass(frozen=True, eq=False)
class FlowBox:
    family: PlaqueFamily
    rho: float = 0.5
    label: str = ""

    def __post_init__(self):
        if not 0.0 < self.rho <= 0.5:
            raise DomainError(f"Working radius must lie in (0, 1/2], got {self.rho}")


# Builders

def family_from_text(
    text: Union[str, Sequence[str]],
    q: int = 1,
    transversal: Optional[Transversal] = None,
    label: str = "",
) -> ExpressionFamily:
    texts = [text] if isinstance(text, str) else list(text)
    expressions = [parse_family(t) for t in texts]
    transversal = transversal or Transversal.disc(1.0, len(expressions))
    return ExpressionFamily(expressions, q, transversal, label=label)


def _disc_samples(q: int, radius: float, count: int) -> np.ndarray:
    k = np.arange(count)
    r = radius * np.sqrt(k / max(count - 1, 1))
    points = r * np.exp(1j * GOLDEN_ANGLE * k)
    if q == 1:
        return points[:, None]
    rolled = [np.roll(points, 7 * j) for j in range(q)]
    return np.stack(rolled, axis=-1)


def _pairwise_min_gap(values: np.ndarray) -> Tuple[float, Tuple[int, int]]:
    gaps = block_norm(values[:, None, :] - values[None, :, :])
    gaps[np.triu_indices(values.shape[0])] = np.inf
    gaps = gaps.T
    flat = int(np.argmin(gaps))
    i, j = divmod(flat, gaps.shape[1])
    return float(gaps[i, j]), (i, j)


def center_family(
    raw: PlaqueFamily,
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    samples: int = 256,
) -> PlaqueFamily:
    """
    Reindex a family by a := f_t(0) so that h_a(0) = a
    """
    params = raw.transversal.grid(samples)
    centers = raw.center(params)
    if params.shape[0] > 1:
        gap, (i, j) = _pairwise_min_gap(centers)
        if gap < PLAQUE_SEPARATION_FLOOR and block_norm(params[i] - params[j]) > PLAQUE_SEPARATION_FLOOR:
            raise DegenerateTransversalError(
                f"Parameters {params[i].tolist()} and {params[j].tolist()} have centers {gap:.3e} apart"
            )
    if centers.shape == params.shape and np.max(block_norm(centers - params)) <= 1e-12:
        logger.debug("Family already in centered form")
        return raw

    def forward(t):
        return raw.center(np.asarray(t, dtype=complex))

    if inverse is None:
        inverse = NumericInverse(forward, params, raw.transversal.is_real)
    if raw.transversal.kind == "points":
        transversal = Transversal.finite(centers)
    else:
        reach = float(np.max(block_norm(centers))) if centers.size else 1.0
        transversal = Transversal.disc(max(reach, 1e-12) * (1.0 + 1e-9), raw.codim)
    logger.info(f"Centered family {raw.label or raw!r} over {params.shape[0]} sampled parameters")
    return RelabeledFamily(raw, forward, inverse, transversal, label=raw.label)


# Diagnostics

def verify_holomorphy(
    family: PlaqueFamily,
    a,
    tol: float = 1e-8,
    count: int = 32,
    nodes: int = 32,
) -> float:
    """
    Max over sampled z' of the circle-mean defect and of the antiholomorphic circle mode
    """
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    radius = 0.25 * family.holomorphy_radius
    z = _disc_samples(family.q, 0.5 * family.holomorphy_radius, count)
    omega = np.exp(2j * pi * np.arange(nodes) / nodes)
    worst = 0.0
    for k in range(family.q):
        shift = np.zeros(family.q, dtype=complex)
        shift[k] = 1.0
        ring = z[:, None, :] + radius * omega[None, :, None] * shift
        values = family.evaluate(a, ring)
        center = family.evaluate(a, z)
        mean_defect = np.abs(center - values.mean(axis=1))
        anti_mode = np.abs((values * omega[None, :, None]).mean(axis=1))
        worst = max(worst, float(mean_defect.max()), float(anti_mode.max()))
    if worst > tol:
        logger.warning(f"Holomorphy residual {worst:.3e} exceeds {tol:.1e} at parameter {a.tolist()}")
    return worst


@dataclass
class BilipschitzEstimate:
    c_lower: Optional[float]
    c_upper: Optional[float]
    pairs: int
    status: str = "ok"


def _boundary_points(q: int, rho: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Interior samples plus the distinguished boundary |z_k| = rho
    """
    interior = rho * np.sqrt(rng.random((count, q))) * np.exp(2j * pi * rng.random((count, q)))
    angles = np.exp(2j * pi * np.arange(count) / count)
    torus = rho * np.stack([np.roll(angles, 3 * k) for k in range(q)], axis=-1)
    return np.concatenate([np.zeros((1, q), dtype=complex), interior, torus], axis=0)


def estimate_bilipschitz(family: PlaqueFamily, rho: float, sample_pairs: int = 256, seed: int = 0) -> BilipschitzEstimate:
    """
    Sampled bounds of ||h_a - h_b|| / ||a - b|| over pairs and points with norm <= rho
    """
    if rho >= family.holomorphy_radius:
        raise DomainError(f"rho={rho} must stay inside the holomorphy radius {family.holomorphy_radius}")
    rng = rng_stream(seed, 0)
    grid = family.transversal.grid(32)
    drawn = family.transversal.sample(rng, sample_pairs)
    params = np.concatenate([grid, drawn], axis=0)
    first = params[rng.integers(0, params.shape[0], size=sample_pairs)]
    second = params[rng.integers(0, params.shape[0], size=sample_pairs)]
    gap = block_norm(first - second)
    keep = gap > PAIR_SEPARATION_FLOOR
    if not np.any(keep):
        logger.warning("No parameter pair clears the separation floor")
        return BilipschitzEstimate(None, None, 0, status="insufficient-transversal")
    first, second, gap = first[keep], second[keep], gap[keep]
    z = _boundary_points(family.q, rho, 16, rng)
    diff = block_norm(family.evaluate(first[:, None, :], z[None]) - family.evaluate(second[:, None, :], z[None]))
    ratio = diff / gap[:, None]
    return BilipschitzEstimate(float(ratio.min()), float(ratio.max()), int(keep.sum()))


def derivative_bound(family: PlaqueFamily, rho: float, samples: int = 512, seed: int = 0) -> float:
    """
    k = sup ||d g_alpha / d w'|| / ||alpha|| with ||alpha|| = ||alpha_1|| + ||alpha_2||
    """
    if 2.0 * rho > family.holomorphy_radius:
        raise DomainError(f"z' + w' leaves the holomorphy domain for rho={rho}")
    rng = rng_stream(seed, 1)
    grid = family.transversal.grid(16)
    a = np.concatenate([grid, family.transversal.sample(rng, samples)], axis=0)
    b = np.concatenate([grid[::-1], family.transversal.sample(rng, samples)], axis=0)
    b = np.concatenate([b, family.transversal.sample(rng, a.shape[0] - b.shape[0])], axis=0) if b.shape[0] < a.shape[0] else b
    alpha_norm = block_norm(a) + block_norm(b - a)
    keep = alpha_norm > 1e-12
    a, b, alpha_norm = a[keep], b[keep], alpha_norm[keep]
    if a.shape[0] == 0:
        return 0.0
    z = _boundary_points(family.q, rho, 16, rng)
    # the distinguished boundary touches the holomorphy circle when 2 rho = R
    zw = (z[None, :, :] + z[None, :, :]) * (1.0 - 1e-9)
    jac = family.jacobian(b[:, None, :], zw)
    op_norm = np.max(np.sum(np.abs(jac), axis=-1), axis=-1)
    return float(np.max(op_norm / alpha_norm[:, None]))


def one_sided_slopes(family: PlaqueFamily, a, direction, z, step: float = 1e-6) -> Tuple[np.ndarray, np.ndarray]:
    """
    Left and right difference quotients of h in the transversal variable
    """
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    d = np.atleast_1d(np.asarray(direction, dtype=complex))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    here = family.evaluate(a, z)
    right = (family.evaluate(a + step * d, z) - here) / step
    left = (here - family.evaluate(a - step * d, z)) / step
    return left, right


@dataclass
class FamilyInvariantReport:
    bound: float
    holomorphy_residual: float
    centering_defect: float
    zero_plaque: Optional[float]
    min_plaque_gap: float
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_family_invariants(family: PlaqueFamily, count: int = 32, tol: float = 1e-8) -> FamilyInvariantReport:
    """
    The four plaque-family invariants on a count x count sample
    """
    params = family.transversal.grid(count)[:count]
    z = _disc_samples(family.q, family.holomorphy_radius, count)
    values = family.evaluate(params[:, None, :], z[None, :, :])
    bound = float(np.max(block_norm(values)))
    residual = max(verify_holomorphy(family, p, tol=tol, count=8) for p in params)
    centers = family.center(params)
    centering = float(np.max(block_norm(centers - params))) if centers.shape == params.shape else float("inf")
    zero_plaque = None
    zero = np.zeros((1, family.transversal.dim), dtype=complex)
    if bool(family.transversal.contains(zero)[0]):
        zero_plaque = float(np.max(block_norm(family.evaluate(zero, z))))
    gaps = block_norm(values[:, None, :, :] - values[None, :, :, :]).min(axis=-1)
    gaps[np.diag_indices(params.shape[0])] = np.inf
    min_gap = float(gaps.min()) if params.shape[0] > 1 else float("inf")
    report = FamilyInvariantReport(bound, residual, centering, zero_plaque, min_gap)
    if bound > 1.0 + 1e-12:
        report.failures.append(f"values leave the unit polydisc (sup {bound:.6f})")
    if residual > tol:
        report.failures.append(f"holomorphy residual {residual:.3e}")
    if centering > 1e-12:
        report.failures.append(f"not centered: max |h_a(0) - a| = {centering:.3e}")
    if zero_plaque is not None and zero_plaque > 1e-12:
        report.failures.append(f"h_0 is not identically 0 (sup {zero_plaque:.3e})")
    if min_gap <= PLAQUE_SEPARATION_FLOOR:
        report.failures.append(f"plaques cross (min gap {min_gap:.3e})")
    return report


def is_pencil(family: PlaqueFamily, count: int = 16) -> bool:
    """
    Centered family of constant graphs, i.e. plaques {z'' = a}
    """
    if not family.z_free:
        return False
    params = family.transversal.grid(count)
    centers = family.center(params)
    return centers.shape == params.shape and float(np.max(block_norm(centers - params))) <= 1e-12
