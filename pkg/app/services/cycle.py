import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import DegenerateTransversalError, DomainError, SupportError
from app.schemas.cycle import DiagonalMassPoint
from app.services.lamination import (
    FlowBox,
    PlaqueFamily,
    RelabeledFamily,
    Transversal,
    block_norm,
    center_family,
    is_pencil,
)
from app.services.measures import (
    AtomicMeasure,
    CantorMeasure,
    MixedMeasure,
    PushforwardMeasure,
    TransverseMeasure,
    cantor_diagonal_mass,
    check_support,
)
from app.services.numerics import Region, gauss_grid, pairwise_total, rng_stream, trace_mass_graph

logger = logging.getLogger(__name__)

MAX_CHUNK_POINTS = 1 << 20
DIAGONAL_BLOCK = 1 << 14

Multi = Tuple[int, ...]
Coefficient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FoliatedCycleLocal:
    """
    T = integral of [plaque a] d mu(a) in one flow box
    """
    box: FlowBox
    measure: TransverseMeasure
    validate: bool = True

    def __post_init__(self):
        if self.validate:
            check_support(self.measure, self.box.family.transversal)

    @classmethod
    def build(cls, family: PlaqueFamily, measure: TransverseMeasure, rho: float = 0.5, label: str = "") -> "FoliatedCycleLocal":
        return cls(FlowBox(family, rho, label), measure)

    @property
    def family(self) -> PlaqueFamily:
        return self.box.family

    @property
    def q(self) -> int:
        return self.family.q

    @property
    def n(self) -> int:
        return self.family.n

    @property
    def diffuse(self) -> bool:
        return self.measure.diffuse

    def with_measure(self, measure: TransverseMeasure) -> "FoliatedCycleLocal":
        return FoliatedCycleLocal(self.box, measure, validate=self.validate)


# Test forms

def q_subsets(n: int, q: int) -> List[Multi]:
    return list(combinations(range(n), q))


class TestForm:
    """
    (q,q)-form sum_{I,J} c_IJ(x) prod_k (i dz_{I_k} ^ dz̄_{J_k}), coefficients zero outside support
    """
    __test__ = False

    def __init__(
        self,
        n: int,
        q: int,
        coefficients: Dict[Tuple[Multi, Multi], Coefficient],
        support: Region,
        label: str = "",
    ):
        if support.kind != "polydisc" or support.dim != n:
            raise SupportError(f"Test form support must be a polydisc in C^{n}")
        for (I, J) in coefficients:
            if len(I) != q or len(J) != q or sorted(I) != list(I) or sorted(J) != list(J):
                raise DomainError(f"Bad multi-index pair {I}, {J} for a ({q},{q})-form")
        self.n = n
        self.q = q
        self.coefficients = dict(coefficients)
        self.support = support
        self.label = label

    @classmethod
    def constant(cls, n: int, q: int, I: Multi, J: Multi, radii, value: complex = 1.0, label: str = "") -> "TestForm":
        support = Region.polydisc(np.zeros(n), radii)
        return cls(n, q, {(tuple(I), tuple(J)): lambda x: np.full(x.shape[:-1], value, dtype=complex)}, support, label)

    def __add__(self, other: "TestForm") -> "TestForm":
        if (self.n, self.q) != (other.n, other.q):
            raise DomainError("Cannot add forms of different bidegree")
        radii = np.maximum(self.support.radii, other.support.radii)
        terms: Dict[Tuple[Multi, Multi], Coefficient] = {}
        for form in (self, other):
            for key, fn in form.coefficients.items():
                inside = _masked(fn, form.support)
                prev = terms.get(key)
                terms[key] = inside if prev is None else _summed(prev, inside)
        return TestForm(self.n, self.q, terms, Region.polydisc(np.zeros(self.n), radii))

    def scaled(self, factor: complex) -> "TestForm":
        terms = {key: _scaled(fn, factor) for key, fn in self.coefficients.items()}
        return TestForm(self.n, self.q, terms, self.support, self.label)

    def density(self, x: np.ndarray, dphi: np.ndarray) -> np.ndarray:
        """
        Pullback density 2^q sum c_IJ det(Dphi_I) conj(det(Dphi_J)) against Lebesgue measure
        """
        total = np.zeros(x.shape[:-1], dtype=complex)
        dets: Dict[Multi, np.ndarray] = {}
        for (I, J), fn in self.coefficients.items():
            for K in (I, J):
                if K not in dets:
                    dets[K] = np.linalg.det(dphi[..., list(K), :])
            total = total + np.asarray(fn(x), dtype=complex) * dets[I] * np.conj(dets[J])
        return 2.0 ** self.q * total


def _masked(fn: Coefficient, support: Region) -> Coefficient:
    return lambda x: np.where(support.contains(x), fn(x), 0.0)


def _summed(f: Coefficient, g: Coefficient) -> Coefficient:
    return lambda x: f(x) + g(x)


def _scaled(f: Coefficient, c: complex) -> Coefficient:
    return lambda x: c * np.asarray(f(x), dtype=complex)


def trace_form(n: int, q: int, radii=None) -> TestForm:
    """
    beta^q with beta = i sum dz_j ^ dz̄_j
    """
    radii = np.ones(n) if radii is None else radii
    support = Region.polydisc(np.zeros(n), radii)
    weight = float(factorial(q))
    coefficients = {(I, I): (lambda x: np.full(x.shape[:-1], weight, dtype=complex)) for I in q_subsets(n, q)}
    return TestForm(n, q, coefficients, support, label="trace")


def area_form(n: int, axis: int, radii) -> TestForm:
    """
    i dz_axis ^ dz̄_axis cut to a polydisc
    """
    return TestForm.constant(n, 1, (axis,), (axis,), radii, label=f"area{axis}")


class BumpPolynomial:
    """
    P(x, x̄) * prod_j (1 - |x_j|^2 / R_j^2)^3 on the polydisc of radii R, zero outside
    """

    def __init__(self, n: int, terms: Sequence[Tuple[complex, Sequence[int], Sequence[int]]], radii):
        self.n = n
        self.terms = [(complex(c), np.asarray(p, dtype=int), np.asarray(r, dtype=int)) for c, p, r in terms]
        self.radii = np.asarray(radii, dtype=float)
        self.support = Region.polydisc(np.zeros(n), self.radii)

    def _poly(self, x: np.ndarray, dz: Optional[int] = None, dzbar: Optional[int] = None) -> np.ndarray:
        xb = np.conj(x)
        total = np.zeros(x.shape[:-1], dtype=complex)
        for c, p, r in self.terms:
            p, r = p.copy(), r.copy()
            if dz is not None:
                c = c * p[dz]
                p[dz] -= 1
            if dzbar is not None:
                c = c * r[dzbar]
                r[dzbar] -= 1
            if c == 0:
                continue
            total = total + c * np.prod(x ** np.maximum(p, 0) * xb ** np.maximum(r, 0), axis=-1)
        return total

    def _t(self, x: np.ndarray) -> np.ndarray:
        return 1.0 - np.abs(x) ** 2 / self.radii ** 2

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        chi = np.prod(self._t(x) ** 3, axis=-1)
        return np.where(self.support.contains(x), self._poly(x) * chi, 0.0)

    def _derivative(self, x: np.ndarray, k: int, holomorphic: bool) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        t = self._t(x)
        chi = np.prod(t ** 3, axis=-1)
        others = np.prod(np.delete(t, k, axis=-1) ** 3, axis=-1)
        partner = np.conj(x[..., k]) if holomorphic else x[..., k]
        dchi = 3.0 * t[..., k] ** 2 * (-partner / self.radii[k] ** 2) * others
        if holomorphic:
            dp = self._poly(x, dz=k)
        else:
            dp = self._poly(x, dzbar=k)
        out = dp * chi + self._poly(x) * dchi
        return np.where(self.support.contains(x), out, 0.0)

    def d(self, x: np.ndarray, k: int) -> np.ndarray:
        """
        d/dx_k
        """
        return self._derivative(x, k, True)

    def dbar(self, x: np.ndarray, k: int) -> np.ndarray:
        """
        d/dx̄_k
        """
        return self._derivative(x, k, False)


def _product_basis_sign(q: int) -> complex:
    # dz_I ^ dz̄_J = i^{-q} (-1)^{q(q-1)/2} prod_k (i dz_{I_k} ^ dz̄_{J_k})
    return (1j) ** (-q) * (-1) ** (q * (q - 1) // 2)


class OddForm:
    """
    gamma = P chi dz_I ^ dz̄_J of degree 2q - 1
    """

    def __init__(self, bump: BumpPolynomial, q: int, I: Multi, J: Multi):
        if {len(I), len(J)} != {q, q - 1} or len(I) + len(J) != 2 * q - 1:
            raise DomainError(f"Multi-indices {I}, {J} do not give a form of degree {2 * q - 1}")
        self.bump = bump
        self.q = q
        self.I = tuple(sorted(I))
        self.J = tuple(sorted(J))

    @property
    def n(self) -> int:
        return self.bump.n

    def exterior_derivative(self) -> TestForm:
        """
        (q,q)-part of d gamma in the product basis
        """
        q, n = self.q, self.n
        base = _product_basis_sign(q)
        terms: Dict[Tuple[Multi, Multi], List[Coefficient]] = {}
        if len(self.I) == q:
            for k in range(n):
                if k in self.J:
                    continue
                sign = (-1) ** q * (-1) ** sum(1 for j in self.J if j < k)
                key = (self.I, tuple(sorted(self.J + (k,))))
                terms.setdefault(key, []).append(_derivative_term(self.bump.dbar, k, sign * base))
        else:
            for k in range(n):
                if k in self.I:
                    continue
                sign = (-1) ** sum(1 for i in self.I if i < k)
                key = (tuple(sorted(self.I + (k,))), self.J)
                terms.setdefault(key, []).append(_derivative_term(self.bump.d, k, sign * base))
        coefficients = {key: _sum_all(fns) for key, fns in terms.items()}
        return TestForm(n, q, coefficients, self.bump.support, label="d(odd)")


def _derivative_term(fn, k: int, factor: complex) -> Coefficient:
    return lambda x: factor * fn(x, k)


def _sum_all(fns: List[Coefficient]) -> Coefficient:
    if len(fns) == 1:
        return fns[0]
    return lambda x: sum(f(x) for f in fns)


def default_radii(n: int, q: int, base_radius: float = 0.9) -> np.ndarray:
    return np.concatenate([np.full(q, base_radius), np.ones(n - q)])


def default_odd_form(n: int, q: int) -> OddForm:
    """
    Bump form with a coefficient mixing base and fibre coordinates
    """
    p = np.zeros(n, dtype=int)
    r = np.zeros(n, dtype=int)
    r[n - 1] = 1
    p[0] = 1
    bump = BumpPolynomial(n, [(1.0, np.zeros(n, dtype=int), np.zeros(n, dtype=int)), (0.5, p, r)], default_radii(n, q))
    I = tuple(range(q))
    J = tuple(range(q - 1))
    return OddForm(bump, q, I, J)


def form_battery(n: int, q: int, count: int = 20, seed: int = 0, radii=None) -> List[TestForm]:
    """
    Polynomial-times-bump (q,q)-forms with random low-degree coefficients
    """
    rng = rng_stream(seed, 7)
    radii = default_radii(n, q) if radii is None else np.asarray(radii, dtype=float)
    subsets = q_subsets(n, q)
    forms = []
    for k in range(count):
        terms = []
        for _ in range(2):
            coef = complex(rng.normal(), rng.normal())
            p = rng.integers(0, 2, size=n)
            r = rng.integers(0, 2, size=n)
            terms.append((coef, p, r))
        bump = BumpPolynomial(n, terms, radii)
        I = subsets[rng.integers(len(subsets))]
        J = subsets[rng.integers(len(subsets))]
        forms.append(TestForm(n, q, {(I, J): bump.value}, bump.support, label=f"battery{k}"))
    return forms


# Pairings

def _check_form(family: PlaqueFamily, form: TestForm) -> Region:
    if (form.n, form.q) != (family.n, family.q):
        raise DomainError(f"A ({form.q},{form.q})-form on C^{form.n} cannot be paired with a {family.q}-dimensional lamination in C^{family.n}")
    if np.any(form.support.radii > 1.0 + 1e-12) or np.any(np.abs(form.support.center) > 1e-12):
        raise SupportError(f"Form support {form.support!r} leaks outside the unit flow box")
    base_radii = form.support.radii[:family.q]
    if np.any(base_radii > family.holomorphy_radius):
        raise SupportError(f"Form support leaves the plaque domain of radius {family.holomorphy_radius}")
    return Region.polydisc(np.zeros(family.q), base_radii)


def plaque_integrals(family: PlaqueFamily, params: np.ndarray, form: TestForm, order: int = 16) -> np.ndarray:
    """
    Integral of the form over each plaque a in params (P, d)
    """
    base = _check_form(family, form)
    grid = gauss_grid(order, base)
    x, w = grid.nodes, grid.weights
    params = np.asarray(params, dtype=complex)
    out = np.zeros(params.shape[0], dtype=complex)
    chunk = max(1, MAX_CHUNK_POINTS // x.shape[0])
    eye = np.eye(family.q)
    for start in range(0, params.shape[0], chunk):
        block = params[start:start + chunk]
        y = family.evaluate(block[:, None, :], x[None, :, :])
        points = np.concatenate([np.broadcast_to(x, y.shape[:2] + x.shape[-1:]), y], axis=-1)
        inside = form.support.contains(points)
        s_idx, m_idx = np.nonzero(inside)
        if s_idx.size == 0:
            continue
        jac = family.jacobian(block[s_idx], x[m_idx])
        dphi = np.concatenate([np.broadcast_to(eye, (s_idx.size, family.q, family.q)), jac], axis=-2)
        values = form.density(points[s_idx, m_idx], dphi) * w[m_idx]
        out[start:start + block.shape[0]] = (
            np.bincount(s_idx, weights=values.real, minlength=block.shape[0])
            + 1j * np.bincount(s_idx, weights=values.imag, minlength=block.shape[0])
        )
    return out


def pair(T: FoliatedCycleLocal, form: TestForm, order: int = 16) -> complex:
    """
    <T, alpha> = integral over mu of the plaque integrals
    """
    return complex(T.measure.integrate(lambda a: plaque_integrals(T.family, a, form, order)))


def trace_mass(T: FoliatedCycleLocal, region: Region, order: int = 16) -> float:
    """
    Mass of T against beta^q inside region
    """
    family = T.family
    domain = family.plaque_domain()
    q = family.q
    if is_pencil(family):
        def masses(params):
            return np.array([trace_mass_graph(None, domain, region, q, order, constant_value=a) for a in params])

        fibre = region.project(range(q, region.dim))
        return float(np.real(T.measure.integrate(masses, within=fibre)))

    def masses(params):
        return np.array([
            trace_mass_graph(family.graph_map(a), domain, region, q, order, jacobian=family.graph_jacobian(a))
            for a in params
        ])

    return float(np.real(T.measure.integrate(masses)))


def stokes_residual(T: FoliatedCycleLocal, gamma: OddForm, order: int = 24) -> float:
    """
    |<T, d gamma>|, zero up to quadrature error for closed T
    """
    return abs(pair(T, gamma.exterior_derivative(), order))


# Atoms

@dataclass
class AtomSplit:
    diffuse: Optional[FoliatedCycleLocal]
    atoms: List[Tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def atom_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))

    @property
    def diffuse_mass(self) -> float:
        return 0.0 if self.diffuse is None else self.diffuse.measure.total_mass


def split_measure(mu: TransverseMeasure) -> Tuple[Optional[TransverseMeasure], Optional[AtomicMeasure]]:
    """
    Diffuse and atomic parts of a measure
    """
    if isinstance(mu, AtomicMeasure):
        return None, mu if mu.total_mass > 0 else None
    if isinstance(mu, MixedMeasure):
        diffuse, atoms = [], []
        for part in mu.parts:
            d, a = split_measure(part)
            if d is not None:
                diffuse.append(d)
            if a is not None:
                atoms.extend(a.atoms())
        diffuse_part = None if not diffuse else diffuse[0] if len(diffuse) == 1 else MixedMeasure(diffuse)
        atomic_part = None
        if atoms:
            atomic_part = AtomicMeasure(np.array([loc for loc, _ in atoms]), [w for _, w in atoms])
        return diffuse_part, atomic_part
    if isinstance(mu, PushforwardMeasure):
        d, a = split_measure(mu.base)
        d = None if d is None else PushforwardMeasure(d, mu.forward)
        if a is not None:
            a = AtomicMeasure(np.asarray(mu.forward(a.locations), dtype=complex), a.weights)
        return d, a
    return mu, None


def atom_split(T: FoliatedCycleLocal) -> AtomSplit:
    """
    T = diffuse part + sum of weighted plaques through the atoms
    """
    diffuse, atomic = split_measure(T.measure)
    atoms = [] if atomic is None else atomic.atoms()
    part = None if diffuse is None else T.with_measure(diffuse)
    if atoms:
        logger.info(f"Cycle carries {len(atoms)} atoms of total weight {sum(w for _, w in atoms):.6g}")
    return AtomSplit(part, atoms)


def center_cycle(T: FoliatedCycleLocal) -> FoliatedCycleLocal:
    """
    Centered family with the measure pushed along the reindexing
    """
    family = center_family(T.family)
    if family is T.family:
        return T
    measure = PushforwardMeasure(T.measure, family.forward)
    return FoliatedCycleLocal(FlowBox(family, T.box.rho, T.box.label), measure, validate=T.validate)


def relabel_cycle(
    T: FoliatedCycleLocal,
    forward: Callable[[np.ndarray], np.ndarray],
    inverse: Callable[[np.ndarray], np.ndarray],
    push_measure: bool = True,
    samples: int = 256,
) -> FoliatedCycleLocal:
    transversal = T.family.transversal
    params = transversal.grid(samples)
    images = np.asarray(forward(params), dtype=complex)
    if params.shape[0] > 1:
        gaps = block_norm(images[:, None, :] - images[None, :, :])
        gaps[np.diag_indices(params.shape[0])] = np.inf
        if gaps.min() < 1e-10:
            raise DegenerateTransversalError("Relabeling is not injective on the sampled transversal")
    if transversal.kind == "points":
        target = Transversal.finite(images)
    else:
        reach = float(np.max(block_norm(images)))
        target = Transversal.disc(max(reach, 1e-12) * (1.0 + 1e-9), transversal.dim)
    family = RelabeledFamily(T.family, forward, inverse, target)
    measure = PushforwardMeasure(T.measure, forward) if push_measure else T.measure
    return FoliatedCycleLocal(FlowBox(family, T.box.rho, T.box.label), measure, validate=False)


def holonomy_check(
    T: FoliatedCycleLocal,
    forward: Callable[[np.ndarray], np.ndarray],
    inverse: Callable[[np.ndarray], np.ndarray],
    push_measure: bool = True,
    battery: Optional[List[TestForm]] = None,
    order: int = 12,
) -> float:
    """
    Max relative pairing change over a form battery after relabeling the transversal
    """
    relabeled = relabel_cycle(T, forward, inverse, push_measure)
    battery = battery or form_battery(T.n, T.q)
    worst = 0.0
    for form in battery:
        before = pair(T, form, order)
        after = pair(relabeled, form, order)
        worst = max(worst, abs(before - after) / (1.0 + abs(before)))
    return worst


# Product measure and the diagonal

class ProductMeasure:
    """
    mu x mu in the coordinates alpha = (a, b - a)
    """

    def __init__(self, mu: TransverseMeasure):
        self.mu = mu

    @property
    def dim(self) -> int:
        return 2 * self.mu.dim

    @property
    def total_mass(self) -> float:
        return self.mu.total_mass ** 2

    @property
    def exact(self) -> bool:
        return isinstance(self.mu, AtomicMeasure)

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.exact:
            raise DomainError(f"A {self.mu.variant} product has no atom enumeration")
        a = self.mu.locations
        w = self.mu.weights
        first = np.repeat(a, a.shape[0], axis=0)
        second = np.tile(a, (a.shape[0], 1))
        alphas = np.concatenate([first, second - first], axis=1)
        return alphas, np.outer(w, w).ravel()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a = self.mu.sample(rng, n)
        b = self.mu.sample(rng, n)
        return np.concatenate([a, b - a], axis=1)


def product_measure(mu: TransverseMeasure) -> ProductMeasure:
    return ProductMeasure(mu)


def diagonal_mass(
    product: ProductMeasure,
    eps: float,
    samples: int = 1 << 16,
    seed: int = 0,
    restrict_radius: Optional[float] = None,
) -> DiagonalMassPoint:
    """
    Product mass of {||alpha_2|| <= eps}, optionally within {||alpha_1|| <= r}
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    d = product.mu.dim

    def hits(alphas):
        keep = block_norm(alphas[:, d:]) <= eps
        if restrict_radius is not None:
            keep &= block_norm(alphas[:, :d]) <= restrict_radius
        return keep

    if product.exact:
        alphas, weights = product.atoms()
        value = float(np.sum(weights[hits(alphas)]))
        return DiagonalMassPoint(eps=eps, value=value, stderr=0.0, samples=int(weights.size), exact=True)
    partial = []
    squares = []
    blocks = max(1, -(-samples // DIAGONAL_BLOCK))
    for block in range(blocks):
        rng = rng_stream(seed, block)
        size = min(DIAGONAL_BLOCK, samples - block * DIAGONAL_BLOCK)
        inside = hits(product.sample(rng, size)).astype(float)
        partial.append(inside.sum())
        squares.append((inside ** 2).sum())
    count = min(samples, blocks * DIAGONAL_BLOCK)
    mean = pairwise_total(partial) / count
    var = max(pairwise_total(squares) / count - mean ** 2, 0.0)
    scale = product.total_mass
    return DiagonalMassPoint(
        eps=eps,
        value=scale * mean,
        stderr=scale * float(np.sqrt(var / count)),
        samples=count,
        exact=False,
    )


def cantor_product_oracle(product: ProductMeasure, eps: float, depth: Optional[int] = None) -> float:
    if not isinstance(product.mu, CantorMeasure):
        raise DomainError("The cylinder oracle needs a Cantor measure")
    return cantor_diagonal_mass(product.mu, eps, depth)
