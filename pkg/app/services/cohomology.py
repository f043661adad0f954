import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import factorial
from typing import Dict, Sequence, Tuple

import numpy as np

from app.exceptions import DomainError, PositivityError
from app.schemas.cohomology import (
    HermitianClass,
    HirzebruchCertificate,
    HirzebruchClass,
    KahlerVerdict,
    PnClass,
    PnVerdict,
    Rank1Result,
    SurfaceLeafVerdict,
    TorusCertificate,
    to_pairs,
)
from app.services.cycle import MAX_CHUNK_POINTS, FoliatedCycleLocal
from app.services.numerics import gauss_grid

logger = logging.getLogger(__name__)

PSD_TOLERANCE = -1e-10
RANK_TOLERANCE = 1e-10
SQUARE_TOLERANCE = 1e-12


# Projective space

def pn_cup(x: PnClass, y: PnClass) -> PnClass:
    """
    c_x omega^{p_x} ⌣ c_y omega^{p_y} in R[omega]/(omega^{n+1})
    """
    if x.n != y.n:
        raise DomainError(f"Classes live on P^{x.n} and P^{y.n}")
    return PnClass(n=x.n, p=x.p + y.p, c=x.c * y.c)


def pn_verdict(n: int, q: int, mass: float) -> PnVerdict:
    """
    Diffuse foliated cycle of dimension q on P^n against the vanishing square of its class
    """
    if not 1 <= q <= n - 1:
        raise DomainError(f"Leaf dimension must satisfy 1 <= q <= n-1, got q={q}, n={n}")
    if mass <= 0:
        raise DomainError("The cycle must carry positive mass")
    p = n - q
    cycle_class = PnClass(n=n, p=p, c=mass)
    square = pn_cup(cycle_class, cycle_class)
    chain = [
        f"h^{{{p},{p}}}(P^{n}) = 1, so {{T}} = c omega^{p} with c = {mass:g} > 0",
        f"{{T}} ⌣ {{T}} = c^2 omega^{2 * p}",
    ]
    if square.vanishes:
        chain.append(f"2(n-q) = {2 * p} > n = {n}: the square vanishes for dimension reasons")
        verdict = "no-obstruction"
    else:
        chain.append(f"c^2 = {square.c:g} != 0 in degree {2 * p} <= {n}")
        chain.append("a diffuse foliated cycle of a Lipschitz lamination has vanishing self-intersection")
        chain.append("contradiction: no diffuse foliated cycle is directed by the lamination")
        verdict = "contradiction"
    logger.info(f"P^{n}, q={q}: {verdict}")
    return PnVerdict(n=n, q=q, mass=mass, verdict=verdict, cycle_class=cycle_class, square=square, chain=chain)


def kahler_verdict(n: int, q: int, h_pp: int, mass: float) -> KahlerVerdict:
    """
    Same test on a compact Kähler manifold knowing only h^{n-q,n-q}
    """
    if not 1 <= q <= n - 1:
        raise DomainError(f"Leaf dimension must satisfy 1 <= q <= n-1, got q={q}, n={n}")
    if mass <= 0:
        raise DomainError("The cycle must carry positive mass")
    p = n - q
    if h_pp != 1:
        chain = [f"h^{{{p},{p}}} = {h_pp} != 1: the class of T is not a multiple of a Kähler power"]
        return KahlerVerdict(n=n, q=q, h_pp=h_pp, mass=mass, verdict="no-verdict", chain=chain)
    chain = [f"h^{{{p},{p}}} = 1, so {{T}} = c {{omega^{p}}} with c > 0 from the mass {mass:g}"]
    if 2 * q < n:
        chain.append(f"q = {q} < n/2: omega^{2 * p} vanishes in degree {2 * p} > {n}")
        return KahlerVerdict(n=n, q=q, h_pp=h_pp, mass=mass, verdict="no-obstruction", chain=chain)
    chain.append(f"{{T}} ⌣ {{T}} = c^2 {{omega^{2 * p}}} and the integral of omega^n is positive")
    chain.append("contradiction with the vanishing self-intersection of a diffuse foliated cycle")
    return KahlerVerdict(n=n, q=q, h_pp=h_pp, mass=mass, verdict="contradiction", chain=chain)


def surface_leaf_verdict(h11: int, compact_leaves: bool) -> SurfaceLeafVerdict:
    if compact_leaves:
        chain = ["a compact leaf carries its own current of integration; no constraint on parabolic leaves"]
        return SurfaceLeafVerdict(h11=h11, compact_leaves=True, parabolic_leaf_possible=True, chain=chain)
    if h11 != 1:
        chain = [f"h^{{1,1}} = {h11} != 1: squares of positive classes need not be positive"]
        return SurfaceLeafVerdict(h11=h11, compact_leaves=False, parabolic_leaf_possible=True, chain=chain)
    chain = [
        "a parabolic leaf produces an Ahlfors current directed by the lamination",
        "without compact leaves that current is a diffuse foliated cycle, so its square vanishes",
        "h^{1,1} = 1 makes the class a positive multiple of the Kähler class, with positive square",
        "contradiction: no leaf is parabolic",
    ]
    return SurfaceLeafVerdict(h11=h11, compact_leaves=False, parabolic_leaf_possible=False, chain=chain)


# Hirzebruch surfaces

def hirz_cup(x: HirzebruchClass, y: HirzebruchClass) -> float:
    """
    F^2 = 0, F.C = 1, C^2 = -n
    """
    if x.n != y.n:
        raise DomainError(f"Classes live on Sigma_{x.n} and Sigma_{y.n}")
    return x.a * y.b + y.a * x.b - x.n * x.b * y.b


def hirz_classify(n: int, a: float, b: float) -> HirzebruchCertificate:
    """
    Which classes aF + bC can carry a diffuse foliated cycle: c^2 = 0 with c.F >= 0 and c.C >= 0
    """
    c = HirzebruchClass(n=n, a=a, b=b)
    square = hirz_cup(c, c)
    dot_f = hirz_cup(c, HirzebruchClass(n=n, a=1.0, b=0.0))
    dot_c = hirz_cup(c, HirzebruchClass(n=n, a=0.0, b=1.0))
    tol = SQUARE_TOLERANCE * max(1.0, (abs(a) + abs(b)) ** 2)
    common = dict(n=n, a=a, b=b, square=square, dot_f=dot_f, dot_c=dot_c)

    if abs(square) > tol:
        return HirzebruchCertificate(
            **common, status="outside-hypothesis",
            conclusion=f"c^2 = {square:g} != 0; a diffuse foliated cycle has vanishing square",
            violated=["c^2 = 0"],
        )
    violated = []
    if dot_f < -tol:
        violated.append("c.F >= 0")
    if n == 0:
        if dot_c < -tol:
            violated.append("c.C >= 0")
        if violated:
            return HirzebruchCertificate(**common, status="outside-hypothesis", conclusion="negative pairing with a fibre class", violated=violated)
        if abs(b) <= tol:
            conclusion = f"class {a:g} F1: the cycle is a pullback from the first ruling"
        else:
            conclusion = f"class {b:g} F2: the cycle is a pullback from the second ruling"
        return HirzebruchCertificate(**common, status="accepted", conclusion=conclusion)
    if violated:
        return HirzebruchCertificate(**common, status="outside-hypothesis", conclusion="negative pairing with the fibre F", violated=violated)
    if abs(b) <= tol:
        if dot_c < -tol:
            return HirzebruchCertificate(
                **common, status="outside-hypothesis",
                conclusion=f"c.C = {dot_c:g} < 0", violated=["c.C >= 0"],
            )
        return HirzebruchCertificate(**common, status="accepted", conclusion=f"b = 0: class {a:g} F")
    return HirzebruchCertificate(
        **common, status="rejected",
        conclusion=f"b(2a - bn) = 0 with b > 0 forces 2a = bn, then c.C = -bn/2 = {dot_c:g} < 0",
        violated=["c.C >= 0"],
    )


# Exterior algebra of a torus

@dataclass
class ExtElement:
    """
    Sum of coefficient x generators; dz_j is j and dz̄_j is n + j, indices sorted
    """
    n: int
    terms: Dict[Tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, coef in self.terms.items():
            key = tuple(key)
            if list(key) != sorted(set(key)):
                raise DomainError(f"Multi-index {key} is not strictly sorted")
            if coef != 0:
                clean[key] = complex(coef)
        self.terms = clean

    def __add__(self, other: "ExtElement") -> "ExtElement":
        terms = dict(self.terms)
        for key, coef in other.terms.items():
            terms[key] = terms.get(key, 0) + coef
        return ExtElement(self.n, terms)

    def scaled(self, c: complex) -> "ExtElement":
        return ExtElement(self.n, {k: c * v for k, v in self.terms.items()})

    def norm(self) -> float:
        return max((abs(v) for v in self.terms.values()), default=0.0)


def _merge_sign(left: Sequence[int], right: Sequence[int]) -> int:
    inversions = sum(1 for x in left for y in right if x > y)
    return -1 if inversions % 2 else 1


def ext_wedge(e1: ExtElement, e2: ExtElement) -> ExtElement:
    if e1.n != e2.n:
        raise DomainError("Exterior algebras of different dimension")
    terms: Dict[Tuple[int, ...], complex] = {}
    for k1, c1 in e1.terms.items():
        for k2, c2 in e2.terms.items():
            if set(k1) & set(k2):
                continue
            key = tuple(sorted(k1 + k2))
            terms[key] = terms.get(key, 0) + _merge_sign(k1, k2) * c1 * c2
    return ExtElement(e1.n, terms)


def generator(n: int, j: int, conjugate: bool = False) -> ExtElement:
    """
    dz_j or dz̄_j, 0-based
    """
    return ExtElement(n, {((n if conjugate else 0) + j,): 1.0})


def hermitian_to_ext(H) -> ExtElement:
    """
    i sum H_jk dz_j ^ dz̄_k
    """
    h = H.array() if isinstance(H, HermitianClass) else np.asarray(H, dtype=complex)
    n = h.shape[0]
    return ExtElement(n, {(j, n + k): 1j * h[j, k] for j in range(n) for k in range(n)})


def herm_wedge_square_norm(H) -> float:
    """
    Largest 2x2 minor of H; zero iff rank <= 1 iff c ^ c = 0
    """
    h = H.array() if isinstance(H, HermitianClass) else np.asarray(H, dtype=complex)
    n = h.shape[0]
    worst = 0.0
    for rows in combinations(range(n), 2):
        for cols in combinations(range(n), 2):
            minor = h[rows[0], cols[0]] * h[rows[1], cols[1]] - h[rows[0], cols[1]] * h[rows[1], cols[0]]
            worst = max(worst, abs(minor))
    return float(worst)


def rank1_decompose(H) -> Rank1Result:
    """
    gamma with H = gamma gamma^H when H is positive of rank at most one
    """
    h = H.array() if isinstance(H, HermitianClass) else np.asarray(H, dtype=complex)
    values, vectors = np.linalg.eigh(h)
    eigenvalues = [float(v) for v in values[::-1]]
    if values[0] < PSD_TOLERANCE:
        raise PositivityError(f"Class is not positive: eigenvalue {values[0]:.3e}")
    top = values[-1]
    if top <= 0:
        return Rank1Result(success=True, gamma=to_pairs(np.zeros(h.shape[0])), eigenvalues=eigenvalues, reconstruction_error=0.0)
    second = values[-2] if values.size > 1 else 0.0
    if second > RANK_TOLERANCE * top:
        return Rank1Result(success=False, eigenvalues=eigenvalues, witness=float(second))
    v = vectors[:, -1]
    pivot = v[np.argmax(np.abs(v))]
    gamma = np.sqrt(top) * v * (abs(pivot) / pivot)
    error = float(np.max(np.abs(h - np.outer(gamma, gamma.conj()))))
    return Rank1Result(success=True, gamma=to_pairs(gamma), eigenvalues=eigenvalues, reconstruction_error=error)


def torus_certificate(H: HermitianClass) -> TorusCertificate:
    """
    Minor criterion, exterior-algebra square and rank-one factorisation of a (1,1)-class
    """
    minors = herm_wedge_square_norm(H)
    # coefficients of c ^ c are twice the minors up to sign
    ext_square = ext_wedge(hermitian_to_ext(H), hermitian_to_ext(H)).norm() / 2.0
    agree = (minors <= RANK_TOLERANCE) == (ext_square <= RANK_TOLERANCE)
    positive = H.positive
    if not positive:
        return TorusCertificate(
            n=H.n, positive=False, minors_norm=minors, ext_square_norm=ext_square,
            criteria_agree=agree, conclusion="class is not positive",
        )
    rank1 = rank1_decompose(H)
    if rank1.success and minors <= RANK_TOLERANCE:
        if any(re or im for re, im in rank1.gamma):
            conclusion = "square vanishes: c = i gamma ^ conj(gamma) and the current is directed by ker gamma"
            direction = rank1.gamma
        else:
            conclusion = "zero class"
            direction = None
    else:
        conclusion = "square does not vanish: no diffuse foliated cycle in this class"
        direction = None
    return TorusCertificate(
        n=H.n, positive=True, minors_norm=minors, ext_square_norm=ext_square, criteria_agree=agree,
        rank1=rank1, leaf_direction=direction, conclusion=conclusion,
    )


def directedness_residual(T: FoliatedCycleLocal, gamma, order: int = 16) -> float:
    """
    Mass of T ^ i gamma ^ conj(gamma) over the flow box for a constant (1,0)-form gamma
    """
    family = T.family
    q, n = family.q, family.n
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.shape != (n,):
        raise DomainError(f"gamma needs {n} coefficients, got {gamma.shape}")
    if q != n - 1:
        raise DomainError(f"Directedness is tested for hypersurface laminations, got q={q}, n={n}")
    grid = gauss_grid(order, family.plaque_domain())
    x, w = grid.nodes, grid.weights
    eye = np.eye(q)
    scale = 2.0 ** q * factorial(q - 1)
    chunk = max(1, MAX_CHUNK_POINTS // x.shape[0])

    def masses(params):
        params = np.asarray(params, dtype=complex)
        out = np.zeros(params.shape[0])
        for start in range(0, params.shape[0], chunk):
            block = params[start:start + chunk]
            jac = family.jacobian(block[:, None, :], x[None, :, :])
            dphi = np.concatenate([np.broadcast_to(eye, jac.shape[:2] + (q, q)), jac], axis=-2)
            gram = np.swapaxes(dphi, -1, -2) @ np.conj(dphi)
            u = np.einsum("...jk,j->...k", dphi, gamma)
            solved = np.linalg.solve(gram, u[..., None])[..., 0]
            density = np.real(np.linalg.det(gram) * np.einsum("...k,...k->...", np.conj(u), solved))
            out[start:start + block.shape[0]] = scale * (density @ w)
        return out

    value = float(np.real(T.measure.integrate(masses)))
    return max(value, 0.0)
