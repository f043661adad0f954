import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial, floor, log2, pi
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from app.exceptions import DomainError, LabError, LipschitzViolation, ProductInvariantError, ZeroCurrentError
from app.schemas.density import (
    DecayReport,
    DecayRow,
    FarStratumCheck,
    HDimensionResult,
    InequalityFit,
    LelongEstimate,
)
from app.services.cycle import (
    FoliatedCycleLocal,
    ProductMeasure,
    area_form,
    pair,
    split_measure,
    trace_mass,
)
from app.services.lamination import (
    FlowBox,
    PlaqueFamily,
    _boundary_points,
    block_norm,
    derivative_bound,
    estimate_bilipschitz,
)
from app.services.measures import AtomicMeasure, DensityMeasure, TransverseMeasure
from app.services.numerics import (
    Region,
    gauss_grid,
    pairwise_total,
    restrict_base,
    rng_stream,
    trace_mass_graph,
    volume_density,
)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
RQMC_REPLICATES = 16
MC_BLOCK = 4096
MAX_CHUNK_POINTS = 1 << 20
GRAPH_EVALUATION_BUDGET = 1 << 24
SLACK_FLOOR = -1e-12


# Product coordinates

class ProductFamily:
    """
    Self-product lamination near the diagonal in coordinates (z, w) = (x, y - x)
    """

    def __init__(self, family: PlaqueFamily, rho: float):
        self.family = family
        self.rho = float(rho)

    @property
    def q(self) -> int:
        return self.family.q

    @property
    def codim(self) -> int:
        return self.family.codim

    @property
    def d(self) -> int:
        return self.family.transversal.dim

    def split(self, alpha) -> Tuple[np.ndarray, np.ndarray]:
        alpha = np.asarray(alpha, dtype=complex)
        return alpha[..., :self.d], alpha[..., self.d:]

    def f(self, alpha, z, w) -> np.ndarray:
        a1, _ = self.split(alpha)
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        shape = np.broadcast_shapes(z.shape, w.shape)
        return self.family.evaluate(a1, np.broadcast_to(z, shape))

    def g(self, alpha, z, w) -> np.ndarray:
        a1, a2 = self.split(alpha)
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        return self.family.evaluate(a1 + a2, z + w) - self.family.evaluate(a1, z)

    def rescaled(self, alpha, lam: float, zw) -> np.ndarray:
        """
        (z', w') ↦ (f(z', w'/lam), lam g(z', w'/lam))
        """
        zw = np.asarray(zw, dtype=complex)
        z, w = zw[..., :self.q], zw[..., self.q:] / lam
        return np.concatenate([self.f(alpha, z, w), lam * self.g(alpha, z, w)], axis=-1)

    def rescaled_jacobian(self, alpha, lam: float, zw) -> np.ndarray:
        a1, a2 = self.split(alpha)
        zw = np.asarray(zw, dtype=complex)
        z, w = zw[..., :self.q], zw[..., self.q:] / lam
        d1 = self.family.jacobian(a1, z)
        db = self.family.jacobian(a1 + a2, z + w)
        top = np.concatenate([d1, np.zeros_like(d1)], axis=-1)
        bottom = np.concatenate([lam * (db - d1), db], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def domain(self, lam: float) -> Region:
        return Region.polydisc(np.zeros(2 * self.q), [self.rho] * self.q + [lam * self.rho] * self.q)


def build_product(family: PlaqueFamily, rho: float, grid: int = 16) -> ProductFamily:
    """
    Product family with its structure checked on a grid x grid x grid sample
    """
    if not 0.0 < rho <= 0.5:
        raise DomainError(f"z' + w' leaves the plaque domain unless 0 < rho <= 1/2, got {rho}")
    product = ProductFamily(family, rho)
    params = family.transversal.grid(grid)[:grid]
    first = np.repeat(params, params.shape[0], axis=0)
    second = np.tile(params, (params.shape[0], 1))
    alphas = np.concatenate([first, second - first], axis=1)
    a1, a2 = product.split(alphas)
    zeros = np.zeros((alphas.shape[0], family.q), dtype=complex)

    if family.codim != product.d:
        raise ProductInvariantError("1", f"transversal dimension {product.d} differs from the codimension {family.codim}")
    recovered = np.concatenate([product.f(alphas, zeros, zeros), product.g(alphas, zeros, zeros)], axis=-1)
    if np.max(block_norm(recovered - alphas)) > 1e-10:
        raise ProductInvariantError("1", "alpha is not recovered as (f(0,0), g(0,0)); is the family centered?")

    z = _boundary_points(family.q, rho, grid, rng_stream(0, 11))
    w = z[::-1]
    shuffled = np.concatenate([a1, a2[::-1]], axis=1)
    f_here = product.f(alphas[:, None, :], z[None], w[None])
    f_there = product.f(shuffled[:, None, :], z[None], w[None])
    if np.max(np.abs(f_here - f_there)) > 1e-12:
        raise ProductInvariantError("3", "f_alpha depends on alpha_2")

    g0 = block_norm(product.g(alphas[:, None, :], z[None], np.zeros_like(z)[None]))
    diagonal = block_norm(a2) <= 1e-15
    if np.any(g0[diagonal] > 1e-12):
        raise ProductInvariantError("4", "g_alpha(z', 0) does not vanish for alpha_2 = 0")
    if np.any(g0[~diagonal].min(axis=-1, initial=np.inf) <= 1e-14):
        idx = int(np.flatnonzero(~diagonal)[np.argmin(g0[~diagonal].min(axis=-1))])
        raise ProductInvariantError("4", f"g_alpha(z', 0) vanishes for alpha = {alphas[idx].tolist()}")
    logger.debug(f"Product family over {alphas.shape[0]} parameter pairs passed the structure checks")
    return product


def rescaled_masses(
    P: ProductFamily,
    alphas: np.ndarray,
    lam: float,
    K: Region,
    order: int = 16,
) -> np.ndarray:
    """
    Trace masses in K of the rescaled graphs of every alpha in alphas (S, 2d)
    """
    if lam < 1:
        raise DomainError(f"Dilation factor must be at least 1, got {lam}")
    alphas = np.asarray(alphas, dtype=complex)
    q = P.q
    m = 2 * q
    scale = factorial(m) * 2.0 ** m
    base, exact = restrict_base(P.domain(lam), K)
    out = np.zeros(alphas.shape[0])
    if base is None or alphas.shape[0] == 0:
        return out
    if P.family.z_free:
        values = P.rescaled(alphas, lam, np.zeros((alphas.shape[0], m), dtype=complex))
        if exact and K.kind == "polydisc":
            inside = K.project(range(m, K.dim)).contains(values)
            out[inside] = scale * base.volume()
            return out
        return np.array([
            trace_mass_graph(None, P.domain(lam), K, m, order, constant_value=v) for v in values
        ])
    grid = gauss_grid(order, base)
    x, wts = grid.nodes, grid.weights
    chunk = max(1, MAX_CHUNK_POINTS // x.shape[0])
    for start in range(0, alphas.shape[0], chunk):
        block = alphas[start:start + chunk]
        y = P.rescaled(block[:, None, :], lam, x[None, :, :])
        points = np.concatenate([np.broadcast_to(x, y.shape[:2] + x.shape[-1:]), y], axis=-1)
        inside = K.contains(points)
        s_idx, m_idx = np.nonzero(inside)
        if s_idx.size == 0:
            continue
        jac = P.rescaled_jacobian(block[s_idx], lam, x[m_idx])
        values = volume_density(x[m_idx], y[s_idx, m_idx], jac) * wts[m_idx]
        out[start:start + block.shape[0]] = scale * np.bincount(s_idx, weights=values, minlength=block.shape[0])
    return out


def rescaled_graph_mass(P: ProductFamily, alpha, lam: float, K: Region, order: int = 16) -> float:
    """
    Mass in K of (A_lam)_*[Gamma_alpha] as a graph over {|z'| < rho, |w'| < lam rho}
    """
    return float(rescaled_masses(P, np.atleast_2d(np.asarray(alpha, dtype=complex)), lam, K, order)[0])


def default_compact(n: int) -> Region:
    return Region.polydisc(np.zeros(2 * n), np.full(2 * n, 0.5))


# Decay curves

@dataclass
class _Partial:
    near: float
    far: float
    squares: float
    count: int


def _effective_samples(P: ProductFamily, samples: int, order: int, K: Region, lam: float = 1.0) -> int:
    if P.family.z_free:
        return samples
    base, _ = restrict_base(P.domain(lam), K)
    nodes = gauss_grid(order, base).size if base is not None else 1
    cap = max(256, GRAPH_EVALUATION_BUDGET // nodes)
    if cap < samples:
        logger.warning(f"Graph quadrature has {nodes} nodes; using {cap} of {samples} samples per dilation")
        return cap
    return samples


def _split_sums(masses: np.ndarray, near: np.ndarray) -> Tuple[float, float]:
    return pairwise_total(masses[near]), pairwise_total(masses[~near])


def _exact_rows(P, alphas, weights, lambdas, K, order) -> List[DecayRow]:
    rows = []
    for lam in lambdas:
        masses = rescaled_masses(P, alphas, lam, K, order) * weights
        near_mask = block_norm(P.split(alphas)[1]) <= 1.0 / lam
        near, far = _split_sums(masses, near_mask)
        rows.append(DecayRow(lam=lam, mass_total=near + far, mass_near=near, mass_far=far, stderr=0.0, samples=int(weights.size)))
    return rows


def _mc_alphas(first: TransverseMeasure, second: TransverseMeasure, samples: int, seed: int, offset: int) -> np.ndarray:
    blocks = []
    for block in range(-(-samples // MC_BLOCK)):
        rng = rng_stream(seed, offset + block)
        size = min(MC_BLOCK, samples - block * MC_BLOCK)
        a = first.sample(rng, size)
        b = second.sample(rng, size)
        blocks.append(np.concatenate([a, b - a], axis=1))
    return np.concatenate(blocks, axis=0)


def _map_blocks(fn: Callable[[np.ndarray], np.ndarray], alphas: np.ndarray, workers: int) -> np.ndarray:
    chunks = [alphas[i:i + MC_BLOCK] for i in range(0, alphas.shape[0], MC_BLOCK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, chunks))
    else:
        results = [fn(c) for c in chunks]
    return np.concatenate(results) if results else np.zeros(0)


def _mc_partials(P, alphas, lam, K, order, scale, workers) -> _Partial:
    masses = _map_blocks(lambda c: rescaled_masses(P, c, lam, K, order), alphas, workers)
    near_mask = block_norm(P.split(alphas)[1]) <= 1.0 / lam
    near, far = _split_sums(masses, near_mask)
    n = masses.size
    return _Partial(scale * near / n, scale * far / n, pairwise_total(masses ** 2), n)


def _mc_stderr(partial: _Partial, scale: float) -> float:
    n = partial.count
    mean = (partial.near + partial.far) / scale
    var = max(partial.squares / n - mean ** 2, 0.0)
    return scale * float(np.sqrt(var / n))


def _local_offsets(u: np.ndarray, d: int, radius: float, real: bool) -> np.ndarray:
    if real:
        return radius * (2.0 * u[:, :d] - 1.0) + 0j
    return radius * np.sqrt(u[:, :d]) * np.exp(2j * pi * u[:, d:2 * d])


def _rqmc_row(
    P: ProductFamily,
    mu: DensityMeasure,
    lam: float,
    index: int,
    K: Region,
    samples: int,
    seed: int,
    order: int,
    workers: int,
) -> DecayRow:
    """
    Scrambled Sobol replicates, balance heuristic between mu x mu and b uniform near a
    """
    d = mu.dim
    real = mu.region.real
    width = d if real else 2 * d
    volume = mu.region.volume()
    local_volume = (2.0 / lam) ** d if real else (pi / lam ** 2) ** d
    per_replicate = max(samples // (2 * RQMC_REPLICATES), 8)
    exponent = max(3, floor(log2(per_replicate)))

    def replicate(r: int) -> Tuple[float, float]:
        sobol = qmc.Sobol(d=3 * width, scramble=True, seed=rng_stream(seed, index * RQMC_REPLICATES + r))
        u = sobol.random_base2(exponent)
        a = mu.sample_uniform(u[:, :width])
        b_far = mu.sample_uniform(u[:, width:2 * width])
        b_near = a + _local_offsets(u[:, 2 * width:], d, 1.0 / lam, real)
        b = np.concatenate([b_far, b_near], axis=0)
        a = np.concatenate([a, a], axis=0)
        f = mu.pdf(a) * mu.pdf(b)
        local = block_norm(b - a) <= 1.0 / lam
        q_mix = 0.5 * (1.0 / volume ** 2 + np.where(local, 1.0 / (volume * local_volume), 0.0))
        weight = np.where(f > 0, f / q_mix, 0.0)
        alphas = np.concatenate([a, b - a], axis=1)
        live = np.flatnonzero(weight > 0)
        masses = np.zeros(a.shape[0])
        masses[live] = rescaled_masses(P, alphas[live], lam, K, order)
        values = masses * weight
        near, far = _split_sums(values, local)
        return near / a.shape[0], far / a.shape[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(replicate, range(RQMC_REPLICATES)))
    else:
        estimates = [replicate(r) for r in range(RQMC_REPLICATES)]
    near = np.array([e[0] for e in estimates])
    far = np.array([e[1] for e in estimates])
    totals = near + far
    stderr = float(np.std(totals, ddof=1) / np.sqrt(RQMC_REPLICATES))
    mass_near = pairwise_total(near) / RQMC_REPLICATES
    mass_far = pairwise_total(far) / RQMC_REPLICATES
    count = RQMC_REPLICATES * 2 * 2 ** exponent
    return DecayRow(lam=lam, mass_total=mass_near + mass_far, mass_near=mass_near, mass_far=mass_far, stderr=stderr, samples=count)


def decay_curve(
    T: FoliatedCycleLocal,
    K: Optional[Region] = None,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    samples: int = 1 << 16,
    seed: int = 42,
    order: int = 16,
    workers: int = 1,
) -> DecayReport:
    """
    M(lam) = product-measure integral of the rescaled graph masses, split at ||alpha_2|| = 1/lam
    """
    lambdas = [float(lam) for lam in lambda_grid]
    if any(lam < 1 for lam in lambdas):
        raise DomainError(f"Dilation factors must be at least 1, got {lambdas}")
    K = K or default_compact(T.n)
    P = build_product(T.family, T.box.rho)
    diffuse, atomic = split_measure(T.measure)
    rows_by_part: List[List[DecayRow]] = []
    methods = []

    if atomic is not None:
        alphas, weights = ProductMeasure(atomic).atoms()
        rows_by_part.append(_exact_rows(P, alphas, weights, lambdas, K, order))
        methods.append("exact")

    if diffuse is not None:
        effective = _effective_samples(P, samples, order, K)
        if isinstance(diffuse, DensityMeasure) and atomic is None and diffuse.region.kind in ("polydisc", "box"):
            rows_by_part.append([
                _rqmc_row(P, diffuse, lam, i, K, effective, seed, order, workers) for i, lam in enumerate(lambdas)
            ])
            methods.append("rqmc")
        else:
            pieces = [(diffuse, diffuse)]
            if atomic is not None:
                pieces += [(atomic, diffuse), (diffuse, atomic)]
                logger.info("Atomic part enumerated exactly; diffuse and cross terms by Monte Carlo")
            part_rows = [[] for _ in lambdas]
            for k, (first, second) in enumerate(pieces):
                scale = first.total_mass * second.total_mass
                alphas = _mc_alphas(first, second, effective, seed, offset=k << 32)
                for i, lam in enumerate(lambdas):
                    partial = _mc_partials(P, alphas, lam, K, order, scale, workers)
                    part_rows[i].append((partial, _mc_stderr(partial, scale)))
                    logger.debug(f"Monte Carlo piece {k} at lambda={lam} done")
            rows = []
            for lam, parts in zip(lambdas, part_rows):
                near = pairwise_total([p.near for p, _ in parts])
                far = pairwise_total([p.far for p, _ in parts])
                err = float(np.sqrt(sum(e ** 2 for _, e in parts)))
                rows.append(DecayRow(lam=lam, mass_total=near + far, mass_near=near, mass_far=far, stderr=err, samples=effective))
            rows_by_part.append(rows)
            methods.append("monte-carlo")

    rows = []
    for i, lam in enumerate(lambdas):
        parts = [part[i] for part in rows_by_part]
        near = pairwise_total([p.mass_near for p in parts])
        far = pairwise_total([p.mass_far for p in parts])
        rows.append(DecayRow(
            lam=lam,
            mass_total=near + far,
            mass_near=near,
            mass_far=far,
            stderr=float(np.sqrt(sum(p.stderr ** 2 for p in parts))),
            samples=int(sum(p.samples for p in parts)),
        ))
        logger.info(f"lambda={lam:g}: M={rows[-1].mass_total:.6g} (near {near:.6g}, far {far:.6g})")
    return DecayReport(
        lambda_grid=lambdas,
        rows=rows,
        compact_radii=[float(r) for r in K.radii],
        method="+".join(methods),
        rho=P.rho,
        seed=seed,
    )


# Inequality constants

def lipschitz_diagnostic(
    family: PlaqueFamily,
    rho: float,
    separations: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
    seed: int = 0,
) -> float:
    """
    Largest transversal difference quotient; raises when it grows under refinement
    """
    rng = rng_stream(seed, 5)
    transversal = family.transversal
    bases = np.concatenate([transversal.grid(8), transversal.sample(rng, 8)], axis=0)
    if transversal.is_real:
        directions = np.ones((1, transversal.dim), dtype=complex)
    else:
        directions = np.exp(2j * pi * np.array([[0.0], [0.25], [0.125]])) * np.ones(transversal.dim)
    z = _boundary_points(family.q, rho, 16, rng)
    worst = 0.0
    for a in bases:
        for u in directions:
            ratios = []
            for s in separations:
                b = a + s * u
                diff = block_norm(family.evaluate(b, z) - family.evaluate(a, z))
                ratios.append(float(diff.max() / block_norm(b - a)))
            worst = max(worst, max(ratios))
            growing = all(x < y for x, y in zip(ratios, ratios[1:]))
            if growing and ratios[-1] > 2.0 * ratios[0]:
                witness = {
                    "a": [[float(v.real), float(v.imag)] for v in a],
                    "separation": float(separations[-1]),
                    "ratios": ratios,
                }
                raise LipschitzViolation(
                    f"Difference quotient grows from {ratios[0]:.4g} to {ratios[-1]:.4g} under refinement "
                    f"near a={a.tolist()}",
                    witness,
                )
    return worst


def _draw_fit_samples(P: ProductFamily, rng: np.random.Generator, n: int, include_grid: bool):
    transversal = P.family.transversal
    a = transversal.sample(rng, n)
    b = transversal.sample(rng, n)
    if include_grid:
        grid = transversal.grid(16)
        a = np.concatenate([grid, np.repeat(grid[:1], grid.shape[0], axis=0), a], axis=0)
        b = np.concatenate([grid[::-1], grid, b], axis=0)
    alphas = np.concatenate([a, b - a], axis=1)
    count = alphas.shape[0]
    q, rho = P.q, P.rho
    angles = np.exp(2j * pi * np.arange(count) / 16)[:, None]
    z = rho * np.sqrt(rng.random((count, q))) * np.exp(2j * pi * rng.random((count, q)))
    z[: count // 4] = rho * angles[: count // 4]
    w = rho * np.sqrt(rng.random((count, q))) * np.exp(2j * pi * rng.random((count, q)))
    w[: count // 2] = 0.0
    w[count // 2: 3 * count // 4] = rho * np.roll(angles, 5, axis=0)[count // 2: 3 * count // 4]
    return alphas, z, w


def _fit_terms(P: ProductFamily, alphas, z, w):
    _, a2 = P.split(alphas)
    g = block_norm(P.g(alphas, z, w))
    n2 = block_norm(a2)
    na = block_norm(P.split(alphas)[0]) + n2
    nw = block_norm(w)
    return g, n2, na, nw


def _fit(P, terms, k):
    g, n2, na, nw = terms
    upper_den = n2 + na * nw
    ok = upper_den > 1e-12
    c3 = float(np.max(g[ok] / upper_den[ok])) if np.any(ok) else 0.0
    lower = (nw == 0) & (n2 > 1e-12)
    if not np.any(lower):
        raise LabError("No sample with w' = 0 and alpha_2 != 0 to fit c1")
    c1 = float(np.min(g[lower] / n2[lower]))
    if not c1 > 0:
        raise ProductInvariantError("4", "g_alpha(z', 0) vanishes on a sample with alpha_2 != 0")
    return c1, k / c1, c3


def _slack(terms, c1, c2, c3) -> float:
    g, n2, na, nw = terms
    left = g - c1 * (n2 - c2 * na * nw)
    right = c3 * (n2 + na * nw) - g
    return float(min(left.min(), right.min()))


def fit_inequality(
    P: ProductFamily,
    rho: Optional[float] = None,
    samples: int = 2048,
    seed: int = 0,
    rounds: int = 3,
) -> InequalityFit:
    """
    Constants with c1 (||a2|| - c2 ||a|| ||w'||) <= ||g|| <= c3 (||a2|| + ||a|| ||w'||), checked on holdout samples
    """
    rho = P.rho if rho is None else rho
    if rho != P.rho:
        P = ProductFamily(P.family, rho)
    lipschitz_diagnostic(P.family, rho, seed=seed)
    k = derivative_bound(P.family, rho, samples=max(samples // 4, 64), seed=seed)
    bilipschitz = estimate_bilipschitz(P.family, min(rho, 0.99 * P.family.holomorphy_radius), seed=seed)

    rng = rng_stream(seed, 3)
    alphas, z, w = _draw_fit_samples(P, rng, samples, include_grid=True)
    fit_terms = _fit_terms(P, alphas, z, w)
    c1, c2, c3 = _fit(P, fit_terms, k)
    slack = 0.0
    refits = 0
    for round_ in range(rounds):
        holdout = _fit_terms(P, *_draw_fit_samples(P, rng_stream(seed, 100 + round_), samples, include_grid=False))
        slack = _slack(holdout, c1, c2, c3)
        if slack >= SLACK_FLOOR:
            break
        logger.warning(f"Holdout slack {slack:.3e} in round {round_}; refitting on the union")
        fit_terms = tuple(np.concatenate([x, y]) for x, y in zip(fit_terms, holdout))
        c1, c2, c3 = _fit(P, fit_terms, k)
        refits += 1
    alpha_max = float(np.max(fit_terms[2]))
    return InequalityFit(
        rho=rho,
        c1=c1,
        c2=c2,
        c3=c3,
        k=k,
        bilipschitz_lower=bilipschitz.c_lower,
        bilipschitz_upper=bilipschitz.c_upper,
        alpha_max=alpha_max,
        samples=int(fit_terms[0].size),
        worst_slack=slack,
        refits=refits,
    )


def far_mass_zero_box(fit: InequalityFit, k: Optional[float] = None, alpha_max: Optional[float] = None, q: int = 1, codim: int = 1) -> Region:
    """
    K* = {|z'| <= 1/2, |w'| <= c1/(3k max(1, alpha_max)), |z''| <= 1/2, |w''| <= c1/2}
    """
    k = fit.k if k is None else k
    alpha_max = fit.alpha_max if alpha_max is None else alpha_max
    w_radius = 0.5 if k <= 0 else min(0.5, fit.c1 / (3.0 * k * max(1.0, alpha_max)))
    radii = [0.5] * q + [w_radius] * q + [0.5] * codim + [fit.c1 / 2.0] * codim
    return Region.polydisc(np.zeros(2 * (q + codim)), radii)


def far_stratum_check(
    P: ProductFamily,
    K: Region,
    samples: int = 1000,
    seed: int = 0,
    order: int = 8,
    max_lambda: float = 128.0,
) -> FarStratumCheck:
    """
    Largest rescaled mass on K over random far-stratum (alpha, lam)
    """
    rng = rng_stream(seed, 9)
    transversal = P.family.transversal
    drawn_alphas, drawn_lams = [], []
    attempts = 0
    while sum(x.shape[0] for x in drawn_alphas) < samples and attempts < 64:
        attempts += 1
        lam = np.exp(rng.random(samples) * np.log(max_lambda))
        a = transversal.sample(rng, samples)
        b = transversal.sample(rng, samples)
        far = block_norm(b - a) > 1.0 / lam
        drawn_alphas.append(np.concatenate([a, b - a], axis=1)[far])
        drawn_lams.append(lam[far])
    alphas = np.concatenate(drawn_alphas)[:samples]
    lams = np.concatenate(drawn_lams)[:samples]
    masses = np.array([rescaled_graph_mass(P, alpha, lam, K, order) for alpha, lam in zip(alphas, lams)])
    worst = int(np.argmax(masses)) if masses.size else 0
    return FarStratumCheck(
        samples=int(masses.size),
        max_mass=float(masses.max()) if masses.size else 0.0,
        nonzero=int(np.count_nonzero(masses)),
        witness_lambda=float(lams[worst]) if masses.size else None,
    )


def near_stratum_sup(P: ProductFamily, alphas: np.ndarray, lam: float, points: int = 32, seed: int = 0) -> float:
    """
    sup of ||lam g(z', w'/lam)|| over ||z'||, ||w'|| <= rho for the near-stratum alphas
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=complex))
    near = block_norm(P.split(alphas)[1]) <= 1.0 / lam
    alphas = alphas[near]
    if alphas.shape[0] == 0:
        return 0.0
    rng = rng_stream(seed, 13)
    z = _boundary_points(P.q, P.rho, points, rng)
    w = _boundary_points(P.q, P.rho, points, rng)[::-1]
    values = lam * P.g(alphas[:, None, :], z[None], w[None] / lam)
    return float(np.max(block_norm(values)))


# Lelong numbers

def lelong(
    T: FoliatedCycleLocal,
    center=None,
    r_grid: Sequence[float] = (0.4, 0.2, 0.1),
    order: int = 16,
) -> LelongEstimate:
    """
    Ratios ||T||_{B(c, r)} / ((2 pi)^q r^{2q}) and their extrapolation nu + C r^2
    """
    radii = [float(r) for r in r_grid]
    if any(r <= 0 or r > 1 for r in radii) or any(x <= y for x, y in zip(radii, radii[1:])):
        raise DomainError(f"Lelong radii must be decreasing within (0, 1], got {radii}")
    center = np.zeros(T.n) if center is None else np.asarray(center, dtype=complex)
    q = T.q
    ratios = []
    for r in radii:
        mass = trace_mass(T, Region.ball(center, r), order)
        ratios.append(mass / ((2 * pi) ** q * r ** (2 * q)))
    warnings = []
    resolution = T.measure.resolution
    for r in radii:
        if r < 10 * resolution:
            message = f"radius {r:g} is below 10 x the transversal resolution {resolution:.3g}"
            logger.warning(message)
            warnings.append(message)
    estimate, model_error = None, None
    if len(radii) >= 2:
        estimate = _extrapolate(radii[-1], ratios[-1], radii[-2], ratios[-2])
        if len(radii) >= 3:
            model_error = abs(estimate - _extrapolate(radii[-2], ratios[-2], radii[-3], ratios[-3]))
    else:
        estimate = ratios[0]
    return LelongEstimate(radii=radii, ratios=ratios, estimate=estimate, model_error=model_error, warnings=warnings)


def _extrapolate(r1: float, v1: float, r2: float, v2: float) -> float:
    return (v1 * r2 ** 2 - v2 * r1 ** 2) / (r2 ** 2 - r1 ** 2)


# Dilations

class DilatedFamily(PlaqueFamily):
    """
    Plaques pushed by (z', z'') ↦ (z', lam z'')
    """

    def __init__(self, base: PlaqueFamily, lam: float):
        super().__init__(base.q, base.codim, base.transversal, base.holomorphy_radius, base.label)
        self.base = base
        self.lam = float(lam)

    @property
    def z_free(self) -> bool:
        return self.base.z_free

    def evaluate(self, a, z):
        return self.lam * self.base.evaluate(a, z)

    def jacobian(self, a, z):
        return self.lam * self.base.jacobian(a, z)


def slice_invariance_check(T: FoliatedCycleLocal, lam: float, rho: float, order: int = 16) -> float:
    """
    Relative gap between <T_lam, i dz ^ dz̄> over D(rho)^2 and <T, i dz ^ dz̄> over D(rho) x D(rho/lam)
    """
    if T.n != 2:
        raise DomainError(f"The slice identity is stated for curves in C^2, got n={T.n}")
    dilated = FoliatedCycleLocal(FlowBox(DilatedFamily(T.family, lam), T.box.rho), T.measure, validate=False)
    lhs = pair(dilated, area_form(2, 0, [rho, rho]), order).real
    rhs = pair(T, area_form(2, 0, [rho, rho / lam]), order).real
    if lhs == rhs:
        return 0.0
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


# h-dimension

@dataclass
class GraphPiece:
    """
    Weighted graph s ↦ phi(s) over a polydisc; the first base_dim outputs are base coordinates
    """
    domain: Region
    map: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    weight: float = 1.0


def tangent_pieces(T: FoliatedCycleLocal, lam: float, radius: Optional[float] = None) -> List[GraphPiece]:
    """
    Plaques dilated along the slice {z' = 0}: s ↦ (h_a(s / lam), s)
    """
    radius = T.box.rho if radius is None else radius
    family = T.family
    q = family.q
    points, weights = T.measure.discretize()
    domain = Region.polydisc(np.zeros(q), [radius] * q)
    eye = np.eye(q)
    pieces = []
    for a, w in zip(points, weights):
        if w <= 0:
            continue

        def phi(s, a=a):
            return np.concatenate([family.evaluate(a, s / lam), s], axis=-1)

        def dphi(s, a=a):
            top = family.jacobian(a, s / lam) / lam
            return np.concatenate([top, np.broadcast_to(eye, top.shape[:-2] + (q, q))], axis=-2)

        pieces.append(GraphPiece(domain, phi, dphi, float(w)))
    return pieces


def _elementary_symmetric(mu: np.ndarray) -> np.ndarray:
    """
    e_0..e_q of the last axis
    """
    q = mu.shape[-1]
    e = np.zeros(mu.shape[:-1] + (q + 1,))
    e[..., 0] = 1.0
    for i in range(q):
        e[..., 1:] = e[..., 1:] + mu[..., i:i + 1] * e[..., :-1]
    return e


def h_dimension_probe(
    pieces: Sequence[GraphPiece],
    base_dim: int,
    order: int = 12,
    threshold: float = 1e-8,
) -> HDimensionResult:
    """
    Largest j with S ^ pi*omega_V^j ^ omega^{q-j} carrying mass above threshold x total
    """
    if not pieces:
        raise ZeroCurrentError("The current has no pieces")
    masses = None
    for piece in pieces:
        grid = gauss_grid(order, piece.domain)
        jac = np.asarray(piece.jacobian(grid.nodes), dtype=complex)
        q = jac.shape[-1]
        top = min(base_dim, q)
        gram = np.conj(np.swapaxes(jac, -1, -2)) @ jac
        base_jac = jac[..., :base_dim, :]
        gram_v = np.conj(np.swapaxes(base_jac, -1, -2)) @ base_jac
        chol = np.linalg.cholesky(gram)
        inv = np.linalg.inv(chol)
        reduced = inv @ gram_v @ np.conj(np.swapaxes(inv, -1, -2))
        mu = np.clip(np.linalg.eigvalsh(reduced), 0.0, None)
        det_g = np.prod(np.abs(np.diagonal(chol, axis1=-2, axis2=-1)) ** 2, axis=-1)
        e = _elementary_symmetric(mu)[..., :top + 1]
        combinatorial = np.array([factorial(j) * factorial(q - j) for j in range(top + 1)], dtype=float)
        contribution = piece.weight * 2.0 ** q * combinatorial * ((grid.weights * det_g) @ e)
        masses = contribution if masses is None else masses + contribution
    total = float(masses[0])
    if not total > 0:
        raise ZeroCurrentError("The current has zero mass")
    above = [j for j, m in enumerate(masses) if m > threshold * total]
    return HDimensionResult(masses=[float(m) for m in masses], total=total, h_dimension=max(above), threshold=threshold)
