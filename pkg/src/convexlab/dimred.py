"""Dimension reduction: random orthogonal projections (distance preservation
and small-ball behaviour) and coordinate-subspace combinatorics for cubes
(cell content, combinatorial dimension, subspace search).

The squared norm ratio |Px|^2/|x|^2 of a Haar-random m-dimensional orthogonal
projection follows a Beta(m/2, (n-m)/2) law; that exact law is both the
simulation device (via rotation invariance) and the independent oracle behind
the small-ball fit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as _beta_dist

from .bodies import Body, Cube, Ellipsoid, LqBall
from .errors import BudgetError, ConstructionError, DomainError, UsageError
from .packing import PointCloud, greedy_packing
from .util import chunked_rows, derive_seed, philox

CELL_MAX_DIM = 12


@dataclass(frozen=True)
class Projection:
    """Rows of an orthogonal matrix (or a general scaled map), with its seed."""

    matrix: np.ndarray
    kind: str
    seed: int

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.matrix.T

    def orthogonality_defect(self) -> float:
        p = self.matrix
        return float(np.abs(p @ p.T - np.eye(self.out_dim)).max())


def random_projection(n: int, m: int, seed: int = 0) -> Projection:
    """First m rows of the orthogonal factor of a seeded Gaussian matrix.

    The QR sign convention (positive diagonal of R) makes the factor exactly
    Haar distributed, so the rows span a uniformly random subspace.
    """
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n, got m={m}, n={n}")
    g = philox(seed).standard_normal((n, n))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return Projection(matrix=q[:, :m].T.copy(), kind="orthogonal-rows", seed=seed)


def jl_check(points, m: int, eps: float, trials: int, seed: int = 0) -> float:
    """Fraction of random projections preserving all pairwise distances.

    A trial succeeds when every pair satisfies the two-sided bound
    1-eps <= sqrt(n/m) |P x_i - P x_j| / |x_i - x_j| <= 1+eps.
    """
    pts = points.points if isinstance(points, PointCloud) else np.atleast_2d(points)
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    n = pts.shape[1]
    if len(pts) < 2:
        raise UsageError("need at least two points")
    diffs = pts[:, None, :] - pts[None, :, :]
    iu = np.triu_indices(len(pts), 1)
    diffs = diffs[iu]
    norms = np.linalg.norm(diffs, axis=1)
    if np.any(norms == 0):
        raise UsageError("points must be distinct")
    scale = math.sqrt(n / m)
    ok = 0
    for t in range(trials):
        p = random_projection(n, m, derive_seed(seed, t))
        ratio = scale * np.linalg.norm(p.apply(diffs), axis=1) / norms
        if np.all((ratio >= 1 - eps) & (ratio <= 1 + eps)):
            ok += 1
    return ok / trials


def projected_norm_samples(n: int, m: int, trials: int, seed: int = 0) -> np.ndarray:
    """Samples of sqrt(n/m) |P x| for unit x under Haar random projections.

    By rotation invariance the law equals the first-m coordinate norm of a
    uniform point on the sphere, which is simulated directly from Gaussians.
    """
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n, got m={m}, n={n}")

    def draw(gen, k):
        z = gen.standard_normal((k, n))
        head = np.linalg.norm(z[:, :m], axis=1)
        full = np.linalg.norm(z, axis=1)
        return head / full

    return math.sqrt(n / m) * chunked_rows(seed, trials, draw)


def small_ball_beta_cdf(n: int, m: int, eps) -> np.ndarray | float:
    """Exact P(sqrt(n/m)|Px| <= eps) from the Beta(m/2, (n-m)/2) law."""
    eps = np.asarray(eps, dtype=float)
    x = np.clip(eps * eps * m / n, 0.0, 1.0)
    if m == n:
        out = np.where(eps >= 1.0, 1.0, 0.0)
    else:
        out = _beta_dist.cdf(x, m / 2.0, (n - m) / 2.0)
    return float(out) if np.ndim(eps) == 0 else out


@dataclass(frozen=True)
class SmallBallFit:
    """Fitted constant for the small-ball tail P(sqrt(n/m)|Px| <= eps) <= (C eps)^m."""

    c_prime: float
    eps: tuple[float, ...]
    probabilities: tuple[float, ...]
    retained: tuple[bool, ...]
    trials: int


def small_ball_fit(n: int, m: int, eps_grid, trials: int, seed: int = 0,
                   min_expected: float = 10.0) -> SmallBallFit:
    """Minimal C' with empirical P(sqrt(n/m)|Px| <= eps) <= (C' eps)^m.

    Grid cells whose expected hit count trials * eps^m falls below
    ``min_expected`` are pruned (too noisy to fit); pruning everything is a
    budget error naming the threshold.
    """
    eps_arr = np.sort(np.asarray(list(eps_grid), dtype=float))
    if np.any((eps_arr <= 0) | (eps_arr > 1)):
        raise DomainError("eps grid must lie in (0, 1]")
    stats = projected_norm_samples(n, m, trials, seed)
    probs = np.array([float(np.count_nonzero(stats <= e)) / trials for e in eps_arr])
    retained = trials * eps_arr**m >= min_expected
    if not retained.any():
        raise BudgetError(
            f"all grid cells pruned: need trials * eps^m >= {min_expected}"
        )
    ratios = np.where(probs > 0, probs ** (1.0 / m) / eps_arr, 0.0)
    c_prime = float(ratios[retained].max())
    return SmallBallFit(c_prime, tuple(eps_arr), tuple(probs),
                        tuple(bool(b) for b in retained), trials)


# ---------------------------------------------------------------------------
# probabilistic decoupled search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecoupledWitness:
    """Outcome of the randomized separation/massiveness search."""

    found: bool
    projection: Projection | None
    ball_radius: float          # radius of L = sqrt(2) sqrt(m/n) B_2^m
    trials_used: int
    separation_margin: float    # min pair distance / required threshold (best trial)
    mass_margin: float          # empirical pushforward mass / (exp(-q)/4) (best trial)


def decoupled_search(points, measure, body: Body, m: int, q: float, trials: int,
                     seed: int = 0, c_sep: float = 2.0,
                     mass_samples: int = 20_000) -> DecoupledWitness:
    """Search for a projection that keeps points separated while the scaled
    ball stays massive for the pushforward.

    Validates that the input points are body-separated and that the measure
    gives the body mass at least exp(-q) empirically; then draws random
    orthogonal projections and accepts the first one whose images are
    L/c_sep-separated (L = sqrt(2) sqrt(m/n) B_2^m) and whose empirical
    pushforward mass of L is at least exp(-q)/4.  A failed search returns the
    best margins rather than raising.
    """
    pts = points.points if isinstance(points, PointCloud) else np.atleast_2d(points)
    if q <= 0:
        raise DomainError("q must be positive")
    n = measure.dim
    if pts.size and pts.shape[1] != n:
        raise UsageError("points and measure dimensions differ")
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n, got m={m}")
    # hypothesis validation
    if len(pts) >= 2:
        iu = np.triu_indices(len(pts), 1)
        gaps = body.gauge((pts[:, None, :] - pts[None, :, :])[iu])
        if np.any(gaps <= 2.0):
            raise UsageError("input points are not body-separated")
    from .measures import sample as _sample

    bank = _sample(measure, mass_samples, derive_seed(seed, 0xBA))
    base_mass = float(np.count_nonzero(body.gauge(bank.points) <= 1.0)) / mass_samples
    if base_mass < math.exp(-q):
        raise UsageError(
            f"measure(body) = {base_mass:.4g} < exp(-q) = {math.exp(-q):.4g}"
        )
    radius = math.sqrt(2.0) * math.sqrt(m / n)
    sep_threshold = 2.0 * radius / c_sep
    mass_floor = 0.25 * math.exp(-q)
    best_sep = -math.inf
    best_mass = -math.inf
    for t in range(trials):
        proj = random_projection(n, m, derive_seed(seed, 1, t))
        img = proj.apply(pts)
        if len(pts) >= 2:
            iu = np.triu_indices(len(pts), 1)
            dmin = float(np.linalg.norm((img[:, None, :] - img[None, :, :])[iu],
                                        axis=1).min())
            sep_margin = dmin / sep_threshold
        else:
            sep_margin = math.inf  # vacuous separation
        mass = float(np.count_nonzero(
            np.linalg.norm(proj.apply(bank.points), axis=1) <= radius
        )) / mass_samples
        mass_margin = mass / mass_floor
        best_sep = max(best_sep, sep_margin)
        best_mass = max(best_mass, mass_margin)
        if sep_margin > 1.0 and mass_margin >= 1.0:
            return DecoupledWitness(True, proj, radius, t + 1, sep_margin, mass_margin)
    return DecoupledWitness(False, None, radius, trials, best_sep, best_mass)


# ---------------------------------------------------------------------------
# coordinate-subspace combinatorics
# ---------------------------------------------------------------------------


class ProjectionOracle:
    """Membership oracle for every coordinate projection of a fixed set.

    ``contains(axes, pts)`` must decide membership of points (given in the
    coordinates listed in ``axes``) in the projection onto those axes, for
    the convex set being described.
    """

    dim: int
    convex: bool = True

    def contains(self, axes: tuple[int, ...], pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounding_radii(self) -> np.ndarray:
        raise NotImplementedError


class BoxOracle(ProjectionOracle):
    """Axis-aligned box [lo, hi] (not necessarily symmetric)."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ConstructionError("box bounds must satisfy lo <= hi")
        self.dim = self.lo.size

    def contains(self, axes, pts):
        pts = np.atleast_2d(pts)
        a = list(axes)
        return np.all((pts >= self.lo[a]) & (pts <= self.hi[a]), axis=1)

    def bounding_radii(self):
        return np.maximum(np.abs(self.lo), np.abs(self.hi))


class BodyProjectionOracle(ProjectionOracle):
    """Exact coordinate projections of cubes, l_q balls and ellipsoids.

    Coordinate projections of cubes and l_q balls are lower-dimensional bodies
    of the same kind; ellipsoid projections are computed through the Gram
    matrix of the selected rows.
    """

    def __init__(self, body: Body):
        if not isinstance(body, (Cube, LqBall, Ellipsoid)):
            raise ConstructionError(
                "exact projections available for cubes, lq balls and ellipsoids only"
            )
        self.body = body
        self.dim = body.dim

    def contains(self, axes, pts):
        pts = np.atleast_2d(pts)
        b = self.body
        if isinstance(b, Cube):
            return np.max(np.abs(pts), axis=1) <= b.a
        if isinstance(b, LqBall):
            sub = LqBall(b.q, b.r, len(axes))
            return sub.gauge(pts) <= 1.0
        rows = b.matrix[list(axes), :]
        gram_inv = np.linalg.inv(rows @ rows.T)
        qf = np.einsum("ij,jk,ik->i", pts, gram_inv, pts)
        return qf <= 1.0

    def bounding_radii(self):
        eye = np.eye(self.dim)
        return np.array([self.body.support(eye[i]) for i in range(self.dim)])


class ZpProjectionOracle(ProjectionOracle):
    """Coordinate projections of a moment body via marginal gauges.

    The projection of the moment body onto axes F is the moment body of the
    marginal, whose bank is the column selection of the shared bank; the
    gauge there is evaluated by the usual sphere ascent (an approximate,
    lower-bounding oracle).
    """

    def __init__(self, zp, scale: float = 1.0):
        from .centroid import ZpBody

        if not isinstance(zp, ZpBody):
            raise ConstructionError("needs a moment body")
        self.zp = zp
        self.scale = float(scale)
        self.dim = zp.dim

    def contains(self, axes, pts):
        from .centroid import ZpBody
        from .measures import SampleBank

        pts = np.atleast_2d(pts)
        cols = list(axes)
        sub_bank = SampleBank(points=self.zp.bank.points[:, cols],
                              seed=self.zp.bank.seed, spec=None)
        sub = ZpBody(None, self.zp.p, sub_bank)
        out = np.ones(len(pts), dtype=bool)
        nz = np.linalg.norm(pts, axis=1) > 0
        if nz.any():
            out[nz] = sub.gauge_batch(pts[nz], restarts=2, iters=60) <= self.scale
        return out

    def bounding_radii(self):
        # the oracle describes scale * Z_p, so axis supports rescale the same way
        eye = np.eye(self.dim)
        return self.scale * self.zp.support(eye)


def _axis_ranges(radii: np.ndarray, axes: tuple[int, ...]):
    los = [int(math.floor(-radii[i])) for i in axes]
    his = [int(math.ceil(radii[i])) for i in axes]
    return los, his


def _cells_in_projection(oracle: ProjectionOracle, axes: tuple[int, ...],
                         radii: np.ndarray) -> int:
    """Count integer cells inside the projection onto ``axes``.

    Integer lattice points of the outward-rounded bounding box are classified
    once; a cell is counted iff all its 2^m corners pass, which is exact for
    convex projections.
    """
    los, his = _axis_ranges(radii, axes)
    shape = tuple(hi - lo + 1 for lo, hi in zip(los, his))
    if any(s < 2 for s in shape):
        return 0
    grids = np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in zip(los, his)],
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    inside = np.asarray(oracle.contains(axes, pts)).reshape(shape)
    return _count_full_cells(inside)


def _count_full_cells(inside: np.ndarray) -> int:
    """Number of unit cells all of whose 2^m corners are marked inside."""
    cells = inside
    for d in range(inside.ndim):
        lo = [slice(None)] * inside.ndim
        hi = [slice(None)] * inside.ndim
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        cells = cells[tuple(lo)] & cells[tuple(hi)]
    return int(cells.sum())


def _check_oracle(oracle: ProjectionOracle, radii) -> np.ndarray:
    if oracle.dim > CELL_MAX_DIM:
        raise BudgetError(
            f"cell enumeration limited to dimension {CELL_MAX_DIM}, got {oracle.dim}"
        )
    if not getattr(oracle, "convex", True):
        raise UsageError("cell counting via corners needs a convexity certificate")
    r = np.asarray(radii if radii is not None else oracle.bounding_radii(),
                   dtype=float)
    if r.shape != (oracle.dim,):
        raise UsageError("need one bounding radius per coordinate")
    return r


def cell_content(oracle: ProjectionOracle, radii=None) -> int:
    """Total number of integer cells over all 2^n coordinate projections.

    The zero subspace contributes 1.  Projections are monotone under axis
    removal (a cell in a projection projects to a cell in any sub-projection),
    so axes whose one-dimensional projection has no cell are skipped outright.
    """
    r = _check_oracle(oracle, radii)
    n = oracle.dim
    total = 1  # zero subspace
    usable = [i for i in range(n) if _cells_in_projection(oracle, (i,), r) > 0]
    for m in range(1, len(usable) + 1):
        for axes in itertools.combinations(usable, m):
            total += _cells_in_projection(oracle, axes, r)
    # axes outside ``usable`` cannot appear in any cell-carrying subspace
    return total


def comb_dimension(oracle: ProjectionOracle, radii=None) -> int:
    """Largest coordinate-projection dimension containing an integer cell.

    Walks the subspace lattice level by level: a subspace can carry a cell
    only if all its one-smaller subspaces do, so each level is built from the
    previous level's survivors.
    """
    r = _check_oracle(oracle, radii)
    n = oracle.dim
    level = [(i,) for i in range(n)
             if _cells_in_projection(oracle, (i,), r) > 0]
    if not level:
        return 0
    v = 1
    survivors = set(level)
    while True:
        next_level = set()
        for axes in survivors:
            for j in range(axes[-1] + 1, n):
                cand = axes + (j,)
                if all(tuple(a for a in cand if a != drop) in survivors
                       for drop in cand):
                    next_level.add(cand)
        confirmed = {axes for axes in next_level
                     if _cells_in_projection(oracle, axes, r) > 0}
        if not confirmed:
            return v
        v += 1
        survivors = confirmed


@dataclass(frozen=True)
class CubeSearchResult:
    """Outcome of the coordinate-subspace search for cube separators."""

    found: bool
    axes: tuple[int, ...]
    m: int
    witness: object | None       # PackingResult over the projected points
    mass_certificate: float      # empirical marginal mass of the projected cube
    base_mass: float             # empirical mass of the full cube
    max_dim_examined: int        # largest dimension whose subspaces were all cell-free


def cube_part1_search(measure, p: float, t: float, seed: int = 0,
                      bank_size: int = 4000, validate_mass: bool = True,
                      scale_factor: float = 8.0) -> CubeSearchResult:
    """Find a coordinate subspace whose projected moment body packs cube copies.

    Enumerates coordinate subspaces by decreasing dimension (lexicographic
    within a dimension, pruned by the projection monotonicity of cells); a
    subspace qualifies when (1/(scale_factor * t)) of the projected moment
    body contains an integer cell, tested on the 2^m cell corners through the
    marginal gauge.  On success the scaled cell yields a grid of 4^m points in
    the projected body that a greedy pass certifies as t-cube-separated, which
    is at least e^m points.
    """
    from .centroid import ZpBody
    from .measures import sample as _sample

    n = measure.dim
    if n > CELL_MAX_DIM:
        raise BudgetError(f"search limited to dimension {CELL_MAX_DIM}, got {n}")
    if t < 1.0 / n:
        raise DomainError(f"regularity scale t must be at least 1/n = {1.0 / n}")
    bank = _sample(measure, bank_size, derive_seed(seed, 5))
    base_mass = float(np.count_nonzero(
        np.abs(bank.points).max(axis=1) <= 1.0)) / bank.count
    if validate_mass and base_mass < 1.0 / math.e:
        raise UsageError(
            f"measure(cube) = {base_mass:.4g} < 1/e; pass validate_mass=False to force"
        )
    zp = ZpBody(measure, p, bank)
    scale = scale_factor * t
    oracle = ZpProjectionOracle(zp, scale=1.0 / scale)  # membership of scale-shrunk body
    radii = oracle.bounding_radii()

    usable = [i for i in range(n) if _cells_in_projection(oracle, (i,), radii) > 0]
    max_cell_free = 0
    for m in range(len(usable), 0, -1):
        for axes in itertools.combinations(usable, m):
            cnt, cell = _first_cell(oracle, axes, radii)
            if cnt:
                witness = _cube_witness(zp, axes, cell, t, scale)
                proj_mass = float(np.count_nonzero(
                    np.abs(bank.points[:, list(axes)]).max(axis=1) <= 1.0
                )) / bank.count
                return CubeSearchResult(True, axes, m, witness, proj_mass,
                                        base_mass, max_cell_free)
        max_cell_free = max(max_cell_free, m)
    return CubeSearchResult(False, (), 0, None, base_mass, base_mass,
                            max(max_cell_free, n))


def _first_cell(oracle, axes, radii):
    los, his = _axis_ranges(radii, axes)
    shape = tuple(hi - lo + 1 for lo, hi in zip(los, his))
    if any(s < 2 for s in shape):
        return False, None
    grids = np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in zip(los, his)],
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    inside = np.asarray(oracle.contains(axes, pts)).reshape(shape)
    cells = inside
    for d in range(inside.ndim):
        lo = [slice(None)] * inside.ndim
        hi = [slice(None)] * inside.ndim
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        cells = cells[tuple(lo)] & cells[tuple(hi)]
    hits = np.argwhere(cells)
    if len(hits) == 0:
        return False, None
    corner = hits[0]
    cell = np.array([lo + int(c) for lo, c in zip(los, corner)], dtype=float)
    return True, cell


def _cube_witness(zp, axes, cell, t, scale):
    """Grid of 4^m points in the scaled cell, separated against t * cube."""
    m = len(axes)
    steps = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
    grids = np.meshgrid(*([steps] * m), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    pts = scale * (cell[None, :] + offs)  # inside scale * cell subset of P_F Z_p
    cloud = PointCloud(pts, {"generator": "cube_cell_grid", "axes": list(axes)})
    separator = Cube(t, m)
    return greedy_packing(cloud, separator, seed=0, order="random")


def rv_bound(a: float, eps: float, sigma_value: float) -> float:
    """Covering bound Sigma^(M_eps) with M_eps = 4 log^eps(e + 1/a).

    ``sigma_value`` is the caller-computed cell content of the appropriately
    inflated body (the inflation constant is the caller's configuration).
    """
    if a <= 0 or eps <= 0:
        raise DomainError("a and eps must be positive")
    if sigma_value < 1:
        raise UsageError("cell content is at least 1")
    m_eps = 4.0 * math.log(math.e + 1.0 / a) ** eps
    return sigma_value**m_eps


def sauer_shelah_bound(a: float, n: int, v: float, c: float = 1.0) -> float:
    """Integer-cell counting bound (C a n / v)^v for bodies inside a*cube."""
    if a <= 0 or v < 1:
        raise DomainError("need a > 0 and v >= 1")
    return (c * a * n / v) ** v
