"""Origin-symmetric log-concave probability measures.

Each measure carries a seeded sampler (deterministic and bit-reproducible for
a fixed seed, generated in fixed-size counter-keyed chunks) and, where closed
forms exist, a density and an exact covariance.  Barycenters are assumed to be
at the origin; the constructors only admit symmetric specifications.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import bodies as _bodies
from .bodies import Body, Cube, Ellipsoid, LinearImage, LqBall
from .errors import (
    BudgetError,
    ConstructionError,
    DomainError,
    UnsupportedOperationError,
    UsageError,
)
from .util import chunked_rows, derive_seed, philox

HIT_AND_RUN_MAX_DIM = 64
_BANK_MAGIC = b"SB"
_BANK_HEADER = struct.Struct("<2sIHQ")  # magic, N, n, seed -> 16 bytes


class Measure:
    """Common interface of measure specifications."""

    kind = "measure"
    dim: int

    def sample_points(self, count: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    # closed forms; None when unavailable ----------------------------------
    def exact_covariance(self) -> np.ndarray | None:
        return None

    def log_max_density(self) -> float | None:
        return None

    def log_density(self, pts: np.ndarray) -> np.ndarray | None:
        return None

    def params(self) -> dict:
        raise UnsupportedOperationError(f"{self.kind} is not serializable")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dim, "parameters": self.params()}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Gaussian(Measure):
    """Pushforward A_* of the standard Gaussian; covariance A A^T exactly."""

    kind = "gaussian"

    def __init__(self, matrix):
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConstructionError("gaussian matrix must be square")
        if abs(np.linalg.slogdet(a)[0]) != 1:
            raise ConstructionError("gaussian matrix must be invertible")
        self.matrix = a
        self.dim = a.shape[0]
        self._inv = np.linalg.inv(a)

    @classmethod
    def standard(cls, dim: int, sigma: float = 1.0) -> "Gaussian":
        return cls(sigma * np.eye(dim))

    def sample_points(self, count, seed):
        at = self.matrix.T
        return chunked_rows(seed, count, lambda g, k: g.standard_normal((k, self.dim)) @ at)

    def exact_covariance(self):
        return self.matrix @ self.matrix.T

    def log_max_density(self):
        return -0.5 * self.dim * math.log(2 * math.pi) - np.linalg.slogdet(self.matrix)[1]

    def log_density(self, pts):
        z = np.atleast_2d(pts) @ self._inv.T
        return self.log_max_density() - 0.5 * (z * z).sum(axis=-1)

    def params(self):
        return {"matrix": self.matrix.tolist()}


def _sample_uniform_lq(dim: int, q: float, r: float, count: int, seed: int) -> np.ndarray:
    """Exact uniform sampler on r*B_q^n (generalized-normal plus exponential trick)."""

    def draw(gen, k):
        if math.isinf(q):
            return gen.uniform(-r, r, size=(k, dim))
        sign = gen.integers(0, 2, size=(k, dim)) * 2.0 - 1.0
        g = sign * gen.standard_gamma(1.0 / q, size=(k, dim)) ** (1.0 / q)
        w = gen.standard_exponential(size=k)
        denom = ((np.abs(g) ** q).sum(axis=1) + w) ** (1.0 / q)
        return r * g / denom[:, None]

    return chunked_rows(seed, count, draw)


def _hit_and_run_uniform(body: Body, count: int, seed: int) -> np.ndarray:
    """Uniform samples on a convex body via hit-and-run.

    Chains start at the origin (interior by symmetry), burn in for 50n steps
    and keep every n-th state; chord endpoints are found by doubling plus
    bisection on the gauge to tolerance 1e-10.  Several chains run in
    parallel, chain c keyed by (seed, c), outputs concatenated chain-major.
    """
    n = body.dim
    if n > HIT_AND_RUN_MAX_DIM:
        raise BudgetError(
            f"hit-and-run limited to dimension {HIT_AND_RUN_MAX_DIM}, got {n}"
        )
    if not body.convex:
        raise UnsupportedOperationError("hit-and-run requires a convex body")
    chains = min(64, max(1, count // 16))
    per_chain = -(-count // chains)
    gens = [philox(seed, c) for c in range(chains)]

    x = np.zeros((chains, n))
    out = np.empty((chains, per_chain, n))
    burn = 50 * n
    total_steps = burn + n * per_chain

    def chord_extent(x, d):
        # largest t with gauge(x + t d) <= 1, per chain, by doubling + bisection
        hi = np.full(chains, 1.0)
        for _ in range(80):
            inside = body.gauge(x + hi[:, None] * d) <= 1.0
            if not inside.any():
                break
            hi[inside] *= 2.0
        else:
            raise UsageError("body appears unbounded along a sampled chord")
        lo = np.zeros(chains)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            inside = body.gauge(x + mid[:, None] * d) <= 1.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
            if np.all(hi - lo <= 1e-10 * np.maximum(1.0, hi)):
                break
        return lo

    kept = 0
    for step in range(total_steps):
        d = np.vstack([g.standard_normal(n) for g in gens])
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        t_plus = chord_extent(x, d)
        t_minus = chord_extent(x, -d)
        u = np.array([g.random() for g in gens])
        t = -t_minus + u * (t_plus + t_minus)
        x = x + t[:, None] * d
        if step >= burn and (step - burn) % n == n - 1:
            out[:, kept, :] = x
            kept += 1
            if kept == per_chain:
                break
    return out.reshape(chains * per_chain, n)[:count]


class UniformBody(Measure):
    """Uniform probability measure on an origin-symmetric body.

    Closed-form bodies (ellipsoids, cubes, l_q balls and invertible linear
    images of those) use exact samplers; other convex bodies fall back to
    hit-and-run.
    """

    kind = "uniform_body"

    def __init__(self, body: Body):
        self.body = body
        self.dim = body.dim

    def _exact_sampler(self, body, count, seed):
        if isinstance(body, Ellipsoid):
            def draw(gen, k):
                z = gen.standard_normal((k, self.dim))
                z /= np.linalg.norm(z, axis=1, keepdims=True)
                rad = gen.random(k) ** (1.0 / self.dim)
                return (z * rad[:, None]) @ body.matrix.T
            return chunked_rows(seed, count, draw)
        if isinstance(body, Cube):
            a = body.a
            return chunked_rows(seed, count,
                                lambda g, k: g.uniform(-a, a, size=(k, self.dim)))
        if isinstance(body, LqBall):
            return _sample_uniform_lq(self.dim, body.q, body.r, count, seed)
        if isinstance(body, LinearImage) and body._inv is not None:
            inner = self._exact_sampler(body.inner, count, seed)
            if inner is not None:
                return inner @ body.matrix.T
        return None

    def sample_points(self, count, seed):
        pts = self._exact_sampler(self.body, count, seed)
        if pts is None:
            pts = _hit_and_run_uniform(self.body, count, seed)
        return pts

    def exact_covariance(self):
        b = self.body
        n = self.dim
        if isinstance(b, Cube):
            return (b.a**2 / 3.0) * np.eye(n)
        if isinstance(b, Ellipsoid):
            return (b.matrix @ b.matrix.T) / (n + 2.0)
        if isinstance(b, LqBall):
            q, r = b.q, b.r
            if math.isinf(q):
                return (r**2 / 3.0) * np.eye(n)
            lg = (math.lgamma(3.0 / q) + math.lgamma(1.0 + n / q)
                  - math.lgamma(1.0 / q) - math.lgamma(1.0 + (n + 2.0) / q))
            return (r**2) * math.exp(lg) * np.eye(n)
        return None

    def log_max_density(self):
        try:
            return -_bodies.log_volume(self.body)
        except UnsupportedOperationError:
            return None

    def log_density(self, pts):
        lmax = self.log_max_density()
        if lmax is None:
            return None
        inside = self.body.gauge(np.atleast_2d(pts)) <= 1.0
        return np.where(inside, lmax, -np.inf)

    def params(self):
        return {"body": self.body.to_dict()}


@dataclass(frozen=True)
class Factor:
    """One coordinate of a product density: uniform, exponential or power."""

    family: str  # "uniform" | "exponential" | "power"
    scale: float = 1.0
    alpha: float | None = None  # only for "power", alpha >= 1

    def __post_init__(self):
        if self.family not in ("uniform", "exponential", "power"):
            raise ConstructionError(f"unknown factor family {self.family!r}")
        if self.scale <= 0:
            raise ConstructionError("factor scale must be positive")
        if self.family == "power":
            if self.alpha is None or self.alpha < 1:
                raise ConstructionError("power factor needs alpha >= 1")

    @property
    def exponent(self) -> float:
        # density is proportional to exp(-|x/scale|^exponent) on its support
        return {"uniform": math.inf, "exponential": 1.0}.get(self.family, self.alpha)

    def variance(self) -> float:
        s, a = self.scale, self.exponent
        if math.isinf(a):
            return s * s / 3.0
        return s * s * math.exp(math.lgamma(3.0 / a) - math.lgamma(1.0 / a))

    def log_max_density(self) -> float:
        s, a = self.scale, self.exponent
        if math.isinf(a):
            return -math.log(2.0 * s)
        return -math.log(2.0 * s) - math.lgamma(1.0 + 1.0 / a)

    def log_density_1d(self, x: np.ndarray) -> np.ndarray:
        s, a = self.scale, self.exponent
        if math.isinf(a):
            return np.where(np.abs(x) <= s, -math.log(2.0 * s), -np.inf)
        return self.log_max_density() - (np.abs(x) / s) ** a

    def draw(self, gen, k: int) -> np.ndarray:
        s, a = self.scale, self.exponent
        if math.isinf(a):
            return gen.uniform(-s, s, size=k)
        sign = gen.integers(0, 2, size=k) * 2.0 - 1.0
        return sign * s * gen.standard_gamma(1.0 / a, size=k) ** (1.0 / a)


class ProductDensity(Measure):
    """Product of symmetric one-dimensional log-concave densities."""

    kind = "product_density"

    def __init__(self, factors):
        self.factors = tuple(factors)
        if not self.factors:
            raise ConstructionError("need at least one factor")
        self.dim = len(self.factors)

    @classmethod
    def exponential(cls, dim: int, scale: float = 1.0) -> "ProductDensity":
        return cls([Factor("exponential", scale)] * dim)

    def sample_points(self, count, seed):
        def draw(gen, k):
            return np.column_stack([f.draw(gen, k) for f in self.factors])
        return chunked_rows(seed, count, draw)

    def exact_covariance(self):
        return np.diag([f.variance() for f in self.factors])

    def log_max_density(self):
        return sum(f.log_max_density() for f in self.factors)

    def log_density(self, pts):
        pts = np.atleast_2d(pts)
        return sum(f.log_density_1d(pts[..., i]) for i, f in enumerate(self.factors))

    def params(self):
        return {"factors": [{"family": f.family, "scale": f.scale, "alpha": f.alpha}
                            for f in self.factors]}


class ConeExp(Measure):
    """Density proportional to exp(-||x||_K) for an origin-symmetric body K.

    Sampled as r * z/||z||_K with r ~ Gamma(n, 1) and z uniform in K, i.e. a
    Gamma radial profile over the cone measure of the boundary.
    """

    kind = "cone_exp"

    def __init__(self, body: Body):
        self.body = body
        self.dim = body.dim
        self._uniform = UniformBody(body)

    def sample_points(self, count, seed):
        z = self._uniform.sample_points(count, derive_seed(seed, 1))
        g = self.body.gauge(z)
        # gauge vanishes only on a null set; nudge exact zeros onto e_1
        zero = g == 0.0
        if np.any(zero):
            z[zero] = np.eye(self.dim)[0]
            g = self.body.gauge(z)
        theta = z / g[:, None]
        r = chunked_rows(derive_seed(seed, 2), count,
                         lambda gen, k: gen.standard_gamma(self.dim, size=k))
        return theta * r[:, None]

    def exact_covariance(self):
        if isinstance(self.body, Ellipsoid):
            a = self.body.matrix
            return (self.dim + 1.0) * (a @ a.T)
        return None

    def log_max_density(self):
        try:
            return -math.lgamma(self.dim + 1) - _bodies.log_volume(self.body)
        except UnsupportedOperationError:
            return None

    def log_density(self, pts):
        lmax = self.log_max_density()
        if lmax is None:
            return None
        return lmax - self.body.gauge(np.atleast_2d(pts))

    def params(self):
        return {"body": self.body.to_dict()}


class Pushforward(Measure):
    """T_* inner for a full-row-rank linear map T."""

    kind = "pushforward"

    def __init__(self, matrix, inner: Measure):
        t = np.atleast_2d(np.asarray(matrix, dtype=float))
        if t.shape[1] != inner.dim:
            raise ConstructionError("map columns must match inner dimension")
        if t.shape[0] > t.shape[1] or np.linalg.matrix_rank(t) < t.shape[0]:
            raise ConstructionError("map must have full row rank with m <= n")
        self.matrix = t
        self.inner = inner
        self.dim = t.shape[0]

    def sample_points(self, count, seed):
        return self.inner.sample_points(count, seed) @ self.matrix.T

    def exact_covariance(self):
        c = self.inner.exact_covariance()
        if c is None:
            return None
        return self.matrix @ c @ self.matrix.T

    def params(self):
        return {"matrix": self.matrix.tolist(), "inner": self.inner.to_dict()}


# ---------------------------------------------------------------------------
# sample banks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleBank:
    """An i.i.d. sample of a measure, tagged with its generator and seed."""

    points: np.ndarray
    seed: int
    spec: Measure | None = field(default=None, repr=False)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.count


def sample(measure: Measure, count: int, seed: int) -> SampleBank:
    """Draw ``count`` i.i.d. points; bit-identical for identical (spec, count, seed)."""
    if count < 1:
        raise UsageError("count must be at least 1")
    pts = measure.sample_points(count, seed)
    pts.setflags(write=False)
    return SampleBank(points=pts, seed=seed, spec=measure)


def save_bank(path: str, bank: SampleBank) -> None:
    """Binary bank: 16-byte header {magic, N, n, seed} then float64 rows."""
    if bank.dim > 0xFFFF:
        raise UsageError("bank dimension exceeds header capacity")
    with open(path, "wb") as fh:
        fh.write(_BANK_HEADER.pack(_BANK_MAGIC, bank.count, bank.dim,
                                   bank.seed & (1 << 64) - 1))
        fh.write(np.ascontiguousarray(bank.points, dtype="<f8").tobytes())


def load_bank(path: str) -> SampleBank:
    with open(path, "rb") as fh:
        magic, count, dim, seed = _BANK_HEADER.unpack(fh.read(_BANK_HEADER.size))
        if magic != _BANK_MAGIC:
            raise UsageError(f"not a sample bank file: bad magic {magic!r}")
        pts = np.frombuffer(fh.read(), dtype="<f8").reshape(count, dim).copy()
    pts.setflags(write=False)
    return SampleBank(points=pts, seed=seed, spec=None)


# ---------------------------------------------------------------------------
# scalar functionals
# ---------------------------------------------------------------------------


def quantile_of_gauges(gauges: np.ndarray, q: float) -> float:
    """Empirical scale s with mass(s L) = exp(-q), from precomputed gauge values.

    Interpolates linearly between order-statistic midpoints: at an integer
    target rank k the estimate is the midpoint of the k-th and (k+1)-th order
    statistics (the whole interval has empirical mass k/N), and fractional
    ranks interpolate between those knots.  Monotone non-increasing in q on a
    fixed bank by construction.
    """
    if q <= 0:
        raise DomainError("quantile level q must be positive")
    g = np.sort(np.asarray(gauges, dtype=float))
    n = g.size
    target = math.exp(-q) * n  # fractional rank in (0, n)

    def knot(k: int) -> float:  # estimate at integer rank k
        if k <= 0:
            return 0.0
        if k >= n:
            return float(g[n - 1])
        return 0.5 * float(g[k - 1] + g[k])

    k = int(math.floor(target))
    frac = target - k
    return knot(k) + frac * (knot(k + 1) - knot(k))


def _bank_for(measure, body, count, seed, bank):
    if bank is None:
        if count is None:
            raise UsageError("either a bank or a sample count is required")
        bank = sample(measure, count, seed)
    if bank.dim != body.dim:
        raise UsageError("measure and body dimensions differ")
    return bank


def quantile_mq(measure: Measure, body: Body, q: float, count: int | None = None,
                seed: int = 0, bank: SampleBank | None = None) -> float:
    """Empirical quantile scale m_q: the s with measure(s * body) = exp(-q).

    Requires exp(-q) * N >= 50 so the estimated tail holds enough mass.
    """
    if q <= 0:
        raise DomainError("q must be positive")
    bank = _bank_for(measure, body, count, seed, bank)
    n = bank.count
    if math.exp(-q) * n < 50:
        minimal = int(math.ceil(50 * math.exp(q)))
        raise BudgetError(
            f"quantile at q={q} needs at least N={minimal} samples, got {n}"
        )
    return quantile_of_gauges(body.gauge(bank.points), q)


def moment_of_gauges(gauges: np.ndarray, q: float) -> float:
    """((1/N) sum g_i^q)^(1/q), the q-th root taken in log space.

    Negative q in (-1, 0) is supported; the log-domain sum uses exact
    compensated summation so tiny gauges cannot swamp the accumulation.
    """
    if q <= -1:
        raise DomainError("moment exponent must satisfy q > -1")
    if q == 0:
        raise DomainError("moment exponent q = 0 is not defined")
    g = np.asarray(gauges, dtype=float)
    if np.any(g < 0):
        raise UsageError("gauge values must be nonnegative")
    if q < 0 and np.any(g == 0.0):
        return 0.0  # infinite negative-moment mass; I_q degenerates to 0
    with np.errstate(divide="ignore"):
        logs = q * np.log(g)
    m = logs.max()
    if m == -math.inf:
        return 0.0
    shifted = np.exp(logs - m)
    total = math.fsum(shifted.tolist())
    return math.exp((m + math.log(total) - math.log(g.size)) / q)


def moment_Iq(measure: Measure, body: Body, q: float, count: int | None = None,
              seed: int = 0, bank: SampleBank | None = None) -> float:
    """Empirical moment functional I_q: q-th moment of the gauge under the measure."""
    if q <= -1:
        raise DomainError("moment exponent must satisfy q > -1")
    bank = _bank_for(measure, body, count, seed, bank)
    if q < 0 and bank.count < 10_000:
        raise BudgetError(
            f"negative moments need at least N=10000 samples, got {bank.count}"
        )
    return moment_of_gauges(body.gauge(bank.points), q)


def covariance(measure: Measure, count: int | None = None, seed: int = 0,
               bank: SampleBank | None = None) -> np.ndarray:
    """Covariance matrix: exact A A^T for a Gaussian, empirical otherwise.

    The barycenter is taken to be the origin (symmetric inputs only), so the
    empirical version is the raw second-moment matrix of the bank.
    """
    if isinstance(measure, Gaussian):
        return measure.exact_covariance()
    if bank is None:
        if count is None:
            raise UsageError("non-Gaussian covariance needs a sample count or bank")
        bank = sample(measure, count, seed)
    pts = bank.points
    return pts.T @ pts / bank.count


def isotropic_constant(measure: Measure) -> float:
    """(max density)^(1/n) (det covariance)^(1/2n), exactly, in log space."""
    lmax = measure.log_max_density()
    cov = measure.exact_covariance()
    if lmax is None or cov is None:
        raise UnsupportedOperationError(
            "isotropic constant needs a closed-form max density and covariance"
        )
    n = measure.dim
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ConstructionError("covariance must be positive definite")
    return math.exp(lmax / n + logdet / (2.0 * n))


def _is_coordinate_selector(t: np.ndarray) -> list[int] | None:
    rows = []
    for row in t:
        hits = np.nonzero(row)[0]
        if hits.size != 1 or row[hits[0]] != 1.0:
            return None
        rows.append(int(hits[0]))
    return rows if len(set(rows)) == len(rows) else None


def marginal(measure: Measure, matrix) -> Measure:
    """The pushforward of the measure under a full-row-rank map.

    Gaussians stay Gaussian; a coordinate selection of a product density stays
    a product density on the kept coordinates; everything else is wrapped as a
    generic pushforward whose sampler composes with the map.
    """
    t = np.atleast_2d(np.asarray(matrix, dtype=float))
    if t.shape[1] != measure.dim or t.shape[0] > t.shape[1]:
        raise ConstructionError("marginal map must be m x n with m <= n")
    if np.linalg.matrix_rank(t) < t.shape[0]:
        raise ConstructionError("marginal map must have full row rank")
    if isinstance(measure, Gaussian):
        m = t @ measure.matrix
        # re-square via an SVD factor so the result is again a Gaussian spec
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        return Gaussian(u @ np.diag(s) @ u.T)
    if isinstance(measure, ProductDensity):
        kept = _is_coordinate_selector(t)
        if kept is not None:
            return ProductDensity([measure.factors[i] for i in kept])
    return Pushforward(t, measure)


def measure_from_dict(doc: dict) -> Measure:
    kind = doc.get("kind")
    p = doc.get("parameters", {})
    if kind == "gaussian":
        return Gaussian(np.asarray(p["matrix"], float))
    if kind == "uniform_body":
        return UniformBody(_bodies.body_from_dict(p["body"]))
    if kind == "product_density":
        return ProductDensity([Factor(f["family"], f["scale"], f.get("alpha"))
                               for f in p["factors"]])
    if kind == "cone_exp":
        return ConeExp(_bodies.body_from_dict(p["body"]))
    if kind == "pushforward":
        return Pushforward(np.asarray(p["matrix"], float),
                           measure_from_dict(p["inner"]))
    raise ConstructionError(f"unknown measure kind {kind!r}")
