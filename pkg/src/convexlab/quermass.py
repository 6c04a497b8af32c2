"""Quermassintegral machinery: Steiner evaluation, Kubota Monte Carlo
estimation over random subspaces, the Alexandrov sandwich, and closed-form
right-hand-side evaluators for the packing bound chain.

Conventions: W_k is homogeneous of degree k in the body, W_0 = |B_2^n|, and
|K + t B_2^n| = sum_k C(n,k) W_k(K) t^(n-k).  All W_k of the Euclidean ball
equal |B_2^n|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bodies import Body, Ellipsoid
from .errors import BudgetError, DomainError, UnsupportedOperationError, UsageError
from .measures import Measure, SampleBank, sample
from .util import (
    MCEstimate,
    derive_seed,
    log_unit_ball_volume,
    philox,
    unit_vectors,
)

KUBOTA_MAX_K = 6
DEFAULT_DIRECTIONS_PER_K = 500


@dataclass(frozen=True)
class QuermassEstimate:
    """Monte Carlo estimate of one quermassintegral W_k."""

    k: int
    value: float
    stderr: float
    subspaces: int
    seed: int

    def __float__(self) -> float:
        return self.value


def steiner_volume(quermass, t: float) -> float:
    """Evaluate the Steiner polynomial sum_k C(n,k) W_k t^(n-k).

    ``quermass`` lists W_0..W_n (floats or QuermassEstimate); a leading None,
    or a list of length n, auto-fills W_0 = |B_2^n|.  Terms are accumulated
    through their logarithms so large dimensions cannot overflow.
    """
    if t < 0:
        raise DomainError("Steiner parameter t must be nonnegative")
    vals = [None if w is None else float(w) for w in quermass]
    if len(vals) < 2:
        raise UsageError("need the n+1 quermassintegrals W_0..W_n")
    n = len(vals) - 1
    if vals[0] is None:
        vals[0] = math.exp(log_unit_ball_volume(n))
    if any(v is None or v <= 0 for v in vals):
        raise UsageError("all quermassintegrals must be positive")
    terms = []
    for k, w in enumerate(vals):
        if t == 0.0:
            if k == n:
                terms.append(math.log(w))
            continue
        lg = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
              + math.log(w) + (n - k) * math.log(t))
        terms.append(lg)
    if not terms:
        return 0.0
    m = max(terms)
    return math.exp(m) * math.fsum(math.exp(x - m) for x in terms)


def _haar_frame(n: int, k: int, gen) -> np.ndarray:
    """Orthonormal n x k frame: QR of a Gaussian matrix with sign-fixed R."""
    g = gen.standard_normal((n, k))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def _projection_volume(body: Body, frame: np.ndarray, directions: int,
                       vol_samples: int, gen) -> float:
    """Outer Monte Carlo volume of the projection of the body onto the frame.

    Membership uses the support-function outer test on sampled directions, so
    the estimate is biased upward, the bias shrinking in the direction count.
    """
    n, k = frame.shape
    if k == 1:
        return 2.0 * float(body.support(frame[:, 0]))
    dirs_k = gen.standard_normal((directions, k))
    dirs_k /= np.linalg.norm(dirs_k, axis=1, keepdims=True)
    h = body.support(dirs_k @ frame.T)  # support of projection = restriction
    half = np.array([float(body.support(frame[:, i])) for i in range(k)])
    pts = gen.uniform(-half, half, size=(vol_samples, k))
    inside = np.all(pts @ dirs_k.T <= h[None, :], axis=1)
    frac = float(np.count_nonzero(inside)) / vol_samples
    return frac * float(np.prod(2.0 * half))


def quermass_kubota(body: Body, k: int, subspaces: int, vol_samples: int,
                    seed: int = 0, directions: int | None = None) -> QuermassEstimate:
    """Monte Carlo W_k: |B_2^n| times the average of vrad(P_F K)^k over random
    k-dimensional subspaces (orthonormalized Gaussian frames, seed recorded)."""
    if not body.convex:
        raise UnsupportedOperationError("Kubota averaging needs a convex body")
    n = body.dim
    if not 1 <= k <= n:
        raise UsageError(f"need 1 <= k <= {n}")
    if k > KUBOTA_MAX_K:
        raise BudgetError(f"projection volume limited to k <= {KUBOTA_MAX_K}, got {k}")
    if subspaces < 2:
        raise UsageError("need at least 2 subspaces for a standard error")
    m_dirs = directions if directions is not None else DEFAULT_DIRECTIONS_PER_K * k
    log_ball_k = log_unit_ball_volume(k)
    vrk = np.empty(subspaces)
    for s in range(subspaces):
        gen = philox(derive_seed(seed, k, s))
        frame = _haar_frame(n, k, gen)
        vol = _projection_volume(body, frame, m_dirs, vol_samples, gen)
        vrk[s] = vol / math.exp(log_ball_k)  # vrad^k
    ball_n = math.exp(log_unit_ball_volume(n))
    value = ball_n * float(vrk.mean())
    stderr = ball_n * float(vrk.std(ddof=1) / math.sqrt(subspaces))
    return QuermassEstimate(k, value, stderr, subspaces, seed)


@dataclass(frozen=True)
class AlexandrovSandwich:
    """Exact endpoints bracketing (W_k(Z_2)/|B_2^n|)^(1/k) for every k."""

    lower: float  # det(Cov)^(1/2n)
    upper: float  # (tr(Cov)/n)^(1/2)


def alexandrov_sandwich(measure: Measure) -> AlexandrovSandwich:
    """Endpoints det(Cov)^(1/2n) and (tr Cov / n)^(1/2) from the exact covariance."""
    cov = measure.exact_covariance()
    if cov is None:
        raise UnsupportedOperationError(
            "sandwich endpoints need a measure with exact covariance"
        )
    n = measure.dim
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise UsageError("covariance must be positive definite")
    return AlexandrovSandwich(
        lower=math.exp(logdet / (2.0 * n)),
        upper=math.sqrt(float(np.trace(cov)) / n),
    )


def z2_ellipsoid(measure: Measure) -> Ellipsoid:
    """The covariance ellipsoid Cov^(1/2)(B_2^n) (exact covariance required)."""
    cov = measure.exact_covariance()
    if cov is None:
        raise UnsupportedOperationError("needs a measure with exact covariance")
    w, v = np.linalg.eigh(cov)
    if np.any(w <= 0):
        raise UsageError("covariance must be positive definite")
    return Ellipsoid(v @ np.diag(np.sqrt(w)) @ v.T)


def zp_quermass_bound_check(measure: Measure, p: float, k: int, seed: int = 0,
                            subspaces: int = 16, vol_samples: int = 4000,
                            bank: SampleBank | None = None,
                            bank_size: int = 4000) -> float:
    """Fitted constant in W_k(Z_p)^(1/k) <= C max(sqrt p, p/sqrt k) W_k(Z_2)^(1/k).

    Both sides are Kubota estimates over shared subspaces and a single shared
    sample bank, so the outer-test bias largely cancels in the ratio.
    """
    from .centroid import ZpBody

    n = measure.dim
    if n > 6 or k > 3 or p > 2 * n:
        raise BudgetError("bound check limited to n <= 6, k <= 3, p <= 2n")
    if bank is None:
        bank = sample(measure, bank_size, derive_seed(seed, 77))
    zp = ZpBody(measure, p, bank)
    z2 = ZpBody(measure, 2.0, bank)
    wp = quermass_kubota(zp, k, subspaces, vol_samples, seed)
    w2 = quermass_kubota(z2, k, subspaces, vol_samples, seed)
    lhs = (wp.value / math.exp(log_unit_ball_volume(n))) ** (1.0 / k)
    rhs = (w2.value / math.exp(log_unit_ball_volume(n))) ** (1.0 / k)
    struct = max(math.sqrt(p), p / math.sqrt(k))
    return lhs / (struct * rhs)


# ---------------------------------------------------------------------------
# closed-form right-hand sides
# ---------------------------------------------------------------------------


def part2_ellipsoid_exponent(p: float, n: int, t: float, c: float = 1.0) -> float:
    """Exponent C (p^(2/3) n^(1/3) / t^(2/3) + sqrt(p n) / t)."""
    if not 1.0 <= p <= n:
        raise DomainError(f"p must lie in [1, n] = [1, {n}]")
    if t <= 0:
        raise DomainError("t must be positive")
    return c * (p ** (2.0 / 3.0) * n ** (1.0 / 3.0) / t ** (2.0 / 3.0)
                + math.sqrt(p) * math.sqrt(n) / t)


def part2_ellipsoid_rhs(p: float, n: int, t: float, c: float = 1.0) -> float:
    """The weak ellipsoid packing bound exp(C(p^(2/3)n^(1/3)/t^(2/3) + sqrt(pn)/t))."""
    return math.exp(part2_ellipsoid_exponent(p, n, t, c))


def improved_sudakov_exponent(n: int, t: float) -> float:
    if t <= 0:
        raise DomainError("t must be positive")
    return n / max(t, t * t)


def improved_sudakov_rhs(n: int, t: float) -> float:
    """exp(n / max(t, t^2)), the improved mean-width packing bound."""
    return math.exp(improved_sudakov_exponent(n, t))


def weak_sudakov_exponent(n: int, t: float) -> float:
    if t <= 0:
        raise DomainError("t must be positive")
    return n / t


def weak_sudakov_rhs(n: int, t: float) -> float:
    """exp(n / t), the folklore volumetric mean-width packing bound."""
    return math.exp(weak_sudakov_exponent(n, t))
