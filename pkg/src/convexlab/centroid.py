"""Moment bodies of log-concave measures and their polars.

A ``ZpBody`` is backed by a fixed sample bank: its support function at theta
is the empirical p-th moment of |<x, theta>| over the bank, and its gauge is
recovered from the support by maximizing <x, theta>/h(theta) over the sphere.
One shared bank should be reused across all p for a fixed measure so that
monotonicity-in-p statements hold exactly on the bank, not just in
expectation.  ``KpBody`` is the radial-moment star body of a measure with an
evaluable density; for log-concave measures it is convex (trusted, not
re-proven here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .bodies import Body, Ellipsoid
from .errors import (
    BudgetError,
    ConstructionError,
    DomainError,
    UnsupportedOperationError,
    UsageError,
)
from .measures import Measure, SampleBank, sample
from .packing import PointCloud
from .util import derive_seed, philox, unit_vectors

LOG_SPACE_P = 30.0  # moment accumulation switches to log-sum-exp above this p


def _min_bank(p: float) -> int:
    return max(1000, int(math.ceil(20.0 * p)))


def _abs_pow(dots: np.ndarray, p: float) -> np.ndarray:
    """|dots|^p with binary-exponentiation fast paths for integer p."""
    if p == 1.0:
        return np.abs(dots)
    if p == 2.0:
        return dots * dots
    ip = int(p)
    if p == ip and 1 <= ip <= 64:
        if ip % 2 == 0:  # even powers never need the absolute value
            base = dots * dots
            e = ip // 2
        else:
            base = np.abs(dots)
            e = ip
        result = None
        while e:
            if e & 1:
                result = base.copy() if result is None else result * base
            e >>= 1
            if e:
                base = base * base
        return result
    return np.abs(dots) ** p


def _empirical_support(bank_pts: np.ndarray, p: float, thetas: np.ndarray) -> np.ndarray:
    """((1/N) sum |<x_i, theta>|^p)^(1/p) per row of thetas, stable for large p."""
    dots = thetas @ bank_pts.T  # (M, N)
    return _support_from_dots(dots, p)


def _support_from_dots(dots: np.ndarray, p: float) -> np.ndarray:
    n = dots.shape[1]
    if p <= LOG_SPACE_P:
        return (np.mean(_abs_pow(dots, p), axis=1)) ** (1.0 / p)
    with np.errstate(divide="ignore"):
        logs = p * np.log(np.abs(dots))
    m = logs.max(axis=1, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(logs - safe).sum(axis=1)
    out = np.exp((safe[:, 0] + np.log(s) - math.log(n)) / p)
    return np.where(np.isfinite(m[:, 0]), out, 0.0)


def _support_and_gradient(bank_pts: np.ndarray, p: float, thetas: np.ndarray):
    """Empirical support and its gradient, sharing one dot-product pass.

    The gradient weights |d|^(p-1) sign(d) are recovered as |d|^p / d, which
    reuses the power table; the h^(1-p) prefactor is applied in normalized
    form (|d|/h)^p / d * h to stay in range for moderate p.
    """
    n = bank_pts.shape[0]
    dots = thetas @ bank_pts.T
    if p <= LOG_SPACE_P:
        ap = _abs_pow(dots, p)
        h = (ap.mean(axis=1)) ** (1.0 / p)
        hs = np.where(h > 0, h, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(dots != 0.0, ap / dots, 0.0)
        grad = (w @ bank_pts) * (hs ** (1.0 - p))[:, None] / n
        return h, grad
    h = _support_from_dots(dots, p)
    hs = np.where(h > 0, h, 1.0)
    a = np.abs(dots)
    with np.errstate(divide="ignore"):
        lw = (p - 1.0) * (np.log(a) - np.log(hs[:, None]))
    w = np.sign(dots) * np.exp(np.where(np.isfinite(lw), lw, -np.inf))
    return h, (w @ bank_pts) / n


@dataclass(frozen=True)
class ZpGaugeResult:
    """Outcome of the sphere ascent behind a ZpBody gauge evaluation."""

    value: float
    theta: np.ndarray
    converged: bool
    witness_gap: float  # |x - value * grad h(theta*)| / |x|; 0 at stationarity

    def __float__(self) -> float:
        return self.value


class ZpBody(Body):
    """Empirical moment body of a measure, backed by a fixed sample bank."""

    kind = "zp_body"
    convex = True

    def __init__(self, measure: Measure | None, p: float, bank: SampleBank):
        if math.isinf(p):
            raise ConstructionError("p = infinity moment bodies are not supported")
        if p < 1:
            raise ConstructionError("moment exponent must satisfy p >= 1")
        need = _min_bank(p)
        if bank.count < need:
            raise BudgetError(
                f"moment body at p={p} needs a bank of at least {need}, got {bank.count}"
            )
        self.measure = measure
        self.p = float(p)
        self.bank = bank
        self.dim = bank.dim

    def _support(self, thetas):
        return _empirical_support(self.bank.points, self.p, thetas)

    def _gauge(self, pts):
        return self.gauge_batch(pts, restarts=2, iters=80)

    def gauge_batch(self, pts: np.ndarray, restarts: int = 2, iters: int = 80,
                    tol: float = 1e-8, seed: int = 0,
                    block: int = 1024) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.empty(len(pts))
        for lo in range(0, len(pts), block):
            chunk = pts[lo:lo + block]
            val, _, _, _ = _sphere_ascent(self.bank.points, self.p, chunk,
                                          restarts, iters, tol, seed)
            out[lo:lo + block] = val
        return out

    def params(self):
        if self.measure is None:
            raise UnsupportedOperationError("bank-only moment body is not serializable")
        return {"measure": self.measure.to_dict(), "p": self.p,
                "bank": {"count": self.bank.count, "seed": self.bank.seed}}


class BpBall(Body):
    """Polar of a ZpBody: its gauge IS the empirical moment norm."""

    kind = "bp_ball"
    convex = True

    def __init__(self, zp: ZpBody):
        self.zp = zp
        self.dim = zp.dim

    def _gauge(self, pts):
        return self.zp._support(pts)

    def _support(self, thetas):
        return self.zp._gauge(thetas)


def make_zp(measure: Measure, p: float, count: int, seed: int) -> ZpBody:
    """Sample a fresh bank and wrap it as a moment body."""
    return ZpBody(measure, p, sample(measure, count, seed))


def zp_support(zp: ZpBody, theta) -> float | np.ndarray:
    """Empirical support function of the moment body (log-space for large p)."""
    return zp.support(theta)


def _sphere_ascent(bank_pts: np.ndarray, p: float, x: np.ndarray, restarts: int,
                   iters: int, tol: float, seed: int):
    """Maximize <x, theta>/h(theta) over unit theta, batched over rows of x.

    The objective is quasi-concave on the hemisphere <x, theta> > 0 (its
    superlevel sets are convex cones), so ascent from theta = x/|x| finds the
    global value up to step-size effects; random restarts guard numerical
    corner cases.  Returns (values, thetas, converged, witness_gap).
    """
    m, n = x.shape
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise UsageError("gauge ascent needs nonzero points")
    gen = philox(derive_seed(seed, 0xA5CE))
    best_val = np.full(m, -np.inf)
    best_theta = np.zeros((m, n))
    conv = np.zeros(m, dtype=bool)

    for r in range(max(1, restarts)):
        if r == 0:
            theta = x / norms[:, None]
        else:
            theta = x / norms[:, None] + 0.5 * gen.standard_normal((m, n))
            theta /= np.linalg.norm(theta, axis=1, keepdims=True)
        h, grad_h = _support_and_gradient(bank_pts, p, theta)
        f = (x * theta).sum(axis=1) / np.where(h > 0, h, np.inf)
        step = np.full(m, 0.5)
        converged = np.zeros(m, dtype=bool)
        active = np.arange(m)
        for _ in range(iters):
            xa = x[active]
            hs = np.where(h[active] > 0, h[active], 1.0)
            grad = xa / hs[:, None] - (f[active] / hs)[:, None] * grad_h[active]
            cand = theta[active] + step[active, None] * grad
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            h_new, grad_new = _support_and_gradient(bank_pts, p, cand)
            f_new = (xa * cand).sum(axis=1) / np.where(h_new > 0, h_new, np.inf)
            f_old = f[active]
            better = f_new > f_old
            rel = np.abs(f_new - f_old) / np.maximum(np.abs(f_old), 1e-300)
            # a relative change below tolerance means converged whether or not
            # the trial step improved: the achievable gain has flattened out
            converged[active] |= rel < tol
            upd = active[better]
            theta[upd] = cand[better]
            grad_h[upd] = grad_new[better]
            h[upd] = h_new[better]
            f[upd] = f_new[better]
            step[active] = np.where(better, np.minimum(step[active] * 1.3, 2.0),
                                    step[active] * 0.5)
            active = active[~(converged[active] | (step[active] < 1e-14))]
            if active.size == 0:
                break
        improved = f > best_val
        best_val = np.where(improved, f, best_val)
        best_theta = np.where(improved[:, None], theta, best_theta)
        conv |= converged

    h_star, grad_star = _support_and_gradient(bank_pts, p, best_theta)
    gap = np.linalg.norm(x - best_val[:, None] * grad_star, axis=1) / norms
    return best_val, best_theta, conv, gap


def zp_gauge(zp: ZpBody, x, restarts: int = 50, tol: float = 1e-8,
             iters: int = 200, seed: int = 0) -> float:
    """Gauge of a moment body at x (a certified lower bound on the true gauge)."""
    return zp_gauge_info(zp, x, restarts, tol, iters, seed).value


def zp_gauge_info(zp: ZpBody, x, restarts: int = 50, tol: float = 1e-8,
                  iters: int = 200, seed: int = 0) -> ZpGaugeResult:
    """Gauge with diagnostics; non-convergence is flagged, never raised."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != zp.dim:
        raise UsageError("x must be a single vector of the body dimension")
    if np.all(x == 0.0):
        raise UsageError("gauge ascent needs a nonzero point")
    val, theta, conv, gap = _sphere_ascent(zp.bank.points, zp.p, x[None, :],
                                           restarts, iters, tol, seed)
    return ZpGaugeResult(float(val[0]), theta[0], bool(conv[0]), float(gap[0]))


def zp_candidates(zp: ZpBody, count: int, seed: int, tol: float = 1e-5,
                  restarts: int = 2, iters: int = 40) -> PointCloud:
    """Seeded points inside the moment body: s * theta / gauge(theta) with
    uniform directions theta and radial law s = u^(1/n)."""
    if count < 1:
        raise UsageError("count must be at least 1")
    n = zp.dim
    dirs = unit_vectors(n, count, derive_seed(seed, 1))
    g = zp.gauge_batch(dirs, restarts=restarts, iters=iters, tol=tol,
                       seed=derive_seed(seed, 2))
    s = philox(derive_seed(seed, 3)).random(count) ** (1.0 / n)
    pts = dirs * (s / np.maximum(g, 1e-300))[:, None]
    return PointCloud(pts, {"generator": "zp_candidates", "seed": seed,
                            "p": zp.p, "count": count, "tol": tol})


# ---------------------------------------------------------------------------
# radial-moment star bodies
# ---------------------------------------------------------------------------


class KpBody(Body):
    """Star body with radial ( p/(max f) * int_0^inf r^(p-1) f(r theta) dr )^(1/p)."""

    kind = "kp_body"
    convex = True  # convex for log-concave measures

    def __init__(self, measure: Measure, p: float, quad_tol: float = 1e-6):
        if p < 1:
            raise ConstructionError("radial-moment exponent must satisfy p >= 1")
        if measure.log_max_density() is None:
            raise UnsupportedOperationError(
                "radial-moment body needs a measure with an evaluable density"
            )
        self.measure = measure
        self.p = float(p)
        self.dim = measure.dim
        self.quad_tol = quad_tol

    def radial(self, theta) -> float | np.ndarray:
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        thetas = np.atleast_2d(theta)
        nrm = np.linalg.norm(thetas, axis=1)
        if np.any(nrm == 0):
            raise UsageError("radial function needs nonzero directions")
        thetas = thetas / nrm[:, None]
        log_max = self.measure.log_max_density()
        p = self.p
        out = np.empty(len(thetas))
        for i, th in enumerate(thetas):
            def integrand(r, th=th):
                ld = self.measure.log_density(r * th[None, :])
                return r ** (p - 1.0) * float(np.exp(ld[0]))
            val, _ = quad(integrand, 0.0, np.inf, epsrel=self.quad_tol, limit=200)
            if val <= 0:
                out[i] = 0.0
                continue
            out[i] = math.exp((math.log(p) + math.log(val) - log_max) / p)
        return float(out[0]) if single else out

    def _gauge(self, pts):
        nrm = np.linalg.norm(pts, axis=-1)
        out = np.zeros_like(nrm)
        nz = nrm > 0
        if nz.any():
            out[nz] = nrm[nz] / self.radial(pts[nz])
        return out


def kp_radial(kp: KpBody, theta) -> float | np.ndarray:
    """Radial function of the radial-moment body, by adaptive quadrature."""
    return kp.radial(theta)


def uniform_star_samples(radial_fn, dim: int, count: int, seed: int,
                         probe_dirs: int = 512, safety: float = 1.05) -> np.ndarray:
    """Uniform samples on a star body given its radial function, by rejection.

    Directions are proposed uniformly and accepted with probability
    (rho/rho_max)^n, then radii follow rho * u^(1/n); rho_max is estimated on
    probe directions and inflated by a small safety factor.
    """
    probes = unit_vectors(dim, probe_dirs, derive_seed(seed, 11))
    rho_max = float(np.max(radial_fn(probes))) * safety
    gen = philox(derive_seed(seed, 12))
    out = np.empty((count, dim))
    done = 0
    while done < count:
        k = max(64, count - done)
        z = gen.standard_normal((k, dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rho = np.asarray(radial_fn(z), dtype=float)
        acc = gen.random(k) <= (rho / rho_max) ** dim
        radii = rho * gen.random(k) ** (1.0 / dim)
        pts = z[acc] * radii[acc][:, None]
        take = min(len(pts), count - done)
        out[done:done + take] = pts[:take]
        done += take
    return out


# ---------------------------------------------------------------------------
# inclusion diagnostics
# ---------------------------------------------------------------------------


def inclusion_ratio(a_body: Body, b_body: Body, directions: int, seed: int = 0,
                    mode: str = "support") -> float:
    """Smallest sampled c with A inside c*B.

    ``mode="support"`` compares support functions on sampled directions
    (convex bodies); ``mode="gauge"`` compares radial functions through the
    gauges (star bodies).  A is inside c*B on the sampled directions iff the
    returned ratio is at most c.
    """
    if a_body.dim != b_body.dim:
        raise UsageError("bodies must share a dimension")
    dirs = unit_vectors(a_body.dim, directions, seed)
    if mode == "support":
        if not (a_body.convex and b_body.convex):
            raise UsageError("support mode needs convex bodies")
        num = a_body.support(dirs)
        den = b_body.support(dirs)
    elif mode == "gauge":
        num = b_body.gauge(dirs)  # 1/rho_B
        den = a_body.gauge(dirs)  # 1/rho_A ; ratio = rho_A / rho_B
    else:
        raise UsageError(f"unknown inclusion mode {mode!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    ratio = ratio[np.isfinite(ratio)]
    if ratio.size == 0:
        raise UsageError("no informative directions sampled")
    return float(ratio.max())


def gaussian_abs_moment(p: float) -> float:
    """(E |g|^p)^(1/p) for a standard Gaussian g, via the Gamma function."""
    if p <= 0:
        raise DomainError("moment order must be positive")
    return math.sqrt(2.0) * math.exp(
        (math.lgamma((p + 1.0) / 2.0) - math.lgamma(0.5)) / p
    )


def gaussian_zp_ellipsoid(matrix, p: float) -> Ellipsoid:
    """Exact moment body of a Gaussian pushforward: c_p * A(B_2^n).

    For x ~ A_* gamma_n the scalar <x, theta> is centered Gaussian with
    standard deviation |A^T theta|, so the support function is c_p |A^T theta|
    with c_p the one-dimensional absolute moment.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    return Ellipsoid(gaussian_abs_moment(p) * a)
