"""Origin-symmetric convex and star bodies.

Every body exposes a Minkowski gauge ``min{t > 0 : x in tK}`` evaluable on
batches of points; convex variants additionally expose the support function
``max{<x, theta> : x in K}``, which for an origin-symmetric convex body is the
dual norm.  Bodies are immutable after construction and all stochastic
operations take an explicit 64-bit seed.

Point batches follow the numpy convention: an argument of shape ``(..., n)``
yields values of shape ``(...)``; a single vector yields a float.
"""

from __future__ import annotations

import json
import math
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import (
    BudgetError,
    ConstructionError,
    DomainError,
    UnsupportedOperationError,
    UsageError,
)
from .util import MCEstimate, log_unit_ball_volume, philox, unit_vectors

MC_VOLUME_MAX_DIM = 8


def _check_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.shape == () or x.shape[-1] != dim:
        raise UsageError(f"expected points with last axis {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise UsageError("points must have finite entries")
    return x, x.ndim == 1


class Body:
    """Common interface: dimension, gauge, and (for convex bodies) support."""

    kind = "body"
    convex = False
    dim: int

    def _gauge(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _support(self, thetas: np.ndarray) -> np.ndarray:
        raise UnsupportedOperationError(
            f"support function is not available for {self.kind}"
        )

    def gauge(self, x):
        pts, single = _check_points(x, self.dim)
        vals = self._gauge(pts.reshape(-1, self.dim)).reshape(pts.shape[:-1])
        return float(vals) if single else vals

    def support(self, theta):
        pts, single = _check_points(theta, self.dim)
        vals = self._support(pts.reshape(-1, self.dim)).reshape(pts.shape[:-1])
        return float(vals) if single else vals

    def contains(self, x, tol: float = 0.0):
        g = self.gauge(x)
        return g <= 1.0 + tol

    def scaled(self, c: float) -> "Body":
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return Scaled(self, c)

    # -- serialization -----------------------------------------------------
    def params(self) -> dict:
        raise UnsupportedOperationError(f"{self.kind} is not serializable")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dim, "parameters": self.params()}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Ellipsoid(Body):
    """Image A(B_2^n) of the unit ball under an invertible matrix."""

    kind = "ellipsoid"
    convex = True

    def __init__(self, matrix):
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConstructionError("ellipsoid matrix must be square")
        n = a.shape[0]
        if not np.all(np.isfinite(a)):
            raise ConstructionError("ellipsoid matrix must be finite")
        try:
            inv = np.linalg.inv(a)
        except np.linalg.LinAlgError as exc:
            raise ConstructionError("ellipsoid matrix must be invertible") from exc
        if not np.all(np.isfinite(inv)):
            raise ConstructionError("ellipsoid matrix is numerically singular")
        self.dim = n
        self.matrix = a
        self._inv = inv

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "Ellipsoid":
        return cls(radius * np.eye(dim))

    def _gauge(self, pts):
        return np.linalg.norm(pts @ self._inv.T, axis=-1)

    def _support(self, thetas):
        return np.linalg.norm(thetas @ self.matrix, axis=-1)

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return Ellipsoid(c * self.matrix)

    def params(self):
        return {"matrix": self.matrix.tolist()}


class Cube(Body):
    """The cube a*[-1,1]^n."""

    kind = "cube"
    convex = True

    def __init__(self, a: float, dim: int):
        if not (a > 0 and math.isfinite(a)):
            raise ConstructionError("cube half-width must be positive and finite")
        self.a = float(a)
        self.dim = int(dim)

    def _gauge(self, pts):
        return np.abs(pts).max(axis=-1) / self.a

    def _support(self, thetas):
        return self.a * np.abs(thetas).sum(axis=-1)

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return Cube(c * self.a, self.dim)

    def params(self):
        return {"a": self.a}


def _dual_exponent(q: float) -> float:
    if q == 1.0:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def _lp_norm(pts: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return np.abs(pts).max(axis=-1)
    if q == 1.0:
        return np.abs(pts).sum(axis=-1)
    if q == 2.0:
        return np.linalg.norm(pts, axis=-1)
    a = np.abs(pts)
    m = a.max(axis=-1, keepdims=True)
    out = np.zeros(a.shape[:-1])
    nz = m[..., 0] > 0
    out[nz] = m[nz, 0] * ((a[nz] / m[nz]) ** q).sum(axis=-1) ** (1.0 / q)
    return out


class LqBall(Body):
    """The ball r*B_q^n of the l_q norm, q in [1, inf]."""

    kind = "lq_ball"
    convex = True

    def __init__(self, q: float, r: float, dim: int):
        if not (q >= 1.0):
            raise ConstructionError("lq exponent must satisfy q >= 1")
        if not (r > 0 and math.isfinite(r)):
            raise ConstructionError("lq radius must be positive and finite")
        self.q = float(q)
        self.r = float(r)
        self.dim = int(dim)

    def _gauge(self, pts):
        return _lp_norm(pts, self.q) / self.r

    def _support(self, thetas):
        return self.r * _lp_norm(thetas, _dual_exponent(self.q))

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return LqBall(self.q, c * self.r, self.dim)

    def params(self):
        return {"q": self.q if math.isfinite(self.q) else "inf", "r": self.r}


class HPolytope(Body):
    """Intersection of half spaces <a_i, x> <= b_i, closed under x -> -x.

    The symmetric closure is enforced at construction by storing every facet
    together with its negation, so the gauge is even by construction.
    """

    kind = "h_polytope"
    convex = True

    def __init__(self, normals, offsets):
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.atleast_1d(np.asarray(offsets, dtype=float))
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise ConstructionError("normals and offsets must have matching rows")
        if not np.all(b > 0):
            raise ConstructionError("facet offsets must be positive")
        if np.linalg.matrix_rank(a) < a.shape[1]:
            raise ConstructionError("facet normals must span R^n (else unbounded)")
        self.dim = a.shape[1]
        self.normals = np.vstack([a, -a])
        self.offsets = np.concatenate([b, b])

    @property
    def facets(self) -> int:
        return self.normals.shape[0]

    def _gauge(self, pts):
        return (pts @ self.normals.T / self.offsets).max(axis=-1)

    def _support(self, thetas):
        vals = np.empty(thetas.shape[0])
        bounds = [(None, None)] * self.dim
        for i, th in enumerate(thetas):
            res = linprog(-th, A_ub=self.normals, b_ub=self.offsets, bounds=bounds,
                          method="highs")
            if not res.success:
                raise UnsupportedOperationError(f"support LP failed: {res.message}")
            vals[i] = -res.fun
        return vals

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        half = self.facets // 2
        return HPolytope(self.normals[:half], c * self.offsets[:half])

    def params(self):
        half = self.facets // 2
        return {"normals": self.normals[:half].tolist(),
                "offsets": self.offsets[:half].tolist()}


class LinearImage(Body):
    """T(inner) for a linear map T of full row rank.

    Gauge evaluation is kept exact, so the variant is restricted at
    construction: T must be square invertible (gauge via T^{-1}), or the inner
    body must be an ellipsoid (closed form through the Gram matrix of T*A).
    """

    kind = "linear_image"

    def __init__(self, matrix, inner: Body):
        t = np.atleast_2d(np.asarray(matrix, dtype=float))
        if t.shape[1] != inner.dim:
            raise ConstructionError("map columns must match inner dimension")
        if np.linalg.matrix_rank(t) < t.shape[0]:
            raise ConstructionError("map must have full row rank")
        self.dim = t.shape[0]
        self.matrix = t
        self.inner = inner
        self.convex = inner.convex
        self._inv = None
        self._gram_inv = None
        if t.shape[0] == t.shape[1]:
            try:
                self._inv = np.linalg.inv(t)
            except np.linalg.LinAlgError as exc:
                raise ConstructionError("square map must be invertible") from exc
        elif isinstance(inner, Ellipsoid):
            m = t @ inner.matrix
            self._gram_inv = np.linalg.inv(m @ m.T)
        else:
            raise ConstructionError(
                "non-square linear image supported only for ellipsoid inner bodies"
            )

    def _gauge(self, pts):
        if self._inv is not None:
            return self.inner._gauge(pts @ self._inv.T)
        q = np.einsum("ij,jk,ik->i", pts, self._gram_inv, pts)
        return np.sqrt(np.maximum(q, 0.0))

    def _support(self, thetas):
        if not self.inner.convex:
            raise UnsupportedOperationError("support needs a convex inner body")
        return self.inner._support(thetas @ self.matrix)

    def scaled(self, c):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        return LinearImage(c * self.matrix, self.inner)

    def params(self):
        return {"matrix": self.matrix.tolist(), "inner": self.inner.to_dict()}


# registry of named radial evaluators so RadialStar bodies can round-trip
_RADIAL_REGISTRY: dict[str, Callable[[dict], Callable[[np.ndarray], np.ndarray]]] = {}


def register_radial(name: str, factory) -> None:
    _RADIAL_REGISTRY[name] = factory


class RadialStar(Body):
    """Star body given by a positively 0-homogeneous radial evaluator.

    ``rho`` maps unit directions ``(m, n)`` to positive radii ``(m,)``; an
    infinite radius is allowed and models degenerate (unbounded) bodies such
    as cylinders, whose gauge vanishes along the free directions.
    """

    kind = "radial_star"

    def __init__(self, dim: int, rho, name: str | None = None,
                 rho_params: dict | None = None, convex: bool = False):
        self.dim = int(dim)
        self.rho = rho
        self.name = name
        self.rho_params = dict(rho_params or {})
        self.convex = bool(convex)

    def radial(self, theta):
        pts, single = _check_points(theta, self.dim)
        flat = pts.reshape(-1, self.dim)
        nrm = np.linalg.norm(flat, axis=-1, keepdims=True)
        if np.any(nrm == 0):
            raise UsageError("radial function needs nonzero directions")
        vals = np.asarray(self.rho(flat / nrm), dtype=float).reshape(pts.shape[:-1])
        return float(vals) if single else vals

    def _gauge(self, pts):
        nrm = np.linalg.norm(pts, axis=-1)
        out = np.zeros_like(nrm)
        nz = nrm > 0
        if nz.any():
            r = np.asarray(self.rho(pts[nz] / nrm[nz, None]), dtype=float)
            with np.errstate(divide="ignore"):
                out[nz] = np.where(np.isinf(r), 0.0, nrm[nz] / r)
        return out

    def params(self):
        if self.name is None:
            raise UnsupportedOperationError("anonymous radial star is not serializable")
        return {"name": self.name, "rho_params": self.rho_params,
                "convex": self.convex}


def cylinder(k: int, dim: int, radius: float | None = None) -> RadialStar:
    """The degenerate body ``radius*B_2^k x R^(dim-k)``.

    Its gauge depends only on the first k coordinates; by default the radius
    is sqrt(k).  Modeled as a radial star with infinite radius along the free
    subspace.
    """
    if not 1 <= k <= dim:
        raise ConstructionError("cylinder needs 1 <= k <= dim")
    radius = math.sqrt(k) if radius is None else float(radius)
    if radius <= 0:
        raise ConstructionError("cylinder radius must be positive")

    def rho(units: np.ndarray) -> np.ndarray:
        head = np.linalg.norm(units[:, :k], axis=1)
        with np.errstate(divide="ignore"):
            return np.where(head > 0, radius / head, np.inf)

    return RadialStar(dim, rho, name="cylinder",
                      rho_params={"k": k, "radius": radius}, convex=True)


register_radial("cylinder", lambda dim, p: cylinder(p["k"], dim, p["radius"]))


class Scaled(Body):
    """Generic wrapper c*inner for bodies without a closed-form rescaling."""

    kind = "scaled"

    def __init__(self, inner: Body, c: float):
        if c <= 0:
            raise DomainError("scale factor must be positive")
        self.inner = inner
        self.c = float(c)
        self.dim = inner.dim
        self.convex = inner.convex

    def _gauge(self, pts):
        return self.inner._gauge(pts) / self.c

    def _support(self, thetas):
        return self.c * self.inner._support(thetas)

    def scaled(self, c):
        return Scaled(self.inner, self.c * c)

    def params(self):
        return {"c": self.c, "inner": self.inner.to_dict()}


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def gauge(body: Body, x):
    """Minkowski functional of ``body`` at ``x``."""
    return body.gauge(x)


def support(body: Body, theta):
    """Support function of a convex ``body`` at ``theta``."""
    if not body.convex:
        raise UnsupportedOperationError(
            "support requires a convexity certificate on the body"
        )
    return body.support(theta)


def dual_gauge(body: Body, x):
    """Gauge of the polar body, i.e. the support function of ``body``.

    Provided as a named alias so polar-body gauges are first class.
    """
    return support(body, x)


def log_volume(body: Body) -> float:
    """log |body| for the closed-form variants; raises otherwise."""
    if isinstance(body, Ellipsoid):
        sign, logdet = np.linalg.slogdet(body.matrix)
        return log_unit_ball_volume(body.dim) + logdet
    if isinstance(body, Cube):
        return body.dim * math.log(2.0 * body.a)
    if isinstance(body, LqBall):
        n, q, r = body.dim, body.q, body.r
        if math.isinf(q):
            return n * math.log(2.0 * r)
        return (n * (math.log(2.0) + math.lgamma(1.0 + 1.0 / q))
                - math.lgamma(1.0 + n / q) + n * math.log(r))
    if isinstance(body, Scaled):
        return body.dim * math.log(body.c) + log_volume(body.inner)
    if isinstance(body, LinearImage) and body._inv is not None:
        sign, logdet = np.linalg.slogdet(body.matrix)
        return logdet + log_volume(body.inner)
    raise UnsupportedOperationError(f"no closed-form volume for {body.kind}")


def volume_radius(body: Body) -> float:
    """(|K| / |B_2^n|)^(1/n), exact via log-gamma arithmetic.

    Only closed-form bodies are accepted; use :func:`volume_radius_mc` for a
    Monte Carlo estimate of the rest.
    """
    n = body.dim
    return math.exp((log_volume(body) - log_unit_ball_volume(n)) / n)


def volume_radius_mc(body: Body, samples: int, seed: int = 0) -> MCEstimate:
    """Monte Carlo volume radius by rejection in the support bounding box.

    Restricted to dimension <= 8: the rejection rate degrades exponentially.
    Returns the volume-radius estimate with a standard error propagated from
    the acceptance fraction.
    """
    n = body.dim
    if n > MC_VOLUME_MAX_DIM:
        raise BudgetError(
            f"Monte Carlo volume limited to dimension {MC_VOLUME_MAX_DIM}, got {n}"
        )
    if samples < 100:
        raise UsageError("need at least 100 samples")
    if not body.convex:
        raise UnsupportedOperationError("bounding box needs support values")
    half = np.array([body.support(np.eye(n)[i]) for i in range(n)])
    gen = philox(seed)
    pts = gen.uniform(-half, half, size=(samples, n))
    hits = int(np.count_nonzero(body.gauge(pts) <= 1.0))
    frac = hits / samples
    box_vol = float(np.prod(2.0 * half))
    vol = frac * box_vol
    se_vol = box_vol * math.sqrt(max(frac * (1.0 - frac), 1e-300) / samples)
    if vol <= 0:
        raise UsageError("no accepted samples; body may have empty interior")
    ball = math.exp(log_unit_ball_volume(n))
    vrad = (vol / ball) ** (1.0 / n)
    # delta method: d vrad / d vol = vrad / (n vol)
    return MCEstimate(vrad, vrad * se_vol / (n * vol), samples)


def mean_width(body: Body, samples: int, seed: int = 0) -> MCEstimate:
    """Spherical average of the support function, by seeded Monte Carlo."""
    if samples < 100:
        raise UsageError("mean width needs at least 100 direction samples")
    if not body.convex:
        raise UnsupportedOperationError("mean width needs a convex body")
    dirs = unit_vectors(body.dim, samples, seed)
    vals = body.support(dirs)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    return MCEstimate(mean, stderr, samples)


class DirectionSampler:
    """Deterministic uniform directions on S^(n-1) for a fixed seed."""

    def __init__(self, dim: int, seed: int):
        self.dim = int(dim)
        self.seed = int(seed)
        self._drawn = 0

    def draw(self, count: int) -> np.ndarray:
        out = unit_vectors(self.dim, self._drawn + count, self.seed)[self._drawn:]
        self._drawn += count
        return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def body_from_dict(doc: dict) -> Body:
    kind = doc.get("kind")
    dim = int(doc.get("dimension", 0))
    p = doc.get("parameters", {})
    if kind == "ellipsoid":
        return Ellipsoid(np.asarray(p["matrix"], dtype=float))
    if kind == "cube":
        return Cube(p["a"], dim)
    if kind == "lq_ball":
        q = math.inf if p["q"] == "inf" else float(p["q"])
        return LqBall(q, p["r"], dim)
    if kind == "h_polytope":
        return HPolytope(np.asarray(p["normals"], float), np.asarray(p["offsets"], float))
    if kind == "linear_image":
        return LinearImage(np.asarray(p["matrix"], float), body_from_dict(p["inner"]))
    if kind == "scaled":
        return Scaled(body_from_dict(p["inner"]), p["c"])
    if kind == "radial_star":
        factory = _RADIAL_REGISTRY.get(p.get("name"))
        if factory is None:
            raise ConstructionError(f"unknown radial star {p.get('name')!r}")
        return factory(dim, p["rho_params"])
    raise ConstructionError(f"unknown body kind {kind!r}")


def body_to_json(body: Body) -> str:
    return json.dumps(body.to_dict())


def body_from_json(text: str) -> Body:
    return body_from_dict(json.loads(text))
