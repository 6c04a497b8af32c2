"""Witnessed packing lower bounds and exact small-instance oracles.

Separation convention: for an origin-symmetric separator body B, points x, y
are B-separated iff gauge_B(x - y) > 2 (translates x + B, y + B disjoint).
Ties (gauge exactly 2) count as NOT separated.  Covers use the membership rule
gauge_B(point - center) <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bodies import Body
from .errors import BudgetError, DomainError, UnsupportedOperationError, UsageError
from .util import MCEstimate, philox

EXACT_PACKING_MAX = 64
EXACT_COVERING_MAX = 40
VOLUMETRIC_MAX_DIM = 8


@dataclass(frozen=True)
class PointCloud:
    """A finite point set with provenance (generator name, seed, parameters)."""

    points: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2:
            raise UsageError("cloud points must form an (M, n) array")
        if not np.all(np.isfinite(pts)):
            raise UsageError("cloud points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PackingResult:
    """A witnessed lower bound on a packing number."""

    count: int
    witness: tuple[int, ...]
    separator: Body
    method: str
    seed: int
    candidates: int

    def to_dict(self) -> dict:
        return {"count": self.count, "witness": list(self.witness),
                "separator": self.separator.to_dict(), "method": self.method,
                "seed": self.seed, "candidates": self.candidates}


@dataclass(frozen=True)
class CoveringResult:
    """A covering of a cloud by body translates centered at cloud points."""

    count: int
    centers: tuple[int, ...]
    method: str
    seed: int

    def to_dict(self) -> dict:
        return {"count": self.count, "centers": list(self.centers),
                "method": self.method, "seed": self.seed}


def _check_cloud_body(cloud: PointCloud, body: Body) -> None:
    if len(cloud) and cloud.dim != body.dim:
        raise UsageError("cloud and body dimensions differ")


def validate_packing(result: PackingResult, cloud: PointCloud) -> bool:
    """Re-check pairwise separation of the witness under the adopted convention."""
    idx = list(result.witness)
    pts = cloud.points[idx]
    for i in range(len(idx)):
        d = result.separator.gauge(pts[i] - pts[i + 1:]) if i + 1 < len(idx) else None
        if d is not None and np.any(d <= 2.0):
            return False
    return True


def greedy_packing(cloud: PointCloud, body: Body, seed: int = 0,
                   order: str = "random") -> PackingResult:
    """Maximal B-separated subset kept by a single greedy scan.

    ``order="random"`` scans a seeded permutation (repeat with several seeds
    for error bars); ``order="farthest"`` uses the farthest-point traversal,
    which yields denser witnesses.  The result is maximal: no rejected
    candidate is separated from every kept one, so the count lower-bounds the
    packing number of any set containing the cloud.
    """
    _check_cloud_body(cloud, body)
    pts = cloud.points
    m = len(cloud)
    if m == 0:
        return PackingResult(0, (), body, f"greedy-{order}", seed, 0)
    if order == "farthest":
        idx, radii = separation_profile(cloud, body, stop_radius=2.0)
        keep = [i for i, r in zip(idx, radii) if r > 2.0]
        return PackingResult(len(keep), tuple(keep), body, "greedy-farthest", seed, m)
    if order != "random":
        raise UsageError(f"unknown ordering {order!r}")
    perm = philox(seed).permutation(m)
    kept: list[int] = []
    kept_pts = np.empty((0, cloud.dim))
    for i in perm:
        x = pts[i]
        if kept and np.any(body.gauge(x - kept_pts) <= 2.0):
            continue
        kept.append(int(i))
        kept_pts = np.vstack([kept_pts, x])
    return PackingResult(len(kept), tuple(kept), body, "greedy-random", seed, m)


def separation_profile(cloud: PointCloud, body: Body, stop_radius: float = 0.0,
                       max_points: int | None = None):
    """Farthest-point traversal: insertion order and insertion radii.

    Point j's radius is its gauge distance to all previously inserted points;
    radii are non-increasing, so the greedy packing count at any separation
    threshold r is ``#{radii > r}``, monotone in r by construction.  The
    traversal stops once the best remaining radius drops to ``stop_radius``.
    """
    _check_cloud_body(cloud, body)
    pts = cloud.points
    m = len(cloud)
    if m == 0:
        return [], []
    order = [0]
    radii = [math.inf]
    mind = body.gauge(pts - pts[0])
    mind[0] = -math.inf
    cap = m if max_points is None else min(m, max_points)
    while len(order) < cap:
        nxt = int(np.argmax(mind))
        r = float(mind[nxt])
        if r <= stop_radius or r == -math.inf:
            break
        order.append(nxt)
        radii.append(r)
        d = body.gauge(pts - pts[nxt])
        d[nxt] = -math.inf
        np.minimum(mind, d, out=mind)
    return order, radii


def counts_from_profile(radii, thresholds) -> list[int]:
    """Greedy packing counts at several separation thresholds from one profile."""
    radii = np.asarray(radii, dtype=float)
    return [int(np.count_nonzero(radii > t)) for t in np.atleast_1d(thresholds)]


# ---------------------------------------------------------------------------
# exact oracles (bitmask branch and bound)
# ---------------------------------------------------------------------------


def _conflict_masks(pts: np.ndarray, body: Body, threshold: float) -> list[int]:
    m = len(pts)
    masks = [0] * m
    for i in range(m):
        g = body.gauge(pts[i] - pts[i + 1:]) if i + 1 < m else np.empty(0)
        for off, val in enumerate(np.atleast_1d(g)):
            if val <= threshold:
                j = i + 1 + off
                masks[i] |= 1 << j
                masks[j] |= 1 << i
    return masks


def _greedy_clique_cover_bound(avail: int, adj: list[int]) -> int:
    """Partition the available vertices into cliques greedily; each clique can
    contribute at most one vertex to an independent set."""
    cliques: list[int] = []
    v = avail
    while v:
        bit = v & -v
        i = bit.bit_length() - 1
        for idx, cl in enumerate(cliques):
            if cl & ~adj[i] == 0:  # adjacent to every member
                cliques[idx] |= bit
                break
        else:
            cliques.append(bit)
        v &= ~bit
    return len(cliques)


def _max_independent_set(adj: list[int]) -> list[int]:
    n = len(adj)
    best_size = 0
    best_mask = 0

    def recurse(cur_mask: int, cur_size: int, avail: int) -> None:
        nonlocal best_size, best_mask
        if avail == 0:
            if cur_size > best_size:
                best_size, best_mask = cur_size, cur_mask
            return
        if cur_size + _greedy_clique_cover_bound(avail, adj) <= best_size:
            return
        # branch on the available vertex of maximal available degree
        v, best_deg = -1, -1
        a = avail
        while a:
            bit = a & -a
            i = bit.bit_length() - 1
            deg = (adj[i] & avail).bit_count()
            if deg > best_deg:
                best_deg, v = deg, i
            a &= ~bit
        bit = 1 << v
        recurse(cur_mask | bit, cur_size + 1, avail & ~adj[v] & ~bit)
        recurse(cur_mask, cur_size, avail & ~bit)

    recurse(0, 0, (1 << n) - 1)
    return [i for i in range(n) if best_mask >> i & 1]


def exact_max_packing(cloud: PointCloud, body: Body, seed: int = 0) -> PackingResult:
    """Exact maximum B-separated subset, via branch and bound on the conflict
    graph (edge iff gauge <= 2) with greedy clique-cover bounding."""
    _check_cloud_body(cloud, body)
    m = len(cloud)
    if m > EXACT_PACKING_MAX:
        raise BudgetError(
            f"exact packing limited to {EXACT_PACKING_MAX} points, got {m}"
        )
    if m == 0:
        return PackingResult(0, (), body, "exact", seed, 0)
    adj = _conflict_masks(cloud.points, body, 2.0)
    witness = _max_independent_set(adj)
    return PackingResult(len(witness), tuple(witness), body, "exact", seed, m)


def greedy_covering(cloud: PointCloud, body: Body, seed: int = 0) -> CoveringResult:
    """Greedy set cover with centers restricted to cloud points.

    The count upper-bounds the cloud's own covering number; it lower-bounds
    N(A, B) for a containing set A only through the exact packing side of the
    finite sandwich.
    """
    _check_cloud_body(cloud, body)
    m = len(cloud)
    if m == 0:
        return CoveringResult(0, (), "greedy", seed)
    pts = cloud.points
    cover_sets = []
    for i in range(m):
        cover_sets.append(body.gauge(pts - pts[i]) <= 1.0)
    covered = np.zeros(m, dtype=bool)
    centers: list[int] = []
    while not covered.all():
        gains = [int(np.count_nonzero(s & ~covered)) for s in cover_sets]
        c = int(np.argmax(gains))
        if gains[c] == 0:
            raise UsageError("cloud point not coverable from cloud centers")
        centers.append(c)
        covered |= cover_sets[c]
    return CoveringResult(len(centers), tuple(centers), "greedy", seed)


def exact_min_covering(cloud: PointCloud, body: Body, seed: int = 0,
                       centers_from_cloud: bool = True) -> CoveringResult:
    """Exact minimum cover of the cloud by body translates centered at cloud
    points, via set-cover branch and bound."""
    if not centers_from_cloud:
        raise UnsupportedOperationError("only cloud-centered covers are supported")
    _check_cloud_body(cloud, body)
    m = len(cloud)
    if m > EXACT_COVERING_MAX:
        raise BudgetError(
            f"exact covering limited to {EXACT_COVERING_MAX} points, got {m}"
        )
    if m == 0:
        return CoveringResult(0, (), "exact", seed)
    pts = cloud.points
    sets = []
    for i in range(m):
        mask = 0
        for j, val in enumerate(body.gauge(pts - pts[i])):
            if val <= 1.0:
                mask |= 1 << j
        sets.append(mask)
    full = (1 << m) - 1
    if any(sets[i] >> i & 1 == 0 for i in range(m)):
        raise UsageError("a cloud point does not even cover itself")

    greedy = greedy_covering(cloud, body, seed)
    best = {"size": greedy.count, "centers": list(greedy.centers)}
    max_set = max(s.bit_count() for s in sets)

    def recurse(uncovered: int, chosen: list[int]) -> None:
        if uncovered == 0:
            if len(chosen) < best["size"]:
                best["size"] = len(chosen)
                best["centers"] = list(chosen)
            return
        lb = len(chosen) + -(-uncovered.bit_count() // max_set)
        if lb >= best["size"]:
            return
        # branch on the uncovered element with fewest covering sets
        elem, fewest = -1, m + 1
        u = uncovered
        while u:
            bit = u & -u
            j = bit.bit_length() - 1
            cnt = sum(1 for s in sets if s >> j & 1)
            if cnt < fewest:
                fewest, elem = cnt, j
            u &= ~bit
        options = [i for i in range(m) if sets[i] >> elem & 1]
        options.sort(key=lambda i: -(sets[i] & uncovered).bit_count())
        for i in options:
            chosen.append(i)
            recurse(uncovered & ~sets[i], chosen)
            chosen.pop()

    recurse(full, [])
    return CoveringResult(best["size"], tuple(best["centers"]), "exact", seed)


# ---------------------------------------------------------------------------
# volumetric estimates
# ---------------------------------------------------------------------------


def _gauge_gradient(body: Body, v: np.ndarray) -> np.ndarray:
    """Subgradient of the gauge at the rows of v (closed-form kinds only)."""
    from .bodies import Cube, Ellipsoid, LqBall, Scaled

    if isinstance(body, Scaled):
        return _gauge_gradient(body.inner, v) / body.c
    if isinstance(body, Ellipsoid):
        q = body._inv.T @ body._inv
        g = body.gauge(v)
        g = np.where(g > 0, g, 1.0)
        return (v @ q) / g[:, None]
    if isinstance(body, Cube):
        grad = np.zeros_like(v)
        idx = np.abs(v).argmax(axis=1)
        rows = np.arange(len(v))
        grad[rows, idx] = np.sign(v[rows, idx]) / body.a
        return grad
    if isinstance(body, LqBall):
        if math.isinf(body.q):
            return _gauge_gradient(Cube(body.r, body.dim), v)
        if body.q == 1.0:
            return np.sign(v) / body.r
        a = np.abs(v)
        nrm = body.gauge(v) * body.r
        nrm = np.where(nrm > 0, nrm, 1.0)
        return (np.sign(v) * (a / nrm[:, None]) ** (body.q - 1.0)) / body.r
    raise UnsupportedOperationError(f"no gauge gradient for {body.kind}")


def minkowski_sum_membership(x: np.ndarray, a_body: Body, b_body: Body,
                             starts: int = 20, iters: int = 60,
                             seed: int = 0) -> np.ndarray:
    """Approximate test x in A + B: minimize gauge_B(x - a) over a in A.

    Projected subgradient descent with radial projection onto A, run from
    multiple starts; an approximate oracle whose failure probability is folded
    into the caller's reported error.
    """
    x = np.atleast_2d(x)
    best = b_body.gauge(x)  # start a = 0
    gen = philox(seed)
    for s in range(starts):
        if s == 0:
            a = x / np.maximum(a_body.gauge(x), 1.0)[:, None]
        else:
            a = gen.standard_normal(x.shape)
            a /= np.maximum(a_body.gauge(a), 1e-12)[:, None]
        step = 0.5
        for _ in range(iters):
            grad = _gauge_gradient(b_body, x - a)
            a_new = a + step * grad  # descend gauge_B(x - a): d/da = -grad
            ga = a_body.gauge(a_new)
            a_new /= np.maximum(ga, 1.0)[:, None]
            v_new = b_body.gauge(x - a_new)
            v_old = b_body.gauge(x - a)
            improved = v_new < v_old
            a = np.where(improved[:, None], a_new, a)
            step *= 0.9
        best = np.minimum(best, b_body.gauge(x - a))
    return best <= 1.0 + 1e-9


def volumetric_packing_upper(a_body: Body, b_body: Body, samples: int,
                             seed: int = 0) -> MCEstimate:
    """Monte Carlo estimate of the volumetric upper bound |A + B| / |B|.

    Membership in A + B uses the approximate projection oracle; |B| must have
    a closed form.  Limited to dimension <= 8.
    """
    from .bodies import log_volume

    n = a_body.dim
    if n != b_body.dim:
        raise UsageError("bodies must share a dimension")
    if n > VOLUMETRIC_MAX_DIM:
        raise BudgetError(
            f"volumetric estimate limited to dimension {VOLUMETRIC_MAX_DIM}, got {n}"
        )
    if not (a_body.convex and b_body.convex):
        raise UnsupportedOperationError("volumetric estimate needs convex bodies")
    half = np.array([a_body.support(np.eye(n)[i]) + b_body.support(np.eye(n)[i])
                     for i in range(n)])
    gen = philox(seed)
    pts = gen.uniform(-half, half, size=(samples, n))
    inside = minkowski_sum_membership(pts, a_body, b_body, seed=seed + 1)
    frac = float(np.count_nonzero(inside)) / samples
    box = float(np.prod(2.0 * half))
    vol_b = math.exp(log_volume(b_body))
    val = frac * box / vol_b
    se = box * math.sqrt(max(frac * (1 - frac), 1e-300) / samples) / vol_b
    return MCEstimate(val, se, samples)


# ---------------------------------------------------------------------------
# finite sandwich / triangle report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SandwichReport:
    """Exact finite-cloud packing/covering quantities and their relations."""

    packing_b: int            # max B-separated subset
    covering_b: int           # min cover by B translates
    covering_2b: int          # min cover by 2B translates
    covering_d: int           # min cover by D translates
    packing_d_max: int        # max over D-cover cells of B-separated subset
    sandwich_ok: bool         # covering_2b <= packing_b <= covering_b
    triangle_ok: bool         # packing_b <= covering_d * packing_d_max

    def all_ok(self) -> bool:
        return self.sandwich_ok and self.triangle_ok


def sandwich_and_triangle_check(cloud: PointCloud, b_body: Body,
                                d_body: Body) -> SandwichReport:
    """Exact finite versions of the packing/covering sandwich and the triangle
    inequality M(A,B) <= N(A,D) * M(D,B), restricted to the cloud where both
    hold by the same proofs as in the continuous setting."""
    if len(cloud) > EXACT_COVERING_MAX:
        raise BudgetError(
            f"exact sandwich limited to {EXACT_COVERING_MAX} points, got {len(cloud)}"
        )
    pack_b = exact_max_packing(cloud, b_body).count
    cover_b = exact_min_covering(cloud, b_body).count
    cover_2b = exact_min_covering(cloud, b_body.scaled(2.0)).count
    cover_d = exact_min_covering(cloud, d_body)
    # per-cell packing: points of the cloud inside each D translate
    per_cell = 0
    pts = cloud.points
    for c in cover_d.centers:
        mask = d_body.gauge(pts - pts[c]) <= 1.0
        sub = PointCloud(pts[mask], {"cell": int(c)})
        per_cell = max(per_cell, exact_max_packing(sub, b_body).count)
    sandwich_ok = cover_2b <= pack_b <= cover_b
    triangle_ok = pack_b <= cover_d.count * per_cell
    return SandwichReport(pack_b, cover_b, cover_2b, cover_d.count, per_cell,
                          sandwich_ok, triangle_ok)


def extend_bound_small_t(phi, t0: float):
    """Extend a bound exponent phi from [t0, inf) to all t > 0.

    The extension uses phi(t0) + log(1 + 2 t0 / t) for t <= t0 (at t0 itself
    the left limit phi(t0) + log 3 is returned, a safe upper value), and phi
    unchanged above t0.
    """
    if t0 <= 0:
        raise DomainError("t0 must be positive")

    def extended(t: float) -> float:
        if t <= 0:
            raise DomainError("t must be positive")
        if t <= t0:
            return phi(t0) + math.log1p(2.0 * t0 / t)
        return phi(t)

    return extended
