"""The experiment catalog: each experiment confronts empirical packing lower
bounds (witnessed greedy counts, exact refinements where feasible) with a
theorem's right-hand-side exponent on a grid of instances, and fits the
minimal universal constant making every row pass.

Grid cells are independent jobs (thread cap via CONVEXLAB_THREADS); reports
assemble in a deterministic order and are byte-reproducible from
(config, seed), wall times aside.
"""

from __future__ import annotations

import math
import os
import zlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import measures as _measures
from ..bodies import Body, Cube, Ellipsoid, HPolytope, LqBall, cylinder
from ..centroid import ZpBody, gaussian_abs_moment, zp_candidates
from ..errors import BudgetError, ConvexLabError, DomainError, UsageError
from ..measures import (
    ConeExp,
    Gaussian,
    ProductDensity,
    UniformBody,
    moment_of_gauges,
    quantile_of_gauges,
    sample,
)
from ..packing import PointCloud, counts_from_profile, exact_max_packing, separation_profile
from ..util import derive_seed, philox, unit_vectors
from .config import ExperimentConfig
from .report import ExperimentReport, Row, skipped_row

ARTIFACT_VERSION = "0.1.0"


def _name_tag(*names) -> int:
    """Deterministic tag for family names (process hash randomization safe)."""
    return zlib.crc32("|".join(names).encode()) & 0xFFFF


def _thread_map(fn, items):
    workers = int(os.environ.get("CONVEXLAB_THREADS", "1") or "1")
    items = list(items)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# named instance families (deterministic in (family, n); seeds only drive
# sampling, so fitted constants are comparable across seeds)
# ---------------------------------------------------------------------------


def _fixed_rotation(n: int, tag: int) -> np.ndarray:
    g = philox(derive_seed(0x5EED, tag, n)).standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def make_measure(family: str, n: int) -> _measures.Measure:
    if family == "gaussian-iso":
        return Gaussian.standard(n)
    if family == "gaussian-aniso":
        eig = np.geomspace(0.5, 2.0, n)
        rot = _fixed_rotation(n, 1)
        return Gaussian(rot @ np.diag(eig) @ rot.T)
    if family == "product-exponential":
        return ProductDensity.exponential(n)
    if family == "uniform-l1":
        return UniformBody(LqBall(1.0, 1.0, n))
    if family == "uniform-cube":
        return UniformBody(Cube(1.0, n))
    if family == "cone-exp-cube":
        return ConeExp(Cube(1.0, n))
    raise UsageError(f"unknown measure family {family!r}")


def make_body(family: str, n: int) -> Body:
    if family == "euclidean-ball":
        return Ellipsoid.ball(n)
    if family == "cube":
        return Cube(1.0, n)
    if family == "l1-ball":
        return LqBall(1.0, 1.0, n)
    if family == "ellipsoid-aniso":
        eig = np.geomspace(0.6, 1.8, n)
        rot = _fixed_rotation(n, 2)
        return Ellipsoid(rot @ np.diag(eig) @ rot.T)
    if family.startswith("polytope-"):
        half_facets = int(family.split("-", 1)[1])
        normals = unit_vectors(n, half_facets, derive_seed(0xFACE7, n, half_facets))
        return HPolytope(normals, np.ones(half_facets))
    if family.startswith("cylinder-"):
        k = int(family.split("-", 1)[1])
        return cylinder(k, n)
    raise UsageError(f"unknown body family {family!r}")


# ---------------------------------------------------------------------------
# shared cell machinery
# ---------------------------------------------------------------------------


@dataclass
class CellCounts:
    """Packing counts of one candidate cloud against one separator family."""

    counts: list          # one per threshold
    thresholds: list
    scale: float          # the estimated scaling quantity (m_1, m_q, I_1, M*)
    candidates: int


def _packing_counts(cloud_pts: np.ndarray, separator: Body, thresholds,
                    refine_below: int = 48) -> list:
    """Greedy farthest-point counts at every threshold, with an exact
    branch-and-bound refinement on the traversal prefix when counts are small."""
    cloud = PointCloud(cloud_pts, {})
    stop = min(thresholds)
    order, radii = separation_profile(cloud, separator, stop_radius=stop)
    counts = counts_from_profile(radii, thresholds)
    for i, thr in enumerate(thresholds):
        if 1 <= counts[i] <= refine_below and len(order) > counts[i]:
            prefix = [order[j] for j in range(min(len(order), 64))]
            sub = PointCloud(cloud_pts[prefix], {})
            sep = separator.scaled(thr / 2.0)  # gauge > 2 under sep == gauge > thr
            exact = exact_max_packing(sub, sep).count
            counts[i] = max(counts[i], exact)
    return counts


def _regular_cell(measure, n, p, separator_gauge_body, scale, ts, cfg, tag):
    """Counts of a Z_p candidate cloud against t * scale * body for all t."""
    bank = sample(measure, cfg.budget("bank"), derive_seed(cfg.seed, tag, 1))
    zp = ZpBody(measure, p, bank)
    cands = zp_candidates(zp, cfg.budget("candidates"),
                          derive_seed(cfg.seed, tag, 2),
                          restarts=cfg.budgets.get("restarts", 1),
                          iters=cfg.budgets.get("iters", 15), tol=1e-4)
    thresholds = [2.0 * t * scale for t in ts]
    counts = _packing_counts(cands.points, separator_gauge_body, thresholds)
    return CellCounts(counts, thresholds, scale, len(cands))


def fit_constant(rows, extractor) -> tuple[float, list]:
    """Max over rows of (empirical exponent / structural exponent).

    ``extractor`` maps a row to (empirical, structural); rows with structural
    exponent zero are excluded and reported back as warnings.
    """
    if not rows:
        raise UsageError("fit needs at least one row")
    best = 0.0
    warnings = []
    used = 0
    for row in rows:
        pair = extractor(row)
        if pair is None:
            continue
        emp, struct = pair
        if not (math.isfinite(emp) and math.isfinite(struct)):
            continue
        if struct <= 0:
            warnings.append(f"row excluded: structural exponent {struct}")
            continue
        used += 1
        best = max(best, emp / struct)
    if used == 0 and not warnings:
        raise UsageError("fit needs rows with positive structural exponents")
    return best, warnings


def _ratio_row_extractor(row: Row):
    if math.isnan(row.lhs_log):
        return None
    return row.lhs_log, row.rhs_exponent


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    description: str
    runner: object
    defaults: dict

    def validate(self, cfg: ExperimentConfig) -> None:
        pass


def _regular_family_runner(cfg: ExperimentConfig, body_mode: str):
    """Shared runner for the regular dual packing suites.

    body_mode selects the separator scaling: "ellipsoid" (quantile scale,
    exponent p/t^2 + p/t), "weak-ellipsoid" (first-moment scale, the weak
    two-term exponent), "cube"/"polytope" (quantile scale with the
    logarithmic structural exponent in the facet count).
    """
    rows = []
    skipped = []
    jobs = [(mf, n, p, bf) for mf in cfg.measures for n in cfg.n_grid
            for p in cfg.p_grid for bf in cfg.bodies]

    def run_cell(job):
        mf, n, p, bf = job
        t0 = time.perf_counter()
        tag = derive_seed(0xCE11, _name_tag(mf, bf), n, int(p * 8))
        out = []
        try:
            measure = make_measure(mf, n)
            body = make_body(bf, n)
            mass = sample(measure, cfg.budget("mass_samples"),
                          derive_seed(cfg.seed, tag, 0))
            gauges = body.gauge(mass.points)
            if body_mode == "weak-ellipsoid":
                scale = moment_of_gauges(gauges, 1.0)
            else:
                scale = quantile_of_gauges(gauges, 1.0)
            if body_mode == "cube":
                log_n = math.log(math.e + n)
                scale_factor = math.log(math.log(math.e + n))
            elif body_mode == "polytope":
                n_facets = body.facets // 2
                log_n = math.log(math.e + n_facets)
                scale_factor = math.log(math.log(math.e + n_facets))
            else:
                log_n = 1.0
                scale_factor = 1.0
            cell = _regular_cell(measure, n, p, body, scale * scale_factor,
                                 cfg.t_grid, cfg, tag)
            wall = (time.perf_counter() - t0) * 1000.0
            for t, count in zip(cfg.t_grid, cell.counts):
                if body_mode == "weak-ellipsoid":
                    rhs = (p ** (2 / 3) * n ** (1 / 3) / t ** (2 / 3)
                           + math.sqrt(p * n) / t)
                else:
                    rhs = log_n * (p / t**2 + p / t)
                lhs = math.log(max(count, 1))
                out.append(Row(cfg.experiment, n, p, t, cfg.q_grid[0], mf, bf,
                               lhs, rhs, lhs / rhs, cfg.seed,
                               wall / len(cfg.t_grid),
                               extra={"count": count, "scale": cell.scale}))
        except BudgetError as exc:
            for t in cfg.t_grid:
                out.append(skipped_row(cfg.experiment, n, p, t, cfg.q_grid[0],
                                       mf, bf, cfg.seed, str(exc)))
            skipped.append({"cell": list(job), "reason": str(exc)})
        return out

    for cell_rows in _thread_map(run_cell, jobs):
        rows.extend(cell_rows)
    fitted, warns = fit_constant(rows, _ratio_row_extractor)
    return rows, {"C": fitted}, skipped, warns


def _run_ellipsoid_regular(cfg):
    return _regular_family_runner(cfg, "ellipsoid")


def _run_weak_part2(cfg):
    return _regular_family_runner(cfg, "weak-ellipsoid")


def _run_cube_regular(cfg):
    return _regular_family_runner(cfg, "cube")


def _run_polytope(cfg):
    return _regular_family_runner(cfg, "polytope")


def _run_part3_large_p(cfg):
    """Large-p packing against t * m_q scaled star bodies."""
    rows = []
    skipped = []
    for mf in cfg.measures:
        for n in cfg.n_grid:
            for p in cfg.p_grid:
                if p < n:
                    raise UsageError(f"large-p suite needs p >= n, got p={p}, n={n}")
                for bf in cfg.bodies:
                    t0 = time.perf_counter()
                    tag = derive_seed(0x9A53, _name_tag(mf, bf), n, int(p))
                    measure = make_measure(mf, n)
                    body = make_body(bf, n)
                    mass = sample(measure, cfg.budget("mass_samples"),
                                  derive_seed(cfg.seed, tag, 0))
                    gauges = body.gauge(mass.points)
                    bank = sample(measure, cfg.budget("bank"),
                                  derive_seed(cfg.seed, tag, 1))
                    zp = ZpBody(measure, p, bank)
                    cands = zp_candidates(zp, cfg.budget("candidates"),
                                          derive_seed(cfg.seed, tag, 2),
                                          restarts=cfg.budgets.get("restarts", 1),
                                          iters=cfg.budgets.get("iters", 15),
                                          tol=1e-4)
                    wall = (time.perf_counter() - t0) * 1000.0
                    for q in cfg.q_grid:
                        mq = quantile_of_gauges(gauges, q)
                        thresholds = [2.0 * t * mq for t in cfg.t_grid]
                        counts = _packing_counts(cands.points, body, thresholds)
                        for t, count in zip(cfg.t_grid, counts):
                            lhs = math.log(max(count, 1))
                            excess = max(0.0, lhs - (1.0 + q))
                            struct = p / t
                            rows.append(Row(cfg.experiment, n, p, t, q, mf, bf,
                                            lhs, struct, excess / struct,
                                            cfg.seed, wall / len(cfg.t_grid),
                                            extra={"count": count, "m_q": mq,
                                                   "intercept": 1.0 + q}))
    fitted = max((r.fitted_C for r in rows), default=0.0)
    return rows, {"C": fitted}, skipped, []


def _run_sharpness_cylinder(cfg):
    """Degenerate-ellipsoid sharpness: Gaussian moment ball against cylinders.

    Candidates are drawn uniformly from the k-dimensional central section of
    the exact Gaussian moment ball (the packing lives entirely in those
    coordinates); t-grid entries are the normalized scales s, the separator
    being s*sqrt(p/k) times the cylinder.
    """
    rows = []
    for bf in cfg.bodies:
        k = int(bf.split("-", 1)[1])
        for n in cfg.n_grid:
            for p in cfg.p_grid:
                t0 = time.perf_counter()
                radius = gaussian_abs_moment(p)
                body = make_body(bf, n)
                count_budget = max(cfg.budget("candidates"), 100_000)
                gen = philox(derive_seed(cfg.seed, 0xCF1, n, int(p), k))
                z = gen.standard_normal((count_budget, k))
                z /= np.linalg.norm(z, axis=1, keepdims=True)
                rad = gen.random(count_budget) ** (1.0 / k)
                pts = np.zeros((count_budget, n))
                pts[:, :k] = radius * z * rad[:, None]
                wall = (time.perf_counter() - t0) * 1000.0
                for s in cfg.t_grid:
                    t_sep = s * math.sqrt(p / k)
                    counts = _packing_counts(pts, body, [2.0 * t_sep])
                    lhs = math.log(max(counts[0], 1))
                    rows.append(Row(cfg.experiment, n, p, s, cfg.q_grid[0],
                                    "gaussian-iso", bf, lhs, float(k),
                                    lhs / k, cfg.seed, wall,
                                    extra={"count": counts[0],
                                           "t_separator": t_sep,
                                           "target": math.ceil(math.exp(k))}))
    fitted, warns = fit_constant(rows, _ratio_row_extractor)
    return rows, {"exponent_ratio": fitted}, [], warns


def _run_sudakov_classical(cfg):
    """Mean-width packing of plain convex bodies against Euclidean balls."""
    from ..bodies import mean_width

    rows = []
    skipped = []
    for bf in cfg.bodies:
        for n in cfg.n_grid:
            t0 = time.perf_counter()
            tag = derive_seed(0x5DAC, _name_tag(bf), n)
            body = make_body(bf, n)
            mw = mean_width(body, cfg.budget("mass_samples"),
                            derive_seed(cfg.seed, tag, 0))
            cands = sample(UniformBody(body), cfg.budget("candidates"),
                           derive_seed(cfg.seed, tag, 1))
            ball = Ellipsoid.ball(n)
            thresholds = [2.0 * t * mw.value for t in cfg.t_grid]
            counts = _packing_counts(cands.points, ball, thresholds)
            wall = (time.perf_counter() - t0) * 1000.0
            for t, count in zip(cfg.t_grid, counts):
                lhs = math.log(max(count, 1))
                struct = n / max(t, t * t)
                rows.append(Row(cfg.experiment, n, float("nan"), t,
                                cfg.q_grid[0], "uniform-on-body", bf, lhs,
                                struct, lhs / struct, cfg.seed,
                                wall / len(cfg.t_grid),
                                extra={"count": count, "mean_width": mw.value,
                                       "weak_exponent": n / t}))
    fitted, warns = fit_constant(rows, _ratio_row_extractor)
    return rows, {"C_improved": fitted}, skipped, warns


def _run_quantile_lemma(cfg):
    """Quantile/moment comparison suite on measure/body pairs.

    Row semantics: lhs_log = log(I_q / (q I_1)) against structural exponent 1,
    so fitted_C per row is the moment-growth ratio; the sandwich checks and
    the fitted reverse constants are recorded per row and aggregated in the
    metadata.
    """
    if len(cfg.measures) != len(cfg.bodies):
        raise UsageError("quantile suite pairs measures with bodies elementwise")
    rows = []
    markov_limit = math.e / (math.e - 1.0)
    c_reverse = math.inf
    markov_worst = 0.0
    for i, (mf, bf) in enumerate(zip(cfg.measures, cfg.bodies)):
        for n in cfg.n_grid:
            t0 = time.perf_counter()
            measure = make_measure(mf, n)
            body = make_body(bf, n)
            bank = sample(measure, cfg.budget("mass_samples"),
                          derive_seed(cfg.seed, 0x9A17, i, n))
            gauges = body.gauge(bank.points)
            m1 = quantile_of_gauges(gauges, 1.0)
            i1 = moment_of_gauges(gauges, 1.0)
            markov_worst = max(markov_worst, m1 / (markov_limit * i1))
            wall = (time.perf_counter() - t0) * 1000.0
            for q in cfg.q_grid:
                mq = quantile_of_gauges(gauges, q)
                iq = moment_of_gauges(gauges, q)
                growth = iq / (q * i1)
                c_rev = (mq / m1) * math.exp(q)
                c_reverse = min(c_reverse, c_rev)
                ok = (mq <= m1 * (1 + 1e-12)) and (i1 <= iq * (1 + 1e-12))
                rows.append(Row(cfg.experiment, n, float("nan"), float("nan"),
                                q, mf, bf, math.log(max(growth, 1e-300)), 1.0,
                                growth, cfg.seed, wall / len(cfg.q_grid),
                                note="" if ok else "sandwich violation",
                                extra={"m_1": m1, "I_1": i1, "m_q": mq,
                                       "I_q": iq, "c_reverse": c_rev}))
    fitted = {"C_growth": max(r.fitted_C for r in rows),
              "c_reverse": c_reverse,
              "markov_ratio": markov_worst}
    return rows, fitted, [], []


EXPERIMENTS: dict[str, ExperimentDef] = {}


def _register(name, description, runner, defaults):
    EXPERIMENTS[name] = ExperimentDef(name, description, runner, defaults)


_register(
    "ellipsoid-regular",
    "moment-body packing against quantile-scaled ellipsoids; exponent p/t^2 + p/t",
    _run_ellipsoid_regular,
    dict(n_grid=[8, 16], p_grid=[1, 2, 4, 8], t_grid=[0.5, 1.0, 2.0, 4.0],
         measures=["gaussian-aniso", "product-exponential", "uniform-l1"],
         bodies=["euclidean-ball"]),
)
_register(
    "weak-part2-ellipsoid",
    "moment-body packing against first-moment-scaled ellipsoids; "
    "two-term weak exponent",
    _run_weak_part2,
    dict(n_grid=[8, 16], p_grid=[1, 2, 4, 8], t_grid=[0.5, 1.0, 2.0, 4.0],
         measures=["gaussian-aniso", "product-exponential", "uniform-l1"],
         bodies=["euclidean-ball"]),
)
_register(
    "cube-regular",
    "moment-body packing against log-log scaled cubes; exponent "
    "log(e+n)(p/t^2 + p/t)",
    _run_cube_regular,
    dict(n_grid=[8, 16], p_grid=[1, 2, 4, 8], t_grid=[0.5, 1.0, 2.0, 4.0],
         measures=["gaussian-aniso", "product-exponential", "uniform-l1"],
         bodies=["cube"]),
)
_register(
    "polytope-few-facets",
    "moment-body packing against symmetric polytopes with 2N facets; "
    "exponent log(e+N)(p/t^2 + p/t)",
    _run_polytope,
    dict(n_grid=[6, 8], p_grid=[1, 2, 4], t_grid=[0.5, 1.0, 2.0],
         measures=["gaussian-aniso", "product-exponential"],
         bodies=["polytope-12"]),
)
_register(
    "part3-large-p",
    "large-p moment bodies against t m_q scaled stars; exponent 1 + q + p/t",
    _run_part3_large_p,
    dict(n_grid=[4], p_grid=[8], t_grid=[1.0, 2.0], q_grid=[1.0, 2.0],
         measures=["uniform-l1"], bodies=["euclidean-ball"]),
)
_register(
    "sharpness-cylinder",
    "Gaussian moment balls against degenerate cylinder ellipsoids; "
    "target exp(k) witnesses",
    _run_sharpness_cylinder,
    dict(n_grid=[8], p_grid=[4], t_grid=[1.0 / (2.0 * math.e)],
         measures=["gaussian-iso"], bodies=["cylinder-3"],
         budgets={"candidates": 100_000}),
)
_register(
    "sudakov-classical",
    "uniform-on-body clouds against mean-width scaled balls; "
    "exponent n/max(t, t^2)",
    _run_sudakov_classical,
    dict(n_grid=[4, 6], p_grid=[1], t_grid=[0.5, 1.0, 2.0],
         measures=["uniform-on-body"], bodies=["ellipsoid-aniso", "cube"]),
)
_register(
    "quantile-lemma",
    "quantile/moment sandwich with fitted growth and reverse constants",
    _run_quantile_lemma,
    dict(n_grid=[4], p_grid=[1], t_grid=[1.0], q_grid=[1.0, 2.0, 4.0],
         measures=["gaussian-iso", "gaussian-aniso", "uniform-cube",
                   "uniform-l1", "product-exponential", "cone-exp-cube"],
         bodies=["euclidean-ball", "euclidean-ball", "cube",
                 "euclidean-ball", "l1-ball", "cube"],
         budgets={"mass_samples": 1_000_000}),
)


def list_experiments() -> list[dict]:
    return [{"name": d.name, "description": d.description, "defaults": d.defaults}
            for d in EXPERIMENTS.values()]


def default_config(name: str, **overrides) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}")
    doc = {"experiment": name, **EXPERIMENTS[name].defaults}
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def run(config: ExperimentConfig) -> ExperimentReport:
    """Run one experiment: build grids, pack, fit constants, persist."""
    config.validate()
    t0 = time.perf_counter()
    rows, fitted, skipped, warns = EXPERIMENTS[config.experiment].runner(config)
    metadata = {
        "artifact_version": ARTIFACT_VERSION,
        "experiment": config.experiment,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "fitted_constants": fitted,
        "skipped": skipped,
        "warnings": warns,
        "total_wall_ms": (time.perf_counter() - t0) * 1000.0,
    }
    report = ExperimentReport(rows=rows, metadata=metadata)
    if config.output:
        report.save(config.output)
    return report


# ---------------------------------------------------------------------------
# the final bound arithmetic of the amplification argument
# ---------------------------------------------------------------------------


def _phi_inverse(phi, y: float, tol: float = 1e-10) -> float:
    lo, hi = 0.0, 1.0
    if phi(hi) < y:
        raise DomainError(f"phi never reaches {y} on (0, 1]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) >= y:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def program_bound(a: float, b: float, d: float, r: float, t: float, phi,
                  part3_const: float = 1.0, guedon_const: float = 1.0,
                  grid_points: int = 64) -> float:
    """The final packing constant D max(4 max(C, C' B/R)/t, 1/(A phi^-1(1/(4A)))).

    ``phi`` is the weak-bound shape function: increasing, phi(0) = 0, and
    x -> phi(x)/x non-increasing, validated on a grid; its inverse is computed
    by bisection to 1e-10.
    """
    if min(a, b, d, r) < 1:
        raise DomainError("constants A, B, D, R must be at least 1")
    if t <= 0:
        raise DomainError("t must be positive")
    if abs(phi(0.0)) > 1e-12:
        raise DomainError("phi(0) must vanish")
    xs = np.linspace(0.0, 1.0, grid_points + 1)[1:]
    vals = np.array([phi(float(x)) for x in xs])
    if np.any(vals <= 0):
        bad = xs[np.argmax(vals <= 0)]
        raise DomainError(f"phi must be positive on (0,1]; fails at x={bad}")
    if np.any(np.diff(vals) < -1e-12):
        bad = xs[1:][np.argmax(np.diff(vals) < -1e-12)]
        raise DomainError(f"phi must be increasing; fails at x={bad}")
    ratios = vals / xs
    if np.any(np.diff(ratios) > 1e-9 * np.abs(ratios[:-1])):
        bad = xs[1:][np.argmax(np.diff(ratios) > 1e-9 * np.abs(ratios[:-1]))]
        raise DomainError(f"phi(x)/x must be non-increasing; fails at x={bad}")
    arm1 = 4.0 * max(part3_const, guedon_const * b / r) / t
    arm2 = 1.0 / (a * _phi_inverse(phi, 1.0 / (4.0 * a)))
    return d * max(arm1, arm2)
